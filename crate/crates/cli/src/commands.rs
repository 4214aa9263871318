use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use coalesce::oracle::{best_iid_cluster, best_ppp, set_kl, verify_decomposition, GridBernoulli, GridMbm, GridRfs, GridSpace};
use coalesce::ospa::{ospa, OspaParams};
use coalesce::sim::{
    generate_trials, run_estimator, run_monte_carlo, write_estimates_csv, MetricTable, RunOptions, ScenarioConfig,
    Trial,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::args::{MetricsArgs, RunArgs, TrackArgs, VerifyArgs};
use crate::config::{resolve, Resolved};
use crate::error::CliError;

const PD_GRID: [f64; 4] = [0.3, 0.5, 0.7, 0.98];
const FA_GRID: [f64; 3] = [10.0, 40.0, 80.0];

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(coalesce::Error::from)?;
    writeln!(w)?;
    Ok(())
}

fn trial_file(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("trial_{index:04}.json"))
}

pub fn simulate(args: &RunArgs) -> Result<(), CliError> {
    let r = resolve(args)?;
    let trials = generate_trials(&r.scenario, r.trials)?;
    write_json(&r.out.join("scenario.json"), &r.scenario)?;
    for t in &trials {
        write_json(&trial_file(&r.out.join("trials"), t.index), t)?;
    }
    println!("wrote {} trials to {}", trials.len(), r.out.display());
    Ok(())
}

fn load_trials(dir: &Path) -> Result<(ScenarioConfig, Vec<Trial>), CliError> {
    let read = |p: PathBuf| fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));
    let scenario: ScenarioConfig = serde_json::from_str(&read(dir.join("scenario.json"))?)
        .map_err(|e| CliError::Config(format!("scenario.json: {e}")))?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir.join("trials"))
        .map_err(|e| CliError::Config(format!("{}: {e}", dir.join("trials").display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let trials = paths
        .into_iter()
        .map(|p| {
            let text = read(p.clone())?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<Trial>, _>>()?;
    Ok((scenario, trials))
}

pub fn track(args: &TrackArgs) -> Result<(), CliError> {
    let mut r = resolve(&args.run)?;
    let trials = match &args.input {
        Some(dir) => {
            let (scenario, trials) = load_trials(dir)?;
            r.scenario = scenario;
            trials
        }
        None => generate_trials(&r.scenario, r.trials)?,
    };
    let params = OspaParams::position_2d(1.0, 20.0)?;
    let mut summary = create(&r.out.join("track_summary.csv"))?;
    writeln!(summary, "tracker,trial,mean_ospa")?;
    for spec in r.estimators(&args.tracker)? {
        for trial in &trials {
            let stream = run_estimator(&spec.kind, trial)?;
            let path = r.out.join("estimates").join(&spec.name).join(format!("trial_{:04}.csv", trial.index));
            write_estimates_csv(&stream, create(&path)?)?;
            let mut total = 0.0;
            for (t, est) in stream.iter().enumerate() {
                let xs: Vec<DVector<f64>> = est.iter().map(|e| e.state.clone()).collect();
                total += ospa(&trial.truth_at(t), &xs, &params)?;
            }
            writeln!(summary, "{},{},{:.9}", spec.name, trial.index, total / stream.len().max(1) as f64)?;
        }
        println!("{}: tracked {} trials", spec.name, trials.len());
    }
    Ok(())
}

/// Windows of 41 scans ending 10 scans before and starting 10 after the crossing.
fn windows(s: &ScenarioConfig) -> ((usize, usize), (usize, usize)) {
    let m = s.midpoint;
    ((m.saturating_sub(50), m.saturating_sub(10)), (m + 10, m + 50))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("nan".into(), |x| format!("{x:.6}"))
}

fn run_metrics(r: &Resolved, args: &MetricsArgs, scenario: &ScenarioConfig) -> Result<MetricTable, CliError> {
    let p = r.p.unwrap_or(args.p);
    let c = r.c.unwrap_or(args.c);
    let ospa = OspaParams::position_2d(p, c).map_err(|e| CliError::Config(e.to_string()))?;
    let estimators = r.estimators(&args.tracker)?;
    let table = run_monte_carlo(scenario, &estimators, &RunOptions { n_trials: r.trials, threads: None, ospa })?;
    Ok(table)
}

pub fn metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let r = resolve(&args.run)?;
    let table = run_metrics(&r, args, &r.scenario)?;
    let path = r.out.join("metrics.csv");
    table.write_csv(create(&path)?)?;
    let (pre, post) = windows(&r.scenario);
    for (name, failed) in &table.failures {
        println!(
            "{name}: mean OSPA {}-{} {}, {}-{} {}, {failed} failed trials",
            pre.0,
            pre.1,
            fmt_opt(table.window_mean(name, pre.0, pre.1)),
            post.0,
            post.1,
            fmt_opt(table.window_mean(name, post.0, post.1)),
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(args: &MetricsArgs) -> Result<(), CliError> {
    let r = resolve(&args.run)?;
    let mut summary = create(&r.out.join("sweep_summary.csv"))?;
    writeln!(summary, "pd,lambda_fa,tracker,pre_mean,post_mean,failures")?;
    for pd in PD_GRID {
        for fa in FA_GRID {
            let scenario = ScenarioConfig { pd, lambda_fa: fa, ..r.scenario.clone() };
            let cell = Resolved { scenario: scenario.clone(), ..r.clone() };
            let table = run_metrics(&cell, args, &scenario)?;
            table.write_csv(create(&r.out.join("sweep").join(format!("pd{pd}_fa{fa}.csv")))?)?;
            let (pre, post) = windows(&scenario);
            for (name, failed) in &table.failures {
                writeln!(
                    summary,
                    "{pd},{fa},{name},{},{},{failed}",
                    fmt_opt(table.window_mean(name, pre.0, pre.1)),
                    fmt_opt(table.window_mean(name, post.0, post.1))
                )?;
            }
            println!("pd {pd} lambda_fa {fa}: done");
        }
    }
    println!("wrote {}", r.out.join("sweep_summary.csv").display());
    Ok(())
}

#[derive(Debug, Deserialize)]
struct Fixture {
    name: String,
    space: GridSpace,
    mixture: GridMbm,
    candidates: Vec<GridBernoulli>,
}

const BUNDLED: &str = include_str!("../fixtures/oracle.json");

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let text = match &args.fixtures {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => BUNDLED.to_string(),
    };
    let fixtures: Vec<Fixture> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("fixtures: {e}")))?;
    let mut failed = 0;
    for fx in &fixtures {
        let n = fx.mixture.n_components();
        let d = verify_decomposition(&fx.space, &fx.mixture, &fx.candidates, n)?;
        let f = GridRfs::mbm(&fx.space, &fx.mixture, n)?;
        let (ppp_ok, iid_ok) = kl_minimal(&fx.space, &f, n)?;
        let ok = d.holds(1e-8) && ppp_ok && iid_ok;
        failed += usize::from(!ok);
        println!(
            "{} {}: decomposition residual {:.2e}, Poisson fit minimal {ppp_ok}, i.i.d. cluster fit minimal {iid_ok}",
            if ok { "ok  " } else { "FAIL" },
            fx.name,
            d.residual()
        );
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} fixtures failed", fixtures.len())));
    }
    println!("all {} fixtures pass", fixtures.len());
    Ok(())
}

/// Compares each best fit against a few deterministic perturbations.
fn kl_minimal(space: &GridSpace, f: &GridRfs, n_max: usize) -> Result<(bool, bool), CliError> {
    let factors = [0.9, 1.1, 1.5];
    let lambda = best_ppp(f);
    let base = set_kl(f, &GridRfs::ppp(space, &lambda, n_max)?)?;
    let mut ppp_ok = true;
    for (k, s) in factors.iter().enumerate() {
        let mut l = lambda.clone();
        let i = k % l.len();
        l[i] = (l[i] * s).max(1e-6);
        ppp_ok &= set_kl(f, &GridRfs::ppp(space, &l, n_max)?)? >= base;
    }

    let (card, dens) = best_iid_cluster(f)?;
    let base = set_kl(f, &GridRfs::iid_cluster(space, &card, &dens)?)?;
    let mut iid_ok = true;
    for (k, s) in factors.iter().enumerate() {
        let mut d = dens.clone();
        let i = k % d.len();
        d[i] = d[i] * s + 1e-3;
        let d = space.density(&d)?;
        iid_ok &= set_kl(f, &GridRfs::iid_cluster(space, &card, &d)?)? >= base;
        let mut c = card.clone();
        let i = k % c.len();
        c[i] = c[i] * s + 1e-3;
        let total: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= total);
        iid_ok &= set_kl(f, &GridRfs::iid_cluster(space, &c, &dens)?)? >= base;
    }
    Ok((ppp_ok, iid_ok))
}
