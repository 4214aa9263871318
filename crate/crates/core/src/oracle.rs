//! Brute-force set integrals on a discretized 1-d state space.
//!
//! Set densities are stored per cardinality as arrays over grid-index tuples,
//! with `Δxⁿ` as the Jacobian of an `n`-element tuple. Everything here is
//! exact up to the grid, which makes it usable for checking identities to
//! machine precision. Cost grows like `Gⁿ` so keep grids and `n_max` tiny.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::vmmospa::permutations;

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub points: Vec<f64>,
    pub dx: f64,
}

impl GridSpace {
    /// `n` cell centres evenly covering `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return invalid_arg("grid needs at least two points on a nonempty interval");
        }
        let dx = (hi - lo) / n as f64;
        Ok(Self { points: (0..n).map(|i| lo + (i as f64 + 0.5) * dx).collect(), dx })
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 || !(self.dx > 0.0) {
            return invalid_arg("grid needs at least two points and positive spacing");
        }
        for w in self.points.windows(2) {
            if ((w[1] - w[0]) - self.dx).abs() > 1e-9 * self.dx.max(1.0) {
                return invalid_arg("grid spacing is not uniform");
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Normalizes nonnegative values to a density: `Σ d Δx = 1`.
    pub fn density(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() || values.iter().any(|v| !(*v >= 0.0)) {
            return invalid_arg("density needs one nonnegative value per grid point");
        }
        let total: f64 = values.iter().sum::<f64>() * self.dx;
        if !(total > 0.0) {
            return invalid_arg("density has zero mass");
        }
        Ok(values.iter().map(|v| v / total).collect())
    }
}

/// Bernoulli set density on the grid: `b(∅) = 1 - r`, `b({x}) = r d(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBernoulli {
    pub r: f64,
    pub density: Vec<f64>,
}

impl GridBernoulli {
    fn at(&self, x: Option<usize>) -> f64 {
        match x {
            None => 1.0 - self.r,
            Some(k) => self.r * self.density[k],
        }
    }
}

/// Multi-Bernoulli mixture on the grid, one weighted MB per global hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMbm {
    pub globals: Vec<(f64, Vec<GridBernoulli>)>,
}

impl GridMbm {
    /// Number of Bernoulli components `N`.
    pub fn n_components(&self) -> usize {
        self.globals.first().map_or(0, |(_, c)| c.len())
    }

    fn validate(&self, space: &GridSpace) -> Result<()> {
        let n = self.n_components();
        let total: f64 = self.globals.iter().map(|(w, _)| *w).sum();
        if self.globals.is_empty() || (total - 1.0).abs() > MASS_TOL {
            return invalid_arg("global weights must sum to one");
        }
        for (w, comps) in &self.globals {
            if !(*w >= 0.0) || comps.len() != n {
                return invalid_arg("every global needs a nonnegative weight and N components");
            }
            check_bernoullis(space, comps)?;
        }
        Ok(())
    }
}

fn check_bernoullis(space: &GridSpace, comps: &[GridBernoulli]) -> Result<()> {
    for b in comps {
        if !(0.0..=1.0).contains(&b.r) || b.density.len() != space.len() {
            return invalid_arg("Bernoulli needs r in [0, 1] and one density value per grid point");
        }
        let mass: f64 = b.density.iter().sum::<f64>() * space.dx;
        if b.density.iter().any(|d| !(*d >= 0.0)) || (mass - 1.0).abs() > MASS_TOL {
            return invalid_arg(format!("Bernoulli density integrates to {mass}"));
        }
    }
    Ok(())
}

/// Set density on the grid. `weights[n]` holds `f(x_{i_1}, …, x_{i_n})` for
/// every index tuple, first index fastest. Truncated families record the
/// mass they lose above `n_max` in `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRfs {
    pub space: GridSpace,
    pub weights: Vec<Vec<f64>>,
    pub tail: f64,
}

/// Calls `visit(tuple_index, tuple)` for all `Gⁿ` tuples in storage order.
fn for_each_tuple(g: usize, n: usize, mut visit: impl FnMut(usize, &[usize])) {
    let mut t = vec![0usize; n];
    let total = g.pow(n as u32);
    for idx in 0..total {
        visit(idx, &t);
        for slot in t.iter_mut() {
            *slot += 1;
            if *slot < g {
                break;
            }
            *slot = 0;
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Σ_n (1/n!) Σ_tuples v(tuple) Δxⁿ` for `n = 0..=n_max`.
pub fn set_integral(space: &GridSpace, n_max: usize, v: impl Fn(&[usize]) -> f64) -> f64 {
    let mut total = 0.0;
    for n in 0..=n_max {
        let mut s = 0.0;
        for_each_tuple(space.len(), n, |_, t| s += v(t));
        total += s * space.dx.powi(n as i32) / factorial(n);
    }
    total
}

impl GridRfs {
    /// Tabulates a symmetric set density given on tuples.
    pub fn from_fn(space: &GridSpace, n_max: usize, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        Self::tabulate(space, n_max, 0.0, f)
    }

    fn tabulate(space: &GridSpace, n_max: usize, tail: f64, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        space.validate()?;
        let g = space.len();
        let mut weights = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let mut w = vec![0.0; g.pow(n as u32)];
            for_each_tuple(g, n, |i, t| w[i] = f(t));
            weights.push(w);
        }
        let rfs = Self { space: space.clone(), weights, tail };
        rfs.validate()?;
        Ok(rfs)
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.weights.iter().flatten().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return invalid_arg("set density values must be finite and nonnegative");
        }
        let mass = self.mass();
        if (mass + self.tail - 1.0).abs() > MASS_TOL {
            return invalid_arg(format!("set density has mass {mass} with tail {}", self.tail));
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.weights.len() - 1
    }

    /// Value at a tuple of grid indices.
    pub fn at(&self, tuple: &[usize]) -> f64 {
        let g = self.space.len();
        let idx = tuple.iter().rev().fold(0, |acc, &i| acc * g + i);
        self.weights[tuple.len()][idx]
    }

    /// Set integral of `f · v`.
    pub fn integrate(&self, v: impl Fn(&[usize]) -> f64) -> f64 {
        set_integral(&self.space, self.n_max(), |t| {
            let f = self.at(t);
            if f == 0.0 {
                0.0
            } else {
                f * v(t)
            }
        })
    }

    pub fn mass(&self) -> f64 {
        self.cardinality().iter().sum()
    }

    /// `p_f(n)` for `n = 0..=n_max`.
    pub fn cardinality(&self) -> Vec<f64> {
        let dx = self.space.dx;
        self.weights
            .iter()
            .enumerate()
            .map(|(n, w)| w.iter().sum::<f64>() * dx.powi(n as i32) / factorial(n))
            .collect()
    }

    /// PHD `D_f(x) = ∫ f({x} ∪ W) δW`, per unit length.
    pub fn phd(&self) -> Vec<f64> {
        let g = self.space.len();
        let dx = self.space.dx;
        let mut d = vec![0.0; g];
        for (n, w) in self.weights.iter().enumerate().skip(1) {
            // The first tuple slot is the fastest index.
            let scale = dx.powi(n as i32 - 1) / factorial(n - 1);
            for (i, v) in w.iter().enumerate() {
                d[i % g] += v * scale;
            }
        }
        d
    }

    pub fn bernoulli(space: &GridSpace, b: &GridBernoulli) -> Result<Self> {
        Self::multi_bernoulli(space, std::slice::from_ref(b), 1)
    }

    /// Multi-Bernoulli density: sum over injective assignments of the set
    /// elements to components, empty components contributing `1 - r`.
    pub fn multi_bernoulli(space: &GridSpace, comps: &[GridBernoulli], n_max: usize) -> Result<Self> {
        check_bernoullis(space, comps)?;
        Self::from_fn(space, n_max, |t| mb_value(comps, t))
    }

    pub fn mbm(space: &GridSpace, mbm: &GridMbm, n_max: usize) -> Result<Self> {
        mbm.validate(space)?;
        Self::from_fn(space, n_max, |t| mbm.globals.iter().map(|(w, c)| w * mb_value(c, t)).sum())
    }

    /// Poisson process with intensity `λ` (per unit length), truncated at `n_max`.
    pub fn ppp(space: &GridSpace, intensity: &[f64], n_max: usize) -> Result<Self> {
        if intensity.len() != space.len() || intensity.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return invalid_arg("intensity needs one finite nonnegative value per grid point");
        }
        let big: f64 = intensity.iter().sum::<f64>() * space.dx;
        let kept: f64 = (0..=n_max).map(|n| (-big).exp() * big.powi(n as i32) / factorial(n)).sum();
        Self::tabulate(space, n_max, 1.0 - kept, |t| (-big).exp() * t.iter().map(|&i| intensity[i]).product::<f64>())
    }

    /// I.i.d. cluster process `n! p(n) Π s(x_i)`; `card` covers `0..=n_max`.
    pub fn iid_cluster(space: &GridSpace, card: &[f64], density: &[f64]) -> Result<Self> {
        if card.is_empty() || card.iter().any(|p| !(*p >= 0.0)) {
            return invalid_arg("cardinality distribution must be nonnegative");
        }
        check_bernoullis(space, &[GridBernoulli { r: 1.0, density: density.to_vec() }])?;
        let tail = 1.0 - card.iter().sum::<f64>();
        Self::tabulate(space, card.len() - 1, tail.max(0.0), |t| {
            let n = t.len();
            factorial(n) * card[n] * t.iter().map(|&i| density[i]).product::<f64>()
        })
    }
}

fn mb_value(comps: &[GridBernoulli], t: &[usize]) -> f64 {
    let n = comps.len();
    if t.len() > n {
        return 0.0;
    }
    // Assign element k to component assign[k]; unused components are empty.
    fn rec(comps: &[GridBernoulli], t: &[usize], k: usize, used: &mut [bool]) -> f64 {
        if k == t.len() {
            return comps.iter().zip(used.iter()).filter(|(_, &u)| !u).map(|(b, _)| 1.0 - b.r).product();
        }
        let mut s = 0.0;
        for j in 0..comps.len() {
            if !used[j] {
                used[j] = true;
                s += comps[j].r * comps[j].density[t[k]] * rec(comps, t, k + 1, used);
                used[j] = false;
            }
        }
        s
    }
    rec(comps, t, 0, &mut vec![false; n])
}

/// Set KL divergence `∫ f log(f / g) δX` by grid summation.
pub fn set_kl(f: &GridRfs, g: &GridRfs) -> Result<f64> {
    if f.space != g.space || g.n_max() < f.n_max() {
        return invalid_arg("set KL needs a shared grid and g covering f's cardinalities");
    }
    let violation = (0..=f.n_max()).any(|n| {
        f.weights[n].iter().zip(&g.weights[n]).any(|(a, b)| *a > 0.0 && *b <= 0.0)
    });
    if violation {
        return invalid_arg("g vanishes where f has mass");
    }
    let kl = f.integrate(|t| (f.at(t) / g.at(t)).ln());
    Ok(kl)
}

/// Intensity of the Poisson process closest to `f` in set KL: the PHD.
pub fn best_ppp(f: &GridRfs) -> Vec<f64> {
    f.phd()
}

/// Cardinality and spatial density of the closest i.i.d. cluster process.
pub fn best_iid_cluster(f: &GridRfs) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = f.phd();
    let density = f.space.density(&d)?;
    Ok((f.cardinality(), density))
}

/// Result of [`verify_decomposition`]. Objectives are negated log-likelihoods
/// (cross entropies), so `gap` should equal `constant`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `-∫ f log g δX` with `g` the multi-Bernoulli of the candidates.
    pub lhs: f64,
    /// `-Σ_a w_a ∫…∫ Π f_{h_i}(X_i) log Σ_π Π g_{π(i)}(X_i) δX_1…δX_N`.
    pub rhs: f64,
    pub gap: f64,
    /// `Σ_n p_f(n) log (N - n)!`.
    pub constant: f64,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        (self.gap - self.constant).abs()
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.residual() <= tol
    }
}

/// Evaluates the direct and the component-wise objective for candidate
/// Bernoullis `g` against the mixture `f`.
pub fn verify_decomposition(space: &GridSpace, f: &GridMbm, g: &[GridBernoulli], n_max: usize) -> Result<Decomposition> {
    let n = f.n_components();
    if n_max < n {
        return invalid_arg(format!("n_max {n_max} is below the {n} components"));
    }
    if g.len() != n {
        return invalid_arg("candidate count must match the mixture's component count");
    }
    check_bernoullis(space, g)?;
    let f_rfs = GridRfs::mbm(space, f, n_max)?;
    let g_rfs = GridRfs::multi_bernoulli(space, g, n_max)?;
    if (0..=n_max).any(|k| f_rfs.weights[k].iter().zip(&g_rfs.weights[k]).any(|(a, b)| *a > 0.0 && *b <= 0.0)) {
        return invalid_arg("candidate multi-Bernoulli vanishes where the mixture has mass");
    }
    let lhs = -f_rfs.integrate(|t| g_rfs.at(t).ln());

    // Each X_i is empty or one grid point: (G + 1)^N configurations.
    let perms = permutations(n);
    let gsz = space.len();
    let mut rhs = 0.0;
    let mut config: Vec<Option<usize>> = vec![None; n];
    let total = (gsz + 1).pow(n as u32);
    for _ in 0..total {
        let k = config.iter().filter(|c| c.is_some()).count();
        let jac = space.dx.powi(k as i32);
        let inner: f64 = perms
            .iter()
            .map(|p| (0..n).map(|i| g[p[i]].at(config[i])).product::<f64>())
            .sum();
        for (w, comps) in &f.globals {
            let fv: f64 = comps.iter().zip(&config).map(|(b, &x)| b.at(x)).product();
            if fv > 0.0 {
                rhs -= w * fv * jac * inner.ln();
            }
        }
        for c in config.iter_mut() {
            *c = match *c {
                None => Some(0),
                Some(i) if i + 1 < gsz => Some(i + 1),
                Some(_) => None,
            };
            if c.is_some() {
                break;
            }
        }
    }

    let constant: f64 = f_rfs
        .cardinality()
        .iter()
        .enumerate()
        .filter(|&(m, _)| m <= n)
        .map(|(m, p)| p * factorial(n - m).ln())
        .sum();
    Ok(Decomposition { lhs, rhs, gap: lhs - rhs, constant })
}
