use coalesce::ospa::{ospa, ospa_modified, OspaParams};
use coalesce::{solve_transport, TransportProblem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn points(max: usize) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(prop::array::uniform2(-30.0..30.0f64), 0..=max)
        .prop_map(|v| v.into_iter().map(|p| DVector::from_row_slice(&p)).collect())
}

fn transport_problem() -> impl Strategy<Value = TransportProblem> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, per)| {
        let rows = n * per;
        (prop::collection::vec(-10.0..10.0f64, rows * n), prop::collection::vec(0.05..1.0f64, rows)).prop_map(
            move |(c, w)| {
                // Each block of `per` rows carries one unit, like the hypotheses of a track.
                let mut supplies = w.clone();
                for b in 0..n {
                    let s: f64 = w[b * per..(b + 1) * per].iter().sum();
                    for v in &mut supplies[b * per..(b + 1) * per] {
                        *v /= s;
                    }
                }
                TransportProblem::new(DMatrix::from_vec(rows, n, c), supplies).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn ospa_is_bounded_by_cutoff(x in points(6), y in points(6), p in 1.0..3.0f64, c in 0.5..40.0f64) {
        let params = OspaParams::new(p, c).unwrap();
        let d = ospa(&x, &y, &params).unwrap();
        prop_assert!(d >= 0.0 && d <= c * (1.0 + 1e-12));
    }

    #[test]
    fn modified_ospa_scales_with_set_size(x in points(6), y in points(6), c in 0.5..40.0f64) {
        let params = OspaParams::new(1.0, c).unwrap();
        let n = x.len().max(y.len()) as f64;
        let d = ospa(&x, &y, &params).unwrap();
        let m = ospa_modified(&x, &y, &params).unwrap();
        prop_assert!((m - n * d).abs() <= 1e-9 * (1.0 + m));
    }

    #[test]
    fn one_extra_point_costs_at_most_the_cutoff(x in points(5), extra in prop::array::uniform2(-30.0..30.0f64), c in 0.5..40.0f64) {
        let params = OspaParams::new(1.0, c).unwrap();
        let mut y = x.clone();
        y.push(DVector::from_row_slice(&extra));
        let m = ospa_modified(&x, &y, &params).unwrap();
        prop_assert!(m <= c * (1.0 + 1e-12));
    }

    #[test]
    fn transport_plan_is_feasible(problem in transport_problem()) {
        let plan = solve_transport(&problem).unwrap();
        let q = &plan.q;
        for (h, p) in problem.supplies.iter().enumerate() {
            prop_assert!((q.row(h).sum() - p).abs() < 1e-9);
        }
        for j in 0..q.ncols() {
            prop_assert!((q.column(j).sum() - 1.0).abs() < 1e-9);
        }
        prop_assert!(q.iter().all(|&v| v >= 0.0));
        prop_assert!((problem.objective(q) - plan.objective).abs() < 1e-9);
    }

    #[test]
    fn transport_beats_the_product_plan(problem in transport_problem()) {
        // Spreading every row evenly, q(h, j) = p_h / N, is always feasible.
        let n = problem.demands() as f64;
        let even = DMatrix::from_fn(problem.supplies.len(), problem.demands(), |h, _| problem.supplies[h] / n);
        let plan = solve_transport(&problem).unwrap();
        prop_assert!(plan.objective <= problem.objective(&even) + 1e-9);
    }
}
