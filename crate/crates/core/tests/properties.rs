use std::sync::Arc;

use proptest::prelude::*;

use qnorm_core::functional::{gn_ratio, Functional, GnVariant};
use qnorm_core::grid::{make_grid, RadialField, RadialGrid};
use qnorm_core::nonlinearity::{Eps, Nonlinearity, NonlinearitySpec};
use qnorm_core::solver::{continuation_solve, minimize_fixed_eps, SolverConfig};

fn grid(n: usize) -> Arc<RadialGrid> {
    make_grid(3, 16.0, n).unwrap()
}

/// Positive sum of centred Gaussians, zero at `r_max`.
fn profile(g: &Arc<RadialGrid>, parts: &[(f64, f64)]) -> RadialField {
    let mut f = RadialField::from_fn(g.clone(), |r| parts.iter().map(|(a, s)| a * (-0.5 * (r / s).powi(2)).exp()).sum())
        .unwrap();
    let n = f.len();
    f.values_mut()[n - 1] = 0.0;
    f
}

/// `profile` times a cosine modulation: changes sign, still decays.
fn oscillating(g: &Arc<RadialGrid>, parts: &[(f64, f64)], modes: &[(f64, f64)]) -> RadialField {
    let base = profile(g, parts);
    let values = g
        .nodes()
        .iter()
        .zip(base.values())
        .map(|(&r, &u)| u * (0.3 + modes.iter().map(|(b, k)| b * (k * r).cos()).sum::<f64>()))
        .collect();
    RadialField::new(g.clone(), values).unwrap()
}

fn parts() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.2f64..1.5, 1.0f64..4.0), 1..4)
}

/// Widths small enough that scaling by the tested factors keeps the profile
/// well inside `r_max = 16`.
fn narrow_parts() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.2f64..1.5, 0.5f64..2.5), 1..4)
}

fn modes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, 0.2f64..2.0), 1..4)
}

fn log_nl(mu: f64, p: Option<f64>) -> Nonlinearity {
    Nonlinearity::new(NonlinearitySpec::log_power(1.0, mu, p, 3, 1.8)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(parts in parts(), modes in modes(), c in 0.1f64..5.0) {
        let g = grid(1024);
        for u in [profile(&g, &parts), oscillating(&g, &parts, &modes)] {
            let a = u.project_mass(c).unwrap();
            let b = a.project_mass(c).unwrap();
            prop_assert!((a.mass() - c * c).abs() <= 1e-14 * c * c);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-14 * a.max_abs());
            }
        }
    }

    #[test]
    fn mass_scale_multiplies_mass(parts in narrow_parts(), s in 0.5f64..2.0) {
        let u = profile(&grid(2048), &parts);
        let out = u.mass_scale(s).unwrap();
        prop_assert!((out.field.mass() / u.mass() - s).abs() <= 1e-4 * s);
        prop_assert!(out.mass_defect <= 1e-4);
    }

    #[test]
    fn dilation_keeps_mass(parts in narrow_parts(), t in 0.7f64..1.5) {
        let u = profile(&grid(2048), &parts);
        let out = u.dilate(t).unwrap();
        prop_assert!((out.field.mass() / u.mass() - 1.0).abs() <= 1e-4);
    }

    #[test]
    fn gn_ratio_ignores_amplitude(parts in parts(), modes in modes(), a in 0.01f64..100.0, p in 2.2f64..4.0) {
        let g = grid(1024);
        for u in [profile(&g, &parts), oscillating(&g, &parts, &modes)] {
            for variant in [GnVariant::Gradient2, GnVariant::GradientQ(1.8)] {
                let r0 = gn_ratio(&u, p, variant, 1.0).unwrap();
                let r1 = gn_ratio(&u.scaled(a), p, variant, 1.0).unwrap();
                prop_assert!((r1 / r0 - 1.0).abs() <= 1e-12, "{r0} vs {r1}");
            }
        }
    }

    #[test]
    fn regularized_energy_is_below(parts in parts(), modes in modes(), k in 1i32..13, which in 0usize..3) {
        let g = grid(1024);
        let nl = [log_nl(0.0, None), log_nl(0.5, Some(3.0)), log_nl(-0.1, Some(4.0))][which].clone();
        let eps = Eps::new(0.5f64.powi(k)).unwrap();
        for u in [profile(&g, &parts), oscillating(&g, &parts, &modes)] {
            let j = Functional::new(nl.clone(), None).energy(&u).unwrap().total;
            let je = Functional::new(nl.clone(), Some(eps)).energy(&u).unwrap().total;
            prop_assert!(je <= j + 1e-12 * j.abs().max(1.0), "J_eps = {je} > J = {j}");
        }
    }

    #[test]
    fn pointwise_primitive_ordering(s in -20.0f64..20.0, k in 1i32..13) {
        // J_eps <= J node by node: the regularized primitive dominates.
        let nl = log_nl(0.0, None);
        let eps = Eps::new(0.5f64.powi(k)).unwrap();
        prop_assert!(nl.primitive_eps(eps, s) >= nl.primitive(s) - 1e-14 * nl.primitive(s).abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn accepted_steps_never_raise_energy(c in 0.5f64..3.0, k in 1i32..8, sigma in 0.5f64..3.0) {
        let g = grid(256);
        let f = Functional::new(log_nl(0.0, None), Some(Eps::new(0.5f64.powi(k)).unwrap()));
        let init = qnorm_core::grid::gaussian_bump(&g, sigma, c).unwrap();
        let rep = minimize_fixed_eps(&init, c, &f, &SolverConfig::default()).unwrap();
        prop_assert!(rep.trace_nonincreasing());
        prop_assert!(rep.mass_defect <= 1e-10);
    }
}

#[test]
fn continuation_traces_are_monotone() {
    let reports = continuation_solve(&grid(512), 1.5, &log_nl(0.0, None), &SolverConfig::default(), None).unwrap();
    assert!(reports.iter().all(|r| r.trace_nonincreasing()));
    assert!(reports.iter().all(|r| r.converged()));
}
