use proptest::prelude::*;
use viskv::model::{Coefficients, MusclePhysical};
use viskv::neutral_flux::{
    flux_source, integrate_neutral_flux, solve_neutral_flux_with, FluxRhs,
};

fn coeffs() -> impl Strategy<Value = Coefficients> {
    (0.1..10.0f64, 0.1..10.0f64, 0.0..0.95f64, 0.1..5.0f64)
        .prop_map(|(c1, d1, eps, tau)| Coefficients::new(c1, eps * c1, d1, eps * d1, tau))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // with u = psi + eps psi(t - tau) the scheme collapses to the undelayed trapezoid rule,
    // which also gives 0 <= psi <= r / c1
    #[test]
    fn delayed_flux_reduces_to_undelayed(c in coeffs(), r in 0.1..10.0f64, n in 10usize..80) {
        let eps = c.c2 / c.c1;
        let delayed = integrate_neutral_flux(&c, r, n, 4).unwrap();
        let plain = integrate_neutral_flux(&Coefficients { c2: 0.0, d2: 0.0, ..c }, r, n, 4).unwrap();
        let scale = r / c.c1;
        for j in n..delayed.len() {
            let u = delayed.psi[j] + eps * delayed.psi[j - n];
            prop_assert!((u - plain.psi[j]).abs() <= 1e-12 * scale, "j = {}", j);
            prop_assert!(delayed.psi[j] >= -1e-14 * scale);
            prop_assert!(delayed.psi[j] <= scale * (1.0 + 1e-12));
        }
    }

    #[test]
    fn flux_is_linear_in_traction(eps in 0.0..0.9f64, f in -1e4..1e4f64, k in -3.0..3.0f64) {
        let p = MusclePhysical { traction: f, ..MusclePhysical::moravec2007(eps) };
        let q = MusclePhysical { traction: k * f, ..p };
        for rhs in [FluxRhs::PerDensity, FluxRhs::Literal] {
            let a = solve_neutral_flux_with(&p, 50, 3, rhs).unwrap();
            let b = solve_neutral_flux_with(&q, 50, 3, rhs).unwrap();
            let peak = a.psi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            for (x, y) in a.psi.iter().zip(&b.psi) {
                prop_assert!((k * x - y).abs() <= 1e-12 * peak * k.abs().max(1.0));
            }
        }
    }

    #[test]
    fn literal_and_normalised_rhs_differ_by_density(eps in 0.0..0.9f64) {
        let p = MusclePhysical::moravec2007(eps);
        let a = solve_neutral_flux_with(&p, 40, 2, FluxRhs::PerDensity).unwrap();
        let b = solve_neutral_flux_with(&p, 40, 2, FluxRhs::Literal).unwrap();
        for (x, y) in a.psi.iter().zip(&b.psi) {
            prop_assert!((x * p.rho - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn source_sums_to_velocity_change(c in coeffs(), n in 10usize..60) {
        // dt * sum of second differences telescopes to the final first difference
        let tr = integrate_neutral_flux(&c, 1.0, n, 3).unwrap();
        let s = flux_source(&tr).unwrap();
        let total: f64 = s.values.iter().sum::<f64>() * tr.dt;
        let last = tr.psi.len() - 1;
        let slope = (tr.psi[last] - tr.psi[last - 1]) / tr.dt;
        prop_assert!((total - slope).abs() <= 1e-9 * (1.0 + slope.abs()) / tr.dt);
        prop_assert!(s.values[..=n].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn refinement_order_before_and_after_the_kink() {
    let p = MusclePhysical::moravec2007(0.2);
    let c = p.coefficients().unwrap();
    let r = FluxRhs::PerDensity.value(&p);
    for frac in [(1, 2), (7, 4)] {
        let vals: Vec<f64> = (0..4)
            .map(|k| {
                let n = 64usize << k;
                let tr = integrate_neutral_flux(&c, r, n, 2).unwrap();
                tr.psi[tr.zero_index() + n * frac.0 / frac.1]
            })
            .collect();
        for w in vals.windows(3) {
            let order = ((w[0] - w[1]) / (w[1] - w[2])).abs().log2();
            assert!(order > 1.9, "t = {}/{} tau: order {order}", frac.0, frac.1);
        }
    }
}

#[test]
fn too_coarse_grids_are_rejected() {
    let p = MusclePhysical::moravec2007(0.1);
    assert!(solve_neutral_flux_with(&p, 5, 2, FluxRhs::PerDensity).is_err());
    assert!(solve_neutral_flux_with(&p, 50, 0, FluxRhs::PerDensity).is_err());
}
