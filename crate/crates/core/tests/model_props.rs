use proptest::prelude::*;
use viskv::model::{
    derive_coefficients, linspace, poincare_constant_interval, HistoryBuffer, MusclePhysical,
};

fn physical() -> impl Strategy<Value = MusclePhysical> {
    (1e-3..2.0f64, 0.5..2e3f64, 1e-1..1e5f64, 1e-2..1e8f64, 0.0..0.99f64, -1e4..1e4f64, 1e-3..1e3f64)
        .prop_map(|(length, rho, young, eta, epsilon, traction, tau)| MusclePhysical {
            length,
            rho,
            young,
            eta,
            epsilon,
            traction,
            tau,
        })
}

proptest! {
    #[test]
    fn coefficients_carry_the_delayed_fraction(p in physical()) {
        let c = derive_coefficients(&p).unwrap();
        prop_assert!(c.c1 > 0.0 && c.d1 > 0.0);
        prop_assert!((c.c2 - p.epsilon * c.c1).abs() <= 1e-12 * c.c1);
        prop_assert!((c.d2 - p.epsilon * c.d1).abs() <= 1e-12 * c.d1);
        prop_assert_eq!(c.tau, p.tau);
        let (a, b) = c.summed();
        prop_assert!((a - (1.0 + p.epsilon) * c.c1).abs() <= 1e-12 * a);
        prop_assert!((b - (1.0 + p.epsilon) * c.d1).abs() <= 1e-12 * b);
    }

    #[test]
    fn static_tip_matches_equilibrium(p in physical()) {
        let want = p.traction * p.length / (p.young * (1.0 + p.epsilon));
        prop_assert!((p.static_tip_displacement() - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn nonpositive_density_is_rejected(p in physical(), bad in -10.0..=0.0f64) {
        let q = MusclePhysical { rho: bad, ..p };
        prop_assert!(derive_coefficients(&q).is_err());
    }

    #[test]
    fn poincare_constant_scales_quadratically(l in 1e-3..10.0f64, s in 0.1..10.0f64) {
        let a = poincare_constant_interval(l).unwrap();
        let b = poincare_constant_interval(s * l).unwrap();
        prop_assert!((b / a - s * s).abs() <= 1e-12 * s * s);
    }

    #[test]
    fn history_lookups_are_exact_offsets(n in 2usize..40, extra in 0usize..100) {
        let tau = 0.7;
        let mut buf = HistoryBuffer::new(tau, n, |t: f64| t).unwrap();
        let dt = buf.dt();
        for j in 1..=extra {
            buf.push(j as f64 * dt * 10.0);
        }
        prop_assert_eq!(buf.len(), n + 1);
        // stored value k steps back from head index h
        let h = buf.head_index();
        let expect = |i: i64| if i <= 0 { i as f64 * dt } else { i as f64 * dt * 10.0 };
        for k in 0..=n {
            prop_assert_eq!(*buf.lagged(k), expect(h - k as i64));
        }
        let (older, newer) = buf.delayed_pair();
        prop_assert_eq!(*older, expect(h - n as i64));
        prop_assert_eq!(*newer, expect(h - n as i64 + 1));
    }

    #[test]
    fn linspace_hits_endpoints(lo in -10.0..10.0f64, w in 1e-3..10.0f64, n in 2usize..200) {
        let v = linspace(lo, lo + w, n);
        prop_assert_eq!(v.len(), n);
        prop_assert!((v[0] - lo).abs() <= 1e-14 * lo.abs().max(1.0));
        prop_assert!((v[n - 1] - (lo + w)).abs() <= 1e-14 * (lo + w).abs().max(1.0));
        prop_assert!(v.windows(2).all(|p| p[1] > p[0]));
    }
}
