//! Property tests for the structural invariants: periodic index arithmetic,
//! exact positivity of the forward march, admissibility of the switching
//! rule, and kernel displacement symmetry.

use proptest::prelude::*;

use bitectl_core::control::switching_rule;
use bitectl_core::forward::{forward_solve, ForwardConfig};
use bitectl_core::grid::{AgeXSlice, Field, Grid};
use bitectl_core::model::{
    kernel_eval, ControlBounds, Fertility, Mortality, ProblemData, VitalRates,
};

proptest! {
    #[test]
    fn wrap_x_is_periodic(n_x in 2usize..64, k in -1000isize..1000, shift in 1isize..5) {
        let g = Grid::<f64>::new(1.0, 1.0, 2, n_x).unwrap();
        let wrapped = g.wrap_x(k);
        prop_assert!(wrapped < n_x);
        prop_assert_eq!(wrapped, g.wrap_x(k + shift * n_x as isize));
    }

    #[test]
    fn field_access_through_wrap_is_periodic(n_x in 2usize..32, k in -200isize..200) {
        let g = Grid::<f64>::new(1.0, 0.5, 2, n_x).unwrap();
        let f = Field::from_fn(&g, |i, n, kk| (i * 31 + n * 7 + kk) as f64);
        prop_assert_eq!(f.at_wrapped(1, 1, k), f.at_wrapped(1, 1, k + n_x as isize));
    }

    #[test]
    fn kernel_is_symmetric_in_displacement(xi in 0i64..(24 * 1024), di in 1i64..(6 * 1024)) {
        // Mirror sources with exactly opposite displacements give the same
        // value. Dyadic coordinates keep x - s exact, so the premise
        // x - s1 == -(x - s2) holds bitwise.
        let x = xi as f64 / 1024.0;
        let d = di as f64 / 1024.0;
        let s1 = x - d;
        let s2 = x + d;
        prop_assume!(s1 > 0.0 && s1 < 24.0 && s2 > 0.0 && s2 < 24.0);
        prop_assert_eq!(kernel_eval(x, s1), kernel_eval(x, s2));
        prop_assert!(kernel_eval(x, s1) >= 0.0);
    }

    #[test]
    fn switching_rule_output_is_admissible(
        q_level in -3.0f64..1.0,
        prev_level in -2.0f64..0.5,
        band in 0.0f64..0.2,
    ) {
        let g = Grid::<f64>::new(1.0, 1.0, 3, 4).unwrap();
        let bounds = ControlBounds::constant(&g, -0.9, -0.1);
        let q = Field::constant(&g, q_level);
        let prev = Field::constant(&g, prev_level);
        let u = switching_rule(&q, &bounds, &prev, band);
        for &v in u.values() {
            prop_assert!((-0.9..=-0.1).contains(&v));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Nonnegative data plus admissible control give a nonnegative state at
    /// every node, exactly: each sub-step of the march is a nonnegative
    /// operator.
    #[test]
    fn forward_state_is_exactly_nonnegative(
        seed_p0 in 0u64..1000,
        mu in 0.0f64..2.0,
        beta in 0.0f64..1.5,
        delta in 0.0f64..2.0,
        eta in 0.5f64..12.0,
        u_level in -1.5f64..0.0,
        f_level in 0.0f64..0.5,
    ) {
        let g = Grid::<f64>::new(1.0, 1.0, 5, 6).unwrap();
        let p0 = AgeXSlice::from_fn(&g, |i, k| {
            // Cheap deterministic pseudo-random nonnegative values.
            let h = seed_p0
                .wrapping_mul(6364136223846793005)
                .wrapping_add((i * 17 + k * 3) as u64);
            (h % 1000) as f64 / 500.0
        });
        let data = ProblemData {
            grid: g,
            rates: VitalRates {
                mortality: Mortality::Constant(mu),
                fertility: Fertility::Constant(beta),
                diffusivity: delta,
                kernel_halfwidth: eta,
            },
            initial: p0,
            source: Some(Field::constant(&g, f_level)),
            bounds: ControlBounds::constant(&g, -2.0, 0.0),
            birth_wrap: false,
        };
        let u = Field::constant(&g, u_level);
        let p = forward_solve(&data, &u, &ForwardConfig::renewal()).unwrap();
        for &v in p.values() {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}
