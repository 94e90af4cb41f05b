use std::sync::OnceLock;

use approx::assert_relative_eq;
use proptest::prelude::*;

use shockstab::evolve::asymptotic_location;
use shockstab::lemma_verify::{interaction1_sides, interaction2_sides};
use shockstab::model::{registry, FluxModel, ModelSpec};
use shockstab::profile::{solve_profile, Profile, ProfileOptions};
use shockstab::templates::{errfn, template_sum, ExcitedKernel, TemplateParams};

fn scaled_burgers(a: f64) -> ModelSpec {
    serde_json::from_value(serde_json::json!({
        "name": "scaled",
        "u_minus": [a],
        "u_plus": [-a],
        "flux": [[{ "coef": 0.5, "powers": [2] }]],
        "viscosity": [[1.0]],
    }))
    .unwrap()
}

fn overcompressive() -> &'static (FluxModel, Profile) {
    static CELL: OnceLock<(FluxModel, Profile)> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = registry("burgers2x2").unwrap();
        let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
        (m, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scalar_profiles_match_the_closed_form(a in 0.5f64..2.0) {
        let m = scaled_burgers(a).build().unwrap();
        let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
        for x in [-3.0, -0.7, 0.0, 1.1, 4.0] {
            let exact = -a * (0.5 * a * x).tanh();
            prop_assert!((p.eval(x)[0] - exact).abs() < 1e-7, "a = {a}, x = {x}");
        }
        // Tail rate of tanh(a x / 2) is a.
        prop_assert!((p.eta - a).abs() < 0.2 * a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn asymptotic_location_is_linear_in_the_mass(m0 in -0.02f64..0.02, m1 in -0.02f64..0.02, k in -3.0f64..3.0) {
        let (m, p) = overcompressive();
        let a = asymptotic_location(m, p, &[m0, m1]).unwrap().delta_infinity;
        let b = asymptotic_location(m, p, &[k * m0, k * m1]).unwrap().delta_infinity;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((k * x - y).abs() <= 1e-9 * (1.0 + x.abs() * k.abs()) + 1e-12);
        }
    }

    #[test]
    fn errfn_is_a_monotone_distribution(a in -8.0f64..8.0, d in 0.0f64..4.0) {
        prop_assert!(errfn(a) <= errfn(a + d) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&errfn(a)));
        assert_relative_eq!(errfn(a) + errfn(-a), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn burgers_kernel_stays_between_zero_and_its_limit(y in -30.0f64..30.0, t in 0.01f64..200.0) {
        let m = registry("burgers").unwrap();
        let k = ExcitedKernel::new(TemplateParams::from_model(&m, 1, 1.0).unwrap()).unwrap();
        let e = k.excited_kernel(y, t)[(0, 0)];
        let lim = k.excited_limit(y)[(0, 0)];
        prop_assert!(e >= -1e-14 && e <= lim + 1e-14, "e = {e}, limit = {lim}");
        prop_assert!(k.excited_kernel(y, 2.0 * t)[(0, 0)] >= e - 1e-14);
    }

    #[test]
    fn templates_are_positive_and_decay_in_time(x in -50.0f64..50.0, t in 0.0f64..100.0) {
        let p = TemplateParams::from_model(&registry("coupled_quadratic").unwrap(), 1, 1.0).unwrap();
        let v = template_sum(x, t, &p);
        prop_assert!(v.is_finite() && v > 0.0);
        prop_assert!(template_sum(0.0, t + 1.0, &p) <= template_sum(0.0, t, &p) * (1.0 + 1e-12));
    }

    #[test]
    fn completed_squares_agree(
        x in -10.0f64..10.0, y in -10.0f64..10.0, s in 0.05f64..0.95,
        m1 in 0.2f64..5.0, m2 in 0.2f64..5.0, a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
    ) {
        let t = 1.0 + 4.0 * s;
        let s = s * t;
        let (l, r) = interaction1_sides(x, y, s, t, m1, m2, a, b).unwrap();
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
        let a2 = if a.abs() < 0.1 { 0.1 } else { a };
        let b2 = if b.abs() < 0.1 { 0.1 } else { b };
        let (l, r) = interaction2_sides(x, y, s, t, m1, m2, a2, b2, c).unwrap();
        prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
    }
}
