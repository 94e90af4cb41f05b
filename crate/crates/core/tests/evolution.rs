use shockstab::evolve::{evolve_nonlinear, EvolveControls, Frame, InitialData, PerturbationField};
use shockstab::model::registry;
use shockstab::profile::{solve_profile, ProfileOptions};

fn run(name: &str, u0: &InitialData, t: f64, dx: f64) -> PerturbationField {
    let m = registry(name).unwrap();
    let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
    let c = EvolveControls { dx, dt: dx / 2.0, x_dom: Some(16.0), frame: Frame::Lab, ..EvolveControls::default() };
    evolve_nonlinear(&m, &p, u0, t, &c).unwrap()
}

/// Last-snapshot values at the nodes of `coarse`, read off a field whose
/// spacing divides the coarse spacing.
fn on_coarse(fine: &PerturbationField, coarse: &PerturbationField) -> Vec<f64> {
    let n = fine.n;
    let r = (coarse.dx() / fine.dx()).round() as usize;
    let off = (fine.nodes() - 1) / 2 - r * ((coarse.nodes() - 1) / 2);
    let last = fine.values.last().unwrap();
    (0..coarse.nodes()).flat_map(|i| (0..n).map(move |c| last[(off + r * i) * n + c])).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn second_order_under_grid_halving() {
    let u0 = InitialData::Gaussian { mass: 0.02, center: -2.0, width: 1.0, direction: None };
    let t = 2.0;
    let f1 = run("burgers", &u0, t, 0.2);
    let f2 = run("burgers", &u0, t, 0.1);
    let f3 = run("burgers", &u0, t, 0.05);
    for f in [&f1, &f2, &f3] {
        assert!((f.times.last().unwrap() - t).abs() < 1e-12);
    }
    let c1 = f1.values.last().unwrap().clone();
    let e12 = sup_diff(&c1, &on_coarse(&f2, &f1));
    let e23 = sup_diff(&on_coarse(&f2, &f1), &on_coarse(&f3, &f1));
    let ratio = e12 / e23;
    assert!((ratio - 4.0).abs() <= 0.3 * 4.0, "self-convergence ratio {ratio} ({e12:e}, {e23:e})");
}

#[test]
fn mass_is_conserved_for_each_component() {
    let u0 = InitialData::Gaussian { mass: 0.01, center: 1.0, width: 0.8, direction: Some(vec![1.0, -0.5]) };
    let f = run("burgers2x2", &u0, 3.0, 0.1);
    let m0 = &f.mass[0];
    assert!((m0[0] - 0.01).abs() < 1e-6 && (m0[1] + 0.005).abs() < 1e-6, "{m0:?}");
    for m in &f.mass {
        for c in 0..2 {
            assert!((m[c] - m0[c]).abs() < 1e-9, "{m:?} vs {m0:?}");
        }
    }
    assert!(f.scheme.conservation_defect < 1e-9);
}

#[test]
fn snapshots_are_increasing_and_finite() {
    let u0 = InitialData::Algebraic { e0: 0.01, direction: None };
    let f = run("burgers", &u0, 5.0, 0.2);
    assert!(f.times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(f.times[0], 0.0);
    assert!(f.values.iter().all(|v| v.iter().all(|x| x.is_finite())));
    assert_eq!(f.values.len(), f.times.len());
    assert_eq!(f.mass.len(), f.times.len());
}
