use std::sync::Arc;

use shockstab::linalg::{Matrix, State};
use shockstab::model::{registry, FluxModel, REGISTRY};
use shockstab::profile::{solve_profile, Profile, ProfileOptions};
use shockstab::spectral::{check_condition_d, linearized_coefficients, winding_count, Contour, EvansOptions, SpectralOptions};

fn setup(name: &str) -> (FluxModel, Profile) {
    let m = registry(name).unwrap();
    let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
    (m, p)
}

/// Discrete `(B(u) u_x)_x - f(u)_x` at interior nodes.
fn residual(m: &FluxModel, u: &[State], h: f64) -> Vec<State> {
    (1..u.len() - 1)
        .map(|i| {
            let br = m.b(&((&u[i] + &u[i + 1]) * 0.5)) * (&u[i + 1] - &u[i]);
            let bl = m.b(&((&u[i] + &u[i - 1]) * 0.5)) * (&u[i] - &u[i - 1]);
            (br - bl) / (h * h) - (m.f(&u[i + 1]) - m.f(&u[i - 1])) / (2.0 * h)
        })
        .collect()
}

#[test]
fn linearized_coefficients_match_a_finite_difference_of_the_flow() {
    for name in REGISTRY {
        let (m, p) = setup(name);
        let sys = linearized_coefficients(&m, &p).unwrap();
        let n = m.dim();
        let h = 0.01;
        let xs: Vec<f64> = (-600..=600).map(|k| k as f64 * h).collect();
        let ubar: Vec<State> = xs.iter().map(|&x| p.eval(x)).collect();
        let v: Vec<State> = xs
            .iter()
            .map(|&x| State::from_fn(n, |c, _| (-(x - 0.3 * c as f64).powi(2)).exp() * (1.0 + c as f64)))
            .collect();
        let eps = 1e-5;
        let plus: Vec<State> = ubar.iter().zip(&v).map(|(u, w)| u + w * eps).collect();
        let minus: Vec<State> = ubar.iter().zip(&v).map(|(u, w)| u - w * eps).collect();
        let rp = residual(&m, &plus, h);
        let rm = residual(&m, &minus, h);

        let a: Vec<Matrix> = xs.iter().map(|&x| sys.a_of_x(x)).collect();
        let bmid: Vec<Matrix> = xs.windows(2).map(|w| sys.b_of_x(0.5 * (w[0] + w[1]))).collect();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 1..xs.len() - 1 {
            let lv = (&bmid[i] * (&v[i + 1] - &v[i]) - &bmid[i - 1] * (&v[i] - &v[i - 1])) / (h * h)
                - (&a[i + 1] * &v[i + 1] - &a[i - 1] * &v[i - 1]) / (2.0 * h);
            let fd = (&rp[i - 1] - &rm[i - 1]) / (2.0 * eps);
            worst = worst.max((lv - &fd).amax());
            scale = scale.max(fd.amax());
        }
        assert!(worst <= 1e-3 * scale, "{name}: {worst:e} vs {scale:e}");
    }
}

#[test]
fn translation_mode_is_in_the_kernel() {
    let (m, p) = setup("burgers");
    let sys = linearized_coefficients(&m, &p).unwrap();
    let h = 1e-2;
    for x in [-4.0, -1.0, 0.0, 0.5, 3.0] {
        let d = |x: f64| p.eval_with_derivative(x).1[0];
        let flux = |x: f64| sys.b_of_x(x)[(0, 0)] * (d(x + h) - d(x - h)) / (2.0 * h) - sys.a_of_x(x)[(0, 0)] * d(x);
        let lv = (flux(x + h) - flux(x - h)) / (2.0 * h);
        assert!(lv.abs() < 1e-3, "x = {x}: {lv:e}");
    }
}

/// Number of eigenvalues above `cut` of the centred discretization of
/// `v'' - (u v)' + c(x) v`, `u = -tanh(x/2)`, by Sturm counting.
fn grid_count_above(c: &dyn Fn(f64) -> f64, cut: f64) -> usize {
    let (nodes, half) = (2000usize, 20.0);
    let h = 2.0 * half / (nodes + 1) as f64;
    let x = |i: usize| -half + i as f64 * h;
    let u = |i: usize| -(0.5 * x(i)).tanh();
    let diag: Vec<f64> = (1..=nodes).map(|i| -2.0 / (h * h) + c(x(i))).collect();
    let off2: Vec<f64> = (1..nodes)
        .map(|i| (1.0 / (h * h) - u(i + 1) / (2.0 * h)) * (1.0 / (h * h) + u(i) / (2.0 * h)))
        .collect();
    let mut q = diag[0] - cut;
    let mut below = usize::from(q < 0.0);
    for i in 1..nodes {
        q = diag[i] - cut - off2[i - 1] / q;
        below += usize::from(q < 0.0);
    }
    nodes - below
}

#[test]
fn planted_eigenvalue_is_detected() {
    let (m, p) = setup("burgers");
    let bump = |x: f64| 0.5 / (0.5 * x).cosh().powi(2);
    assert_eq!(grid_count_above(&|_| 0.0, 1e-3), 0);
    assert_eq!(grid_count_above(&bump, 1e-3), 1);

    let sys = linearized_coefficients(&m, &p)
        .unwrap()
        .with_reaction(Arc::new(move |x| Matrix::from_element(1, 1, bump(x))))
        .unwrap();
    let rec = check_condition_d(&sys, 1, &SpectralOptions::default()).unwrap();
    assert!(!rec.pass);
    assert_eq!(rec.winding, 1, "{}", rec.report);
    assert_eq!(rec.origin_multiplicity, 0, "{}", rec.report);
}

#[test]
fn winding_counts_agree_on_nested_contours() {
    let (m, p) = setup("burgers");
    let sys = linearized_coefficients(&m, &p).unwrap();
    let opts = EvansOptions { continuation: true, ..EvansOptions::default() };
    for r in [0.005, 0.02, 0.05] {
        let c = Contour::Circle { center_re: 0.0, center_im: 0.0, radius: r };
        assert_eq!(winding_count(&sys, &c, &opts).unwrap().winding, 1, "radius {r}");
    }
    let off = Contour::Circle { center_re: 0.5, center_im: 0.0, radius: 0.2 };
    assert_eq!(winding_count(&sys, &off, &opts).unwrap().winding, 0);
}
