use super::*;
use crate::model::registry;
use crate::profile::{predicted_tail_rate, profile_family, solve_profile, ProfileOptions};
use crate::templates::{ExcitedKernel, TemplateParams};

fn setup(name: &str) -> (FluxModel, Profile) {
    let m = registry(name).unwrap();
    let p = solve_profile(&m, &ProfileOptions::default()).unwrap();
    (m, p)
}

fn kernel(m: &FluxModel, p: &Profile) -> ExcitedKernel {
    let eta = predicted_tail_rate(m).unwrap();
    ExcitedKernel::new(TemplateParams::from_model(m, p.ell, eta).unwrap()).unwrap()
}

fn small() -> EvolveControls {
    EvolveControls { margin: Some(20.0), ..EvolveControls::default() }
}

#[test]
fn controls_reject_bad_values() {
    assert!(EvolveControls::default().validate().is_ok());
    let c = EvolveControls { dx: -1.0, ..EvolveControls::default() };
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    let c = EvolveControls { cfl: f64::NAN, ..EvolveControls::default() };
    assert!(c.validate().is_err());
}

#[test]
fn initial_data_parses_from_json() {
    let d: InitialData = serde_json::from_str(r#"{"shape":"algebraic","e0":0.01}"#).unwrap();
    assert_eq!(d, InitialData::Algebraic { e0: 0.01, direction: None });
    assert!(serde_json::from_str::<InitialData>(r#"{"shape":"algebraic","e0":0.01,"x":1}"#).is_err());
}

#[test]
fn shift_samples_is_exact_for_cubics() {
    let dx = 0.1;
    let v: Vec<f64> = (0..60).map(|k| {
        let x = k as f64 * dx;
        x * x * x - 2.0 * x
    }).collect();
    let s = 0.037;
    let w = shift_samples(&v, 1, dx, s);
    for k in 3..56 {
        let x = k as f64 * dx + s;
        assert!((w[k] - (x * x * x - 2.0 * x)).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn zero_data_stays_zero() {
    let (m, p) = setup("burgers");
    let f = evolve_nonlinear(&m, &p, &InitialData::Zero, 5.0, &small()).unwrap();
    for j in 0..f.times.len() {
        assert!(f.sup_norm(j) < 1e-12, "t = {}: {}", f.times[j], f.sup_norm(j));
    }
    let tr = track_phase(&f, &kernel(&m, &p), &m, &p, &TrackOptions::default()).unwrap();
    assert!(tr.delta.iter().all(|d| d[0].abs() < 1e-12));
}

#[test]
fn oversized_data_is_rejected() {
    let (m, p) = setup("burgers");
    let r = evolve_nonlinear(&m, &p, &InitialData::Algebraic { e0: 1.0, direction: None }, 1.0, &small());
    assert!(matches!(r, Err(Error::DomainError(_))));
}

#[test]
fn translation_mode_is_stationary_for_the_linearization() {
    let (m, p) = setup("burgers");
    let e0 = 1e-3;
    let c = EvolveControls { dx: 0.1, ..small() };
    let f = evolve_linearized(&m, &p, &InitialData::TranslationMode { e0 }, 10.0, &c).unwrap();
    let last = f.values.last().unwrap();
    let drift = last.iter().zip(&f.u0).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(drift < 5e-3 * e0, "drift {drift:e}");
}

#[test]
fn linearized_flow_is_linear() {
    let (m, p) = setup("burgers");
    let c = small();
    let a = InitialData::Gaussian { mass: 1.0, center: -3.0, width: 0.5, direction: None };
    let b = InitialData::Gaussian { mass: -0.5, center: 2.0, width: 1.0, direction: None };
    let fa = evolve_linearized(&m, &p, &a, 4.0, &c).unwrap();
    let fb = evolve_linearized(&m, &p, &b, 4.0, &c).unwrap();
    let sum: Vec<f64> = fa.u0.iter().zip(&fb.u0).map(|(x, y)| x + y).collect();
    let fs = evolve_linearized(&m, &p, &InitialData::Samples { values: sum }, 4.0, &c).unwrap();
    let j = fs.times.len() - 1;
    for i in 0..fs.nodes() {
        let lhs = fs.values[j][i];
        let rhs = fa.values[j][i] + fb.values[j][i];
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }
}

#[test]
fn mass_balance_holds_per_step() {
    let (m, p) = setup("burgers");
    let u0 = InitialData::Gaussian { mass: 0.02, center: -4.0, width: 1.0, direction: None };
    let f = evolve_nonlinear(&m, &p, &u0, 8.0, &EvolveControls { frame: Frame::Lab, ..small() }).unwrap();
    assert!(f.scheme.conservation_defect <= TOL_CONS, "{:e}", f.scheme.conservation_defect);
    assert!((f.mass[0][0] - 0.02).abs() < 1e-6);
    // Compactly supported data far from the boundary keeps its mass.
    let drift = (f.mass.last().unwrap()[0] - f.mass[0][0]).abs();
    assert!(drift < 1e-9, "{drift:e}");
}

#[test]
fn tracked_and_lab_frames_agree() {
    let (m, p) = setup("burgers");
    let u0 = InitialData::Algebraic { e0: 0.01, direction: None };
    let a = evolve_nonlinear(&m, &p, &u0, 6.0, &EvolveControls { frame: Frame::Tracked, ..small() }).unwrap();
    let b = evolve_nonlinear(&m, &p, &u0, 6.0, &EvolveControls { frame: Frame::Lab, ..small() }).unwrap();
    assert_eq!(a.times.len(), b.times.len());
    let j = a.times.len() - 1;
    let diff = a.values[j].iter().zip(&b.values[j]).fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    assert!(diff < 2e-5, "{diff:e}");
    assert!(a.frame_shift[j] > 0.0);
}

#[test]
fn burgers_location_is_half_the_mass() {
    let (m, p) = setup("burgers");
    for mass in [0.03, -0.2, 1e-4] {
        let loc = asymptotic_location(&m, &p, &[mass]).unwrap();
        assert!((loc.delta_infinity[0] - 0.5 * mass).abs() < 1e-12);
        assert_eq!(loc.rank, 1);
    }
    assert!(asymptotic_location(&m, &p, &[1.0, 2.0]).is_err());
}

#[test]
fn overcompressive_location_carries_the_mass() {
    let (m, p) = setup("burgers2x2");
    assert_eq!(p.ell, 2);
    let m0 = [0.01, -0.004];
    let loc = asymptotic_location(&m, &p, &m0).unwrap();
    let member = profile_family(&m, &p, &loc.delta_infinity).unwrap();
    // No outgoing fields: all of the mass ends up in the family member.
    let xs: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 0.01).collect();
    for c in 0..2 {
        let got: f64 = xs.iter().map(|&x| member.eval(x)[c] - p.eval(x)[c]).sum::<f64>() * 0.01;
        assert!((got - m0[c]).abs() < 1e-5, "component {c}: {got} vs {}", m0[c]);
    }
}

#[test]
fn translation_mode_shifts_by_minus_e0() {
    let (m, p) = setup("burgers");
    let e0 = 0.005;
    let u0 = InitialData::TranslationMode { e0 };
    let f = evolve_nonlinear(&m, &p, &u0, 20.0, &small()).unwrap();
    let tr = track_phase(&f, &kernel(&m, &p), &m, &p, &TrackOptions::default()).unwrap();
    let fit = *tr.delta_fit.as_ref().unwrap().last().unwrap();
    assert!((fit + e0).abs() < 10.0 * e0 * e0, "fit {fit}");
    assert!((tr.delta_infinity[0] + e0).abs() < 10.0 * e0 * e0);
    assert!((tr.delta.last().unwrap()[0] + e0).abs() < TOL_TRACK * e0 + 10.0 * e0 * e0);
}

#[test]
fn functional_and_fit_agree_late_in_a_burgers_run() {
    let (m, p) = setup("burgers");
    let e0 = 0.01;
    let f = evolve_nonlinear(&m, &p, &InitialData::Algebraic { e0, direction: None }, 40.0, &EvolveControls::default())
        .unwrap();
    let tr = track_phase(&f, &kernel(&m, &p), &m, &p, &TrackOptions::default()).unwrap();
    assert!(tr.iterations <= 10);
    let gap = tr.fit_discrepancy(20.0).unwrap();
    assert!(gap < TOL_TRACK * e0 + 10.0 * e0 * e0, "gap {gap:e}");
    let r = bound_report(&f, &tr, &m, &p, &kernel(&m, &p).params).unwrap();
    assert!(r.ceilings.template.is_finite());
    assert!(r.zeta.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn lp_slopes_of_power_laws() {
    let times: Vec<f64> = (0..40).map(|k| k as f64 * 5.0).collect();
    let pw = |e: f64| times.iter().map(|t| (1.0 + t).powf(e)).collect::<Vec<_>>();
    let r = BoundReport {
        times: times.clone(),
        template_ratio: vec![1.0; 40],
        delta_dot_ratio: vec![0.0; 40],
        delta_ratio: vec![0.0; 40],
        zeta: vec![1.0; 40],
        l1: pw(0.0),
        l2: pw(-0.25),
        linf: pw(-0.5),
        lp_slopes: Vec::new(),
        derivative_ratio: vec![None; 40],
        ceilings: Ceilings { t_min: 0.0, t_max: 0.0, template: 0.0, delta_dot: 0.0, delta: 0.0, zeta: 0.0 },
        e0: 1.0,
    };
    let s = r.slopes(10.0, 195.0);
    assert!((s[0].slope.unwrap()).abs() < 1e-12);
    assert!((s[1].slope.unwrap() + 0.25).abs() < 1e-12);
    assert!((s[2].slope.unwrap() + 0.5).abs() < 1e-12);
    let mut z = r.clone();
    z.linf = vec![0.0; 40];
    assert_eq!(z.slopes(10.0, 195.0)[2].status, "undefined");
}

#[test]
fn overcompressive_tracking_of_decoupled_shocks() {
    let (m, p) = setup("burgers2x2");
    let u0 = InitialData::Algebraic { e0: 0.005, direction: Some(vec![1.0, -0.5]) };
    let f = evolve_nonlinear(&m, &p, &u0, 20.0, &small()).unwrap();
    let tr = track_phase_oc(&f, &kernel(&m, &p), &m, &p, &TrackOptions::default()).unwrap();
    assert!(tr.iterations <= 10);
    assert!(tr.orthogonality_residual.unwrap() <= 1e-4 * 0.02 + 1e-12);
    // delta starts at delta_* and dips by the mass still in transit, which then arrives.
    let gap = |j: usize| -> f64 {
        tr.delta[j].iter().zip(&tr.delta_infinity).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    assert!(gap(0) < 1e-8);
    let worst = (0..f.times.len()).map(gap).fold(0.0, f64::max);
    let last = gap(f.times.len() - 1);
    assert!(worst < 0.02);
    assert!(last < 0.8 * worst, "{last} vs {worst}");
}
