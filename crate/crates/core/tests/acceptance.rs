//! Acceptance gate. Prints one PASS/FAIL line per criterion.
//!
//! The process exits with status 0 unless `SHOCKSTAB_ACCEPTANCE_STRICT=1`,
//! in which case any FAIL line makes it exit with status 1.

use std::io::Write;
use std::time::Instant;

use shockstab::cli::{template_params, verify_bounds, BoundsVerification};
use shockstab::config::RunConfig;
use shockstab::lemma_verify::{hz_sweep, identity_sweep, LemmaContext, LemmaId, SuiteOptions};
use shockstab::model::registry;
use shockstab::profile::{solve_profile, ProfileOptions};
use shockstab::spectral::{check_condition_d, linearized_coefficients, SpectralOptions};
use shockstab::templates::{TemplateParams, WeightProfile};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, budget_s: Option<f64>, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let mut o = f();
    let secs = t0.elapsed().as_secs_f64();
    if let Some(b) = budget_s {
        if secs > b {
            o.pass = false;
            o.detail = format!("{}; runtime {secs:.1}s exceeds {b}s", o.detail);
        }
    }
    println!("{} {id:>2} {name}: {} [{secs:.2}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    std::io::stdout().flush().ok();
    o.pass
}

fn err(e: impl std::fmt::Display) -> Outcome {
    Outcome { pass: false, detail: format!("error: {e}") }
}

fn identities() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for id in [LemmaId::Interaction1, LemmaId::Interaction2] {
        match identity_sweep(id, 10_000, 0) {
            Ok(c) => {
                worst = worst.max(c.max_relative_residual);
                pass &= c.max_relative_residual <= 1e-10;
            }
            Err(e) => return err(e),
        }
    }
    Outcome { pass, detail: format!("max relative residual {worst:.3e} over 2 x 10^4 draws (tol 1e-10)") }
}

fn hz() -> Outcome {
    let s = match hz_sweep() {
        Ok(s) => s,
        Err(e) => return err(e),
    };
    let bad: Vec<String> = s
        .grid
        .iter()
        .zip(s.lhs.iter().zip(&s.rhs))
        .filter(|(_, (l, r))| l > r)
        .map(|(g, (l, r))| format!("a={}, z={}: lhs {l:.6} > rhs {r:.6}", g[0], g[1]))
        .collect();
    Outcome {
        pass: bad.is_empty(),
        detail: format!("{} of {} sweep points violated{}", bad.len(), s.lhs.len(), if bad.is_empty() {
            String::new()
        } else {
            format!(" ({})", bad.join("; "))
        }),
    }
}

fn burgers_profile() -> Outcome {
    let m = registry("burgers").unwrap();
    let p = match solve_profile(&m, &ProfileOptions::default()) {
        Ok(p) => p,
        Err(e) => return err(e),
    };
    let dev = (0..=8000)
        .map(|k| -20.0 + k as f64 * 0.005)
        .map(|x| (p.eval(x)[0] + (0.5 * x).tanh()).abs())
        .fold(0.0, f64::max);
    let eta_err = (p.eta - 1.0).abs();
    Outcome {
        pass: dev <= 1e-8 && eta_err <= 0.2,
        detail: format!("max |u + tanh(x/2)| on |x|<=20 = {dev:.3e} (tol 1e-8), eta = {:.4}", p.eta),
    }
}

/// Largest eigenvalue and count above `cut` of the centred finite-difference
/// discretization of `v'' - (u v)'`, `u = -tanh(x/2)`, with Dirichlet ends.
/// The tridiagonal matrix has positive off-diagonal products, so it is
/// similar to a symmetric one and Sturm counts are exact.
fn grid_spectrum(nodes: usize, half_width: f64, cut: f64) -> (f64, usize) {
    let h = 2.0 * half_width / (nodes + 1) as f64;
    let u: Vec<f64> = (0..nodes + 2).map(|i| -(0.5 * (-half_width + i as f64 * h)).tanh()).collect();
    let diag = vec![-2.0 / (h * h); nodes];
    // Row i (interior node i+1): lower uses u_{i}, upper uses u_{i+2}.
    let off2: Vec<f64> = (0..nodes - 1)
        .map(|i| {
            let upper = 1.0 / (h * h) - u[i + 2] / (2.0 * h);
            let lower = 1.0 / (h * h) + u[i + 1] / (2.0 * h);
            assert!(upper * lower > 0.0);
            upper * lower
        })
        .collect();
    let below = |s: f64| -> usize {
        let mut q = diag[0] - s;
        let mut c = usize::from(q < 0.0);
        for i in 1..nodes {
            let prev = if q == 0.0 { f64::EPSILON } else { q };
            q = diag[i] - s - off2[i - 1] / prev;
            c += usize::from(q < 0.0);
        }
        c
    };
    let above = nodes - below(cut);
    let bound = 4.0 / (h * h) + 2.0 / h;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if below(mid) == nodes {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, above)
}

fn condition_d() -> Outcome {
    let m = registry("burgers").unwrap();
    let rec = match solve_profile(&m, &ProfileOptions::default())
        .and_then(|p| linearized_coefficients(&m, &p).map(|s| (s, p.ell)))
        .and_then(|(s, ell)| check_condition_d(&s, ell, &SpectralOptions::default()))
    {
        Ok(r) => r,
        Err(e) => return err(e),
    };
    let (top, above) = grid_spectrum(2000, 20.0, 1e-3);
    Outcome {
        pass: rec.origin_multiplicity == 1 && rec.ell_expected == 1 && rec.winding == 0 && above == 0,
        detail: format!(
            "origin winding {} (ell = {}), outer winding {}, grid eigenvalues with Re > 1e-3: {above}, top {top:.3e}",
            rec.origin_multiplicity, rec.ell_expected, rec.winding
        ),
    }
}

fn quadrature() -> Outcome {
    let opts = SuiteOptions::default();
    let mut sets: Vec<(&str, TemplateParams, Vec<LemmaId>)> = Vec::new();
    let cfg = RunConfig::from_toml("").unwrap();
    let lin_nonlin: Vec<LemmaId> = ["linear", "nonlinear"]
        .iter()
        .flat_map(|g| LemmaId::parse_selection(g).unwrap())
        .collect();
    let burgers = registry("burgers").unwrap();
    let coupled = registry("coupled_quadratic").unwrap();
    let oc = registry("burgers2x2").unwrap();
    match (template_params(&burgers, 1, &cfg), template_params(&coupled, 1, &cfg), template_params(&oc, 2, &cfg)) {
        (Ok(g0), Ok(g1), Ok(o)) => {
            sets.push(("gamma=0", g0, lin_nonlin.clone()));
            sets.push(("gamma=1", g1.with_weight_profile(WeightProfile::ExpBump { amp: 1.0 }), lin_nonlin));
            sets.push(("overcompressive", o, LemmaId::parse_selection("auxiliary").unwrap()));
        }
        (a, b, c) => return err(format!("{:?}", [a.err(), b.err(), c.err()])),
    }
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut count = 0;
    for (label, params, ids) in sets {
        let gamma = params.gamma;
        let ctx = match LemmaContext::new(label, params, opts.rtol) {
            Ok(c) => c,
            Err(e) => return err(e),
        };
        for id in ids {
            match ctx.check(id, &opts) {
                Ok(c) => {
                    count += 1;
                    worst = worst.max(c.refinement_ratio);
                    if !(c.fitted_c.is_finite() && c.refinement_ratio <= 1.1) {
                        pass = false;
                        bad.push(format!("{label}/{id}: C = {}, ratio {:.3}", c.fitted_c, c.refinement_ratio));
                    }
                }
                Err(e) => return err(format!("{label}/{id}: {e}")),
            }
        }
        if label.starts_with("gamma") && gamma != label.ends_with('1') as u8 {
            pass = false;
            bad.push(format!("{label}: parameter set has gamma = {gamma}"));
        }
    }
    Outcome {
        pass,
        detail: format!(
            "{count} bounds, worst refinement ratio {worst:.4} (tol 1.1){}",
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    }
}

fn bounds_run() -> Result<BoundsVerification, String> {
    let cfg = RunConfig::from_toml("").map_err(|e| e.to_string())?;
    let m = cfg.model.build().map_err(|e| e.to_string())?;
    let p = solve_profile(&m, &cfg.profile).map_err(|e| e.to_string())?;
    verify_bounds(&m, &p, &cfg, None).map_err(|e| e.to_string())
}

fn from_checks(v: &BoundsVerification, names: &[&str]) -> Outcome {
    let hits: Vec<_> = v.checks.iter().filter(|c| names.contains(&c.name.as_str())).collect();
    if hits.is_empty() {
        return Outcome { pass: false, detail: format!("no {names:?} check was produced") };
    }
    Outcome {
        pass: hits.iter().all(|c| c.pass),
        detail: hits
            .iter()
            .map(|c| {
                let v = c.value.map_or("-".into(), |x| format!("{x:.4e}"));
                let t = c.threshold.map_or("-".into(), |x| format!("{x:.4e}"));
                format!("{} {v} vs {t} ({})", c.name, c.detail)
            })
            .collect::<Vec<_>>()
            .join(" | "),
    }
}

fn main() {
    let mut results = vec![
        report(1, "algebraic identities", Some(1.0), identities),
        report(2, "half-line Gaussian inequality sweep", Some(10.0), hz),
        report(3, "Burgers profile", Some(1.0), burgers_profile),
        report(4, "condition (D) on Burgers", Some(60.0), condition_d),
        report(5, "quadrature certification", Some(600.0), quadrature),
    ];

    let t0 = Instant::now();
    let bounds = bounds_run();
    let secs = t0.elapsed().as_secs_f64();
    println!("     (Burgers runs to T = 500 and T = 1000 plus Green probe: {secs:.1}s)");
    let criteria: [(u32, &str, &[&str]); 5] = [
        (6, "Lp decay slopes", &["lp_slopes"]),
        (7, "pointwise template ratio", &["template_ratio"]),
        (8, "phase convergence", &["phase_ceiling", "asymptotic_location"]),
        (9, "tracking cross-validation", &["tracking"]),
        (10, "Green probe", &["green_probe"]),
    ];
    for (id, name, checks) in criteria {
        let budget = (id == 6).then_some(300.0);
        results.push(report(id, name, None, || match &bounds {
            Ok(v) => {
                let mut o = from_checks(v, checks);
                if let Some(b) = budget {
                    if secs > b {
                        o.pass = false;
                        o.detail = format!("{}; runtime {secs:.1}s exceeds {b}s", o.detail);
                    }
                }
                o
            }
            Err(e) => err(e),
        }));
    }

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed < results.len() && std::env::var("SHOCKSTAB_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
