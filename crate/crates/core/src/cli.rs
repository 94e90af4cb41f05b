//! Command-line front end. Every subcommand writes its artifacts plus a
//! `checks_<command>.json` file; `report` aggregates those files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolve::{
    bound_report, evolve_linearized, evolve_nonlinear, green_probe, track_phase, track_phase_oc, BoundReport,
    GreenProbe, PerturbationField, ShockTrack, TOL_CONS,
};
use crate::lemma_verify::{run_suite, LemmaContext, LemmaId};
use crate::model::{classify, endstate_spectrum, FluxModel, Side};
use crate::profile::{predicted_tail_rate, solve_profile, Profile};
use crate::spectral::{check_condition_d, linearized_coefficients};
use crate::templates::{ExcitedKernel, TemplateParams};

#[derive(Debug, Parser)]
#[command(name = "shockstab", version, about = "Stability toolkit for viscous shock profiles")]
pub struct Cli {
    /// TOML run configuration; defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: `out`, or `out` from the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated selection of lemmas or checks.
    #[arg(long, global = true)]
    pub only: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the traveling-wave profile.
    Profile,
    /// Check the Evans-function stability condition.
    Evans,
    /// Evolve a perturbed profile.
    Evolve,
    /// Evolve and track the shock location.
    Track,
    /// Certify the convolution lemmas and algebraic identities.
    VerifyLemmas,
    /// Bounded-ratio checks of the pointwise decay bounds.
    VerifyBounds,
    /// Aggregate all check files in the output directory.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Evans => "evans",
            Command::Evolve => "evolve",
            Command::Track => "track",
            Command::VerifyLemmas => "verify-lemmas",
            Command::VerifyBounds => "verify-bounds",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, value: Some(value), threshold: Some(threshold), detail: detail.into() }
    }
}

/// Exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

fn parse_only(only: &Option<String>) -> Option<Vec<String>> {
    only.as_ref().map(|s| s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

/// Family dimension without solving the profile: the config override, or
/// `i - n` for overcompressive endstates and 1 otherwise.
pub fn family_dimension(model: &FluxModel, cfg: &RunConfig) -> Result<usize> {
    if let Some(ell) = cfg.templates.ell {
        return Ok(ell);
    }
    let sm = endstate_spectrum(model, Side::Minus)?;
    let sp = endstate_spectrum(model, Side::Plus)?;
    let excess = classify(&sm, &sp, 1)?.excess();
    Ok(if excess > 1 { excess as usize } else { 1 })
}

pub fn template_params(model: &FluxModel, ell: usize, cfg: &RunConfig) -> Result<TemplateParams> {
    let eta = match cfg.templates.eta {
        Some(e) => e,
        None => predicted_tail_rate(model)?,
    };
    let p = cfg.templates.apply(TemplateParams::from_model(model, ell, eta)?);
    p.validate()?;
    Ok(p)
}

fn track(field: &PerturbationField, model: &FluxModel, profile: &Profile, cfg: &RunConfig) -> Result<ShockTrack> {
    let kernel = ExcitedKernel::new(template_params(model, profile.ell, cfg)?)?;
    if profile.ell == 1 {
        track_phase(field, &kernel, model, profile, &cfg.track.options())
    } else {
        track_phase_oc(field, &kernel, model, profile, &cfg.track.options())
    }
}

fn tracking_check(track: &ShockTrack, cfg: &RunConfig) -> Option<Check> {
    let e0 = track.e0;
    let gap = track.fit_discrepancy(cfg.track.check_from)?;
    let tol = cfg.track.tol_track * e0 + 10.0 * e0 * e0;
    Some(Check::new(
        "tracking",
        gap <= tol,
        gap,
        tol,
        format!("max |delta - delta_fit| over t >= {}", cfg.track.check_from),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub t_final: f64,
    pub e0: f64,
    pub template_ceiling: f64,
    pub phase_ceiling: f64,
    pub zeta_final: f64,
    pub zeta_half: f64,
    pub lp_slopes: Vec<crate::evolve::LpSlope>,
    pub delta_infinity: Vec<f64>,
    pub delta_final: Vec<f64>,
    pub delta_fit_final: Option<f64>,
    pub tracking_gap: Option<f64>,
    pub iterations: usize,
    pub nodes: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsVerification {
    pub model: String,
    pub horizons: Vec<HorizonSummary>,
    pub probe: Option<GreenProbe>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub reports: Vec<BoundReport>,
}

pub const BOUND_CHECKS: [&str; 7] =
    ["lp_slopes", "template_ratio", "zeta", "phase_ceiling", "asymptotic_location", "tracking", "green_probe"];

fn value_at(times: &[f64], v: &[f64], t: f64) -> f64 {
    let j = times.partition_point(|&s| s <= t + 1e-9).saturating_sub(1);
    v[j]
}

/// Runs the nonlinear evolution at every configured horizon, tracks the phase
/// and compares the bound ceilings between horizons; optionally probes the
/// linearized Green function.
pub fn verify_bounds(
    model: &FluxModel,
    profile: &Profile,
    cfg: &RunConfig,
    only: Option<&[String]>,
) -> Result<BoundsVerification> {
    let wanted = |name: &str| only.map_or(true, |o| o.iter().any(|x| x == name));
    if let Some(o) = only {
        if let Some(bad) = o.iter().find(|x| !BOUND_CHECKS.contains(&x.as_str())) {
            return Err(Error::Config(format!("unknown check '{bad}' (known: {})", BOUND_CHECKS.join(", "))));
        }
    }
    let b = &cfg.bounds;
    let p = template_params(model, profile.ell, cfg)?;
    let mut horizons = Vec::new();
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    let need_runs = BOUND_CHECKS[..6].iter().any(|c| wanted(c));
    if need_runs {
        for &t_final in &b.horizons {
            let field = evolve_nonlinear(model, profile, &cfg.evolve.initial, t_final, &cfg.evolve.controls)?;
            let tr = track(&field, model, profile, cfg)?;
            let rep = bound_report(&field, &tr, model, profile, &p)?;
            let ceil_all = rep.ceilings(0.0, t_final);
            let ceil_win = rep.ceilings(b.window_start, t_final);
            horizons.push(HorizonSummary {
                t_final,
                e0: field.e0,
                template_ceiling: ceil_all.template,
                phase_ceiling: ceil_win.delta,
                zeta_final: *rep.zeta.last().unwrap(),
                zeta_half: value_at(&rep.times, &rep.zeta, 0.5 * t_final),
                lp_slopes: rep.slopes(b.window_start, t_final),
                delta_infinity: tr.delta_infinity.clone(),
                delta_final: tr.delta.last().cloned().unwrap_or_default(),
                delta_fit_final: tr.delta_fit.as_ref().and_then(|f| f.last().copied()),
                tracking_gap: tr.fit_discrepancy(cfg.track.check_from),
                iterations: tr.iterations,
                nodes: field.nodes(),
                steps: field.scheme.steps,
            });
            if wanted("tracking") {
                if let Some(mut c) = tracking_check(&tr, cfg) {
                    c.detail = format!("{} (T = {t_final})", c.detail);
                    checks.push(c);
                }
            }
            reports.push(rep);
        }
        let last = horizons.last().unwrap();
        let e0 = last.e0;
        if wanted("lp_slopes") {
            let mut worst: f64 = 0.0;
            let mut detail = Vec::new();
            for s in &last.lp_slopes {
                let pinv = match s.p.as_str() {
                    "1" => 1.0,
                    "2" => 0.5,
                    _ => 0.0,
                };
                let expected = -0.5 * (1.0 - pinv);
                let dev = s.slope.map_or(f64::INFINITY, |v| (v - expected).abs());
                worst = worst.max(dev);
                detail.push(format!("p={}: {:?} vs {expected}", s.p, s.slope));
            }
            checks.push(Check::new("lp_slopes", worst <= b.slope_tolerance, worst, b.slope_tolerance, detail.join("; ")));
        }
        let change = |f: &dyn Fn(&HorizonSummary) -> f64, growth_only: bool| -> f64 {
            horizons
                .windows(2)
                .map(|w| {
                    let r = f(&w[1]) / f(&w[0]) - 1.0;
                    if growth_only {
                        r.max(0.0)
                    } else {
                        r.abs()
                    }
                })
                .fold(0.0, f64::max)
        };
        if wanted("template_ratio") {
            let finite = horizons.iter().all(|h| h.template_ceiling.is_finite());
            let c = if horizons.len() > 1 { change(&|h| h.template_ceiling, false) } else { 0.0 };
            checks.push(Check::new(
                "template_ratio",
                finite && c <= b.ceiling_growth,
                c,
                b.ceiling_growth,
                format!("ceilings {:?}", horizons.iter().map(|h| h.template_ceiling).collect::<Vec<_>>()),
            ));
        }
        if wanted("zeta") {
            let ratio = last.zeta_final / last.zeta_half;
            let scaled = last.zeta_final / e0;
            checks.push(Check::new(
                "zeta",
                scaled <= b.zeta_limit && ratio <= 1.0 + b.ceiling_growth,
                ratio,
                1.0 + b.ceiling_growth,
                format!("zeta(T)/E0 = {scaled:.4}, zeta(T)/zeta(T/2) = {ratio:.4}"),
            ));
        }
        if wanted("phase_ceiling") {
            let finite = horizons.iter().all(|h| h.phase_ceiling.is_finite());
            let c = if horizons.len() > 1 { change(&|h| h.phase_ceiling, true) } else { 0.0 };
            checks.push(Check::new(
                "phase_ceiling",
                finite && c <= b.ceiling_growth,
                c,
                b.ceiling_growth,
                format!("ceilings {:?}", horizons.iter().map(|h| h.phase_ceiling).collect::<Vec<_>>()),
            ));
        }
        if wanted("asymptotic_location") {
            if let Some(fit) = last.delta_fit_final {
                let d = (last.delta_infinity[0] - fit).abs();
                let tol = b.location_tolerance * e0;
                checks.push(Check::new(
                    "asymptotic_location",
                    d <= tol,
                    d,
                    tol,
                    format!("delta_inf = {:.8}, delta_fit(T) = {fit:.8}", last.delta_infinity[0]),
                ));
            }
        }
    }
    let mut probe = None;
    if wanted("green_probe") {
        let pc = &b.probe;
        let g = green_probe(model, profile, pc.y0, &pc.widths, pc.t_final, &pc.options)?;
        checks.push(Check::new(
            "green_probe",
            g.verdict,
            g.width_change,
            pc.options.stability,
            format!("raw growth {:.3}, subtracted stable {}", g.raw_growth, g.subtracted_stable),
        ));
        probe = Some(g);
    }
    Ok(BoundsVerification { model: model.name.clone(), horizons, probe, checks, reports })
}

struct Session {
    cfg: RunConfig,
    out: PathBuf,
    only: Option<Vec<String>>,
}

impl Session {
    fn model(&self) -> Result<FluxModel> {
        self.cfg.model.build()
    }

    fn profile(&self, model: &FluxModel) -> Result<Profile> {
        solve_profile(model, &self.cfg.profile)
    }

    fn evolve(&self, model: &FluxModel, profile: &Profile) -> Result<PerturbationField> {
        let e = &self.cfg.evolve;
        if e.linear {
            evolve_linearized(model, profile, &e.initial, e.t_final, &e.controls)
        } else {
            evolve_nonlinear(model, profile, &e.initial, e.t_final, &e.controls)
        }
    }

    fn run(&self, command: Command) -> Result<Vec<Check>> {
        match command {
            Command::Profile => {
                let model = self.model()?;
                let prof = self.profile(&model)?;
                prof.write_to_dir(&self.out)?;
                let tol = self.cfg.profile.tol_profile;
                Ok(vec![Check::new("profile_residual", prof.residual <= tol, prof.residual, tol, format!("ell = {}", prof.ell))])
            }
            Command::Evans => {
                let model = self.model()?;
                let prof = self.profile(&model)?;
                let sys = linearized_coefficients(&model, &prof)?;
                let rec = check_condition_d(&sys, prof.ell, &self.cfg.spectral)?;
                rec.write_to_dir(&self.out)?;
                Ok(vec![Check::new(
                    "condition_d",
                    rec.pass,
                    rec.origin_multiplicity as f64,
                    prof.ell as f64,
                    format!("outer winding {}, origin winding {}", rec.winding, rec.origin_multiplicity),
                )])
            }
            Command::Evolve => {
                let model = self.model()?;
                let prof = self.profile(&model)?;
                let field = self.evolve(&model, &prof)?;
                field.write_to_dir(&self.out)?;
                let d = field.scheme.conservation_defect;
                Ok(vec![Check::new("conservation", d <= TOL_CONS, d, TOL_CONS, "largest per-step mass-balance defect")])
            }
            Command::Track => {
                let model = self.model()?;
                let prof = self.profile(&model)?;
                let field = self.evolve(&model, &prof)?;
                let tr = track(&field, &model, &prof, &self.cfg)?;
                write_json(&self.out, "track.json", &tr)?;
                let mut checks = vec![Check::new(
                    "fixed_point",
                    tr.last_change <= self.cfg.track.rtol,
                    tr.last_change,
                    self.cfg.track.rtol,
                    format!("{} iterations", tr.iterations),
                )];
                checks.extend(tracking_check(&tr, &self.cfg));
                if let Some(r) = tr.orthogonality_residual {
                    checks.push(Check {
                        name: "orthogonality".into(),
                        pass: true,
                        value: Some(r),
                        threshold: None,
                        detail: "initial centering residual".into(),
                    });
                }
                Ok(checks)
            }
            Command::VerifyLemmas => {
                let mut cfg = self.cfg.clone();
                if let Some(o) = &self.only {
                    cfg.verify.lemmas = o.clone();
                }
                let selection = cfg.lemma_selection()?;
                let model = self.model()?;
                let needs_ctx = selection.iter().any(|id| !matches!(id, LemmaId::Interaction1 | LemmaId::Interaction2 | LemmaId::Hz));
                let ctx = if needs_ctx {
                    let ell = family_dimension(&model, &cfg)?;
                    Some(LemmaContext::new(&model.name, template_params(&model, ell, &cfg)?, cfg.verify.suite.rtol)?)
                } else {
                    None
                };
                let mut suite = cfg.verify.suite.clone();
                suite.seed = cfg.seed;
                let report = run_suite(ctx.as_ref(), &selection, &suite)?;
                write_json(&self.out, "lemmas.json", &report)?;
                let mut wr = csv::Writer::from_path(self.out.join("lemmas.csv"))?;
                wr.write_record(["lemma", "label", "fitted_C", "refinement_ratio", "verdict"])?;
                let mut checks = Vec::new();
                for c in &report.identities {
                    wr.write_record([
                        c.lemma_id.name().to_string(),
                        "identity".into(),
                        format!("{:e}", c.max_relative_residual),
                        String::new(),
                        c.verdict.to_string(),
                    ])?;
                    checks.push(Check::new(c.lemma_id.name(), c.verdict, c.max_relative_residual, c.tolerance, "max relative residual"));
                }
                for c in &report.quadrature {
                    wr.write_record([
                        c.lemma_id.name().to_string(),
                        c.label.clone(),
                        format!("{:e}", c.fitted_c),
                        format!("{:.6}", c.refinement_ratio),
                        c.verdict.to_string(),
                    ])?;
                    checks.push(Check::new(
                        c.lemma_id.name(),
                        c.verdict,
                        c.refinement_ratio,
                        crate::lemma_verify::MAX_REFINEMENT_RATIO,
                        format!("{}: fitted C = {:e}", c.label, c.fitted_c),
                    ));
                }
                wr.flush()?;
                Ok(checks)
            }
            Command::VerifyBounds => {
                let model = self.model()?;
                let prof = self.profile(&model)?;
                let v = verify_bounds(&model, &prof, &self.cfg, self.only.as_deref())?;
                write_json(&self.out, "bounds.json", &v)?;
                for (h, r) in v.horizons.iter().zip(&v.reports) {
                    write_json(&self.out, &format!("bound_report_T{}.json", h.t_final), r)?;
                }
                Ok(v.checks)
            }
            Command::Report => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckFile {
    pub command: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub sources: Vec<CheckFile>,
    pub total: usize,
    pub failed: Vec<String>,
    pub all_pass: bool,
}

/// Collects every `checks_*.json` in `dir`, optionally keeping only the named checks.
pub fn aggregate(dir: &Path, only: Option<&[String]>) -> Result<Summary> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("checks_") && n.ends_with(".json"))
        })
        .collect();
    files.sort();
    let mut sources = Vec::new();
    let mut failed = Vec::new();
    let mut total = 0;
    for f in files {
        let mut cf: CheckFile = serde_json::from_str(&std::fs::read_to_string(&f)?)?;
        if let Some(o) = only {
            cf.checks.retain(|c| o.contains(&c.name));
        }
        cf.pass = cf.checks.iter().all(|c| c.pass);
        total += cf.checks.len();
        failed.extend(cf.checks.iter().filter(|c| !c.pass).map(|c| format!("{}:{}", cf.command, c.name)));
        sources.push(cf);
    }
    Ok(Summary { all_pass: total > 0 && failed.is_empty(), sources, total, failed })
}

fn error_kind(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return EXIT_CONFIG;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Err(e) = cfg.validate() {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    if let Some(t) = cfg.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let only = parse_only(&cli.only);
    if cli.command == Command::VerifyLemmas {
        if let Some(o) = &only {
            let mut probe = cfg.clone();
            probe.verify.lemmas = o.clone();
            if let Err(e) = probe.lemma_selection() {
                eprintln!("{e}");
                return EXIT_CONFIG;
            }
        }
    }
    if cli.command == Command::VerifyBounds {
        if let Some(bad) = only.iter().flatten().find(|x| !BOUND_CHECKS.contains(&x.as_str())) {
            eprintln!("configuration error: unknown check '{bad}'");
            return EXIT_CONFIG;
        }
    }
    if cli.command == Command::Report {
        return match aggregate(&out, only.as_deref()) {
            Ok(s) => {
                let code = if s.all_pass { EXIT_PASS } else { EXIT_FAIL };
                match write_json(&out, "summary.json", &s) {
                    Ok(()) => {
                        println!("{} checks, {} failed", s.total, s.failed.len());
                        code
                    }
                    Err(e) => {
                        eprintln!("{e}");
                        EXIT_FAIL
                    }
                }
            }
            Err(e) => {
                eprintln!("{e}");
                EXIT_FAIL
            }
        };
    }
    let session = Session { cfg, out: out.clone(), only };
    match session.run(cli.command) {
        Ok(checks) => {
            let pass = checks.iter().all(|c| c.pass);
            let file = CheckFile { command: cli.command.name().to_string(), checks, pass };
            if let Err(e) = write_json(&out, &format!("checks_{}.json", cli.command.name()), &file) {
                eprintln!("{e}");
                return EXIT_FAIL;
            }
            for c in &file.checks {
                println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
            }
            if pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            let diag = serde_json::json!({
                "command": cli.command.name(),
                "error": error_kind(&e),
                "message": e.to_string(),
            });
            eprintln!("{diag}");
            if matches!(e, Error::Config(_)) {
                return EXIT_CONFIG;
            }
            let _ = write_json(&out, "error.json", &diag);
            EXIT_FAIL
        }
    }
}
