//! Run configuration read from TOML. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{EvolveControls, InitialData, ProbeOptions, TrackOptions};
use crate::lemma_verify::{LemmaId, SuiteOptions};
use crate::model::{registry, FluxModel, ModelSpec};
use crate::profile::ProfileOptions;
use crate::spectral::SpectralOptions;
use crate::templates::{TemplateParams, WeightProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Named(String),
    Inline(ModelSpec),
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice::Named("burgers".into())
    }
}

impl ModelChoice {
    pub fn build(&self) -> Result<FluxModel> {
        match self {
            ModelChoice::Named(name) => registry(name),
            ModelChoice::Inline(spec) => spec.build(),
        }
    }
}

/// Overrides for the template constants; unset entries come from the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemplateOverrides {
    pub ell: Option<usize>,
    pub eta: Option<f64>,
    pub l: Option<f64>,
    pub m: Option<f64>,
    pub c: Option<f64>,
    /// Amplitude of the `1 + amp e^{-eta|y|}` weight profile.
    pub weight_bump: Option<f64>,
}

impl TemplateOverrides {
    pub fn apply(&self, mut p: TemplateParams) -> TemplateParams {
        if let Some(v) = self.l {
            p.l = v;
        }
        if let Some(v) = self.m {
            p.m = v;
        }
        if let Some(v) = self.c {
            p.c = v;
        }
        if let Some(amp) = self.weight_bump {
            p.weight_profile = WeightProfile::ExpBump { amp };
        }
        p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    pub t_final: f64,
    pub initial: InitialData,
    /// Evolve the linearization instead of the nonlinear system.
    pub linear: bool,
    pub controls: EvolveControls,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_final: 100.0,
            initial: InitialData::Algebraic { e0: 0.01, direction: None },
            linear: false,
            controls: EvolveControls::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub rtol: f64,
    pub max_iterations: usize,
    pub orthogonality_rtol: f64,
    /// Functional and fitted shifts are compared on `t >= check_from`.
    pub check_from: f64,
    /// Agreement tolerance in units of `E_0`.
    pub tol_track: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        let o = TrackOptions::default();
        Self {
            rtol: o.rtol,
            max_iterations: o.max_iterations,
            orthogonality_rtol: o.orthogonality_rtol,
            check_from: 1.0,
            tol_track: crate::evolve::TOL_TRACK,
        }
    }
}

impl TrackConfig {
    pub fn options(&self) -> TrackOptions {
        TrackOptions { rtol: self.rtol, max_iterations: self.max_iterations, orthogonality_rtol: self.orthogonality_rtol }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Lemma ids or the groups `identities`, `linear`, `nonlinear`, `auxiliary`.
    pub lemmas: Vec<String>,
    pub suite: SuiteOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            lemmas: vec!["identities".into(), "hz".into(), "linear".into(), "nonlinear".into()],
            suite: SuiteOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub y0: f64,
    pub widths: Vec<f64>,
    pub t_final: f64,
    pub options: ProbeOptions,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { y0: -5.0, widths: vec![0.4, 0.2, 0.1], t_final: 30.0, options: ProbeOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// Increasing horizons; ceilings are compared between consecutive entries.
    pub horizons: Vec<f64>,
    /// Start of the window for slopes and the phase ratio.
    pub window_start: f64,
    pub slope_tolerance: f64,
    /// Allowed relative ceiling growth between horizons.
    pub ceiling_growth: f64,
    /// `|delta_inf - delta_fit(T)|` tolerance in units of `E_0`.
    pub location_tolerance: f64,
    /// Upper limit for `zeta(T) / E_0`.
    pub zeta_limit: f64,
    pub probe: ProbeConfig,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            horizons: vec![500.0, 1000.0],
            window_start: 10.0,
            slope_tolerance: 0.1,
            ceiling_growth: 0.1,
            location_tolerance: 0.05,
            zeta_limit: 50.0,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub profile: ProfileOptions,
    pub spectral: SpectralOptions,
    pub templates: TemplateOverrides,
    pub evolve: EvolveConfig,
    pub track: TrackConfig,
    pub verify: VerifyConfig,
    pub bounds: BoundsConfig,
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(what.to_string()))
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn lemma_selection(&self) -> Result<Vec<LemmaId>> {
        let mut out = Vec::new();
        for item in &self.verify.lemmas {
            for id in LemmaId::parse_selection(item).map_err(|e| Error::Config(e.to_string()))? {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelChoice::Named(name) = &self.model {
            registry(name).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(t) = self.threads {
            check(t >= 1, "threads must be at least 1")?;
        }
        let p = &self.profile;
        check(p.nodes >= 101, "profile.nodes must be at least 101")?;
        check(positive(p.tail_target) && p.tail_target < 1e-2, "profile.tail_target must lie in (0, 1e-2)")?;
        check(positive(p.tol_profile) && positive(p.tol_tail), "profile tolerances must be positive")?;
        check(p.max_newton >= 1, "profile.max_newton must be at least 1")?;
        if let Some(x) = p.x_inf {
            check(positive(x), "profile.x_inf must be positive")?;
        }
        let s = &self.spectral;
        check(positive(s.indent), "spectral.indent must be positive")?;
        if let Some(r) = s.radius {
            check(positive(r) && r > s.indent, "spectral.radius must exceed spectral.indent")?;
        }
        check(positive(s.evans.rtol) && positive(s.evans.atol), "spectral.evans tolerances must be positive")?;
        let t = &self.templates;
        for (v, name) in [(t.eta, "eta"), (t.l, "l"), (t.m, "m"), (t.c, "c")] {
            if let Some(v) = v {
                check(positive(v), &format!("templates.{name} must be positive"))?;
            }
        }
        if let Some(ell) = t.ell {
            check(ell >= 1, "templates.ell must be at least 1")?;
        }
        if let Some(a) = t.weight_bump {
            check(a.is_finite() && a >= 0.0, "templates.weight_bump must be nonnegative")?;
        }
        let e = &self.evolve;
        check(positive(e.t_final), "evolve.t_final must be positive")?;
        e.controls.validate()?;
        if let InitialData::Algebraic { e0, .. } | InitialData::TranslationMode { e0 } = e.initial {
            check(e0.is_finite(), "evolve.initial.e0 must be finite")?;
            if !e.linear {
                check(e0.abs() <= e.controls.e0_cap, "evolve.initial.e0 exceeds evolve.controls.e0_cap")?;
            }
        }
        let tr = &self.track;
        check(positive(tr.rtol) && tr.max_iterations >= 1, "track.rtol and track.max_iterations must be positive")?;
        check(positive(tr.orthogonality_rtol) && positive(tr.tol_track), "track tolerances must be positive")?;
        check(tr.check_from.is_finite() && tr.check_from >= 0.0, "track.check_from must be nonnegative")?;
        self.lemma_selection()?;
        let q = &self.verify.suite;
        check(positive(q.rtol) && q.draws >= 1, "verify.suite.rtol and draws must be positive")?;
        let b = &self.bounds;
        check(!b.horizons.is_empty(), "bounds.horizons must not be empty")?;
        check(
            b.horizons.iter().all(|&h| positive(h)) && b.horizons.windows(2).all(|w| w[0] < w[1]),
            "bounds.horizons must be positive and increasing",
        )?;
        check(b.window_start >= 0.0 && b.window_start < b.horizons[0], "bounds.window_start must precede the first horizon")?;
        for (v, name) in [
            (b.slope_tolerance, "slope_tolerance"),
            (b.ceiling_growth, "ceiling_growth"),
            (b.location_tolerance, "location_tolerance"),
            (b.zeta_limit, "zeta_limit"),
        ] {
            check(positive(v), &format!("bounds.{name} must be positive"))?;
        }
        let pr = &b.probe;
        check(positive(pr.t_final), "bounds.probe.t_final must be positive")?;
        check(!pr.widths.is_empty() && pr.widths.iter().all(|&w| positive(w)), "bounds.probe.widths must be positive")?;
        pr.options.controls.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.model, ModelChoice::Named("burgers".into()));
        assert_eq!(c.bounds.horizons, vec![500.0, 1000.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("modle = \"burgers\""), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[evolve]\nt_final = 5\nfoo = 1").is_err());
        assert!(RunConfig::from_toml("[evolve.controls]\ndx = 0.1\nbar = 2").is_err());
    }

    #[test]
    fn ranges_are_checked() {
        assert!(RunConfig::from_toml("[evolve]\nt_final = -1").is_err());
        assert!(RunConfig::from_toml("model = \"nope\"").is_err());
        assert!(RunConfig::from_toml("[verify]\nlemmas = [\"Z9\"]").is_err());
        assert!(RunConfig::from_toml("[bounds]\nhorizons = [10, 5]").is_err());
        assert!(RunConfig::from_toml("[evolve.initial]\nshape = \"algebraic\"\ne0 = 0.5").is_err());
    }

    #[test]
    fn inline_model_parses() {
        let text = r#"
            [model]
            name = "my_burgers"
            u_minus = [1.0]
            u_plus = [-1.0]
            flux = [[{ coef = 0.5, powers = [2] }]]
            viscosity = [[1.0]]
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        let m = c.model.build().unwrap();
        assert_eq!(m.dim(), 1);
    }
}
