//! TOML experiment configuration with a strict schema.
//!
//! Parsing walks the whole document and collects every violation (unknown
//! keys, wrong types, out-of-range values) before failing.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chaosjump::chaos::ExperimentSettings;
use chaosjump::model::regime::build_tanh_regime;
use chaosjump::model::validate::GrowthForm;
use chaosjump::model::{
    build_independent_ou, build_systemic_risk, CoefficientSet, DeclaredConstants, Dims, InitialLaw, RegimeModel,
    RegimeSpec, SystemicRiskParams,
};
use chaosjump::noise::{parse_seed, SeedSpec};
use chaosjump::wasserstein::DEFAULT_EXACT_CAP;
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "{e}"),
            ConfigError::Invalid(v) => {
                writeln!(f, "{} configuration violation(s):", v.len())?;
                for e in v {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn violations(&self) -> &[String] {
        match self {
            ConfigError::Io(_) => &[],
            ConfigError::Invalid(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Zero,
    SystemicRisk,
    IndependentOu,
    RegimeSwitching,
}

impl ModelKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zero" => ModelKind::Zero,
            "systemic_risk" => ModelKind::SystemicRisk,
            "independent_ou" => ModelKind::IndependentOu,
            "regime_switching" => ModelKind::RegimeSwitching,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub name: ModelKind,
    pub dim: usize,
    pub mean_reversion: f64,
    pub vol: f64,
    pub jump_scale: f64,
    pub base_intensity: f64,
    pub variance_sensitivity: f64,
    pub intensity_bound: f64,
    pub initial_mean: f64,
    pub initial_std: f64,
    pub states: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
    pub kappa: f64,
    pub initial_regime: usize,
    pub declared_k: Option<f64>,
    pub declared_k0: Option<f64>,
    pub declared_beta: Option<f64>,
    pub declared_gamma_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub noise_dt: Option<f64>,
    pub n: usize,
    pub n_grid: Vec<usize>,
    #[serde(rename = "N_ref")]
    pub n_ref: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    pub coupled: Option<usize>,
    pub proxy_sensitivity: bool,
    pub exact_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub trajectories: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateSection {
    pub samples: usize,
    pub growth_form: GrowthForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeSection {
    pub k: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub sim: SimSection,
    pub seeds: SeedSpec,
    pub output: OutputSection,
    pub validate: ValidateSection,
    pub envelope: EnvelopeSection,
}

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    used: BTreeSet<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errs: &mut Vec<String>) -> Self {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(v) => {
                errs.push(format!("{name}: expected a table, got {}", v.type_str()));
                None
            }
        };
        Section { name, table, used: BTreeSet::new() }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.used.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn float(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            v => {
                errs.push(format!("{}: expected a number, got {}", self.path(key), v.type_str()));
                None
            }
        }
    }

    fn count(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<usize> {
        match self.raw(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            Value::Integer(i) => {
                errs.push(format!("{}: must be nonnegative (got {i})", self.path(key)));
                None
            }
            v => {
                errs.push(format!("{}: expected an integer, got {}", self.path(key), v.type_str()));
                None
            }
        }
    }

    fn boolean(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<bool> {
        match self.raw(key)? {
            Value::Boolean(b) => Some(*b),
            v => {
                errs.push(format!("{}: expected a boolean, got {}", self.path(key), v.type_str()));
                None
            }
        }
    }

    fn string(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<&'a str> {
        match self.raw(key)? {
            Value::String(s) => Some(s),
            v => {
                errs.push(format!("{}: expected a string, got {}", self.path(key), v.type_str()));
                None
            }
        }
    }

    fn seed(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<u64> {
        match self.raw(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::String(s) => match parse_seed(s) {
                Ok(v) => Some(v),
                Err(_) => {
                    errs.push(format!("{}: `{s}` is not a decimal or 0x-hex 64-bit seed", self.path(key)));
                    None
                }
            },
            v => {
                errs.push(format!(
                    "{}: expected a nonnegative integer or a seed string, got {}",
                    self.path(key),
                    v.type_str()
                ));
                None
            }
        }
    }

    fn floats(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<Vec<f64>> {
        let path = self.path(key);
        match self.raw(key)? {
            Value::Array(a) => collect_array(a, &path, errs, |v| match v {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            }),
            v => {
                errs.push(format!("{path}: expected an array of numbers, got {}", v.type_str()));
                None
            }
        }
    }

    fn counts(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<Vec<usize>> {
        let path = self.path(key);
        match self.raw(key)? {
            Value::Array(a) => collect_array(a, &path, errs, |v| match v {
                Value::Integer(i) if *i >= 0 => Some(*i as usize),
                _ => None,
            }),
            v => {
                errs.push(format!("{path}: expected an array of integers, got {}", v.type_str()));
                None
            }
        }
    }

    fn matrix(&mut self, key: &'static str, errs: &mut Vec<String>) -> Option<Vec<Vec<f64>>> {
        let path = self.path(key);
        let bad = |errs: &mut Vec<String>, got: &str| {
            errs.push(format!("{path}: expected an array of arrays of numbers, got {got}"));
            None
        };
        match self.raw(key)? {
            Value::Array(rows) => {
                let mut out = Vec::with_capacity(rows.len());
                for row in rows {
                    let Value::Array(r) = row else { return bad(errs, row.type_str()) };
                    let parsed: Option<Vec<f64>> = r
                        .iter()
                        .map(|v| match v {
                            Value::Float(f) => Some(*f),
                            Value::Integer(i) => Some(*i as f64),
                            _ => None,
                        })
                        .collect();
                    match parsed {
                        Some(p) => out.push(p),
                        None => return bad(errs, "a non-numeric entry"),
                    }
                }
                Some(out)
            }
            v => bad(errs, v.type_str()),
        }
    }

    fn finish(self, errs: &mut Vec<String>) {
        if let Some(t) = self.table {
            for k in t.keys() {
                if !self.used.contains(k.as_str()) {
                    errs.push(format!("{}.{k}: unknown key", self.name));
                }
            }
        }
    }
}

fn collect_array<T>(
    a: &[Value],
    path: &str,
    errs: &mut Vec<String>,
    f: impl Fn(&Value) -> Option<T>,
) -> Option<Vec<T>> {
    let out: Option<Vec<T>> = a.iter().map(f).collect();
    if out.is_none() {
        errs.push(format!("{path}: array contains an entry of the wrong type"));
    }
    out
}

fn require(errs: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        errs.push(msg());
    }
}

const SECTIONS: [&str; 6] = ["model", "sim", "seeds", "output", "validate", "envelope"];

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Invalid(vec![format!("syntax: {e}")]))?;
    let mut errs = Vec::new();
    for k in root.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            errs.push(format!("{k}: unknown section"));
        }
    }

    // [model]
    let mut m = Section::new(&root, "model", &mut errs);
    let name = match m.string("name", &mut errs) {
        Some(s) => ModelKind::parse(s).or_else(|| {
            errs.push(format!(
                "model.name: unknown model `{s}` (expected zero, systemic_risk, independent_ou or regime_switching)"
            ));
            None
        }),
        None => {
            if m.table.is_some_and(|t| !t.contains_key("name")) || m.table.is_none() {
                errs.push("model.name: required".into());
            }
            None
        }
    };
    let defaults = SystemicRiskParams::default();
    let mut model = ModelConfig {
        name: name.unwrap_or(ModelKind::Zero),
        dim: m.count("dim", &mut errs).unwrap_or(1),
        mean_reversion: m.float("mean_reversion", &mut errs).unwrap_or(defaults.mean_reversion),
        vol: m.float("vol", &mut errs).unwrap_or(defaults.vol),
        jump_scale: m.float("jump_scale", &mut errs).unwrap_or(defaults.jump_scale),
        base_intensity: m.float("base_intensity", &mut errs).unwrap_or(defaults.base_intensity),
        variance_sensitivity: m.float("variance_sensitivity", &mut errs).unwrap_or(defaults.variance_sensitivity),
        intensity_bound: m.float("intensity_bound", &mut errs).unwrap_or(4.0),
        initial_mean: m.float("initial_mean", &mut errs).unwrap_or(0.0),
        initial_std: m.float("initial_std", &mut errs).unwrap_or(1.0),
        states: m.floats("states", &mut errs).unwrap_or_else(|| vec![-1.0, 1.0]),
        rates: m.matrix("rates", &mut errs).unwrap_or_else(|| vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
        kappa: m.float("kappa", &mut errs).unwrap_or(0.0),
        initial_regime: m.count("initial_regime", &mut errs).unwrap_or(0),
        declared_k: m.float("declared_k", &mut errs),
        declared_k0: m.float("declared_k0", &mut errs),
        declared_beta: m.float("declared_beta", &mut errs),
        declared_gamma_star: m.float("declared_gamma_star", &mut errs),
    };
    m.finish(&mut errs);
    check_model(&mut model, &mut errs);

    // [sim]
    let mut s = Section::new(&root, "sim", &mut errs);
    let horizon = s.float("T", &mut errs);
    if s.table.is_none_or(|t| !t.contains_key("T")) {
        errs.push("sim.T: required".into());
    }
    let horizon = horizon.unwrap_or(1.0);
    let sim = SimSection {
        horizon,
        dt: s.float("dt", &mut errs).unwrap_or(horizon / 1000.0),
        noise_dt: s.float("noise_dt", &mut errs),
        n: s.count("n", &mut errs).unwrap_or(16),
        n_grid: s.counts("n_grid", &mut errs).unwrap_or_else(|| vec![8, 16, 32, 64, 128]),
        n_ref: s.count("N_ref", &mut errs).unwrap_or(2048),
        replications: s.count("R", &mut errs).unwrap_or(64),
        coupled: s.count("coupled", &mut errs),
        proxy_sensitivity: s.boolean("proxy_sensitivity", &mut errs).unwrap_or(false),
        exact_cap: s.count("exact_cap", &mut errs).unwrap_or(DEFAULT_EXACT_CAP),
    };
    s.finish(&mut errs);
    check_sim(&sim, &mut errs);

    // [seeds]
    let mut sd = Section::new(&root, "seeds", &mut errs);
    let seeds = SeedSpec::new(
        sd.seed("common", &mut errs).unwrap_or(1),
        sd.seed("idiosyncratic", &mut errs).unwrap_or(2),
    );
    sd.finish(&mut errs);

    // [output]
    let mut o = Section::new(&root, "output", &mut errs);
    let output = OutputSection {
        dir: PathBuf::from(o.string("dir", &mut errs).unwrap_or("out")),
        trajectories: o.boolean("trajectories", &mut errs).unwrap_or(true),
    };
    o.finish(&mut errs);

    // [validate]
    let mut v = Section::new(&root, "validate", &mut errs);
    let samples = v.count("samples", &mut errs).unwrap_or(10_000);
    require(&mut errs, samples >= 2, || format!("validate.samples: must be at least 2 (got {samples})"));
    let form = v.string("growth_form", &mut errs).unwrap_or("affine");
    let offset = v.float("growth_offset", &mut errs).unwrap_or(1.0);
    let growth_form = match form {
        "strict" => GrowthForm::Strict,
        "affine" => GrowthForm::Affine { c: offset },
        other => {
            errs.push(format!("validate.growth_form: expected `strict` or `affine`, got `{other}`"));
            GrowthForm::default()
        }
    };
    require(&mut errs, offset.is_finite() && offset >= 0.0, || {
        format!("validate.growth_offset: must be finite and nonnegative (got {offset})")
    });
    v.finish(&mut errs);

    // [envelope]
    let mut e = Section::new(&root, "envelope", &mut errs);
    let envelope = EnvelopeSection {
        k: e.float("k", &mut errs).unwrap_or(50.0),
        eps: e.float("eps", &mut errs).unwrap_or(1e-6),
    };
    require(&mut errs, envelope.k.is_finite() && envelope.k >= 0.0, || {
        format!("envelope.k: must be finite and nonnegative (got {})", envelope.k)
    });
    require(&mut errs, envelope.eps.is_finite() && envelope.eps > 0.0, || {
        format!("envelope.eps: must be positive (got {})", envelope.eps)
    });
    e.finish(&mut errs);

    if errs.is_empty() {
        Ok(ExperimentConfig {
            model,
            sim,
            seeds,
            output,
            validate: ValidateSection { samples, growth_form },
            envelope,
        })
    } else {
        Err(ConfigError::Invalid(errs))
    }
}

fn check_model(m: &mut ModelConfig, errs: &mut Vec<String>) {
    require(errs, m.dim >= 1, || "model.dim: must be at least 1".into());
    for (key, v) in [
        ("mean_reversion", m.mean_reversion),
        ("vol", m.vol),
        ("base_intensity", m.base_intensity),
        ("variance_sensitivity", m.variance_sensitivity),
        ("initial_std", m.initial_std),
        ("kappa", m.kappa),
    ] {
        require(errs, v.is_finite() && v >= 0.0, || format!("model.{key}: must be finite and nonnegative (got {v})"));
    }
    require(errs, m.jump_scale.is_finite(), || "model.jump_scale: must be finite".into());
    require(errs, m.initial_mean.is_finite(), || "model.initial_mean: must be finite".into());
    require(errs, m.intensity_bound.is_finite() && m.intensity_bound > 0.0, || {
        format!("model.intensity_bound: must be positive (got {})", m.intensity_bound)
    });
    for (key, v) in [
        ("declared_k", m.declared_k),
        ("declared_k0", m.declared_k0),
        ("declared_beta", m.declared_beta),
        ("declared_gamma_star", m.declared_gamma_star),
    ] {
        if let Some(v) = v {
            require(errs, v.is_finite() && v >= 0.0, || format!("model.{key}: must be finite and nonnegative (got {v})"));
        }
    }
    if m.name == ModelKind::RegimeSwitching {
        let n = m.states.len();
        require(errs, n >= 1, || "model.states: must be non-empty".into());
        require(errs, m.states.windows(2).all(|w| w[1] > w[0]), || {
            "model.states: must be strictly increasing".into()
        });
        require(errs, m.rates.len() == n && m.rates.iter().all(|r| r.len() == n), || {
            format!("model.rates: must be a {n} x {n} matrix")
        });
        require(errs, m.rates.iter().flatten().all(|v| v.is_finite() && *v >= 0.0), || {
            "model.rates: entries must be finite and nonnegative".into()
        });
        require(errs, m.initial_regime < n.max(1), || {
            format!("model.initial_regime: must be below the number of states ({n})")
        });
    }
}

fn check_sim(s: &SimSection, errs: &mut Vec<String>) {
    require(errs, s.horizon.is_finite() && s.horizon > 0.0, || format!("sim.T: must be positive (got {})", s.horizon));
    require(errs, s.dt.is_finite() && s.dt > 0.0, || format!("sim.dt: must be positive (got {})", s.dt));
    require(errs, !(s.dt > s.horizon), || format!("sim.dt: must not exceed T (got {} > {})", s.dt, s.horizon));
    if let Some(c) = s.noise_dt {
        require(errs, c.is_finite() && c > 0.0 && c <= s.horizon, || {
            format!("sim.noise_dt: must satisfy 0 < noise_dt <= T (got {c})")
        });
    }
    require(errs, s.n >= 1, || "sim.n: must be at least 1".into());
    require(errs, s.replications >= 1, || "sim.R: must be at least 1".into());
    require(errs, s.n_ref >= s.n, || format!("sim.N_ref: must be at least n = {} (got {})", s.n, s.n_ref));
    require(errs, !s.n_grid.is_empty() && !s.n_grid.contains(&0), || {
        "sim.n_grid: must be non-empty with positive entries".into()
    });
    require(errs, s.n_grid.windows(2).all(|w| w[1] > w[0]), || "sim.n_grid: must be strictly increasing".into());
    if let Some(max) = s.n_grid.last() {
        require(errs, max * 4 <= s.n_ref, || {
            format!("sim.n_grid: largest entry {max} exceeds N_ref / 4 = {}", s.n_ref / 4)
        });
    }
    if let Some(c) = s.coupled {
        require(errs, c >= 1 && c <= s.n, || format!("sim.coupled: must satisfy 1 <= coupled <= n (got {c})"));
    }
    require(errs, s.exact_cap >= 1, || "sim.exact_cap: must be at least 1".into());
}

impl ExperimentConfig {
    pub fn initial_law(&self) -> InitialLaw {
        InitialLaw::Gaussian { mean: vec![self.model.initial_mean; self.model.dim], std: self.model.initial_std }
    }

    fn declared(&self, auto: DeclaredConstants) -> DeclaredConstants {
        let m = &self.model;
        DeclaredConstants {
            lipschitz_state: m.declared_k.unwrap_or(auto.lipschitz_state),
            lipschitz_measure: m.declared_k0.unwrap_or(auto.lipschitz_measure),
            growth: m.declared_beta.unwrap_or(auto.growth),
            fourth_moment: m.declared_gamma_star.unwrap_or(auto.fourth_moment),
        }
    }

    /// Coefficient set of a jump-diffusion model (`None` for regime switching).
    pub fn coefficients(&self) -> chaosjump::Result<Option<CoefficientSet>> {
        let m = &self.model;
        let set = match m.name {
            ModelKind::Zero => CoefficientSet::zero(Dims { d: m.dim, k: m.dim, l: 1 }, self.initial_law())?,
            ModelKind::SystemicRisk => build_systemic_risk(
                SystemicRiskParams {
                    mean_reversion: m.mean_reversion,
                    vol: m.vol,
                    jump_scale: m.jump_scale,
                    base_intensity: m.base_intensity,
                    variance_sensitivity: m.variance_sensitivity,
                    dim: m.dim,
                },
                m.intensity_bound,
                self.initial_law(),
            )?,
            ModelKind::IndependentOu => build_independent_ou(m.mean_reversion, m.vol, m.dim, self.initial_law())?,
            ModelKind::RegimeSwitching => return Ok(None),
        };
        let declared = self.declared(set.constants);
        Ok(Some(set.with_constants(declared)))
    }

    pub fn regime_model(&self) -> chaosjump::Result<Option<RegimeModel>> {
        let m = &self.model;
        if m.name != ModelKind::RegimeSwitching {
            return Ok(None);
        }
        let spec = RegimeSpec::constant(m.states.clone(), m.rates.clone())?;
        let mut model = build_tanh_regime(spec, m.dim, m.kappa, m.vol, self.initial_law())?;
        model.initial_regime = m.initial_regime;
        model.constants = self.declared(model.constants);
        Ok(Some(model))
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            horizon: self.sim.horizon,
            dt: self.sim.dt,
            noise_dt: self.sim.noise_dt,
            seeds: self.seeds,
            n_ref: self.sim.n_ref,
            replications: self.sim.replications,
            coupled: self.sim.coupled,
            proxy_sensitivity: self.sim.proxy_sensitivity,
            exact_cap: self.sim.exact_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[model]\nname = \"zero\"\n[sim]\nT = 2.0\n").unwrap();
        assert_eq!(c.sim.dt, 2.0 / 1000.0);
        assert_eq!(c.sim.n_ref, 2048);
        assert_eq!(c.sim.replications, 64);
        assert_eq!(c.seeds, SeedSpec::new(1, 2));
    }

    #[test]
    fn every_violation_is_reported() {
        let e = parse_config_str("[model]\nname = \"zero\"\nvol = -1\n[sim]\nT = 1.0\ndt = 0\nfoo = 3\nn = \"x\"\n")
            .unwrap_err();
        let v = e.violations();
        assert!(v.iter().any(|s| s.starts_with("sim.dt")), "{v:?}");
        assert!(v.iter().any(|s| s.starts_with("sim.foo")), "{v:?}");
        assert!(v.iter().any(|s| s.starts_with("sim.n:")), "{v:?}");
        assert!(v.iter().any(|s| s.starts_with("model.vol")), "{v:?}");
    }

    #[test]
    fn hex_seed_strings() {
        let c = parse_config_str("[model]\nname = \"zero\"\n[sim]\nT = 1.0\n[seeds]\ncommon = \"0xff\"\nidiosyncratic = 7\n")
            .unwrap();
        assert_eq!(c.seeds, SeedSpec::new(255, 7));
    }
}
