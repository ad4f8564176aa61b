//! Flat, sectioned key-value experiment configuration with explicit types.
//!
//! ```text
//! [experiment]
//! id = heatwave_demo
//! seed = 42
//!
//! [model]
//! kind = heatwave        # heatwave | stokes_lame
//! n_f = 60
//! n_s = 60
//! kappa = 1.0
//! c2 = 1.0
//! horizon = 1.0
//! initial = smooth       # smooth | random_energy_unit | delta_like | smoothed_random
//!
//! [sim]
//! dt = 0.0025
//! theta = 0.5
//!
//! [cost]
//! control_weight = 1.0
//!
//! [dre]
//! dt = 0.01
//! store_every = 1
//!
//! [oracle]
//! tol = 1e-9
//!
//! [studies]
//! run = dre,synthesize,oracle_compare,singular_fit,lp_stability,gain_refinement,ut_window,plots
//!
//! [singular_fit]
//! ensemble = 32
//! samples = 120
//! window_factor = 10.0   # window start = factor * h^2
//! window_fraction = 0.5  # window end = fraction * horizon
//!
//! [lp_stability]
//! p_list = 2,4,8
//! levels = 32,64,128
//!
//! [gain_refinement]
//! levels = 16,32,64
//! epsilon = 0.15
//! dre_dt = 0.01
//!
//! [ut_window]
//! theta = 0.1
//! q = 1.1
//! levels = 64,128
//! ensemble = 8
//! ```
//!
//! Unknown keys are rejected, and validation reports every offending field.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::heatwave::InitialKind;
use crate::state_space::Stepper;
use crate::stokes_lame::MaterialParams;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    HeatWave {
        n_f: usize,
        n_s: usize,
        kappa: f64,
        c2: f64,
        horizon: f64,
    },
    StokesLame {
        resolution: usize,
        params: MaterialParams,
        horizon: f64,
    },
}

impl ModelConfig {
    pub fn horizon(&self) -> f64 {
        match *self {
            ModelConfig::HeatWave { horizon, .. } => horizon,
            ModelConfig::StokesLame { horizon, .. } => horizon,
        }
    }
}

/// Which initial state the synthesis stages use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialChoice {
    Model(InitialKind),
    /// Random state smoothed by one full fractional order.
    SmoothedRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StudyKind {
    BuildModel,
    Dre,
    Synthesize,
    OracleCompare,
    SingularFit,
    LpStability,
    GainRefinement,
    UtWindow,
    Plots,
}

impl FromStr for StudyKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "build_model" | "build-model" => Ok(StudyKind::BuildModel),
            "dre" => Ok(StudyKind::Dre),
            "synthesize" => Ok(StudyKind::Synthesize),
            "oracle_compare" | "oracle-compare" => Ok(StudyKind::OracleCompare),
            "singular_fit" => Ok(StudyKind::SingularFit),
            "lp_stability" => Ok(StudyKind::LpStability),
            "gain_refinement" => Ok(StudyKind::GainRefinement),
            "ut_window" => Ok(StudyKind::UtWindow),
            "plots" => Ok(StudyKind::Plots),
            other => Err(format!("unknown study `{other}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingularFitConfig {
    pub ensemble: usize,
    pub samples: usize,
    pub window_factor: f64,
    pub window_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct LpStabilityConfig {
    pub p_list: Vec<f64>,
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GainConfig {
    pub levels: Vec<usize>,
    pub epsilon: f64,
    pub dre_dt: f64,
}

#[derive(Debug, Clone)]
pub struct UtConfig {
    pub theta: f64,
    pub q: f64,
    pub levels: Vec<usize>,
    pub ensemble: usize,
}

/// Fully-typed experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub initial: InitialChoice,
    pub sim: Stepper,
    pub control_weight: f64,
    pub dre_dt: f64,
    pub dre_store_every: usize,
    pub oracle_tol: f64,
    pub studies: Vec<StudyKind>,
    pub singular: SingularFitConfig,
    pub lp: LpStabilityConfig,
    pub gain: GainConfig,
    pub ut: UtConfig,
    /// Normalized `section.key -> value` map echoed into reports.
    pub echo: BTreeMap<String, String>,
}

struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        let mut issues = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    issues.push(format!("line {line_no}: malformed section `{line}`"));
                    continue;
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some(eq) = line.find('=') else {
                issues.push(format!("line {line_no}: expected `key = value`, got `{line}`"));
                continue;
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if section.is_empty() {
                issues.push(format!("line {line_no}: key `{key}` outside any section"));
                continue;
            }
            if key.is_empty() || value.is_empty() {
                issues.push(format!("line {line_no}: empty key or value"));
                continue;
            }
            let full = format!("{section}.{key}");
            if entries.insert(full.clone(), value.to_string()).is_some() {
                issues.push(format!("line {line_no}: duplicate key `{full}`"));
            }
        }
        if issues.is_empty() {
            Ok(RawConfig { entries })
        } else {
            Err(Error::InvalidConfig { issues })
        }
    }
}

struct Reader<'a> {
    raw: &'a RawConfig,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
    issues: std::cell::RefCell<Vec<String>>,
}

impl<'a> Reader<'a> {
    fn get(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().insert(key.to_string());
        self.raw.entries.get(key).map(|s| s.as_str())
    }

    fn issue(&self, msg: String) {
        self.issues.borrow_mut().push(msg);
    }

    fn required<T: FromStr>(&self, key: &str, what: &str) -> Option<T> {
        match self.get(key) {
            None => {
                self.issue(format!("missing required key `{key}` ({what})"));
                None
            }
            Some(s) => match s.parse() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.issue(format!("key `{key}`: cannot parse `{s}` as {what}"));
                    None
                }
            },
        }
    }

    fn optional<T: FromStr>(&self, key: &str, default: T, what: &str) -> T {
        match self.get(key) {
            None => default,
            Some(s) => match s.parse() {
                Ok(v) => v,
                Err(_) => {
                    self.issue(format!("key `{key}`: cannot parse `{s}` as {what}"));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>, what: &str) -> Vec<T> {
        match self.get(key) {
            None => default,
            Some(s) => {
                let mut out = Vec::new();
                for item in s.split(',') {
                    match item.trim().parse() {
                        Ok(v) => out.push(v),
                        Err(_) => {
                            self.issue(format!(
                                "key `{key}`: cannot parse `{}` as {what}",
                                item.trim()
                            ));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Parses and validates a configuration; every offending field is reported.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw = RawConfig::parse(text)?;
    let reader = Reader {
        raw: &raw,
        used: Default::default(),
        issues: Default::default(),
    };
    let r = &reader;

    let id: String = r
        .required::<String>("experiment.id", "string")
        .unwrap_or_else(|| "unnamed".into());
    let seed = r.required::<u64>("experiment.seed", "unsigned integer");

    let kind: String = r
        .required::<String>("model.kind", "heatwave | stokes_lame")
        .unwrap_or_default();
    let horizon = r.optional("model.horizon", 1.0, "positive real");
    let model = match kind.as_str() {
        "heatwave" => Some(ModelConfig::HeatWave {
            n_f: r.optional("model.n_f", 60, "integer >= 2"),
            n_s: r.optional("model.n_s", 60, "integer >= 2"),
            kappa: r.optional("model.kappa", 1.0, "positive real"),
            c2: r.optional("model.c2", 1.0, "positive real"),
            horizon,
        }),
        "stokes_lame" => Some(ModelConfig::StokesLame {
            resolution: r.optional("model.resolution", 8, "multiple of 8"),
            params: MaterialParams {
                lambda: r.optional("model.lambda", 1.0, "nonnegative real"),
                mu: r.optional("model.mu", 1.0, "positive real"),
                viscosity: r.optional("model.viscosity", 1.0, "positive real"),
            },
            horizon,
        }),
        "" => None,
        other => {
            r.issue(format!(
                "key `model.kind`: unknown model `{other}` (heatwave | stokes_lame)"
            ));
            None
        }
    };

    let initial_raw: String = r.optional("model.initial", "smooth".into(), "initial kind");
    let initial = match initial_raw.as_str() {
        "smoothed_random" => Some(InitialChoice::SmoothedRandom),
        other => match other.parse::<InitialKind>() {
            Ok(k) => Some(InitialChoice::Model(k)),
            Err(_) => {
                r.issue(format!(
                    "key `model.initial`: unknown kind `{other}` \
                     (smooth | random_energy_unit | delta_like | smoothed_random)"
                ));
                None
            }
        },
    };

    let sim_dt = r.optional("sim.dt", 2.5e-3, "positive real");
    let sim_theta = r.optional("sim.theta", 0.5, "real in [1/2, 1]");
    let control_weight = r.optional("cost.control_weight", 1.0, "positive real");
    let dre_dt = r.optional("dre.dt", 1e-2, "positive real");
    let dre_store_every = r.optional("dre.store_every", 1usize, "positive integer");
    let oracle_tol = r.optional("oracle.tol", 1e-9, "positive real");

    let default_studies = "dre,synthesize,oracle_compare".to_string();
    let studies_raw: String = r.optional("studies.run", default_studies, "study list");
    let mut studies = Vec::new();
    for item in studies_raw.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        match item.parse::<StudyKind>() {
            Ok(s) => {
                if !studies.contains(&s) {
                    studies.push(s);
                }
            }
            Err(e) => r.issue(format!("key `studies.run`: {e}")),
        }
    }

    let singular = SingularFitConfig {
        ensemble: r.optional("singular_fit.ensemble", 32, "positive integer"),
        samples: r.optional("singular_fit.samples", 120, "positive integer"),
        window_factor: r.optional("singular_fit.window_factor", 10.0, "positive real"),
        window_fraction: r.optional("singular_fit.window_fraction", 0.5, "fraction in (0,1]"),
    };
    let lp = LpStabilityConfig {
        p_list: r.list("lp_stability.p_list", vec![2.0, 4.0, 8.0], "real >= 1"),
        levels: r.list("lp_stability.levels", vec![32, 64, 128], "integer"),
    };
    let gain = GainConfig {
        levels: r.list("gain_refinement.levels", vec![16, 32, 64], "integer"),
        epsilon: r.optional("gain_refinement.epsilon", 0.15, "real in (0, 1/4)"),
        dre_dt: r.optional("gain_refinement.dre_dt", 1e-2, "positive real"),
    };
    let ut = UtConfig {
        theta: r.optional("ut_window.theta", 0.1, "real in (0, 1/4)"),
        q: r.optional("ut_window.q", 1.1, "real in (1, 4/(3+4 theta))"),
        levels: r.list("ut_window.levels", vec![64, 128], "integer"),
        ensemble: r.optional("ut_window.ensemble", 8, "positive integer"),
    };

    // reject unknown keys so typos cannot silently change an experiment
    for key in raw.entries.keys() {
        if !reader.used.borrow().contains(key) {
            reader.issue(format!("unknown key `{key}`"));
        }
    }

    // semantic validation, accumulated
    if !(sim_dt > 0.0) {
        r.issue(format!("key `sim.dt`: {sim_dt} must be positive"));
    }
    if !(0.5..=1.0).contains(&sim_theta) {
        r.issue(format!(
            "key `sim.theta`: {sim_theta} outside the A-stable range [1/2, 1]"
        ));
    }
    if !(control_weight > 0.0) {
        r.issue(format!(
            "key `cost.control_weight`: {control_weight} must be positive"
        ));
    }
    if !(dre_dt > 0.0) {
        r.issue(format!("key `dre.dt`: {dre_dt} must be positive"));
    }
    if dre_store_every == 0 {
        r.issue("key `dre.store_every`: must be at least 1".into());
    }
    if !(oracle_tol > 0.0) {
        r.issue(format!("key `oracle.tol`: {oracle_tol} must be positive"));
    }
    if let Some(m) = &model {
        match m {
            ModelConfig::HeatWave { n_f, n_s, kappa, c2, horizon } => {
                if *n_f < 2 || *n_s < 2 {
                    r.issue(format!(
                        "keys `model.n_f`/`model.n_s`: ({n_f}, {n_s}) must both be >= 2"
                    ));
                }
                if !(*kappa > 0.0) {
                    r.issue(format!("key `model.kappa`: {kappa} must be positive"));
                }
                if !(*c2 > 0.0) {
                    r.issue(format!("key `model.c2`: {c2} must be positive"));
                }
                if !(*horizon > 0.0) {
                    r.issue(format!("key `model.horizon`: {horizon} must be positive"));
                }
            }
            ModelConfig::StokesLame { resolution, params, horizon } => {
                if *resolution < 8 || resolution % 8 != 0 {
                    r.issue(format!(
                        "key `model.resolution`: {resolution} must be a positive multiple of 8"
                    ));
                }
                if params.validate().is_err() {
                    r.issue(format!(
                        "keys `model.lambda`/`model.mu`/`model.viscosity`: \
                         invalid material constants {params:?}"
                    ));
                }
                if !(*horizon > 0.0) {
                    r.issue(format!("key `model.horizon`: {horizon} must be positive"));
                }
            }
        }
    }
    if studies.contains(&StudyKind::UtWindow) {
        if !(ut.theta > 0.0 && ut.theta < 0.25) {
            r.issue(format!(
                "key `ut_window.theta`: {} must lie in (0, 1/4)",
                ut.theta
            ));
        } else {
            let sup = 4.0 / (3.0 + 4.0 * ut.theta);
            if !(ut.q > 1.0 && ut.q < sup) {
                r.issue(format!(
                    "key `ut_window.q`: {} outside the admissible range \
                     1 < q < 4/(3+4*theta) = {sup:.6}",
                    ut.q
                ));
            }
        }
        if ut.levels.is_empty() || ut.levels.windows(2).any(|w| w[0] >= w[1]) {
            r.issue("key `ut_window.levels`: must be strictly increasing".into());
        }
    }
    if studies.contains(&StudyKind::GainRefinement) {
        if !(gain.epsilon > 0.0 && gain.epsilon < 0.25) {
            r.issue(format!(
                "key `gain_refinement.epsilon`: {} must lie in (0, 1/4)",
                gain.epsilon
            ));
        }
        if gain.levels.is_empty() || gain.levels.windows(2).any(|w| w[0] >= w[1]) {
            r.issue("key `gain_refinement.levels`: must be strictly increasing".into());
        }
    }
    if studies.contains(&StudyKind::LpStability) {
        for &p in &lp.p_list {
            if !(p >= 1.0) {
                r.issue(format!("key `lp_stability.p_list`: exponent {p} must be >= 1"));
            }
        }
        if lp.levels.is_empty() || lp.levels.windows(2).any(|w| w[0] >= w[1]) {
            r.issue("key `lp_stability.levels`: must be strictly increasing".into());
        }
    }
    if studies.contains(&StudyKind::SingularFit) {
        if singular.ensemble == 0 {
            r.issue("key `singular_fit.ensemble`: must be positive".into());
        }
        if !(singular.window_fraction > 0.0 && singular.window_fraction <= 1.0) {
            r.issue(format!(
                "key `singular_fit.window_fraction`: {} must lie in (0, 1]",
                singular.window_fraction
            ));
        }
    }

    let issues = reader.issues.into_inner();
    if !issues.is_empty() {
        return Err(Error::InvalidConfig { issues });
    }
    let (Some(seed), Some(model), Some(initial)) = (seed, model, initial) else {
        return Err(Error::InvalidConfig {
            issues: vec!["incomplete configuration".into()],
        });
    };
    let sim = Stepper::new(sim_dt, sim_theta)?;
    Ok(ExperimentConfig {
        id,
        seed,
        model,
        initial,
        sim,
        control_weight,
        dre_dt,
        dre_store_every,
        oracle_tol,
        studies,
        singular,
        lp,
        gain,
        ut,
        echo: raw.entries,
    })
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[experiment]
id = demo
seed = 42

[model]
kind = heatwave
n_f = 16
n_s = 16
";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.id, "demo");
        assert_eq!(cfg.seed, 42);
        assert!(matches!(cfg.model, ModelConfig::HeatWave { n_f: 16, .. }));
        assert_eq!(cfg.sim.theta, 0.5);
        assert_eq!(
            cfg.studies,
            vec![StudyKind::Dre, StudyKind::Synthesize, StudyKind::OracleCompare]
        );
    }

    #[test]
    fn seed_is_mandatory() {
        let text = "[experiment]\nid = x\n[model]\nkind = heatwave\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("experiment.seed"));
    }

    #[test]
    fn every_offending_field_is_listed() {
        let text = "\
[experiment]
id = broken
seed = 1
[model]
kind = heatwave
n_f = 1
kappa = -2.0
[sim]
theta = 0.2
[studies]
run = ut_window
[ut_window]
theta = 0.3
";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        for needle in ["model.n_f", "model.kappa", "sim.theta", "ut_window.theta", "1/4"] {
            assert!(msg.contains(needle), "missing `{needle}` in:\n{msg}");
        }
    }

    #[test]
    fn ut_q_above_the_bound_is_rejected_with_the_bound_printed() {
        let text = format!(
            "{MINIMAL}\n[studies]\nrun = ut_window\n[ut_window]\ntheta = 0.1\nq = 1.2\n"
        );
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("4/(3+4*theta)"), "{msg}");
        assert!(msg.contains("1.17647"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[model]\ntypo_key = 3\n");
        // duplicate section is fine, unknown key is not
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("typo_key"));
    }

    #[test]
    fn misaligned_resolution_is_rejected() {
        let text = "\
[experiment]
id = x
seed = 7
[model]
kind = stokes_lame
resolution = 12
";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("multiple of 8"));
    }
}
