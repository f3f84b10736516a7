//! Scenario configuration: JSON file first, then command-line overrides.

use std::path::{Path, PathBuf};

use dsrank::contagion::{DEFAULT_GAMMA_CAP, DEFAULT_MAX_STEPS, DEFAULT_STOP_TOL};
use dsrank::market::SynthSpec;
use dsrank::reconstruction::{DEFAULT_DENSITY, DEFAULT_ENSEMBLE_SIZE};
use dsrank::{AdmissionPolicy, Damping, Lgd, ShockParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "DSRANK_SEED";
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Group,
    Individual,
    Leverage,
    DeltaSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsiGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for PsiGrid {
    fn default() -> Self {
        PsiGrid { min: 0.0, max: 1.0, count: 101 }
    }
}

/// Synthetic markets; unset sizes and totals follow the published
/// European aggregates of each year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_banks: Option<usize>,
    pub total_volume: Option<f64>,
    pub total_equity: Option<f64>,
    pub shape: f64,
    pub seed: Option<u64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n_banks: None, total_volume: None, total_equity: None, shape: 1.0, seed: None }
    }
}

impl SynthConfig {
    pub fn spec(&self, year: i32, master_seed: u64) -> Result<SynthSpec, CliError> {
        let seed = self.seed.unwrap_or(master_seed).wrapping_add(year as u64);
        let base = SynthSpec::european(year, self.shape, seed);
        let (volume, equity, n) = match (&base, self.total_volume, self.total_equity) {
            (_, Some(v), Some(e)) => (v, e, self.n_banks.unwrap_or(dsrank::market::EUROPEAN_PANEL_SIZE)),
            (Some(b), v, e) => {
                (v.unwrap_or(b.total_volume), e.unwrap_or(b.total_equity), self.n_banks.unwrap_or(b.n_banks))
            }
            (None, _, _) => {
                return Err(CliError::Usage(format!(
                    "no published aggregates for {year}; set synth.total_volume and synth.total_equity"
                )))
            }
        };
        Ok(SynthSpec {
            n_banks: n,
            total_volume: volume,
            total_equity: equity,
            shape: self.shape,
            seed,
            year,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: Option<Kind>,
    pub input: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub years: Vec<i32>,
    pub policy: AdmissionPolicy,
    pub density: f64,
    pub ensemble_size: usize,
    pub master_seed: Option<u64>,
    pub lambda: f64,
    /// `[α, β]` of a beta-distributed loss given default; overrides `lambda`.
    pub lgd_beta: Option<[f64; 2]>,
    pub rho: Vec<f64>,
    pub damping: Vec<String>,
    pub stop_tol: f64,
    pub max_steps: usize,
    pub gamma_cap: f64,
    pub psi: PsiGrid,
    pub out: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: None,
            input: None,
            synth: None,
            years: Vec::new(),
            policy: AdmissionPolicy::default(),
            density: DEFAULT_DENSITY,
            ensemble_size: DEFAULT_ENSEMBLE_SIZE,
            master_seed: None,
            lambda: 1.0,
            lgd_beta: None,
            rho: vec![0.0, 1.0],
            damping: vec!["once".into(), "persistent".into()],
            stop_tol: DEFAULT_STOP_TOL,
            max_steps: DEFAULT_MAX_STEPS,
            gamma_cap: DEFAULT_GAMMA_CAP,
            psi: PsiGrid::default(),
            out: None,
        }
    }
}

impl ScenarioConfig {
    /// Reads a config file, or the `config` object of a run manifest.
    /// Relative input paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid JSON in {}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        let mut cfg: ScenarioConfig = serde_json::from_value(value)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        if let (Some(input), Some(dir)) = (&cfg.input, path.parent()) {
            if input.is_relative() {
                cfg.input = Some(dir.join(input));
            }
        }
        Ok(cfg)
    }

    /// Flag, then config file, then `DSRANK_SEED`, then the default.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<(u64, &'static str), CliError> {
        let (seed, source) = if let Some(s) = flag {
            (s, "flag")
        } else if let Some(s) = self.master_seed {
            (s, "config")
        } else if let Ok(raw) = std::env::var(SEED_ENV) {
            let s = raw.trim().parse().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{raw}`"))
            })?;
            (s, "env")
        } else {
            (DEFAULT_SEED, "default")
        };
        self.master_seed = Some(seed);
        Ok((seed, source))
    }

    pub fn seed(&self) -> u64 {
        self.master_seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn check(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.psi.min) && unit(self.psi.max) && self.psi.min <= self.psi.max) {
            return usage(format!("psi grid [{}, {}] must lie within [0, 1]", self.psi.min, self.psi.max));
        }
        if self.psi.count == 0 {
            return usage("psi grid needs at least one point".into());
        }
        if let Some(r) = self.rho.iter().find(|r| !unit(**r)) {
            return usage(format!("rho must lie in [0, 1], got {r}"));
        }
        if self.rho.is_empty() || self.damping.is_empty() {
            return usage("at least one rho and one damping mode are required".into());
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return usage(format!("density must lie in (0, 1), got {}", self.density));
        }
        if self.ensemble_size == 0 {
            return usage("ensemble_size must be at least 1".into());
        }
        if self.input.is_some() && self.synth.is_some() {
            return usage("set either an input file or a synthetic market, not both".into());
        }
        if let Some(input) = &self.input {
            if !input.is_file() {
                return usage(format!("input {} does not exist", input.display()));
            }
        }
        for v in self.variants()? {
            v.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }

    pub fn dampings(&self) -> Result<Vec<Damping>, CliError> {
        self.damping
            .iter()
            .map(|d| d.parse::<Damping>().map_err(|e| CliError::Usage(e.to_string())))
            .collect()
    }

    pub fn lgd(&self) -> Lgd {
        match self.lgd_beta {
            Some([alpha, beta]) => Lgd::Beta { alpha, beta, seed: self.seed() ^ 0xB7E1_5162_8AED_2A6B },
            None => Lgd::Constant(self.lambda),
        }
    }

    /// Every `(damping, ρ)` pair, damping-major.
    pub fn variants(&self) -> Result<Vec<ShockParams>, CliError> {
        let mut out = Vec::new();
        for d in self.dampings()? {
            for &rho in &self.rho {
                out.push(ShockParams {
                    lgd: self.lgd(),
                    rho,
                    damping: d,
                    stop_tol: self.stop_tol,
                    max_steps: self.max_steps,
                    gamma_cap: self.gamma_cap,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ScenarioConfig::default();
        cfg.check().unwrap();
        assert_eq!(cfg.variants().unwrap().len(), 4);
    }

    #[test]
    fn grid_outside_unit_interval_is_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.psi.max = 1.5;
        assert!(cfg.check().is_err());
        let cfg = ScenarioConfig { rho: vec![2.0], ..Default::default() };
        assert!(cfg.check().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ScenarioConfig>(r#"{"densty": 0.1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn flag_seed_wins() {
        let mut cfg = ScenarioConfig { master_seed: Some(5), ..Default::default() };
        assert_eq!(cfg.resolve_seed(Some(9)).unwrap(), (9, "flag"));
        let mut cfg = ScenarioConfig { master_seed: Some(5), ..Default::default() };
        assert_eq!(cfg.resolve_seed(None).unwrap(), (5, "config"));
    }

    #[test]
    fn schema_matches_config() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let props = schema["properties"].as_object().unwrap();
        let defaults = serde_json::to_value(ScenarioConfig::default()).unwrap();
        let keys = defaults.as_object().unwrap();
        assert_eq!(props.keys().collect::<Vec<_>>(), {
            let mut k: Vec<_> = keys.keys().collect();
            k.sort();
            k
        });
        for (key, value) in keys {
            if let Some(d) = props[key].get("default") {
                assert_eq!(d, value, "default of {key}");
            }
        }
        let grid = serde_json::to_value(PsiGrid::default()).unwrap();
        for (key, value) in grid.as_object().unwrap() {
            assert_eq!(&props["psi"]["properties"][key]["default"], value, "default of psi.{key}");
        }
    }
}
