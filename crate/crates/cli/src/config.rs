use std::path::PathBuf;

use ocp_core::{EnvSpec, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{field} = {value} is outside {interval}")]
    Range {
        field: &'static str,
        value: String,
        interval: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

fn default_algorithm() -> Variant {
    Variant::UnlockPlus
}
fn default_k() -> usize {
    200
}
fn default_t() -> usize {
    50_000
}
fn default_alpha() -> f64 {
    0.15
}
fn default_c() -> f64 {
    40.0
}
fn default_rho() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.05
}
fn default_seeds() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("ocp-out")
}

/// Everything a `run` needs.
///
/// `seed` is the base seed; run `i` of a suite uses `seed + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: Variant,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(rename = "T", default = "default_t")]
    pub horizon: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_override: Option<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub env: EnvSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            k: default_k(),
            horizon: default_t(),
            alpha: default_alpha(),
            c: default_c(),
            rho: default_rho(),
            delta: default_delta(),
            seed: 0,
            seeds: default_seeds(),
            gamma_override: None,
            out: default_out(),
            env: EnvSpec::default(),
        }
    }
}

fn range(field: &'static str, value: impl ToString, interval: &'static str) -> ConfigError {
    ConfigError::Range {
        field,
        value: value.to_string(),
        interval,
    }
}

impl RunConfig {
    pub fn parse(document: &str) -> Result<Self, ConfigError> {
        let config: RunConfig =
            toml::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(range("alpha", self.alpha, "(0, 0.5)"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(range("c", self.c, "(0, inf)"));
        }
        if self.k < 2 {
            return Err(range("K", self.k, "[2, inf)"));
        }
        if self.horizon < 1 {
            return Err(range("T", self.horizon, "[1, inf)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(range("delta", self.delta, "(0, 1)"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(range("rho", self.rho, "[0, inf)"));
        }
        if self.seeds < 1 {
            return Err(range("seeds", self.seeds, "[1, inf)"));
        }
        if let Some(g) = self.gamma_override {
            if !(0.0..1.0).contains(&g) {
                return Err(range("gamma_override", g, "[0, 1)"));
            }
        }
        let grid = ocp_core::ThresholdGrid::uniform(self.k)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.env
            .validate(&grid)
            .map_err(|e| ConfigError::Invalid(format!("env: {e}")))
    }

    /// Canonical text form.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical form with the output directory blanked,
    /// so the same experiment written to two places shares a digest.
    pub fn digest(&self) -> String {
        let mut experiment = self.clone();
        experiment.out = PathBuf::new();
        hex::encode(Sha256::digest(experiment.to_canonical().as_bytes()))
    }
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub algorithm: Option<Variant>,
    pub env: Option<EnvSpec>,
    pub k: Option<usize>,
    pub horizon: Option<usize>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub rho: Option<f64>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub gamma_override: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    config.$field = v.clone();
                })*
            };
        }
        set!(algorithm, env, k, horizon, alpha, c, rho, delta, seed, seeds, out);
        if self.gamma_override.is_some() {
            config.gamma_override = self.gamma_override;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ocp_core::environments::ShiftParams;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.algorithm, Variant::UnlockPlus);
        assert_eq!((c.k, c.horizon), (200, 50_000));
        assert_eq!((c.alpha, c.c, c.rho, c.delta), (0.15, 40.0, 0.5, 0.05));
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn range_errors_cite_the_interval() {
        let e = RunConfig::parse("alpha = 0.6").unwrap_err();
        assert!(e.to_string().contains("(0, 0.5)"), "{e}");
        for doc in ["K = 1", "T = 0", "c = 0.0", "delta = 1.0", "seeds = 0", "rho = -1.0"] {
            assert!(matches!(RunConfig::parse(doc), Err(ConfigError::Range { .. })), "{doc}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("alpah = 0.1").is_err());
        assert!(RunConfig::parse("[env]\nkind = \"iid\"\nlabel = 3").is_err());
        assert!(RunConfig::parse("[env]\nkind = \"markov\"").is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let doc = r#"
            algorithm = "bandit"
            K = 20
            T = 1234
            alpha = 0.1
            c = 12.5
            seed = 7
            seeds = 3
            gamma_override = 0.3
            out = "somewhere"

            [env]
            kind = "covariate-shift"
            labels = 30
            shift_fraction = 0.25
        "#;
        let first = RunConfig::parse(doc).unwrap();
        let second = RunConfig::parse(&first.to_canonical()).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.to_canonical(), second.to_canonical());
        assert!(matches!(second.env, EnvSpec::Shift(ShiftParams { labels: 30, .. })));
    }

    #[test]
    fn digest_ignores_output_directory_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere".into();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn flags_win_over_file() {
        let mut c = RunConfig::parse("alpha = 0.2\nK = 10").unwrap();
        Overrides {
            alpha: Some(0.3),
            seeds: Some(4),
            ..Overrides::default()
        }
        .apply(&mut c);
        assert_eq!((c.alpha, c.k, c.seeds), (0.3, 10, 4));
    }
}
