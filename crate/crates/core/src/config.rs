//! JSON run configuration.
//!
//! Every field is optional; omitted ones take the simulation-study defaults.
//! Unknown keys are rejected and errors name the offending path.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::ChainConfig;
use crate::model::{DeltaLayout, PriorConfig, Tail, Variant};
use crate::numerics::SpdMatrix;
use crate::simstudy::{DesignKind, StudyConfig};

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "SKEWGIBBS_WORKERS";

pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GenData,
    #[default]
    Fit,
    Study,
    Summarize,
}

/// A scalar `c` stands for `c I`; otherwise a full matrix given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scale(f64),
    Rows(Vec<Vec<f64>>),
}

/// A scalar `c` stands for the constant vector `c 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Constant(f64),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_mu: Option<VectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_mu: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_delta: Option<VectorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_delta: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_omega: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_varphi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_varphi: Option<f64>,
}

impl PriorOverrides {
    /// Study defaults for `(n, variant, tail)` with every set field replaced.
    pub fn apply(&self, n: usize, variant: Variant, tail: Tail) -> Result<PriorConfig> {
        let mut prior = PriorConfig::defaults(n, variant, tail);
        let j = DeltaLayout::for_variant(variant, n).len();
        if let Some(s) = &self.b_mu {
            prior.b_mu = vector_from(s, n, "prior.b_mu")?;
        }
        if let Some(s) = &self.a_mu {
            prior.a_mu = matrix_from(s, n, "prior.a_mu")?;
        }
        if let Some(s) = &self.b_delta {
            prior.b_delta = vector_from(s, j, "prior.b_delta")?;
        }
        if let Some(s) = &self.a_delta {
            prior.a_delta = matrix_from(s, j, "prior.a_delta")?;
        }
        if let Some(s) = &self.s_omega {
            prior.s_omega = matrix_from(s, n, "prior.s_omega")?;
        }
        let scalars = [
            (self.nu_omega, &mut prior.nu_omega),
            (self.a_eta, &mut prior.a_eta),
            (self.b_eta, &mut prior.b_eta),
            (self.a_varphi, &mut prior.a_varphi),
            (self.b_varphi, &mut prior.b_varphi),
        ];
        for (value, slot) in scalars {
            if let Some(v) = value {
                *slot = v;
            }
        }
        prior.validate().map_err(|e| schema("prior", e.to_string()))?;
        Ok(prior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub burn_in: usize,
    pub draws: usize,
    #[serde(default = "one")]
    pub thin: usize,
    #[serde(default)]
    pub store_latent: bool,
}

fn one() -> usize {
    1
}

impl From<ChainSettings> for ChainConfig {
    fn from(c: ChainSettings) -> Self {
        ChainConfig {
            burn_in: c.burn_in,
            draws: c.draws,
            thin: c.thin,
            store_latent: c.store_latent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<DesignKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<Variant>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_tail")]
    pub tail: Tail,
    /// Design used by `gen-data`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSettings>,
    #[serde(default)]
    pub prior: PriorOverrides,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub full_scale: bool,
    #[serde(default)]
    pub study: StudySettings,
}

fn default_variant() -> Variant {
    Variant::LtNowi
}

fn default_tail() -> Tail {
    Tail::SkewNormal
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("{}").expect("empty config is valid")
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path: if path == "." { String::new() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn schema(path: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn vector_from(spec: &VectorSpec, len: usize, path: &str) -> Result<DVector<f64>> {
    match spec {
        VectorSpec::Constant(c) => Ok(DVector::from_element(len, *c)),
        VectorSpec::Values(v) if v.len() == len => Ok(DVector::from_column_slice(v)),
        VectorSpec::Values(v) => Err(schema(path, format!("expected {len} entries, got {}", v.len()))),
    }
}

fn matrix_from(spec: &MatrixSpec, dim: usize, path: &str) -> Result<SpdMatrix> {
    let m = match spec {
        MatrixSpec::Scale(c) => {
            if !(*c > 0.0) {
                return Err(schema(path, "scale must be positive"));
            }
            return Ok(SpdMatrix::scaled_identity(dim, *c));
        }
        MatrixSpec::Rows(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(schema(path, format!("expected a {dim}x{dim} matrix")));
            }
            DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
        }
    };
    SpdMatrix::new(m).map_err(|_| schema(path, "matrix is not symmetric positive definite"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == Some(0) {
            return Err(schema("n", "must be at least 1"));
        }
        if let Some(c) = self.chain {
            ChainConfig::from(c).validate()?;
        }
        if self.workers == Some(0) {
            return Err(schema("workers", "must be at least 1"));
        }
        if self.study.reps == Some(0) {
            return Err(schema("study.reps", "must be at least 1"));
        }
        Ok(())
    }

    /// Chain settings, falling back to 3000 burn-in and 6000 draws.
    pub fn chain_config(&self) -> ChainConfig {
        self.chain.map(ChainConfig::from).unwrap_or(ChainConfig::new(3000, 6000, 1))
    }

    /// Prior for dimension `n`, defaults overridden by the `prior` section.
    pub fn prior_for(&self, n: usize) -> Result<PriorConfig> {
        self.prior.apply(n, self.variant, self.tail)
    }

    /// Worker count: the environment override, then `workers`, then 1.
    pub fn effective_workers(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(w) if w >= 1 => Ok(w),
                _ => Err(schema(WORKERS_ENV, format!("expected a positive integer, got `{v}`"))),
            },
            Err(_) => Ok(self.workers.unwrap_or(1)),
        }
    }

    /// Study settings: the scaled or full protocol with explicit fields applied on top.
    pub fn study_config(&self, full_scale: bool) -> Result<StudyConfig> {
        let mut study = if full_scale || self.full_scale {
            StudyConfig::full_scale(self.seed)
        } else {
            StudyConfig::scaled(self.seed)
        };
        if let Some(n) = self.n {
            study.n = n;
        }
        if let Some(t) = self.t {
            study.t = t;
        }
        if let Some(c) = self.chain {
            study.chain = c.into();
        }
        if let Some(d) = &self.study.designs {
            study.designs = d.clone();
        }
        if let Some(v) = &self.study.variants {
            study.variants = v.clone();
        }
        if let Some(r) = self.study.reps {
            study.reps = r;
        }
        study.prior = self.prior.clone();
        study.workers = self.effective_workers()?;
        study.validate()?;
        Ok(study)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
