//! Simulation study: skewness designs, data generation, replication runner
//! and Frobenius-loss aggregation.
//!
//! Seeding: design `d` uses seed `base_seed + d` (Diag 0, Sparse 1, Dense 2).
//! Within it, replication `r` draws its dataset from stream
//! `16 r + DATA_STREAM_SLOT` and the chain of each variant from stream
//! `16 r + variant.index()`. Every variant of a replication sees the same data.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PriorOverrides;
use crate::distributions::{draw_gamma, draw_mvn_from_precision, std_normal, stream_id, RngStream, DATA_STREAM_SLOT};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainConfig};
use crate::model::{Dataset, Tail, Variant};
use crate::numerics::SpdMatrix;

/// The three skewness patterns of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Diag,
    Sparse,
    Dense,
}

impl DesignKind {
    pub const ALL: [DesignKind; 3] = [DesignKind::Diag, DesignKind::Sparse, DesignKind::Dense];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Diag => "diag",
            DesignKind::Sparse => "sparse",
            DesignKind::Dense => "dense",
        }
    }

    /// Offset added to the base seed.
    pub fn index(self) -> u64 {
        match self {
            DesignKind::Diag => 0,
            DesignKind::Sparse => 1,
            DesignKind::Dense => 2,
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diag" => Ok(DesignKind::Diag),
            "sparse" => Ok(DesignKind::Sparse),
            "dense" => Ok(DesignKind::Dense),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

/// Lower-triangular Δ: diagonal `+2, −2, +2, …`; Sparse adds `−1` on the
/// first subdiagonal; Dense also fills the rest of the lower triangle with `1`.
pub fn make_delta_design(kind: DesignKind, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidData("design dimension must be at least 1".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            if i % 2 == 0 {
                2.0
            } else {
                -2.0
            }
        } else if j > i || kind == DesignKind::Diag {
            0.0
        } else if i == j + 1 {
            -1.0
        } else if kind == DesignKind::Dense {
            1.0
        } else {
            0.0
        }
    }))
}

/// `T` rows of `R_t = μ + ΔZ_t + ε_t`, `Z_t ~ N⁺(0, I)`, `ε_t ~ N(0, Ω⁻¹)`.
pub fn simulate_data<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    delta: &DMatrix<f64>,
    omega: &SpdMatrix,
    t: usize,
    rng: &mut R,
) -> Result<Dataset> {
    simulate(mu, delta, omega, t, None, rng).map(|(d, _)| d)
}

/// Skew-t rows: as [`simulate_data`] with `Z_t` and `ε_t` both scaled by
/// `γ_t^{-1/2}`, `γ_t ~ Ga(φ/2, φ/2)`. Returns the weights as well.
pub fn simulate_skew_t_data<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    delta: &DMatrix<f64>,
    omega: &SpdMatrix,
    t: usize,
    varphi: f64,
    rng: &mut R,
) -> Result<(Dataset, DVector<f64>)> {
    simulate(mu, delta, omega, t, Some(varphi), rng).map(|(d, g)| (d, g.unwrap_or_else(|| DVector::zeros(0))))
}

fn simulate<R: Rng + ?Sized>(
    mu: &DVector<f64>,
    delta: &DMatrix<f64>,
    omega: &SpdMatrix,
    t: usize,
    varphi: Option<f64>,
    rng: &mut R,
) -> Result<(Dataset, Option<DVector<f64>>)> {
    let n = mu.len();
    if delta.nrows() != n || delta.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: delta.nrows(),
        });
    }
    if omega.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: omega.dim(),
        });
    }
    let zero = DVector::zeros(n);
    let mut r = DMatrix::zeros(t, n);
    let mut gamma = varphi.map(|_| DVector::zeros(t));
    for row in 0..t {
        let scale = match (varphi, gamma.as_mut()) {
            (Some(v), Some(g)) => {
                g[row] = draw_gamma(v / 2.0, v / 2.0, rng)?;
                1.0 / g[row].sqrt()
            }
            _ => 1.0,
        };
        let z = DVector::from_fn(n, |_, _| std_normal(rng).abs() * scale);
        let e = draw_mvn_from_precision(&zero, omega, rng)? * scale;
        r.set_row(row, &(mu + delta * z + e).transpose());
    }
    let data = if t == 0 { Dataset::empty(n) } else { Dataset::new(r)? };
    Ok((data, gamma))
}

/// `√Σ(estimate − truth)²`.
pub fn frobenius_loss(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    Ok((estimate - truth).norm())
}

/// Mean over columns of the entropy (nats) of the truth column each draw's
/// column is closest to in Euclidean distance.
///
/// A sampler that keeps a fixed column labelling gives 0; one that visits
/// the `N!` relabellings uniformly gives up to `ln N`.
pub fn column_assignment_entropy(draws: &[DMatrix<f64>], truth: &DMatrix<f64>) -> f64 {
    let n = truth.ncols();
    if draws.is_empty() || n == 0 {
        return 0.0;
    }
    let mut counts = vec![vec![0usize; n]; n];
    for d in draws {
        for c in 0..n {
            let col = d.column(c);
            let best = (0..n)
                .min_by(|&a, &b| {
                    let da = (col - truth.column(a)).norm_squared();
                    let db = (col - truth.column(b)).norm_squared();
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            counts[c][best] += 1;
        }
    }
    let total = draws.len() as f64;
    counts
        .iter()
        .map(|row| {
            row.iter()
                .filter(|&&k| k > 0)
                .map(|&k| {
                    let p = k as f64 / total;
                    -p * p.ln()
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        / n as f64
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sample standard deviation divided by `√k`; NaN for fewer than two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    var.sqrt() / (k as f64).sqrt()
}

/// Everything that determines a study run.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub designs: Vec<DesignKind>,
    pub variants: Vec<Variant>,
    pub n: usize,
    pub t: usize,
    pub reps: usize,
    pub chain: ChainConfig,
    pub base_seed: u64,
    pub workers: usize,
    /// Applied on top of the default prior of every variant.
    pub prior: PriorOverrides,
}

impl StudyConfig {
    /// Reduced-size protocol: N = 6, T = 600, 5 replications, 3000 + 6000 sweeps.
    pub fn scaled(base_seed: u64) -> Self {
        StudyConfig {
            designs: DesignKind::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            n: 6,
            t: 600,
            reps: 5,
            chain: ChainConfig::new(3000, 6000, 1),
            base_seed,
            workers: 1,
            prior: PriorOverrides::default(),
        }
    }

    /// Full protocol: N = 15, T = 1500, 30 replications, 50 000 + 100 000 sweeps.
    pub fn full_scale(base_seed: u64) -> Self {
        StudyConfig {
            n: 15,
            t: 1500,
            reps: 30,
            chain: ChainConfig::new(50_000, 100_000, 1),
            ..StudyConfig::scaled(base_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| Error::Schema {
            path: path.into(),
            message: message.into(),
        };
        if self.reps == 0 {
            return Err(bad("study.reps", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(bad("n", "must be at least 1"));
        }
        if self.t == 0 {
            return Err(bad("t", "must be at least 1"));
        }
        for &v in &self.variants {
            self.prior.apply(self.n, v, Tail::SkewNormal)?;
        }
        if self.designs.is_empty() {
            return Err(bad("study.designs", "must not be empty"));
        }
        if self.variants.is_empty() {
            return Err(bad("study.variants", "must not be empty"));
        }
        self.chain.validate()
    }

    pub fn design_seed(&self, design: DesignKind) -> u64 {
        self.base_seed.wrapping_add(design.index())
    }
}

/// Truth used for every replication of one design: `μ = 0`, `Ω = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTruth {
    pub design: DesignKind,
    pub mu: DVector<f64>,
    pub delta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

impl DesignTruth {
    pub fn new(design: DesignKind, n: usize) -> Result<Self> {
        Ok(DesignTruth {
            design,
            mu: DVector::zeros(n),
            delta: make_delta_design(design, n)?,
            omega: DMatrix::identity(n, n),
        })
    }
}

/// Dataset of replication `rep` for `design`.
pub fn study_dataset(config: &StudyConfig, truth: &DesignTruth, rep: usize) -> Result<Dataset> {
    let mut rng = RngStream::new(config.design_seed(truth.design), stream_id(rep, DATA_STREAM_SLOT));
    let omega = SpdMatrix::new(truth.omega.clone())?;
    simulate_data(&truth.mu, &truth.delta, &omega, config.t, &mut rng)
}

/// Outcome of one (design, variant, replication) job.
#[derive(Debug, Clone)]
pub struct JobResult {
    pub design: DesignKind,
    pub variant: Variant,
    pub rep: usize,
    pub seed: u64,
    pub stream: u64,
    pub iterations: usize,
    pub seconds: f64,
    pub outcome: std::result::Result<JobEstimates, String>,
}

/// Posterior means and their losses against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct JobEstimates {
    pub mean_delta: DMatrix<f64>,
    pub mean_omega: DMatrix<f64>,
    pub delta_loss: f64,
    pub omega_loss: f64,
}

/// Medians and standard errors of one (design, variant) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub design: DesignKind,
    pub variant: Variant,
    pub completed: usize,
    pub failed: usize,
    pub median_delta_loss: f64,
    pub se_delta_loss: f64,
    pub median_omega_loss: f64,
    pub se_omega_loss: f64,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub truths: Vec<DesignTruth>,
    /// Jobs in canonical order: design, then replication, then variant.
    pub jobs: Vec<JobResult>,
    pub cells: Vec<CellSummary>,
    pub wall_seconds: f64,
}

impl StudyReport {
    pub fn cell(&self, design: DesignKind, variant: Variant) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.design == design && c.variant == variant)
    }
}

fn run_job(config: &StudyConfig, truth: &DesignTruth, data: &Dataset, variant: Variant, rep: usize) -> JobResult {
    let seed = config.design_seed(truth.design);
    let stream = stream_id(rep, variant.index());
    let start = Instant::now();
    let outcome = (|| {
        let prior = config.prior.apply(config.n, variant, Tail::SkewNormal)?;
        let mut rng = RngStream::new(seed, stream);
        let summary = run_chain(data, &prior, &config.chain, &mut rng)?;
        Ok::<_, Error>(JobEstimates {
            delta_loss: frobenius_loss(&summary.mean_delta, &truth.delta)?,
            omega_loss: frobenius_loss(&summary.mean_omega, &truth.omega)?,
            mean_delta: summary.mean_delta,
            mean_omega: summary.mean_omega,
        })
    })()
    .map_err(|e| e.to_string());
    JobResult {
        design: truth.design,
        variant,
        rep,
        seed,
        stream,
        iterations: config.chain.total_iterations(),
        seconds: start.elapsed().as_secs_f64(),
        outcome,
    }
}

/// Runs every job on a pool of `config.workers` threads and aggregates the
/// losses. A failed chain is recorded in its job and left out of the medians.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let start = Instant::now();
    let truths = config
        .designs
        .iter()
        .map(|&d| DesignTruth::new(d, config.n))
        .collect::<Result<Vec<_>>>()?;
    let mut datasets = Vec::new();
    for (d, truth) in truths.iter().enumerate() {
        for rep in 0..config.reps {
            datasets.push((d, rep, study_dataset(config, truth, rep)?));
        }
    }
    let tasks: Vec<(usize, usize, Variant)> = datasets
        .iter()
        .enumerate()
        .flat_map(|(k, (_, rep, _))| config.variants.iter().map(move |&v| (k, *rep, v)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidData(format!("thread pool: {e}")))?;
    let jobs: Vec<JobResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(k, rep, variant)| {
                let (d, _, data) = &datasets[k];
                run_job(config, &truths[*d], data, variant, rep)
            })
            .collect()
    });
    let cells = summarize_jobs(&config.designs, &config.variants, &jobs);
    Ok(StudyReport {
        config: config.clone(),
        truths,
        jobs,
        cells,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// One cell per (design, variant), in the given orders.
pub fn summarize_jobs(designs: &[DesignKind], variants: &[Variant], jobs: &[JobResult]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &design in designs {
        for &variant in variants {
            let mine: Vec<&JobResult> = jobs.iter().filter(|j| j.design == design && j.variant == variant).collect();
            let ok: Vec<&JobEstimates> = mine.iter().filter_map(|j| j.outcome.as_ref().ok()).collect();
            let dl: Vec<f64> = ok.iter().map(|e| e.delta_loss).collect();
            let ol: Vec<f64> = ok.iter().map(|e| e.omega_loss).collect();
            cells.push(CellSummary {
                design,
                variant,
                completed: ok.len(),
                failed: mine.len() - ok.len(),
                median_delta_loss: median(&dl),
                se_delta_loss: standard_error(&dl),
                median_omega_loss: median(&ol),
                se_omega_loss: standard_error(&ol),
            });
        }
    }
    cells
}
