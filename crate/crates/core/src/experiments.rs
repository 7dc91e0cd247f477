//! Ensemble drivers: border states (closest classical states of random
//! states), states with smallest tensor eigenvalue just above zero, and
//! (lambda_min, Q) scatter corpora, plus the small amount of statistics
//! needed to summarize them.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classicality::{
    decomposition_state, quantumness, quantumness_quadratic, QuantumnessConfig,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::spin::{depolarize, random_hs_state, Spin, SpinState};
use crate::tensor::tensor_from_state;
use crate::zeig::{min_z_eigenvalue, ZSolverConfig};

const STATE_STREAM: u64 = 0;
const EIG_STREAM: u64 = 1 << 20;
const Q_STREAM: u64 = (1 << 20) + 1;
const RECHECK_STREAM: u64 = (1 << 20) + 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub zsolver: ZSolverConfig,
    pub quantumness: QuantumnessConfig,
    /// Acceptance window [0, zero_lambda_tol] for the zero-eigenvalue search.
    pub zero_lambda_tol: f64,
    pub max_resamples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            zsolver: ZSolverConfig::default(),
            quantumness: QuantumnessConfig::default(),
            zero_lambda_tol: 1e-5,
            max_resamples: 1000,
        }
    }
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig { seed, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub j: f64,
    pub state_id: usize,
    pub lambda_min: f64,
    pub quantumness: f64,
    pub weight_sum: f64,
    /// Seed of the random state the record was derived from.
    pub state_seed: u64,
    pub eig_seed: u64,
    pub quantumness_seed: u64,
    /// Mixing parameter, for depolarized states.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mixing: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GeneratedState {
    pub state: SpinState,
    pub record: ExperimentRecord,
}

struct Seeds {
    state: u64,
    eig: u64,
    q: u64,
    recheck: u64,
}

fn seeds(master: u64, id: usize, attempt: usize) -> Seeds {
    let base = derive_seed(master, id as u64);
    Seeds {
        state: derive_seed(derive_seed(base, STATE_STREAM), attempt as u64),
        eig: derive_seed(base, EIG_STREAM + attempt as u64 * 4),
        q: derive_seed(base, Q_STREAM + attempt as u64 * 4),
        recheck: derive_seed(base, RECHECK_STREAM + attempt as u64 * 4),
    }
}

fn lambda_min(state: &SpinState, cfg: &ZSolverConfig, seed: u64) -> Result<f64> {
    let a = tensor_from_state(state)?;
    Ok(min_z_eigenvalue(&a, &ZSolverConfig { seed, ..cfg.clone() })?.lambda)
}

fn hs_state(spin: Spin, seed: u64) -> SpinState {
    random_hs_state(spin, &mut stream(seed, 0))
}

/// Closest classical states of `n` random HS states. Each record carries
/// lambda_min of the border state and, as `quantumness`, a quadratic-stage
/// re-estimate of the border state's own distance to the classical set.
pub fn gen_border_states(spin: Spin, n: usize, cfg: &ExperimentConfig) -> Result<Vec<GeneratedState>> {
    (0..n)
        .into_par_iter()
        .map(|id| {
            let s = seeds(cfg.seed, id, 0);
            let rho = hs_state(spin, s.state);
            let qcfg = QuantumnessConfig { seed: s.q, ..cfg.quantumness.clone() };
            let report = quantumness(&rho, &qcfg)?;
            let border = decomposition_state(&report.decomposition)?;
            let recheck = quantumness_quadratic(
                &border,
                &QuantumnessConfig { seed: s.recheck, ..cfg.quantumness.clone() },
            )?;
            let record = ExperimentRecord {
                j: spin.j(),
                state_id: id,
                lambda_min: lambda_min(&border, &cfg.zsolver, s.eig)?,
                quantumness: recheck.q,
                weight_sum: report.weight_sum,
                state_seed: s.state,
                eig_seed: s.eig,
                quantumness_seed: s.recheck,
                mixing: None,
            };
            Ok(GeneratedState { state: border, record })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ZeroLambdaRun {
    pub states: Vec<GeneratedState>,
    /// Random states discarded because they could not be bracketed.
    pub resamples: usize,
}

/// Bisection on a in depolarize(rho, a) = a rho + (1 - a) 1/(N+1) until
/// lambda_min lands in [0, zero_lambda_tol]. The bracket is kept by sign
/// (lambda_min(0) = 1/(N+1) > 0); monotonicity in a is not assumed.
fn zero_lambda_mixing(rho: &SpinState, cfg: &ExperimentConfig, eig_seed: u64) -> Result<Option<(f64, f64)>> {
    let at = |a: f64| -> Result<f64> { lambda_min(&depolarize(rho, a)?, &cfg.zsolver, eig_seed) };
    let top = at(1.0)?;
    if top >= 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let l = at(mid)?;
        if (0.0..=cfg.zero_lambda_tol).contains(&l) {
            return Ok(Some((mid, l)));
        }
        if l < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(None)
}

pub fn gen_zero_lambda_states(spin: Spin, n: usize, cfg: &ExperimentConfig) -> Result<ZeroLambdaRun> {
    let found: Vec<Result<(GeneratedState, usize)>> = (0..n)
        .into_par_iter()
        .map(|id| {
            for attempt in 0..=cfg.max_resamples {
                let s = seeds(cfg.seed, id, attempt);
                let rho = hs_state(spin, s.state);
                let Some((a, lmin)) = zero_lambda_mixing(&rho, cfg, s.eig)? else { continue };
                let state = depolarize(&rho, a)?;
                let report = quantumness(&state, &QuantumnessConfig { seed: s.q, ..cfg.quantumness.clone() })?;
                let record = ExperimentRecord {
                    j: spin.j(),
                    state_id: id,
                    lambda_min: lmin,
                    quantumness: report.q,
                    weight_sum: report.weight_sum,
                    state_seed: s.state,
                    eig_seed: s.eig,
                    quantumness_seed: s.q,
                    mixing: Some(a),
                };
                return Ok((GeneratedState { state, record }, attempt));
            }
            Err(Error::NoConvergence(format!(
                "state {id}: no bracketable random state in {} draws",
                cfg.max_resamples + 1
            )))
        })
        .collect();
    let mut states = Vec::with_capacity(n);
    let mut resamples = 0;
    for r in found {
        let (g, attempts) = r?;
        resamples += attempts;
        states.push(g);
    }
    Ok(ZeroLambdaRun { states, resamples })
}

/// lambda_min and Q for `n` random HS states, in state_id order.
pub fn scatter_lambda_vs_q(spin: Spin, n: usize, cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    (0..n)
        .into_par_iter()
        .map(|id| {
            let s = seeds(cfg.seed, id, 0);
            let rho = hs_state(spin, s.state);
            let report = quantumness(&rho, &QuantumnessConfig { seed: s.q, ..cfg.quantumness.clone() })?;
            Ok(ExperimentRecord {
                j: spin.j(),
                state_id: id,
                lambda_min: lambda_min(&rho, &cfg.zsolver, s.eig)?,
                quantumness: report.q,
                weight_sum: report.weight_sum,
                state_seed: s.state,
                eig_seed: s.eig,
                quantumness_seed: s.q,
                mixing: None,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub records: usize,
    pub nonnegative_lambda: usize,
    pub negative_lambda: usize,
    /// Largest Q among states with lambda_min >= 0: how quantum a state can
    /// be while escaping detection.
    pub max_q_undetected: Option<f64>,
    /// Smallest Q among states with lambda_min < 0.
    pub min_q_detected: Option<f64>,
}

pub fn detection_threshold_summary(records: &[ExperimentRecord]) -> DetectionSummary {
    let (neg, nonneg): (Vec<&ExperimentRecord>, Vec<&ExperimentRecord>) =
        records.iter().partition(|r| r.lambda_min < 0.0);
    DetectionSummary {
        records: records.len(),
        nonnegative_lambda: nonneg.len(),
        negative_lambda: neg.len(),
        max_q_undetected: nonneg.iter().map(|r| r.quantumness).reduce(f64::max),
        min_q_detected: neg.iter().map(|r| r.quantumness).reduce(f64::min),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bin_width: f64,
    /// Defaults to [min, max] of the data.
    pub range: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub density: f64,
}

/// Probability-density histogram; the last bin is closed on the right.
pub fn histogram(values: &[f64], spec: &HistogramSpec) -> Result<Vec<HistogramBin>> {
    if values.is_empty() {
        return Err(Error::Undefined("histogram of an empty list".into()));
    }
    if !(spec.bin_width > 0.0) {
        return Err(Error::OutOfRange(format!("bin width {} must be positive", spec.bin_width)));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfRange("non-finite value in histogram input".into()));
    }
    let (lo, hi) = spec.range.unwrap_or_else(|| {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    if let Some(v) = values.iter().find(|&&v| v < lo || v > hi) {
        return Err(Error::OutOfRange(format!("value {v} outside histogram range [{lo}, {hi}]")));
    }
    let w = spec.bin_width;
    let bins = (((hi - lo) / w) - 1e-9).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / w).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = values.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: lo + k as f64 * w,
            hi: lo + (k + 1) as f64 * w,
            count,
            density: count as f64 / (total * w),
        })
        .collect())
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("correlation needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant sequence".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Correlation of (lambda_min, Q) over the records with lambda_min < 0.
pub fn negative_lambda_correlation(records: &[ExperimentRecord]) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.lambda_min < 0.0)
        .map(|r| (r.lambda_min, r.quantumness))
        .unzip();
    pearson(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }

    fn header(self) -> &'static str {
        match self {
            Figure::Fig1 => "j,lambda_min",
            Figure::Fig2 => "j,quantumness",
            Figure::Fig3 | Figure::Fig4 => "j,lambda_min,quantumness",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            _ => Err(Error::OutOfRange(format!("unknown experiment {s:?} (fig1..fig4)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub figure: Figure,
    pub js: Vec<f64>,
    pub samples: usize,
    pub config: ExperimentConfig,
    pub resamples: usize,
    pub detection: DetectionSummary,
    /// (j, correlation of lambda_min and Q over lambda_min < 0), where defined.
    pub correlations: Vec<(f64, Option<f64>)>,
    pub records: Vec<ExperimentRecord>,
}

/// Runs one figure's driver for every listed spin.
pub fn run_figure(figure: Figure, spins: &[Spin], samples: usize, cfg: &ExperimentConfig) -> Result<ExperimentManifest> {
    let mut records = Vec::new();
    let mut resamples = 0;
    let mut correlations = Vec::new();
    for (k, &spin) in spins.iter().enumerate() {
        let sub = ExperimentConfig { seed: derive_seed(cfg.seed, k as u64), ..cfg.clone() };
        let recs = match figure {
            Figure::Fig1 => gen_border_states(spin, samples, &sub)?.into_iter().map(|g| g.record).collect(),
            Figure::Fig2 => {
                let run = gen_zero_lambda_states(spin, samples, &sub)?;
                resamples += run.resamples;
                run.states.into_iter().map(|g| g.record).collect()
            }
            Figure::Fig3 | Figure::Fig4 => scatter_lambda_vs_q(spin, samples, &sub)?,
        };
        if matches!(figure, Figure::Fig3 | Figure::Fig4) {
            correlations.push((spin.j(), negative_lambda_correlation(&recs).ok()));
        }
        records.extend(recs);
    }
    Ok(ExperimentManifest {
        figure,
        js: spins.iter().map(|s| s.j()).collect(),
        samples,
        config: cfg.clone(),
        resamples,
        detection: detection_threshold_summary(&records),
        correlations,
        records,
    })
}

impl ExperimentManifest {
    pub fn csv(&self) -> String {
        let mut out = String::new();
        out.push_str(self.figure.header());
        out.push('\n');
        for r in &self.records {
            let _ = match self.figure {
                Figure::Fig1 => writeln!(out, "{},{}", r.j, r.lambda_min),
                Figure::Fig2 => writeln!(out, "{},{}", r.j, r.quantumness),
                Figure::Fig3 | Figure::Fig4 => writeln!(out, "{},{},{}", r.j, r.lambda_min, r.quantumness),
            };
        }
        out
    }

    /// Writes `<figure>.csv` and `<figure>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.figure.name())), self.csv())?;
        std::fs::write(
            dir.join(format!("{}.json", self.figure.name())),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}
