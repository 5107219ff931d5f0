//! GMI-maximizing geometric shaping of symmetric PAM levels.
//!
//! Levels are parameterized by log-increments: with free vector `u` of length
//! `2^(m−1)`, the positive half is `level_k = Σ_{j≤k} exp(u_j)`, mirrored about
//! zero and normalized to unit 2D power. Any real `u` yields ordered,
//! symmetric levels, so plain unconstrained BFGS applies.
//!
//! In nonlinearity-tailored mode each candidate is evaluated at the SNR its
//! own excess kurtosis would reach on a link whose Gaussian-modulation optimum
//! SNR is the reference SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bfgs::{self, BfgsConfig, Minimum};
use crate::constellation::{kurtosis_from_slice, mirror, normalize_levels, uniform_levels, PamLevels};
use crate::error::{Error, Result};
use crate::gmi::{gmi_1d_with_rule, quadrature_rule, ChannelSnr, DEFAULT_QUADRATURE_NODES};
use crate::link::kurtosis_coupled_snr;
use crate::quadrature::GaussHermite;

/// Normalized levels closer than this are merged before evaluation.
const MERGE_TOL: f64 = 1e-9;

/// Smallest increment kept when turning an optimum into levels, as a fraction
/// of the largest positive level; keeps collapsed pairs apart by more than
/// [`MERGE_TOL`] after normalization.
const MIN_INCREMENT_FRACTION: f64 = 4e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    /// Evaluate the start levels without optimizing.
    UniformBaseline,
    /// Maximize GMI at the reference SNR.
    AwgnTailored,
    /// Maximize GMI at the kurtosis-coupled SNR.
    NonlinearityTailored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingProblem {
    pub bits_per_dim: u32,
    pub mode: ShapingMode,
    /// Optimum SNR of Gaussian modulation on the target link (the design axis).
    pub snr_ref: ChannelSnr,
    /// η₂/η₁; only used in nonlinearity-tailored mode.
    pub c: f64,
    pub quadrature_nodes: usize,
}

impl ShapingProblem {
    pub fn new(bits_per_dim: u32, mode: ShapingMode, snr_ref: ChannelSnr, c: f64) -> Self {
        Self {
            bits_per_dim,
            mode,
            snr_ref,
            c,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=crate::constellation::MAX_BITS_PER_DIM).contains(&self.bits_per_dim) {
            return Err(Error::InvalidParameter(format!(
                "bits per dimension must be in 1..=8, got {}",
                self.bits_per_dim
            )));
        }
        if self.mode == ShapingMode::NonlinearityTailored && !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!("c must be finite, got {}", self.c)));
        }
        quadrature_rule(self.quadrature_nodes).map(|_| ())
    }

    /// SNR at which levels of excess kurtosis `kurtosis` are scored.
    pub fn evaluation_snr(&self, kurtosis: f64) -> Result<ChannelSnr> {
        match self.mode {
            ShapingMode::UniformBaseline | ShapingMode::AwgnTailored => Ok(self.snr_ref),
            ShapingMode::NonlinearityTailored => kurtosis_coupled_snr(self.snr_ref, self.c, kurtosis),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub bfgs: BfgsConfig,
    /// Perturbed restarts in addition to the run from the given start.
    pub restarts: usize,
    /// Standard deviation of the lognormal perturbation of each start level.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            bfgs: BfgsConfig::default(),
            restarts: 5,
            perturbation: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingResult {
    #[serde(serialize_with = "ser_levels", deserialize_with = "de_levels")]
    pub levels: PamLevels,
    pub gmi_2d: f64,
    /// 2 × `gmi_2d` (dual-polarization convention).
    pub gmi_4d: f64,
    pub kurtosis: f64,
    pub effective_snr_db: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn ser_levels<S: Serializer>(l: &PamLevels, s: S) -> std::result::Result<S::Ok, S::Error> {
    l.as_slice().serialize(s)
}

fn de_levels<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PamLevels, D::Error> {
    PamLevels::new(Vec::<f64>::deserialize(d)?).map_err(serde::de::Error::custom)
}

/// Mirrored, unit-power levels from log-increments. Ties are possible when
/// increments underflow; `None` if anything is non-finite.
fn raw_levels_from_free(u: &[f64]) -> Option<Vec<f64>> {
    let mut acc = 0.0;
    let mut pos = Vec::with_capacity(u.len());
    for &ui in u {
        acc += ui.exp();
        pos.push(acc);
    }
    if !(acc.is_finite() && acc > 0.0) {
        return None;
    }
    let levels = normalize_levels(&mirror(&pos));
    levels.iter().all(|l| l.is_finite()).then_some(levels)
}

pub fn levels_from_free(u: &[f64]) -> Result<PamLevels> {
    if u.is_empty() || !u.len().is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "free vector length must be a power of two, got {}",
            u.len()
        )));
    }
    let raw = raw_levels_from_free(u)
        .ok_or_else(|| Error::InvalidInput("free parameters give non-finite levels".into()))?;
    PamLevels::new(raw)
}

/// Like [`levels_from_free`], but increments that have collapsed towards zero
/// are raised to [`MIN_INCREMENT_FRACTION`] of the total so the levels stay
/// strictly increasing.
fn separated_levels_from_free(u: &[f64]) -> Result<PamLevels> {
    let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("optimum has non-finite free parameters".into()));
    }
    let inc: Vec<f64> = u.iter().map(|&ui| (ui - top).exp()).collect();
    let floor = MIN_INCREMENT_FRACTION * inc.iter().sum::<f64>();
    let clamped: Vec<f64> = inc.iter().map(|&d| d.max(floor).ln()).collect();
    levels_from_free(&clamped)
}

/// Inverse of [`levels_from_free`] up to scale.
pub fn free_from_levels(levels: &PamLevels) -> Vec<f64> {
    let half = levels.positive_half();
    let mut prev = 0.0;
    half.iter()
        .map(|&l| {
            let u = (l - prev).ln();
            prev = l;
            u
        })
        .collect()
}

/// Snaps runs of levels closer than [`MERGE_TOL`] to their mean.
fn merge_close(levels: &mut [f64]) {
    let mut start = 0;
    while start < levels.len() {
        let mut end = start + 1;
        while end < levels.len() && levels[end] - levels[end - 1] < MERGE_TOL {
            end += 1;
        }
        if end - start > 1 {
            let mean = levels[start..end].iter().sum::<f64>() / (end - start) as f64;
            levels[start..end].iter_mut().for_each(|l| *l = mean);
        }
        start = end;
    }
}

struct Evaluator {
    problem: ShapingProblem,
    rule: GaussHermite,
}

impl Evaluator {
    fn new(problem: &ShapingProblem) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            problem: *problem,
            rule: quadrature_rule(problem.quadrature_nodes)?,
        })
    }

    /// (gmi_2d, kurtosis, evaluation SNR) of unit-power levels.
    fn score(&self, levels: &[f64]) -> Result<(f64, f64, ChannelSnr)> {
        let k = kurtosis_from_slice(levels);
        let snr = self.problem.evaluation_snr(k)?;
        Ok((2.0 * gmi_1d_with_rule(levels, snr, &self.rule)?, k, snr))
    }

    fn score_free(&self, u: &[f64]) -> f64 {
        raw_levels_from_free(u)
            .map(|mut l| {
                merge_close(&mut l);
                l
            })
            .and_then(|l| self.score(&l).ok())
            .map_or(f64::NAN, |(g, _, _)| g)
    }
}

/// GMI (bit per 2D symbol) of the symmetric level set with the given positive
/// half, under the problem's evaluation rule. Scale-free; near-coincident
/// levels are merged rather than rejected.
pub fn objective(positive_half: &[f64], problem: &ShapingProblem) -> Result<f64> {
    let expected = 1usize << (problem.bits_per_dim - 1).min(31);
    if positive_half.len() != expected {
        return Err(Error::InvalidInput(format!(
            "expected {expected} free parameters, got {}",
            positive_half.len()
        )));
    }
    if let Some(i) = positive_half.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidInput(format!("free parameter {i} must be finite and > 0")));
    }
    let mut pos = positive_half.to_vec();
    pos.sort_by(f64::total_cmp);
    let mut levels = normalize_levels(&mirror(&pos));
    merge_close(&mut levels);
    Ok(Evaluator::new(problem)?.score(&levels)?.0)
}

fn assemble(ev: &Evaluator, levels: PamLevels, iterations: usize, converged: bool) -> Result<ShapingResult> {
    let (gmi_2d, kurtosis, snr) = ev.score(levels.as_slice())?;
    Ok(ShapingResult {
        levels,
        gmi_2d,
        gmi_4d: 2.0 * gmi_2d,
        kurtosis,
        effective_snr_db: snr.db(),
        iterations,
        converged,
    })
}

/// Multi-start BFGS maximization of [`objective`].
///
/// The first run starts from `init`; each restart starts from `init` with
/// every positive level multiplied by `exp(perturbation·N(0,1))`, drawn from
/// ChaCha stream `r` of `config.seed`. The best run by GMI wins, ties going to
/// the earliest, so the result never scores below `init`.
pub fn optimize(problem: &ShapingProblem, init: &PamLevels, config: &OptimizerConfig) -> Result<ShapingResult> {
    let ev = Evaluator::new(problem)?;
    if init.bits() != problem.bits_per_dim {
        return Err(Error::InvalidStart(format!(
            "start has {} bits per dimension, problem has {}",
            init.bits(),
            problem.bits_per_dim
        )));
    }
    let init = init.normalized();
    if problem.mode == ShapingMode::UniformBaseline {
        return assemble(&ev, init, 0, true);
    }
    let u0 = free_from_levels(&init);
    if !ev.score_free(&u0).is_finite() {
        return Err(Error::InvalidStart("objective is not finite at the start levels".into()));
    }

    let mut starts = vec![u0];
    for r in 1..=config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let half: Vec<f64> = init
            .positive_half()
            .iter()
            .map(|&l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                l * (config.perturbation * z).exp()
            })
            .collect();
        starts.push(free_from_levels(&PamLevels::from_positive_half(&half)?));
    }

    let runs: Vec<Minimum> = starts
        .par_iter()
        .map(|u| bfgs::minimize(|x| -ev.score_free(x), u, &config.bfgs))
        .collect::<Result<_>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.f.total_cmp(&b.f).then(ia.cmp(ib)))
        .map(|(_, m)| m)
        .expect("at least one run");
    assemble(&ev, separated_levels_from_free(&best.x)?, best.iterations, best.converged)
}

/// One SNR point of a design curve. All GMIs in bit per 4D symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    /// Gaussian-reference optimum SNR.
    pub snr_db: f64,
    /// Uniform levels at the kurtosis-coupled SNR.
    pub uniform_gmi_4d: f64,
    /// AWGN-tailored levels at the kurtosis-coupled SNR.
    pub awgn_gmi_4d: f64,
    /// Nonlinearity-tailored levels at the kurtosis-coupled SNR.
    pub nonlinear_gmi_4d: f64,
    /// Uniform levels at the reference SNR itself.
    pub uniform_flat_gmi_4d: f64,
    /// AWGN-tailored levels at the reference SNR itself (their design objective).
    pub awgn_flat_gmi_4d: f64,
    pub awgn_kurtosis: f64,
    pub nonlinear_kurtosis: f64,
    pub awgn_levels: Vec<f64>,
    pub nonlinear_levels: Vec<f64>,
}

pub const DESIGN_SNR_RANGE_DB: (f64, f64) = (10.0, 30.0);

/// Uniform, AWGN-tailored and nonlinearity-tailored performance across a grid
/// of Gaussian-reference SNRs. Each grid point warm-starts from the previous
/// point's solutions; `template.mode` is ignored.
pub fn design_curve(template: &ShapingProblem, snr_grid_db: &[f64], config: &OptimizerConfig) -> Result<Vec<DesignPoint>> {
    let (lo, hi) = DESIGN_SNR_RANGE_DB;
    if let Some(bad) = snr_grid_db.iter().find(|s| !(lo..=hi).contains(*s)) {
        return Err(Error::InvalidParameter(format!(
            "design SNR {bad} dB outside {lo}..={hi} dB"
        )));
    }
    let uniform = uniform_levels(template.bits_per_dim)?;
    let mut warm_awgn = uniform.clone();
    let mut warm_nl = uniform.clone();
    let mut out = Vec::with_capacity(snr_grid_db.len());
    for &snr_db in snr_grid_db {
        let snr_ref = ChannelSnr::from_db(snr_db)?;
        let with_mode = |mode| ShapingProblem {
            mode,
            snr_ref,
            ..*template
        };
        let flat = with_mode(ShapingMode::AwgnTailored);
        let coupled = with_mode(ShapingMode::NonlinearityTailored);

        let awgn = optimize_dominating(&flat, &warm_awgn, &uniform, config)?;
        let nl = optimize_dominating(&coupled, &warm_nl, &uniform, config)?;
        let score = |p: &ShapingProblem, l: &PamLevels| -> Result<f64> {
            Ok(2.0 * Evaluator::new(p)?.score(l.as_slice())?.0)
        };
        out.push(DesignPoint {
            snr_db,
            uniform_gmi_4d: score(&coupled, &uniform)?,
            awgn_gmi_4d: score(&coupled, &awgn.levels)?,
            nonlinear_gmi_4d: nl.gmi_4d,
            uniform_flat_gmi_4d: score(&flat, &uniform)?,
            awgn_flat_gmi_4d: awgn.gmi_4d,
            awgn_kurtosis: awgn.kurtosis,
            nonlinear_kurtosis: nl.kurtosis,
            awgn_levels: awgn.levels.as_slice().to_vec(),
            nonlinear_levels: nl.levels.as_slice().to_vec(),
        });
        warm_awgn = awgn.levels;
        warm_nl = nl.levels;
    }
    Ok(out)
}

/// Optimizes from a warm start, falling back to the uniform start if the warm
/// start lands below what uniform levels achieve.
fn optimize_dominating(
    problem: &ShapingProblem,
    warm: &PamLevels,
    uniform: &PamLevels,
    config: &OptimizerConfig,
) -> Result<ShapingResult> {
    let res = optimize(problem, warm, config)?;
    let baseline = objective(uniform.positive_half(), problem)?;
    if res.gmi_2d >= baseline || warm == uniform {
        return Ok(res);
    }
    optimize(problem, uniform, config)
}
