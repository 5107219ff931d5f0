//! Generalized mutual information (bit-metric decoding rate) of Gray-labeled
//! constellations over a circularly-symmetric Gaussian channel.
//!
//! Two independent estimators are provided. The quadrature path works on a
//! single quadrature component and doubles the result, relying on I/Q
//! independence of a square constellation. The Monte-Carlo path simulates the
//! full 2D constellation and makes no separability assumption.
//!
//! SNR convention: signal power over total complex noise variance. With unit
//! power each quadrature carries power 1/2 and noise variance 1/(2·SNR), so
//! the per-dimension SNR equals the 2D SNR.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{gray_labeling, mean_square, Constellation, PamLevels};
use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::units::{db_to_linear, linear_to_db};

pub const DEFAULT_QUADRATURE_NODES: usize = 64;
pub const MIN_QUADRATURE_NODES: usize = 10;
pub const MIN_MONTE_CARLO_SAMPLES: u64 = 10_000;
pub const DEFAULT_MONTE_CARLO_SHARDS: usize = 16;

/// Below this a shifted partial sum may have lost the transmitted point to underflow.
const UNDERFLOW_GUARD: f64 = 1e-280;

/// Signal-to-noise ratio per complex symbol (linear, > 0).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChannelSnr(f64);

impl ChannelSnr {
    pub fn from_linear(snr: f64) -> Result<Self> {
        if snr.is_finite() && snr > 0.0 {
            Ok(Self(snr))
        } else {
            Err(Error::InvalidParameter(format!("SNR must be finite and > 0, got {snr}")))
        }
    }

    pub fn from_db(db: f64) -> Result<Self> {
        if !db.is_finite() {
            return Err(Error::InvalidParameter(format!("SNR in dB must be finite, got {db}")));
        }
        Self::from_linear(db_to_linear(db))
    }

    pub fn linear(self) -> f64 {
        self.0
    }

    pub fn db(self) -> f64 {
        linear_to_db(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmiMethod {
    Quadrature,
    MonteCarlo,
}

/// A GMI value in bit per complex (2D) symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmiEstimate {
    pub value: f64,
    pub method: GmiMethod,
    /// Zero for quadrature.
    pub samples: u64,
    /// Standard error of the mean; zero for quadrature.
    pub std_error: f64,
}

impl GmiEstimate {
    /// Dual-polarization figure (2 × the per-2D value), in bit per 4D symbol.
    pub fn value_4d(&self) -> f64 {
        2.0 * self.value
    }
}

/// Bit-metric information of Gray-labeled PAM over a real Gaussian channel, in
/// bit per real dimension. The noise variance is (mean square of the levels)/SNR.
pub fn gmi_quadrature_1d(levels: &PamLevels, snr: ChannelSnr, nodes: usize) -> Result<f64> {
    let rule = quadrature_rule(nodes)?;
    gmi_1d_with_rule(levels.as_slice(), snr, &rule)
}

/// GMI of the square product of `levels` with itself, in bit per 2D symbol.
pub fn gmi_2d(levels: &PamLevels, snr: ChannelSnr, nodes: usize) -> Result<GmiEstimate> {
    Ok(GmiEstimate {
        value: 2.0 * gmi_quadrature_1d(levels, snr, nodes)?,
        method: GmiMethod::Quadrature,
        samples: 0,
        std_error: 0.0,
    })
}

pub(crate) fn quadrature_rule(nodes: usize) -> Result<GaussHermite> {
    if nodes < MIN_QUADRATURE_NODES {
        return Err(Error::InvalidParameter(format!(
            "quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {nodes}"
        )));
    }
    GaussHermite::new(nodes)
}

/// 1D bit-metric information for an arbitrary (possibly degenerate) level
/// slice of power-of-two length. Coincident levels are allowed.
pub(crate) fn gmi_1d_with_rule(levels: &[f64], snr: ChannelSnr, rule: &GaussHermite) -> Result<f64> {
    let n = levels.len();
    let m = n.trailing_zeros();
    let gray = gray_labeling(m)?;
    let sigma2 = mean_square(levels) / snr.linear();
    let inv_2s2 = 1.0 / (2.0 * sigma2);
    let spread = (2.0 * sigma2).sqrt();

    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut loss = 0.0;
    for (i, &x) in levels.iter().enumerate() {
        let mut per_level = 0.0;
        for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
            let y = x + spread * t;
            let mut dmax = f64::NEG_INFINITY;
            for (dj, &xj) in d.iter_mut().zip(levels) {
                let r = y - xj;
                *dj = -r * r * inv_2s2;
                dmax = dmax.max(*dj);
            }
            let mut den = 0.0;
            for (ej, &dj) in e.iter_mut().zip(&d) {
                *ej = (dj - dmax).exp();
                den += *ej;
            }
            let mut node_loss = 0.0;
            for b in 0..m {
                let bit = (gray[i] >> b) & 1;
                let mut num = 0.0;
                for (j, &ej) in e.iter().enumerate() {
                    if (gray[j] >> b) & 1 == bit {
                        num += ej;
                    }
                }
                node_loss += if num > UNDERFLOW_GUARD {
                    (den / num).ln()
                } else {
                    let group = (0..n).filter(|&j| (gray[j] >> b) & 1 == bit).map(|j| d[j]);
                    (dmax + den.ln()) - log_sum_exp(group)
                };
            }
            per_level += w * node_loss;
        }
        loss += per_level;
    }
    let mean_loss = loss / (std::f64::consts::PI.sqrt() * n as f64 * std::f64::consts::LN_2);
    let value = m as f64 - mean_loss;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite GMI at SNR {} dB", snr.db())));
    }
    Ok(value)
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Monte-Carlo settings. The shard count is part of the result's identity:
/// shard `s` draws from the ChaCha stream `s` of `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub samples: u64,
    pub seed: u64,
    pub shards: usize,
}

impl MonteCarloConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            shards: DEFAULT_MONTE_CARLO_SHARDS,
        }
    }
}

pub fn gmi_monte_carlo(c: &Constellation, snr: ChannelSnr, n_samples: u64, seed: u64) -> Result<GmiEstimate> {
    gmi_monte_carlo_with(c, snr, &MonteCarloConfig::new(n_samples, seed))
}

/// Seeded Monte-Carlo GMI on the full 2D constellation.
pub fn gmi_monte_carlo_with(c: &Constellation, snr: ChannelSnr, cfg: &MonteCarloConfig) -> Result<GmiEstimate> {
    if cfg.samples < MIN_MONTE_CARLO_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo needs at least {MIN_MONTE_CARLO_SAMPLES} samples, got {}",
            cfg.samples
        )));
    }
    if cfg.shards == 0 || cfg.shards as u64 > cfg.samples {
        return Err(Error::InvalidParameter(format!("invalid shard count {}", cfg.shards)));
    }
    if !c.is_power_normalized() {
        return Err(Error::InvalidInput(
            "Monte Carlo GMI needs a unit-power constellation".into(),
        ));
    }
    let sim = Simulator::new(c, snr);
    let base = cfg.samples / cfg.shards as u64;
    let extra = cfg.samples % cfg.shards as u64;
    let shards: Vec<Welford> = (0..cfg.shards)
        .into_par_iter()
        .map(|s| {
            let count = base + u64::from((s as u64) < extra);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            sim.run(&mut rng, count)
        })
        .collect();
    let total = shards.iter().fold(Welford::default(), |acc, w| acc.merge(w));
    if !total.mean.is_finite() {
        return Err(Error::Numeric("non-finite Monte Carlo GMI".into()));
    }
    let var = total.m2 / (total.count - 1) as f64;
    Ok(GmiEstimate {
        value: total.mean,
        method: GmiMethod::MonteCarlo,
        samples: total.count,
        std_error: (var / total.count as f64).sqrt(),
    })
}

struct Simulator<'a> {
    points: &'a [Complex64],
    labels: &'a [u32],
    bits: usize,
    noise_sigma: f64,
    inv_n0: f64,
}

impl<'a> Simulator<'a> {
    fn new(c: &'a Constellation, snr: ChannelSnr) -> Self {
        let n0 = 1.0 / snr.linear();
        Self {
            points: c.points(),
            labels: c.labels(),
            bits: c.bits_per_symbol() as usize,
            noise_sigma: (n0 / 2.0).sqrt(),
            inv_n0: 1.0 / n0,
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng, count: u64) -> Welford {
        let n = self.points.len();
        let mut d = vec![0.0; n];
        let mut sums = vec![[0.0f64; 2]; self.bits];
        let mut acc = Welford::default();
        for _ in 0..count {
            let k = rng.random_range(0..n);
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            let y = self.points[k] + Complex64::new(nr, ni) * self.noise_sigma;

            let mut dmax = f64::NEG_INFINITY;
            for (dj, p) in d.iter_mut().zip(self.points) {
                *dj = -(y - p).norm_sqr() * self.inv_n0;
                dmax = dmax.max(*dj);
            }
            sums.iter_mut().for_each(|s| *s = [0.0; 2]);
            let mut den = 0.0;
            for (&dj, &label) in d.iter().zip(self.labels) {
                let ej = (dj - dmax).exp();
                den += ej;
                for (b, s) in sums.iter_mut().enumerate() {
                    s[((label >> b) & 1) as usize] += ej;
                }
            }
            let tx = self.labels[k];
            let mut loss = 0.0;
            for (b, s) in sums.iter().enumerate() {
                let bit = (tx >> b) & 1;
                let num = s[bit as usize];
                loss += if num > UNDERFLOW_GUARD {
                    (den / num).ln()
                } else {
                    let group = d
                        .iter()
                        .zip(self.labels)
                        .filter(|(_, &l)| (l >> b) & 1 == bit)
                        .map(|(&dj, _)| dj);
                    (dmax + den.ln()) - log_sum_exp(group)
                };
            }
            acc.push(self.bits as f64 - loss / std::f64::consts::LN_2);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: &Welford) -> Welford {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Welford { count, mean, m2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{product_constellation, uniform_levels};
    use approx::assert_abs_diff_eq;

    fn snr(db: f64) -> ChannelSnr {
        ChannelSnr::from_db(db).unwrap()
    }

    /// Binary antipodal bit-metric rate via direct numeric integration on a
    /// fine grid; independent of the Hermite rule and of the labeling code.
    fn bpsk_information(snr_lin: f64) -> f64 {
        let sigma = (0.5 / snr_lin).sqrt();
        let a = 0.5f64.sqrt();
        let steps = 200_000;
        let lo = a - 12.0 * sigma;
        let h = 24.0 * sigma / steps as f64;
        let mut acc = 0.0;
        for k in 0..=steps {
            let y = lo + k as f64 * h;
            let pdf = (-(y - a).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let llr = 2.0 * a * y / (sigma * sigma);
            let f = (1.0 + (-llr).exp()).log2();
            let wgt = if k == 0 || k == steps { 0.5 } else { 1.0 };
            acc += wgt * pdf * f;
        }
        1.0 - acc * h
    }

    #[test]
    fn binary_saturates_at_high_snr() {
        let b = uniform_levels(1).unwrap();
        let g = gmi_quadrature_1d(&b, snr(20.0), 64).unwrap();
        assert_abs_diff_eq!(g, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn binary_matches_direct_integration() {
        let b = uniform_levels(1).unwrap();
        for db in [-5.0, 0.0, 5.0, 10.0] {
            let q = gmi_quadrature_1d(&b, snr(db), 64).unwrap();
            assert_abs_diff_eq!(q, bpsk_information(db_to_linear(db)), epsilon = 1e-7);
        }
    }

    #[test]
    fn vanishes_at_very_low_snr() {
        for m in 1..=5 {
            let l = uniform_levels(m).unwrap();
            assert!(gmi_quadrature_1d(&l, snr(-40.0), 64).unwrap() < 1e-3);
        }
    }

    #[test]
    fn qpsk_is_twice_bpsk() {
        let b = uniform_levels(1).unwrap();
        let one = gmi_quadrature_1d(&b, snr(10.0), 64).unwrap();
        let two = gmi_2d(&b, snr(10.0), 64).unwrap();
        assert_eq!(two.value, 2.0 * one);
        assert_eq!(two.method, GmiMethod::Quadrature);
        assert_eq!(two.samples, 0);
        assert_eq!(two.std_error, 0.0);
    }

    #[test]
    fn uniform_256qam_values() {
        // Cross-checked against the Monte-Carlo path in the integration tests.
        let l = uniform_levels(4).unwrap();
        let flat = gmi_quadrature_1d(&l, snr(18.0), 64).unwrap();
        assert_abs_diff_eq!(flat, 2.792798, epsilon = 1e-5);
        // Same levels at the kurtosis-coupled SNR for an 18 dB Gaussian reference.
        let coupled = gmi_2d(&l, snr(18.585_6), 64).unwrap();
        assert_abs_diff_eq!(coupled.value_4d(), 11.56, epsilon = 0.01);
        assert!(gmi_2d(&l, snr(18.0), 64).unwrap().value <= 8.0);
    }

    #[test]
    fn rejects_too_few_nodes() {
        let l = uniform_levels(2).unwrap();
        assert!(matches!(gmi_quadrature_1d(&l, snr(10.0), 9), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn snr_validation() {
        assert!(ChannelSnr::from_linear(0.0).is_err());
        assert!(ChannelSnr::from_linear(f64::INFINITY).is_err());
        assert!(ChannelSnr::from_db(f64::NAN).is_err());
        assert_abs_diff_eq!(snr(13.0).db(), 13.0, epsilon = 1e-12);
    }

    #[test]
    fn monotone_in_snr() {
        for m in [1, 2, 4] {
            let l = uniform_levels(m).unwrap();
            let mut prev = -1.0;
            for k in 0..=120 {
                let db = -20.0 + 0.5 * k as f64;
                let g = gmi_2d(&l, snr(db), 64).unwrap().value;
                assert!(g >= prev - 1e-9, "m={m} at {db} dB: {g} < {prev}");
                assert!((0.0..=2.0 * m as f64 + 1e-9).contains(&g));
                prev = g;
            }
            assert!(prev > 2.0 * m as f64 - 1e-6);
        }
    }

    #[test]
    fn node_count_convergence() {
        let shaped = PamLevels::from_positive_half(&[0.1, 0.14, 0.33, 0.41, 0.61, 0.76, 1.0, 1.32]).unwrap();
        for l in [uniform_levels(2).unwrap(), uniform_levels(4).unwrap(), shaped] {
            for db in [0.0, 10.0, 18.0, 25.0] {
                let a = gmi_quadrature_1d(&l, snr(db), 64).unwrap();
                let b = gmi_quadrature_1d(&l, snr(db), 128).unwrap();
                assert!((a - b).abs() <= 1e-6, "{db} dB: {a} vs {b}");
            }
        }
    }

    #[test]
    fn scale_invariance() {
        let l = uniform_levels(3).unwrap();
        let g0 = gmi_quadrature_1d(&l, snr(12.0), 64).unwrap();
        let g1 = gmi_quadrature_1d(&l.scaled(7.5).unwrap(), snr(12.0), 64).unwrap();
        assert_abs_diff_eq!(g0, g1, epsilon = 1e-12);
    }

    #[test]
    fn coincident_levels_are_finite() {
        let v = [-1.0, -0.5, -0.5, 0.5, 0.5, 0.5, 0.5, 1.0];
        let rule = quadrature_rule(64).unwrap();
        let g = gmi_1d_with_rule(&v, snr(15.0), &rule).unwrap();
        assert!(g.is_finite() && g < 3.0);
    }

    #[test]
    fn monte_carlo_qpsk_high_snr() {
        let b = uniform_levels(1).unwrap();
        let c = product_constellation(&b, &b).unwrap();
        let est = gmi_monte_carlo(&c, snr(30.0), 100_000, 3).unwrap();
        assert_eq!(est.method, GmiMethod::MonteCarlo);
        assert_eq!(est.samples, 100_000);
        // Every sample carries essentially two bits, so the spread is tiny.
        assert!((est.value - 2.0).abs() <= 3.0 * est.std_error + 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let l = uniform_levels(2).unwrap();
        let c = product_constellation(&l, &l).unwrap();
        let a = gmi_monte_carlo(&c, snr(8.0), 20_000, 99).unwrap();
        let b = gmi_monte_carlo(&c, snr(8.0), 20_000, 99).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let other = gmi_monte_carlo(&c, snr(8.0), 20_000, 100).unwrap();
        assert_ne!(a.value, other.value);
        assert!(a.std_error > 0.0);
    }

    #[test]
    fn monte_carlo_preconditions() {
        let l = uniform_levels(2).unwrap();
        let c = product_constellation(&l, &l).unwrap();
        assert!(matches!(gmi_monte_carlo(&c, snr(8.0), 9_999, 1), Err(Error::InvalidParameter(_))));
        let scaled = c.scaled(2.0).unwrap();
        assert!(matches!(gmi_monte_carlo(&scaled, snr(8.0), 10_000, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature_16qam() {
        let l = uniform_levels(2).unwrap();
        let c = product_constellation(&l, &l).unwrap();
        let q = gmi_2d(&l, snr(9.0), 64).unwrap().value;
        let mc = gmi_monte_carlo(&c, snr(9.0), 200_000, 5).unwrap();
        assert!((q - mc.value).abs() <= 3.0 * mc.std_error, "{q} vs {mc:?}");
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Welford::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (a, b) = xs.split_at(313);
        let mut wa = Welford::default();
        a.iter().for_each(|&x| wa.push(x));
        let mut wb = Welford::default();
        b.iter().for_each(|&x| wb.push(x));
        let merged = wa.merge(&wb);
        assert_eq!(merged.count, whole.count);
        assert_abs_diff_eq!(merged.mean, whole.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(merged.m2, whole.m2, epsilon = 1e-8);
    }
}
