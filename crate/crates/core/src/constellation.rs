//! PAM level sets, Gray-labeled square QAM and constellation moments.
//!
//! A square QAM constellation is the Cartesian product of two PAM level sets,
//! one per quadrature. Labels are integers of width `2m`: the Gray label of
//! the in-phase level occupies the high `m` bits, the quadrature label the
//! low `m` bits.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported number of bits per quadrature.
pub const MAX_BITS_PER_DIM: u32 = 8;

/// Symmetry tolerance applied to unit-power-normalized levels.
const SYMMETRY_TOL: f64 = 1e-12;

/// Tolerance on E[|X|²] = 1 for a constellation to count as power-normalized.
const UNIT_POWER_TOL: f64 = 1e-12;

fn check_bits(m: u32) -> Result<()> {
    if (1..=MAX_BITS_PER_DIM).contains(&m) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "bits per dimension must be in 1..={MAX_BITS_PER_DIM}, got {m}"
        )))
    }
}

/// Binary-reflected Gray code of length `2^m`, as integers.
///
/// Entry `k` is the label of the `k`-th smallest level.
pub fn gray_labeling(m: u32) -> Result<Vec<u32>> {
    check_bits(m)?;
    Ok((0..1u32 << m).map(|k| k ^ (k >> 1)).collect())
}

/// Per-quadrature amplitude levels of a square constellation.
///
/// Always strictly increasing, symmetric about zero, with a power-of-two count.
/// The scale is free; [`PamLevels::normalized`] rescales so that the 2D product
/// constellation has unit power (mean square 0.5 per quadrature).
#[derive(Debug, Clone, PartialEq)]
pub struct PamLevels {
    levels: Vec<f64>,
}

impl PamLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        let n = levels.len();
        if n < 2 || !n.is_power_of_two() || n > 1 << MAX_BITS_PER_DIM {
            return Err(Error::InvalidInput(format!(
                "level count must be a power of two in 2..={}, got {n}",
                1 << MAX_BITS_PER_DIM
            )));
        }
        if let Some(i) = levels.iter().position(|l| !l.is_finite()) {
            return Err(Error::InvalidInput(format!("level {i} is not finite")));
        }
        if let Some(i) = levels.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "levels must be strictly increasing (levels {i} and {})",
                i + 1
            )));
        }
        let scale = (0.5 / mean_square(&levels)).sqrt();
        for i in 0..n / 2 {
            let asym = (levels[i] + levels[n - 1 - i]) * scale;
            if asym.abs() > SYMMETRY_TOL {
                return Err(Error::InvalidInput(format!(
                    "levels are not symmetric about zero: level {i} + level {} = {asym:e} after normalization",
                    n - 1 - i
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Mirrors a set of positive levels (any order) about zero.
    pub fn from_positive_half(half: &[f64]) -> Result<Self> {
        if let Some(i) = half.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "positive half-level {i} must be finite and > 0"
            )));
        }
        let mut pos = half.to_vec();
        pos.sort_by(f64::total_cmp);
        Self::new(mirror(&pos))
    }

    pub fn bits(&self) -> u32 {
        self.levels.len().trailing_zeros()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.levels
    }

    /// The strictly positive upper half, in increasing order.
    pub fn positive_half(&self) -> &[f64] {
        &self.levels[self.levels.len() / 2..]
    }

    pub fn mean_square(&self) -> f64 {
        mean_square(&self.levels)
    }

    /// Rescaled copy with mean square 0.5 (unit-power 2D product).
    pub fn normalized(&self) -> Self {
        Self {
            levels: normalize_levels(&self.levels),
        }
    }

    /// Returns the levels scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be > 0, got {s}")));
        }
        Ok(Self {
            levels: self.levels.iter().map(|l| l * s).collect(),
        })
    }
}

pub(crate) fn mirror(positive_sorted: &[f64]) -> Vec<f64> {
    positive_sorted
        .iter()
        .rev()
        .map(|l| -l)
        .chain(positive_sorted.iter().copied())
        .collect()
}

pub(crate) fn mean_square(levels: &[f64]) -> f64 {
    levels.iter().map(|l| l * l).sum::<f64>() / levels.len() as f64
}

/// Rescales to mean square 0.5 using the exact discrete mean. A set already
/// at 0.5 (to rounding) is returned unchanged, which makes this idempotent.
pub(crate) fn normalize_levels(levels: &[f64]) -> Vec<f64> {
    let ms = mean_square(levels);
    if (ms - 0.5).abs() <= 4.0 * f64::EPSILON {
        return levels.to_vec();
    }
    let s = (0.5 / ms).sqrt();
    levels.iter().map(|l| l * s).collect()
}

/// Equally spaced levels ±1, ±3, …, ±(2^m − 1), scaled for a unit-power 2D product.
pub fn uniform_levels(m: u32) -> Result<PamLevels> {
    check_bits(m)?;
    let n = 1i64 << m;
    let raw: Vec<f64> = (0..n).map(|k| (2 * k - (n - 1)) as f64).collect();
    // E[L²] = (4^m − 1)/3 for the odd integers.
    let energy = ((n * n - 1) as f64) / 3.0;
    let s = (0.5 / energy).sqrt();
    PamLevels::new(raw.into_iter().map(|l| l * s).collect())
}

/// Complex points with integer bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    bits: u32,
    power_normalized: bool,
}

impl Constellation {
    /// Builds a constellation from points and labels; the labels must be a
    /// permutation of `0..points.len()` and the point count a power of two.
    pub fn new(points: Vec<Complex64>, labels: Vec<u32>) -> Result<Self> {
        let n = points.len();
        if n < 2 || !n.is_power_of_two() || n > 1 << (2 * MAX_BITS_PER_DIM) {
            return Err(Error::InvalidInput(format!(
                "point count must be a power of two in 2..={}, got {n}",
                1u32 << (2 * MAX_BITS_PER_DIM)
            )));
        }
        if labels.len() != n {
            return Err(Error::InvalidInput(format!(
                "{n} points but {} labels",
                labels.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        let mut seen = vec![false; n];
        for (i, &l) in labels.iter().enumerate() {
            let slot = seen.get_mut(l as usize).ok_or_else(|| {
                Error::InvalidInput(format!("label {l:#x} of point {i} exceeds {} bits", n.trailing_zeros()))
            })?;
            if *slot {
                return Err(Error::InvalidInput(format!("label {l:#x} used twice")));
            }
            *slot = true;
        }
        let bits = n.trailing_zeros();
        let power = mean_power(&points);
        if !(power > 0.0) {
            return Err(Error::InvalidInput("constellation has zero power".into()));
        }
        let power_normalized = (power - 1.0).abs() <= UNIT_POWER_TOL;
        Ok(Self {
            points,
            labels,
            bits,
            power_normalized,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Total bits per complex symbol.
    pub fn bits_per_symbol(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_power_normalized(&self) -> bool {
        self.power_normalized
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.points)
    }

    /// Unit-power copy. Returns an identical copy when already normalized.
    pub fn normalized(&self) -> Self {
        if self.power_normalized {
            return self.clone();
        }
        let s = 1.0 / self.mean_power().sqrt();
        Self {
            points: self.points.iter().map(|p| p * s).collect(),
            labels: self.labels.clone(),
            bits: self.bits,
            power_normalized: true,
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be > 0, got {s}")));
        }
        Self::new(self.points.iter().map(|p| p * s).collect(), self.labels.clone())
    }

    /// Recovers the per-quadrature levels if this is a square product of one
    /// level set with itself, labeled with per-axis Gray codes (I bits high).
    pub fn square_levels(&self) -> Option<PamLevels> {
        if !self.bits.is_multiple_of(2) {
            return None;
        }
        let m = self.bits / 2;
        let side = 1usize << m;
        let distinct = |vals: Vec<f64>| -> Vec<f64> {
            let mut v = vals;
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
            v
        };
        let i_levels = distinct(self.points.iter().map(|p| p.re).collect());
        let q_levels = distinct(self.points.iter().map(|p| p.im).collect());
        if i_levels.len() != side || q_levels.len() != side {
            return None;
        }
        if i_levels
            .iter()
            .zip(&q_levels)
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return None;
        }
        let gray = gray_labeling(m).ok()?;
        let index_of = |v: f64| i_levels.iter().position(|l| (l - v).abs() <= 1e-12);
        let mut covered = vec![false; self.points.len()];
        for (p, &label) in self.points.iter().zip(&self.labels) {
            let (a, b) = (index_of(p.re)?, index_of(p.im)?);
            if label != (gray[a] << m) | gray[b] {
                return None;
            }
            let slot = &mut covered[a * side + b];
            if *slot {
                return None;
            }
            *slot = true;
        }
        PamLevels::new(i_levels).ok()
    }
}

fn mean_power(points: &[Complex64]) -> f64 {
    points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64
}

/// Square QAM from two level sets of equal size, renormalized to unit power.
///
/// Points are ordered with the in-phase index major: point `a·2^m + b` is
/// `i_levels[a] + j·q_levels[b]` with label `gray(a) << m | gray(b)`.
pub fn product_constellation(i_levels: &PamLevels, q_levels: &PamLevels) -> Result<Constellation> {
    if i_levels.len() != q_levels.len() {
        return Err(Error::InvalidInput(format!(
            "I and Q level sets differ in size ({} vs {})",
            i_levels.len(),
            q_levels.len()
        )));
    }
    let m = i_levels.bits();
    let gray = gray_labeling(m)?;
    let side = i_levels.len();
    let mut points = Vec::with_capacity(side * side);
    let mut labels = Vec::with_capacity(side * side);
    for (a, &i) in i_levels.as_slice().iter().enumerate() {
        for (b, &q) in q_levels.as_slice().iter().enumerate() {
            points.push(Complex64::new(i, q));
            labels.push((gray[a] << m) | gray[b]);
        }
    }
    Ok(Constellation::new(points, labels)?.normalized())
}

/// Second and fourth absolute moments of an equiprobable constellation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentSummary {
    pub m2: f64,
    pub m4: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(c: &Constellation) -> Result<MomentSummary> {
    moments_of_points(c.points())
}

/// Moments over an arbitrary equiprobable point set (or a sample).
pub fn moments_of_points(points: &[Complex64]) -> Result<MomentSummary> {
    if points.is_empty() {
        return Err(Error::InvalidInput("moments of an empty point set".into()));
    }
    let n = points.len() as f64;
    let (s2, s4) = points.iter().fold((0.0, 0.0), |(s2, s4), p| {
        let e = p.norm_sqr();
        (s2 + e, s4 + e * e)
    });
    let (m2, m4) = (s2 / n, s4 / n);
    if !(m2 > 0.0) {
        return Err(Error::InvalidInput("point set has zero power".into()));
    }
    Ok(MomentSummary {
        m2,
        m4,
        excess_kurtosis: m4 / (m2 * m2) - 2.0,
    })
}

/// Excess kurtosis of the square product of `levels` with itself, from the
/// 1D moments: with μ2 = E[L²] and μ4 = E[L⁴], E|X|⁴/E[|X|²]² = (μ4/μ2² + 1)/2.
pub fn kurtosis_from_levels(levels: &PamLevels) -> f64 {
    kurtosis_from_slice(levels.as_slice())
}

pub(crate) fn kurtosis_from_slice(levels: &[f64]) -> f64 {
    let n = levels.len() as f64;
    let (s2, s4) = levels.iter().fold((0.0, 0.0), |(s2, s4), l| {
        let e = l * l;
        (s2 + e, s4 + e * e)
    });
    let (mu2, mu4) = (s2 / n, s4 / n);
    (mu4 / (mu2 * mu2) + 1.0) / 2.0 - 2.0
}
