//! Closed-form fibre link model.
//!
//! The NLI power is η_tot·P³ with η_tot = η₁ + η₂·K, K the excess kurtosis of
//! the transmitted constellation. Together with ASE noise and a transceiver
//! noise floor proportional to signal power, the effective SNR at launch
//! power P is
//!
//! ```text
//! SNR(P) = P / (p_ase + η_tot·P³ + P/SNR_btb)
//! ```
//!
//! Powers are in watts and η in W⁻² throughout; files use dBm and dB re 1 W⁻².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmi::ChannelSnr;
use crate::units::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm};

/// Modulation-independent (η₁) and kurtosis-dependent (η₂) NLI coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NliCoefficients {
    eta1: f64,
    eta2: f64,
}

impl NliCoefficients {
    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        if !(eta1.is_finite() && eta1 >= 0.0 && eta2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need finite η₁ ≥ 0 and finite η₂, got η₁ = {eta1}, η₂ = {eta2}"
            )));
        }
        if eta1 == 0.0 && eta2 != 0.0 {
            return Err(Error::InvalidParameter("η₂ must be zero when η₁ is zero".into()));
        }
        Ok(Self { eta1, eta2 })
    }

    /// η₂ = c·η₁.
    pub fn from_eta1_and_c(eta1: f64, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!("c must be finite, got {c}")));
        }
        Self::new(eta1, c * eta1)
    }

    /// A modulation-independent coefficient (η₂ = 0), as obtained from a
    /// per-constellation fit.
    pub fn fixed(eta_tot: f64) -> Result<Self> {
        Self::new(eta_tot, 0.0)
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    /// c = η₂/η₁ (zero when η₁ = 0).
    pub fn c(&self) -> f64 {
        if self.eta1 > 0.0 {
            self.eta2 / self.eta1
        } else {
            0.0
        }
    }
}

fn check_validity(c: f64, kurtosis: f64) -> Result<()> {
    if !kurtosis.is_finite() {
        return Err(Error::ModelDomain(format!("kurtosis {kurtosis} is not finite")));
    }
    let v = 1.0 + c * kurtosis;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::ModelDomain(format!(
            "1 + c·K = {v} ≤ 0 (c = {c}, K = {kurtosis}); NLI model invalid"
        )))
    }
}

/// η_tot = η₁ + η₂·K, in W⁻².
pub fn eta_tot(nli: &NliCoefficients, kurtosis: f64) -> Result<f64> {
    check_validity(nli.c(), kurtosis)?;
    Ok(nli.eta1 + nli.eta2 * kurtosis)
}

/// Ratio SNR_opt,A / SNR_opt,B = ((1 + c·K_B)/(1 + c·K_A))^(1/3) between two
/// constellations on the same ASE/NLI-limited link.
pub fn snr_opt_ratio(c: f64, k_a: f64, k_b: f64) -> Result<f64> {
    check_validity(c, k_a)?;
    check_validity(c, k_b)?;
    Ok(((1.0 + c * k_b) / (1.0 + c * k_a)).cbrt())
}

/// The optimum SNR of a constellation with kurtosis `kurtosis`, given the
/// optimum SNR a Gaussian-modulated signal (K = 0) would reach on the same link.
pub fn kurtosis_coupled_snr(snr_ref_gaussian: ChannelSnr, c: f64, kurtosis: f64) -> Result<ChannelSnr> {
    let ratio = snr_opt_ratio(c, kurtosis, 0.0)?;
    ChannelSnr::from_linear(snr_ref_gaussian.linear() * ratio)
}

/// ASE noise, NLI coefficients and transceiver (back-to-back) SNR of a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Total ASE noise power in the signal bandwidth, W.
    pub p_ase: f64,
    pub nli: NliCoefficients,
    /// Linear back-to-back SNR; `f64::INFINITY` means no transceiver noise.
    pub snr_btb: f64,
}

impl LinkParams {
    pub fn new(p_ase: f64, nli: NliCoefficients, snr_btb: f64) -> Result<Self> {
        if !(p_ase.is_finite() && p_ase > 0.0) {
            return Err(Error::InvalidParameter(format!("p_ase must be > 0 W, got {p_ase}")));
        }
        if !(snr_btb > 0.0) || snr_btb.is_nan() {
            return Err(Error::InvalidParameter(format!("back-to-back SNR must be > 0, got {snr_btb}")));
        }
        Ok(Self { p_ase, nli, snr_btb })
    }

    /// Total noise power N(P) for a constellation of kurtosis `kurtosis`.
    pub fn noise_power(&self, kurtosis: f64, launch_power: f64) -> Result<f64> {
        let eta = eta_tot(&self.nli, kurtosis)?;
        Ok(self.p_ase + eta * launch_power.powi(3) + launch_power / self.snr_btb)
    }

    pub fn to_file(&self) -> Result<LinkParamsFile> {
        let (eta_tot_db, eta1_db, c) = if self.nli.eta2 == 0.0 {
            (Some(finite_db(self.nli.eta1, "η_tot")?), None, None)
        } else {
            (None, Some(finite_db(self.nli.eta1, "η₁")?), Some(self.nli.c()))
        };
        Ok(LinkParamsFile {
            p_ase_dbm: watts_to_dbm(self.p_ase),
            eta_tot_db_per_w2: eta_tot_db,
            eta1_db_per_w2: eta1_db,
            c,
            snr_btb_db: self.snr_btb.is_finite().then(|| linear_to_db(self.snr_btb)),
        })
    }

    pub fn from_file(f: &LinkParamsFile) -> Result<Self> {
        let nli = match (f.eta_tot_db_per_w2, f.eta1_db_per_w2, f.c) {
            (Some(tot), None, None) => NliCoefficients::fixed(db_to_linear(tot))?,
            (None, Some(eta1), Some(c)) => NliCoefficients::from_eta1_and_c(db_to_linear(eta1), c)?,
            _ => {
                return Err(Error::InvalidInput(
                    "link file needs exactly one of `eta_tot_db_per_w2` or (`eta1_db_per_w2`, `c`)".into(),
                ))
            }
        };
        let snr_btb = f.snr_btb_db.map_or(f64::INFINITY, db_to_linear);
        Self::new(dbm_to_watts(f.p_ase_dbm), nli, snr_btb)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file()?)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

fn finite_db(x: f64, what: &str) -> Result<f64> {
    let db = linear_to_db(x);
    if db.is_finite() {
        Ok(db)
    } else {
        Err(Error::InvalidInput(format!("{what} = {x} has no finite dB value")))
    }
}

/// On-disk form of [`LinkParams`]. Exactly one η form must be present; a
/// missing `snr_btb_db` means no transceiver noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParamsFile {
    pub p_ase_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_tot_db_per_w2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1_db_per_w2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_btb_db: Option<f64>,
}

pub fn effective_snr(link: &LinkParams, kurtosis: f64, launch_power: f64) -> Result<ChannelSnr> {
    if !(launch_power.is_finite() && launch_power > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "launch power must be > 0 W, got {launch_power}"
        )));
    }
    let n = link.noise_power(kurtosis, launch_power)?;
    ChannelSnr::from_linear(launch_power / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaunchOptimum {
    /// W.
    pub power: f64,
    pub snr: ChannelSnr,
}

const GRID_LO_W: f64 = 1e-15;
const GRID_HI_W: f64 = 1e5;
const GRID_POINTS: usize = 2001;

/// Numerically maximizes [`effective_snr`] over launch power: a log grid
/// locates the peak, then bisection on the sign of dSNR/dP polishes it.
pub fn optimal_launch_power(link: &LinkParams, kurtosis: f64) -> Result<LaunchOptimum> {
    let eta = eta_tot(&link.nli, kurtosis)?;
    if !(eta > 0.0) {
        return Err(Error::ModelDomain(format!(
            "η_tot = {eta} ≤ 0: SNR increases monotonically, no optimum launch power"
        )));
    }
    let step = (GRID_HI_W / GRID_LO_W).ln() / (GRID_POINTS - 1) as f64;
    let grid_power = |k: usize| GRID_LO_W * (step * k as f64).exp();
    let snr_at = |p: f64| p / (link.p_ase + eta * p.powi(3) + p / link.snr_btb);
    let best = (0..GRID_POINTS)
        .max_by(|&a, &b| snr_at(grid_power(a)).total_cmp(&snr_at(grid_power(b))))
        .expect("grid is non-empty");
    if best == 0 || best == GRID_POINTS - 1 {
        return Err(Error::Numeric(format!(
            "SNR peak outside the {GRID_LO_W:e}..{GRID_HI_W:e} W search range"
        )));
    }
    // d/dP [P/N] has the sign of N − P·N'.
    let slope_sign = |p: f64| {
        let n = link.p_ase + eta * p.powi(3) + p / link.snr_btb;
        let dn = 3.0 * eta * p * p + 1.0 / link.snr_btb;
        n - p * dn
    };
    let (mut lo, mut hi) = (grid_power(best - 1), grid_power(best + 1));
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if slope_sign(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let power = (lo * hi).sqrt();
    Ok(LaunchOptimum {
        power,
        snr: effective_snr(link, kurtosis, power)?,
    })
}

/// ASE/NLI-only optimum: P* = (p_ase/(2·η_tot))^(1/3), SNR* = P*/(1.5·p_ase).
pub fn closed_form_optimum(p_ase: f64, eta_tot: f64) -> Result<LaunchOptimum> {
    if !(p_ase > 0.0 && eta_tot > 0.0) {
        return Err(Error::ModelDomain(format!(
            "closed-form optimum needs p_ase > 0 and η_tot > 0 (got {p_ase}, {eta_tot})"
        )));
    }
    let power = (p_ase / (2.0 * eta_tot)).cbrt();
    Ok(LaunchOptimum {
        power,
        snr: ChannelSnr::from_linear(power / (1.5 * p_ase))?,
    })
}
