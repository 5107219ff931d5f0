//! Launch-power sweeps over a modelled link, link-parameter fitting from
//! measured (power, SNR) pairs, and the reference link calibration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{kurtosis_from_levels, PamLevels};
use crate::error::{Error, Result};
use crate::formats::{MeasuredRow, SweepRow};
use crate::gmi::{gmi_1d_with_rule, quadrature_rule, DEFAULT_QUADRATURE_NODES};
use crate::link::{effective_snr, eta_tot, optimal_launch_power, LinkParams, LinkParamsFile, NliCoefficients};
use crate::units::{db_to_linear, dbm_to_watts, linear_to_db};

/// SNR and GMI of one constellation across launch powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub constellation_id: String,
    /// Sorted by increasing launch power.
    pub rows: Vec<SweepRow>,
    pub link: LinkParams,
    pub kurtosis: f64,
}

impl SweepCurve {
    /// Row of maximum GMI (earliest on ties).
    pub fn peak_gmi(&self) -> &SweepRow {
        self.peak_by(|r| r.gmi_2d)
    }

    /// Row of maximum SNR (earliest on ties).
    pub fn peak_snr(&self) -> &SweepRow {
        self.peak_by(|r| r.snr_db)
    }

    fn peak_by(&self, key: impl Fn(&SweepRow) -> f64) -> &SweepRow {
        self.rows
            .iter()
            .reduce(|best, r| if key(r) > key(best) { r } else { best })
            .expect("sweep curves are non-empty")
    }
}

pub const DEFAULT_GRID_START_DBM: f64 = -2.0;
pub const DEFAULT_GRID_STOP_DBM: f64 = 7.0;
pub const DEFAULT_GRID_STEP_DB: f64 = 0.25;

/// −2 to +7 dBm in 0.25 dB steps.
pub fn default_power_grid_dbm() -> Vec<f64> {
    power_grid_dbm(DEFAULT_GRID_START_DBM, DEFAULT_GRID_STOP_DBM, DEFAULT_GRID_STEP_DB)
        .expect("default grid is valid")
}

/// `start, start + step, …` up to and including `stop` (within 1e-9 dB).
pub fn power_grid_dbm(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
        return Err(Error::InvalidParameter(format!(
            "power grid needs finite start ≤ stop and step > 0 (got {start}, {stop}, {step})"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + step * k as f64).collect())
}

/// Evaluates SNR from the link model and GMI at that SNR for every grid power.
pub fn run_sweep(
    constellation_id: &str,
    levels: &PamLevels,
    link: &LinkParams,
    power_grid_dbm: &[f64],
) -> Result<SweepCurve> {
    if power_grid_dbm.is_empty() {
        return Err(Error::InvalidParameter("power grid is empty".into()));
    }
    if power_grid_dbm.iter().any(|p| !p.is_finite()) || power_grid_dbm.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "power grid must be finite and strictly increasing".into(),
        ));
    }
    let kurtosis = kurtosis_from_levels(levels);
    eta_tot(&link.nli, kurtosis).map_err(|e| match e {
        Error::ModelDomain(msg) => Error::ModelDomain(format!("constellation `{constellation_id}` (K = {kurtosis}): {msg}")),
        other => other,
    })?;
    let levels = levels.normalized();
    let rule = quadrature_rule(DEFAULT_QUADRATURE_NODES)?;
    let rows = power_grid_dbm
        .par_iter()
        .map(|&power_dbm| {
            let snr = effective_snr(link, kurtosis, dbm_to_watts(power_dbm))?;
            let gmi_2d = 2.0 * gmi_1d_with_rule(levels.as_slice(), snr, &rule)?;
            Ok(SweepRow {
                power_dbm,
                snr_db: snr.db(),
                gmi_2d,
                gmi_4d: 2.0 * gmi_2d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve {
        constellation_id: constellation_id.to_string(),
        rows,
        link: *link,
        kurtosis,
    })
}

pub const MIN_MEASURED_ROWS: usize = 4;
pub const MIN_MEASURED_SPAN_DB: f64 = 6.0;

/// Measured (launch power, SNR) pairs for one constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSweep {
    rows: Vec<MeasuredRow>,
    pub source: String,
}

impl MeasuredSweep {
    /// Requires at least four finite rows spanning at least 6 dB of power.
    pub fn new(rows: Vec<MeasuredRow>, source: impl Into<String>) -> Result<Self> {
        if rows.len() < MIN_MEASURED_ROWS {
            return Err(Error::Fit(format!(
                "need at least {MIN_MEASURED_ROWS} measured rows, got {}",
                rows.len()
            )));
        }
        if rows.iter().any(|r| !(r.power_dbm.is_finite() && r.snr_db.is_finite())) {
            return Err(Error::InvalidInput("measured rows must be finite".into()));
        }
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.power_dbm), hi.max(r.power_dbm))
        });
        if hi - lo < MIN_MEASURED_SPAN_DB {
            return Err(Error::Fit(format!(
                "measured powers span {:.3} dB, need at least {MIN_MEASURED_SPAN_DB} dB",
                hi - lo
            )));
        }
        Ok(Self {
            rows,
            source: source.into(),
        })
    }

    pub fn rows(&self) -> &[MeasuredRow] {
        &self.rows
    }

    /// Noise-free measurements of `link` for a constellation of kurtosis `kurtosis`.
    pub fn synthetic(link: &LinkParams, kurtosis: f64, power_grid_dbm: &[f64]) -> Result<Self> {
        let rows = power_grid_dbm
            .iter()
            .map(|&power_dbm| {
                Ok(MeasuredRow {
                    power_dbm,
                    snr_db: effective_snr(link, kurtosis, dbm_to_watts(power_dbm))?.db(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, "synthetic")
    }
}

/// A noise term whose largest share of the total noise over the measured
/// rows is below this fraction is reported as unidentifiable.
pub const IDENTIFIABILITY_FRACTION: f64 = 0.01;

/// Largest fraction of the total modelled noise each term reaches over the
/// measured powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermShares {
    pub ase: f64,
    pub nli: f64,
    pub transceiver: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Fitted link; η is a single per-constellation value (η₂ = 0).
    pub link: LinkParams,
    pub residual_rms_db: f64,
    pub rows: usize,
    /// Whether the back-to-back SNR was fixed rather than fitted.
    pub snr_btb_fixed: bool,
    pub max_shares: TermShares,
    /// Names of terms the data cannot pin down (`p_ase`, `eta_tot`, `snr_btb`).
    pub unidentifiable: Vec<String>,
}

impl FitReport {
    pub fn is_identifiable(&self) -> bool {
        self.unidentifiable.is_empty()
    }

    pub fn to_file(&self) -> Result<FitReportFile> {
        Ok(FitReportFile {
            link: self.link.to_file()?,
            residual_rms_db: self.residual_rms_db,
            rows: self.rows,
            snr_btb_fixed: self.snr_btb_fixed,
            max_shares: self.max_shares,
            unidentifiable: self.unidentifiable.clone(),
        })
    }
}

/// JSON form of [`FitReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportFile {
    pub link: LinkParamsFile,
    pub residual_rms_db: f64,
    pub rows: usize,
    pub snr_btb_fixed: bool,
    pub max_shares: TermShares,
    pub unidentifiable: Vec<String>,
}

/// Least squares with Householder QR; columns are rescaled to unit max-norm
/// first. Returns `None` if the design matrix is rank deficient.
fn least_squares(columns: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let m = target.len();
    let n = columns.len();
    if m < n {
        return None;
    }
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .collect();
    if scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return None;
    }
    let mut a: Vec<Vec<f64>> = columns
        .iter()
        .zip(&scales)
        .map(|(c, s)| c.iter().map(|v| v / s).collect())
        .collect();
    let mut b = target.to_vec();
    for k in 0..n {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vv = v.iter().map(|x| x * x).sum::<f64>();
        if vv > 0.0 {
            let reflect = |col: &mut [f64]| {
                let d = col[k..].iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vv;
                col[k..].iter_mut().zip(&v).for_each(|(x, y)| *x -= d * y);
            };
            for col in a.iter_mut().skip(k) {
                reflect(col);
            }
            reflect(&mut b);
        }
    }
    let diag_max = (0..n).fold(0.0f64, |acc, k| acc.max(a[k][k].abs()));
    if (0..n).any(|k| a[k][k].abs() <= 1e-13 * diag_max) {
        return None;
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s = (k + 1..n).map(|j| a[j][k] * x[j]).sum::<f64>();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x.iter().zip(&scales).map(|(xi, s)| xi / s).collect())
}

/// Nonnegative least squares for a handful of columns: the solution is the
/// unconstrained fit on some subset of columns with all coefficients ≥ 0, so
/// every subset is tried and the best feasible one kept.
fn nnls_small(columns: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let n = columns.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let cols: Vec<Vec<f64>> = idx.iter().map(|&i| columns[i].clone()).collect();
        let Some(sub) = least_squares(&cols, target) else {
            continue;
        };
        if sub.iter().any(|v| *v < 0.0) {
            continue;
        }
        let mut x = vec![0.0; n];
        idx.iter().zip(&sub).for_each(|(&i, &v)| x[i] = v);
        let rss: f64 = (0..target.len())
            .map(|r| {
                let fit: f64 = (0..n).map(|j| columns[j][r] * x[j]).sum();
                (fit - target[r]).powi(2)
            })
            .sum();
        // Strict improvement keeps the smaller subset when fits tie.
        if best.as_ref().is_none_or(|(b, _)| rss < *b * (1.0 - 1e-12)) {
            best = Some((rss, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Fits N(P) = p_ase + η·P³ + P/SNR_btb to the measured N = P/SNR.
///
/// Each row is weighted by 1/N, so residuals are relative errors in SNR. With `snr_btb_db`
/// given only (p_ase, η) are fitted, by linear least squares in the (1, P³)
/// basis; otherwise all three are fitted by nonnegative least squares in the
/// (1, P³, P) basis.
pub fn fit_link_params(measured: &MeasuredSweep, snr_btb_db: Option<f64>) -> Result<FitReport> {
    let powers: Vec<f64> = measured.rows.iter().map(|r| dbm_to_watts(r.power_dbm)).collect();
    let noise: Vec<f64> = measured
        .rows
        .iter()
        .zip(&powers)
        .map(|(r, p)| p / db_to_linear(r.snr_db))
        .collect();
    let weighted = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        powers.iter().zip(&noise).map(|(&p, n)| f(p) / n).collect()
    };
    let ones = weighted(&|_| 1.0);
    let cubes = weighted(&|p| p.powi(3));

    let (p_ase, eta, snr_btb) = match snr_btb_db {
        Some(db) => {
            if !db.is_finite() {
                return Err(Error::InvalidParameter(format!("back-to-back SNR {db} dB is not finite")));
            }
            let btb = db_to_linear(db);
            let target = weighted(&|p| -p / btb).iter().map(|v| 1.0 + v).collect::<Vec<_>>();
            let x = least_squares(&[ones, cubes], &target)
                .ok_or_else(|| Error::Fit("degenerate design matrix in the (1, P³) basis".into()))?;
            if !(x[0] > 0.0 && x[1] >= 0.0) {
                return Err(Error::Fit(format!(
                    "fit gives non-physical p_ase = {:e} W, η = {:e} W⁻²",
                    x[0], x[1]
                )));
            }
            (x[0], x[1], btb)
        }
        None => {
            let linear = weighted(&|p| p);
            let target = vec![1.0; powers.len()];
            let x = nnls_small(&[ones, cubes, linear], &target)
                .ok_or_else(|| Error::Fit("degenerate design matrix in the (1, P³, P) basis".into()))?;
            if !(x[0] > 0.0) {
                return Err(Error::Fit("fit leaves no ASE noise; p_ase is unidentifiable".into()));
            }
            let btb = if x[2] > 0.0 { 1.0 / x[2] } else { f64::INFINITY };
            (x[0], x[1], btb)
        }
    };

    let link = LinkParams::new(p_ase, NliCoefficients::fixed(eta)?, snr_btb)?;
    let mut sq = 0.0;
    let mut shares = TermShares {
        ase: 0.0,
        nli: 0.0,
        transceiver: 0.0,
    };
    for (r, &p) in measured.rows.iter().zip(&powers) {
        let model = effective_snr(&link, 0.0, p)?;
        sq += (model.db() - r.snr_db).powi(2);
        let total = link.noise_power(0.0, p)?;
        shares.ase = shares.ase.max(p_ase / total);
        shares.nli = shares.nli.max(eta * p.powi(3) / total);
        shares.transceiver = shares.transceiver.max(p / snr_btb / total);
    }
    let mut unidentifiable = Vec::new();
    if shares.ase < IDENTIFIABILITY_FRACTION {
        unidentifiable.push("p_ase".to_string());
    }
    if shares.nli < IDENTIFIABILITY_FRACTION {
        unidentifiable.push("eta_tot".to_string());
    }
    if snr_btb_db.is_none() && shares.transceiver < IDENTIFIABILITY_FRACTION {
        unidentifiable.push("snr_btb".to_string());
    }
    Ok(FitReport {
        link,
        residual_rms_db: (sq / measured.rows.len() as f64).sqrt(),
        rows: measured.rows.len(),
        snr_btb_fixed: snr_btb_db.is_some(),
        max_shares: shares,
        unidentifiable,
    })
}

/// A fitted link for one named constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Entry {
    pub name: String,
    pub link: LinkParams,
    pub kurtosis: f64,
}

/// One line of the back-to-back SNR / η_tot table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub name: String,
    /// `None` when the fitted link has no transceiver noise.
    pub snr_btb_db: Option<f64>,
    pub eta_tot_db_per_w2: f64,
}

/// Back-to-back SNR [dB] and η_tot [dB re 1 W⁻²] per constellation, with η_tot
/// evaluated at each constellation's own kurtosis.
pub fn table1_report(entries: &[Table1Entry]) -> Result<Vec<Table1Row>> {
    entries
        .iter()
        .map(|e| {
            Ok(Table1Row {
                name: e.name.clone(),
                snr_btb_db: e.link.snr_btb.is_finite().then(|| linear_to_db(e.link.snr_btb)),
                eta_tot_db_per_w2: linear_to_db(eta_tot(&e.link.nli, e.kurtosis)?),
            })
        })
        .collect()
}

/// Plain-text rendering of [`table1_report`] rows.
pub fn format_table1(rows: &[Table1Row]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max("Constellation".len());
    let mut out = format!("{:<width$}  {:>12}  {:>22}\n", "Constellation", "BtB SNR [dB]", "eta_tot [dB re 1/W^2]");
    for r in rows {
        let btb = r.snr_btb_db.map_or_else(|| "inf".to_string(), |v| format!("{v:.2}"));
        out.push_str(&format!("{:<width$}  {:>12}  {:>22.2}\n", r.name, btb, r.eta_tot_db_per_w2));
    }
    out
}

/// Back-to-back SNR and η_tot of one constellation on the reference link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePreset {
    pub name: &'static str,
    pub snr_btb_db: f64,
    pub eta_tot_db_per_w2: f64,
}

/// Measured per-constellation link parameters of the reference experiment:
/// uniform, AWGN-tailored and nonlinearity-tailored 256-QAM.
pub const REFERENCE_PRESETS: [ReferencePreset; 3] = [
    ReferencePreset {
        name: "uniform",
        snr_btb_db: 22.78,
        eta_tot_db_per_w2: 27.61,
    },
    ReferencePreset {
        name: "awgn",
        snr_btb_db: 21.63,
        eta_tot_db_per_w2: 28.23,
    },
    ReferencePreset {
        name: "nonlinear",
        snr_btb_db: 22.01,
        eta_tot_db_per_w2: 28.08,
    },
];

/// η₂/η₁ on the reference link.
pub const REFERENCE_C: f64 = 0.55;
/// Optimum SNR of Gaussian modulation on the reference link.
pub const REFERENCE_GAUSSIAN_SNR_DB: f64 = 18.0;

/// ASE power that puts the optimum SNR of Gaussian modulation at
/// `target_snr_db` on a link with NLI coefficient `eta_gaussian` and
/// back-to-back SNR `snr_btb`.
///
/// The optimum launch power does not depend on the transceiver term, so the
/// total optimum satisfies 1/SNR = 1/SNR*(p_ase) + 1/SNR_btb with the
/// ASE/NLI-only SNR* = (2η)^(−1/3)·p_ase^(−2/3)/1.5, which inverts in closed form.
pub fn calibrate_p_ase(eta_gaussian: f64, snr_btb: f64, target_snr_db: f64) -> Result<f64> {
    if !(eta_gaussian > 0.0 && eta_gaussian.is_finite()) {
        return Err(Error::InvalidParameter(format!("η must be > 0, got {eta_gaussian}")));
    }
    let target = db_to_linear(target_snr_db);
    if !(target > 0.0 && target < snr_btb) {
        return Err(Error::ModelDomain(format!(
            "target SNR {target_snr_db} dB is not below the back-to-back SNR {} dB",
            linear_to_db(snr_btb)
        )));
    }
    let ase_nli = 1.0 / (1.0 / target - 1.0 / snr_btb);
    Ok(((2.0 * eta_gaussian).cbrt().recip() / (1.5 * ase_nli)).powf(1.5))
}

/// The calibrated reference link for each of [`REFERENCE_PRESETS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLinks {
    /// η₁ of Gaussian modulation implied by the uniform constellation's η_tot.
    pub eta_gaussian: f64,
    pub p_ase: f64,
    /// Links in [`REFERENCE_PRESETS`] order, each with a fixed η_tot.
    pub links: Vec<(String, LinkParams)>,
}

/// Calibrates the shared ASE power so Gaussian modulation peaks at
/// `gaussian_snr_db`: the Gaussian η is the uniform constellation's η_tot
/// divided by 1 + c·K_uniform, and its back-to-back SNR is the uniform one.
pub fn reference_links(uniform_kurtosis: f64, c: f64, gaussian_snr_db: f64) -> Result<ReferenceLinks> {
    let uniform = &REFERENCE_PRESETS[0];
    let scale = 1.0 + c * uniform_kurtosis;
    if !(scale > 0.0) {
        return Err(Error::ModelDomain(format!("1 + c·K = {scale} ≤ 0")));
    }
    let eta_gaussian = db_to_linear(uniform.eta_tot_db_per_w2) / scale;
    let p_ase = calibrate_p_ase(eta_gaussian, db_to_linear(uniform.snr_btb_db), gaussian_snr_db)?;
    let links = REFERENCE_PRESETS
        .iter()
        .map(|pr| {
            let nli = NliCoefficients::fixed(db_to_linear(pr.eta_tot_db_per_w2))?;
            Ok((pr.name.to_string(), LinkParams::new(p_ase, nli, db_to_linear(pr.snr_btb_db))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceLinks {
        eta_gaussian,
        p_ase,
        links,
    })
}

/// Optimum SNR Gaussian modulation reaches on `link` with NLI coefficient `eta_gaussian`.
pub fn gaussian_optimum_snr_db(link: &LinkParams, eta_gaussian: f64) -> Result<f64> {
    let g = LinkParams::new(link.p_ase, NliCoefficients::fixed(eta_gaussian)?, link.snr_btb)?;
    Ok(optimal_launch_power(&g, 0.0)?.snr.db())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::uniform_levels;
    use crate::units::watts_to_dbm;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const K_UNIFORM_256: f64 = 12937.0 / 14450.0 - 1.5;

    fn link(p_ase_dbm: f64, eta_db: f64, btb_db: f64) -> LinkParams {
        LinkParams::new(
            dbm_to_watts(p_ase_dbm),
            NliCoefficients::fixed(db_to_linear(eta_db)).unwrap(),
            db_to_linear(btb_db),
        )
        .unwrap()
    }

    #[test]
    fn default_grid() {
        let g = default_power_grid_dbm();
        assert_eq!(g.len(), 37);
        assert_eq!(g[0], -2.0);
        assert_eq!(*g.last().unwrap(), 7.0);
        assert!(power_grid_dbm(1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn least_squares_exact_and_degenerate() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let c0 = vec![1.0; 4];
        let c1: Vec<f64> = x.to_vec();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let s = least_squares(&[c0.clone(), c1.clone()], &y).unwrap();
        assert_abs_diff_eq!(s[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], -0.5, epsilon = 1e-14);
        assert!(least_squares(&[c1.clone(), c1.iter().map(|v| 3.0 * v).collect()], &y).is_none());
        let n = nnls_small(&[c0, c1], &y).unwrap();
        assert!(n.iter().all(|v| *v >= 0.0));
        assert_eq!(n[1], 0.0);
    }

    #[test]
    fn calibration_hits_target() {
        let eta = 864.3;
        let btb = db_to_linear(22.78);
        let p = calibrate_p_ase(eta, btb, 18.0).unwrap();
        let l = LinkParams::new(p, NliCoefficients::fixed(eta).unwrap(), btb).unwrap();
        assert_abs_diff_eq!(optimal_launch_power(&l, 0.0).unwrap().snr.db(), 18.0, epsilon = 1e-9);
        assert!(calibrate_p_ase(eta, btb, 23.0).is_err());
    }

    #[test]
    fn reference_calibration() {
        let r = reference_links(K_UNIFORM_256, REFERENCE_C, REFERENCE_GAUSSIAN_SNR_DB).unwrap();
        let eta_gaussian = 10f64.powf(2.761) / (1.0 + 0.55 * K_UNIFORM_256);
        assert_relative_eq!(r.eta_gaussian, eta_gaussian, max_relative = 1e-12);
        assert_abs_diff_eq!(r.eta_gaussian, 864.18, epsilon = 0.01);
        assert_abs_diff_eq!(watts_to_dbm(r.p_ase), -18.464, epsilon = 1e-3);
        let uniform = &r.links[0].1;
        assert_abs_diff_eq!(gaussian_optimum_snr_db(uniform, r.eta_gaussian).unwrap(), 18.0, epsilon = 1e-9);
        let peak = optimal_launch_power(uniform, K_UNIFORM_256).unwrap().snr.db();
        assert!((16.0..=19.0).contains(&peak), "{peak}");
    }

    #[test]
    fn sweep_rows_and_peak_location() {
        let l = link(-18.5, 27.61, 22.78);
        let levels = uniform_levels(4).unwrap();
        let grid = default_power_grid_dbm();
        let c = run_sweep("uniform", &levels, &l, &grid).unwrap();
        assert_eq!(c.rows.len(), grid.len());
        for r in &c.rows {
            assert_eq!(r.gmi_4d, 2.0 * r.gmi_2d);
            assert!(r.snr_db.is_finite());
        }
        let opt = optimal_launch_power(&l, c.kurtosis).unwrap();
        assert!((c.peak_snr().power_dbm - watts_to_dbm(opt.power)).abs() <= DEFAULT_GRID_STEP_DB);
        // GMI rises to a single peak then falls.
        let diffs: Vec<f64> = c.rows.windows(2).map(|w| w[1].gmi_2d - w[0].gmi_2d).collect();
        assert_eq!(diffs.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count(), 1);
    }

    #[test]
    fn zero_nli_sweep_is_monotone() {
        let l = LinkParams::new(dbm_to_watts(-20.0), NliCoefficients::fixed(0.0).unwrap(), 200.0).unwrap();
        let c = run_sweep("u", &uniform_levels(4).unwrap(), &l, &default_power_grid_dbm()).unwrap();
        assert!(c.rows.windows(2).all(|w| w[1].gmi_2d >= w[0].gmi_2d));
    }

    #[test]
    fn sweep_reports_domain_violations() {
        let nli = NliCoefficients::from_eta1_and_c(500.0, 2.0).unwrap();
        let l = LinkParams::new(1e-5, nli, 100.0).unwrap();
        match run_sweep("flat", &uniform_levels(4).unwrap(), &l, &[0.0]) {
            Err(Error::ModelDomain(msg)) => assert!(msg.contains("flat") && msg.contains("K =")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(run_sweep("x", &uniform_levels(4).unwrap(), &link(-18.0, 27.0, 22.0), &[1.0, 0.0]).is_err());
    }

    #[test]
    fn fit_recovers_noiseless_parameters() {
        let truth = link(-18.46, 27.61, 22.78);
        let m = MeasuredSweep::synthetic(&truth, 0.0, &default_power_grid_dbm()).unwrap();
        let r = fit_link_params(&m, None).unwrap();
        assert_relative_eq!(r.link.p_ase, truth.p_ase, max_relative = 1e-9);
        assert_relative_eq!(r.link.nli.eta1(), truth.nli.eta1(), max_relative = 1e-9);
        assert_relative_eq!(r.link.snr_btb, truth.snr_btb, max_relative = 1e-9);
        assert!(r.residual_rms_db < 1e-9);
        assert!(r.is_identifiable());

        let fixed = fit_link_params(&m, Some(22.78)).unwrap();
        assert_relative_eq!(fixed.link.p_ase, truth.p_ase, max_relative = 1e-9);
        assert_relative_eq!(fixed.link.nli.eta1(), truth.nli.eta1(), max_relative = 1e-9);
    }

    #[test]
    fn low_power_data_flags_nli() {
        let truth = link(-18.46, 27.61, 22.78);
        let grid = power_grid_dbm(-30.0, -20.0, 1.0).unwrap();
        let m = MeasuredSweep::synthetic(&truth, 0.0, &grid).unwrap();
        let r = fit_link_params(&m, Some(22.78)).unwrap();
        assert_relative_eq!(r.link.p_ase, truth.p_ase, max_relative = 1e-6);
        assert!(r.unidentifiable.contains(&"eta_tot".to_string()), "{:?}", r.unidentifiable);
        assert!(!r.unidentifiable.contains(&"p_ase".to_string()));
    }

    #[test]
    fn measured_sweep_preconditions() {
        let row = |p| MeasuredRow { power_dbm: p, snr_db: 15.0 };
        assert!(matches!(
            MeasuredSweep::new(vec![row(0.0), row(3.0), row(6.0)], "t"),
            Err(Error::Fit(_))
        ));
        assert!(matches!(
            MeasuredSweep::new(vec![row(0.0), row(1.0), row(2.0), row(5.0)], "t"),
            Err(Error::Fit(_))
        ));
        assert!(MeasuredSweep::new(vec![row(0.0), row(1.0), row(2.0), row(6.0)], "t").is_ok());
    }

    #[test]
    fn table1_rows() {
        let entries: Vec<Table1Entry> = REFERENCE_PRESETS
            .iter()
            .map(|p| Table1Entry {
                name: p.name.into(),
                link: link(-18.46, p.eta_tot_db_per_w2, p.snr_btb_db),
                kurtosis: 0.0,
            })
            .collect();
        let rows = table1_report(&entries).unwrap();
        assert_abs_diff_eq!(rows[1].snr_btb_db.unwrap(), 21.63, epsilon = 1e-12);
        assert_abs_diff_eq!(rows[2].eta_tot_db_per_w2, 28.08, epsilon = 1e-12);
        let text = format_table1(&rows);
        assert!(text.contains("nonlinear") && text.contains("28.23"));
        let twice = table1_report(&[entries[0].clone(), entries[0].clone()]).unwrap();
        assert_eq!(twice[0], twice[1]);
    }

    #[test]
    fn eta_ordering_follows_kurtosis() {
        let nli = NliCoefficients::from_eta1_and_c(864.3, REFERENCE_C).unwrap();
        let l = LinkParams::new(1e-5, nli, 190.0).unwrap();
        let ks = [("uniform", -0.6047), ("nonlinear", -0.4437), ("awgn", -0.3651)];
        let entries: Vec<Table1Entry> = ks
            .iter()
            .map(|(n, k)| Table1Entry { name: n.to_string(), link: l, kurtosis: *k })
            .collect();
        let rows = table1_report(&entries).unwrap();
        assert!(rows[0].eta_tot_db_per_w2 < rows[1].eta_tot_db_per_w2);
        assert!(rows[1].eta_tot_db_per_w2 < rows[2].eta_tot_db_per_w2);
    }
}
