//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use geoshape::bfgs::BfgsConfig;
use geoshape::formats::{
    read_constellation, read_levels, read_measured_rows, write_constellation, write_levels, write_sweep_rows,
    SweepRow,
};
use geoshape::gmi::MonteCarloConfig;
use geoshape::link::LinkParamsFile;
use geoshape::shaping::{objective, DesignPoint};
use geoshape::sweep::{format_table1, gaussian_optimum_snr_db, power_grid_dbm, reference_links, Table1Entry};
use geoshape::units::{linear_to_db, watts_to_dbm};
use geoshape::{
    design_curve, fit_link_params, gmi::gmi_monte_carlo_with, gmi_2d, kurtosis_coupled_snr, kurtosis_from_levels,
    moments, optimal_launch_power, optimize as optimize_levels, product_constellation, run_sweep, table1_report,
    uniform_levels, ChannelSnr, GmiEstimate, LinkParams, MeasuredSweep, MomentSummary, OptimizerConfig, PamLevels,
    ShapingMode, ShapingProblem, ShapingResult, SweepCurve,
};
use serde::Serialize;

use crate::output::OutDir;
use crate::{
    CalibrateArgs, CliError, DesignCurveArgs, EvalArgs, FitArgs, GridArgs, ModeArg, OptimizeArgs, SweepArgs,
    Table1Args,
};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Core(geoshape::Error::InvalidInput(format!("cannot open {}: {e}", path.display()))))
}

fn load_levels(path: &Path) -> Result<PamLevels, CliError> {
    read_levels(open(path)?).map_err(|e| annotate(e, path))
}

fn load_link(path: &Path) -> Result<LinkParams, CliError> {
    let text = fs::read_to_string(path)?;
    LinkParams::from_json(&text).map_err(|e| annotate(e, path))
}

/// Prefixes data errors with the offending file.
fn annotate(e: geoshape::Error, path: &Path) -> CliError {
    use geoshape::Error as E;
    let p = path.display();
    CliError::Core(match e {
        E::Parse { row, msg } => E::Parse {
            row,
            msg: format!("{p}: {msg}"),
        },
        E::InvalidInput(m) => E::InvalidInput(format!("{p}: {m}")),
        E::Json(j) => E::InvalidInput(format!("{p}: {j}")),
        other => other,
    })
}

fn grid(g: &GridArgs) -> Result<Vec<f64>, CliError> {
    power_grid_dbm(g.grid_start_dbm, g.grid_stop_dbm, g.grid_step_db)
        .map_err(|e| CliError::Usage(format!("--grid-start-dbm/--grid-stop-dbm/--grid-step-db: {e}")))
}

fn check_name(name: &str) -> Result<(), CliError> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "constellation name `{name}` must be non-empty ASCII letters, digits, `_` or `-`"
        )))
    }
}

fn shaping_mode(m: ModeArg) -> ShapingMode {
    match m {
        ModeArg::Uniform => ShapingMode::UniformBaseline,
        ModeArg::Awgn => ShapingMode::AwgnTailored,
        ModeArg::Nonlinear => ShapingMode::NonlinearityTailored,
    }
}

fn snr_arg(db: f64, key: &str) -> Result<ChannelSnr, CliError> {
    ChannelSnr::from_db(db).map_err(|e| CliError::Usage(format!("{key}: {e}")))
}

/// GMI in both conventions.
#[derive(Serialize)]
struct GmiReport {
    method: geoshape::GmiMethod,
    gmi_2d: f64,
    gmi_4d: f64,
    samples: u64,
    std_error_2d: f64,
    std_error_4d: f64,
}

impl From<GmiEstimate> for GmiReport {
    fn from(e: GmiEstimate) -> Self {
        Self {
            method: e.method,
            gmi_2d: e.value,
            gmi_4d: e.value_4d(),
            samples: e.samples,
            std_error_2d: e.std_error,
            std_error_4d: 2.0 * e.std_error,
        }
    }
}

#[derive(Serialize)]
struct CoupledEvaluation {
    c: f64,
    snr_db: f64,
    gmi_2d: f64,
    gmi_4d: f64,
}

#[derive(Serialize)]
struct OptimizeOutput<'a> {
    #[serde(flatten)]
    result: &'a ShapingResult,
    mode: ModeArg,
    snr_ref_db: f64,
    bits_per_dim: u32,
    /// The levels scored at the SNR their kurtosis reaches on a link where
    /// Gaussian modulation peaks at `snr_ref_db`.
    coupled: CoupledEvaluation,
}

pub fn optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let snr_ref = snr_arg(a.snr_db, "--snr-db")?;
    let init = match &a.init {
        Some(p) => load_levels(p)?,
        None => uniform_levels(a.bits).map_err(|e| CliError::Usage(format!("--bits: {e}")))?,
    };
    let mut problem = ShapingProblem::new(a.bits, shaping_mode(a.mode), snr_ref, a.c);
    problem.quadrature_nodes = a.nodes;
    let cfg = OptimizerConfig {
        bfgs: BfgsConfig {
            max_iterations: a.max_iterations,
            ..BfgsConfig::default()
        },
        restarts: a.restarts,
        perturbation: a.perturbation,
        seed: a.seed,
    };
    let result = optimize_levels(&problem, &init, &cfg)?;

    let coupled_problem = ShapingProblem {
        mode: ShapingMode::NonlinearityTailored,
        ..problem
    };
    let coupled_gmi = objective(result.levels.positive_half(), &coupled_problem)?;
    let coupled_snr = kurtosis_coupled_snr(snr_ref, a.c, result.kurtosis)?;
    let out = OptimizeOutput {
        result: &result,
        mode: a.mode,
        snr_ref_db: a.snr_db,
        bits_per_dim: a.bits,
        coupled: CoupledEvaluation {
            c: a.c,
            snr_db: coupled_snr.db(),
            gmi_2d: coupled_gmi,
            gmi_4d: 2.0 * coupled_gmi,
        },
    };

    let mut dir = OutDir::create(&a.out_dir)?;
    dir.write_json("result.json", &out)?;
    dir.write_with("levels.csv", |w| write_levels(w, &result.levels))?;
    let constellation = product_constellation(&result.levels, &result.levels)?;
    dir.write_with("constellation.csv", |w| write_constellation(w, &constellation))?;
    let inputs: Vec<&Path> = a.init.iter().map(PathBuf::as_path).collect();
    dir.finish("optimize", a, &inputs)?;
    println!(
        "gmi_4d = {:.6} bit/4D (coupled: {:.6}), kurtosis = {:.6}, converged = {}",
        result.gmi_4d, out.coupled.gmi_4d, result.kurtosis, result.converged
    );
    if !result.converged {
        return Err(CliError::NotConverged(format!(
            "BFGS stopped after {} iterations without meeting the gradient tolerance",
            result.iterations
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct PointEvaluation {
    snr_db: f64,
    /// Gaussian-modulation reference SNR when the SNR is kurtosis-coupled.
    reference_snr_db: Option<f64>,
    c: Option<f64>,
    quadrature: Option<GmiReport>,
    monte_carlo: Option<GmiReport>,
}

#[derive(Serialize)]
struct SweepSummary {
    name: String,
    kurtosis: f64,
    link: LinkParamsFile,
    peak_gmi: SweepRow,
    peak_snr: SweepRow,
    optimal_launch_power_dbm: Option<f64>,
    optimal_snr_db: Option<f64>,
}

fn summarize(curve: &SweepCurve) -> Result<SweepSummary, CliError> {
    let opt = optimal_launch_power(&curve.link, curve.kurtosis).ok();
    Ok(SweepSummary {
        name: curve.constellation_id.clone(),
        kurtosis: curve.kurtosis,
        link: curve.link.to_file()?,
        peak_gmi: *curve.peak_gmi(),
        peak_snr: *curve.peak_snr(),
        optimal_launch_power_dbm: opt.map(|o| watts_to_dbm(o.power)),
        optimal_snr_db: opt.map(|o| o.snr.db()),
    })
}

#[derive(Serialize)]
struct EvalOutput {
    bits_per_symbol: u32,
    points: usize,
    square: bool,
    moments: MomentSummary,
    evaluation: Option<PointEvaluation>,
    sweep: Option<SweepSummary>,
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    if a.snr_db.is_none() && a.link.is_none() {
        return Err(CliError::Usage("eval needs --snr-db and/or --link".into()));
    }
    if a.c.is_some() && a.snr_db.is_none() {
        return Err(CliError::Usage("--c applies to --snr-db, which is missing".into()));
    }
    let c = read_constellation(open(&a.constellation)?)
        .map_err(|e| annotate(e, &a.constellation))?
        .normalized();
    let m = moments(&c)?;
    let square = c.square_levels();

    let evaluation = match a.snr_db {
        None => None,
        Some(db) => {
            let reference = snr_arg(db, "--snr-db")?;
            let snr = match a.c {
                Some(cc) => kurtosis_coupled_snr(reference, cc, m.excess_kurtosis)?,
                None => reference,
            };
            let quadrature = match &square {
                Some(l) => Some(gmi_2d(l, snr, a.nodes)?.into()),
                None if !a.mc => {
                    return Err(CliError::Usage(
                        "constellation is not a Gray-labeled square product; use --mc".into(),
                    ))
                }
                None => None,
            };
            let monte_carlo = if a.mc {
                let cfg = MonteCarloConfig::new(a.samples, a.seed);
                Some(gmi_monte_carlo_with(&c, snr, &cfg)?.into())
            } else {
                None
            };
            Some(PointEvaluation {
                snr_db: snr.db(),
                reference_snr_db: a.c.map(|_| db),
                c: a.c,
                quadrature,
                monte_carlo,
            })
        }
    };

    let mut dir = OutDir::create(&a.out_dir)?;
    let mut inputs: Vec<&Path> = vec![a.constellation.as_path()];
    let sweep = match &a.link {
        None => None,
        Some(path) => {
            let link = load_link(path)?;
            inputs.push(path);
            let levels = square.as_ref().ok_or_else(|| {
                CliError::Core(geoshape::Error::InvalidInput(
                    "per-power evaluation needs a Gray-labeled square product constellation".into(),
                ))
            })?;
            let curve = run_sweep("constellation", levels, &link, &grid(&a.grid)?)?;
            dir.write_with("sweep.csv", |w| write_sweep_rows(w, &curve.rows))?;
            Some(summarize(&curve)?)
        }
    };
    let out = EvalOutput {
        bits_per_symbol: c.bits_per_symbol(),
        points: c.len(),
        square: square.is_some(),
        moments: m,
        evaluation,
        sweep,
    };
    dir.write_json("eval.json", &out)?;
    dir.finish("eval", a, &inputs)?;
    if let Some(e) = &out.evaluation {
        if let Some(q) = &e.quadrature {
            println!("quadrature gmi_4d = {:.6} bit/4D at {:.4} dB", q.gmi_4d, e.snr_db);
        }
        if let Some(mc) = &e.monte_carlo {
            println!(
                "monte carlo gmi_4d = {:.6} ± {:.6} bit/4D at {:.4} dB",
                mc.gmi_4d, mc.std_error_4d, e.snr_db
            );
        }
    }
    println!("excess kurtosis = {:.10}", out.moments.excess_kurtosis);
    Ok(())
}

#[derive(Serialize)]
struct ReferenceSummary {
    c: f64,
    target_gaussian_snr_db: f64,
    p_ase_dbm: f64,
    eta_gaussian_db_per_w2: f64,
    gaussian_optimum_snr_db: f64,
}

#[derive(Serialize)]
struct SweepOutput {
    reference: Option<ReferenceSummary>,
    curves: Vec<SweepSummary>,
    /// Peak GMI (bit/4D) of each curve minus the best peak among the others.
    peak_gmi_4d_margins: Vec<(String, f64)>,
}

/// A named constellation and the link it is swept over.
struct SweepJob {
    name: String,
    levels: PamLevels,
    link: LinkParams,
}

fn parse_curve_spec(spec: &str) -> Result<(String, PathBuf, Option<PathBuf>), CliError> {
    let parts: Vec<&str> = spec.split('=').collect();
    match parts.as_slice() {
        [name, levels] => Ok((name.to_string(), levels.into(), None)),
        [name, levels, link] => Ok((name.to_string(), levels.into(), Some(link.into()))),
        _ => Err(CliError::Usage(format!("--curve `{spec}` must be NAME=LEVELS_CSV[=LINK_JSON]"))),
    }
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let power_grid = grid(&a.grid)?;
    let mut dir = OutDir::create(&a.out_dir)?;
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut reference = None;
    let jobs: Vec<SweepJob> = if a.reference {
        let uniform = uniform_levels(a.bits).map_err(|e| CliError::Usage(format!("--bits: {e}")))?;
        let refs = reference_links(kurtosis_from_levels(&uniform), a.c, a.target_snr_db)?;
        reference = Some(ReferenceSummary {
            c: a.c,
            target_gaussian_snr_db: a.target_snr_db,
            p_ase_dbm: watts_to_dbm(refs.p_ase),
            eta_gaussian_db_per_w2: linear_to_db(refs.eta_gaussian),
            gaussian_optimum_snr_db: gaussian_optimum_snr_db(&refs.links[0].1, refs.eta_gaussian)?,
        });
        let snr_ref = snr_arg(a.target_snr_db, "--target-snr-db")?;
        let cfg = OptimizerConfig {
            seed: a.seed,
            ..OptimizerConfig::default()
        };
        let shaped = |mode| -> Result<PamLevels, CliError> {
            let r = optimize_levels(&ShapingProblem::new(a.bits, mode, snr_ref, a.c), &uniform, &cfg)?;
            if !r.converged {
                return Err(CliError::NotConverged(format!("{mode:?} reference constellation")));
            }
            Ok(r.levels)
        };
        let levels = [uniform.clone(), shaped(ShapingMode::AwgnTailored)?, shaped(ShapingMode::NonlinearityTailored)?];
        refs.links
            .into_iter()
            .zip(levels)
            .map(|((name, link), levels)| SweepJob { name, levels, link })
            .collect()
    } else {
        if a.curve.is_empty() {
            return Err(CliError::Usage("sweep needs --reference or at least one --curve".into()));
        }
        let default_link = a.link.as_deref().map(load_link).transpose()?;
        if let Some(p) = &a.link {
            inputs.push(p.clone());
        }
        let mut jobs = Vec::new();
        for spec in &a.curve {
            let (name, levels_path, link_path) = parse_curve_spec(spec)?;
            check_name(&name)?;
            if jobs.iter().any(|j: &SweepJob| j.name == name) {
                return Err(CliError::Usage(format!("--curve name `{name}` repeated")));
            }
            let levels = load_levels(&levels_path)?;
            inputs.push(levels_path);
            let link = match link_path {
                Some(p) => {
                    let l = load_link(&p)?;
                    inputs.push(p);
                    l
                }
                None => default_link.ok_or_else(|| {
                    CliError::Usage(format!("--curve `{name}` names no link and --link is missing"))
                })?,
            };
            jobs.push(SweepJob { name, levels, link });
        }
        jobs
    };

    let mut curves = Vec::new();
    for job in &jobs {
        let curve = run_sweep(&job.name, &job.levels, &job.link, &power_grid)?;
        dir.write_with(&format!("{}.csv", job.name), |w| write_sweep_rows(w, &curve.rows))?;
        if a.reference {
            dir.write_with(&format!("{}_levels.csv", job.name), |w| write_levels(w, &job.levels))?;
        }
        curves.push(curve);
    }
    let summaries = curves.iter().map(summarize).collect::<Result<Vec<_>, _>>()?;
    let margins = summaries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let best_other = summaries
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| o.peak_gmi.gmi_4d)
                .fold(f64::NEG_INFINITY, f64::max);
            (s.name.clone(), s.peak_gmi.gmi_4d - best_other)
        })
        .collect();
    let out = SweepOutput {
        reference,
        curves: summaries,
        peak_gmi_4d_margins: margins,
    };
    dir.write_json("summary.json", &out)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    dir.finish("sweep", a, &input_refs)?;
    for s in &out.curves {
        println!(
            "{}: peak gmi_4d {:.4} at {:.2} dBm, peak SNR {:.3} dB",
            s.name, s.peak_gmi.gmi_4d, s.peak_gmi.power_dbm, s.peak_snr.snr_db
        );
    }
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let rows = read_measured_rows(open(&a.measured)?).map_err(|e| annotate(e, &a.measured))?;
    let measured = MeasuredSweep::new(rows, a.measured.display().to_string())?;
    let report = fit_link_params(&measured, a.snr_btb_db)?;
    let mut dir = OutDir::create(&a.out_dir)?;
    dir.write_text("link.json", &report.link.to_json()?)?;
    dir.write_json("fit_report.json", &report.to_file()?)?;
    dir.finish("fit", a, &[a.measured.as_path()])?;
    println!("residual RMS = {:.4} dB over {} rows", report.residual_rms_db, report.rows);
    if !report.is_identifiable() {
        return Err(CliError::Unidentifiable(format!(
            "the data cannot determine {} (largest noise shares: ase {:.3}, nli {:.3}, transceiver {:.3})",
            report.unidentifiable.join(", "),
            report.max_shares.ase,
            report.max_shares.nli,
            report.max_shares.transceiver
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationOutput {
    #[serde(flatten)]
    reference: ReferenceSummary,
    uniform_kurtosis: f64,
    links: Vec<String>,
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let uniform = uniform_levels(a.bits).map_err(|e| CliError::Usage(format!("--bits: {e}")))?;
    let k = kurtosis_from_levels(&uniform);
    let refs = reference_links(k, a.c, a.target_snr_db)?;
    let mut dir = OutDir::create(&a.out_dir)?;
    let mut names = Vec::new();
    for (name, link) in &refs.links {
        let file = format!("link_{name}.json");
        dir.write_text(&file, &link.to_json()?)?;
        names.push(file);
    }
    let out = CalibrationOutput {
        reference: ReferenceSummary {
            c: a.c,
            target_gaussian_snr_db: a.target_snr_db,
            p_ase_dbm: watts_to_dbm(refs.p_ase),
            eta_gaussian_db_per_w2: linear_to_db(refs.eta_gaussian),
            gaussian_optimum_snr_db: gaussian_optimum_snr_db(&refs.links[0].1, refs.eta_gaussian)?,
        },
        uniform_kurtosis: k,
        links: names,
    };
    dir.write_json("calibration.json", &out)?;
    dir.finish("calibrate", a, &[])?;
    println!("p_ase = {:.4} dBm", out.reference.p_ase_dbm);
    Ok(())
}

pub const DESIGN_CURVE_HEADER: &str = "snr_db,uniform_gmi_4d,awgn_gmi_4d,nonlinear_gmi_4d,uniform_flat_gmi_4d,awgn_flat_gmi_4d,awgn_kurtosis,nonlinear_kurtosis";

fn write_design_csv(w: &mut impl Write, points: &[DesignPoint]) -> geoshape::Result<()> {
    writeln!(w, "{DESIGN_CURVE_HEADER}")?;
    for p in points {
        let cols = [
            p.snr_db,
            p.uniform_gmi_4d,
            p.awgn_gmi_4d,
            p.nonlinear_gmi_4d,
            p.uniform_flat_gmi_4d,
            p.awgn_flat_gmi_4d,
            p.awgn_kurtosis,
            p.nonlinear_kurtosis,
        ];
        let line: Vec<String> = cols.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn design_curve_cmd(a: &DesignCurveArgs) -> Result<(), CliError> {
    let snrs = power_grid_dbm(a.snr_start_db, a.snr_stop_db, a.snr_step_db)
        .map_err(|e| CliError::Usage(format!("--snr-start-db/--snr-stop-db/--snr-step-db: {e}")))?;
    let mut template = ShapingProblem::new(a.bits, ShapingMode::AwgnTailored, snr_arg(snrs[0], "--snr-start-db")?, a.c);
    template.quadrature_nodes = a.nodes;
    let cfg = OptimizerConfig {
        restarts: a.restarts,
        seed: a.seed,
        ..OptimizerConfig::default()
    };
    let points = design_curve(&template, &snrs, &cfg)?;
    let mut dir = OutDir::create(&a.out_dir)?;
    dir.write_with("design_curve.csv", |w| write_design_csv(w, &points))?;
    dir.write_json("design_curve.json", &points)?;
    dir.finish("design-curve", a, &[])?;
    Ok(())
}

pub fn table1(a: &Table1Args) -> Result<(), CliError> {
    let mut entries = Vec::new();
    let mut inputs = Vec::new();
    for spec in &a.entry {
        let parts: Vec<&str> = spec.split('=').collect();
        let [name, link, levels] = parts.as_slice() else {
            return Err(CliError::Usage(format!("--entry `{spec}` must be NAME=LINK_JSON=LEVELS_CSV")));
        };
        check_name(name)?;
        let link_path = PathBuf::from(link);
        let levels_path = PathBuf::from(levels);
        entries.push(Table1Entry {
            name: name.to_string(),
            link: load_link(&link_path)?,
            kurtosis: kurtosis_from_levels(&load_levels(&levels_path)?),
        });
        inputs.push(link_path);
        inputs.push(levels_path);
    }
    let rows = table1_report(&entries)?;
    let text = format_table1(&rows);
    let mut dir = OutDir::create(&a.out_dir)?;
    dir.write_json("table1.json", &rows)?;
    dir.write_text("table1.txt", &text)?;
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    dir.finish("table1", a, &input_refs)?;
    print!("{text}");
    Ok(())
}
