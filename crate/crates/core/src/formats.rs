//! CSV formats for level sets, constellations, sweeps and measured sweeps.
//!
//! Floating-point values are written in `{:.16e}` form (17 significant
//! digits), which reproduces every `f64` exactly on reading.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::{Constellation, PamLevels};
use crate::error::{Error, Result};

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    let row = e
        .position()
        .map(|p| (p.record() as usize).max(1))
        .unwrap_or(0);
    let msg = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        _ => Error::Parse { row, msg },
    }
}

/// Reads rows of `T`, checking the header matches `expected` exactly.
fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R, expected: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            row: 0,
            msg: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.deserialize().enumerate() {
        rows.push(rec.map_err(|e| match csv_err(e) {
            Error::Parse { msg, .. } => Error::Parse { row: k + 1, msg },
            other => other,
        })?);
    }
    Ok(rows)
}

fn check_index(row: usize, index: usize) -> Result<()> {
    if index + 1 != row {
        return Err(Error::Parse {
            row,
            msg: format!("index {index} out of sequence (expected {})", row - 1),
        });
    }
    Ok(())
}

pub const LEVELS_HEADER: &str = "index,level";
pub const CONSTELLATION_HEADER: &str = "index,i,q,label_hex";
pub const SWEEP_HEADER: &str = "power_dbm,snr_db,gmi_2d,gmi_4d";
pub const MEASURED_HEADER: &str = "power_dbm,snr_db";

pub fn write_levels<W: Write>(mut w: W, levels: &PamLevels) -> Result<()> {
    writeln!(w, "{LEVELS_HEADER}")?;
    for (k, l) in levels.as_slice().iter().enumerate() {
        writeln!(w, "{k},{}", float(*l))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct LevelRow {
    index: usize,
    level: f64,
}

pub fn read_levels<R: Read>(r: R) -> Result<PamLevels> {
    let rows: Vec<LevelRow> = read_rows(r, &["index", "level"])?;
    for (k, row) in rows.iter().enumerate() {
        check_index(k + 1, row.index)?;
    }
    PamLevels::new(rows.into_iter().map(|r| r.level).collect())
}

pub fn write_constellation<W: Write>(mut w: W, c: &Constellation) -> Result<()> {
    let digits = (c.bits_per_symbol() as usize).div_ceil(4);
    writeln!(w, "{CONSTELLATION_HEADER}")?;
    for (k, (p, l)) in c.points().iter().zip(c.labels()).enumerate() {
        writeln!(w, "{k},{},{},{l:0digits$x}", float(p.re), float(p.im))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct PointRow {
    index: usize,
    i: f64,
    q: f64,
    label_hex: String,
}

pub fn read_constellation<R: Read>(r: R) -> Result<Constellation> {
    let rows: Vec<PointRow> = read_rows(r, &["index", "i", "q", "label_hex"])?;
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (k, row) in rows.into_iter().enumerate() {
        check_index(k + 1, row.index)?;
        let hex = row.label_hex.trim_start_matches("0x");
        let label = u32::from_str_radix(hex, 16).map_err(|e| Error::Parse {
            row: k + 1,
            msg: format!("bad label `{}`: {e}", row.label_hex),
        })?;
        points.push(Complex64::new(row.i, row.q));
        labels.push(label);
    }
    Constellation::new(points, labels)
}

/// One evaluated launch power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub power_dbm: f64,
    pub snr_db: f64,
    pub gmi_2d: f64,
    pub gmi_4d: f64,
}

pub fn write_sweep_rows<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            float(r.power_dbm),
            float(r.snr_db),
            float(r.gmi_2d),
            float(r.gmi_4d)
        )?;
    }
    Ok(())
}

pub fn read_sweep_rows<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    read_rows(r, &["power_dbm", "snr_db", "gmi_2d", "gmi_4d"])
}

/// One measured (launch power, SNR) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRow {
    pub power_dbm: f64,
    pub snr_db: f64,
}

pub fn write_measured_rows<W: Write>(mut w: W, rows: &[MeasuredRow]) -> Result<()> {
    writeln!(w, "{MEASURED_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{}", float(r.power_dbm), float(r.snr_db))?;
    }
    Ok(())
}

pub fn read_measured_rows<R: Read>(r: R) -> Result<Vec<MeasuredRow>> {
    let rows: Vec<MeasuredRow> = read_rows(r, &["power_dbm", "snr_db"])?;
    for (k, row) in rows.iter().enumerate() {
        if !(row.power_dbm.is_finite() && row.snr_db.is_finite()) {
            return Err(Error::Parse {
                row: k + 1,
                msg: "non-finite value".into(),
            });
        }
    }
    Ok(rows)
}
