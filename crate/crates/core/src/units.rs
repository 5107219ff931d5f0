//! dB / linear and dBm / watt conversions.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Power in dBm (referenced to 1 mW) to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    linear_to_db(watts * 1e3)
}
