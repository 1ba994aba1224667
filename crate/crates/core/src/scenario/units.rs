//! Unit-tagged quantities accepted in scenario files.
//!
//! A value may be a bare number, taken to be in canonical units already, or a
//! string such as `"16 GB"`, `"20 MHz"`, `"-174 dBm/Hz"` or `"300 mW"`.
//! Decimal prefixes are used throughout (1 GB = 8e9 bits).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Bits,
    Flops,
    FlopRate,
    Frequency,
    Power,
    NoiseDensity,
    Time,
    Distance,
    DataRate,
    Dimensionless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

impl Quantity {
    pub fn to_canonical(&self, dim: Dimension) -> Result<f64, String> {
        match self {
            Quantity::Number(v) => Ok(*v),
            Quantity::Text(s) => parse(s, dim),
        }
    }
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Parses `"<number> <unit>"` into canonical units for `dim`.
pub fn parse(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .or_else(|| {
            // "1e3" style numbers have no unit; a bare trailing 'e' is a unit char
            text.find(|c: char| c.is_whitespace())
        })
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` does not start with a number"))?;
    let unit = unit.trim();
    let scale = match (dim, unit) {
        (_, "") => 1.0,
        (Dimension::Bits, "bit" | "bits" | "b") => 1.0,
        (Dimension::Bits, "kbit" | "kb") => 1e3,
        (Dimension::Bits, "Mbit" | "Mb") => 1e6,
        (Dimension::Bits, "Gbit" | "Gb") => 1e9,
        (Dimension::Bits, "B" | "byte" | "bytes") => 8.0,
        (Dimension::Bits, "KB" | "kB") => 8e3,
        (Dimension::Bits, "MB") => 8e6,
        (Dimension::Bits, "GB") => 8e9,
        (Dimension::Bits, "TB") => 8e12,
        (Dimension::Flops, "FLOP" | "FLOPs") => 1.0,
        (Dimension::Flops, "MFLOP" | "MFLOPs") => 1e6,
        (Dimension::Flops, "GFLOP" | "GFLOPs") => 1e9,
        (Dimension::Flops, "TFLOP" | "TFLOPs") => 1e12,
        (Dimension::FlopRate, "FLOPS" | "FLOP/s") => 1.0,
        (Dimension::FlopRate, "GFLOPS" | "GFLOP/s") => 1e9,
        (Dimension::FlopRate, "TFLOPS" | "TFLOP/s") => 1e12,
        (Dimension::Frequency, "Hz") => 1.0,
        (Dimension::Frequency, "kHz") => 1e3,
        (Dimension::Frequency, "MHz") => 1e6,
        (Dimension::Frequency, "GHz") => 1e9,
        (Dimension::Power, "W") => 1.0,
        (Dimension::Power, "mW") => 1e-3,
        (Dimension::Power, "dBm") => return Ok(dbm_to_watts(value)),
        (Dimension::Power, "dBW") => return Ok(10f64.powf(value / 10.0)),
        (Dimension::NoiseDensity, "W/Hz") => 1.0,
        (Dimension::NoiseDensity, "mW/Hz") => 1e-3,
        (Dimension::NoiseDensity, "dBm/Hz") => return Ok(dbm_to_watts(value)),
        (Dimension::Time, "s") => 1.0,
        (Dimension::Time, "ms") => 1e-3,
        (Dimension::Time, "us") => 1e-6,
        (Dimension::Distance, "m") => 1.0,
        (Dimension::Distance, "km") => 1e3,
        (Dimension::DataRate, "bps" | "bit/s") => 1.0,
        (Dimension::DataRate, "kbps") => 1e3,
        (Dimension::DataRate, "Mbps") => 1e6,
        (Dimension::DataRate, "Gbps") => 1e9,
        _ => return Err(format!("unit `{unit}` is not valid for {dim:?}")),
    };
    Ok(value * scale)
}
