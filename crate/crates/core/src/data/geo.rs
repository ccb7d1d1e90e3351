//! Morton (Z-order) geocoding of latitude/longitude pairs.
//!
//! Each axis is quantized to `2^bits_per_axis` uniform cells and the cell
//! indices are bit-interleaved, longitude bit first, into a single unsigned
//! integer rendered in decimal. At the maximum of 31 bits per axis the code
//! occupies 62 bits, so the decimal form never exceeds 19 digits.

use crate::error::{Error, Result};

/// Hard cap so the interleaved code fits in a `u64` (2 * 31 = 62 bits).
pub const MAX_BITS_PER_AXIS: u32 = 31;

/// Default quantization depth per axis.
pub const DEFAULT_BITS_PER_AXIS: u32 = 31;

/// Encode a coordinate into a decimal Morton code string.
///
/// Both axes are quantized over their full domain (latitude [-90, 90],
/// longitude [-180, 180]); points 1 m apart typically agree on a long
/// prefix of interleaved bits, which is what makes the code usable as a
/// locality-preserving token inside a sentence.
pub fn encode_geo(lat: f64, lon: f64, bits_per_axis: u32) -> Result<String> {
    Ok(encode_geo_u64(lat, lon, bits_per_axis)?.to_string())
}

/// Same as [`encode_geo`] but returns the raw interleaved integer.
pub fn encode_geo_u64(lat: f64, lon: f64, bits_per_axis: u32) -> Result<u64> {
    if bits_per_axis == 0 || bits_per_axis > MAX_BITS_PER_AXIS {
        return Err(Error::Config(format!(
            "bits_per_axis must be in 1..={MAX_BITS_PER_AXIS}, got {bits_per_axis}"
        )));
    }
    if !(-90.0..=90.0).contains(&lat) || lat.is_nan() {
        return Err(Error::Range(format!("latitude {lat} outside [-90, 90]")));
    }
    if !(-180.0..=180.0).contains(&lon) || lon.is_nan() {
        return Err(Error::Range(format!("longitude {lon} outside [-180, 180]")));
    }
    let lat_cell = quantize(lat, -90.0, 90.0, bits_per_axis);
    let lon_cell = quantize(lon, -180.0, 180.0, bits_per_axis);
    Ok(interleave(lon_cell, lat_cell, bits_per_axis))
}

/// Map `x` in `[lo, hi]` to a cell index in `[0, 2^bits)`.
fn quantize(x: f64, lo: f64, hi: f64, bits: u32) -> u64 {
    let cells = 1u64 << bits;
    let frac = (x - lo) / (hi - lo);
    let cell = (frac * cells as f64).floor() as u64;
    cell.min(cells - 1)
}

/// Interleave two `bits`-wide cell indices, MSB first, longitude leading.
fn interleave(lon_cell: u64, lat_cell: u64, bits: u32) -> u64 {
    let mut out = 0u64;
    for k in (0..bits).rev() {
        out = (out << 1) | ((lon_cell >> k) & 1);
        out = (out << 1) | ((lat_cell >> k) & 1);
    }
    out
}
