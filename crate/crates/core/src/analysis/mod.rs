//! Reconstruction quality metrics and domain-level analyses.

pub mod fof;
pub mod spectrum;

pub use fof::{
    default_linking_length, fof_halos, halo_count_ratio, halo_mass_function, Halo, HaloBin,
    HaloCatalog, HaloGate, DEFAULT_HALO_TOL, DEFAULT_N_MIN,
};
pub use spectrum::{
    pk_ratio, power_spectrum, PkBin, PkGate, SpectrumCurve, DEFAULT_MIN_MODES, DEFAULT_PK_TOL,
};

use crate::datamodel::{Field, ParticleSet};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Pointwise distortion between an original field and its reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mse: f64,
    /// `20 * log10(original range / rmse)`. `None` when the reconstruction
    /// is exact (mse 0) or the original has zero range; `mse` tells the
    /// two apart.
    pub psnr_db: Option<f64>,
    pub max_abs_err: f64,
    /// Mean of `|x - y| / |x|` over values with `x != 0`.
    pub mre: f64,
    /// How many zero-valued originals were excluded from `mre`.
    pub mre_excluded: u64,
}

pub fn distortion(orig: &Field, recon: &Field) -> Result<QualityReport> {
    if orig.len() != recon.len() {
        return Err(Error::DimsMismatch { left: orig.dims.clone(), right: recon.dims.clone() });
    }
    if let Some(i) = orig.first_non_finite() {
        return Err(Error::Domain(format!("original has a non-finite value at index {i}")));
    }
    if let Some(i) = recon.first_non_finite() {
        return Err(Error::Domain(format!("reconstruction has a non-finite value at index {i}")));
    }
    let n = orig.len() as f64;
    let mut se = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut rel_sum = 0.0f64;
    let mut excluded = 0u64;
    for (&x, &y) in orig.values.iter().zip(&recon.values) {
        let d = (x as f64 - y as f64).abs();
        se += d * d;
        max_abs = max_abs.max(d);
        if x == 0.0 {
            excluded += 1;
        } else {
            rel_sum += d / (x as f64).abs();
        }
    }
    let mse = se / n;
    let included = orig.len() as u64 - excluded;
    let mre = if included == 0 { 0.0 } else { rel_sum / included as f64 };
    let (lo, hi) = orig.value_range().expect("finiteness checked above");
    let range = hi as f64 - lo as f64;
    let psnr_db =
        if mse > 0.0 && range > 0.0 { Some(20.0 * (range / mse.sqrt()).log10()) } else { None };
    Ok(QualityReport { mse, psnr_db, max_abs_err: max_abs, mre, mre_excluded: excluded })
}

/// Speed of every particle, as a 1-D field (useful as a compression
/// target alongside the raw components).
pub fn velocity_magnitude(set: &ParticleSet) -> Field {
    let n = set.len();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let (vx, vy, vz) = (set.vel[0][i] as f64, set.vel[1][i] as f64, set.vel[2][i] as f64);
        values.push((vx * vx + vy * vy + vz * vz).sqrt() as f32);
    }
    Field::new("velocity_magnitude", vec![n], values, None).expect("lengths match by construction")
}
