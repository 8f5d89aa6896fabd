//! Isotropically averaged power spectrum of a cubic grid field, and the
//! spectrum-preservation gate built on it.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::datamodel::Field;
use crate::error::{Error, Result};
use crate::fft::fft3;

pub const DEFAULT_PK_TOL: f64 = 0.01;
pub const DEFAULT_MIN_MODES: u64 = 8;

/// Shell-averaged power. Shell `s` holds every mode whose integer
/// wavevector rounds to `s`; `k[s-1] = 2*pi*s / box_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub box_length: f64,
    /// Grid points per axis.
    pub grid: usize,
    pub k: Vec<f64>,
    pub power: Vec<f64>,
    pub modes: Vec<u64>,
}

/// Compute the power spectrum of `field` on a periodic box.
///
/// With `contrast = true` the field is normalized to `f / mean - 1`
/// (density convention; the mean must be nonzero), otherwise the mean is
/// subtracted. The zero mode is excluded; shells run from 1 to half the
/// grid. Per-mode power is `|F|^2 * V / N^2` for the unnormalized DFT
/// `F`, so the result carries volume units.
pub fn power_spectrum(field: &Field, box_length: f64, contrast: bool) -> Result<SpectrumCurve> {
    let dims = field.dims3();
    let n = dims[0];
    if dims[1] != n || dims[2] != n || n < 2 {
        return Err(Error::Domain(format!(
            "power spectrum requires a cubic grid of at least 2^3, got {:?}",
            field.dims
        )));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::Domain(format!("box_length must be positive, got {box_length}")));
    }
    if let Some(i) = field.first_non_finite() {
        return Err(Error::Domain(format!("non-finite value at index {i}")));
    }
    let total = (n * n * n) as f64;
    let mean = field.values.iter().map(|&v| v as f64).sum::<f64>() / total;
    if contrast && mean == 0.0 {
        return Err(Error::Domain("contrast normalization requires a nonzero mean".into()));
    }
    let mut data: Vec<Complex64> = field
        .values
        .iter()
        .map(|&v| {
            let d = if contrast { v as f64 / mean - 1.0 } else { v as f64 - mean };
            Complex64::new(d, 0.0)
        })
        .collect();
    let sum_sq_real: f64 = data.iter().map(|c| c.re * c.re).sum();
    fft3(&mut data, dims, false);

    // Plancherel identity as an internal numerics check.
    let sum_sq_freq: f64 = data.iter().map(|c| c.norm_sqr()).sum::<f64>() / total;
    if sum_sq_real > 0.0 {
        let rel = (sum_sq_freq - sum_sq_real).abs() / sum_sq_real;
        if rel > 1e-6 {
            return Err(Error::Domain(format!(
                "FFT energy mismatch: relative deviation {rel:.3e}"
            )));
        }
    }

    let smax = n / 2;
    let mut sums = vec![0.0f64; smax];
    let mut modes = vec![0u64; smax];
    let volume = box_length * box_length * box_length;
    let norm = volume / (total * total);
    let freq = |a: usize| -> f64 {
        if a <= n / 2 {
            a as f64
        } else {
            a as f64 - n as f64
        }
    };
    let mut idx = 0usize;
    for a in 0..n {
        let fa = freq(a);
        for b in 0..n {
            let fb = freq(b);
            for c in 0..n {
                let fc = freq(c);
                let s = (fa * fa + fb * fb + fc * fc).sqrt().round() as usize;
                if s >= 1 && s <= smax {
                    sums[s - 1] += data[idx].norm_sqr() * norm;
                    modes[s - 1] += 1;
                }
                idx += 1;
            }
        }
    }
    let dk = 2.0 * std::f64::consts::PI / box_length;
    let k: Vec<f64> = (1..=smax).map(|s| s as f64 * dk).collect();
    let power: Vec<f64> =
        sums.iter().zip(&modes).map(|(&p, &m)| if m == 0 { 0.0 } else { p / m as f64 }).collect();
    Ok(SpectrumCurve { box_length, grid: n, k, power, modes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkBin {
    pub k: f64,
    pub orig: f64,
    pub recon: f64,
    pub ratio: f64,
    pub modes: u64,
}

/// Outcome of the spectrum-preservation gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkGate {
    pub tol: f64,
    pub min_modes: u64,
    pub bins: Vec<PkBin>,
    /// Shells skipped because the original power there is zero.
    pub excluded_zero_power: usize,
    /// Shells skipped for having fewer than `min_modes` modes.
    pub excluded_low_modes: usize,
    pub pass: bool,
}

/// Compare two spectra shell by shell. Passes when every reported ratio
/// lies in `[1 - tol, 1 + tol]`.
pub fn pk_ratio(
    orig: &SpectrumCurve,
    recon: &SpectrumCurve,
    tol: f64,
    min_modes: u64,
) -> Result<PkGate> {
    if !(tol.is_finite() && tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("spectrum tolerance must be in (0, 1), got {tol}")));
    }
    if orig.grid != recon.grid || orig.box_length != recon.box_length || orig.k != recon.k {
        return Err(Error::Domain(
            "spectra were computed on different grids and cannot be compared".into(),
        ));
    }
    let mut bins = Vec::new();
    let mut excluded_zero_power = 0usize;
    let mut excluded_low_modes = 0usize;
    let mut pass = true;
    for s in 0..orig.k.len() {
        if orig.modes[s] < min_modes {
            excluded_low_modes += 1;
            continue;
        }
        if orig.power[s] <= 0.0 {
            excluded_zero_power += 1;
            continue;
        }
        let ratio = recon.power[s] / orig.power[s];
        if (ratio - 1.0).abs() > tol {
            pass = false;
        }
        bins.push(PkBin {
            k: orig.k[s],
            orig: orig.power[s],
            recon: recon.power[s],
            ratio,
            modes: orig.modes[s],
        });
    }
    Ok(PkGate { tol, min_modes, bins, excluded_zero_power, excluded_low_modes, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::CounterRng;

    fn cubic(name: &str, n: usize, values: Vec<f32>) -> Field {
        Field::new(name, vec![n, n, n], values, None).unwrap()
    }

    /// Brute-force O(N^2) DFT followed by the same shell averaging.
    fn brute_spectrum(field: &Field, box_length: f64, contrast: bool) -> SpectrumCurve {
        let n = field.dims[0];
        let total = (n * n * n) as f64;
        let mean = field.values.iter().map(|&v| v as f64).sum::<f64>() / total;
        let delta: Vec<f64> = field
            .values
            .iter()
            .map(|&v| if contrast { v as f64 / mean - 1.0 } else { v as f64 - mean })
            .collect();
        let smax = n / 2;
        let mut sums = vec![0.0f64; smax];
        let mut modes = vec![0u64; smax];
        let volume = box_length.powi(3);
        let freq = |a: usize| if a <= n / 2 { a as f64 } else { a as f64 - n as f64 };
        for ka in 0..n {
            for kb in 0..n {
                for kc in 0..n {
                    let (mut re, mut im) = (0.0f64, 0.0f64);
                    for xa in 0..n {
                        for xb in 0..n {
                            for xc in 0..n {
                                let phase = -2.0 * std::f64::consts::PI
                                    * ((ka * xa + kb * xb + kc * xc) as f64)
                                    / n as f64;
                                let d = delta[(xa * n + xb) * n + xc];
                                re += d * phase.cos();
                                im += d * phase.sin();
                            }
                        }
                    }
                    let (fa, fb, fc) = (freq(ka), freq(kb), freq(kc));
                    let s = (fa * fa + fb * fb + fc * fc).sqrt().round() as usize;
                    if s >= 1 && s <= smax {
                        sums[s - 1] += (re * re + im * im) * volume / (total * total);
                        modes[s - 1] += 1;
                    }
                }
            }
        }
        let dk = 2.0 * std::f64::consts::PI / box_length;
        SpectrumCurve {
            box_length,
            grid: n,
            k: (1..=smax).map(|s| s as f64 * dk).collect(),
            power: sums.iter().zip(&modes).map(|(&p, &m)| p / m as f64).collect(),
            modes,
        }
    }

    #[test]
    fn matches_brute_force_dft_on_small_grids() {
        let mut rng = CounterRng::new(17);
        let values: Vec<f32> = (0..512).map(|_| (rng.uniform() * 4.0 + 1.0) as f32).collect();
        for contrast in [false, true] {
            let f = cubic("f", 8, values.clone());
            let got = power_spectrum(&f, 25.0, contrast).unwrap();
            let want = brute_spectrum(&f, 25.0, contrast);
            assert_eq!(got.modes, want.modes);
            for (s, (g, w)) in got.power.iter().zip(&want.power).enumerate() {
                assert!(
                    (g - w).abs() <= 1e-6 * w.abs().max(1e-30),
                    "shell {s} ({contrast}): {g} vs {w}"
                );
            }
        }
    }

    #[test]
    fn single_cosine_lands_in_its_shell() {
        let n = 16;
        let amp = 3.0f64;
        let mut values = Vec::with_capacity(n * n * n);
        for a in 0..n {
            let phase = 2.0 * std::f64::consts::PI * 4.0 * a as f64 / n as f64;
            let v = (amp * phase.cos()) as f32;
            for _ in 0..n * n {
                values.push(v);
            }
        }
        let f = cubic("wave", n, values);
        let box_length = 100.0;
        let curve = power_spectrum(&f, box_length, false).unwrap();
        // All power sits in shell 4: two conjugate modes of |F| = A*N/2.
        let volume = box_length.powi(3);
        let total = (n * n * n) as f64;
        let expected_mode_power = (amp * total / 2.0).powi(2) * volume / (total * total);
        let weighted: f64 =
            curve.power.iter().zip(&curve.modes).map(|(&p, &m)| p * m as f64).sum();
        assert!((weighted - 2.0 * expected_mode_power).abs() < 1e-6 * weighted);
        let peak = curve
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(s, _)| s + 1)
            .unwrap();
        assert_eq!(peak, 4);
        assert_eq!(curve.k[3], 4.0 * 2.0 * std::f64::consts::PI / box_length);
    }

    #[test]
    fn amplitude_perturbation_moves_the_ratio_exactly() {
        // Scaling fluctuations around the mean by sqrt(r) multiplies every
        // shell's power by r, so the gate verdict is fully predictable.
        let base = crate::synth::gaussian_random_field(16, 50.0, -1.0, None, 99).unwrap();
        let mean = base.values.iter().map(|&v| v as f64).sum::<f64>() / base.len() as f64;
        let scaled = |r: f64| {
            let values: Vec<f32> =
                base.values.iter().map(|&v| (mean + r.sqrt() * (v as f64 - mean)) as f32).collect();
            cubic("scaled", 16, values)
        };
        let orig = power_spectrum(&base, 50.0, false).unwrap();
        let bumped = power_spectrum(&scaled(1.02), 50.0, false).unwrap();
        let gate = pk_ratio(&orig, &bumped, DEFAULT_PK_TOL, 1).unwrap();
        assert!(!gate.pass, "a 2% power bump must fail a 1% gate");
        assert!(!gate.bins.is_empty());
        for bin in &gate.bins {
            assert!((bin.ratio - 1.02).abs() < 1e-4, "k {}: ratio {}", bin.k, bin.ratio);
        }

        let nudged = power_spectrum(&scaled(1.005), 50.0, false).unwrap();
        let gate = pk_ratio(&orig, &nudged, DEFAULT_PK_TOL, 1).unwrap();
        assert!(gate.pass, "a 0.5% power bump must pass a 1% gate");
    }

    #[test]
    fn gate_excludes_empty_and_sparse_shells() {
        let orig = SpectrumCurve {
            box_length: 1.0,
            grid: 8,
            k: vec![1.0, 2.0, 3.0, 4.0],
            power: vec![5.0, 0.0, 2.0, 1.0],
            modes: vec![6, 12, 4, 30],
        };
        let recon = SpectrumCurve { power: vec![5.0, 9.0, 4.0, 1.005], ..orig.clone() };
        let gate = pk_ratio(&orig, &recon, 0.01, 6).unwrap();
        // Shell 2 has zero original power, shell 3 too few modes.
        assert_eq!(gate.excluded_zero_power, 1);
        assert_eq!(gate.excluded_low_modes, 1);
        assert_eq!(gate.bins.len(), 2);
        assert!(gate.pass);

        let worse = SpectrumCurve { power: vec![5.2, 0.0, 2.0, 1.0], ..orig.clone() };
        assert!(!pk_ratio(&orig, &worse, 0.01, 6).unwrap().pass);

        let other_grid = SpectrumCurve { grid: 16, ..orig.clone() };
        assert!(pk_ratio(&orig, &other_grid, 0.01, 6).is_err());
        assert!(pk_ratio(&orig, &recon, 0.0, 6).is_err());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let f = Field::new("flat", vec![4, 4], vec![1.0; 16], None).unwrap();
        assert!(power_spectrum(&f, 10.0, false).is_err(), "non-cubic grid");
        let zero = cubic("zero", 4, vec![0.0; 64]);
        assert!(power_spectrum(&zero, 10.0, true).is_err(), "contrast needs nonzero mean");
        assert!(power_spectrum(&zero, 0.0, false).is_err(), "bad box length");
        // An all-zero field is fine without contrast: empty spectrum.
        let curve = power_spectrum(&zero, 10.0, false).unwrap();
        assert!(curve.power.iter().all(|&p| p == 0.0));
    }
}
