//! Synthetic data: a counter-based random number generator, Gaussian random
//! fields with a prescribed power spectrum, lognormal density fields, and
//! particle sampling.

use crate::datamodel::{Field, ParticleSet};
use crate::error::{Error, Result};
use crate::fft::fft3;
use rustfft::num_complex::Complex64;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Counter-based pseudo-random generator.
///
/// Draw `i` of stream `seed` is defined as the SplitMix64 finalizer applied
/// to `seed + (i + 1) * GAMMA` (wrapping arithmetic, GAMMA = golden-ratio
/// constant 0x9E3779B97F4A7C15):
///
/// ```text
/// z  = seed + (i + 1) * GAMMA
/// z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
/// z ^= z >> 27;  z *= 0x94D049BB133111EB
/// z ^= z >> 31
/// ```
///
/// Any draw is addressable in O(1), so parallel producers can carve up the
/// counter space deterministically. Integer draws are bit-reproducible
/// everywhere; `normal()` additionally goes through libm's ln/cos/sin, so
/// Gaussian streams are reproducible per platform rather than across libms.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

/// The raw draw function; everything else derives from it.
pub fn counter_draw(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(i.wrapping_add(1).wrapping_mul(GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Start mid-stream, at draw index `counter`.
    pub fn at(seed: u64, counter: u64) -> Self {
        CounterRng { seed, counter }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = counter_draw(self.seed, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 random bits. Consumes one draw.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals (Box-Muller). Consumes two draws.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform(); // (0, 1], keeps ln finite
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        (r * t.cos(), r * t.sin())
    }

    /// One standard normal. Consumes two draws (no spare caching, so the
    /// draw count per call is fixed).
    pub fn normal(&mut self) -> f64 {
        self.normal_pair().0
    }
}

fn signed_freq(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Gaussian random field on an `n^3` periodic grid with target spectrum
/// P(k) proportional to k^spectral_index * exp(-k^2 / cutoff^2), normalized
/// to unit expected variance. White noise is shaped by sqrt(P) in Fourier
/// space with Hermitian symmetry enforced, so the output is real.
pub fn gaussian_random_field(
    n: usize,
    box_length: f64,
    spectral_index: f64,
    cutoff: Option<f64>,
    seed: u64,
) -> Result<Field> {
    if n < 2 {
        return Err(Error::Config(format!("grid must be at least 2 per axis, got {n}")));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::Config(format!("box_length must be positive, got {box_length}")));
    }
    if let Some(c) = cutoff {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Config(format!("cutoff must be positive, got {c}")));
        }
    }
    let total = n * n * n;
    let dk = 2.0 * std::f64::consts::PI / box_length;
    let spectrum = |kmag: f64| -> f64 {
        if kmag == 0.0 {
            return 0.0;
        }
        let mut p = kmag.powf(spectral_index);
        if let Some(kc) = cutoff {
            p *= (-(kmag * kmag) / (kc * kc)).exp();
        }
        p
    };

    let mut grid = vec![Complex64::default(); total];
    let mut power_sum = 0.0f64;
    for m0 in 0..n {
        for m1 in 0..n {
            for m2 in 0..n {
                let l = (m0 * n + m1) * n + m2;
                let neg = ((n - m0) % n, (n - m1) % n, (n - m2) % n);
                let lneg = (neg.0 * n + neg.1) * n + neg.2;
                if l > lneg {
                    continue; // filled by the conjugate partner
                }
                let s0 = signed_freq(m0, n) as f64;
                let s1 = signed_freq(m1, n) as f64;
                let s2 = signed_freq(m2, n) as f64;
                let kmag = dk * (s0 * s0 + s1 * s1 + s2 * s2).sqrt();
                let p = spectrum(kmag);
                let mut rng = CounterRng::at(seed, 2 * l as u64);
                let (g1, g2) = rng.normal_pair();
                if l == lneg {
                    // Self-conjugate mode: must be real.
                    grid[l] = Complex64::new(g1 * p.sqrt(), 0.0);
                    power_sum += p;
                } else {
                    let amp = (p / 2.0).sqrt();
                    grid[l] = Complex64::new(g1 * amp, g2 * amp);
                    grid[lneg] = grid[l].conj();
                    power_sum += 2.0 * p;
                }
            }
        }
    }

    // Normalize to unit expected real-space variance.
    let var = power_sum / (total as f64 * total as f64);
    if var > 0.0 {
        let scale = 1.0 / var.sqrt() / total as f64; // includes inverse-FFT 1/N
        for c in grid.iter_mut() {
            *c *= scale;
        }
    }
    fft3(&mut grid, [n, n, n], true);
    let values: Vec<f32> = grid.iter().map(|c| c.re as f32).collect();
    Field::new(format!("grf_s{seed}"), vec![n, n, n], values, None)
}

/// Map a Gaussian field to a lognormal density: exp(g - var/2), optionally
/// rescaled so its maximum equals `target_max`. Strictly positive.
pub fn lognormal_density(g: &Field, target_max: Option<f32>) -> Result<Field> {
    if let Some(i) = g.first_non_finite() {
        return Err(Error::Domain(format!("non-finite input at index {i}")));
    }
    if let Some(t) = target_max {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!("target_max must be positive, got {t}")));
        }
    }
    let n = g.len() as f64;
    let mean = g.values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = g.values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let mut values: Vec<f64> = g.values.iter().map(|&v| (v as f64 - var / 2.0).exp()).collect();
    if let Some(t) = target_max {
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let s = t as f64 / max;
        for v in values.iter_mut() {
            *v *= s;
        }
    }
    let out: Vec<f32> = values.iter().map(|&v| (v as f32).max(f32::MIN_POSITIVE)).collect();
    Field::new(format!("{}.rho", g.name), g.dims.clone(), out, None)
}

/// Sample particle positions from a density field by inverse-CDF over cells
/// plus uniform jitter inside the chosen cell; velocities are isotropic
/// Gaussians with dispersion `velocity_sigma`.
///
/// Particle `i` consumes draws `[8i, 8i + 8)` of the seed's counter space:
/// one for the cell, three for jitter, four for the two normal pairs.
pub fn sample_particles(
    density: &Field,
    n_particles: usize,
    box_length: f64,
    velocity_sigma: f64,
    particle_mass: f64,
    seed: u64,
) -> Result<ParticleSet> {
    if n_particles == 0 {
        return Err(Error::Config("cannot sample zero particles".into()));
    }
    if !(box_length.is_finite() && box_length > 0.0) {
        return Err(Error::Config(format!("box_length must be positive, got {box_length}")));
    }
    if !(velocity_sigma.is_finite() && velocity_sigma >= 0.0) {
        return Err(Error::Config(format!("velocity_sigma must be >= 0, got {velocity_sigma}")));
    }
    if let Some(i) = density.first_non_finite() {
        return Err(Error::Domain(format!("non-finite density at index {i}")));
    }
    if density.values.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("density must be non-negative".into()));
    }
    let dims = density.dims3();
    let mut cum = Vec::with_capacity(density.len());
    let mut total = 0.0f64;
    for &v in &density.values {
        total += v as f64;
        cum.push(total);
    }
    if total <= 0.0 {
        return Err(Error::Domain("density sums to zero".into()));
    }
    let cell_size = [
        box_length / dims[0] as f64,
        box_length / dims[1] as f64,
        box_length / dims[2] as f64,
    ];
    let mut pos: [Vec<f32>; 3] = std::array::from_fn(|_| Vec::with_capacity(n_particles));
    let mut vel: [Vec<f32>; 3] = std::array::from_fn(|_| Vec::with_capacity(n_particles));
    for i in 0..n_particles {
        let mut rng = CounterRng::at(seed, 8 * i as u64);
        let target = rng.uniform() * total;
        let cell = cum.partition_point(|&c| c <= target).min(density.len() - 1);
        let c2 = cell % dims[2];
        let c1 = (cell / dims[2]) % dims[1];
        let c0 = cell / (dims[1] * dims[2]);
        let cells = [c0, c1, c2];
        for a in 0..3 {
            let u = rng.uniform();
            let x = (cells[a] as f64 + u) * cell_size[a];
            pos[a].push(crate::datamodel::wrap_coord(x as f32, box_length));
        }
        let (n1, n2) = rng.normal_pair();
        let (n3, _) = rng.normal_pair();
        vel[0].push((n1 * velocity_sigma) as f32);
        vel[1].push((n2 * velocity_sigma) as f32);
        vel[2].push((n3 * velocity_sigma) as f32);
    }
    ParticleSet::new(pos, vel, box_length, particle_mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_rng_is_deterministic_and_addressable() {
        let mut a = CounterRng::new(42);
        let seq: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let mut b = CounterRng::new(42);
        let seq2: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(seq, seq2);
        // Random access agrees with sequential draws.
        for (i, &v) in seq.iter().enumerate() {
            assert_eq!(counter_draw(42, i as u64), v);
            assert_eq!(CounterRng::at(42, i as u64).next_u64(), v);
        }
        let mut c = CounterRng::new(43);
        assert_ne!(seq[0], c.next_u64());
    }

    #[test]
    fn uniform_moments_are_sane() {
        let mut rng = CounterRng::new(7);
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "uniform mean {mean}");
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = CounterRng::new(11);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let g = rng.normal();
            sum += g;
            sq += g * g;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "normal mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "normal var {var}");
    }

    #[test]
    fn grf_is_deterministic_per_seed() {
        let a = gaussian_random_field(16, 100.0, -1.0, None, 5).unwrap();
        let b = gaussian_random_field(16, 100.0, -1.0, None, 5).unwrap();
        let c = gaussian_random_field(16, 100.0, -1.0, None, 6).unwrap();
        let bits = |f: &Field| f.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn grf_has_near_zero_mean_and_unit_variance() {
        let f = gaussian_random_field(32, 100.0, 0.0, None, 9).unwrap();
        let n = f.len() as f64;
        let mean = f.values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = f.values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 0.15, "variance {var}");
    }

    #[test]
    fn grf_rejects_bad_params() {
        assert!(gaussian_random_field(1, 100.0, 0.0, None, 1).is_err());
        assert!(gaussian_random_field(8, 0.0, 0.0, None, 1).is_err());
        assert!(gaussian_random_field(8, 100.0, 0.0, Some(-1.0), 1).is_err());
    }

    #[test]
    fn lognormal_mean_is_near_one_and_positive() {
        let g = gaussian_random_field(64, 100.0, -1.0, None, 21).unwrap();
        let rho = lognormal_density(&g, None).unwrap();
        let mean = rho.values.iter().map(|&v| v as f64).sum::<f64>() / rho.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "lognormal mean {mean}");
        assert!(rho.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn lognormal_rescale_hits_target_max() {
        let g = gaussian_random_field(16, 100.0, -1.0, None, 3).unwrap();
        let rho = lognormal_density(&g, Some(1e5)).unwrap();
        let max = rho.values.iter().cloned().fold(f32::MIN, f32::max);
        assert!((max - 1e5).abs() / 1e5 < 1e-5, "max {max}");
        assert!(rho.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn uniform_density_gives_uniform_occupancy() {
        let d = Field::new("u", vec![8, 8, 8], vec![1.0; 512], None).unwrap();
        let n = 51_200; // expected 100 per cell
        let p = sample_particles(&d, n, 64.0, 0.0, 1.0, 17).unwrap();
        let mut counts = vec![0usize; 512];
        for i in 0..n {
            let c0 = (p.pos[0][i] as f64 / 8.0) as usize;
            let c1 = (p.pos[1][i] as f64 / 8.0) as usize;
            let c2 = (p.pos[2][i] as f64 / 8.0) as usize;
            counts[(c0.min(7) * 8 + c1.min(7)) * 8 + c2.min(7)] += 1;
        }
        let expected = n as f64 / 512.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let per_dof = chi2 / 511.0;
        assert!((0.7..1.35).contains(&per_dof), "chi2/dof {per_dof}");
    }

    #[test]
    fn point_mass_density_confines_particles() {
        let mut values = vec![0.0f32; 27];
        values[13] = 5.0; // cell (1,1,1) of a 3x3x3 grid
        let d = Field::new("p", vec![3, 3, 3], values, None).unwrap();
        let p = sample_particles(&d, 500, 30.0, 1.0, 1.0, 23).unwrap();
        for i in 0..500 {
            for a in 0..3 {
                let x = p.pos[a][i];
                assert!((10.0..20.0).contains(&x), "axis {a} coordinate {x}");
            }
        }
    }

    #[test]
    fn sampling_validates_input() {
        let d = Field::new("u", vec![2, 2, 2], vec![1.0; 8], None).unwrap();
        assert!(sample_particles(&d, 0, 10.0, 1.0, 1.0, 1).is_err());
        assert!(sample_particles(&d, 5, -1.0, 1.0, 1.0, 1).is_err());
        let zero = Field::new("z", vec![2, 2, 2], vec![0.0; 8], None).unwrap();
        assert!(sample_particles(&zero, 5, 10.0, 1.0, 1.0, 1).is_err());
        let neg = Field::new("n", vec![2, 2, 2], vec![-1.0; 8], None).unwrap();
        assert!(sample_particles(&neg, 5, 10.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = Field::new("u", vec![4, 4, 4], vec![1.0; 64], None).unwrap();
        let a = sample_particles(&d, 100, 10.0, 2.0, 1.0, 31).unwrap();
        let b = sample_particles(&d, 100, 10.0, 2.0, 1.0, 31).unwrap();
        assert_eq!(a.pos[0], b.pos[0]);
        assert_eq!(a.vel[2], b.vel[2]);
    }
}
