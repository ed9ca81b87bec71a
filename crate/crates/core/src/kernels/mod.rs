//! Seedable random increments: Gaussian, Poisson, Merton marks, Variance Gamma and Cox counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};

use crate::error::{invalid, Result};
use crate::nn::Matrix;

/// Purpose tag separating the substreams drawn for one `(index, step)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Brownian = 1,
    JumpCount = 2,
    JumpMarks = 3,
    CompensatorCount = 4,
    CompensatorMarks = 5,
    Subordinator = 6,
    CompensatorSubordinator = 7,
    CommonBrownian = 8,
    CommonCount = 9,
    IdiosyncraticBrownian = 10,
    StandardBrownian = 11,
    CommonStandardBrownian = 12,
    Init = 13,
    Evaluation = 14,
}

/// Identifies one substream: the first coordinate is a path or batch index, the second a time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub index: u64,
    pub step: u64,
    pub purpose: Purpose,
}

/// A reproducible source of draws keyed by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub id: StreamId,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, index: u64, step: u64, purpose: Purpose) -> Self {
        Self { seed, id: StreamId { index, step, purpose } }
    }

    /// Fresh generator positioned at the start of this substream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut h = splitmix64(self.seed);
        for (k, chunk) in key.chunks_mut(8).enumerate() {
            h = splitmix64(h ^ self.id.index.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ k as u64);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((self.id.step << 8) | self.id.purpose as u64);
        rng
    }
}

/// Per-path jump counts and marks.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpBatch {
    pub counts: Vec<u32>,
    pub sizes: Vec<Vec<f64>>,
}

impl JumpBatch {
    pub fn empty(n_paths: usize) -> Self {
        Self { counts: vec![0; n_paths], sizes: vec![Vec::new(); n_paths] }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        self.counts.len() == self.sizes.len()
            && self.counts.iter().zip(&self.sizes).all(|(&c, s)| c as usize == s.len())
    }

    /// `Σ_l h(mark_l)` per path.
    pub fn mark_sums(&self, h: impl Fn(f64) -> f64) -> Vec<f64> {
        self.sizes.iter().map(|s| s.iter().map(|&e| h(e)).sum()).collect()
    }
}

/// Matrix of i.i.d. `N(0, dt)` draws.
pub fn gaussian_increments(stream: &RngStream, n_paths: usize, dim: usize, dt: f64) -> Result<Matrix> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(invalid("dt must be finite and nonnegative"));
    }
    let mut out = Matrix::zeros(n_paths, dim);
    if dt == 0.0 {
        return Ok(out);
    }
    let sd = dt.sqrt();
    let mut rng = stream.rng();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sd * z;
    }
    Ok(out)
}

fn poisson_draw<R: rand::Rng>(mean: f64, rng: &mut R) -> Result<u32> {
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u32)
}

/// i.i.d. `Poisson(λ dt)` counts.
pub fn poisson_counts(stream: &RngStream, lambda: f64, dt: f64, n_paths: usize) -> Result<Vec<u32>> {
    if !(lambda >= 0.0) || !(dt >= 0.0) || !(lambda * dt).is_finite() {
        return Err(invalid("poisson intensity and dt must be finite and nonnegative"));
    }
    let mean = lambda * dt;
    let mut rng = stream.rng();
    if mean == 0.0 {
        return Ok(vec![0; n_paths]);
    }
    let d = Poisson::new(mean).map_err(|e| invalid(format!("poisson mean {mean}: {e}")))?;
    Ok((0..n_paths).map(|_| d.sample(&mut rng) as u32).collect())
}

/// i.i.d. `N(α, ξ²)` marks.
pub fn merton_jump_sizes(stream: &RngStream, count: usize, alpha: f64, xi: f64) -> Result<Vec<f64>> {
    let d = Normal::new(alpha, xi).map_err(|e| invalid(format!("jump law: {e}")))?;
    let mut rng = stream.rng();
    Ok((0..count).map(|_| d.sample(&mut rng)).collect())
}

/// Compound Poisson batch: counts from `count_stream`, marks drawn sequentially from `mark_stream`.
pub fn compound_poisson(
    count_stream: &RngStream,
    mark_stream: &RngStream,
    n_paths: usize,
    lambda: f64,
    dt: f64,
    alpha: f64,
    xi: f64,
) -> Result<JumpBatch> {
    let counts = poisson_counts(count_stream, lambda, dt, n_paths)?;
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    let marks = merton_jump_sizes(mark_stream, total, alpha, xi)?;
    let mut sizes = Vec::with_capacity(n_paths);
    let mut k = 0;
    for &c in &counts {
        sizes.push(marks[k..k + c as usize].to_vec());
        k += c as usize;
    }
    Ok(JumpBatch { counts, sizes })
}

/// Variance Gamma increments `θG + σ̄√G Z` with `G ~ Gamma(shape dt/κ, scale κ)`.
pub fn vg_increments(
    stream: &RngStream,
    n_paths: usize,
    dt: f64,
    theta: f64,
    sigma_bar: f64,
    kappa: f64,
) -> Result<Vec<f64>> {
    if !(sigma_bar >= 0.0) {
        return Err(invalid("variance gamma requires sigma >= 0"));
    }
    let gamma = subordinator_law(dt, kappa)?;
    let mut rng = stream.rng();
    Ok((0..n_paths)
        .map(|_| {
            let g: f64 = gamma.sample(&mut rng);
            let z: f64 = StandardNormal.sample(&mut rng);
            theta * g + sigma_bar * g.sqrt() * z
        })
        .collect())
}

fn subordinator_law(dt: f64, kappa: f64) -> Result<Gamma<f64>> {
    if !(dt > 0.0) || !(kappa > 0.0) {
        return Err(invalid("gamma subordinator requires dt > 0 and kappa > 0"));
    }
    Gamma::new(dt / kappa, kappa).map_err(|e| invalid(format!("gamma law: {e}")))
}

/// Gamma time-change increments with mean `dt` and variance `κ dt`.
pub fn gamma_subordinator(stream: &RngStream, n_paths: usize, dt: f64, kappa: f64) -> Result<Vec<f64>> {
    let gamma = subordinator_law(dt, kappa)?;
    let mut rng = stream.rng();
    Ok((0..n_paths).map(|_| gamma.sample(&mut rng)).collect())
}

/// Independent `Poisson(λ⁰_p dt)` counts given per-path intensities.
pub fn cox_counts(stream: &RngStream, intensities: &[f64], dt: f64) -> Result<Vec<u32>> {
    if !(dt >= 0.0) {
        return Err(invalid("dt must be nonnegative"));
    }
    if let Some(l) = intensities.iter().find(|&&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(invalid(format!("negative or non-finite intensity {l}")));
    }
    let mut rng = stream.rng();
    intensities.iter().map(|&l| poisson_draw(l * dt, &mut rng)).collect()
}
