//! Clipping and the two grid quantizers.
//!
//! Both quantizers snap a scalar in `[-r, r]` to one of the two grid points
//! bracketing it on a symmetric grid `b_m = r(2m/l - 1)`, `m = 0..=l`. The
//! stochastic one picks an endpoint at random so that the output is unbiased;
//! the deterministic one picks the nearer endpoint (ties go up). Outputs are
//! signed indices `q = m - l/2`, so `0` is always a grid point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::QuantError;
use crate::vector::norm2;

/// Relative slack for the `‖x‖ ≤ r` precondition of the vector quantizers.
pub const NORM_SLACK: f64 = 1e-9;

/// Largest supported half-grid size. Keeps indices exactly representable.
const MAX_HALF_LEVELS: f64 = (1u64 << 40) as f64;

/// Returns `x · min{1, r/‖x‖₂}`.
pub fn clip(x: &[f64], r: f64) -> Vec<f64> {
    let n = norm2(x);
    if n > r && n > 0.0 {
        let scale = r / n;
        x.iter().map(|v| v * scale).collect()
    } else {
        x.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantMode {
    Stochastic,
    Deterministic,
}

/// Symmetric grid over `[-radius, radius]` with `levels = 2⌈radius/resolution⌉`
/// intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantGrid {
    radius: f64,
    resolution: f64,
    half: i64,
}

impl QuantGrid {
    pub fn new(radius: f64, resolution: f64) -> Result<Self, QuantError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(QuantError::InvalidRadius(radius));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(QuantError::InvalidResolution(resolution));
        }
        let half = (radius / resolution).ceil();
        if !(half <= MAX_HALF_LEVELS) {
            return Err(QuantError::GridTooFine { radius, resolution });
        }
        Ok(Self { radius, resolution, half: half.max(1.0) as i64 })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Number of intervals `l_ε` (always even).
    pub fn levels(&self) -> u64 {
        2 * self.half as u64
    }

    /// Largest index magnitude, `l_ε / 2`.
    pub fn half_levels(&self) -> i64 {
        self.half
    }

    /// Distance between neighbouring grid points, `2r/l_ε ≤ ε`.
    pub fn spacing(&self) -> f64 {
        self.radius / self.half as f64
    }

    /// Grid point `b_m` for `m` in `0..=l_ε`.
    pub fn point(&self, m: u64) -> f64 {
        self.value_of(m as i64 - self.half)
    }

    /// Value of a signed index: `b_{q + l_ε/2}`.
    pub fn value_of(&self, q: i64) -> f64 {
        self.radius * (q as f64 / self.half as f64)
    }

    pub fn contains_index(&self, q: i64) -> bool {
        q.abs() <= self.half
    }

    /// Signed index of the lower end of the interval holding `y`, i.e. the
    /// `q` with `b(q) ≤ y < b(q+1)`; `y = r` lands in the topmost interval.
    fn lower_index(&self, y: f64) -> Result<i64, QuantError> {
        if !(y.abs() <= self.radius) {
            return Err(QuantError::OutOfRange { value: y, radius: self.radius });
        }
        let mut q = ((y / self.radius) * self.half as f64).floor() as i64;
        q = q.clamp(-self.half, self.half - 1);
        while q > -self.half && self.value_of(q) > y {
            q -= 1;
        }
        while q < self.half - 1 && self.value_of(q + 1) <= y {
            q += 1;
        }
        Ok(q)
    }
}

/// Unbiased stochastic rounding of `y ∈ [-r, r]` to a neighbouring grid point.
pub fn sto_quant_scalar<R: Rng + ?Sized>(
    y: f64,
    grid: &QuantGrid,
    rng: &mut R,
) -> Result<i64, QuantError> {
    let lo = grid.lower_index(y)?;
    let (b_lo, b_hi) = (grid.value_of(lo), grid.value_of(lo + 1));
    let p_lo = (b_hi - y) / (b_hi - b_lo);
    let u: f64 = rng.random();
    Ok(if u < p_lo { lo } else { lo + 1 })
}

/// Nearest-point rounding of `y ∈ [-r, r]`; exact midpoints round up.
pub fn det_quant_scalar(y: f64, grid: &QuantGrid) -> Result<i64, QuantError> {
    let lo = grid.lower_index(y)?;
    let (b_lo, b_hi) = (grid.value_of(lo), grid.value_of(lo + 1));
    Ok(if (b_hi - y).abs() > (b_lo - y).abs() { lo } else { lo + 1 })
}

/// A quantized vector: signed grid indices plus the grid that gives them
/// meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedVector {
    indices: Vec<i64>,
    grid: QuantGrid,
}

impl QuantizedVector {
    pub fn new(indices: Vec<i64>, grid: QuantGrid) -> Result<Self, QuantError> {
        if let Some(&q) = indices.iter().find(|q| !grid.contains_index(**q)) {
            return Err(QuantError::IndexOutOfRange { index: q, half: grid.half_levels() });
        }
        Ok(Self { indices, grid })
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn grid(&self) -> &QuantGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn values(&self) -> Vec<f64> {
        self.indices.iter().map(|&q| self.grid.value_of(q)).collect()
    }
}

/// Grid used for a `p`-dimensional vector quantized at vector resolution
/// `eps_prime` inside the ball of radius `r`: per-coordinate resolution
/// `eps_prime/√p`.
pub fn vector_grid(p: usize, eps_prime: f64, r: f64) -> Result<QuantGrid, QuantError> {
    QuantGrid::new(r, eps_prime / (p.max(1) as f64).sqrt())
}

/// Quantizes every coordinate of `x` on `grid`. Requires `‖x‖₂ ≤ r` up to a
/// relative `1e-9` slack; coordinates inside the slack are pinned to `±r`.
pub fn quant_on_grid<R: Rng + ?Sized>(
    x: &[f64],
    grid: QuantGrid,
    mode: QuantMode,
    rng: &mut R,
) -> Result<QuantizedVector, QuantError> {
    let r = grid.radius();
    let n = norm2(x);
    if !(n <= r * (1.0 + NORM_SLACK)) {
        return Err(QuantError::NormOutOfRange { norm: n, radius: r });
    }
    let indices = x
        .iter()
        .map(|&v| {
            let v = v.clamp(-r, r);
            match mode {
                QuantMode::Stochastic => sto_quant_scalar(v, &grid, rng),
                QuantMode::Deterministic => det_quant_scalar(v, &grid),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantizedVector { indices, grid })
}

/// Coordinate-wise quantization on `QuantGrid(r, eps_prime/√p)`.
pub fn quant_vector<R: Rng + ?Sized>(
    x: &[f64],
    eps_prime: f64,
    r: f64,
    mode: QuantMode,
    rng: &mut R,
) -> Result<QuantizedVector, QuantError> {
    let grid = vector_grid(x.len(), eps_prime, r)?;
    quant_on_grid(x, grid, mode, rng)
}

/// Deterministic variant that needs no random stream.
pub fn det_quant_vector(x: &[f64], eps_prime: f64, r: f64) -> Result<QuantizedVector, QuantError> {
    let grid = vector_grid(x.len(), eps_prime, r)?;
    quant_on_grid(x, grid, QuantMode::Deterministic, &mut NoRandomness)
}

/// An `Rng` that must never be consulted; handed to the deterministic
/// quantizer.
struct NoRandomness;

impl rand::RngCore for NoRandomness {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic quantizer drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic quantizer drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("deterministic quantizer drew a random number")
    }
}
