//! Dense vectors, Euclidean-ball projection and seeded sampling.
//!
//! Everything above this module works on [`Vector`] values and draws its
//! randomness from a [`SeededRng`], so a run is fully determined by its seed.

use std::fmt;
use std::ops::Index;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real vector with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Vector::new(entries)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Vector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "vector entry {i} is not finite ({})",
                entries[i]
            )));
        }
        Ok(Vector(entries))
    }

    /// Wraps entries produced by arithmetic on finite vectors. Overflow is
    /// caught later by [`Vector::is_finite`] (the runner's divergence guard).
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Vector(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    /// The `j`-th standard basis vector of length `n`.
    pub fn basis(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        Vector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        dot_slices(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_len(self, other)?;
        Ok(dot_slices(&self.0, &other.0))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_len(self, other)?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_len(self, other)?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Vector) -> Result<Vector> {
        check_len(self, other)?;
        Ok(Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + factor * b)
                .collect(),
        ))
    }

    /// Euclidean distance to `other`.
    pub fn dist(&self, other: &Vector) -> Result<f64> {
        check_len(self, other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_len(a: &Vector, b: &Vector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard inner product.
pub fn dot(a: &Vector, b: &Vector) -> Result<f64> {
    a.dot(b)
}

/// Euclidean norm.
pub fn norm(a: &Vector) -> f64 {
    a.norm()
}

/// Closed Euclidean ball. An infinite radius means "no constraint".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRegion {
    center: Vector,
    radius: f64,
}

impl BallRegion {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::invalid(format!(
                "ball radius must be nonnegative, got {radius}"
            )));
        }
        Ok(BallRegion { center, radius })
    }

    /// Ball of the given radius around the origin of `R^n`.
    pub fn origin(n: usize, radius: f64) -> Result<Self> {
        BallRegion::new(Vector::zeros(n), radius)
    }

    /// A region that never constrains anything.
    pub fn unbounded(n: usize) -> Self {
        BallRegion {
            center: Vector::zeros(n),
            radius: f64::INFINITY,
        }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Exact membership test `‖v − center‖ ≤ radius`.
    pub fn contains(&self, v: &Vector) -> bool {
        v.len() == self.center.len()
            && (self.radius.is_infinite()
                || dist_sq(v.as_slice(), self.center.as_slice()).sqrt() <= self.radius)
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean projection onto a ball.
///
/// Points already inside are returned unchanged (bit for bit), so the map is
/// idempotent. Radial scaling is nudged inward when rounding would leave the
/// result a hair outside the ball.
pub fn project_ball(v: &Vector, region: &BallRegion) -> Result<Vector> {
    if !v.is_finite() {
        return Err(Error::invalid("cannot project a non-finite vector"));
    }
    if v.len() != region.dim() {
        return Err(Error::invalid(format!(
            "projection dimension mismatch: vector {} vs region {}",
            v.len(),
            region.dim()
        )));
    }
    if region.contains(v) {
        return Ok(v.clone());
    }
    let c = region.center.as_slice();
    let diff: Vec<f64> = v.iter().zip(c).map(|(a, b)| a - b).collect();
    let dist = dot_slices(&diff, &diff).sqrt();
    let mut scale = region.radius / dist;
    for _ in 0..64 {
        let out = Vector(c.iter().zip(&diff).map(|(ci, d)| ci + d * scale).collect());
        if region.contains(&out) {
            return Ok(out);
        }
        scale *= 1.0 - 4.0 * f64::EPSILON;
    }
    // Only reachable for a zero radius with catastrophic rounding.
    Ok(region.center.clone())
}

/// SplitMix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a base seed with a stream index: `splitmix64(base ^ splitmix64(index))`.
///
/// Used for per-step and per-trial sub-streams so they can be generated in any
/// order (or in parallel) and still be bit-identical.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// Deterministic generator: ChaCha8 keyed by a 64-bit seed.
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-stream `index` of this seed.
    pub fn derive(&self, index: u64) -> SeededRng {
        SeededRng::new(mix_seed(self.seed, index))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = StandardNormal.sample(&mut self.inner);
        }
    }
}

impl fmt::Debug for SeededRng {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeededRng")
            .field("seed", &self.seed)
            .finish()
    }
}

/// `n` i.i.d. draws from `Normal(mean, std²)`.
pub fn gaussian_vector(rng: &mut SeededRng, n: usize, mean: f64, std: f64) -> Result<Vector> {
    if n == 0 {
        return Err(Error::invalid("gaussian_vector needs n >= 1"));
    }
    if std.is_nan() || std < 0.0 {
        return Err(Error::invalid(format!(
            "standard deviation must be nonnegative, got {std}"
        )));
    }
    if !mean.is_finite() || !std.is_finite() {
        return Err(Error::invalid("mean and std must be finite"));
    }
    let mut out = vec![0.0; n];
    rng.fill_standard_normal(&mut out);
    for x in &mut out {
        *x = mean + std * *x;
    }
    Ok(Vector(out))
}

/// Uniform point in the ball of radius `radius` around `center`.
pub fn uniform_in_ball(rng: &mut SeededRng, center: &Vector, radius: f64) -> Vector {
    let n = center.len();
    let mut dir = vec![0.0; n];
    loop {
        rng.fill_standard_normal(&mut dir);
        let nrm = dot_slices(&dir, &dir).sqrt();
        if nrm > 0.0 {
            let r = radius * rng.uniform().powf(1.0 / n as f64);
            return Vector(
                center
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c + d * r / nrm)
                    .collect(),
            );
        }
    }
}
