//! Seeded source generation and linear mixing.

use alloc::vec::Vec;
#[allow(unused_imports)] // float methods come from `Float` without std
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Samples discarded at the start of every AR(1) path.
pub const AR1_BURN_IN: usize = 1000;

/// A `(base, stream)` pair that fully determines a random stream.
///
/// Streams are ChaCha8 keyed by `base` with the stream word set to `stream`.
/// Child streams for channels or cells come from [`RngSeed::derive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub base: u64,
    pub stream: u64,
}

impl RngSeed {
    pub const fn new(base: u64, stream: u64) -> Self {
        Self { base, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream `index` of this stream. Same base, mixed stream word.
    pub fn derive(&self, index: u64) -> Self {
        let mixed = splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self {
            base: self.base,
            stream: mixed,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Innovation law driving an AR(1) recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Innovation {
    Gaussian,
    /// Unit-variance generalized Gaussian with shape `p`.
    GeneralizedGaussian(f64),
}

/// Per-channel source model. Every channel has unit variance.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    /// i.i.d. generalized Gaussian with shape `p`.
    IidGg { p: f64 },
    /// Gaussian AR(1), one coefficient per channel.
    Ar1Gaussian { coeffs: Vec<f64> },
    /// AR(1) with generalized-Gaussian innovations of shape `p`.
    Ar1Gg { p: f64, coeffs: Vec<f64> },
}

/// Short label used in file names and logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    IidGg,
    Ar1Gaussian,
    Ar1Gg,
}

impl SourceSpec {
    pub fn kind(&self) -> SourceKind {
        match self {
            Self::IidGg { .. } => SourceKind::IidGg,
            Self::Ar1Gaussian { .. } => SourceKind::Ar1Gaussian,
            Self::Ar1Gg { .. } => SourceKind::Ar1Gg,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check_p = |p: f64| {
            if p > 0.0 && p.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name: "p",
                    reason: "shape must be positive",
                })
            }
        };
        let check_coeffs = |coeffs: &[f64]| {
            if coeffs.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: coeffs.len(),
                });
            }
            if coeffs.iter().any(|a| a.is_nan() || a.abs() >= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "a",
                    reason: "AR(1) coefficients must satisfy |a| < 1",
                });
            }
            Ok(())
        };
        match self {
            Self::IidGg { p } => check_p(*p),
            Self::Ar1Gaussian { coeffs } => check_coeffs(coeffs),
            Self::Ar1Gg { p, coeffs } => check_p(*p).and(check_coeffs(coeffs)),
        }
    }
}

/// `T × n` block of real samples, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SignalBlock {
    pub fn from_samples(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidDimension(
                "signal block needs at least one channel",
            ));
        }
        if data.len() != len * channels {
            return Err(Error::DimensionMismatch {
                expected: len * channels,
                got: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self {
            len,
            channels,
            data,
        })
    }

    pub fn from_channels(channels: &[Vec<f64>]) -> Result<Self> {
        let n = channels.len();
        let len = channels.first().map_or(0, Vec::len);
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: bad.len(),
            });
        }
        let mut data = Vec::with_capacity(len * n);
        for t in 0..len {
            data.extend(channels.iter().map(|c| c[t]));
        }
        Self::from_samples(len, n, data)
    }

    /// Sample count `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Channel count `n`.
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn sample(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn samples(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.channels)
    }

    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.samples().map(|s| s[i]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Applies `y(t) = A (x(t) − offset)` to every sample.
    pub(crate) fn transform(&self, a: &Mat, offset: Option<&[f64]>) -> Result<Self> {
        if a.cols() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                got: a.cols(),
            });
        }
        let m = a.rows();
        let mut out = Vec::with_capacity(self.len * m);
        let mut centered = alloc::vec![0.0; self.channels];
        for s in self.samples() {
            match offset {
                Some(mu) => {
                    for ((c, x), m) in centered.iter_mut().zip(s).zip(mu) {
                        *c = x - m;
                    }
                }
                None => centered.copy_from_slice(s),
            }
            for i in 0..m {
                out.push(a.row(i).iter().zip(&centered).map(|(w, x)| w * x).sum());
            }
        }
        Self::from_samples(self.len, m, out)
    }

    /// Reorders samples in time; used to check permutation invariance.
    pub fn permute_time(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len {
            return Err(Error::DimensionMismatch {
                expected: self.len,
                got: order.len(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &t in order {
            data.extend_from_slice(self.sample(t));
        }
        Self::from_samples(self.len, self.channels, data)
    }
}

/// Scale `α` of a generalized Gaussian with shape `p` and unit variance,
/// `α² = Γ(1/p) / Γ(3/p)`.
pub fn gg_scale(p: f64) -> f64 {
    (0.5 * (libm::lgamma(1.0 / p) - libm::lgamma(3.0 / p))).exp()
}

/// Population excess kurtosis `Γ(5/p)Γ(1/p)/Γ(3/p)² − 3`.
pub fn gg_excess_kurtosis(p: f64) -> f64 {
    (libm::lgamma(5.0 / p) + libm::lgamma(1.0 / p) - 2.0 * libm::lgamma(3.0 / p)).exp() - 3.0
}

/// Unit-variance generalized-Gaussian sampler: `α · G^{1/p} · S` with
/// `G ~ Gamma(1/p, 1)` and `S` a fair sign.
struct GgSampler {
    gamma: Gamma<f64>,
    inv_p: f64,
    scale: f64,
}

impl GgSampler {
    fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "shape must be positive",
            });
        }
        let gamma = Gamma::new(1.0 / p, 1.0).map_err(|_| Error::InvalidParameter {
            name: "p",
            reason: "gamma shape out of range",
        })?;
        Ok(Self {
            gamma,
            inv_p: 1.0 / p,
            scale: gg_scale(p),
        })
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = self.gamma.sample(rng);
        let magnitude = self.scale * g.powf(self.inv_p);
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

/// `T` i.i.d. draws from the unit-variance generalized Gaussian with shape `p`.
pub fn sample_gg(p: f64, len: usize, seed: RngSeed) -> Result<Vec<f64>> {
    let sampler = GgSampler::new(p)?;
    let mut rng = seed.rng();
    Ok((0..len).map(|_| sampler.draw(&mut rng)).collect())
}

/// Stationary AR(1) path `s(t) = a s(t−1) + u(t)`, rescaled to unit sample
/// variance after a [`AR1_BURN_IN`] prefix is discarded.
pub fn sample_ar1(a: f64, len: usize, innovation: Innovation, seed: RngSeed) -> Result<Vec<f64>> {
    if a.is_nan() || a.abs() >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "a",
            reason: "AR(1) coefficient must satisfy |a| < 1",
        });
    }
    let gg = match innovation {
        Innovation::Gaussian => None,
        Innovation::GeneralizedGaussian(p) => Some(GgSampler::new(p)?),
    };
    let mut rng = seed.rng();
    let next_innovation = |rng: &mut ChaCha8Rng| match &gg {
        None => StandardNormal.sample(rng),
        Some(s) => s.draw(rng),
    };

    let mut state = 0.0;
    for _ in 0..AR1_BURN_IN {
        state = a * state + next_innovation(&mut rng);
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        state = a * state + next_innovation(&mut rng);
        out.push(state);
    }

    let mean = out.iter().sum::<f64>() / len.max(1) as f64;
    let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / len.max(1) as f64;
    if var > 0.0 {
        let inv_sd = 1.0 / var.sqrt();
        out.iter_mut().for_each(|x| *x *= inv_sd);
    }
    Ok(out)
}

/// `n` independent channels of `T` samples. Channel `i` draws from
/// `seed.derive(i)`, so it does not depend on the channel count.
pub fn generate_sources(
    spec: &SourceSpec,
    n: usize,
    len: usize,
    seed: RngSeed,
) -> Result<SignalBlock> {
    if n == 0 {
        return Err(Error::InvalidDimension("need at least one channel"));
    }
    spec.validate(n)?;
    let channels = (0..n)
        .map(|i| {
            let s = seed.derive(i as u64);
            match spec {
                SourceSpec::IidGg { p } => sample_gg(*p, len, s),
                SourceSpec::Ar1Gaussian { coeffs } => {
                    sample_ar1(coeffs[i], len, Innovation::Gaussian, s)
                }
                SourceSpec::Ar1Gg { p, coeffs } => {
                    sample_ar1(coeffs[i], len, Innovation::GeneralizedGaussian(*p), s)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SignalBlock::from_channels(&channels)
}

/// `x(t) = H s(t)`.
pub fn mix(h: &Mat, sources: &SignalBlock) -> Result<SignalBlock> {
    sources.transform(h, None)
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian matrix
/// with the sign convention that makes the triangular factor positive.
pub fn random_orthogonal(n: usize, seed: RngSeed) -> Result<Mat> {
    if n == 0 {
        return Err(Error::InvalidDimension("need n >= 1"));
    }
    let mut rng = seed.rng();
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for q in done.iter() {
            let proj: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= proj * qi);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Decomposition("degenerate Gaussian draw"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Mat::from_columns(&cols)
}
