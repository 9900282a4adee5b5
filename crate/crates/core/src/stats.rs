//! Sample statistics and the constraint families built from them.
//!
//! Covariances use the `1/T` normalizer so that whitening is an exact
//! algebraic identity on the fitted sample. Fourth-order statistics assume
//! whitened input and subtract the Gaussian part using the identity.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)] // float methods come from `Float` without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, vectorize, Mat};
use crate::signal::SignalBlock;

/// Eigenvalues below this fraction of the largest make whitening fail.
pub const WHITENING_RANK_TOL: f64 = 1e-10;

/// `(mean, (1/T) Σ (x−mean)(x−mean)ᵀ)`.
pub fn sample_mean_cov(x: &SignalBlock) -> Result<(Vec<f64>, Mat)> {
    let len = x.len();
    if len < 2 {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "covariance needs at least two samples",
        });
    }
    let n = x.channels();
    let mut mean = vec![0.0; n];
    for s in x.samples() {
        mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= len as f64);

    let mut acc = vec![0.0; n * n];
    let mut c = vec![0.0; n];
    for s in x.samples() {
        for ((ci, v), m) in c.iter_mut().zip(s).zip(&mean) {
            *ci = v - m;
        }
        for i in 0..n {
            for j in i..n {
                acc[i * n + j] += c[i] * c[j];
            }
        }
    }
    let cov = Mat::from_fn(n, n, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        acc[a * n + b] / len as f64
    });
    Ok((mean, cov))
}

/// Affine whitening map `z = W (x − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitener {
    pub mean: Vec<f64>,
    pub w: Mat,
}

impl Whitener {
    pub fn apply(&self, x: &SignalBlock) -> Result<SignalBlock> {
        x.transform(&self.w, Some(&self.mean))
    }
}

/// Fits `W = Λ^{−1/2} Uᵀ` from `Ĉ = U Λ Uᵀ` (eigenvalues descending).
pub fn fit_whitener(x: &SignalBlock) -> Result<Whitener> {
    let (mean, cov) = sample_mean_cov(x)?;
    let (vals, vecs) = sym_eigen(&cov)?;
    let largest = vals[0];
    let threshold = WHITENING_RANK_TOL * largest.max(0.0);
    let smallest = *vals.last().expect("at least one eigenvalue");
    if largest.is_nan() || largest <= 0.0 || smallest <= threshold {
        return Err(Error::SingularCovariance {
            eigenvalue: smallest,
            threshold,
        });
    }
    let n = cov.rows();
    let w = Mat::from_fn(n, n, |i, j| vecs.get(j, i) / vals[i].sqrt());
    Ok(Whitener { mean, w })
}

/// `R̂(τ) = (1/(T−τ)) Σ_{t≥τ} z(t) z(t−τ)ᵀ`, optionally symmetrized.
pub fn lagged_cov(z: &SignalBlock, lag: usize, symmetrize: bool) -> Result<Mat> {
    let len = z.len();
    if lag >= len {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: "lag must be smaller than the sample count",
        });
    }
    let n = z.channels();
    let mut acc = vec![0.0; n * n];
    for t in lag..len {
        let now = z.sample(t);
        let past = z.sample(t - lag);
        for i in 0..n {
            let zi = now[i];
            let row = &mut acc[i * n..(i + 1) * n];
            for (r, p) in row.iter_mut().zip(past) {
                *r += zi * p;
            }
        }
    }
    let norm = 1.0 / (len - lag) as f64;
    let r = Mat::from_fn(n, n, |i, j| acc[i * n + j] * norm);
    Ok(if symmetrize { r.symmetrized() } else { r })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Hos,
    Sos,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hos => "hos",
            Self::Sos => "sos",
        }
    }
}

/// Identifies one matrix of a [`ConstraintSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintTag {
    /// Lagged covariance at lag τ.
    Lag(usize),
    /// Cumulant matrix for the symmetric basis element `M_(i,j)`, `i ≤ j`,
    /// zero-based.
    Basis(usize, usize),
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lag(tau) => write!(f, "tau{tau}"),
            Self::Basis(i, j) => write!(f, "m{}_{}", i + 1, j + 1),
        }
    }
}

/// Ordered family of `n × n` constraint matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    family: Family,
    matrices: Vec<Mat>,
    tags: Vec<ConstraintTag>,
    norms: Vec<f64>,
}

impl ConstraintSet {
    pub fn new(family: Family, entries: Vec<(ConstraintTag, Mat)>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or(Error::InvalidDimension("constraint set must not be empty"))?;
        let n = first.1.rows();
        let mut tags = Vec::with_capacity(entries.len());
        let mut matrices = Vec::with_capacity(entries.len());
        for (tag, m) in entries {
            if !m.is_square() || m.rows() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: m.rows().max(m.cols()),
                });
            }
            tags.push(tag);
            matrices.push(m);
        }
        let norms = matrices.iter().map(Mat::frobenius_norm).collect();
        Ok(Self {
            family,
            matrices,
            tags,
            norms,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Matrix size `n`.
    pub fn dim(&self) -> usize {
        self.matrices[0].rows()
    }

    pub fn matrices(&self) -> &[Mat] {
        &self.matrices
    }

    pub fn tags(&self) -> &[ConstraintTag] {
        &self.tags
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let entries = indices
            .iter()
            .map(|&i| {
                self.matrices
                    .get(i)
                    .map(|m| (self.tags[i], m.clone()))
                    .ok_or(Error::InvalidParameter {
                        name: "index",
                        reason: "constraint index out of range",
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.family, entries)
    }

    /// `[vec A_1; …; vec A_|I|]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.matrices.iter().flat_map(vectorize).collect()
    }

    /// File stem `{family}_{tag}` for debug dumps.
    pub fn file_stem(&self, index: usize) -> String {
        format!("{}_{}", self.family.name(), self.tags[index])
    }
}

/// Symmetrized (by default) lagged covariances for lags `1..=L`.
pub fn sos_constraints(z: &SignalBlock, lags: usize, symmetrize: bool) -> Result<ConstraintSet> {
    if lags == 0 || lags >= z.len() {
        return Err(Error::InvalidParameter {
            name: "L",
            reason: "lag count must satisfy 1 <= L < T",
        });
    }
    let entries = (1..=lags)
        .map(|tau| Ok((ConstraintTag::Lag(tau), lagged_cov(z, tau, symmetrize)?)))
        .collect::<Result<Vec<_>>>()?;
    ConstraintSet::new(Family::Sos, entries)
}

/// Fourth-order cumulant tensor `Cum(z_i, z_j, z_k, z_l)` of a whitened
/// vector, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTensor {
    n: usize,
    data: Vec<f64>,
}

impl CumulantTensor {
    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.n + j) * self.n + k) * self.n + l
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx(i, j, k, l)]
    }

    /// Sample fourth moments minus the Gaussian part
    /// `δ_ij δ_kl + δ_ik δ_jl + δ_il δ_jk`. Assumes unit covariance.
    pub fn from_whitened_sample(z: &SignalBlock) -> Self {
        let n = z.channels();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let pair_index = |i: usize, j: usize| pairs.iter().position(|&p| p == (i, j)).unwrap();
        // quadruples i ≤ j ≤ k ≤ l as products of two pair products
        let mut quads = Vec::new();
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    for l in k..n {
                        quads.push(([i, j, k, l], pair_index(i, j), pair_index(k, l)));
                    }
                }
            }
        }
        let mut pp = vec![0.0; pairs.len()];
        let mut acc = vec![0.0; quads.len()];
        for s in z.samples() {
            for (v, &(i, j)) in pp.iter_mut().zip(&pairs) {
                *v = s[i] * s[j];
            }
            for (a, q) in acc.iter_mut().zip(&quads) {
                *a += pp[q.1] * pp[q.2];
            }
        }
        let inv_t = 1.0 / z.len() as f64;
        let mut tensor = Self {
            n,
            data: vec![0.0; n * n * n * n],
        };
        for (a, (idx, _, _)) in acc.iter().zip(&quads) {
            let m = a * inv_t;
            for_each_permutation(*idx, |[i, j, k, l]| {
                let gaussian = delta(i, j) * delta(k, l)
                    + delta(i, k) * delta(j, l)
                    + delta(i, l) * delta(j, k);
                let at = tensor.idx(i, j, k, l);
                tensor.data[at] = m - gaussian;
            });
        }
        tensor
    }

    /// Cumulant tensor of independent unit-variance channels with the given
    /// excess kurtoses: `κ_i` on the diagonal, zero elsewhere.
    pub fn from_independent(kurtosis: &[f64]) -> Self {
        let n = kurtosis.len();
        let mut tensor = Self {
            n,
            data: vec![0.0; n * n * n * n],
        };
        for (i, k) in kurtosis.iter().enumerate() {
            let at = tensor.idx(i, i, i, i);
            tensor.data[at] = *k;
        }
        tensor
    }

    /// Tensor of `z' = Qᵀ z`: `c'_abcd = Σ Q_ia Q_jb Q_kc Q_ld c_ijkl`.
    pub fn rotated(&self, q: &Mat) -> Result<Self> {
        if !q.is_square() || q.rows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.rows(),
            });
        }
        let n = self.n;
        let mut cur = self.data.clone();
        // one mode at a time; each pass rotates the leading index and cycles
        // it to the back, so four passes restore the original index order
        for _ in 0..4 {
            let mut next = vec![0.0; cur.len()];
            let stride = n * n * n;
            for a in 0..n {
                for rest in 0..stride {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += q.get(i, a) * cur[i * stride + rest];
                    }
                    next[rest * n + a] = s;
                }
            }
            cur = next;
        }
        Ok(Self { n, data: cur })
    }

    /// `Q(M)_kl = Σ_ij M_ij Cum(z_i, z_j, z_k, z_l)`.
    pub fn contract(&self, m: &Mat) -> Mat {
        let n = self.n;
        Mat::from_fn(n, n, |k, l| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = m.get(i, j);
                    if w != 0.0 {
                        s += w * self.get(i, j, k, l);
                    }
                }
            }
            s
        })
    }

    /// Cumulant matrices for the symmetric basis in `(i ≤ j)` row-major order.
    pub fn matrices(&self) -> Result<ConstraintSet> {
        let entries = symmetric_basis(self.n)
            .into_iter()
            .map(|(tag, m)| (tag, self.contract(&m)))
            .collect();
        ConstraintSet::new(Family::Hos, entries)
    }
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

fn for_each_permutation(idx: [usize; 4], mut f: impl FnMut([usize; 4])) {
    const PERMS: [[usize; 4]; 24] = [
        [0, 1, 2, 3],
        [0, 1, 3, 2],
        [0, 2, 1, 3],
        [0, 2, 3, 1],
        [0, 3, 1, 2],
        [0, 3, 2, 1],
        [1, 0, 2, 3],
        [1, 0, 3, 2],
        [1, 2, 0, 3],
        [1, 2, 3, 0],
        [1, 3, 0, 2],
        [1, 3, 2, 0],
        [2, 0, 1, 3],
        [2, 0, 3, 1],
        [2, 1, 0, 3],
        [2, 1, 3, 0],
        [2, 3, 0, 1],
        [2, 3, 1, 0],
        [3, 0, 1, 2],
        [3, 0, 2, 1],
        [3, 1, 0, 2],
        [3, 1, 2, 0],
        [3, 2, 0, 1],
        [3, 2, 1, 0],
    ];
    for p in PERMS {
        f([idx[p[0]], idx[p[1]], idx[p[2]], idx[p[3]]]);
    }
}

/// `M_ii = e_i e_iᵀ`, `M_ij = (e_i e_jᵀ + e_j e_iᵀ)/√2` for `i < j`.
pub fn symmetric_basis(n: usize) -> Vec<(ConstraintTag, Mat)> {
    let off = core::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut m = Mat::zeros(n, n);
            if i == j {
                m.set(i, i, 1.0);
            } else {
                m.set(i, j, off);
                m.set(j, i, off);
            }
            out.push((ConstraintTag::Basis(i, j), m));
        }
    }
    out
}

/// JADE-style cumulant matrices `Q(M) = Ê[(zᵀMz) zzᵀ] − tr(M) I − M − Mᵀ`
/// over the symmetric basis, `n(n+1)/2` of them.
pub fn cumulant_matrices(z: &SignalBlock) -> Result<ConstraintSet> {
    if z.len() < 100 {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: "cumulant estimation needs at least 100 samples",
        });
    }
    let n = z.channels();
    let r0 = lagged_cov(z, 0, false)?;
    if (&r0 - &Mat::identity(n)).frobenius_norm() > 0.05 * n as f64 {
        return Err(Error::ContractViolation(
            "cumulant matrices need whitened input",
        ));
    }
    CumulantTensor::from_whitened_sample(z).matrices()
}

/// Indices sorted by Frobenius norm, largest first; ties keep input order.
pub fn norm_order(c: &ConstraintSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c.norms()[b].total_cmp(&c.norms()[a]));
    order
}

/// The `K` largest-norm matrices, in descending norm order.
pub fn sort_truncate(c: &ConstraintSet, k: usize) -> Result<ConstraintSet> {
    if k == 0 || k > c.len() {
        return Err(Error::InvalidParameter {
            name: "K",
            reason: "constraint count must satisfy 1 <= K <= |C|",
        });
    }
    let order = norm_order(c);
    c.select(&order[..k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_sources, mix, random_orthogonal, RngSeed, SourceSpec};

    fn gaussian_block(n: usize, len: usize, seed: u64) -> SignalBlock {
        generate_sources(&SourceSpec::IidGg { p: 2.0 }, n, len, RngSeed::new(seed, 0)).unwrap()
    }

    fn whiten(x: &SignalBlock) -> SignalBlock {
        fit_whitener(x).unwrap().apply(x).unwrap()
    }

    #[test]
    fn mean_cov_examples() {
        let constant = SignalBlock::from_channels(&[vec![2.0; 10], vec![-1.0; 10]]).unwrap();
        let (mean, cov) = sample_mean_cov(&constant).unwrap();
        assert_eq!(mean, vec![2.0, -1.0]);
        assert_eq!(cov, Mat::zeros(2, 2));

        let ch: Vec<f64> = (0..50).map(|t| (t as f64 * 0.37).sin()).collect();
        let dup = SignalBlock::from_channels(&[ch.clone(), ch]).unwrap();
        let (_, cov) = sample_mean_cov(&dup).unwrap();
        let (vals, _) = sym_eigen(&cov).unwrap();
        assert!(vals[1].abs() < 1e-12);

        let one = SignalBlock::from_channels(&[vec![1.0]]).unwrap();
        assert!(sample_mean_cov(&one).is_err());
    }

    #[test]
    fn covariance_error_shrinks_like_inverse_sqrt_t() {
        let err = |len: usize| {
            let (_, cov) = sample_mean_cov(&gaussian_block(3, len, 21)).unwrap();
            (&cov - &Mat::identity(3))
                .as_slice()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let e5 = err(100_000);
        assert!(e5 < 0.02);
        let e6 = err(1_000_000);
        assert!(e6 < 0.006, "T=1e6 max error {e6}");
    }

    #[test]
    fn whitener_examples() {
        let white = gaussian_block(3, 5000, 3);
        let z = whiten(&white);
        let (_, cz) = sample_mean_cov(&z).unwrap();
        assert!((&cz - &Mat::identity(3)).frobenius_norm() < 1e-10);

        let scaled = mix(&Mat::identity(3).scale(3.0), &white).unwrap();
        let w3 = fit_whitener(&scaled).unwrap();
        for i in 0..3 {
            let norm = w3.w.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0 / 3.0).abs() < 0.01);
        }

        let model = SourceSpec::Ar1Gaussian {
            coeffs: vec![0.2, 0.6, 0.9],
        };
        let s = generate_sources(&model, 3, 100_000, RngSeed::new(8, 0)).unwrap();
        let h = Mat::from_rows(&[[1.0, 0.4, -0.2], [0.3, 1.2, 0.5], [-0.7, 0.1, 0.9]]).unwrap();
        let x = mix(&h, &s).unwrap();
        let w = fit_whitener(&x).unwrap();
        let (_, cx) = sample_mean_cov(&x).unwrap();
        let wcw = &(&w.w * &cx) * &w.w.transpose();
        assert!((&wcw - &Mat::identity(3)).frobenius_norm() <= 1e-10);
        let z = w.apply(&x).unwrap();
        assert!((&lagged_cov(&z, 0, false).unwrap() - &Mat::identity(3)).frobenius_norm() <= 1e-10);
    }

    #[test]
    fn whitener_on_white_data_is_nearly_orthogonal() {
        let z = whiten(&gaussian_block(3, 20_000, 4));
        let w = fit_whitener(&z).unwrap();
        assert!(w.w.orthogonality_defect() < 1e-10);
    }

    #[test]
    fn whitener_rejects_rank_deficiency() {
        let ch: Vec<f64> = (0..200).map(|t| (t as f64 * 0.11).cos()).collect();
        let x = SignalBlock::from_channels(&[ch.clone(), ch.iter().map(|v| 2.0 * v).collect()])
            .unwrap();
        match fit_whitener(&x) {
            Err(Error::SingularCovariance { eigenvalue, .. }) => assert!(eigenvalue.abs() < 1e-10),
            other => panic!("expected singular covariance, got {other:?}"),
        }
    }

    #[test]
    fn lagged_cov_examples() {
        let model = SourceSpec::Ar1Gaussian {
            coeffs: vec![0.9, 0.2],
        };
        let s = generate_sources(&model, 2, 100_000, RngSeed::new(14, 0)).unwrap();
        let r1 = lagged_cov(&s, 1, true).unwrap();
        assert!((r1.get(0, 0) - 0.9).abs() < 0.01);

        let w = gaussian_block(3, 100_000, 15);
        let r = lagged_cov(&w, 1, false).unwrap();
        assert!(r.as_slice().iter().all(|v| v.abs() < 0.02));

        assert!(lagged_cov(&w, 100_000, true).is_err());
    }

    #[test]
    fn lagged_cov_raw_vs_symmetrized() {
        let z = gaussian_block(3, 2000, 5);
        let raw = lagged_cov(&z, 2, false).unwrap();
        let sym = lagged_cov(&z, 2, true).unwrap();
        assert!(raw.asymmetry() > 0.0);
        assert_eq!(sym.asymmetry(), 0.0);
        assert_eq!(sym, raw.symmetrized());
    }

    #[test]
    fn lagged_cov_rotation_congruence() {
        let z = whiten(&gaussian_block(3, 3000, 6));
        let q = random_orthogonal(3, RngSeed::new(1, 2)).unwrap();
        let rotated = mix(&q.transpose(), &z).unwrap();
        for tau in 0..4 {
            let lhs = lagged_cov(&rotated, tau, false).unwrap();
            let rhs = &(&q.transpose() * &lagged_cov(&z, tau, false).unwrap()) * &q;
            assert!((&lhs - &rhs).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn sos_constraint_shapes() {
        let z = gaussian_block(3, 1000, 7);
        let c1 = sos_constraints(&z, 1, true).unwrap();
        assert_eq!(c1.len(), 1);
        assert_eq!(c1.tags(), &[ConstraintTag::Lag(1)]);
        let c7 = sos_constraints(&z, 7, true).unwrap();
        let expect: Vec<_> = (1..=7).map(ConstraintTag::Lag).collect();
        assert_eq!(c7.tags(), expect.as_slice());
        assert_eq!(c7.family(), Family::Sos);
        assert!(sos_constraints(&z, 0, true).is_err());
        assert!(sos_constraints(&z, 1000, true).is_err());
        assert_eq!(c7.file_stem(2), "sos_tau3");
    }

    #[test]
    fn white_noise_lag_norms_scale_like_n_over_sqrt_t() {
        // mean Frobenius norm over 50 trials, compared against n/√T
        let (n, len) = (3usize, 10_000usize);
        let mut mean = 0.0;
        for trial in 0..50 {
            let z = gaussian_block(n, len, 100 + trial);
            let c = sos_constraints(&z, 3, true).unwrap();
            mean += c.norms().iter().sum::<f64>() / 3.0;
        }
        mean /= 50.0;
        let scale = n as f64 / (len as f64).sqrt();
        assert!(
            mean > 0.3 * scale && mean < 3.0 * scale,
            "mean {mean} vs {scale}"
        );
    }

    #[test]
    fn cumulant_count_and_symmetry() {
        let z = whiten(&gaussian_block(3, 1000, 9));
        let c = cumulant_matrices(&z).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c.family(), Family::Hos);
        assert!(c.matrices().iter().all(|m| m.asymmetry() <= 1e-12));
        assert_eq!(c.file_stem(1), "hos_m1_2");
    }

    #[test]
    fn gaussian_cumulants_vanish() {
        let z = whiten(&gaussian_block(3, 100_000, 10));
        let c = cumulant_matrices(&z).unwrap();
        assert!(c.norms().iter().all(|&v| v <= 0.1), "{:?}", c.norms());
    }

    #[test]
    fn cumulant_matrices_match_brute_force() {
        // brute force: Ê[(zᵀMz) zzᵀ] − tr(M)I − M − Mᵀ straight from samples
        let z = whiten(
            &generate_sources(&SourceSpec::IidGg { p: 1.0 }, 3, 5000, RngSeed::new(4, 4)).unwrap(),
        );
        let c = cumulant_matrices(&z).unwrap();
        for ((_, m), got) in symmetric_basis(3).iter().zip(c.matrices()) {
            let mut acc = Mat::zeros(3, 3);
            for s in z.samples() {
                let q: f64 = (0..3)
                    .flat_map(|i| (0..3).map(move |j| (i, j)))
                    .map(|(i, j)| s[i] * m.get(i, j) * s[j])
                    .sum();
                let outer = Mat::from_fn(3, 3, |k, l| q * s[k] * s[l]);
                acc = &acc + &outer;
            }
            let expect =
                &(&(&acc.scale(1.0 / z.len() as f64) - &Mat::identity(3).scale(m.trace())) - m)
                    - &m.transpose();
            assert!((&expect - got).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn independent_cumulant_diagonal_matches_kurtosis() {
        // population structure Q(M_ii) = κ_i e_i e_iᵀ, checked on a large draw
        // of independent channels with known excess kurtosis
        let len = 1_000_000;
        let ps = [1.0, 3.0, 0.8];
        let channels: Vec<Vec<f64>> = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| crate::signal::sample_gg(p, len, RngSeed::new(77, i as u64)).unwrap())
            .collect();
        let z = SignalBlock::from_channels(&channels).unwrap();
        let c = cumulant_matrices(&z).unwrap();
        for (i, &p) in ps.iter().enumerate() {
            let kappa =
                libm::tgamma(5.0 / p) * libm::tgamma(1.0 / p) / libm::tgamma(3.0 / p).powi(2) - 3.0;
            let pos = symmetric_basis(3)
                .iter()
                .position(|(t, _)| *t == ConstraintTag::Basis(i, i))
                .unwrap();
            let q = &c.matrices()[pos];
            let target = Mat::from_fn(3, 3, |k, l| if k == i && l == i { kappa } else { 0.0 });
            let tol = 0.1 * kappa.abs().max(1.0);
            assert!((q - &target).frobenius_norm() < tol, "p={p} got {q:?}");
        }
    }

    #[test]
    fn cumulants_reject_unwhitened() {
        let x = mix(&Mat::identity(3).scale(5.0), &gaussian_block(3, 1000, 11)).unwrap();
        assert!(matches!(
            cumulant_matrices(&x),
            Err(Error::ContractViolation(_))
        ));
        let short = whiten(&gaussian_block(3, 50, 12));
        assert!(cumulant_matrices(&short).is_err());
    }

    #[test]
    fn cumulants_invariant_to_time_order() {
        let z = whiten(
            &generate_sources(&SourceSpec::IidGg { p: 1.0 }, 3, 2000, RngSeed::new(3, 3)).unwrap(),
        );
        let order: Vec<usize> = (0..z.len()).rev().collect();
        let a = cumulant_matrices(&z).unwrap();
        let b = cumulant_matrices(&z.permute_time(&order).unwrap()).unwrap();
        for (x, y) in a.matrices().iter().zip(b.matrices()) {
            assert!(x
                .as_slice()
                .iter()
                .zip(y.as_slice())
                .all(|(u, v)| (u - v).abs() <= 1e-12));
        }
    }

    #[test]
    fn tensor_rotation_matches_rotated_samples() {
        let z = whiten(
            &generate_sources(&SourceSpec::IidGg { p: 0.8 }, 3, 3000, RngSeed::new(5, 5)).unwrap(),
        );
        let q = random_orthogonal(3, RngSeed::new(6, 6)).unwrap();
        let direct = CumulantTensor::from_whitened_sample(&mix(&q.transpose(), &z).unwrap());
        let algebraic = CumulantTensor::from_whitened_sample(&z)
            .rotated(&q)
            .unwrap();
        let diff: f64 = direct
            .data
            .iter()
            .zip(&algebraic.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-11, "diff {diff}");
    }

    #[test]
    fn sort_truncate_examples() {
        let mats = [3.0, 1.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| (ConstraintTag::Lag(i + 1), Mat::identity(2).scale(s)))
            .collect();
        let c = ConstraintSet::new(Family::Sos, mats).unwrap();
        let t = sort_truncate(&c, 2).unwrap();
        assert_eq!(t.tags(), &[ConstraintTag::Lag(1), ConstraintTag::Lag(3)]);
        let full = sort_truncate(&c, 3).unwrap();
        assert_eq!(full.len(), 3);
        assert!(full.norms().windows(2).all(|w| w[0] >= w[1]));
        assert!(sort_truncate(&c, 0).is_err());
        assert!(sort_truncate(&c, 4).is_err());

        let equal = (1..=3)
            .map(|i| (ConstraintTag::Lag(i), Mat::identity(2)))
            .collect();
        let e = ConstraintSet::new(Family::Sos, equal).unwrap();
        assert_eq!(sort_truncate(&e, 3).unwrap().tags(), e.tags());
    }
}
