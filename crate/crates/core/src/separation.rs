//! Reference separation pipelines: Jacobi joint diagonalization, JADE- and
//! SOBI-style demixing, and the Amari performance index.

use alloc::vec::Vec;
#[allow(unused_imports)] // float methods come from `Float` without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::signal::SignalBlock;
use crate::stats::{cumulant_matrices, fit_whitener, sos_constraints, ConstraintSet};

pub const DEFAULT_ANGLE_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct DiagonalizerResult {
    /// Accumulated rotation; `Vᵀ A_k V` is approximately diagonal.
    pub v: Mat,
    /// `Σ_k ‖offdiag(Vᵀ A_k V)‖_F²`.
    pub off_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Residual before the first sweep, then after each sweep.
    pub residual_history: Vec<f64>,
}

fn off_residual(mats: &[Mat]) -> f64 {
    mats.iter().map(Mat::off_diagonal_energy).sum()
}

/// Joint approximate diagonalization of symmetric matrices by Givens sweeps.
///
/// Each pair `(p, q)` is rotated by the angle that minimizes the summed
/// off-diagonal mass of the 2×2 sub-blocks, taken from the principal axis
/// of `Σ_k g_k g_kᵀ` with `g_k = (A_pp − A_qq, A_pq + A_qp)`.
pub fn joint_diagonalize(
    a_list: &[Mat],
    angle_tol: f64,
    max_sweeps: usize,
) -> Result<DiagonalizerResult> {
    let first = a_list
        .first()
        .ok_or(Error::InvalidDimension("need at least one matrix"))?;
    let n = first.rows();
    for a in a_list {
        if !a.is_square() || a.rows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.rows(),
            });
        }
        if a.asymmetry() > 1e-10 {
            return Err(Error::ContractViolation(
                "joint diagonalization needs symmetric matrices",
            ));
        }
    }

    let mut mats: Vec<Mat> = a_list.to_vec();
    let mut v = Mat::identity(n);
    let mut history = alloc::vec![off_residual(&mats)];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < max_sweeps {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
                for a in &mats {
                    let d = a.get(p, p) - a.get(q, q);
                    let o = a.get(p, q) + a.get(q, p);
                    g11 += d * d;
                    g12 += d * o;
                    g22 += o * o;
                }
                let ton = g11 - g22;
                let toff = 2.0 * g12;
                let theta = 0.5 * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (s, c) = theta.sin_cos();
                if s.abs() < angle_tol {
                    continue;
                }
                rotated = true;
                for a in mats.iter_mut() {
                    rotate_columns(a, p, q, c, s);
                    rotate_rows(a, p, q, c, s);
                }
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        history.push(off_residual(&mats));
        if !rotated {
            converged = true;
            break;
        }
    }

    Ok(DiagonalizerResult {
        v,
        off_residual: *history.last().expect("non-empty"),
        sweeps,
        converged,
        residual_history: history,
    })
}

fn rotate_columns(a: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.rows() {
        let (ap, aq) = (a.get(i, p), a.get(i, q));
        a.set(i, p, c * ap + s * aq);
        a.set(i, q, c * aq - s * ap);
    }
}

fn rotate_rows(a: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for j in 0..a.cols() {
        let (ap, aq) = (a.get(p, j), a.get(q, j));
        a.set(p, j, c * ap + s * aq);
        a.set(q, j, c * aq - s * ap);
    }
}

fn demix(
    x: &SignalBlock,
    build: impl FnOnce(&SignalBlock) -> Result<ConstraintSet>,
) -> Result<Mat> {
    let whitener = fit_whitener(x)?;
    let z = whitener.apply(x)?;
    let set = build(&z)?;
    let jd = joint_diagonalize(set.matrices(), DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS)?;
    Ok(&jd.v.transpose() * &whitener.w)
}

/// Whitening followed by joint diagonalization of the fourth-order
/// cumulant matrices. Returns the total demixing matrix.
pub fn jade_separate(x: &SignalBlock) -> Result<Mat> {
    demix(x, cumulant_matrices)
}

/// Whitening followed by joint diagonalization of symmetrized lagged
/// covariances for lags `1..=L`. `L = 1` is AMUSE.
pub fn sobi_separate(x: &SignalBlock, lags: usize) -> Result<Mat> {
    if lags == 0 {
        return Err(Error::InvalidParameter {
            name: "L",
            reason: "lag count must be at least 1",
        });
    }
    demix(x, |z| sos_constraints(z, lags, true))
}

/// Amari performance index of a global matrix `P = W H`, normalized to
/// `[0, 1]`; zero exactly when `P` is a scaled permutation.
pub fn amari_index(p: &Mat) -> Result<f64> {
    if !p.is_square() {
        return Err(Error::ContractViolation(
            "amari index needs a square matrix",
        ));
    }
    let n = p.rows();
    if n < 2 {
        return Ok(0.0);
    }
    let abs = Mat::from_fn(n, n, |i, j| p.get(i, j).abs());
    let mut total = 0.0;
    for i in 0..n {
        let row = abs.row(i);
        let max = row.iter().fold(0.0f64, |m, &v| m.max(v));
        if max == 0.0 {
            return Err(Error::ContractViolation("amari index: zero row"));
        }
        total += row.iter().map(|v| v / max).sum::<f64>() - 1.0;
    }
    for j in 0..n {
        let col = abs.column(j);
        let max = col.iter().fold(0.0f64, |m, &v| m.max(v));
        if max == 0.0 {
            return Err(Error::ContractViolation("amari index: zero column"));
        }
        total += col.iter().map(|v| v / max).sum::<f64>() - 1.0;
    }
    Ok(total / (2.0 * (n * (n - 1)) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;
    use crate::signal::{generate_sources, mix, random_orthogonal, RngSeed, SourceSpec};
    use alloc::vec;

    fn perm3() -> Mat {
        Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn amari_examples() {
        assert_eq!(amari_index(&Mat::identity(3)).unwrap(), 0.0);
        let pd = &perm3() * &Mat::diag(&[2.0, -3.0, 0.5]);
        assert_eq!(amari_index(&pd).unwrap(), 0.0);
        let ones = Mat::from_fn(3, 3, |_, _| 1.0);
        assert_eq!(amari_index(&ones).unwrap(), 1.0);
        let mut zero_row = Mat::identity(3);
        zero_row.set(1, 1, 0.0);
        assert!(amari_index(&zero_row).is_err());
    }

    #[test]
    fn amari_permutation_invariance() {
        let p = Mat::from_rows(&[[1.0, 0.2, -0.1], [0.05, -2.0, 0.3], [0.4, 0.1, 0.7]]).unwrap();
        let base = amari_index(&p).unwrap();
        assert!((amari_index(&(&perm3() * &p)).unwrap() - base).abs() < 1e-15);
        assert!((amari_index(&(&p * &perm3())).unwrap() - base).abs() < 1e-15);
        assert!((amari_index(&p.scale(-3.0)).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn already_diagonal_set() {
        let set = vec![Mat::diag(&[1.0, 2.0, 3.0]), Mat::diag(&[-1.0, 0.5, 0.0])];
        let r = joint_diagonalize(&set, DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(r.sweeps, 1);
        assert!(r.converged);
        assert_eq!(r.v, Mat::identity(3));
        assert_eq!(r.off_residual, 0.0);
    }

    #[test]
    fn recovers_known_rotation() {
        let q = random_orthogonal(3, RngSeed::new(10, 1)).unwrap();
        let diags = [[1.0, 2.0, 3.0], [0.5, -1.0, 0.2], [3.0, 0.1, -0.4]];
        let set: Vec<Mat> = diags
            .iter()
            .map(|d| &(&q.transpose() * &Mat::diag(d)) * &q)
            .collect();
        let r = joint_diagonalize(&set, DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!(r.converged);
        assert!(r.off_residual <= 1e-20, "residual {}", r.off_residual);
        assert!(r.v.orthogonality_defect() <= 1e-10);
        // Vᵀ Qᵀ should be a signed permutation
        let p = &r.v.transpose() * &q.transpose();
        assert!(amari_index(&p).unwrap() < 1e-8);
    }

    #[test]
    fn residual_is_monotone_per_sweep() {
        let x =
            generate_sources(&SourceSpec::IidGg { p: 1.0 }, 4, 5000, RngSeed::new(1, 9)).unwrap();
        let z = fit_whitener(&x).unwrap().apply(&x).unwrap();
        let c = cumulant_matrices(&z).unwrap();
        let r = joint_diagonalize(c.matrices(), DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        for w in r.residual_history.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12) + 1e-300,
                "{:?}",
                r.residual_history
            );
        }
        assert!(r.v.orthogonality_defect() <= 1e-10);
    }

    #[test]
    fn single_matrix_matches_eigenvectors() {
        let a = Mat::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 1.0]]).unwrap();
        let r = joint_diagonalize(
            core::slice::from_ref(&a),
            DEFAULT_ANGLE_TOL,
            DEFAULT_MAX_SWEEPS,
        )
        .unwrap();
        let (_, vecs) = sym_eigen(&a).unwrap();
        let p = &r.v.transpose() * &vecs;
        assert!(amari_index(&p).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Mat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            joint_diagonalize(&[a], DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let x =
            generate_sources(&SourceSpec::IidGg { p: 1.0 }, 3, 2000, RngSeed::new(4, 4)).unwrap();
        let z = fit_whitener(&x).unwrap().apply(&x).unwrap();
        let c = cumulant_matrices(&z).unwrap();
        let r = joint_diagonalize(c.matrices(), 0.0, 1).unwrap();
        assert!(!r.converged);
        assert_eq!(r.sweeps, 1);
    }

    #[test]
    fn jade_separates_laplace() {
        let s = generate_sources(
            &SourceSpec::IidGg { p: 1.0 },
            3,
            100_000,
            RngSeed::new(20, 0),
        )
        .unwrap();
        let w = jade_separate(&s).unwrap();
        assert!(amari_index(&w).unwrap() < 0.05);

        let h = random_orthogonal(3, RngSeed::new(21, 0)).unwrap();
        let x = mix(&h, &s).unwrap();
        let w = jade_separate(&x).unwrap();
        assert!(amari_index(&(&w * &h)).unwrap() < 0.05);
        assert_eq!(jade_separate(&x).unwrap(), w);
    }

    #[test]
    fn sobi_separates_distinct_spectra() {
        let spec = SourceSpec::Ar1Gaussian {
            coeffs: vec![0.2, 0.6, 0.9],
        };
        let s = generate_sources(&spec, 3, 100_000, RngSeed::new(22, 0)).unwrap();
        let h = random_orthogonal(3, RngSeed::new(23, 0)).unwrap();
        let x = mix(&h, &s).unwrap();
        let w = sobi_separate(&x, 3).unwrap();
        assert!(amari_index(&(&w * &h)).unwrap() < 0.05);
        assert!(sobi_separate(&x, 0).is_err());
    }

    #[test]
    fn amuse_fails_on_degenerate_lag_one() {
        // population R(1) = diag(0.5, 0.5, 0.9): channels 0 and 1 are not separable
        let spec = SourceSpec::Ar1Gaussian {
            coeffs: vec![0.5, 0.5, 0.9],
        };
        let mut total = 0.0;
        for seed in 0..5 {
            let s = generate_sources(&spec, 3, 100_000, RngSeed::new(30 + seed, 0)).unwrap();
            let h = random_orthogonal(3, RngSeed::new(40 + seed, 0)).unwrap();
            let w = sobi_separate(&mix(&h, &s).unwrap(), 1).unwrap();
            total += amari_index(&(&w * &h)).unwrap();
        }
        assert!(total / 5.0 > 0.05, "mean API {}", total / 5.0);
    }

    #[test]
    fn white_gaussian_cannot_be_separated() {
        let mut total = 0.0;
        for seed in 0..5 {
            let s = generate_sources(
                &SourceSpec::IidGg { p: 2.0 },
                3,
                50_000,
                RngSeed::new(50 + seed, 0),
            )
            .unwrap();
            let h = random_orthogonal(3, RngSeed::new(60 + seed, 0)).unwrap();
            let x = mix(&h, &s).unwrap();
            total += amari_index(&(&sobi_separate(&x, 3).unwrap() * &h)).unwrap();
        }
        assert!(total / 5.0 > 0.1, "mean API {}", total / 5.0);
    }
}
