//! Jacobian probe of the observation map under right-orthogonal
//! reparameterizations at the reference point `H₀ = I`.
//!
//! For a rotation `Q`, the candidate sources are `Qᵀ z`. The observation map
//! applies the family's construction rule to those signals (sample mode) or
//! transforms exact population statistics (population mode), then stacks the
//! column-wise vectorized matrices. The Jacobian collects central
//! differences along each skew generator; its smallest singular value is
//! the probe and its near-null space counts unconstrained directions.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::fmt::format_f64;
use crate::linalg::{commutator, expm_skew, svd, vectorize, Mat, SkewBasis};
use crate::signal::SignalBlock;
use crate::stats::{
    cumulant_matrices, norm_order, sos_constraints, ConstraintSet, ConstraintTag, CumulantTensor,
    Family,
};

pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const DEFAULT_KERNEL_TOL: f64 = 1e-8;

/// Constraint family and its construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    /// Cumulant matrices, truncated to the `k` largest by norm at the
    /// reference point (`None` keeps all `n(n+1)/2`).
    Hos { k: Option<usize> },
    /// Lagged covariances for lags `1..=lags`.
    Sos { lags: usize, symmetrize: bool },
}

#[derive(Debug, Clone)]
enum Source {
    Sample { z: SignalBlock, spec: FamilySpec },
    PopulationSos(ConstraintSet),
    PopulationHos(CumulantTensor),
}

/// Evaluates `Φ(H₀ Q)` for orthogonal `Q`.
#[derive(Debug, Clone)]
pub struct ObservationEvaluator {
    source: Source,
    /// HOS truncation, frozen at the reference point so every rotated
    /// evaluation stacks the same basis elements in the same order.
    selection: Option<Vec<usize>>,
}

impl ObservationEvaluator {
    /// Sample mode over whitened signals.
    pub fn sample(z: SignalBlock, spec: FamilySpec) -> Result<Self> {
        let selection = match spec {
            FamilySpec::Hos { k } => {
                let full = cumulant_matrices(&z)?;
                Some(truncation(&full, k)?)
            }
            FamilySpec::Sos { lags, .. } => {
                if lags == 0 || lags >= z.len() {
                    return Err(Error::InvalidParameter {
                        name: "L",
                        reason: "lag count must satisfy 1 <= L < T",
                    });
                }
                None
            }
        };
        Ok(Self {
            source: Source::Sample { z, spec },
            selection,
        })
    }

    /// Population mode over exact second-order matrices `R(τ)`, which
    /// transform by congruence `Qᵀ R Q`.
    pub fn population_sos(set: ConstraintSet) -> Result<Self> {
        if set.family() != Family::Sos {
            return Err(Error::ContractViolation(
                "population_sos needs an SOS constraint set",
            ));
        }
        Ok(Self {
            source: Source::PopulationSos(set),
            selection: None,
        })
    }

    /// Population mode over an exact fourth-order cumulant tensor.
    pub fn population_hos(tensor: CumulantTensor, k: Option<usize>) -> Result<Self> {
        let full = tensor.matrices()?;
        let selection = Some(truncation(&full, k)?);
        Ok(Self {
            source: Source::PopulationHos(tensor),
            selection,
        })
    }

    pub fn family(&self) -> Family {
        match &self.source {
            Source::Sample {
                spec: FamilySpec::Hos { .. },
                ..
            }
            | Source::PopulationHos(_) => Family::Hos,
            Source::Sample {
                spec: FamilySpec::Sos { .. },
                ..
            }
            | Source::PopulationSos(_) => Family::Sos,
        }
    }

    /// Channel count.
    pub fn n(&self) -> usize {
        match &self.source {
            Source::Sample { z, .. } => z.channels(),
            Source::PopulationSos(set) => set.dim(),
            Source::PopulationHos(t) => t.dim(),
        }
    }

    /// Constraint set of the reparameterized model `H₀ Q`.
    pub fn constraint_set(&self, q: &Mat) -> Result<ConstraintSet> {
        let set = match &self.source {
            Source::Sample { z, spec } => {
                let rotated = rotate_signals(z, q)?;
                match *spec {
                    FamilySpec::Hos { .. } => cumulant_matrices(&rotated)?,
                    FamilySpec::Sos { lags, symmetrize } => {
                        sos_constraints(&rotated, lags, symmetrize)?
                    }
                }
            }
            Source::PopulationSos(set) => {
                check_orthogonal(q, set.dim())?;
                let qt = q.transpose();
                let entries = set
                    .tags()
                    .iter()
                    .zip(set.matrices())
                    .map(|(tag, r)| (*tag, &(&qt * r) * q))
                    .collect();
                ConstraintSet::new(Family::Sos, entries)?
            }
            Source::PopulationHos(tensor) => {
                check_orthogonal(q, tensor.dim())?;
                tensor.rotated(q)?.matrices()?
            }
        };
        match &self.selection {
            Some(idx) => set.select(idx),
            None => Ok(set),
        }
    }

    /// Constraint set at `Q = I`.
    pub fn reference_set(&self) -> Result<ConstraintSet> {
        self.constraint_set(&Mat::identity(self.n()))
    }

    /// Stacked `φ(H₀ Q) = [vec A_1; …; vec A_|I|]`.
    pub fn evaluate_phi(&self, q: &Mat) -> Result<Vec<f64>> {
        Ok(self.constraint_set(q)?.stacked())
    }
}

fn truncation(full: &ConstraintSet, k: Option<usize>) -> Result<Vec<usize>> {
    let k = k.unwrap_or(full.len());
    if k == 0 || k > full.len() {
        return Err(Error::InvalidParameter {
            name: "K",
            reason: "constraint count must satisfy 1 <= K <= n(n+1)/2",
        });
    }
    let mut order = norm_order(full);
    order.truncate(k);
    Ok(order)
}

fn check_orthogonal(q: &Mat, n: usize) -> Result<()> {
    if !q.is_square() || q.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.rows(),
        });
    }
    if q.orthogonality_defect() > 1e-10 {
        return Err(Error::ContractViolation("rotation must be orthogonal"));
    }
    Ok(())
}

/// `z'(t) = Qᵀ z(t)`.
pub fn rotate_signals(z: &SignalBlock, q: &Mat) -> Result<SignalBlock> {
    check_orthogonal(q, z.channels())?;
    crate::signal::mix(&q.transpose(), z)
}

/// Central-difference column for generator `Ω_k`.
pub fn jacobian_fd_column(
    ev: &ObservationEvaluator,
    basis: &SkewBasis,
    k: usize,
    step: f64,
) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: "finite-difference step must be positive",
        });
    }
    if basis.n() != ev.n() {
        return Err(Error::DimensionMismatch {
            expected: ev.n(),
            got: basis.n(),
        });
    }
    let g = &basis.generators()[k];
    let plus = ev.evaluate_phi(&expm_skew(&g.scale(step))?)?;
    let minus = ev.evaluate_phi(&expm_skew(&g.scale(-step))?)?;
    let inv = 0.5 / step;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) * inv)
        .collect())
}

/// `J` by central differences, one column per generator. Both evaluations
/// of a difference reuse the evaluator's data.
pub fn jacobian_fd(ev: &ObservationEvaluator, basis: &SkewBasis, step: f64) -> Result<Mat> {
    let columns = (0..basis.dim())
        .map(|k| jacobian_fd_column(ev, basis, k, step))
        .collect::<Result<Vec<_>>>()?;
    Mat::from_columns(&columns)
}

/// Exact SOS Jacobian: column `k` stacks `vec([R(τ), Ω_k])` over the lags,
/// the derivative of `Qᵀ R Q` at `Q = I` along `exp(εΩ_k)`.
pub fn jacobian_sos_analytic(r_list: &[Mat], basis: &SkewBasis) -> Result<Mat> {
    if r_list.is_empty() {
        return Err(Error::InvalidDimension("need at least one matrix"));
    }
    let columns = basis
        .generators()
        .iter()
        .map(|g| {
            let mut col = Vec::with_capacity(r_list.len() * basis.n() * basis.n());
            for r in r_list {
                col.extend(vectorize(&commutator(r, g)?));
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    Mat::from_columns(&columns)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMode {
    FiniteDifference { step: f64 },
    AnalyticSos,
}

impl Default for JacobianMode {
    fn default() -> Self {
        Self::FiniteDifference {
            step: DEFAULT_FD_STEP,
        }
    }
}

/// Spectrum summary of a probe Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub rows: usize,
    pub cols: usize,
    /// Descending, always `cols` long: when `rows < cols` the missing
    /// values are structural zeros.
    pub singular_values: Vec<f64>,
    pub probe: f64,
    pub kernel_dim: usize,
    pub tol: f64,
}

impl JacobianReport {
    pub fn from_jacobian(j: &Mat, tol: f64) -> Result<Self> {
        let mut sv = svd(j)?.singular_values;
        sv.resize(j.cols(), 0.0);
        let threshold = tol * sv[0].max(1.0);
        let rank = sv.iter().filter(|&&s| s > threshold).count();
        Ok(Self {
            rows: j.rows(),
            cols: j.cols(),
            probe: *sv.last().expect("at least one column"),
            singular_values: sv,
            kernel_dim: j.cols() - rank,
            tol,
        })
    }

    pub fn rank(&self) -> usize {
        self.cols - self.kernel_dim
    }

    /// Flat `key=value` lines with 17-significant-digit floats.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let sv: Vec<String> = self
            .singular_values
            .iter()
            .map(|&s| format_f64(s))
            .collect();
        let _ = writeln!(out, "rows={}", self.rows);
        let _ = writeln!(out, "cols={}", self.cols);
        let _ = writeln!(out, "probe={}", format_f64(self.probe));
        let _ = writeln!(out, "kernel_dim={}", self.kernel_dim);
        let _ = writeln!(out, "tol={}", format_f64(self.tol));
        let _ = writeln!(out, "sv={}", sv.join(","));
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let bad = |reason| Error::InvalidParameter {
            name: "report",
            reason,
        };
        let (mut rows, mut cols, mut probe, mut kernel_dim, mut tol, mut sv) =
            (None, None, None, None, None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line.split_once('=').ok_or(bad("line without '='"))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad("unparsable float"));
            let int = |v: &str| v.parse::<usize>().map_err(|_| bad("unparsable integer"));
            match key {
                "rows" => rows = Some(int(value)?),
                "cols" => cols = Some(int(value)?),
                "probe" => probe = Some(num(value)?),
                "kernel_dim" => kernel_dim = Some(int(value)?),
                "tol" => tol = Some(num(value)?),
                "sv" => {
                    sv = Some(
                        value
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(num)
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                _ => return Err(bad("unknown key")),
            }
        }
        Ok(Self {
            rows: rows.ok_or(bad("missing rows"))?,
            cols: cols.ok_or(bad("missing cols"))?,
            singular_values: sv.ok_or(bad("missing sv"))?,
            probe: probe.ok_or(bad("missing probe"))?,
            kernel_dim: kernel_dim.ok_or(bad("missing kernel_dim"))?,
            tol: tol.unwrap_or(DEFAULT_KERNEL_TOL),
        })
    }
}

/// Assembles `J` in the requested mode.
pub fn jacobian(ev: &ObservationEvaluator, basis: &SkewBasis, mode: JacobianMode) -> Result<Mat> {
    match mode {
        JacobianMode::FiniteDifference { step } => jacobian_fd(ev, basis, step),
        JacobianMode::AnalyticSos => {
            if ev.family() != Family::Sos {
                return Err(Error::ContractViolation(
                    "analytic mode requires the SOS family",
                ));
            }
            let set = ev.reference_set()?;
            jacobian_sos_analytic(set.matrices(), basis)
        }
    }
}

pub fn probe(
    ev: &ObservationEvaluator,
    basis: &SkewBasis,
    mode: JacobianMode,
) -> Result<JacobianReport> {
    probe_with_tol(ev, basis, mode, DEFAULT_KERNEL_TOL)
}

pub fn probe_with_tol(
    ev: &ObservationEvaluator,
    basis: &SkewBasis,
    mode: JacobianMode,
    tol: f64,
) -> Result<JacobianReport> {
    JacobianReport::from_jacobian(&jacobian(ev, basis, mode)?, tol)
}

/// Stacks Jacobians vertically; the kernel of the stack is the
/// intersection of the individual kernels.
pub fn kernel_intersection_check(j_list: &[Mat], tol: f64) -> Result<(Mat, JacobianReport)> {
    let stacked = Mat::vstack(j_list)?;
    let report = JacobianReport::from_jacobian(&stacked, tol)?;
    Ok((stacked, report))
}

/// Orthonormal basis (coefficient vectors over the generators) of the
/// numerical null space of `J` at tolerance `tol·max(σ_max, 1)`.
pub fn kernel_basis(j: &Mat, tol: f64) -> Result<Vec<Vec<f64>>> {
    let padded = if j.rows() < j.cols() {
        Mat::vstack(&[j.clone(), Mat::zeros(j.cols() - j.rows(), j.cols())])?
    } else {
        j.clone()
    };
    let dec = svd(&padded)?;
    let threshold = tol * dec.singular_values[0].max(1.0);
    Ok(dec
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(c, _)| dec.v.column(c))
        .collect())
}

/// Population lagged covariances `R(τ) = diag(a_i^τ)` of unit-variance AR(1)
/// channels. `τ = 0` gives the whitening constraint `I`.
pub fn ar1_population_set(coeffs: &[f64], lags: &[usize]) -> Result<ConstraintSet> {
    let entries = lags
        .iter()
        .map(|&tau| {
            let d: Vec<f64> = coeffs.iter().map(|a| powi(*a, tau)).collect();
            (ConstraintTag::Lag(tau), Mat::diag(&d))
        })
        .collect();
    ConstraintSet::new(Family::Sos, entries)
}

fn powi(a: f64, k: usize) -> f64 {
    let mut out = 1.0;
    for _ in 0..k {
        out *= a;
    }
    out
}

/// Population probe for AR(1) sources with lags `1..=L`, for every `L` in
/// `1..=max_lags`, via the analytic Jacobian.
pub fn population_sos_curve(coeffs: &[f64], max_lags: usize) -> Result<Vec<f64>> {
    let basis = crate::linalg::skew_basis(coeffs.len())?;
    (1..=max_lags)
        .map(|l| {
            let lags: Vec<usize> = (1..=l).collect();
            let set = ar1_population_set(coeffs, &lags)?;
            let j = jacobian_sos_analytic(set.matrices(), &basis)?;
            Ok(JacobianReport::from_jacobian(&j, DEFAULT_KERNEL_TOL)?.probe)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{singular_spectrum, skew_basis};
    use crate::signal::{generate_sources, random_orthogonal, RngSeed, SourceSpec};
    use crate::stats::fit_whitener;
    use alloc::vec;

    fn whitened(spec: &SourceSpec, len: usize, seed: u64) -> SignalBlock {
        let s = generate_sources(spec, 3, len, RngSeed::new(seed, 0)).unwrap();
        fit_whitener(&s).unwrap().apply(&s).unwrap()
    }

    fn pop_sos(coeffs: &[f64], lags: &[usize]) -> ObservationEvaluator {
        ObservationEvaluator::population_sos(ar1_population_set(coeffs, lags).unwrap()).unwrap()
    }

    /// Singular values of a 3-column matrix from the eigenvalues of JᵀJ,
    /// by the trigonometric solution of the characteristic cubic.
    fn sv_oracle_3(j: &Mat) -> [f64; 3] {
        let g = &j.transpose() * j;
        let p1 = g.get(0, 1).powi(2) + g.get(0, 2).powi(2) + g.get(1, 2).powi(2);
        let q = g.trace() / 3.0;
        let p2 = (g.get(0, 0) - q).powi(2)
            + (g.get(1, 1) - q).powi(2)
            + (g.get(2, 2) - q).powi(2)
            + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return [q.sqrt(); 3];
        }
        let b = (&g - &Mat::identity(3).scale(q)).scale(1.0 / p);
        let r = (b.determinant().unwrap() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * core::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1.max(0.0).sqrt(), e2.max(0.0).sqrt(), e3.max(0.0).sqrt()]
    }

    #[test]
    fn rotate_signals_examples() {
        let z = whitened(&SourceSpec::IidGg { p: 1.0 }, 500, 1);
        assert_eq!(rotate_signals(&z, &Mat::identity(3)).unwrap(), z);
        let perm = Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let p = rotate_signals(&z, &perm).unwrap();
        // z' = Pᵀ z, so z'_j = z_i where P_ij = 1
        assert_eq!(p.channel(1), z.channel(0));
        assert_eq!(p.channel(2), z.channel(1));
        let q = random_orthogonal(3, RngSeed::new(2, 2)).unwrap();
        let back = rotate_signals(&rotate_signals(&z, &q).unwrap(), &q.transpose()).unwrap();
        let err = back
            .as_slice()
            .iter()
            .zip(z.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!(rotate_signals(&z, &Mat::identity(3).scale(1.1)).is_err());
    }

    #[test]
    fn evaluate_phi_examples() {
        let z = whitened(
            &SourceSpec::Ar1Gaussian {
                coeffs: vec![0.2, 0.6, 0.9],
            },
            2000,
            3,
        );
        let ev = ObservationEvaluator::sample(
            z.clone(),
            FamilySpec::Sos {
                lags: 2,
                symmetrize: true,
            },
        )
        .unwrap();
        let phi = ev.evaluate_phi(&Mat::identity(3)).unwrap();
        let mut expect = vectorize(&crate::stats::lagged_cov(&z, 1, true).unwrap());
        expect.extend(vectorize(&crate::stats::lagged_cov(&z, 2, true).unwrap()));
        assert_eq!(phi, expect);

        let pop = pop_sos(&[0.2, 0.6, 0.9], &[1, 2]);
        let base = pop.evaluate_phi(&Mat::identity(3)).unwrap();
        for signs in [[1.0, -1.0, 1.0], [-1.0, -1.0, 1.0], [-1.0, 1.0, -1.0]] {
            let flipped = pop.evaluate_phi(&Mat::diag(&signs)).unwrap();
            assert_eq!(flipped, base);
        }

        let hos = ObservationEvaluator::sample(
            whitened(&SourceSpec::IidGg { p: 1.0 }, 1000, 4),
            FamilySpec::Hos { k: Some(6) },
        )
        .unwrap();
        assert_eq!(hos.evaluate_phi(&Mat::identity(3)).unwrap().len(), 54);
    }

    #[test]
    fn zero_lag_only_has_zero_jacobian() {
        let basis = skew_basis(3).unwrap();
        let ev = pop_sos(&[0.2, 0.6, 0.9], &[0]);
        let j = jacobian_fd(&ev, &basis, DEFAULT_FD_STEP).unwrap();
        assert!(j.frobenius_norm() < 1e-8);
        let report = probe(&ev, &basis, JacobianMode::AnalyticSos).unwrap();
        assert_eq!(report.probe, 0.0);
        assert_eq!(report.kernel_dim, 3);
    }

    #[test]
    fn single_lag_columns_orthogonal_with_commutator_norms() {
        let basis = skew_basis(3).unwrap();
        let r = [0.2, 0.6, 0.9];
        let ev = pop_sos(&r, &[1]);
        let jfd = jacobian_fd(&ev, &basis, 1e-4).unwrap();
        let jan = jacobian_sos_analytic(&[Mat::diag(&r)], &basis).unwrap();
        let rel = (&jfd - &jan).frobenius_norm() / jan.frobenius_norm().max(1.0);
        assert!(rel < 1e-6, "fd vs analytic {rel}");

        let r2 = 2f64.sqrt();
        for (k, want) in [0.4, 0.7, 0.3].iter().enumerate() {
            let col = jan.column(k);
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - r2 * want).abs() < 1e-15);
            for l in (k + 1)..3 {
                let dot: f64 = col.iter().zip(jan.column(l)).map(|(a, b)| a * b).sum();
                assert_eq!(dot, 0.0);
            }
        }
        let sv = singular_spectrum(&jan).unwrap();
        let oracle = sv_oracle_3(&jan);
        for (a, b) in sv.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((sv[2] - r2 * 0.3).abs() < 1e-12);
        assert!((sv[2] - 0.424_264).abs() < 1e-6);
    }

    #[test]
    fn analytic_identity_gives_zero_columns() {
        let basis = skew_basis(3).unwrap();
        let j = jacobian_sos_analytic(&[Mat::identity(3)], &basis).unwrap();
        assert_eq!(j, Mat::zeros(9, 3));
        assert!(jacobian_sos_analytic(&[Mat::identity(2)], &basis).is_err());
    }

    #[test]
    fn two_lags_strictly_improve_on_one() {
        let basis = skew_basis(3).unwrap();
        let a = [0.2, 0.6, 0.9];
        let one = jacobian_sos_analytic(&[Mat::diag(&a)], &basis).unwrap();
        let sq: Vec<f64> = a.iter().map(|x| x * x).collect();
        let two = jacobian_sos_analytic(&[Mat::diag(&a), Mat::diag(&sq)], &basis).unwrap();
        let s1 = sv_oracle_3(&one)[2];
        let s2 = sv_oracle_3(&two)[2];
        // columns stay orthogonal with norms √2·√Σ_τ (r_a^τ − r_b^τ)²
        let pair = |x: usize, y: usize| {
            2f64.sqrt() * ((a[x] - a[y]).powi(2) + (sq[x] - sq[y]).powi(2)).sqrt()
        };
        let expect = pair(0, 1).min(pair(0, 2)).min(pair(1, 2));
        assert!((s2 - expect).abs() < 1e-12);
        assert!((singular_spectrum(&two).unwrap()[2] - expect).abs() < 1e-12);
        assert!(s2 > s1);
    }

    #[test]
    fn analytic_mode_requires_sos() {
        let basis = skew_basis(3).unwrap();
        let ev = ObservationEvaluator::population_hos(
            CumulantTensor::from_independent(&[1.0, 1.0, 1.0]),
            None,
        )
        .unwrap();
        assert!(matches!(
            probe(&ev, &basis, JacobianMode::AnalyticSos),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn gaussian_population_hos_is_the_zero_map() {
        let basis = skew_basis(3).unwrap();
        let ev =
            ObservationEvaluator::population_hos(CumulantTensor::from_independent(&[0.0; 3]), None)
                .unwrap();
        let j = jacobian_fd(&ev, &basis, DEFAULT_FD_STEP).unwrap();
        assert_eq!(j.frobenius_norm(), 0.0);
        let r = probe(&ev, &basis, JacobianMode::default()).unwrap();
        assert_eq!(r.kernel_dim, 3);
    }

    #[test]
    fn equal_kurtosis_population_hos_is_identifiable() {
        // oracle: brute-force central difference written out directly on
        // the rotated diagonal tensor Σ_i κ (qᵢᵀ M qᵢ) qᵢ qᵢᵀ, qᵢ = row i of Q
        let kappa = 3.0;
        let basis = skew_basis(3).unwrap();
        let ev = ObservationEvaluator::population_hos(
            CumulantTensor::from_independent(&[kappa; 3]),
            None,
        )
        .unwrap();
        let report = probe(&ev, &basis, JacobianMode::default()).unwrap();
        assert!(report.probe > 0.1, "probe {}", report.probe);
        assert_eq!(report.kernel_dim, 0);

        let all = crate::stats::symmetric_basis(3);
        let order = ev.reference_set().unwrap();
        let sym: Vec<&Mat> = order
            .tags()
            .iter()
            .map(|t| &all.iter().find(|(u, _)| u == t).unwrap().1)
            .collect();
        let phi = |q: &Mat| -> Vec<f64> {
            let mut out = Vec::new();
            for m in &sym {
                let mut acc = Mat::zeros(3, 3);
                for i in 0..3 {
                    let qi = q.row(i);
                    let w: f64 = (0..3)
                        .flat_map(|a| (0..3).map(move |b| (a, b)))
                        .map(|(a, b)| qi[a] * m.get(a, b) * qi[b])
                        .sum();
                    acc = &acc + &Mat::from_fn(3, 3, |k, l| kappa * w * qi[k] * qi[l]);
                }
                out.extend(vectorize(&acc));
            }
            out
        };
        let h = 1e-5;
        let cols: Vec<Vec<f64>> = basis
            .generators()
            .iter()
            .map(|g| {
                let p = phi(&expm_skew(&g.scale(h)).unwrap());
                let m = phi(&expm_skew(&g.scale(-h)).unwrap());
                p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let oracle = Mat::from_columns(&cols).unwrap();
        let j = jacobian_fd(&ev, &basis, DEFAULT_FD_STEP).unwrap();
        assert!((&j - &oracle).frobenius_norm() < 1e-6 * oracle.frobenius_norm());
    }

    #[test]
    fn population_hos_matches_sample_hos_at_large_t() {
        let basis = skew_basis(3).unwrap();
        let z = whitened(&SourceSpec::IidGg { p: 1.0 }, 200_000, 5);
        let sample = ObservationEvaluator::sample(z, FamilySpec::Hos { k: None }).unwrap();
        let s = probe(&sample, &basis, JacobianMode::default())
            .unwrap()
            .probe;
        let pop =
            ObservationEvaluator::population_hos(CumulantTensor::from_independent(&[3.0; 3]), None)
                .unwrap();
        let p = probe(&pop, &basis, JacobianMode::default()).unwrap().probe;
        assert!((s - p).abs() < 0.25 * p, "sample {s} population {p}");
    }

    #[test]
    fn sample_sos_fd_matches_analytic() {
        let basis = skew_basis(3).unwrap();
        let z = whitened(
            &SourceSpec::Ar1Gaussian {
                coeffs: vec![0.2, 0.6, 0.9],
            },
            20_000,
            6,
        );
        let ev = ObservationEvaluator::sample(
            z,
            FamilySpec::Sos {
                lags: 3,
                symmetrize: true,
            },
        )
        .unwrap();
        let jfd = jacobian(&ev, &basis, JacobianMode::default()).unwrap();
        let jan = jacobian(&ev, &basis, JacobianMode::AnalyticSos).unwrap();
        assert!((&jfd - &jan).frobenius_norm() <= 1e-6 * jan.frobenius_norm().max(1.0));
    }

    #[test]
    fn report_invariants_and_kv_round_trip() {
        let basis = skew_basis(3).unwrap();
        let r = probe(
            &pop_sos(&[0.2, 0.6, 0.9], &[1]),
            &basis,
            JacobianMode::AnalyticSos,
        )
        .unwrap();
        assert_eq!(r.rows, 9);
        assert_eq!(r.cols, 3);
        assert_eq!(r.probe, *r.singular_values.last().unwrap());
        assert_eq!(r.kernel_dim + r.rank(), 3);
        assert_eq!(r.kernel_dim, 0);
        let text = r.to_kv();
        assert!(text.starts_with("rows=9\ncols=3\nprobe="));
        assert_eq!(JacobianReport::from_kv(&text).unwrap(), r);
        assert!(JacobianReport::from_kv("rows=1\nbogus=2\n").is_err());
    }

    #[test]
    fn wide_jacobian_reports_structural_kernel() {
        let j = Mat::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        let r = JacobianReport::from_jacobian(&j, DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(r.singular_values.len(), 3);
        assert_eq!(r.kernel_dim, 2);
        assert_eq!(r.probe, 0.0);
        assert_eq!(kernel_basis(&j, DEFAULT_KERNEL_TOL).unwrap().len(), 2);
    }

    #[test]
    fn kernel_intersection_examples() {
        let basis = skew_basis(3).unwrap();
        let j = jacobian_sos_analytic(&[Mat::diag(&[0.2, 0.6, 0.9])], &basis).unwrap();
        let single = JacobianReport::from_jacobian(&j, DEFAULT_KERNEL_TOL).unwrap();
        let (_, dup) =
            kernel_intersection_check(&[j.clone(), j.clone()], DEFAULT_KERNEL_TOL).unwrap();
        for (a, b) in dup.singular_values.iter().zip(&single.singular_values) {
            assert!((a - 2f64.sqrt() * b).abs() < 1e-14);
        }
        assert_eq!(dup.kernel_dim, single.kernel_dim);

        let (_, padded) =
            kernel_intersection_check(&[j.clone(), Mat::zeros(5, 3)], DEFAULT_KERNEL_TOL).unwrap();
        for (a, b) in padded.singular_values.iter().zip(&single.singular_values) {
            assert!((a - b).abs() < 1e-14);
        }

        // kernel span{Ω_(2,3)} (degenerate r_2 = r_3) and span{Ω_(1,2)}
        // (degenerate r_1 = r_2)
        let j1 = jacobian_sos_analytic(&[Mat::diag(&[0.2, 0.7, 0.7])], &basis).unwrap();
        let j2 = jacobian_sos_analytic(&[Mat::diag(&[0.5, 0.5, 0.9])], &basis).unwrap();
        let k1 = kernel_basis(&j1, DEFAULT_KERNEL_TOL).unwrap();
        let k2 = kernel_basis(&j2, DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(k1.len(), 1);
        assert_eq!(k2.len(), 1);
        assert!((k1[0][2].abs() - 1.0).abs() < 1e-12);
        assert!((k2[0][0].abs() - 1.0).abs() < 1e-12);
        let (stack, report) = kernel_intersection_check(&[j1, j2], DEFAULT_KERNEL_TOL).unwrap();
        assert_eq!(report.kernel_dim, 0);
        let oracle = sv_oracle_3(&stack);
        assert!((oracle[2] - report.probe).abs() < 1e-12);

        assert!(kernel_intersection_check(&[Mat::zeros(2, 3), Mat::zeros(2, 2)], 1e-8).is_err());
    }

    #[test]
    fn kernel_directions_are_first_order_invariant() {
        // rotations along kernel directions leave φ unchanged to first order
        let basis = skew_basis(3).unwrap();
        let tol = DEFAULT_KERNEL_TOL;
        for r in [[0.5, 0.5, 0.9], [0.3, 0.3, 0.3], [0.2, 0.7, 0.7]] {
            let ev = pop_sos(&r, &[1]);
            let j = jacobian(&ev, &basis, JacobianMode::AnalyticSos).unwrap();
            let base = ev.evaluate_phi(&Mat::identity(3)).unwrap();
            for v in kernel_basis(&j, tol).unwrap() {
                let eps = 1e-3;
                let q = expm_skew(&basis.combine(&v).scale(eps)).unwrap();
                let moved = ev.evaluate_phi(&q).unwrap();
                let diff = moved
                    .iter()
                    .zip(&base)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    diff <= 10.0 * tol * eps + 10.0 * eps * eps,
                    "r {r:?} diff {diff}"
                );
            }
        }
    }

    #[test]
    fn population_curve_matches_formula() {
        let curve = population_sos_curve(&[0.2, 0.6, 0.9], 4).unwrap();
        assert!((curve[0] - 2f64.sqrt() * 0.3).abs() < 1e-12);
        assert!(curve.windows(2).all(|w| w[1] > w[0]));
    }
}
