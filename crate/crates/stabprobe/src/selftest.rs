//! Exact-oracle checks that need no sampling.

use std::fmt;

use stabprobe_core::experiment::{first_crossing, iso_band};
use stabprobe_core::linalg::{expm_skew, skew_basis};
use stabprobe_core::probe::{
    ar1_population_set, jacobian_fd, jacobian_sos_analytic, kernel_intersection_check,
    population_sos_curve, probe, DEFAULT_FD_STEP, DEFAULT_KERNEL_TOL,
};
use stabprobe_core::separation::{
    amari_index, joint_diagonalize, DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS,
};
use stabprobe_core::signal::{gg_excess_kurtosis, random_orthogonal};
use stabprobe_core::stats::CumulantTensor;
use stabprobe_core::{JacobianMode, Mat, ObservationEvaluator, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// `|got − expected| ≤ tol`
    Abs,
    /// `|got − expected| ≤ tol·|expected|`
    Rel,
    /// `got ≥ expected − tol`
    AtLeast,
    /// `got ≤ expected + tol`
    AtMost,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub expected: f64,
    pub got: f64,
    pub tol: f64,
    pub bound: Bound,
}

impl Check {
    pub fn passed(&self) -> bool {
        let (g, e, t) = (self.got, self.expected, self.tol);
        g.is_finite()
            && match self.bound {
                Bound::Abs => (g - e).abs() <= t,
                Bound::Rel => (g - e).abs() <= t * e.abs(),
                Bound::AtLeast => g >= e - t,
                Bound::AtMost => g <= e + t,
            }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.bound {
            Bound::Abs => "abs",
            Bound::Rel => "rel",
            Bound::AtLeast => ">=",
            Bound::AtMost => "<=",
        };
        write!(
            f,
            "{} {:<40} expected={:.12e} got={:.12e} tol={:.1e} ({rel})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.expected,
            self.got,
            self.tol
        )
    }
}

fn check(name: &'static str, expected: f64, got: f64, tol: f64, bound: Bound) -> Check {
    Check {
        name,
        expected,
        got,
        tol,
        bound,
    }
}

fn failed(name: &'static str) -> Check {
    check(name, 0.0, f64::NAN, 0.0, Bound::Abs)
}

const AR: [f64; 3] = [0.2, 0.6, 0.9];

pub fn run() -> Vec<Check> {
    type Group = fn() -> stabprobe_core::Result<Vec<Check>>;
    let groups: [(&'static str, Group); 7] = [
        ("sos population probe", sos_population),
        ("fd/analytic agreement", fd_agreement),
        ("stacking", stacking),
        ("hos population probe", hos_population),
        ("orthogonal group", orthogonal_group),
        ("separation", separation),
        ("frontier arithmetic", frontier),
    ];
    groups
        .into_iter()
        .flat_map(|(name, g)| g().unwrap_or_else(|_| vec![failed(name)]))
        .collect()
}

fn sos_population() -> stabprobe_core::Result<Vec<Check>> {
    let basis = skew_basis(3)?;
    let one = probe(
        &ObservationEvaluator::population_sos(ar1_population_set(&AR, &[1])?)?,
        &basis,
        JacobianMode::AnalyticSos,
    )?;
    let zero = probe(
        &ObservationEvaluator::population_sos(ar1_population_set(&AR, &[0])?)?,
        &basis,
        JacobianMode::AnalyticSos,
    )?;
    let curve = population_sos_curve(&AR, 4)?;
    let min_gain = curve
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        check(
            "single lag probe = sqrt(2)*0.3",
            2f64.sqrt() * 0.3,
            one.probe,
            1e-9,
            Bound::Abs,
        ),
        check(
            "single lag kernel_dim",
            0.0,
            one.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
        check("zero lag probe", 0.0, zero.probe, 1e-10, Bound::Abs),
        check(
            "zero lag kernel_dim = dim so(3)",
            3.0,
            zero.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
        check(
            "lag curve strictly increasing L=1..4",
            1e-10,
            min_gain,
            0.0,
            Bound::AtLeast,
        ),
    ])
}

fn fd_agreement() -> stabprobe_core::Result<Vec<Check>> {
    let basis = skew_basis(3)?;
    let mut worst: f64 = 0.0;
    for l in 1..=3 {
        let lags: Vec<usize> = (1..=l).collect();
        let set = ar1_population_set(&AR, &lags)?;
        let analytic = jacobian_sos_analytic(set.matrices(), &basis)?;
        let fd = jacobian_fd(
            &ObservationEvaluator::population_sos(set)?,
            &basis,
            DEFAULT_FD_STEP,
        )?;
        worst = worst.max((&fd - &analytic).frobenius_norm() / analytic.frobenius_norm());
    }
    Ok(vec![check(
        "fd vs analytic, L=1..3 (relative)",
        0.0,
        worst,
        1e-6,
        Bound::AtMost,
    )])
}

fn stacking() -> stabprobe_core::Result<Vec<Check>> {
    let basis = skew_basis(3)?;
    let j = |coeffs: &[f64], lags: &[usize]| -> stabprobe_core::Result<Mat> {
        jacobian_sos_analytic(ar1_population_set(coeffs, lags)?.matrices(), &basis)
    };
    let (_, r1) = kernel_intersection_check(&[j(&AR, &[1])?], DEFAULT_KERNEL_TOL)?;
    let (_, r12) = kernel_intersection_check(&[j(&AR, &[1])?, j(&AR, &[2])?], DEFAULT_KERNEL_TOL)?;
    let worst_drop = r12
        .singular_values
        .iter()
        .zip(&r1.singular_values)
        .map(|(b, a)| b - a)
        .fold(f64::INFINITY, f64::min);

    // each lag alone leaves a rotation free; different pairs are tied, so
    // the stack has a trivial kernel
    let tied_01 = [0.5, 0.5, 0.9];
    let tied_12 = [0.3, 0.7, 0.7];
    let (_, a) = kernel_intersection_check(&[j(&tied_01, &[1])?], DEFAULT_KERNEL_TOL)?;
    let (_, ab) = kernel_intersection_check(
        &[j(&tied_01, &[1])?, j(&tied_12, &[1])?],
        DEFAULT_KERNEL_TOL,
    )?;
    let (_, whitening) =
        kernel_intersection_check(&[j(&AR, &[0])?, j(&AR, &[1])?], DEFAULT_KERNEL_TOL)?;
    Ok(vec![
        check(
            "nested sets: singular values grow",
            0.0,
            worst_drop,
            1e-10,
            Bound::AtLeast,
        ),
        check(
            "nested sets: kernel_dim shrinks",
            r1.kernel_dim as f64,
            r12.kernel_dim as f64,
            0.0,
            Bound::AtMost,
        ),
        check(
            "tied pair leaves one free direction",
            1.0,
            a.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
        check(
            "stack kernel is the intersection",
            0.0,
            ab.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
        check(
            "whitening + lag 1 kernel",
            0.0,
            whitening.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
    ])
}

fn hos_population() -> stabprobe_core::Result<Vec<Check>> {
    let basis = skew_basis(3)?;
    let hos = |p: f64| -> stabprobe_core::Result<_> {
        let kappa = [gg_excess_kurtosis(p); 3];
        probe(
            &ObservationEvaluator::population_hos(CumulantTensor::from_independent(&kappa), None)?,
            &basis,
            JacobianMode::default(),
        )
    };
    let gauss = hos(2.0)?;
    let laplace = hos(1.0)?;
    Ok(vec![
        check(
            "laplace excess kurtosis",
            3.0,
            gg_excess_kurtosis(1.0),
            1e-12,
            Bound::Abs,
        ),
        check(
            "gaussian excess kurtosis",
            0.0,
            gg_excess_kurtosis(2.0),
            1e-12,
            Bound::Abs,
        ),
        check("gaussian hos probe", 0.0, gauss.probe, 1e-8, Bound::Abs),
        check(
            "gaussian hos kernel_dim",
            3.0,
            gauss.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
        check(
            "laplace hos kernel_dim",
            0.0,
            laplace.kernel_dim as f64,
            0.0,
            Bound::Abs,
        ),
    ])
}

fn orthogonal_group() -> stabprobe_core::Result<Vec<Check>> {
    let basis = skew_basis(3)?;
    let omega = basis.combine(&[0.3, -1.1, 0.7]);
    let q = expm_skew(&omega)?;
    let theta = (0.3f64 * 0.3 + 1.1 * 1.1 + 0.7 * 0.7).sqrt();
    let o2 = &omega * &omega;
    let rodrigues = &(&Mat::identity(3) + &omega.scale(theta.sin() / theta))
        + &o2.scale((1.0 - theta.cos()) / (theta * theta));
    Ok(vec![
        check(
            "expm orthogonality defect",
            0.0,
            q.orthogonality_defect(),
            1e-12,
            Bound::AtMost,
        ),
        check("expm determinant", 1.0, q.determinant()?, 1e-12, Bound::Abs),
        check(
            "expm vs Rodrigues",
            0.0,
            (&q - &rodrigues).frobenius_norm(),
            1e-12,
            Bound::AtMost,
        ),
    ])
}

fn separation() -> stabprobe_core::Result<Vec<Check>> {
    let q = random_orthogonal(3, RngSeed::new(7, 0))?;
    let set: Vec<Mat> = [[1.0, 2.0, 3.0], [0.5, -1.0, 0.2]]
        .iter()
        .map(|d| &(&q.transpose() * &Mat::diag(d)) * &q)
        .collect();
    let jd = joint_diagonalize(&set, DEFAULT_ANGLE_TOL, DEFAULT_MAX_SWEEPS)?;
    let perm = Mat::from_rows(&[[0.0, 2.0, 0.0], [0.0, 0.0, -1.0], [0.5, 0.0, 0.0]])?;
    Ok(vec![
        check(
            "amari(identity)",
            0.0,
            amari_index(&Mat::identity(3))?,
            0.0,
            Bound::Abs,
        ),
        check(
            "amari(scaled permutation)",
            0.0,
            amari_index(&perm)?,
            0.0,
            Bound::Abs,
        ),
        check(
            "amari(all ones)",
            1.0,
            amari_index(&Mat::from_fn(3, 3, |_, _| 1.0))?,
            0.0,
            Bound::Abs,
        ),
        check(
            "joint diagonalization recovers rotation",
            0.0,
            amari_index(&(&jd.v.transpose() * &q.transpose()))?,
            1e-8,
            Bound::AtMost,
        ),
    ])
}

fn frontier() -> stabprobe_core::Result<Vec<Check>> {
    let crossing = first_crossing(&[1, 2, 3], &[0.1, 0.4, 0.6], 0.5);
    let never = first_crossing(&[1, 2, 3], &[0.1, 0.2, 0.3], 0.5);
    let band = iso_band(&[0.44, 0.52, 0.61], 0.5, 0.05);
    Ok(vec![
        check(
            "first crossing",
            3.0,
            crossing.map_or(f64::NAN, |k| k as f64),
            0.0,
            Bound::Abs,
        ),
        check(
            "absent crossing",
            1.0,
            f64::from(u8::from(never.is_none())),
            0.0,
            Bound::Abs,
        ),
        check(
            "iso-band mask",
            1.0,
            f64::from(u8::from(band == [false, true, false])),
            0.0,
            Bound::Abs,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let checks = run();
        assert!(checks.len() >= 20);
        for c in &checks {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn failures_are_reported() {
        assert!(!check("x", 1.0, 1.5, 0.1, Bound::Abs).passed());
        assert!(!failed("x").passed());
        assert!(check("x", 1.0, 1.05, 0.1, Bound::Rel).passed());
        assert!(format!("{}", check("x", 0.0, 1.0, 0.0, Bound::AtMost)).starts_with("FAIL"));
    }
}
