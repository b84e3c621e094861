//! Truncated Fock-basis representation of the oscillator mode.
//!
//! Operators are stored as dense complex matrices. Rates are expressed in
//! units of the damping rate, so the damping rate itself never appears.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveSpec;
use crate::error::{Error, Result};
use crate::lindblad::DensityMatrix;

pub type CMatrix = DMatrix<Complex64>;

pub const DEFAULT_DIM: usize = 60;
/// Levels inspected by the production truncation check.
pub const DEFAULT_TAIL_LEVELS: usize = 5;
/// Largest population allowed in the inspected tail.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Fock levels `|0>..|dim-1>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FockBasis {
    dim: usize,
}

impl FockBasis {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("Fock dimension must be >= 2, got {dim}")));
        }
        Ok(FockBasis { dim })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sqrt(n)` for `n = 0..dim`.
    pub fn sqrt_table(&self) -> Vec<f64> {
        (0..self.dim).map(|n| (n as f64).sqrt()).collect()
    }
}

/// Dense operator on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    basis: FockBasis,
    elements: CMatrix,
}

impl FockOperator {
    pub fn from_matrix(basis: FockBasis, elements: CMatrix) -> Result<Self> {
        if elements.nrows() != basis.dim() || elements.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: elements.nrows().max(elements.ncols()),
            });
        }
        Ok(FockOperator { basis, elements })
    }

    pub fn zeros(basis: FockBasis) -> Self {
        FockOperator { basis, elements: CMatrix::zeros(basis.dim(), basis.dim()) }
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elements
    }

    pub fn into_matrix(self) -> CMatrix {
        self.elements
    }

    pub fn adjoint(&self) -> Self {
        FockOperator { basis: self.basis, elements: self.elements.adjoint() }
    }

    pub fn scale(&self, factor: f64) -> Self {
        FockOperator { basis: self.basis, elements: self.elements.map(|z| z * factor) }
    }

    pub fn compose(&self, rhs: &FockOperator) -> Self {
        FockOperator { basis: self.basis, elements: &self.elements * &rhs.elements }
    }

    /// Largest element of `|A - A^dagger|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.basis.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.elements[(i, j)] - self.elements[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

/// Physical parameters of the driven oscillator, in units of the damping rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Detuning.
    pub delta: f64,
    /// Kerr strength.
    pub chi: f64,
    /// Mean thermal quanta of the bath.
    #[serde(default)]
    pub nbar: f64,
    pub drive: DriveSpec,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() || !self.chi.is_finite() {
            return Err(Error::InvalidParameter("delta and chi must be finite".into()));
        }
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bath occupation must be >= 0, got {}",
                self.nbar
            )));
        }
        self.drive.validate()
    }

    /// Diagonal of the undriven Hamiltonian: `delta n + chi n^2`.
    pub fn level_energies(&self, basis: FockBasis) -> Vec<f64> {
        (0..basis.dim())
            .map(|n| {
                let n = n as f64;
                self.delta * n + self.chi * n * n
            })
            .collect()
    }
}

pub fn annihilation(basis: FockBasis) -> FockOperator {
    let d = basis.dim();
    let mut m = CMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    FockOperator { basis, elements: m }
}

pub fn creation(basis: FockBasis) -> FockOperator {
    annihilation(basis).adjoint()
}

pub fn number(basis: FockBasis) -> FockOperator {
    let d = basis.dim();
    FockOperator {
        basis,
        elements: CMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(i as f64, 0.0) } else { ZERO }),
    }
}

/// `H(t) = delta a^dag a + chi (a^dag a)^2 + f(t) a^dag + f(t)^* a`.
pub fn hamiltonian(params: &SystemParams, basis: FockBasis, t: f64) -> FockOperator {
    let d = basis.dim();
    let f = params.drive.evaluate(t);
    let energies = params.level_energies(basis);
    let mut m = CMatrix::zeros(d, d);
    for n in 0..d {
        m[(n, n)] = Complex64::new(energies[n], 0.0);
        if n + 1 < d {
            let s = ((n + 1) as f64).sqrt();
            m[(n + 1, n)] = f * s;
            m[(n, n + 1)] = f.conj() * s;
        }
    }
    FockOperator { basis, elements: m }
}

/// `(sqrt(nbar + 1) a, sqrt(nbar) a^dag)`.
pub fn lindblad_ops(params: &SystemParams, basis: FockBasis) -> (FockOperator, FockOperator) {
    let a = annihilation(basis);
    let l1 = a.scale((params.nbar + 1.0).sqrt());
    let l2 = a.adjoint().scale(params.nbar.sqrt());
    (l1, l2)
}

/// Population held by the top `tail_levels` Fock states.
pub fn tail_population(rho: &DensityMatrix, tail_levels: usize) -> f64 {
    let d = rho.dim();
    let start = d.saturating_sub(tail_levels);
    (start..d).map(|n| rho.matrix()[(n, n)].re).sum()
}

/// True iff the top `tail_levels` levels together hold less than `tol`.
pub fn truncation_adequate(rho: &DensityMatrix, tail_levels: usize, tol: f64) -> bool {
    debug_assert!(tail_levels < rho.dim());
    tail_population(rho, tail_levels) < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::DensityMatrix;
    use approx::assert_abs_diff_eq;

    fn basis(d: usize) -> FockBasis {
        FockBasis::new(d).unwrap()
    }

    fn params(delta: f64, chi: f64, amp: f64) -> SystemParams {
        SystemParams { delta, chi, nbar: 0.0, drive: DriveSpec::Constant { amp } }
    }

    #[test]
    fn basis_rejects_tiny() {
        assert!(FockBasis::new(1).is_err());
        assert!(FockBasis::new(0).is_err());
        assert!(FockBasis::new(2).is_ok());
    }

    #[test]
    fn annihilation_elements() {
        let a = annihilation(basis(2));
        assert_eq!(a.matrix()[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(a.matrix()[(0, 0)], ZERO);
        assert_eq!(a.matrix()[(1, 0)], ZERO);
        assert_eq!(a.matrix()[(1, 1)], ZERO);
        let a3 = annihilation(basis(3));
        assert_abs_diff_eq!(a3.matrix()[(1, 2)].re, 1.41421356237, epsilon = 1e-10);
    }

    #[test]
    fn number_from_composition_is_exact() {
        for d in [2, 5, 17, 60] {
            let b = basis(d);
            // sqrt(n) * sqrt(n) may differ from n in the last bit
            let n = creation(b).compose(&annihilation(b));
            let diff = n.matrix() - number(b).matrix();
            for (k, z) in diff.iter().enumerate() {
                let level = (k % d) as f64;
                assert!(z.norm() <= 2.0 * f64::EPSILON * level, "{z}");
            }
        }
    }

    #[test]
    fn commutator_truncation_artifact() {
        let d = 8;
        let b = basis(d);
        let a = annihilation(b);
        let ad = creation(b);
        let comm = a.compose(&ad).matrix() - ad.compose(&a).matrix();
        for i in 0..d {
            for j in 0..d {
                let expected = if i != j {
                    0.0
                } else if i == d - 1 {
                    -((d - 1) as f64)
                } else {
                    1.0
                };
                assert_abs_diff_eq!(comm[(i, j)].re, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(comm[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_diagonals() {
        let h = hamiltonian(&params(1.0, 0.0, 0.0), basis(5), 0.0);
        for n in 0..5 {
            assert_eq!(h.matrix()[(n, n)].re, n as f64);
        }
        let h = hamiltonian(&params(0.0, 1.0, 0.0), basis(5), 0.0);
        for n in 0..5 {
            assert_eq!(h.matrix()[(n, n)].re, (n * n) as f64);
        }
    }

    #[test]
    fn hamiltonian_hand_evaluated() {
        let h = hamiltonian(&params(-15.0, 2.0, 10.2), basis(3), 0.0);
        let m = h.matrix();
        assert_abs_diff_eq!(m[(0, 1)].re, 10.2, epsilon = 1e-14);
        assert_abs_diff_eq!(m[(1, 0)].re, 10.2, epsilon = 1e-14);
        assert_abs_diff_eq!(m[(1, 2)].re, 10.2 * 2f64.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(m[(0, 0)].re, 0.0);
        assert_abs_diff_eq!(m[(1, 1)].re, -13.0);
        assert_abs_diff_eq!(m[(2, 2)].re, -22.0);
        assert_eq!(m[(0, 2)], ZERO);
    }

    #[test]
    fn hamiltonian_matches_operator_algebra() {
        let b = basis(9);
        let p = SystemParams {
            delta: -14.25,
            chi: 0.175,
            nbar: 0.0,
            drive: DriveSpec::Bichromatic { f0: 20.4, f1: 20.4, delta_mod: 5.0 },
        };
        let t = 0.77;
        let f = p.drive.evaluate(t);
        let a = annihilation(b);
        let ad = creation(b);
        let n = number(b);
        let expected = n.matrix().map(|z| z * p.delta)
            + (n.matrix() * n.matrix()).map(|z| z * p.chi)
            + ad.matrix().map(|z| z * f)
            + a.matrix().map(|z| z * f.conj());
        let h = hamiltonian(&p, b, t);
        assert!((h.matrix() - expected).camax() < 1e-12);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let b = basis(30);
        let p = SystemParams {
            delta: -15.0,
            chi: 2.0,
            nbar: 0.0,
            drive: DriveSpec::Bichromatic { f0: 10.2, f1: 10.2, delta_mod: 5.0 },
        };
        for i in 0..50 {
            let h = hamiltonian(&p, b, i as f64 * 0.173);
            assert!(h.hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn lindblad_operators() {
        let b = basis(4);
        let mut p = params(0.0, 0.0, 0.0);
        let (l1, l2) = lindblad_ops(&p, b);
        assert_eq!(l1, annihilation(b));
        assert!(l2.matrix().camax() == 0.0);

        p.nbar = 1.0;
        let (l1, l2) = lindblad_ops(&p, b);
        assert!((l1.matrix() - annihilation(b).scale(2f64.sqrt()).matrix()).camax() < 1e-15);
        assert_eq!(l2, creation(b));

        p.nbar = 0.5;
        let (l1, _) = lindblad_ops(&p, basis(2));
        assert_abs_diff_eq!(l1.matrix()[(0, 1)].re, 1.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l1.matrix()[(1, 0)], ZERO);
    }

    #[test]
    fn adequacy_checks() {
        let vac = DensityMatrix::vacuum(basis(10));
        assert!(truncation_adequate(&vac, 2, 1e-6));

        let mixed = DensityMatrix::maximally_mixed(basis(10));
        assert!(!truncation_adequate(&mixed, 2, 0.1));
        assert_abs_diff_eq!(tail_population(&mixed, 2), 0.2, epsilon = 1e-15);

        // geometric tail: sum_{n=36}^{39} 2^-(n+1) ~ 1.4e-11
        let thermal = DensityMatrix::thermal(basis(40), 1.0).unwrap();
        assert!(truncation_adequate(&thermal, 4, 1e-6));
    }
}
