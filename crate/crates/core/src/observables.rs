//! State functionals: excitation number, purity, entropies and the Wigner
//! function.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::DensityMatrix;

/// Eigenvalues below this contribute nothing to the von Neumann entropy.
const EIGEN_FLOOR: f64 = 1e-14;

/// Observables sampled at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub excitation: f64,
    pub purity: f64,
    pub linear_entropy: f64,
    pub von_neumann: f64,
}

impl ObservableRecord {
    pub fn from_state(t: f64, rho: &DensityMatrix) -> Self {
        let p = purity(rho);
        ObservableRecord {
            t,
            excitation: excitation(rho),
            purity: p,
            linear_entropy: 1.0 - p,
            von_neumann: von_neumann_entropy(rho),
        }
    }
}

/// Statistics of a time series over `t >= t_from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub t_from: f64,
    pub samples: usize,
    pub mean_excitation: f64,
    pub max_excitation: f64,
    pub mean_purity: f64,
    pub max_purity: f64,
    pub min_purity: f64,
}

/// `None` when no record falls in the window.
pub fn summarize(records: &[ObservableRecord], t_from: f64) -> Option<SeriesSummary> {
    let window: Vec<_> = records.iter().filter(|r| r.t >= t_from - 1e-9).collect();
    if window.is_empty() {
        return None;
    }
    let n = window.len() as f64;
    let fold = |f: fn(&ObservableRecord) -> f64, init: f64, op: fn(f64, f64) -> f64| {
        window.iter().map(|r| f(r)).fold(init, op)
    };
    Some(SeriesSummary {
        t_from,
        samples: window.len(),
        mean_excitation: window.iter().map(|r| r.excitation).sum::<f64>() / n,
        max_excitation: fold(|r| r.excitation, f64::NEG_INFINITY, f64::max),
        mean_purity: window.iter().map(|r| r.purity).sum::<f64>() / n,
        max_purity: fold(|r| r.purity, f64::NEG_INFINITY, f64::max),
        min_purity: fold(|r| r.purity, f64::INFINITY, f64::min),
    })
}

/// `Tr(rho^2)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    let d = rho.dim();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..d {
        for i in 0..d {
            acc += m[(i, j)] * m[(j, i)];
        }
    }
    debug_assert!(acc.im.abs() < 1e-12, "Tr(rho^2) has imaginary part {}", acc.im);
    acc.re
}

/// `sum_i lambda_i^2` from the spectrum; an independent route to the purity.
pub fn purity_from_spectrum(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues().iter().map(|l| l * l).sum()
}

/// `Tr(rho a^dag a)`.
pub fn excitation(rho: &DensityMatrix) -> f64 {
    rho.matrix().diagonal().iter().enumerate().map(|(n, z)| n as f64 * z.re).sum()
}

/// `-sum lambda ln lambda` over the spectrum of `rho`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .into_iter()
        .filter(|&l| l >= EIGEN_FLOOR)
        .map(|l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
}

/// `(1 - Tr rho^2, -Tr rho ln rho)`.
pub fn entropies(rho: &DensityMatrix) -> (f64, f64) {
    (1.0 - purity(rho), von_neumann_entropy(rho))
}

/// Bose-Einstein populations `nbar^n / (nbar + 1)^(n + 1)` for `n < levels`.
pub fn thermal_populations(nbar: f64, levels: usize) -> Vec<f64> {
    let ratio = nbar / (nbar + 1.0);
    let mut p = 1.0 / (nbar + 1.0);
    let mut out = Vec::with_capacity(levels);
    for _ in 0..levels {
        out.push(p);
        p *= ratio;
    }
    out
}

/// Purity of a thermal state: `1 / (2 nbar + 1)`.
pub fn thermal_purity_oracle(nbar: f64) -> f64 {
    1.0 / (2.0 * nbar + 1.0)
}

/// Thermal purity as the term-by-term sum of squared populations, run
/// until the terms fall below `tol`.
pub fn thermal_purity_series(nbar: f64, tol: f64) -> f64 {
    let ratio = nbar / (nbar + 1.0);
    let mut p = 1.0 / (nbar + 1.0);
    let mut sum = 0.0;
    loop {
        let term = p * p;
        sum += term;
        // remaining tail is term * r^2 / (1 - r^2)
        if ratio == 0.0 || term * ratio * ratio / (1.0 - ratio * ratio) < tol {
            break;
        }
        p *= ratio;
    }
    sum
}

/// Phase-space window for a Wigner evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        GridSpec { x_min: -half_width, x_max: half_width, y_min: -half_width, y_max: half_width, nx: n, ny: n }
    }

    /// Square window of half-width `2 sqrt(n_max) + 3`.
    pub fn for_excitation(max_excitation: f64, n: usize) -> Self {
        Self::square(2.0 * max_excitation.max(0.0).sqrt() + 3.0, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidParameter("Wigner grid needs at least 2x2 points".into()));
        }
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(Error::InvalidParameter("Wigner grid bounds are empty".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }
}

/// Wigner function sampled on a grid. `values[j * nx + i]` holds `W(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    /// Riemann sum of `W dx dy`.
    pub fn normalization(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.dx() * self.spec.dy()
    }

    pub fn normalization_ok(&self) -> bool {
        (0.97..=1.03).contains(&self.normalization())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `W(beta)` with `beta = x + i y`, normalized so that `int W dx dy = 1`
/// (vacuum: `(2/pi) exp(-2 |beta|^2)`).
///
/// Equal to the displaced-parity expectation `(2/pi) Tr[rho D(beta) P D(beta)^dag]`,
/// summed through the stable Laguerre recursion for the Wigner functions of
/// the Fock outer products `|m><n|`. The recursion uses the exact
/// displacement, not its truncated-basis approximation.
pub fn wigner_point(rho: &DensityMatrix, x: f64, y: f64) -> f64 {
    let mut buf = vec![Complex64::new(0.0, 0.0); rho.dim()];
    wigner_point_with(rho, Complex64::new(x, y), &mut buf)
}

fn wigner_point_with(rho: &DensityMatrix, beta: Complex64, wl: &mut [Complex64]) -> f64 {
    let m = rho.matrix();
    let d = rho.dim();
    let two_a = 2.0 * beta;
    let two_ac = two_a.conj();
    let sq: Vec<f64> = (0..d).map(|n| (n as f64).sqrt()).collect();

    wl[0] = Complex64::new((-2.0 * beta.norm_sqr()).exp() / PI, 0.0);
    let mut w = m[(0, 0)].re * wl[0].re;
    for n in 1..d {
        wl[n] = two_a * wl[n - 1] / sq[n];
        w += 2.0 * (m[(0, n)] * wl[n]).re;
    }
    for k in 1..d {
        let mut temp = wl[k];
        wl[k] = (two_ac * temp - sq[k] * wl[k - 1]) / sq[k];
        w += (m[(k, k)] * wl[k]).re;
        for n in k + 1..d {
            let next = (two_a * wl[n - 1] - sq[k] * temp) / sq[n];
            temp = wl[n];
            wl[n] = next;
            w += 2.0 * (m[(k, n)] * wl[n]).re;
        }
    }
    2.0 * w
}

/// Evaluates the Wigner function over `spec`; grid rows run in parallel.
pub fn wigner(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let nx = spec.nx;
    let d = rho.dim();
    let mut values = vec![0.0; nx * spec.ny];
    values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        let y = spec.y(j);
        for (i, cell) in row.iter_mut().enumerate() {
            *cell = wigner_point_with(rho, Complex64::new(spec.x(i), y), &mut buf);
        }
    });
    let grid = WignerGrid { spec: *spec, values };
    if !grid.normalization_ok() {
        log::warn!(
            "Wigner grid too coarse or too small: normalization {:.4} outside [0.97, 1.03]",
            grid.normalization()
        );
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{annihilation, CMatrix, FockBasis};
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;

    fn basis(d: usize) -> FockBasis {
        FockBasis::new(d).unwrap()
    }

    fn coherent(d: usize, alpha: Complex64) -> Vec<Complex64> {
        let mut amp = vec![Complex64::new(0.0, 0.0); d];
        let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for (n, a) in amp.iter_mut().enumerate() {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            *a = c;
        }
        let norm: f64 = amp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amp.iter().map(|z| z / norm).collect()
    }

    /// `(2/pi) sum_n (-1)^n <n| D(-beta) rho D(beta) |n>` with the displacement
    /// from the matrix exponential on an enlarged basis.
    fn wigner_displaced_parity(rho: &DensityMatrix, beta: Complex64, big: usize) -> f64 {
        let b = basis(big);
        let rho = rho.embed(b).unwrap();
        let a = annihilation(b).into_matrix();
        // beta a^dag - beta^* a is anti-Hermitian; exponentiate via i times it
        let gen = a.adjoint().map(|z| z * beta) - a.map(|z| z * beta.conj());
        let herm = gen.map(|z| z * Complex64::new(0.0, 1.0));
        let eig = SymmetricEigen::new(herm);
        let phases = CMatrix::from_diagonal(
            &eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l)),
        );
        let disp = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let shifted = disp.adjoint() * rho.matrix() * &disp;
        let mut s = 0.0;
        for n in 0..big {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * shifted[(n, n)].re;
        }
        2.0 / PI * s
    }

    #[test]
    fn purity_examples() {
        let b = basis(4);
        assert_abs_diff_eq!(purity(&DensityMatrix::maximally_mixed(b)), 0.25, epsilon = 1e-15);
        let psi = coherent(4, Complex64::new(0.3, -0.2));
        let rho = DensityMatrix::from_pure(b, &psi).unwrap();
        assert_abs_diff_eq!(purity(&rho), 1.0, epsilon = 1e-14);
        let th = DensityMatrix::thermal(basis(60), 1.0).unwrap();
        assert_abs_diff_eq!(purity(&th), 1.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn purity_two_routes_agree() {
        for (k, d) in [3usize, 8, 20].iter().enumerate() {
            let th = DensityMatrix::thermal(basis(*d), 0.4 + k as f64).unwrap();
            assert!((purity(&th) - purity_from_spectrum(&th)).abs() < 1e-10);
            let psi = coherent(*d, Complex64::new(0.9, 0.4));
            let mixed = CMatrix::from_fn(*d, *d, |i, j| {
                0.5 * psi[i] * psi[j].conj() + if i == j { Complex64::new(0.5 / *d as f64, 0.0) } else { Complex64::new(0.0, 0.0) }
            });
            let rho = DensityMatrix::from_matrix(basis(*d), mixed).unwrap();
            assert!((purity(&rho) - purity_from_spectrum(&rho)).abs() < 1e-10);
        }
    }

    #[test]
    fn thermal_oracle() {
        assert_eq!(thermal_purity_oracle(0.0), 1.0);
        assert_abs_diff_eq!(thermal_purity_oracle(0.5), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(thermal_purity_oracle(5.0), 0.090909090909, epsilon = 1e-12);
        for nbar in [0.0, 0.5, 1.0, 5.0, 12.3] {
            assert_abs_diff_eq!(thermal_purity_series(nbar, 1e-16), thermal_purity_oracle(nbar), epsilon = 1e-12);
        }
    }

    #[test]
    fn entropy_examples() {
        let (sl, s) = entropies(&DensityMatrix::vacuum(basis(5)));
        assert_abs_diff_eq!(sl, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        let (sl, s) = entropies(&DensityMatrix::maximally_mixed(basis(2)));
        assert_abs_diff_eq!(sl, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 2f64.ln(), epsilon = 1e-12);
        let (sl, _) = entropies(&DensityMatrix::thermal(basis(60), 1.0).unwrap());
        assert_abs_diff_eq!(sl, 2.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn linear_entropy_bounded_by_von_neumann() {
        for nbar in [0.01, 0.3, 1.0, 4.0] {
            let th = DensityMatrix::thermal(basis(80), nbar).unwrap();
            let (sl, s) = entropies(&th);
            assert!(sl <= s + 1e-12, "nbar={nbar}: {sl} > {s}");
        }
    }

    #[test]
    fn excitation_examples() {
        assert_eq!(excitation(&DensityMatrix::vacuum(basis(4))), 0.0);
        assert_eq!(excitation(&DensityMatrix::fock(basis(4), 2).unwrap()), 2.0);
        let th = DensityMatrix::thermal(basis(60), 1.0).unwrap();
        assert_abs_diff_eq!(excitation(&th), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn wigner_closed_forms() {
        let vac = DensityMatrix::vacuum(basis(10));
        assert_abs_diff_eq!(wigner_point(&vac, 0.0, 0.0), 2.0 / PI, epsilon = 1e-12);
        assert_abs_diff_eq!(
            wigner_point(&vac, 0.3, -0.4),
            2.0 / PI * (-2.0 * 0.25f64).exp(),
            epsilon = 1e-12
        );
        let one = DensityMatrix::fock(basis(10), 1).unwrap();
        assert_abs_diff_eq!(wigner_point(&one, 0.0, 0.0), -2.0 / PI, epsilon = 1e-12);
        // (2/pi) sum (-1)^n p_n for nbar = 1 is (2/pi)/3
        let th = DensityMatrix::thermal(basis(60), 1.0).unwrap();
        assert_abs_diff_eq!(wigner_point(&th, 0.0, 0.0), 2.0 / PI / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn coherent_state_peaks_at_its_amplitude() {
        let alpha = Complex64::new(1.2, -0.7);
        let psi = coherent(30, alpha);
        let rho = DensityMatrix::from_pure(basis(30), &psi).unwrap();
        assert_abs_diff_eq!(wigner_point(&rho, alpha.re, alpha.im), 2.0 / PI, epsilon = 1e-9);
        assert_abs_diff_eq!(
            wigner_point(&rho, alpha.re + 0.5, alpha.im),
            2.0 / PI * (-0.5f64).exp(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn recursion_matches_displaced_parity() {
        let d = 8;
        let psi = coherent(d, Complex64::new(0.4, 0.9));
        let mixed = CMatrix::from_fn(d, d, |i, j| {
            let mut z = 0.6 * psi[i] * psi[j].conj();
            if i == j {
                z += Complex64::new(0.4 * 0.5f64.powi(i as i32 + 1) / (1.0 - 0.5f64.powi(d as i32)), 0.0);
            }
            z
        });
        let rho = DensityMatrix::from_matrix(basis(d), mixed).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.5, -0.3), (-1.1, 0.8), (1.5, 1.5)] {
            let fast = wigner_point(&rho, x, y);
            let slow = wigner_displaced_parity(&rho, Complex64::new(x, y), 90);
            assert!((fast - slow).abs() < 1e-9, "({x},{y}): {fast} vs {slow}");
        }
    }

    #[test]
    fn wigner_grid_normalized_and_bounded() {
        let psi = coherent(40, Complex64::new(1.5, 0.5));
        let mut m = CMatrix::from_fn(40, 40, |i, j| 0.7 * psi[i] * psi[j].conj());
        m[(3, 3)] += Complex64::new(0.3, 0.0);
        let rho = DensityMatrix::from_matrix(basis(40), m).unwrap();
        let grid = wigner(&rho, &GridSpec::for_excitation(3.0, 81)).unwrap();
        assert!((grid.normalization() - 1.0).abs() < 0.03, "{}", grid.normalization());
        assert!(grid.max() <= 2.0 / PI + 1e-9);
        assert!(grid.min() >= -2.0 / PI - 1e-9);
        assert!(grid.min() < 0.0);
    }

    #[test]
    fn summary_window() {
        let rec = |t: f64, n: f64, p: f64| ObservableRecord {
            t,
            excitation: n,
            purity: p,
            linear_entropy: 1.0 - p,
            von_neumann: 0.0,
        };
        let series = [rec(0.0, 9.0, 0.1), rec(1.0, 1.0, 0.5), rec(2.0, 3.0, 0.7)];
        let s = summarize(&series, 1.0).unwrap();
        assert_eq!(s.samples, 2);
        assert_eq!((s.mean_excitation, s.max_excitation), (2.0, 3.0));
        assert_abs_diff_eq!(s.mean_purity, 0.6, epsilon = 1e-15);
        assert_eq!((s.max_purity, s.min_purity), (0.7, 0.5));
        assert!(summarize(&series, 3.0).is_none());
    }
}
