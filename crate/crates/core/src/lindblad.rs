//! Direct integration of the master equation for the oscillator's density
//! matrix.
//!
//! The generator splits into a part that is diagonal in the Fock basis
//! (level energies and the anti-commutator damping terms) and a part that
//! couples neighbouring levels (the drive and the jump terms). The coupling
//! part is applied with ladder-operator index arithmetic, so one generator
//! evaluation costs `O(dim^2)` instead of a dense matrix product.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{
    hamiltonian, lindblad_ops, tail_population, CMatrix, FockBasis, FockOperator, SystemParams,
    DEFAULT_TAIL_LEVELS, DEFAULT_TAIL_TOL,
};
use crate::observables::{self, ObservableRecord};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest step accepted without `allow_large_dt`.
pub const MAX_DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_DT: f64 = 1e-3;
/// Samples earlier than this are excluded from summary statistics.
pub const DEFAULT_TRANSIENT: f64 = 20.0;

/// Oscillator density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    basis: FockBasis,
    elements: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix after checking shape, hermiticity and trace.
    pub fn from_matrix(basis: FockBasis, elements: CMatrix) -> Result<Self> {
        if elements.nrows() != basis.dim() || elements.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: elements.nrows().max(elements.ncols()),
            });
        }
        let rho = DensityMatrix { basis, elements };
        if rho.hermiticity_defect() > 1e-10 {
            return Err(Error::InvalidParameter("density matrix is not Hermitian".into()));
        }
        if (rho.trace() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace is {}, expected 1",
                rho.trace()
            )));
        }
        Ok(rho)
    }

    /// Wraps without validation. Used for derivatives and differences.
    pub(crate) fn from_matrix_unchecked(basis: FockBasis, elements: CMatrix) -> Self {
        DensityMatrix { basis, elements }
    }

    pub fn vacuum(basis: FockBasis) -> Self {
        Self::fock(basis, 0).expect("level 0 always exists")
    }

    pub fn fock(basis: FockBasis, n: usize) -> Result<Self> {
        if n >= basis.dim() {
            return Err(Error::InvalidParameter(format!(
                "Fock level {n} outside a basis of dimension {}",
                basis.dim()
            )));
        }
        let mut m = CMatrix::zeros(basis.dim(), basis.dim());
        m[(n, n)] = Complex64::new(1.0, 0.0);
        Ok(DensityMatrix { basis, elements: m })
    }

    pub fn maximally_mixed(basis: FockBasis) -> Self {
        let d = basis.dim();
        let w = 1.0 / d as f64;
        DensityMatrix {
            basis,
            elements: CMatrix::from_diagonal_element(d, d, Complex64::new(w, 0.0)),
        }
    }

    /// Thermal state with mean occupation `nbar`, renormalized on the truncated space.
    pub fn thermal(basis: FockBasis, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::InvalidParameter(format!("nbar must be >= 0, got {nbar}")));
        }
        let pops = observables::thermal_populations(nbar, basis.dim());
        let total: f64 = pops.iter().sum();
        let d = basis.dim();
        let mut m = CMatrix::zeros(d, d);
        for (n, p) in pops.iter().enumerate() {
            m[(n, n)] = Complex64::new(p / total, 0.0);
        }
        Ok(DensityMatrix { basis, elements: m })
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn from_pure(basis: FockBasis, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: amplitudes.len() });
        }
        let d = basis.dim();
        let m = CMatrix::from_fn(d, d, |i, j| amplitudes[i] * amplitudes[j].conj());
        Self::from_matrix(basis, m)
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elements
    }

    pub fn trace(&self) -> f64 {
        self.elements.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..=j {
                worst = worst.max((self.elements[(i, j)] - self.elements[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Real eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> =
            SymmetricEigen::new(self.elements.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_finite(&self) -> bool {
        self.elements.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `Tr|self - other| / 2`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let diff = &self.elements - &other.elements;
        let ev = SymmetricEigen::new(diff).eigenvalues;
        Ok(0.5 * ev.iter().map(|x| x.abs()).sum::<f64>())
    }

    /// Embeds into a larger basis, zero-padding the new levels.
    pub fn embed(&self, basis: FockBasis) -> Result<Self> {
        if basis.dim() < self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: basis.dim() });
        }
        let mut m = CMatrix::zeros(basis.dim(), basis.dim());
        m.view_mut((0, 0), (self.dim(), self.dim())).copy_from(&self.elements);
        Ok(DensityMatrix { basis, elements: m })
    }
}

/// `|rate| * dt` above which plain RK4 is treated as unstable.
const RK4_STABILITY_LIMIT: f64 = 2.5;

/// Time stepper used by [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Plain RK4 when the step is inside its stability region, the
    /// integrating-factor scheme otherwise.
    #[default]
    Auto,
    /// Classical fourth-order Runge-Kutta on the full generator.
    Rk4,
    /// Fourth-order Runge-Kutta in the frame rotating with the level
    /// energies, which are propagated exactly (Lawson scheme). Stable for
    /// arbitrarily large level energies and trace preserving, but less
    /// accurate than plain RK4 at equal step when both are stable.
    IntegratingFactorRk4,
}

impl Integrator {
    /// Concrete scheme for a generator and step.
    pub fn resolve(self, gen: &Liouvillian, dt: f64) -> Integrator {
        match self {
            Integrator::Auto => {
                if dt * gen.stiffness_estimate() <= RK4_STABILITY_LIMIT {
                    Integrator::Rk4
                } else {
                    Integrator::IntegratingFactorRk4
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub integrator: Integrator,
    /// Lifts the `dt <= 0.01` guard.
    pub allow_large_dt: bool,
    pub tail_levels: usize,
    pub tail_tol: f64,
    /// Start of the window used for summary statistics.
    pub t_transient: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            t_end: 100.0,
            dt: DEFAULT_DT,
            record_every: 100,
            integrator: Integrator::default(),
            allow_large_dt: false,
            tail_levels: DEFAULT_TAIL_LEVELS,
            tail_tol: DEFAULT_TAIL_TOL,
            t_transient: DEFAULT_TRANSIENT,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.dt > MAX_DEFAULT_DT && !self.allow_large_dt {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds {MAX_DEFAULT_DT}; set allow_large_dt to override",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::InvalidParameter("tail_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Callback sampled alongside the built-in observables.
pub trait Observer {
    fn observe(&mut self, t: f64, rho: &DensityMatrix) -> Result<()>;
}

impl<F: FnMut(f64, &DensityMatrix) -> Result<()>> Observer for F {
    fn observe(&mut self, t: f64, rho: &DensityMatrix) -> Result<()> {
        self(t, rho)
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub records: Vec<ObservableRecord>,
    pub final_state: DensityMatrix,
    pub final_time: f64,
}

/// Precomputed master-equation generator for one parameter set and basis.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    params: SystemParams,
    basis: FockBasis,
    sqrt_n: Vec<f64>,
    /// Fock-diagonal part, column-major like the density matrix.
    diagonal: Vec<Complex64>,
}

impl Liouvillian {
    pub fn new(params: &SystemParams, basis: FockBasis) -> Self {
        let d = basis.dim();
        let energies = params.level_energies(basis);
        let up = params.nbar + 1.0;
        let down = params.nbar;
        let mut diagonal = vec![Complex64::new(0.0, 0.0); d * d];
        // a a^dag on the truncated space is diag(1, 2, ..., dim - 1, 0)
        let raised = |k: usize| if k + 1 < d { (k + 1) as f64 } else { 0.0 };
        for n in 0..d {
            for m in 0..d {
                let decay = 0.5 * up * (m + n) as f64 + 0.5 * down * (raised(m) + raised(n));
                diagonal[m + n * d] = Complex64::new(-decay, -(energies[m] - energies[n]));
            }
        }
        Liouvillian { params: *params, basis, sqrt_n: basis.sqrt_table(), diagonal }
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    /// Fastest rate in the Fock-diagonal part.
    pub fn diagonal_spectral_radius(&self) -> f64 {
        self.diagonal.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Rough bound on the generator's spectral radius: the diagonal part
    /// plus the drive coupling.
    pub fn stiffness_estimate(&self) -> f64 {
        self.diagonal_spectral_radius() + self.coupling_estimate()
    }

    /// Bound on everything but the level-energy phases: drive commutator
    /// and dissipator.
    pub fn coupling_estimate(&self) -> f64 {
        let decay = self.diagonal.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        4.0 * self.params.drive.max_amplitude() * (self.basis.dim() as f64).sqrt() + 2.0 * decay
    }

    /// Drive commutator plus jump terms, written into `out`.
    fn coupling(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.basis.dim();
        let f = self.params.drive.evaluate(t);
        let mif = -I * f;
        let mifc = -I * f.conj();
        let up = self.params.nbar + 1.0;
        let down = self.params.nbar;
        let s = &self.sqrt_n;
        for n in 0..d {
            for m in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                // -i (f a^dag + f^* a) rho
                if m > 0 {
                    acc += mif * s[m] * rho[m - 1 + n * d];
                }
                if m + 1 < d {
                    acc += mifc * s[m + 1] * rho[m + 1 + n * d];
                }
                // +i rho (f a^dag + f^* a)
                if n + 1 < d {
                    acc -= mif * s[n + 1] * rho[m + (n + 1) * d];
                }
                if n > 0 {
                    acc -= mifc * s[n] * rho[m + (n - 1) * d];
                }
                if m + 1 < d && n + 1 < d {
                    acc += up * s[m + 1] * s[n + 1] * rho[m + 1 + (n + 1) * d];
                }
                if down > 0.0 && m > 0 && n > 0 {
                    acc += down * s[m] * s[n] * rho[m - 1 + (n - 1) * d];
                }
                out[m + n * d] = acc;
            }
        }
    }

    /// Generator minus the level-energy phases.
    fn interaction(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.coupling(t, rho, out);
        for ((o, r), g) in out.iter_mut().zip(rho).zip(&self.diagonal) {
            *o += g.re * r;
        }
    }

    /// Full generator `d rho / dt`.
    pub fn apply_into(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.coupling(t, rho, out);
        for ((o, r), g) in out.iter_mut().zip(rho).zip(&self.diagonal) {
            *o += g * r;
        }
    }

    pub fn apply(&self, t: f64, rho: &DensityMatrix) -> DensityMatrix {
        let d = self.basis.dim();
        let mut out = CMatrix::zeros(d, d);
        self.apply_into(t, rho.elements.as_slice(), out.as_mut_slice());
        DensityMatrix::from_matrix_unchecked(self.basis, out)
    }
}

/// `d rho / dt` at time `t`.
pub fn liouvillian_apply(params: &SystemParams, rho: &DensityMatrix, t: f64) -> DensityMatrix {
    Liouvillian::new(params, rho.basis()).apply(t, rho)
}

/// Same generator assembled from dense operator products. Slow; kept as a
/// cross-check of the structured kernel.
pub fn liouvillian_apply_dense(params: &SystemParams, rho: &DensityMatrix, t: f64) -> DensityMatrix {
    let basis = rho.basis();
    let h = hamiltonian(params, basis, t);
    let r = rho.matrix();
    let mut out = (h.matrix() * r - r * h.matrix()).map(|z| -I * z);
    let (l1, l2) = lindblad_ops(params, basis);
    for l in [&l1, &l2] {
        out += dissipator(l, r);
    }
    DensityMatrix::from_matrix_unchecked(basis, out)
}

fn dissipator(l: &FockOperator, r: &CMatrix) -> CMatrix {
    let lm = l.matrix();
    let ld = lm.adjoint();
    let ldl = &ld * lm;
    lm * r * &ld - (&ldl * r + r * &ldl).map(|z| 0.5 * z)
}

struct Stepper {
    gen: Liouvillian,
    integrator: Integrator,
    dt: f64,
    full: Vec<Complex64>,
    half: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl Stepper {
    fn new(gen: Liouvillian, integrator: Integrator, dt: f64) -> Self {
        let integrator = integrator.resolve(&gen, dt);
        let len = gen.diagonal.len();
        let phase = |s: f64| gen.diagonal.iter().map(|g| Complex64::from_polar(1.0, g.im * s)).collect();
        let (full, half) = (phase(dt), phase(0.5 * dt));
        let z = || vec![Complex64::new(0.0, 0.0); len];
        Stepper { gen, integrator, dt, full, half, k: [z(), z(), z(), z()], tmp: z() }
    }

    fn step(&mut self, t: f64, rho: &mut [Complex64]) {
        let h = self.dt;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        match self.integrator {
            Integrator::Rk4 => {
                self.gen.apply_into(t, rho, k1);
                for i in 0..rho.len() {
                    tmp[i] = rho[i] + 0.5 * h * k1[i];
                }
                self.gen.apply_into(t + 0.5 * h, tmp, k2);
                for i in 0..rho.len() {
                    tmp[i] = rho[i] + 0.5 * h * k2[i];
                }
                self.gen.apply_into(t + 0.5 * h, tmp, k3);
                for i in 0..rho.len() {
                    tmp[i] = rho[i] + h * k3[i];
                }
                self.gen.apply_into(t + h, tmp, k4);
                for i in 0..rho.len() {
                    rho[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
            }
            Integrator::IntegratingFactorRk4 | Integrator::Auto => {
                let (e1, eh) = (&self.full, &self.half);
                self.gen.interaction(t, rho, k1);
                for i in 0..rho.len() {
                    tmp[i] = eh[i] * (rho[i] + 0.5 * h * k1[i]);
                }
                self.gen.interaction(t + 0.5 * h, tmp, k2);
                for i in 0..rho.len() {
                    tmp[i] = eh[i] * rho[i] + 0.5 * h * k2[i];
                }
                self.gen.interaction(t + 0.5 * h, tmp, k3);
                for i in 0..rho.len() {
                    tmp[i] = e1[i] * rho[i] + h * eh[i] * k3[i];
                }
                self.gen.interaction(t + h, tmp, k4);
                for i in 0..rho.len() {
                    rho[i] = e1[i] * rho[i]
                        + h / 6.0 * (e1[i] * k1[i] + 2.0 * eh[i] * (k2[i] + k3[i]) + k4[i]);
                }
            }
        }
    }
}

/// Fixed-step integration from `rho0`, sampling observables every
/// `cfg.record_every` steps (including the initial state).
pub fn evolve(
    params: &SystemParams,
    rho0: &DensityMatrix,
    cfg: &EvolutionConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<Evolution> {
    params.validate()?;
    cfg.validate()?;
    let basis = rho0.basis();
    if cfg.tail_levels >= basis.dim() {
        return Err(Error::InvalidParameter(format!(
            "tail_levels {} must be below the basis dimension {}",
            cfg.tail_levels,
            basis.dim()
        )));
    }
    check_tail(rho0, cfg, 0.0)?;

    let gen = Liouvillian::new(params, basis);
    if cfg.integrator == Integrator::Rk4 && cfg.dt * gen.stiffness_estimate() > RK4_STABILITY_LIMIT {
        log::warn!(
            "plain RK4 with dt = {} is likely outside its stability region (|rate| dt ~ {:.2})",
            cfg.dt,
            cfg.dt * gen.stiffness_estimate()
        );
    }
    if cfg.dt * gen.coupling_estimate() > RK4_STABILITY_LIMIT {
        log::warn!(
            "dt = {} is likely too large for the drive coupling (|coupling| dt ~ {:.2})",
            cfg.dt,
            cfg.dt * gen.coupling_estimate()
        );
    }
    let mut stepper = Stepper::new(gen, cfg.integrator, cfg.dt);
    let mut rho = rho0.clone();
    let n_steps = cfg.n_steps();
    let mut records = Vec::with_capacity(n_steps / cfg.record_every + 1);

    for step in 0..=n_steps {
        let t = step as f64 * cfg.dt;
        if step % cfg.record_every == 0 {
            if !rho.is_finite() {
                return Err(Error::NonFiniteState { t });
            }
            if (rho.trace() - 1.0).abs() > 1e-6 {
                return Err(Error::Unstable { t, dt: cfg.dt });
            }
            check_tail(&rho, cfg, t)?;
            records.push(ObservableRecord::from_state(t, &rho));
            for obs in observers.iter_mut() {
                obs.observe(t, &rho)?;
            }
        }
        if step == n_steps {
            break;
        }
        stepper.step(t, rho.elements.as_mut_slice());
        if !rho.trace().is_finite() {
            return Err(Error::NonFiniteState { t: t + cfg.dt });
        }
    }

    Ok(Evolution { records, final_state: rho, final_time: n_steps as f64 * cfg.dt })
}

fn check_tail(rho: &DensityMatrix, cfg: &EvolutionConfig, t: f64) -> Result<()> {
    let tail = tail_population(rho, cfg.tail_levels);
    if tail >= cfg.tail_tol {
        return Err(Error::TruncationOverflow {
            t,
            tail_levels: cfg.tail_levels,
            tail_population: tail,
            tol: cfg.tail_tol,
        });
    }
    Ok(())
}
