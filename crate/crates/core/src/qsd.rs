//! Quantum state diffusion: pure-state trajectories whose ensemble mean
//! solves the master equation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::DriveSpec;
use crate::error::{Error, Result};
use crate::fockspace::{
    tail_population, CMatrix, FockBasis, SystemParams, DEFAULT_TAIL_LEVELS, DEFAULT_TAIL_TOL,
};
use crate::lindblad::{DensityMatrix, Observer, DEFAULT_DT, MAX_DEFAULT_DT};
use crate::observables::ObservableRecord;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const RK4_STABILITY_LIMIT: f64 = 2.5;

/// Trajectories per block in the ensemble reduction. Fixed so the summation
/// order never depends on the worker count.
const REDUCTION_BLOCK: usize = 32;

pub const DEFAULT_N_TRAJ: usize = 1000;

/// One trajectory's state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    basis: FockBasis,
    amplitudes: Vec<Complex64>,
}

impl PureState {
    /// Normalizes `amplitudes`.
    pub fn new(basis: FockBasis, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: amplitudes.len() });
        }
        let norm = norm_sqr(&amplitudes).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidParameter("state vector must be finite and non-zero".into()));
        }
        let mut psi = PureState { basis, amplitudes };
        psi.scale(1.0 / norm);
        Ok(psi)
    }

    pub fn fock(basis: FockBasis, n: usize) -> Result<Self> {
        if n >= basis.dim() {
            return Err(Error::InvalidParameter(format!("level {n} outside basis of {}", basis.dim())));
        }
        let mut amplitudes = vec![ZERO; basis.dim()];
        amplitudes[n] = Complex64::new(1.0, 0.0);
        Ok(PureState { basis, amplitudes })
    }

    pub fn vacuum(basis: FockBasis) -> Self {
        Self::fock(basis, 0).expect("dim >= 2")
    }

    pub fn basis(&self) -> FockBasis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    pub fn excitation(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(n, z)| n as f64 * z.norm_sqr()).sum::<f64>()
            / norm_sqr(&self.amplitudes)
    }

    /// `<a>`
    pub fn expect_a(&self) -> Complex64 {
        expect_a(&self.amplitudes, &self.basis.sqrt_table())
    }

    pub fn to_density(&self) -> DensityMatrix {
        let d = self.basis.dim();
        let m = CMatrix::from_fn(d, d, |i, j| self.amplitudes[i] * self.amplitudes[j].conj());
        DensityMatrix::from_matrix_unchecked(self.basis, m)
    }

    fn scale(&mut self, s: f64) {
        for z in &mut self.amplitudes {
            *z *= s;
        }
    }
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn expect_a(psi: &[Complex64], sqrt_n: &[f64]) -> Complex64 {
    let mut m = ZERO;
    for n in 1..psi.len() {
        m += psi[n - 1].conj() * sqrt_n[n] * psi[n];
    }
    m / norm_sqr(psi)
}

/// Update rule for a single trajectory step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QsdScheme {
    /// Drift by plain RK4 when the step is inside its stability region,
    /// by the integrating-factor scheme otherwise.
    #[default]
    Auto,
    /// Explicit Ito-Euler for drift and noise.
    ItoEuler,
    /// RK4 drift, Euler-Maruyama noise.
    Rk4,
    /// RK4 drift in the frame of the Fock-diagonal generator,
    /// Euler-Maruyama noise.
    IntegratingFactorRk4,
}

/// Drift and noise coefficients for one parameter set.
#[derive(Debug, Clone)]
struct Kernel {
    drive: DriveSpec,
    sqrt_n: Vec<f64>,
    /// `-i E_n - (L1^dag L1 + L2^dag L2)_nn / 2`
    diagonal: Vec<Complex64>,
    c1_sq: f64,
    c2_sq: f64,
}

impl Kernel {
    fn new(params: &SystemParams, basis: FockBasis) -> Self {
        let d = basis.dim();
        let energies = params.level_energies(basis);
        let c1_sq = params.nbar + 1.0;
        let c2_sq = params.nbar;
        let diagonal = (0..d)
            .map(|n| {
                let raised = if n + 1 < d { (n + 1) as f64 } else { 0.0 };
                Complex64::new(-0.5 * (c1_sq * n as f64 + c2_sq * raised), -energies[n])
            })
            .collect();
        Kernel { drive: params.drive, sqrt_n: basis.sqrt_table(), diagonal, c1_sq, c2_sq }
    }

    fn stiffness_estimate(&self) -> f64 {
        let d = self.diagonal.len() as f64;
        self.diagonal.iter().map(|z| z.norm()).fold(0.0, f64::max)
            + 4.0 * self.drive.max_amplitude() * d.sqrt()
    }

    /// Drift without the diagonal part.
    fn coupling(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) {
        let f = self.drive.evaluate(t);
        let m = expect_a(psi, &self.sqrt_n);
        // coefficients of a psi and a^dag psi
        let ca = -I * f.conj() + self.c1_sq * m.conj();
        let cad = -I * f + self.c2_sq * m;
        let shift = -0.5 * (self.c1_sq + self.c2_sq) * m.norm_sqr();
        let d = psi.len();
        for n in 0..d {
            let mut acc = shift * psi[n];
            if n + 1 < d {
                acc += ca * self.sqrt_n[n + 1] * psi[n + 1];
            }
            if n > 0 {
                acc += cad * self.sqrt_n[n] * psi[n - 1];
            }
            out[n] = acc;
        }
    }

    fn drift(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) {
        self.coupling(t, psi, out);
        for n in 0..psi.len() {
            out[n] += self.diagonal[n] * psi[n];
        }
    }

    /// `sum_i (L_i - <L_i>) psi dxi_i`
    fn noise(&self, psi: &[Complex64], dxi: [Complex64; 2], out: &mut [Complex64]) {
        let m = expect_a(psi, &self.sqrt_n);
        let w1 = self.c1_sq.sqrt() * dxi[0];
        let w2 = self.c2_sq.sqrt() * dxi[1];
        let d = psi.len();
        for n in 0..d {
            let lower = if n + 1 < d { self.sqrt_n[n + 1] * psi[n + 1] } else { ZERO };
            let raise = if n > 0 { self.sqrt_n[n] * psi[n - 1] } else { ZERO };
            out[n] = w1 * (lower - m * psi[n]) + w2 * (raise - m.conj() * psi[n]);
        }
    }

    fn has_thermal_channel(&self) -> bool {
        self.c2_sq > 0.0
    }
}

/// Per-trajectory integrator with reusable buffers.
#[derive(Debug, Clone)]
struct Stepper {
    kernel: Kernel,
    scheme: QsdScheme,
    dt: f64,
    full: Vec<Complex64>,
    half: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    dw: Vec<Complex64>,
}

impl Stepper {
    fn new(kernel: Kernel, scheme: QsdScheme, dt: f64) -> Self {
        let coupling = 4.0 * kernel.drive.max_amplitude() * (kernel.diagonal.len() as f64).sqrt();
        if dt * coupling > RK4_STABILITY_LIMIT {
            log::warn!("dt = {dt} is likely too large for the drive coupling (|coupling| dt ~ {:.2})", dt * coupling);
        }
        let scheme = match scheme {
            QsdScheme::Auto if dt * kernel.stiffness_estimate() <= RK4_STABILITY_LIMIT => QsdScheme::Rk4,
            QsdScheme::Auto => QsdScheme::IntegratingFactorRk4,
            s => s,
        };
        let d = kernel.diagonal.len();
        let full = kernel.diagonal.iter().map(|g| (g * dt).exp()).collect();
        let half = kernel.diagonal.iter().map(|g| (g * (0.5 * dt)).exp()).collect();
        let z = || vec![ZERO; d];
        Stepper { kernel, scheme, dt, full, half, k: [z(), z(), z(), z()], tmp: z(), dw: z() }
    }

    /// Advances `psi` by one step and renormalizes.
    fn step(&mut self, t: f64, psi: &mut [Complex64], dxi: [Complex64; 2]) -> Result<()> {
        let h = self.dt;
        let kern = &self.kernel;
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        let dw = &mut self.dw;
        let d = psi.len();
        kern.noise(psi, dxi, dw);
        match self.scheme {
            QsdScheme::ItoEuler => {
                kern.drift(t, psi, k1);
                for i in 0..d {
                    psi[i] += h * k1[i] + dw[i];
                }
            }
            QsdScheme::Rk4 => {
                kern.drift(t, psi, k1);
                for i in 0..d {
                    tmp[i] = psi[i] + 0.5 * h * k1[i];
                }
                kern.drift(t + 0.5 * h, tmp, k2);
                for i in 0..d {
                    tmp[i] = psi[i] + 0.5 * h * k2[i];
                }
                kern.drift(t + 0.5 * h, tmp, k3);
                for i in 0..d {
                    tmp[i] = psi[i] + h * k3[i];
                }
                kern.drift(t + h, tmp, k4);
                for i in 0..d {
                    psi[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) + dw[i];
                }
            }
            QsdScheme::IntegratingFactorRk4 | QsdScheme::Auto => {
                let (e1, eh) = (&self.full, &self.half);
                kern.coupling(t, psi, k1);
                for i in 0..d {
                    tmp[i] = eh[i] * (psi[i] + 0.5 * h * k1[i]);
                }
                kern.coupling(t + 0.5 * h, tmp, k2);
                for i in 0..d {
                    tmp[i] = eh[i] * psi[i] + 0.5 * h * k2[i];
                }
                kern.coupling(t + 0.5 * h, tmp, k3);
                for i in 0..d {
                    tmp[i] = e1[i] * psi[i] + h * eh[i] * k3[i];
                }
                kern.coupling(t + h, tmp, k4);
                for i in 0..d {
                    psi[i] = e1[i] * (psi[i] + dw[i])
                        + h / 6.0 * (e1[i] * k1[i] + 2.0 * eh[i] * (k2[i] + k3[i]) + k4[i]);
                }
            }
        }
        let norm = norm_sqr(psi).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFiniteState { t: t + h });
        }
        for z in psi.iter_mut() {
            *z /= norm;
        }
        Ok(())
    }
}

/// Single Ito-Euler step with explicit noise increments, one per Lindblad
/// channel (`E[dxi dxi*] = dt`).
pub fn qsd_step(
    params: &SystemParams,
    psi: &PureState,
    t: f64,
    dt: f64,
    noise: [Complex64; 2],
) -> Result<PureState> {
    let kernel = Kernel::new(params, psi.basis);
    let mut stepper = Stepper::new(kernel, QsdScheme::ItoEuler, dt);
    let mut out = psi.clone();
    stepper.step(t, &mut out.amplitudes, noise)?;
    Ok(out)
}

/// Complex Wiener increment with `E[|dxi|^2] = dt`, `E[dxi^2] = 0`.
fn wiener<R: Rng>(rng: &mut R, dt: f64) -> Complex64 {
    let s = (0.5 * dt).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Random stream for trajectory `index`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub scheme: QsdScheme,
    /// Lifts the `dt <= 0.01` guard.
    pub allow_large_dt: bool,
    pub tail_levels: usize,
    pub tail_tol: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_traj: DEFAULT_N_TRAJ,
            seed: 0,
            dt: DEFAULT_DT,
            t_end: 100.0,
            record_every: 100,
            scheme: QsdScheme::default(),
            allow_large_dt: false,
            tail_levels: DEFAULT_TAIL_LEVELS,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter("n_traj must be >= 1".into()));
        }
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

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    /// Observables of the ensemble mean at each sample time.
    pub records: Vec<ObservableRecord>,
    pub final_state: DensityMatrix,
    pub final_time: f64,
}

struct Trajectory {
    psi: Vec<Complex64>,
    rng: ChaCha8Rng,
    stepper: Stepper,
}

/// Ensemble from the vacuum.
pub fn run_ensemble(
    params: &SystemParams,
    basis: FockBasis,
    cfg: &EnsembleConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<EnsembleRun> {
    run_ensemble_from(params, &PureState::vacuum(basis), cfg, observers)
}

/// Evolves `cfg.n_traj` trajectories from `psi0` on the rayon pool, sampling
/// the ensemble mean every `cfg.record_every` steps. Results depend only on
/// `cfg`, never on the number of workers.
pub fn run_ensemble_from(
    params: &SystemParams,
    psi0: &PureState,
    cfg: &EnsembleConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<EnsembleRun> {
    params.validate()?;
    cfg.validate()?;
    let basis = psi0.basis;
    if cfg.tail_levels >= basis.dim() {
        return Err(Error::InvalidParameter(format!(
            "tail_levels {} must be below the basis dimension {}",
            cfg.tail_levels,
            basis.dim()
        )));
    }
    let kernel = Kernel::new(params, basis);
    let thermal = kernel.has_thermal_channel();
    let stepper = Stepper::new(kernel, cfg.scheme, cfg.dt);
    let mut trajs: Vec<Trajectory> = (0..cfg.n_traj)
        .map(|k| Trajectory {
            psi: psi0.amplitudes.clone(),
            rng: trajectory_rng(cfg.seed, k),
            stepper: stepper.clone(),
        })
        .collect();

    let n_steps = cfg.n_steps();
    let mut records = Vec::with_capacity(n_steps / cfg.record_every + 1);
    let mut step = 0;
    let mut rho = ensemble_mean(basis, &trajs);
    loop {
        let t = step as f64 * cfg.dt;
        let tail = tail_population(&rho, cfg.tail_levels);
        if tail >= cfg.tail_tol {
            return Err(Error::TruncationOverflow {
                t,
                tail_levels: cfg.tail_levels,
                tail_population: tail,
                tol: cfg.tail_tol,
            });
        }
        records.push(ObservableRecord::from_state(t, &rho));
        for obs in observers.iter_mut() {
            obs.observe(t, &rho)?;
        }
        let next = (step + cfg.record_every).min(n_steps);
        if next == step {
            break;
        }
        let first_error = trajs
            .par_iter_mut()
            .enumerate()
            .map(|(k, tr)| {
                for s in step..next {
                    let dxi1 = wiener(&mut tr.rng, cfg.dt);
                    let dxi2 = if thermal { wiener(&mut tr.rng, cfg.dt) } else { ZERO };
                    tr.stepper
                        .step(s as f64 * cfg.dt, &mut tr.psi, [dxi1, dxi2])
                        .map_err(|e| Error::Trajectory { index: k, source: Box::new(e) })?;
                }
                Ok(())
            })
            .filter_map(|r: Result<()>| r.err())
            .min_by_key(|e| match e {
                Error::Trajectory { index, .. } => *index,
                _ => usize::MAX,
            });
        if let Some(e) = first_error {
            return Err(e);
        }
        step = next;
        rho = ensemble_mean(basis, &trajs);
        if step % cfg.record_every != 0 {
            // final partial interval: state kept but not sampled
            break;
        }
    }
    Ok(EnsembleRun { records, final_state: rho, final_time: step as f64 * cfg.dt })
}

/// `(1/n) sum_k |psi_k><psi_k|`, summed in fixed blocks of trajectory index.
fn ensemble_mean(basis: FockBasis, trajs: &[Trajectory]) -> DensityMatrix {
    let d = basis.dim();
    let partials: Vec<CMatrix> = trajs
        .par_chunks(REDUCTION_BLOCK)
        .map(|block| {
            let mut acc = CMatrix::zeros(d, d);
            for tr in block {
                let psi = &tr.psi;
                for j in 0..d {
                    let cj = psi[j].conj();
                    let col = acc.column_mut(j);
                    for (i, a) in col.into_iter().enumerate() {
                        *a += psi[i] * cj;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = CMatrix::zeros(d, d);
    for p in &partials {
        total += p;
    }
    total.scale_mut(1.0 / trajs.len() as f64);
    DensityMatrix::from_matrix_unchecked(basis, total)
}
