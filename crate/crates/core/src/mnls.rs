//! The `N`-component nonlinear Schrödinger system
//!
//! ```text
//! i d_t psi_k = -1/2 d_x^2 psi_k + sum_j alpha_kj |psi_j|^2 psi_k,
//! alpha_jk = h + (g_j - h) delta_jk,
//! ```
//!
//! its uniform plane-wave states, a Strang split-step integrator and the
//! Madelung (density/velocity) decomposition.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::{integrate, ComplexField, PeriodicGrid, RealField, Spectral};
use crate::{Error, Result};

/// `|psi|` below this makes the phase (and the velocity) undefined.
pub const VACUUM_THRESHOLD: f64 = 1e-8;

/// Uniform background densities and the interaction constants of a mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensateEnsemble {
    rho0: Vec<f64>,
    g: Vec<f64>,
    h: f64,
}

impl CondensateEnsemble {
    /// Requires positive entries and `h < min g` (stable uniform state).
    pub fn new(rho0: Vec<f64>, g: Vec<f64>, h: f64) -> Result<Self> {
        let e = Self::new_unchecked(rho0, g, h)?;
        if e.rho0
            .iter()
            .chain(&e.g)
            .chain([&e.h])
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidEnsemble(
                "densities and couplings must be positive".into(),
            ));
        }
        let g_min = e.g.iter().copied().fold(f64::INFINITY, f64::min);
        if e.h >= g_min {
            return Err(Error::InvalidEnsemble(format!(
                "cross coupling h = {} must be below min g = {g_min} for stability",
                e.h
            )));
        }
        Ok(e)
    }

    /// Only checks that `rho0` and `g` have one entry per component.
    pub fn new_unchecked(rho0: Vec<f64>, g: Vec<f64>, h: f64) -> Result<Self> {
        if rho0.is_empty() {
            return Err(Error::InvalidEnsemble(
                "at least one condensate is required".into(),
            ));
        }
        if rho0.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: rho0.len(),
                found: g.len(),
            });
        }
        Ok(Self { rho0, g, h })
    }

    pub fn n(&self) -> usize {
        self.rho0.len()
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `alpha_jk = h + (g_j - h) delta_jk`.
    pub fn alpha_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |j, k| if j == k { self.g[j] } else { self.h })
    }

    /// `mu_k = sum_j alpha_kj rho0_j`, the phase rotation rate of component `k`.
    pub fn chemical_potentials(&self) -> Vec<f64> {
        let alpha = self.alpha_matrix();
        (0..self.n())
            .map(|k| (0..self.n()).map(|j| alpha[(k, j)] * self.rho0[j]).sum())
            .collect()
    }
}

/// The wavefunctions `psi_1..psi_N` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct MnlsState {
    pub psi: Vec<ComplexField>,
    pub time: f64,
}

impl MnlsState {
    pub fn new(psi: Vec<ComplexField>, time: f64) -> Result<Self> {
        let first = psi
            .first()
            .ok_or_else(|| Error::InvalidParameter("state needs at least one component".into()))?;
        let grid = *first.grid();
        if psi.iter().any(|p| *p.grid() != grid) {
            return Err(Error::InvalidGrid(
                "components live on different grids".into(),
            ));
        }
        Ok(Self { psi, time })
    }

    pub fn n(&self) -> usize {
        self.psi.len()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.psi[0].grid()
    }

    pub fn densities(&self) -> Vec<RealField> {
        self.psi
            .iter()
            .map(|p| {
                let values = p.values().iter().map(|c| c.norm_sqr()).collect();
                RealField::new(*p.grid(), values).expect("same length")
            })
            .collect()
    }
}

/// `psi_k = sqrt(rho0_k) exp(i (theta_k - t mu_k))` with `mu_k = sum_j alpha_kj rho0_j`.
pub fn plane_wave(
    e: &CondensateEnsemble,
    theta_bar: &[f64],
    t: f64,
    grid: PeriodicGrid,
) -> Result<MnlsState> {
    if theta_bar.len() != e.n() {
        return Err(Error::DimensionMismatch {
            expected: e.n(),
            found: theta_bar.len(),
        });
    }
    let psi = e
        .chemical_potentials()
        .iter()
        .zip(theta_bar)
        .zip(e.rho0())
        .map(|((mu, theta), rho)| {
            let value = Complex64::from_polar(rho.sqrt(), theta - t * mu);
            ComplexField::new(grid, vec![value; grid.n()]).expect("grid sized")
        })
        .collect();
    MnlsState::new(psi, t)
}

/// `integral |psi_k|^2 dx` per component.
pub fn mass(s: &MnlsState) -> Vec<f64> {
    s.densities().iter().map(integrate).collect()
}

/// Strang splitting: half nonlinear phase rotation, exact free propagation,
/// half nonlinear phase rotation.
#[derive(Clone, Debug)]
pub struct SplitStep {
    alpha: DMatrix<f64>,
    sp: Spectral,
    dt: f64,
    kinetic: Vec<Complex64>,
}

impl SplitStep {
    pub fn new(e: &CondensateEnsemble, grid: PeriodicGrid, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be non-zero, got {dt}"
            )));
        }
        let sp = Spectral::new(grid);
        let kinetic = (0..grid.n())
            .map(|idx| (Complex64::new(0.0, 0.5 * dt) * sp.derivative_symbol(idx, 2)).exp())
            .collect();
        Ok(Self {
            alpha: e.alpha_matrix(),
            sp,
            dt,
            kinetic,
        })
    }

    fn nonlinear(&self, psi: &mut [ComplexField], tau: f64) {
        let n = psi.len();
        let dens: Vec<Vec<f64>> = psi
            .iter()
            .map(|p| p.values().iter().map(|c| c.norm_sqr()).collect())
            .collect();
        for (k, p) in psi.iter_mut().enumerate() {
            for (i, c) in p.values_mut().iter_mut().enumerate() {
                let potential: f64 = (0..n).map(|j| self.alpha[(k, j)] * dens[j][i]).sum();
                *c *= Complex64::from_polar(1.0, -tau * potential);
            }
        }
    }

    pub fn step(&self, s: &mut MnlsState) {
        self.nonlinear(&mut s.psi, self.dt / 2.0);
        for p in s.psi.iter_mut() {
            let buf = p.values_mut();
            self.sp.forward_in_place(buf);
            for (c, k) in buf.iter_mut().zip(&self.kinetic) {
                *c *= k;
            }
            self.sp.inverse_in_place(buf);
        }
        self.nonlinear(&mut s.psi, self.dt / 2.0);
        s.time += self.dt;
    }
}

fn check_finite(s: &MnlsState) -> Result<()> {
    for p in &s.psi {
        if p.values()
            .iter()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::BlowUp {
                time: s.time,
                max_abs: f64::INFINITY,
            });
        }
    }
    Ok(())
}

/// Integrates from `s0` to absolute time `t_final` with steps close to `dt`.
/// Snapshots every `stride` steps (`0`: endpoints only).
pub fn evolve_mnls(
    s0: &MnlsState,
    e: &CondensateEnsemble,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<Vec<MnlsState>> {
    if s0.n() != e.n() {
        return Err(Error::DimensionMismatch {
            expected: e.n(),
            found: s0.n(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let span = t_final - s0.time;
    let steps = (span.abs() / dt).round() as usize;
    let mut snapshots = vec![s0.clone()];
    if steps == 0 {
        return Ok(snapshots);
    }
    let stepper = SplitStep::new(e, *s0.grid(), span / steps as f64)?;
    let mut state = s0.clone();
    for step in 1..=steps {
        stepper.step(&mut state);
        if step == steps {
            state.time = t_final;
        }
        if (stride > 0 && step % stride == 0) || step == steps {
            check_finite(&state)?;
            snapshots.push(state.clone());
        }
    }
    Ok(snapshots)
}

/// Densities `|psi_k|^2` and velocities `Im(conj(psi_k) psi_k') / |psi_k|^2`.
pub fn madelung(s: &MnlsState) -> Result<(Vec<RealField>, Vec<RealField>)> {
    let grid = *s.grid();
    let sp = Spectral::new(grid);
    let mut rho = Vec::with_capacity(s.n());
    let mut vel = Vec::with_capacity(s.n());
    for (component, p) in s.psi.iter().enumerate() {
        if let Some((i, c)) = p
            .values()
            .iter()
            .enumerate()
            .find(|(_, c)| c.norm() < VACUUM_THRESHOLD)
        {
            return Err(Error::VacuumPoint {
                component,
                x: grid.point(i),
                modulus: c.norm(),
            });
        }
        let dp = sp.derivative_complex(p, 1);
        let density: Vec<f64> = p.values().iter().map(|c| c.norm_sqr()).collect();
        let velocity: Vec<f64> = p
            .values()
            .iter()
            .zip(dp.values())
            .zip(&density)
            .map(|((c, d), r)| (c.conj() * d).im / r)
            .collect();
        rho.push(RealField::new(grid, density)?);
        vel.push(RealField::new(grid, velocity)?);
    }
    Ok((rho, vel))
}

/// Inverse Madelung map `psi = sqrt(rho) exp(i (phase0 + integral_0^x v))`.
///
/// Each velocity must have zero mean so that the phase is periodic.
pub fn synthesize(
    rho: &[RealField],
    v: &[RealField],
    phase0: &[f64],
    time: f64,
) -> Result<MnlsState> {
    if rho.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: rho.len(),
            found: v.len(),
        });
    }
    if phase0.len() != rho.len() {
        return Err(Error::DimensionMismatch {
            expected: rho.len(),
            found: phase0.len(),
        });
    }
    let mut psi = Vec::with_capacity(rho.len());
    for (component, ((r, v), p0)) in rho.iter().zip(v).zip(phase0).enumerate() {
        let grid = *r.grid();
        let mean = v.mean();
        if mean.abs() > 1e-10 * v.max_abs().max(1.0) {
            return Err(Error::NonzeroMeanVelocity { component, mean });
        }
        if let Some((i, &d)) = r.values().iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
            return Err(Error::NegativeDensity {
                component,
                x: grid.point(i),
                density: d,
            });
        }
        let phase = Spectral::new(grid).antiderivative(v);
        let offset = p0 - phase.values()[0];
        let values = r
            .values()
            .iter()
            .zip(phase.values())
            .map(|(d, ph)| Complex64::from_polar(d.sqrt(), ph + offset))
            .collect();
        psi.push(ComplexField::new(grid, values)?);
    }
    MnlsState::new(psi, time)
}
