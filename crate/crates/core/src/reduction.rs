//! Small-amplitude long waves on a mixture with a repeated sound speed.
//!
//! A perturbation of order `eps^2` that varies on the scale `X = eps x` and
//! rides the degenerate `+lambda_star` branch is described by `m` amplitudes
//! `f_j(xi, tau)`, with `xi = X - lambda_star T`, `T = eps t` and
//! `tau = eps^3 t`. They obey
//!
//! ```text
//! f_j,tau + (3s/4) d_xi[(sum w f)^2 + sum w f^2] - (3/4) d_xi f_j^2
//!         - 1/(8 lambda_star) f_j,xixixi = 0.
//! ```
//!
//! This module builds the initial mixture from the amplitudes, runs the full
//! Schrödinger system, projects back, and measures the gap to the amplitude
//! equations as `eps -> 0`.

use nalgebra::DMatrix;

use crate::coupling::{build_universal, SymmetricPair};
use crate::eigen::{decompose, DegenerateSetup, SpectralStructure};
use crate::grid::{PeriodicGrid, RealField, Spectral};
use crate::kdv::{evolve, IntegratorConfig, MkdvState, QuadraticKdv};
use crate::mnls::{evolve_mnls, madelung, synthesize, MnlsState};
use crate::{Error, Result};

/// Largest admissible amplitude parameter.
pub const MAX_EPSILON: f64 = 0.5;

/// Profiles must fall below this fraction of their peak outside the middle
/// third of the slow domain.
pub const LOCALIZATION_TOLERANCE: f64 = 1e-10;

/// Minimum fast-grid points per unit of slow length.
pub const MIN_POINTS_PER_SLOW_UNIT: f64 = 16.0;

/// Split-step runs on a uniform background are kept below
/// `dt * k_max^2 / 2 = 1`, well clear of the resonance at `pi`.
pub const SPLIT_STEP_LIMIT: f64 = 2.0;

/// Relative tolerance on the mean of a velocity perturbation.
pub const MEAN_TOLERANCE: f64 = 1e-10;

fn check_components(fields: &[RealField], expected: usize) -> Result<PeriodicGrid> {
    if fields.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: fields.len(),
        });
    }
    let grid = *fields
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one field is required".into()))?
        .grid();
    if fields.iter().any(|f| *f.grid() != grid) {
        return Err(Error::InvalidGrid("fields live on different grids".into()));
    }
    Ok(grid)
}

/// Lowest-order density and velocity perturbations carried by the amplitudes
/// `f`. Condensates past the reference one stay unperturbed.
pub fn zeroth_order_state(
    f: &[RealField],
    d: &DegenerateSetup,
) -> Result<(Vec<RealField>, Vec<RealField>)> {
    let m = d.m();
    let grid = check_components(f, m)?;
    let w = d.weights.as_slice();
    let density_scale = d.rho_ref / d.lambda_star;

    let mut weighted = RealField::zeros(grid);
    for (fj, wj) in f.iter().zip(w) {
        for (acc, v) in weighted.values_mut().iter_mut().zip(fj.values()) {
            *acc += wj * v;
        }
    }
    let mut delta_rho = Vec::with_capacity(d.ensemble.n());
    let mut delta_v = Vec::with_capacity(d.ensemble.n());
    for (fj, wj) in f.iter().zip(w) {
        delta_rho.push(fj.scaled(-density_scale * wj));
        delta_v.push(fj.scaled(-1.0));
    }
    delta_rho.push(weighted.scaled(density_scale));
    delta_v.push(weighted);
    for _ in m + 1..d.ensemble.n() {
        delta_rho.push(RealField::zeros(grid));
        delta_v.push(RealField::zeros(grid));
    }
    Ok((delta_rho, delta_v))
}

/// The grid of the slow variable `X = eps x` sampled with the fast grid's
/// resolution.
fn stretched(fast: &PeriodicGrid, epsilon: f64) -> Result<PeriodicGrid> {
    PeriodicGrid::new(fast.length() * epsilon, fast.n())
}

fn check_scales(slow: &PeriodicGrid, fast: &PeriodicGrid, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= MAX_EPSILON) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, {MAX_EPSILON}], got {epsilon}"
        )));
    }
    let expected = slow.length() / epsilon;
    if (fast.length() - expected).abs() > 1e-12 * expected {
        return Err(Error::InvalidGrid(format!(
            "fast grid length {} should equal slow length / eps = {expected}",
            fast.length()
        )));
    }
    Ok(())
}

/// `psi_k = sqrt(rho0_k + eps^2 drho_k(eps x)) exp(i phi_k)` with
/// `phi_k' = eps^2 dv_k(eps x)` and `phi_k(0) = 0`.
pub fn embed_perturbation(
    d: &DegenerateSetup,
    delta_rho: &[RealField],
    delta_v: &[RealField],
    epsilon: f64,
    fast_grid: PeriodicGrid,
) -> Result<MnlsState> {
    let n = d.ensemble.n();
    let slow = check_components(delta_rho, n)?;
    if check_components(delta_v, n)? != slow {
        return Err(Error::InvalidGrid(
            "density and velocity grids differ".into(),
        ));
    }
    check_scales(&slow, &fast_grid, epsilon)?;
    for (component, v) in delta_v.iter().enumerate() {
        let mean = v.mean();
        if mean.abs() > MEAN_TOLERANCE * v.max_abs().max(1.0) {
            return Err(Error::NonzeroMeanVelocity { component, mean });
        }
    }

    let sp = Spectral::new(slow);
    let fine = stretched(&fast_grid, epsilon)?;
    let eps2 = epsilon * epsilon;
    let mut rho = Vec::with_capacity(n);
    let mut vel = Vec::with_capacity(n);
    for k in 0..n {
        let dr = sp.resample(&delta_rho[k], fine)?;
        let dv = sp.resample(&delta_v[k], fine)?;
        let r0 = d.ensemble.rho0()[k];
        let values: Vec<f64> = dr.values().iter().map(|v| r0 + eps2 * v).collect();
        if let Some((i, &density)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NegativeDensity {
                component: k,
                x: fast_grid.point(i),
                density,
            });
        }
        rho.push(RealField::new(fast_grid, values)?);
        let mut v = RealField::new(fast_grid, dv.values().iter().map(|v| eps2 * v).collect())?;
        // Interpolation keeps the mean; drop what rounding left behind.
        let residual = v.mean();
        v.values_mut().iter_mut().for_each(|x| *x -= residual);
        vel.push(v);
    }
    synthesize(&rho, &vel, &vec![0.0; n], 0.0)
}

/// Rows of the dual basis that read off the `+lambda_star` degenerate modes,
/// as a `2N x m` matrix acting on `(drho, dv)`.
#[derive(Clone, Debug)]
pub struct BranchProjector {
    weights: DMatrix<f64>,
    structure: SpectralStructure,
}

impl BranchProjector {
    pub fn new(d: &DegenerateSetup) -> Result<Self> {
        let structure = decompose(&d.ensemble)?;
        let target = d.lambda_star * d.lambda_star;
        let block = structure
            .degenerate
            .iter()
            .find(|b| (b.lambda_sq - target).abs() <= 1e-8 * target)
            .ok_or_else(|| Error::InvalidEnsemble(format!("no repeated eigenvalue at {target}")))?;
        if block.columns.len() != d.m() {
            return Err(Error::InvalidEnsemble(format!(
                "eigenvalue {target} has multiplicity {} instead of {}",
                block.columns.len(),
                d.m()
            )));
        }
        let weights = structure
            .v_inv_t
            .columns(block.columns.start, d.m())
            .into_owned();
        Ok(Self { weights, structure })
    }

    pub fn structure(&self) -> &SpectralStructure {
        &self.structure
    }

    /// `f_j = sum_i P_ij drho_i + P_(N+i)j dv_i`.
    pub fn project(&self, delta_rho: &[RealField], delta_v: &[RealField]) -> Vec<RealField> {
        let n = delta_rho.len();
        let grid = *delta_rho[0].grid();
        (0..self.weights.ncols())
            .map(|j| {
                let mut out = RealField::zeros(grid);
                for i in 0..n {
                    let (a, b) = (self.weights[(i, j)], self.weights[(n + i, j)]);
                    for ((o, r), v) in out
                        .values_mut()
                        .iter_mut()
                        .zip(delta_rho[i].values())
                        .zip(delta_v[i].values())
                    {
                        *o += a * r + b * v;
                    }
                }
                out
            })
            .collect()
    }
}

/// Perturbation `amplitude(X) * V[:, column]` along one eigenvector of the
/// linearised operator (columns `N..2N` are the left-moving branch).
pub fn mode_perturbation(
    s: &SpectralStructure,
    column: usize,
    amplitude: &RealField,
) -> (Vec<RealField>, Vec<RealField>) {
    let n = s.n();
    let rho = (0..n)
        .map(|i| amplitude.scaled(s.v_matrix[(i, column)]))
        .collect();
    let vel = (0..n)
        .map(|i| amplitude.scaled(s.v_matrix[(n + i, column)]))
        .collect();
    (rho, vel)
}

/// Reads the amplitudes `f_j(xi)` off an MNLS state at physical time `t`.
pub fn extract_f(
    state: &MnlsState,
    d: &DegenerateSetup,
    epsilon: f64,
    t: f64,
    slow_grid: PeriodicGrid,
) -> Result<Vec<RealField>> {
    extract_with(&BranchProjector::new(d)?, state, d, epsilon, t, slow_grid)
}

fn extract_with(
    projector: &BranchProjector,
    state: &MnlsState,
    d: &DegenerateSetup,
    epsilon: f64,
    t: f64,
    slow_grid: PeriodicGrid,
) -> Result<Vec<RealField>> {
    let n = d.ensemble.n();
    if state.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: state.n(),
        });
    }
    let fast = *state.grid();
    check_scales(&slow_grid, &fast, epsilon)?;
    let fine = stretched(&fast, epsilon)?;
    let sp_fine = Spectral::new(fine);
    let sp_slow = Spectral::new(slow_grid);
    let eps2 = epsilon * epsilon;
    let offset = d.lambda_star * epsilon * t;

    let (rho, vel) = madelung(state)?;
    let to_slow = |values: Vec<f64>| -> Result<RealField> {
        let on_fine = RealField::new(fine, values)?;
        Ok(sp_slow.shift(&sp_fine.resample(&on_fine, slow_grid)?, offset))
    };
    let mut delta_rho = Vec::with_capacity(n);
    let mut delta_v = Vec::with_capacity(n);
    for k in 0..n {
        let r0 = d.ensemble.rho0()[k];
        delta_rho.push(to_slow(
            rho[k].values().iter().map(|r| (r - r0) / eps2).collect(),
        )?);
        delta_v.push(to_slow(vel[k].values().iter().map(|v| v / eps2).collect())?);
    }
    Ok(projector.project(&delta_rho, &delta_v))
}

/// The amplitude equations in the form stated in the module docs.
pub fn physical_system(d: &DegenerateSetup) -> QuadraticKdv {
    let w = d.weights.as_slice();
    let m = w.len();
    let s = d.symmetric_value();
    let flux = (0..m)
        .map(|j| {
            DMatrix::from_fn(m, m, |l, n| {
                let coupling = s * (w[l] * w[n] + if l == n { w[l] } else { 0.0 });
                let own = if l == j && n == j { 1.0 } else { 0.0 };
                -0.75 * (coupling - own)
            })
        })
        .collect();
    QuadraticKdv {
        dispersion: 1.0 / (8.0 * d.lambda_star),
        flux,
    }
}

/// Integrates the amplitude equations from `tau = 0` to `tau_final`.
pub fn evolve_coupled_kdv_physical(
    f0: &[RealField],
    d: &DegenerateSetup,
    tau_final: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<RealField>> {
    check_components(f0, d.m())?;
    let s0 = MkdvState::new(f0.to_vec(), 0.0)?;
    let out = physical_system(d).integrate(&s0, tau_final, cfg)?;
    Ok(out
        .into_iter()
        .last()
        .expect("initial state is always recorded")
        .fields)
}

/// The change of variables `xi = l0 xi~`, `tau = -8 lambda_star l0^3 tau~`,
/// `f = u / (2 lambda_star l0^2)` between the amplitude equations and the
/// standard form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleMap {
    pub lambda_star: f64,
    pub l0: f64,
}

impl ScaleMap {
    pub fn new(lambda_star: f64, l0: f64) -> Result<Self> {
        if !(lambda_star > 0.0 && lambda_star.is_finite() && l0 > 0.0 && l0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda_star and l0 must be positive, got {lambda_star} and {l0}"
            )));
        }
        Ok(Self { lambda_star, l0 })
    }

    /// `u = amplitude_factor * f`.
    pub fn amplitude_factor(&self) -> f64 {
        2.0 * self.lambda_star * self.l0 * self.l0
    }

    /// `tau / tau~`; negative, so standard time runs backwards.
    pub fn time_factor(&self) -> f64 {
        -8.0 * self.lambda_star * self.l0.powi(3)
    }

    pub fn standard_time(&self, tau: f64) -> f64 {
        tau / self.time_factor()
    }

    pub fn physical_time(&self, tau_standard: f64) -> f64 {
        tau_standard * self.time_factor()
    }

    fn map(&self, fields: &[RealField], length_factor: f64, amp: f64) -> Result<Vec<RealField>> {
        fields
            .iter()
            .map(|f| {
                let grid = PeriodicGrid::new(f.grid().length() * length_factor, f.grid().n())?;
                RealField::new(grid, f.values().iter().map(|v| amp * v).collect())
            })
            .collect()
    }

    pub fn to_standard(&self, f: &[RealField]) -> Result<Vec<RealField>> {
        self.map(f, 1.0 / self.l0, self.amplitude_factor())
    }

    pub fn to_physical(&self, u: &[RealField]) -> Result<Vec<RealField>> {
        self.map(u, self.l0, 1.0 / self.amplitude_factor())
    }
}

pub fn rescale_to_standard(
    f: &[RealField],
    lambda_star: f64,
    l0: f64,
) -> Result<(Vec<RealField>, ScaleMap)> {
    let map = ScaleMap::new(lambda_star, l0)?;
    Ok((map.to_standard(f)?, map))
}

/// Same evolution as [`evolve_coupled_kdv_physical`], routed through the
/// standard form with the universal couplings. `cfg.dt` is the physical step.
pub fn evolve_coupled_kdv_standard(
    f0: &[RealField],
    d: &DegenerateSetup,
    tau_final: f64,
    l0: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<RealField>> {
    check_components(f0, d.m())?;
    let (u0, map) = rescale_to_standard(f0, d.lambda_star, l0)?;
    let c = build_universal(&d.weights, SymmetricPair::equal(d.symmetric_value()))?;
    let mut std_cfg = *cfg;
    std_cfg.dt = cfg.dt / map.time_factor().abs();
    let s0 = MkdvState::new(u0, 0.0)?;
    let out = evolve(&s0, &c, map.standard_time(tau_final), &std_cfg)?;
    map.to_physical(
        &out.into_iter()
            .last()
            .expect("initial state is always recorded")
            .fields,
    )
}

/// One run of the reduction check at a fixed `epsilon`.
#[derive(Clone, Debug)]
pub struct ReductionExperiment {
    pub setup: DegenerateSetup,
    pub epsilon: f64,
    /// Initial amplitudes on the slow grid.
    pub f0: Vec<RealField>,
    pub tau_final: f64,
    pub l0: f64,
    /// Points of the fast grid.
    pub fast_n: usize,
    pub mnls_dt: f64,
    pub kdv_dt: f64,
}

/// Result of one [`ReductionExperiment`].
#[derive(Clone, Debug)]
pub struct ReductionOutcome {
    pub epsilon: f64,
    /// Physical time reached by the Schrödinger run.
    pub t_final: f64,
    pub extracted: Vec<RealField>,
    pub kdv: Vec<RealField>,
    pub error: f64,
}

impl ReductionExperiment {
    /// Defaults: `tau_final = 0.5`, `l0 = 1`, fast grid with as many points
    /// as the slow one (at least the minimum density), `mnls_dt = 0.05`
    /// (see [`Self::mnls_step`]),
    /// `kdv_dt = 1e-3`.
    pub fn new(setup: DegenerateSetup, epsilon: f64, f0: Vec<RealField>) -> Result<Self> {
        let slow = check_components(&f0, setup.m())?;
        let min_n = (MIN_POINTS_PER_SLOW_UNIT * slow.length()).ceil() as usize;
        let exp = Self {
            setup,
            epsilon,
            f0,
            tau_final: 0.5,
            l0: 1.0,
            fast_n: slow.n().max(min_n.next_power_of_two()),
            mnls_dt: 0.05,
            kdv_dt: 1e-3,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn slow_grid(&self) -> PeriodicGrid {
        *self.f0[0].grid()
    }

    pub fn fast_grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.slow_grid().length() / self.epsilon, self.fast_n)
    }

    /// `mnls_dt`, reduced when the fast grid is fine enough for the
    /// split-step scheme to go unstable.
    pub fn mnls_step(&self) -> Result<f64> {
        let k = self.fast_grid()?.max_wavenumber();
        Ok(self.mnls_dt.min(SPLIT_STEP_LIMIT / (k * k)))
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let exp = Self {
            epsilon,
            ..self.clone()
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        let slow = check_components(&self.f0, self.setup.m())?;
        if !(self.epsilon > 0.0 && self.epsilon <= MAX_EPSILON) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, {MAX_EPSILON}], got {}",
                self.epsilon
            )));
        }
        for (name, v) in [
            ("l0", self.l0),
            ("mnls_dt", self.mnls_dt),
            ("kdv_dt", self.kdv_dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.tau_final.is_finite() {
            return Err(Error::InvalidParameter("tau_final must be finite".into()));
        }
        if (self.fast_n as f64) < MIN_POINTS_PER_SLOW_UNIT * slow.length() {
            return Err(Error::InvalidGrid(format!(
                "fast grid of {} points resolves fewer than {MIN_POINTS_PER_SLOW_UNIT} points per slow unit",
                self.fast_n
            )));
        }
        if self.fast_n < slow.n() {
            return Err(Error::InvalidGrid(
                "fast grid is coarser than the slow grid".into(),
            ));
        }
        for (j, f) in self.f0.iter().enumerate() {
            if !is_localized(f) {
                return Err(Error::InvalidParameter(format!(
                    "initial amplitude {j} is not confined to the middle third of the domain"
                )));
            }
        }
        Ok(())
    }

    pub fn run(&self) -> Result<ReductionOutcome> {
        self.validate()?;
        let d = &self.setup;
        let projector = BranchProjector::new(d)?;
        let (delta_rho, delta_v) = zeroth_order_state(&self.f0, d)?;
        let psi0 = embed_perturbation(d, &delta_rho, &delta_v, self.epsilon, self.fast_grid()?)?;
        let t_final = self.tau_final / self.epsilon.powi(3);
        let traj = evolve_mnls(&psi0, &d.ensemble, t_final, self.mnls_step()?, 0)?;
        let last = traj.last().expect("initial state is always recorded");
        let extracted = extract_with(&projector, last, d, self.epsilon, t_final, self.slow_grid())?;
        let kdv = evolve_coupled_kdv_physical(
            &self.f0,
            d,
            self.tau_final,
            &IntegratorConfig::new(self.kdv_dt),
        )?;
        let error = relative_error(&extracted, &kdv);
        Ok(ReductionOutcome {
            epsilon: self.epsilon,
            t_final,
            extracted,
            kdv,
            error,
        })
    }
}

/// `|f| <= LOCALIZATION_TOLERANCE * max |f|` outside the middle third.
pub fn is_localized(f: &RealField) -> bool {
    let peak = f.max_abs();
    let l = f.grid().length();
    f.grid()
        .points()
        .zip(f.values())
        .filter(|(x, _)| *x < l / 3.0 || *x > 2.0 * l / 3.0)
        .all(|(_, v)| v.abs() <= LOCALIZATION_TOLERANCE * peak)
}

/// `max_j |a_j - b_j|_max / max_j |b_j|_max`, or the absolute gap if `b` is 0.
pub fn relative_error(a: &[RealField], b: &[RealField]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.max_diff(y))
        .fold(0.0, f64::max);
    let scale = b.iter().map(RealField::max_abs).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// One row of a convergence table.
#[derive(Clone, Debug)]
pub struct ConvergencePoint {
    pub outcome: ReductionOutcome,
    /// `log(e_prev / e) / log(eps_prev / eps)`; absent for the first row.
    pub order: Option<f64>,
}

impl ConvergencePoint {
    pub fn epsilon(&self) -> f64 {
        self.outcome.epsilon
    }

    pub fn error(&self) -> f64 {
        self.outcome.error
    }
}

/// Runs `template` at each `epsilon` (in parallel) and tabulates the errors.
pub fn convergence_study(
    template: &ReductionExperiment,
    epsilons: &[f64],
) -> Result<Vec<ConvergencePoint>> {
    if epsilons.len() < 3 {
        return Err(Error::InvalidParameter(
            "at least three epsilon values are needed".into(),
        ));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(
            "epsilon values must be strictly decreasing".into(),
        ));
    }
    let experiments = epsilons
        .iter()
        .map(|&e| template.with_epsilon(e))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = experiments
            .iter()
            .map(|exp| scope.spawn(move || exp.run()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("reduction worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut table: Vec<ConvergencePoint> = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let order = table.last().map(|prev| {
            (prev.error() / outcome.error).ln() / (prev.epsilon() / outcome.epsilon).ln()
        });
        table.push(ConvergencePoint { outcome, order });
    }
    Ok(table)
}

/// True when the errors decrease strictly along the table.
pub fn strictly_decreasing(table: &[ConvergencePoint]) -> bool {
    table.windows(2).all(|w| w[1].error() < w[0].error())
}
