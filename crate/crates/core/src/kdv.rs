//! Conserved functionals, right-hand sides and time stepping for the
//! `m`-component KdV system.
//!
//! The standard form integrated here is
//!
//! ```text
//! d_t u_j = -6 u_j d_x u_j - d_x^3 u_j + 3 d_x sum_ln N_ln u_l u_n
//! ```
//!
//! and the Hamiltonian form is `d_t u = -d_x^3 u + L^-1 d_x (dR/du)` with
//! `R = sum R_ijk u_i u_j u_k`. Both are instances of [`QuadraticKdv`], a
//! system whose nonlinearity is the derivative of one quadratic form per
//! component.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::coupling::{invert_l, CouplingSet};
use crate::grid::{integrate, PeriodicGrid, RealField, Spectral};
use crate::{Error, Result};

/// Fields are declared blown up beyond this magnitude.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

/// Guideline bound on `dt * k_max^3` for the dispersive term.
pub const STABILITY_GUIDELINE: f64 = 2.8;

/// The fields `u_1..u_m` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct MkdvState {
    pub fields: Vec<RealField>,
    pub time: f64,
}

impl MkdvState {
    pub fn new(fields: Vec<RealField>, time: f64) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidParameter("state needs at least one field".into()))?;
        let grid = *first.grid();
        for f in &fields {
            if *f.grid() != grid {
                return Err(Error::InvalidGrid("fields live on different grids".into()));
            }
            if f.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite field value".into()));
            }
        }
        Ok(Self { fields, time })
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.fields[0].grid()
    }

    fn check_m(&self, m: usize) -> Result<()> {
        if self.m() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: self.m(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Classical RK4 after removing the linear dispersive term exactly in
    /// Fourier space.
    #[default]
    IntegratingFactorRk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub dealias: bool,
    /// Record a snapshot every this many steps; `0` keeps only the endpoints.
    pub snapshot_stride: usize,
}

impl IntegratorConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            scheme: Scheme::default(),
            dealias: true,
            snapshot_stride: 0,
        }
    }

    /// `dt * (pi n / length)^3` for unit dispersion.
    pub fn stability_number(&self, grid: &PeriodicGrid) -> f64 {
        self.dt * grid.max_wavenumber().powi(3)
    }

    /// The largest step meeting [`STABILITY_GUIDELINE`] on `grid`.
    pub fn from_guideline(grid: &PeriodicGrid) -> Self {
        Self::new(STABILITY_GUIDELINE / grid.max_wavenumber().powi(3))
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// `d_t u_j = dispersion * d_x^3 u_j + d_x sum_ln flux[j]_ln u_l u_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticKdv {
    pub dispersion: f64,
    pub flux: Vec<DMatrix<f64>>,
}

impl QuadraticKdv {
    pub fn new(dispersion: f64, flux: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = flux.len();
        for f in &flux {
            if f.nrows() != m || f.ncols() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: f.nrows(),
                });
            }
        }
        Ok(Self { dispersion, flux })
    }

    /// Standard form: dispersion `-1`, flux `3 N - 3 e_j e_j^T`.
    pub fn standard(c: &CouplingSet) -> Self {
        let m = c.m();
        let flux = (0..m)
            .map(|j| {
                let mut f = &c.n_tensor * 3.0;
                f[(j, j)] -= 3.0;
                f
            })
            .collect();
        Self {
            dispersion: -1.0,
            flux,
        }
    }

    pub fn m(&self) -> usize {
        self.flux.len()
    }

    /// Spectrum of the nonlinear term `d_x flux_j(u)` from field spectra.
    pub fn nonlinear_spectra(
        &self,
        sp: &Spectral,
        spectra: &[Vec<Complex64>],
        dealias: bool,
    ) -> Vec<Vec<Complex64>> {
        let mut out = quadratic_forms(sp, spectra, &self.flux, dealias);
        for s in &mut out {
            sp.differentiate_spectrum(s, 1);
        }
        out
    }

    fn linear_symbol(&self, sp: &Spectral, idx: usize) -> Complex64 {
        sp.derivative_symbol(idx, 3) * self.dispersion
    }

    /// Full right-hand side in physical space.
    pub fn rhs(&self, sp: &Spectral, fields: &[RealField], dealias: bool) -> Vec<RealField> {
        let spectra: Vec<_> = fields.iter().map(|f| sp.forward_real(f.values())).collect();
        let nonlinear = self.nonlinear_spectra(sp, &spectra, dealias);
        spectra
            .iter()
            .zip(nonlinear)
            .map(|(s, mut nl)| {
                for (idx, (c, u)) in nl.iter_mut().zip(s).enumerate() {
                    *c += self.linear_symbol(sp, idx) * u;
                }
                field(sp, sp.inverse_real(&nl))
            })
            .collect()
    }

    /// Integrating-factor RK4 from `s0` to absolute time `t_final` (which may
    /// lie before `s0.time`). Returns the recorded snapshots, first and last
    /// included.
    pub fn integrate(
        &self,
        s0: &MkdvState,
        t_final: f64,
        cfg: &IntegratorConfig,
    ) -> Result<Vec<MkdvState>> {
        cfg.validate()?;
        s0.check_m(self.m())?;
        let grid = *s0.grid();
        let sp = Spectral::new(grid);
        let n = grid.n();

        let span = t_final - s0.time;
        let steps = (span.abs() / cfg.dt)
            .round()
            .max(if span == 0.0 { 0.0 } else { 1.0 }) as usize;
        let h = if steps == 0 { 0.0 } else { span / steps as f64 };

        let symbol: Vec<Complex64> = (0..n).map(|idx| self.linear_symbol(&sp, idx)).collect();
        let half: Vec<Complex64> = symbol.iter().map(|l| (l * (h / 2.0)).exp()).collect();
        let full: Vec<Complex64> = symbol.iter().map(|l| (l * h).exp()).collect();

        let mut spectra: Vec<Vec<Complex64>> = s0
            .fields
            .iter()
            .map(|f| sp.forward_real(f.values()))
            .collect();
        let mut snapshots = vec![s0.clone()];
        let to_state = |spectra: &[Vec<Complex64>], time: f64| MkdvState {
            fields: spectra
                .iter()
                .map(|s| field(&sp, sp.inverse_real(s)))
                .collect(),
            time,
        };

        let combine =
            |a: &[Vec<Complex64>], b: &[Vec<Complex64>], fa: &[Complex64], fb: Complex64| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        x.iter()
                            .zip(y)
                            .zip(fa)
                            .map(|((x, y), e)| e * (x + fb * y))
                            .collect()
                    })
                    .collect::<Vec<Vec<Complex64>>>()
            };

        for step in 1..=steps {
            let nl = |s: &[Vec<Complex64>]| self.nonlinear_spectra(&sp, s, cfg.dealias);
            let k1 = nl(&spectra);
            let k2 = nl(&combine(&spectra, &k1, &half, Complex64::from(h / 2.0)));
            let eu: Vec<Vec<Complex64>> = spectra
                .iter()
                .map(|u| u.iter().zip(&half).map(|(u, e)| u * e).collect())
                .collect();
            let k3 = nl(&add_scaled(&eu, &k2, h / 2.0));
            let k4 = nl(&combine(&eu, &k3, &half, Complex64::from(h)));
            for (j, u) in spectra.iter_mut().enumerate() {
                for idx in 0..n {
                    u[idx] = full[idx] * u[idx]
                        + h / 6.0
                            * (full[idx] * k1[j][idx]
                                + 2.0 * half[idx] * (k2[j][idx] + k3[j][idx])
                                + k4[j][idx]);
                }
            }

            let time = s0.time + h * step as f64;
            check_growth(&sp, &spectra, time)?;
            let at_stride = cfg.snapshot_stride > 0 && step % cfg.snapshot_stride == 0;
            if at_stride || step == steps {
                let state = to_state(&spectra, time);
                check_blow_up(&state)?;
                snapshots.push(state);
            }
        }
        Ok(snapshots)
    }
}

fn add_scaled(a: &[Vec<Complex64>], b: &[Vec<Complex64>], factor: f64) -> Vec<Vec<Complex64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x + factor * y).collect())
        .collect()
}

fn field(sp: &Spectral, values: Vec<f64>) -> RealField {
    RealField::new(*sp.grid(), values).expect("spectral transforms preserve length")
}

/// The sum of coefficient moduli bounds `max |u|`; only when it is large do we
/// pay for the inverse transform.
fn check_growth(sp: &Spectral, spectra: &[Vec<Complex64>], time: f64) -> Result<()> {
    for s in spectra {
        let bound: f64 = s.iter().map(|c| c.norm()).sum();
        if !bound.is_finite() {
            return Err(Error::BlowUp {
                time,
                max_abs: f64::INFINITY,
            });
        }
        if bound > BLOW_UP_THRESHOLD {
            let max_abs = sp
                .inverse_real(s)
                .iter()
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            if max_abs > BLOW_UP_THRESHOLD {
                return Err(Error::BlowUp { time, max_abs });
            }
        }
    }
    Ok(())
}

fn check_blow_up(state: &MkdvState) -> Result<()> {
    for f in &state.fields {
        let max_abs = f.max_abs();
        if !max_abs.is_finite() || max_abs > BLOW_UP_THRESHOLD {
            return Err(Error::BlowUp {
                time: state.time,
                max_abs,
            });
        }
    }
    Ok(())
}

/// Truncated spectra of `sum_ln forms[j]_ln u_l u_n` for every `j`.
///
/// With `dealias` the products are formed on the doubled grid and are exact
/// in every retained mode; otherwise they are formed on the native grid.
pub fn quadratic_forms(
    sp: &Spectral,
    spectra: &[Vec<Complex64>],
    forms: &[DMatrix<f64>],
    dealias: bool,
) -> Vec<Vec<Complex64>> {
    let m = spectra.len();
    let physical: Vec<Vec<f64>> = spectra
        .iter()
        .map(|s| {
            if dealias {
                sp.to_padded_physical(s)
            } else {
                sp.inverse_real(s)
            }
        })
        .collect();
    let len = physical.first().map_or(0, Vec::len);
    forms
        .iter()
        .map(|form| {
            let mut acc = vec![0.0; len];
            for l in 0..m {
                for n in l..m {
                    let coeff = if l == n {
                        form[(l, l)]
                    } else {
                        form[(l, n)] + form[(n, l)]
                    };
                    if coeff == 0.0 {
                        continue;
                    }
                    for ((a, x), y) in acc.iter_mut().zip(&physical[l]).zip(&physical[n]) {
                        *a += coeff * x * y;
                    }
                }
            }
            if dealias {
                sp.from_padded_physical(&acc)
            } else {
                let mut buf: Vec<Complex64> = acc.into_iter().map(Complex64::from).collect();
                sp.forward_in_place(&mut buf);
                buf
            }
        })
        .collect()
}

/// `P = integral of 1/2 sum_kj L_kj u_k u_j`.
pub fn momentum(s: &MkdvState, c: &CouplingSet) -> Result<f64> {
    s.check_m(c.m())?;
    let m = c.m();
    let mut total = 0.0;
    for k in 0..m {
        for j in 0..m {
            let l = c.l_matrix[(k, j)];
            if l == 0.0 {
                continue;
            }
            let density: f64 = s.fields[k]
                .values()
                .iter()
                .zip(s.fields[j].values())
                .map(|(a, b)| a * b)
                .sum();
            total += 0.5 * l * density;
        }
    }
    Ok(total * s.grid().spacing())
}

/// `H = integral of 1/2 sum_kj L_kj u_k' u_j' + sum_ijk R_ijk u_i u_j u_k`,
/// with the cubic term evaluated alias-free.
pub fn hamiltonian(s: &MkdvState, c: &CouplingSet) -> Result<f64> {
    s.check_m(c.m())?;
    let m = c.m();
    let sp = Spectral::new(*s.grid());
    let grads: Vec<RealField> = s.fields.iter().map(|f| sp.derivative(f, 1)).collect();
    let mut gradient = 0.0;
    for k in 0..m {
        for j in 0..m {
            let l = c.l_matrix[(k, j)];
            if l != 0.0 {
                let prod: Vec<f64> = grads[k]
                    .values()
                    .iter()
                    .zip(grads[j].values())
                    .map(|(a, b)| a * b)
                    .collect();
                gradient += 0.5 * l * integrate(&field(&sp, prod));
            }
        }
    }
    let mut cubic = 0.0;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let r = c.r_tensor.get(i, j, k);
                if r != 0.0 {
                    let prod = sp.dealias_product(&[&s.fields[i], &s.fields[j], &s.fields[k]]);
                    cubic += r * integrate(&prod);
                }
            }
        }
    }
    Ok(gradient + cubic)
}

/// `dR/du_p = 3 sum_ij R_ijp u_i u_j` as alias-free spectra.
fn potential_gradient_spectra(
    sp: &Spectral,
    spectra: &[Vec<Complex64>],
    c: &CouplingSet,
) -> Vec<Vec<Complex64>> {
    let m = c.m();
    let forms: Vec<DMatrix<f64>> = (0..m)
        .map(|p| DMatrix::from_fn(m, m, |i, j| 3.0 * c.r_tensor.get(i, j, p)))
        .collect();
    quadratic_forms(sp, spectra, &forms, true)
}

/// `dH/du_p = -sum_k L_kp u_k'' + 3 sum_ij R_ijp u_i u_j`.
pub fn variational_derivative_h(s: &MkdvState, c: &CouplingSet) -> Result<Vec<RealField>> {
    s.check_m(c.m())?;
    let sp = Spectral::new(*s.grid());
    let spectra: Vec<_> = s
        .fields
        .iter()
        .map(|f| sp.forward_real(f.values()))
        .collect();
    let mut grad = potential_gradient_spectra(&sp, &spectra, c);
    for (p, g) in grad.iter_mut().enumerate() {
        for (k, uk) in spectra.iter().enumerate() {
            let l = c.l_matrix[(k, p)];
            for (idx, (gc, uc)) in g.iter_mut().zip(uk).enumerate() {
                *gc -= l * sp.derivative_symbol(idx, 2) * uc;
            }
        }
    }
    Ok(grad
        .into_iter()
        .map(|g| field(&sp, sp.inverse_real(&g)))
        .collect())
}

/// Time derivative of every field in standard form (alias-free products).
pub fn rhs_standard(s: &MkdvState, c: &CouplingSet) -> Result<Vec<RealField>> {
    s.check_m(c.m())?;
    let sp = Spectral::new(*s.grid());
    Ok(QuadraticKdv::standard(c).rhs(&sp, &s.fields, true))
}

/// Time derivative via `-d_x^3 u + L^-1 d_x dR/du`.
pub fn rhs_hamiltonian_form(s: &MkdvState, c: &CouplingSet) -> Result<Vec<RealField>> {
    s.check_m(c.m())?;
    let m = c.m();
    let linv = invert_l(c)?;
    let sp = Spectral::new(*s.grid());
    let spectra: Vec<_> = s
        .fields
        .iter()
        .map(|f| sp.forward_real(f.values()))
        .collect();
    let grad = potential_gradient_spectra(&sp, &spectra, c);
    (0..m)
        .map(|j| {
            let mut out: Vec<Complex64> = spectra[j]
                .iter()
                .enumerate()
                .map(|(idx, u)| -sp.derivative_symbol(idx, 3) * u)
                .collect();
            for k in 0..m {
                let coeff = linv[(j, k)];
                for (idx, (o, g)) in out.iter_mut().zip(&grad[k]).enumerate() {
                    *o += coeff * sp.derivative_symbol(idx, 1) * g;
                }
            }
            Ok(field(&sp, sp.inverse_real(&out)))
        })
        .collect()
}

/// Integrates the standard form from `s0` to `t_final`.
pub fn evolve(
    s0: &MkdvState,
    c: &CouplingSet,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<MkdvState>> {
    s0.check_m(c.m())?;
    QuadraticKdv::standard(c).integrate(s0, t_final, cfg)
}

/// `2 kappa^2 sech^2(kappa (x - x0))`, the one-soliton profile of
/// `u_t + 6 u u_x + u_xxx = 0` moving at speed `4 kappa^2`.
pub fn soliton_profile(x: f64, kappa: f64, x0: f64) -> f64 {
    let s = 1.0 / (kappa * (x - x0)).cosh();
    2.0 * kappa * kappa * s * s
}

/// One-soliton profile on a periodic grid, summed over enough periodic images
/// that the wrap-around is below rounding.
pub fn periodic_soliton(grid: &PeriodicGrid, kappa: f64, x0: f64) -> RealField {
    let l = grid.length();
    grid.sample(|x| {
        let mut d = (x - x0).rem_euclid(l);
        if d > l / 2.0 {
            d -= l;
        }
        (-2..=2)
            .map(|k| soliton_profile(d + k as f64 * l, kappa, 0.0))
            .sum()
    })
}
