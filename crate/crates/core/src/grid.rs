//! Periodic grids and the Fourier machinery shared by both solvers.
//!
//! Spectral coefficients are stored in FFT order and normalised so that the
//! coefficient of mode `k` is `(1/n) * sum_j f_j exp(-2 pi i k j / n)`; the
//! zero mode is therefore the mean of the samples. The Nyquist mode of an
//! even-length grid is treated as a cosine: when a spectrum is embedded in a
//! larger one it is split evenly between `+n/2` and `-n/2`, and when a
//! spectrum is truncated both halves are folded back into it.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Uniform periodic grid `x_i = i * length / n`, `i = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicGrid {
    length: f64,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "length must be positive, got {length}"
            )));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { length, n })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.point(i))
    }

    /// Signed integer mode number of FFT index `idx` (Nyquist reported as `-n/2`).
    pub fn mode(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let idx = idx as i64;
        if idx < n / 2 {
            idx
        } else {
            idx - n
        }
    }

    /// Angular wavenumber `2 pi k / length` of FFT index `idx`.
    pub fn wavenumber(&self, idx: usize) -> f64 {
        2.0 * PI * self.mode(idx) as f64 / self.length
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Largest resolved angular wavenumber, `pi n / length`.
    pub fn max_wavenumber(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> RealField {
        RealField {
            grid: *self,
            values: self.points().map(f).collect(),
        }
    }

    /// Same geometry with a different sample count.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.length, n)
    }
}

/// Samples of a field on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField<T> {
    grid: PeriodicGrid,
    values: Vec<T>,
}

pub type RealField = GridField<f64>;
pub type ComplexField = GridField<Complex64>;

impl<T> GridField<T> {
    pub fn new(grid: PeriodicGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl RealField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// `max |self - other|`; fields must share a sample count.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        }
    }
}

impl ComplexField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }
}

/// `spacing * sum(values)`: the rectangle rule, spectrally accurate for
/// periodic integrands.
pub fn integrate(f: &RealField) -> f64 {
    f.grid.spacing() * f.values.iter().sum::<f64>()
}

/// Moves the coefficients of an `n`-point spectrum into an `n_target`-point
/// spectrum, zero-padding or truncating as needed.
pub fn resize_spectrum(coeffs: &[Complex64], n_target: usize) -> Vec<Complex64> {
    let n = coeffs.len() as i64;
    let nt = n_target as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); n_target];
    let mut deposit = |k: i64, c: Complex64| {
        if k.abs() < nt / 2 {
            out[k.rem_euclid(nt) as usize] += c;
        } else if k.abs() == nt / 2 {
            out[(nt / 2) as usize] += c;
        }
    };
    for (idx, &c) in coeffs.iter().enumerate() {
        let idx = idx as i64;
        if idx == n / 2 {
            deposit(n / 2, 0.5 * c);
            deposit(-n / 2, 0.5 * c);
        } else if idx < n / 2 {
            deposit(idx, c);
        } else {
            deposit(idx - n, c);
        }
    }
    out
}

/// Planned transforms for one grid plus the doubled grid used for alias-free
/// products. Cheap to clone; each thread should own its instance.
#[derive(Clone)]
pub struct Spectral {
    grid: PeriodicGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    forward_padded: Arc<dyn Fft<f64>>,
    inverse_padded: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: PeriodicGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            forward_padded: planner.plan_fft_forward(2 * n),
            inverse_padded: planner.plan_fft_inverse(2 * n),
            wavenumbers: (0..n).map(|i| grid.wavenumber(i)).collect(),
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// Angular wavenumbers in FFT order (Nyquist entry negative).
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Normalised coefficients of real samples.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Normalised forward transform in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        transform(&self.forward, buf, 1.0 / buf.len() as f64);
    }

    /// Inverse of [`Spectral::forward_in_place`].
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        transform(&self.inverse, buf, 1.0);
    }

    pub fn inverse_real(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Multiplier of the `order`-th derivative for FFT index `idx`.
    ///
    /// Odd orders annihilate the Nyquist mode so real fields stay real.
    pub fn derivative_symbol(&self, idx: usize, order: u32) -> Complex64 {
        if order == 0 {
            return Complex64::new(1.0, 0.0);
        }
        if idx == self.grid.nyquist_index() {
            if order % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            let kn = self.grid.max_wavenumber();
            let sign = if (order / 2).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            return Complex64::new(sign * kn.powi(order as i32), 0.0);
        }
        Complex64::new(0.0, self.wavenumbers[idx]).powu(order)
    }

    /// Applies the derivative symbol to a spectrum in place.
    pub fn differentiate_spectrum(&self, coeffs: &mut [Complex64], order: u32) {
        for (idx, c) in coeffs.iter_mut().enumerate() {
            *c *= self.derivative_symbol(idx, order);
        }
    }

    pub fn derivative(&self, f: &RealField, order: u32) -> RealField {
        let mut coeffs = self.forward_real(&f.values);
        self.differentiate_spectrum(&mut coeffs, order);
        RealField {
            grid: self.grid,
            values: self.inverse_real(&coeffs),
        }
    }

    pub fn derivative_complex(&self, f: &ComplexField, order: u32) -> ComplexField {
        let mut buf = f.values.clone();
        self.forward_in_place(&mut buf);
        self.differentiate_spectrum(&mut buf, order);
        self.inverse_in_place(&mut buf);
        ComplexField {
            grid: self.grid,
            values: buf,
        }
    }

    /// Samples of the spectrum's interpolant on the doubled grid.
    pub fn to_padded_physical(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = resize_spectrum(coeffs, 2 * self.grid.n());
        transform(&self.inverse_padded, &mut buf, 1.0);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Spectrum (truncated to `n` modes) of real samples on the doubled grid.
    pub fn from_padded_physical(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let scale = 1.0 / buf.len() as f64;
        transform(&self.forward_padded, &mut buf, scale);
        resize_spectrum(&buf, self.grid.n())
    }

    /// Pointwise product of two or three fields without aliasing.
    ///
    /// Each factor is zero-padded to `2n` modes, multiplied on the doubled
    /// grid and truncated back to `n` modes. For quadratic and cubic products
    /// every retained mode is exact.
    pub fn dealias_product(&self, fs: &[&RealField]) -> RealField {
        let mut product = vec![1.0; 2 * self.grid.n()];
        for f in fs {
            let padded = self.to_padded_physical(&self.forward_real(&f.values));
            for (p, v) in product.iter_mut().zip(padded) {
                *p *= v;
            }
        }
        let coeffs = self.from_padded_physical(&product);
        RealField {
            grid: self.grid,
            values: self.inverse_real(&coeffs),
        }
    }

    /// `length * sum |c_k|^2`, equal to `integrate(f^2)` by Parseval.
    pub fn spectral_energy(&self, f: &RealField) -> f64 {
        let coeffs = self.forward_real(&f.values);
        self.grid.length() * coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `g(x) = f(x + offset)` by phase shift.
    pub fn shift(&self, f: &RealField, offset: f64) -> RealField {
        let mut coeffs = self.forward_real(&f.values);
        let nyq = self.grid.nyquist_index();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            if idx == nyq {
                *c *= (self.grid.max_wavenumber() * offset).cos();
            } else {
                *c *= Complex64::from_polar(1.0, self.wavenumbers[idx] * offset);
            }
        }
        RealField {
            grid: self.grid,
            values: self.inverse_real(&coeffs),
        }
    }

    /// Zero-mean antiderivative of the zero-mean part of `f`.
    pub fn antiderivative(&self, f: &RealField) -> RealField {
        let mut coeffs = self.forward_real(&f.values);
        let nyq = self.grid.nyquist_index();
        for (idx, c) in coeffs.iter_mut().enumerate() {
            if idx == 0 || idx == nyq {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= Complex64::new(0.0, self.wavenumbers[idx]);
            }
        }
        RealField {
            grid: self.grid,
            values: self.inverse_real(&coeffs),
        }
    }

    /// Spectral interpolation (or truncation) onto `target`, which must have
    /// the same length.
    pub fn resample(&self, f: &RealField, target: PeriodicGrid) -> Result<RealField> {
        check_same_length(&self.grid, &target)?;
        let coeffs = resize_spectrum(&self.forward_real(&f.values), target.n());
        let inverse = FftPlanner::new().plan_fft_inverse(target.n());
        let mut buf = coeffs;
        transform(&inverse, &mut buf, 1.0);
        RealField::new(target, buf.into_iter().map(|c| c.re).collect())
    }
}

fn check_same_length(a: &PeriodicGrid, b: &PeriodicGrid) -> Result<()> {
    if (a.length() - b.length()).abs() > 1e-12 * a.length() {
        return Err(Error::InvalidGrid(format!(
            "cannot resample between lengths {} and {}",
            a.length(),
            b.length()
        )));
    }
    Ok(())
}

fn transform(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], scale: f64) {
    plan.process(buf);
    if scale != 1.0 {
        for c in buf.iter_mut() {
            *c *= scale;
        }
    }
}
