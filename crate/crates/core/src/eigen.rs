//! Linearised sound-wave operator of a condensate mixture and its
//! eigenstructure, including ensembles whose sound speeds coincide.
//!
//! Small perturbations `(drho, dv)` of a uniform mixture obey
//! `d_t (drho, dv) + A d_x (drho, dv) = 0` with `A = [[0, rho], [alpha, 0]]`.
//! Its eigenvalues are `+-lambda` where `lambda^2` runs over the spectrum of
//! `alpha rho`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::coupling::{build_universal, invert_checked, SymmetricPair, Weights};
use crate::mnls::CondensateEnsemble;
use crate::{Error, Result};

/// Relative gap below which two squared sound speeds count as one.
pub const CLUSTER_TOLERANCE: f64 = 1e-8;

/// Relative closeness at which an extra condensate joins the degenerate set.
pub const COLLISION_TOLERANCE: f64 = 1e-10;

/// Condition number of the Gram matrix above which results are suspect.
pub const CONDITION_WARNING: f64 = 1e8;

/// `A = [[0, diag(rho0)], [alpha, 0]]`.
pub fn build_a(e: &CondensateEnsemble) -> DMatrix<f64> {
    let n = e.n();
    let alpha = e.alpha_matrix();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        a[(j, n + j)] = e.rho0()[j];
        for k in 0..n {
            a[(n + j, k)] = alpha[(j, k)];
        }
    }
    a
}

/// `alpha rho`, whose eigenvalues are the squared sound speeds.
pub fn alpha_rho(e: &CondensateEnsemble) -> DMatrix<f64> {
    let rho = DMatrix::from_diagonal(&DVector::from_column_slice(e.rho0()));
    e.alpha_matrix() * rho
}

/// A repeated squared sound speed and the columns of `Q` spanning it.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateBlock {
    pub lambda_sq: f64,
    /// Columns of `q_matrix` (and of the `+lambda` half of `v_matrix`).
    pub columns: Range<usize>,
    /// Condensates sharing `rho0_j (g_j - h) = lambda_sq`; the last one is the
    /// reference used by the closed-form basis.
    pub members: Vec<usize>,
}

/// Eigendecomposition `A V = V diag(Lambda, -Lambda)` with its dual basis.
#[derive(Clone, Debug)]
pub struct SpectralStructure {
    pub lambda_sq: Vec<f64>,
    pub q_matrix: DMatrix<f64>,
    pub v_matrix: DMatrix<f64>,
    pub v_inv_t: DMatrix<f64>,
    /// `L = Q^T rho Q`.
    pub l_gram: DMatrix<f64>,
    pub degenerate: Vec<DegenerateBlock>,
    pub condition_number: f64,
}

impl SpectralStructure {
    pub fn n(&self) -> usize {
        self.lambda_sq.len()
    }

    pub fn is_ill_conditioned(&self) -> bool {
        !(self.condition_number <= CONDITION_WARNING)
    }

    /// `diag(Lambda, -Lambda)`.
    pub fn signed_speeds(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(2 * n, |i, _| {
            let speed = self.lambda_sq[i % n].sqrt();
            if i < n {
                speed
            } else {
                -speed
            }
        })
    }

    /// `max |A V - V diag(Lambda, -Lambda)| / max |A|`.
    pub fn eigen_residual(&self, a: &DMatrix<f64>) -> f64 {
        let lhs = a * &self.v_matrix;
        let rhs = &self.v_matrix * DMatrix::from_diagonal(&self.signed_speeds());
        (lhs - rhs).amax() / a.amax().max(f64::MIN_POSITIVE)
    }

    /// `max |V^T V^-T - I|`.
    pub fn duality_residual(&self) -> f64 {
        let n = self.v_matrix.nrows();
        (self.v_matrix.transpose() * &self.v_inv_t - DMatrix::identity(n, n)).amax()
    }

    /// Multiplicity of `lambda_sq` under the clustering tolerance.
    pub fn multiplicity(&self, lambda_sq: f64) -> usize {
        self.lambda_sq
            .iter()
            .filter(|&&v| clustered(v, lambda_sq))
            .count()
    }
}

fn clustered(a: f64, b: f64) -> bool {
    (a - b).abs() <= CLUSTER_TOLERANCE * a.abs().max(b.abs())
}

/// Groups of condensates sharing `rho0_j (g_j - h)`.
fn degenerate_groups(e: &CondensateEnsemble) -> Vec<(f64, Vec<usize>)> {
    let kappa: Vec<f64> = (0..e.n())
        .map(|j| e.rho0()[j] * (e.g()[j] - e.h()))
        .collect();
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (j, &k) in kappa.iter().enumerate() {
        match groups.iter_mut().find(|(value, _)| clustered(*value, k)) {
            Some((_, members)) => members.push(j),
            None => groups.push((k, vec![j])),
        }
    }
    groups.retain(|(_, members)| members.len() > 1);
    groups
}

/// Full eigenstructure of `A`.
///
/// Inside each degenerate eigenspace the numerical basis is replaced by
/// `q^(k) = (rho0_k / rho0_r) e_r - e_k`, `r` being the last member of the
/// group. These columns come first; the remaining unit-length eigenvectors
/// follow in ascending order of `lambda^2`.
pub fn decompose(e: &CondensateEnsemble) -> Result<SpectralStructure> {
    let n = e.n();
    let rho = e.rho0();
    let alpha = e.alpha_matrix();
    let sym = DMatrix::from_fn(n, n, |i, j| rho[i].sqrt() * alpha[(i, j)] * rho[j].sqrt());
    let eig = SymmetricEigen::new(sym);
    if let Some(&bad) = eig.eigenvalues.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::ComplexEigenvalue { value: bad });
    }

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut lambda_sq = Vec::with_capacity(n);
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for (value, members) in degenerate_groups(e) {
        let reference = *members.last().expect("group has members");
        let start = columns.len();
        for _ in 1..members.len() {
            let pos = remaining
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (eig.eigenvalues[*a.1] - value).abs();
                    let db = (eig.eigenvalues[*b.1] - value).abs();
                    da.total_cmp(&db)
                })
                .map(|(pos, _)| pos)
                .expect("enough eigenvalues remain");
            remaining.remove(pos);
        }
        for &k in &members[..members.len() - 1] {
            let mut q = DVector::zeros(n);
            q[reference] = rho[k] / rho[reference];
            q[k] = -1.0;
            columns.push(q);
            lambda_sq.push(value);
        }
        degenerate.push(DegenerateBlock {
            lambda_sq: value,
            columns: start..columns.len(),
            members,
        });
    }
    remaining.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    for idx in remaining {
        let mut q = DVector::from_fn(n, |i, _| eig.eigenvectors[(i, idx)] / rho[i].sqrt());
        q /= q.norm();
        columns.push(q);
        lambda_sq.push(eig.eigenvalues[idx]);
    }

    let q_matrix = DMatrix::from_columns(&columns);
    let rho_diag = DMatrix::from_diagonal(&DVector::from_column_slice(rho));
    let l_gram = q_matrix.transpose() * &rho_diag * &q_matrix;
    let l_inv = invert_checked(&l_gram)?;
    let sv = l_gram.clone().svd(false, false).singular_values;
    let condition_number = sv.max() / sv.min();

    let speeds: Vec<f64> = lambda_sq.iter().map(|v| v.sqrt()).collect();
    let rho_q = &rho_diag * &q_matrix;
    let q_linv = &q_matrix * &l_inv;
    let mut v_matrix = DMatrix::zeros(2 * n, 2 * n);
    let mut v_inv_t = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        for i in 0..n {
            let top = rho_q[(i, k)] / speeds[k];
            v_matrix[(i, k)] = top;
            v_matrix[(i, n + k)] = -top;
            v_matrix[(n + i, k)] = q_matrix[(i, k)];
            v_matrix[(n + i, n + k)] = q_matrix[(i, k)];

            let top = 0.5 * q_linv[(i, k)] * speeds[k];
            let bottom = 0.5 * rho[i] * q_linv[(i, k)];
            v_inv_t[(i, k)] = top;
            v_inv_t[(i, n + k)] = -top;
            v_inv_t[(n + i, k)] = bottom;
            v_inv_t[(n + i, n + k)] = bottom;
        }
    }

    Ok(SpectralStructure {
        lambda_sq,
        q_matrix,
        v_matrix,
        v_inv_t,
        l_gram,
        degenerate,
        condition_number,
    })
}

/// A mixture whose first `m + 1` condensates share the sound speed
/// `lambda_star`. Condensate `j < m` has density `rho_ref * w_j`, condensate
/// `m` has density `rho_ref`, further condensates are arbitrary extras.
#[derive(Clone, Debug, PartialEq)]
pub struct DegenerateSetup {
    pub lambda_star: f64,
    pub weights: Weights,
    pub rho_ref: f64,
    pub ensemble: CondensateEnsemble,
}

impl DegenerateSetup {
    /// Multiplicity of the repeated eigenvalue.
    pub fn m(&self) -> usize {
        self.weights.m()
    }

    /// Index of the reference condensate.
    pub fn reference(&self) -> usize {
        self.m()
    }

    /// `(1 + sum w)^-1`.
    pub fn symmetric_value(&self) -> f64 {
        1.0 / (1.0 + self.weights.sum())
    }

    /// `max_j |rho0_j (g_j - h) - lambda_star^2| / lambda_star^2` over the
    /// degenerate condensates.
    pub fn degeneracy_defect(&self) -> f64 {
        let target = self.lambda_star * self.lambda_star;
        let e = &self.ensemble;
        (0..=self.m())
            .map(|j| (e.rho0()[j] * (e.g()[j] - e.h()) - target).abs() / target)
            .fold(0.0, f64::max)
    }
}

/// Builds the ensemble with `g_j = h + lambda_star^2 / (rho_ref w_j)`.
///
/// `extras` are `(rho0, g)` pairs appended after the reference condensate.
pub fn degenerate_ensemble(
    lambda_star: f64,
    h: f64,
    w: &Weights,
    rho_ref: f64,
    extras: &[(f64, f64)],
) -> Result<DegenerateSetup> {
    for (name, value) in [("lambda_star", lambda_star), ("h", h), ("rho_ref", rho_ref)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    if let Some((index, &value)) = w.as_slice().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::ZeroWeight { index, value });
    }
    let target = lambda_star * lambda_star;
    let mut rho0: Vec<f64> = w.as_slice().iter().map(|wj| rho_ref * wj).collect();
    let mut g: Vec<f64> = w
        .as_slice()
        .iter()
        .map(|wj| h + target / (rho_ref * wj))
        .collect();
    rho0.push(rho_ref);
    g.push(h + target / rho_ref);
    for &(r, gj) in extras {
        let kappa = r * (gj - h);
        if (kappa - target).abs() <= COLLISION_TOLERANCE * target {
            return Err(Error::DegeneracyCollision {
                index: rho0.len(),
                value: kappa,
            });
        }
        rho0.push(r);
        g.push(gj);
    }
    let ensemble = CondensateEnsemble::new(rho0, g, h)?;
    Ok(DegenerateSetup {
        lambda_star,
        weights: w.clone(),
        rho_ref,
        ensemble,
    })
}

/// `q^(k)_j = w_k` at the reference, `-1` at `j = k`, zero elsewhere.
pub fn degenerate_eigenvectors(d: &DegenerateSetup) -> Vec<DVector<f64>> {
    let n = d.ensemble.n();
    d.weights
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &wk)| {
            let mut q = DVector::zeros(n);
            q[d.reference()] = wk;
            q[k] = -1.0;
            q
        })
        .collect()
}

/// Gram block `rho_ref (w_j w_k + w_j delta_jk)` and its closed-form inverse
/// `(-s + delta_jk / w_j) / rho_ref`.
pub fn ltilde_and_inverse(d: &DegenerateSetup) -> (DMatrix<f64>, DMatrix<f64>) {
    let w = d.weights.as_slice();
    let m = w.len();
    let s = d.symmetric_value();
    let r = d.rho_ref;
    let diag = |j: usize, k: usize| if j == k { 1.0 } else { 0.0 };
    let gram = DMatrix::from_fn(m, m, |j, k| r * (w[j] * w[k] + w[j] * diag(j, k)));
    let inverse = DMatrix::from_fn(m, m, |j, k| (-s + diag(j, k) / w[j]) / r);
    (gram, inverse)
}

/// The degenerate columns of `Q L^-1`:
/// `(s - delta_jk / w_j) / rho_ref` for `j <= m`, zero beyond.
pub fn ql_inverse_columns(d: &DegenerateSetup) -> DMatrix<f64> {
    let n = d.ensemble.n();
    let m = d.m();
    let w = d.weights.as_slice();
    let s = d.symmetric_value();
    DMatrix::from_fn(n, m, |j, k| {
        if j > m {
            0.0
        } else if j == k {
            (s - 1.0 / w[j]) / d.rho_ref
        } else {
            s / d.rho_ref
        }
    })
}

/// Gaps between the closed forms of a degenerate setup and a numerical
/// decomposition of its ensemble. All entries are relative max-norm gaps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormReport {
    /// `|alpha rho q - lambda*^2 q| / |q|` over the closed-form vectors.
    pub eigenvectors: f64,
    pub gram: f64,
    pub gram_inverse: f64,
    pub ql_inverse: f64,
    /// `L~` against `rho_ref (1 + sum w)` times the universal `L`.
    pub scale_bridge: f64,
}

impl ClosedFormReport {
    pub fn max(&self) -> f64 {
        [
            self.eigenvectors,
            self.gram,
            self.gram_inverse,
            self.ql_inverse,
            self.scale_bridge,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn closed_form_report(d: &DegenerateSetup, s: &SpectralStructure) -> Result<ClosedFormReport> {
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(f64::MIN_POSITIVE);
    let target = d.lambda_star * d.lambda_star;
    let block = s
        .degenerate
        .iter()
        .find(|b| (b.lambda_sq - target).abs() <= CLUSTER_TOLERANCE * target)
        .filter(|b| b.columns.len() == d.m())
        .ok_or_else(|| {
            Error::InvalidParameter(format!("no eigenspace of dimension {} at lambda*^2", d.m()))
        })?;
    let cols = block.columns.clone();

    let ar = alpha_rho(&d.ensemble);
    let eigenvectors = degenerate_eigenvectors(d)
        .iter()
        .map(|q| (&ar * q - q * target).amax() / (target * q.amax()))
        .fold(0.0, f64::max);

    let (gram, inverse) = ltilde_and_inverse(d);
    let numeric_gram = s
        .l_gram
        .view((cols.start, cols.start), (cols.len(), cols.len()))
        .into_owned();
    let numeric_inverse = invert_checked(&numeric_gram)?;
    let l_inverse = invert_checked(&s.l_gram)?;
    let numeric_cols = (&s.q_matrix * l_inverse)
        .columns(cols.start, cols.len())
        .into_owned();

    let universal = build_universal(&d.weights, SymmetricPair::equal(d.symmetric_value()))?;
    let factor = d.rho_ref * (1.0 + d.weights.sum());

    Ok(ClosedFormReport {
        eigenvectors,
        gram: rel(&gram, &numeric_gram),
        gram_inverse: rel(&inverse, &numeric_inverse),
        ql_inverse: rel(&ql_inverse_columns(d), &numeric_cols),
        scale_bridge: rel(&gram, &(universal.l_matrix * factor)),
    })
}
