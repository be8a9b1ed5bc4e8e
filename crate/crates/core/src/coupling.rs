//! Universal all-to-all coupling tensors.
//!
//! A coupled KdV system with quadratic momentum density `1/2 u^T L u` and
//! cubic potential `sum R_ijk u_i u_j u_k`, written in the standard form
//!
//! ```text
//! d_t u_j + 6 u_j d_x u_j + d_x^3 u_j = 3 d_x sum_ln N_ln u_l u_n,
//! ```
//!
//! is fixed (up to an overall scale of `L` and `R`) by `m` non-zero weights
//! `w` and two symmetric scalars `s1`, `s2`:
//!
//! ```text
//! N_pq  = s1 w_p w_q + s2 w_q delta_pq
//! L_ij  = s2 w_i w_j + (1 - s2 sum w) w_j delta_ij
//! R_pqj = s1 w_p w_q w_j - (1 - s2 sum w) w_j delta_pq delta_qj
//! ```

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative tolerance used for rank and degeneracy decisions.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Weights smaller than this in magnitude are treated as zero.
pub const MIN_WEIGHT: f64 = 1e-14;

/// Non-zero weights `w_1..w_m`; column sums of `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one weight is required".into(),
            ));
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value.abs() < MIN_WEIGHT {
                return Err(Error::ZeroWeight { index, value });
            }
        }
        Ok(Self(values))
    }

    /// Skips validation; zero weights are allowed.
    pub fn new_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn m(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// The two symmetric scalars `s1(w)`, `s2(w)`, already evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymmetricPair {
    pub s1: f64,
    pub s2: f64,
}

impl SymmetricPair {
    pub fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2 }
    }

    /// `s1 = s2 = s`.
    pub fn equal(s: f64) -> Self {
        Self { s1: s, s2: s }
    }
}

/// Dense, fully general `m x m x m` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    m: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; m * m * m],
        }
    }

    pub fn from_fn(m: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.m + j) * self.m + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.data[(i * self.m + j) * self.m + k] = value;
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: self.m,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest deviation from invariance under index permutations.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.m;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let v = self.get(i, j, k);
                    for w in [
                        self.get(i, k, j),
                        self.get(j, i, k),
                        self.get(j, k, i),
                        self.get(k, i, j),
                        self.get(k, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }
}

/// One coupled KdV system: its generating data and the tensors `N`, `L`, `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSet {
    pub weights: Weights,
    pub n_tensor: DMatrix<f64>,
    pub l_matrix: DMatrix<f64>,
    pub r_tensor: Tensor3,
    pub s_pair: SymmetricPair,
}

impl CouplingSet {
    /// Assembles a coupling set from arbitrary tensors without validation.
    pub fn from_parts(
        weights: Weights,
        n_tensor: DMatrix<f64>,
        l_matrix: DMatrix<f64>,
        r_tensor: Tensor3,
        s_pair: SymmetricPair,
    ) -> Result<Self> {
        let m = weights.m();
        for found in [
            n_tensor.nrows(),
            n_tensor.ncols(),
            l_matrix.nrows(),
            l_matrix.ncols(),
            r_tensor.m(),
        ] {
            if found != m {
                return Err(Error::DimensionMismatch { expected: m, found });
            }
        }
        Ok(Self {
            weights,
            n_tensor,
            l_matrix,
            r_tensor,
            s_pair,
        })
    }

    pub fn m(&self) -> usize {
        self.weights.m()
    }

    /// Scalar KdV `d_t u + c u d_x u + d_x^3 u = 0` expressed as a one-field
    /// standard-form system (`N = (6 - c)/6`, `L = 1`, `R = -c/6`).
    pub fn scalar_kdv(nonlinear_coefficient: f64) -> Self {
        let c = nonlinear_coefficient;
        Self {
            weights: Weights::new_unchecked(vec![1.0]),
            n_tensor: DMatrix::from_element(1, 1, (6.0 - c) / 6.0),
            l_matrix: DMatrix::from_element(1, 1, 1.0),
            r_tensor: Tensor3::from_fn(1, |_, _, _| -c / 6.0),
            s_pair: SymmetricPair::equal(f64::NAN),
        }
    }
}

/// `s = (1 + sum w)^-1`, the value both symmetric scalars take for the
/// system obtained from a condensate mixture.
pub fn mnls_symmetric_value(w: &Weights) -> Result<f64> {
    let denom = 1.0 + w.sum();
    if denom.abs() < RANK_TOLERANCE {
        return Err(Error::InvalidParameter("1 + sum(w) vanishes".into()));
    }
    Ok(1.0 / denom)
}

/// Builds `N`, `L`, `R` from weights and the symmetric scalars.
pub fn build_universal(w: &Weights, s: SymmetricPair) -> Result<CouplingSet> {
    for (index, &value) in w.as_slice().iter().enumerate() {
        if !value.is_finite() || value.abs() < MIN_WEIGHT {
            return Err(Error::ZeroWeight { index, value });
        }
    }
    let sum = w.sum();
    let diag = 1.0 - s.s2 * sum;
    if diag.abs() < RANK_TOLERANCE {
        return Err(Error::DegenerateScale {
            s2: s.s2,
            inverse_sum: 1.0 / sum,
        });
    }
    Ok(universal_tensors(w.clone(), s))
}

/// The universal formulas without any admissibility check.
pub fn universal_tensors(w: Weights, s: SymmetricPair) -> CouplingSet {
    let m = w.m();
    let wv = w.as_slice();
    let diag = 1.0 - s.s2 * w.sum();
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let n_tensor = DMatrix::from_fn(m, m, |p, q| {
        s.s1 * wv[q] * wv[p] + s.s2 * wv[q] * delta(p, q)
    });
    let l_matrix = DMatrix::from_fn(m, m, |i, j| {
        s.s2 * wv[i] * wv[j] + diag * wv[j] * delta(i, j)
    });
    let r_tensor = Tensor3::from_fn(m, |p, q, j| {
        s.s1 * wv[p] * wv[q] * wv[j] - diag * wv[j] * delta(p, q) * delta(q, j)
    });
    CouplingSet {
        weights: w,
        n_tensor,
        l_matrix,
        r_tensor,
        s_pair: s,
    }
}

/// Inverts `L`, refusing when its numerical rank is below `m`.
pub fn invert_l(c: &CouplingSet) -> Result<DMatrix<f64>> {
    invert_checked(&c.l_matrix)
}

pub(crate) fn invert_checked(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = a.clone().svd(false, false).singular_values;
    let largest = sv.max();
    let smallest = sv.min();
    let ratio = if largest > 0.0 {
        smallest / largest
    } else {
        0.0
    };
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::SingularL { ratio });
    }
    let inv = a.clone().try_inverse().ok_or(Error::SingularL { ratio })?;
    // One Newton step X + X (I - A X) with an accurately formed residual.
    let n = a.nrows();
    let residual = DMatrix::from_fn(n, n, |i, j| {
        let identity = if i == j { 1.0 } else { 0.0 };
        dot2(
            (0..n)
                .map(|k| (-a[(i, k)], inv[(k, j)]))
                .chain([(identity, 1.0)]),
        )
    });
    Ok(&inv + &inv * residual)
}

/// Dot product evaluated as if in twice the working precision
/// (error-free transformations of each product and sum).
pub(crate) fn dot2(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut err) = (0.0_f64, 0.0_f64);
    for (x, y) in pairs {
        let p = x * y;
        let p_err = x.mul_add(y, -p);
        let t = sum + p;
        let z = t - sum;
        err += (sum - (t - z)) + (p - z) + p_err;
        sum = t;
    }
    sum + err
}

/// Number of singular values of `a` below `RANK_TOLERANCE` times the largest.
pub fn null_space_dimension(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let largest = sv.max();
    sv.iter()
        .filter(|&&s| s <= RANK_TOLERANCE * largest)
        .count()
}

/// Max-norm residuals of the algebraic identities a coupling set must obey.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualReport {
    /// `delta_pj delta_qj + sum_k Linv_kj R_pqk - N_pq`; `None` if `L` is singular.
    pub l_inverse_relation: Option<f64>,
    /// `R_pqj - N_pq sum_i L_ij + L_pj delta_pq`.
    pub linear_relation: f64,
    /// Symmetry of `N`, `L` and `R`.
    pub symmetry: f64,
    /// `sum_i L_ij - w_j`.
    pub column_sums: f64,
}

impl ResidualReport {
    pub fn l_singular(&self) -> bool {
        self.l_inverse_relation.is_none()
    }

    /// Largest residual; infinite when `L` could not be inverted.
    pub fn max(&self) -> f64 {
        self.l_inverse_relation
            .unwrap_or(f64::INFINITY)
            .max(self.linear_relation)
            .max(self.symmetry)
            .max(self.column_sums)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() < tol
    }
}

pub fn verify_consistency(c: &CouplingSet) -> ResidualReport {
    let m = c.m();
    let n = &c.n_tensor;
    let l = &c.l_matrix;
    let r = &c.r_tensor;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };

    let l_inverse_relation = invert_l(c).ok().map(|linv| {
        let mut worst: f64 = 0.0;
        for p in 0..m {
            for q in 0..m {
                for j in 0..m {
                    let res = dot2(
                        (0..m)
                            .map(|k| (linv[(k, j)], r.get(p, q, k)))
                            .chain([(delta(p, j) * delta(q, j), 1.0), (-n[(p, q)], 1.0)]),
                    );
                    worst = worst.max(res.abs());
                }
            }
        }
        worst
    });

    let col_sums: Vec<f64> = (0..m).map(|j| l.column(j).sum()).collect();
    let mut linear_relation: f64 = 0.0;
    for p in 0..m {
        for q in 0..m {
            for j in 0..m {
                let res = r.get(p, q, j) - n[(p, q)] * col_sums[j] + l[(p, j)] * delta(p, q);
                linear_relation = linear_relation.max(res.abs());
            }
        }
    }

    let symmetry = (n - n.transpose())
        .amax()
        .max((l - l.transpose()).amax())
        .max(r.symmetry_defect());

    let column_sums = col_sums
        .iter()
        .zip(c.weights.as_slice())
        .fold(0.0_f64, |acc, (s, w)| acc.max((s - w).abs()));

    ResidualReport {
        l_inverse_relation,
        linear_relation,
        symmetry,
        column_sums,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> Weights {
        Weights::new(v.to_vec()).unwrap()
    }

    fn close(a: &DMatrix<f64>, b: &[f64], tol: f64) -> bool {
        let b = DMatrix::from_row_slice(a.nrows(), a.ncols(), b);
        (a - b).amax() <= tol
    }

    #[test]
    fn equal_weights_collapse() {
        let c = build_universal(&w(&[1.0, 1.0]), SymmetricPair::equal(1.0 / 3.0)).unwrap();
        let expected = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        assert!(close(&c.n_tensor, &expected, 1e-15));
        assert!(close(&c.l_matrix, &expected, 1e-15));
        for p in 0..2 {
            for q in 0..2 {
                for j in 0..2 {
                    let diag = if p == q && q == j { 1.0 / 3.0 } else { 0.0 };
                    assert!((c.r_tensor.get(p, q, j) - (1.0 / 3.0 - diag)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn weights_one_two_quarter() {
        let c = build_universal(&w(&[1.0, 2.0]), SymmetricPair::equal(0.25)).unwrap();
        let expected = [0.5, 0.5, 0.5, 1.5];
        assert!(close(&c.n_tensor, &expected, 1e-15));
        assert!(close(&c.l_matrix, &expected, 1e-15));
        let r = &c.r_tensor;
        assert!(r.get(0, 0, 0).abs() < 1e-15);
        assert!((r.get(0, 0, 1) - 0.5).abs() < 1e-15);
        assert!((r.get(0, 1, 1) - 1.0).abs() < 1e-15);
        assert!((r.get(1, 1, 1) - 1.5).abs() < 1e-15);
        assert!(verify_consistency(&c).passes(1e-12));
    }

    #[test]
    fn degenerate_scale_rejected() {
        let err = build_universal(&w(&[1.0, 1.0]), SymmetricPair::new(0.3, 0.5)).unwrap_err();
        assert!(matches!(err, Error::DegenerateScale { .. }));
    }

    #[test]
    fn zero_weight_rejected() {
        assert!(matches!(
            Weights::new(vec![1.0, 0.0]),
            Err(Error::ZeroWeight { index: 1, .. })
        ));
        let unchecked = Weights::new_unchecked(vec![1.0, 1e-16]);
        assert!(matches!(
            build_universal(&unchecked, SymmetricPair::equal(0.1)),
            Err(Error::ZeroWeight { index: 1, .. })
        ));
    }

    #[test]
    fn symmetric_value_examples() {
        assert!((mnls_symmetric_value(&w(&[1.0, 1.0])).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!((mnls_symmetric_value(&w(&[1.0, 2.0])).unwrap() - 0.25).abs() < 1e-16);
        assert!((mnls_symmetric_value(&w(&[1.0])).unwrap() - 0.5).abs() < 1e-16);
        assert!(mnls_symmetric_value(&w(&[-1.0])).is_err());
    }

    #[test]
    fn perturbed_r_shows_in_linear_residual() {
        let mut c = build_universal(&w(&[1.0, 2.0]), SymmetricPair::equal(0.25)).unwrap();
        let v = c.r_tensor.get(0, 0, 0);
        c.r_tensor.set(0, 0, 0, v + 1.0);
        let report = verify_consistency(&c);
        assert!((report.linear_relation - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_case() {
        let c = build_universal(&w(&[1.0]), SymmetricPair::equal(0.5)).unwrap();
        assert!(verify_consistency(&c).passes(1e-12));
        assert!((c.n_tensor[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((c.l_matrix[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(c.r_tensor.get(0, 0, 0).abs() < 1e-15);
    }

    #[test]
    fn invert_examples() {
        let c = build_universal(&w(&[1.0, 1.0]), SymmetricPair::equal(1.0 / 3.0)).unwrap();
        let inv = invert_l(&c).unwrap();
        assert!(close(&inv, &[2.0, -1.0, -1.0, 2.0], 1e-13));

        let mut ident = c.clone();
        ident.l_matrix = DMatrix::identity(2, 2);
        assert!(close(
            &invert_l(&ident).unwrap(),
            &[1.0, 0.0, 0.0, 1.0],
            0.0
        ));

        let rank_one = universal_tensors(w(&[1.0, 1.0]), SymmetricPair::new(0.5, 0.5));
        assert!(close(&rank_one.l_matrix, &[0.5, 0.5, 0.5, 0.5], 1e-16));
        assert!(matches!(invert_l(&rank_one), Err(Error::SingularL { .. })));
        let report = verify_consistency(&rank_one);
        assert!(report.l_singular());
        assert!(!report.passes(1e-12));
    }

    #[test]
    fn null_space_counts_zero_weights() {
        let weights = Weights::new_unchecked(vec![1.0, 0.0, 2.0, 0.0, -0.5]);
        let c = universal_tensors(weights, SymmetricPair::new(0.3, 0.2));
        assert_eq!(null_space_dimension(&c.l_matrix), 2);
    }

    #[test]
    fn scalar_kdv_helper_is_consistent() {
        let c = CouplingSet::scalar_kdv(-12.0);
        let report = verify_consistency(&c);
        assert!(report.l_inverse_relation.unwrap() < 1e-15);
    }
}
