use std::f64::consts::PI;

use mkdv_core::coupling::{
    build_universal, mnls_symmetric_value, CouplingSet, SymmetricPair, Weights,
};
use mkdv_core::grid::{PeriodicGrid, RealField, Spectral};
use mkdv_core::kdv::{
    evolve, hamiltonian, momentum, periodic_soliton, rhs_hamiltonian_form, rhs_standard,
    IntegratorConfig, MkdvState,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn mnls_coupling(w: &[f64]) -> CouplingSet {
    let w = Weights::new(w.to_vec()).unwrap();
    let s = mnls_symmetric_value(&w).unwrap();
    build_universal(&w, SymmetricPair::equal(s)).unwrap()
}

fn max_over(fields: &[RealField]) -> f64 {
    fields.iter().map(RealField::max_abs).fold(0.0, f64::max)
}

fn max_gap(a: &[RealField], b: &[RealField]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.max_diff(y))
        .fold(0.0, f64::max)
}

#[test]
fn soliton_is_a_travelling_wave_of_the_scalar_equation() {
    let grid = PeriodicGrid::new(40.0, 512).unwrap();
    let u = periodic_soliton(&grid, 1.0, 10.0);
    let rhs = rhs_standard(
        &MkdvState::new(vec![u.clone()], 0.0).unwrap(),
        &CouplingSet::scalar_kdv(6.0),
    )
    .unwrap();
    let translation = Spectral::new(grid).derivative(&u, 1).scaled(-4.0);
    assert!(rhs[0].max_diff(&translation) < 1e-10);
}

#[test]
fn soliton_translates_at_speed_four() {
    let grid = PeriodicGrid::new(40.0, 512).unwrap();
    let s0 = MkdvState::new(vec![periodic_soliton(&grid, 1.0, 10.0)], 0.0).unwrap();
    let out = evolve(
        &s0,
        &CouplingSet::scalar_kdv(6.0),
        1.0,
        &IntegratorConfig::new(1e-4),
    )
    .unwrap();
    let last = out.last().unwrap();
    assert!((last.time - 1.0).abs() <= 0.5e-4);
    let exact = periodic_soliton(&grid, 1.0, 14.0);
    assert!(last.fields[0].max_diff(&exact) < 1e-5);
}

#[test]
fn vanishing_nonlinearity_gives_airy_propagation() {
    let grid = PeriodicGrid::new(20.0, 256).unwrap();
    let c = mnls_coupling(&[1.0]);
    let u0 = grid.sample(|x| (-(x - 10.0).powi(2)).exp() * (1.0 + 0.5 * (x - 10.0)));
    let t = 1.0;
    let out = evolve(
        &MkdvState::new(vec![u0.clone()], 0.0).unwrap(),
        &c,
        t,
        &IntegratorConfig::new(1e-3),
    )
    .unwrap();

    // d_t u = -d_x^3 u, so mode k picks up exp(i k^3 t). Plain DFT oracle.
    let n = grid.n();
    let l = grid.length();
    let exact: Vec<f64> = (0..n)
        .map(|j| {
            (-(n as i64) / 2 + 1..(n as i64) / 2)
                .map(|k| {
                    let coeff: Complex64 = u0
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(i, v)| {
                            v * Complex64::from_polar(
                                1.0,
                                -2.0 * PI * (k * i as i64) as f64 / n as f64,
                            )
                        })
                        .sum::<Complex64>()
                        / n as f64;
                    let kappa = 2.0 * PI * k as f64 / l;
                    coeff
                        * Complex64::from_polar(1.0, kappa.powi(3) * t)
                        * Complex64::from_polar(1.0, 2.0 * PI * (k * j as i64) as f64 / n as f64)
                })
                .sum::<Complex64>()
                .re
        })
        .collect();
    let exact = RealField::new(grid, exact).unwrap();
    assert!(out.last().unwrap().fields[0].max_diff(&exact) < 1e-8);
}

#[test]
fn momentum_and_hamiltonian_are_conserved() {
    let grid = PeriodicGrid::new(40.0, 256).unwrap();
    let c = mnls_coupling(&[1.0, 2.0]);
    let s0 = MkdvState::new(
        vec![
            grid.sample(|x| 0.6 * (-(x - 18.0).powi(2) / 3.0).exp()),
            grid.sample(|x| -0.4 * (-(x - 22.0).powi(2) / 2.0).exp()),
        ],
        0.0,
    )
    .unwrap();
    let out = evolve(&s0, &c, 0.5, &IntegratorConfig::new(5e-4).with_stride(100)).unwrap();
    let (p0, h0) = (momentum(&s0, &c).unwrap(), hamiltonian(&s0, &c).unwrap());
    for s in &out {
        let p = momentum(s, &c).unwrap();
        let h = hamiltonian(s, &c).unwrap();
        assert!(
            (p - p0).abs() / p0.abs() < 1e-8,
            "P drift at t = {}",
            s.time
        );
        assert!(
            (h - h0).abs() / h0.abs().max(1.0) < 1e-8,
            "H drift at t = {}",
            s.time
        );
    }
}

#[test]
fn equal_weights_and_identical_fields_follow_the_scalar_equation() {
    let grid = PeriodicGrid::new(30.0, 128).unwrap();
    let c = mnls_coupling(&[1.0, 1.0, 1.0]);
    let u0 = grid.sample(|x| 0.3 * (-(x - 15.0).powi(2) / 4.0).exp());
    let cfg = IntegratorConfig::new(1e-3);
    let out = evolve(
        &MkdvState::new(vec![u0.clone(); 3], 0.0).unwrap(),
        &c,
        0.5,
        &cfg,
    )
    .unwrap();
    let scalar = evolve(
        &MkdvState::new(vec![u0], 0.0).unwrap(),
        &CouplingSet::scalar_kdv(-12.0),
        0.5,
        &cfg,
    )
    .unwrap();
    let fields = &out.last().unwrap().fields;
    assert!(fields[0].max_diff(&fields[1]) < 1e-10 && fields[1].max_diff(&fields[2]) < 1e-10);
    assert!(fields[0].max_diff(&scalar.last().unwrap().fields[0]) < 1e-8);
}

fn random_state() -> impl Strategy<Value = Vec<Vec<(f64, f64)>>> {
    prop::collection::vec(
        prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 6),
        1..=5,
    )
}

fn smooth_fields(grid: &PeriodicGrid, amplitudes: &[Vec<(f64, f64)>]) -> Vec<RealField> {
    let l = grid.length();
    amplitudes
        .iter()
        .map(|modes| {
            grid.sample(|x| {
                modes
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let arg = 2.0 * PI * (k + 1) as f64 * x / l;
                        (a * arg.cos() + b * arg.sin()) / (k + 1) as f64
                    })
                    .sum()
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn hamiltonian_and_standard_forms_agree(
        amplitudes in random_state(),
        w in prop::collection::vec(prop_oneof![-3.0..-0.2f64, 0.2..3.0f64], 5),
        s1 in -2.0..2.0f64,
        s2 in -2.0..2.0f64,
    ) {
        let m = amplitudes.len();
        let w = w[..m].to_vec();
        prop_assume!((1.0 - s2 * w.iter().sum::<f64>()).abs() > 0.25);
        let c = build_universal(&Weights::new(w).unwrap(), SymmetricPair::new(s1, s2)).unwrap();
        let grid = PeriodicGrid::new(10.0, 64).unwrap();
        let s = MkdvState::new(smooth_fields(&grid, &amplitudes), 0.0).unwrap();
        let a = rhs_standard(&s, &c).unwrap();
        let b = rhs_hamiltonian_form(&s, &c).unwrap();
        prop_assert!(max_gap(&a, &b) <= 1e-10 * max_over(&a));
    }

    #[test]
    fn identical_fields_stay_identical(
        m in 2usize..=4,
        w in 0.2..2.0f64,
        amp in 0.05..0.5f64,
    ) {
        let c = mnls_coupling(&vec![w; m]);
        let grid = PeriodicGrid::new(30.0, 64).unwrap();
        let u0 = grid.sample(|x| amp * (-(x - 15.0).powi(2) / 6.0).exp());
        let cfg = IntegratorConfig::new(2e-3);
        let out = evolve(&MkdvState::new(vec![u0.clone(); m], 0.0).unwrap(), &c, 0.2, &cfg).unwrap();
        let scalar = evolve(
            &MkdvState::new(vec![u0], 0.0).unwrap(),
            &CouplingSet::scalar_kdv(6.0 * (1.0 - m as f64 * w)),
            0.2,
            &cfg,
        )
        .unwrap();
        let fields = &out.last().unwrap().fields;
        for f in &fields[1..] {
            prop_assert!(f.max_diff(&fields[0]) < 1e-10);
        }
        prop_assert!(fields[0].max_diff(&scalar.last().unwrap().fields[0]) < 1e-8);
    }
}
