use std::f64::consts::PI;

use mkdv_core::grid::{ComplexField, PeriodicGrid, RealField};
use mkdv_core::mnls::{
    evolve_mnls, madelung, mass, plane_wave, synthesize, CondensateEnsemble, MnlsState,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn mixture() -> CondensateEnsemble {
    CondensateEnsemble::new(vec![1.0, 2.0, 1.0], vec![2.0, 1.5, 2.0], 1.0).unwrap()
}

fn perturbed(e: &CondensateEnsemble, grid: PeriodicGrid, amp: f64) -> MnlsState {
    let l = grid.length();
    let psi = e
        .rho0()
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let values = grid
                .points()
                .map(|x| {
                    let phase = 2.0 * PI * x / l;
                    let modulus = (r * (1.0 + amp * (phase + k as f64).cos())).sqrt();
                    Complex64::from_polar(modulus, amp * (2.0 * phase).sin())
                })
                .collect();
            ComplexField::new(grid, values).unwrap()
        })
        .collect();
    MnlsState::new(psi, 0.0).unwrap()
}

fn max_gap(a: &MnlsState, b: &MnlsState) -> f64 {
    a.psi
        .iter()
        .zip(&b.psi)
        .flat_map(|(x, y)| {
            x.values()
                .iter()
                .zip(y.values())
                .map(|(p, q)| (p - q).norm())
        })
        .fold(0.0, f64::max)
}

#[test]
fn plane_wave_is_reproduced_exactly() {
    let grid = PeriodicGrid::new(2.0 * PI, 32).unwrap();
    let e = mixture();
    let theta = [0.1, -0.4, 2.0];
    let s0 = plane_wave(&e, &theta, 0.0, grid).unwrap();
    let out = evolve_mnls(&s0, &e, 1.0, 0.01, 10).unwrap();
    let rates = e.chemical_potentials();
    for s in &out {
        for (k, p) in s.psi.iter().enumerate() {
            let modulus = e.rho0()[k].sqrt();
            for c in p.values() {
                assert!((c.norm() - modulus).abs() < 1e-10);
                let expected = Complex64::from_polar(1.0, theta[k] - rates[k] * s.time);
                assert!((c / c.norm() - expected).norm() < 1e-8);
            }
        }
    }
    assert!(
        max_gap(
            out.last().unwrap(),
            &plane_wave(&e, &theta, 1.0, grid).unwrap()
        ) < 1e-8
    );
}

#[test]
fn mass_is_conserved_per_component() {
    let grid = PeriodicGrid::new(20.0, 128).unwrap();
    let e = mixture();
    let s0 = perturbed(&e, grid, 0.2);
    let m0 = mass(&s0);
    let out = evolve_mnls(&s0, &e, 1.0, 0.01, 0).unwrap();
    for (a, b) in mass(out.last().unwrap()).iter().zip(&m0) {
        assert!((a - b).abs() / b < 1e-10);
    }
}

#[test]
fn splitting_is_second_order() {
    let grid = PeriodicGrid::new(8.0 * PI, 32).unwrap();
    let e = mixture();
    let s0 = perturbed(&e, grid, 0.1);
    let run = |dt: f64| evolve_mnls(&s0, &e, 1.0, dt, 0).unwrap().pop().unwrap();
    let (a, b, c) = (run(0.1), run(0.05), run(0.025));
    let order = (max_gap(&a, &b) / max_gap(&b, &c)).log2();
    assert!(order >= 1.8, "observed order {order}");
}

#[test]
fn blow_up_is_reported() {
    let grid = PeriodicGrid::new(10.0, 16).unwrap();
    let e = CondensateEnsemble::new(vec![1.0], vec![1.0], 0.5).unwrap();
    let mut s0 = plane_wave(&e, &[0.0], 0.0, grid).unwrap();
    s0.psi[0].values_mut()[3] = Complex64::new(f64::NAN, 0.0);
    assert!(matches!(
        evolve_mnls(&s0, &e, 0.1, 0.01, 0),
        Err(mkdv_core::Error::BlowUp { .. })
    ));
}

fn profile(amp: f64) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-amp..amp, -amp..amp), 4)
}

fn wave(grid: &PeriodicGrid, modes: &[(f64, f64)], offset: f64) -> RealField {
    let l = grid.length();
    grid.sample(|x| {
        offset
            + modes
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let arg = 2.0 * PI * (k + 1) as f64 * x / l;
                    a * arg.cos() + b * arg.sin()
                })
                .sum::<f64>()
    })
}

proptest! {
    #[test]
    fn synthesis_then_madelung_is_identity(
        density in profile(0.1),
        velocity in profile(0.3),
        background in 1.0..3.0f64,
        phase0 in -3.0..3.0f64,
    ) {
        let grid = PeriodicGrid::new(10.0, 128).unwrap();
        let rho = wave(&grid, &density, background);
        let v = wave(&grid, &velocity, 0.0);
        let s = synthesize(std::slice::from_ref(&rho), std::slice::from_ref(&v), &[phase0], 0.0).unwrap();
        prop_assert!((s.psi[0].values()[0].arg() - phase0).abs() < 1e-12);
        let (r, u) = madelung(&s).unwrap();
        prop_assert!(r[0].max_diff(&rho) < 1e-10);
        prop_assert!(u[0].max_diff(&v) < 1e-10);
    }
}
