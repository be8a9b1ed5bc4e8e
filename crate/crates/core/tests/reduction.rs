use std::f64::consts::PI;

use mkdv_core::coupling::Weights;
use mkdv_core::eigen::{decompose, degenerate_ensemble, DegenerateSetup};
use mkdv_core::grid::{PeriodicGrid, RealField, Spectral};
use mkdv_core::kdv::IntegratorConfig;
use mkdv_core::mnls::{evolve_mnls, madelung, plane_wave, synthesize};
use mkdv_core::reduction::{
    convergence_study, embed_perturbation, evolve_coupled_kdv_physical,
    evolve_coupled_kdv_standard, extract_f, mode_perturbation, relative_error, zeroth_order_state,
    ReductionExperiment,
};
use mkdv_core::Error;
use num_complex::Complex64;
use proptest::prelude::*;

const SLOW_LENGTH: f64 = 48.0;

fn setup(w: &[f64]) -> DegenerateSetup {
    degenerate_ensemble(1.0, 1.0, &Weights::new(w.to_vec()).unwrap(), 1.0, &[]).unwrap()
}

fn slow_grid() -> PeriodicGrid {
    PeriodicGrid::new(SLOW_LENGTH, 256).unwrap()
}

fn fast_grid(epsilon: f64) -> PeriodicGrid {
    PeriodicGrid::new(SLOW_LENGTH / epsilon, 1024).unwrap()
}

/// Zero-mean, localised: `a (x - c) exp(-(x - c)^2 / 2)`.
fn bump(grid: &PeriodicGrid, a: f64, shift: f64) -> RealField {
    let c = grid.length() / 2.0 + shift;
    grid.sample(|x| a * (x - c) * (-(x - c).powi(2) / 2.0).exp())
}

fn max_over(fields: &[RealField]) -> f64 {
    fields.iter().map(RealField::max_abs).fold(0.0, f64::max)
}

#[test]
fn zero_perturbation_embeds_the_plane_wave() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let zeros = vec![RealField::zeros(g); 3];
    let eps = 0.1;
    let s = embed_perturbation(&d, &zeros, &zeros, eps, fast_grid(eps)).unwrap();
    let uniform = plane_wave(&d.ensemble, &[0.0; 3], 0.0, fast_grid(eps)).unwrap();
    for (a, b) in s.psi.iter().zip(&uniform.psi) {
        assert!(a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| (x - y).norm() < 1e-15));
    }
    let later = evolve_mnls(&s, &d.ensemble, 2.0, 0.05, 0)
        .unwrap()
        .pop()
        .unwrap();
    let exact = plane_wave(&d.ensemble, &[0.0; 3], 2.0, fast_grid(eps)).unwrap();
    for (a, b) in later.psi.iter().zip(&exact.psi) {
        assert!(a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| (x - y).norm() < 1e-10));
    }
}

#[test]
fn velocity_only_perturbation_keeps_moduli() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let eps = 0.1;
    let dv: Vec<RealField> = (0..3).map(|k| bump(&g, 1.0 + k as f64, 0.0)).collect();
    let zeros = vec![RealField::zeros(g); 3];
    let s = embed_perturbation(&d, &zeros, &dv, eps, fast_grid(eps)).unwrap();
    let (_, v) = madelung(&s).unwrap();
    for (k, vk) in v.iter().enumerate() {
        let modulus = d.ensemble.rho0()[k].sqrt();
        assert!(s.psi[k]
            .values()
            .iter()
            .all(|c| (c.norm() - modulus).abs() < 1e-14));
        let exact = fast_grid(eps).sample(|x| {
            let xs = eps * x - SLOW_LENGTH / 2.0;
            eps * eps * (1.0 + k as f64) * xs * (-xs * xs / 2.0).exp()
        });
        assert!(vk.max_diff(&exact) < 1e-10);
    }
}

#[test]
fn madelung_recovers_embedded_fields() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let eps = 0.2;
    let f0 = vec![bump(&g, 1.0, 0.0), bump(&g, -0.7, 1.0)];
    let (dr, dv) = zeroth_order_state(&f0, &d).unwrap();
    let s = embed_perturbation(&d, &dr, &dv, eps, fast_grid(eps)).unwrap();
    let (rho, v) = madelung(&s).unwrap();
    let fine = PeriodicGrid::new(SLOW_LENGTH, 1024).unwrap();
    let sp = Spectral::new(g);
    for k in 0..3 {
        let dr_fine = sp.resample(&dr[k], fine).unwrap();
        let dv_fine = sp.resample(&dv[k], fine).unwrap();
        for i in 0..fine.n() {
            let r = d.ensemble.rho0()[k] + eps * eps * dr_fine.values()[i];
            assert!((rho[k].values()[i] - r).abs() < 1e-9);
            assert!((v[k].values()[i] - eps * eps * dv_fine.values()[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn embedding_preconditions() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let f0 = vec![bump(&g, 40.0, 0.0), bump(&g, 40.0, 0.0)];
    let (dr, dv) = zeroth_order_state(&f0, &d).unwrap();
    assert!(matches!(
        embed_perturbation(&d, &dr, &dv, 0.5, fast_grid(0.5)),
        Err(Error::NegativeDensity { .. })
    ));
    let mut dv_shifted = dv.clone();
    dv_shifted[0] = dv_shifted[0].map(|v| v + 0.1);
    assert!(matches!(
        embed_perturbation(&d, &dr, &dv_shifted, 0.1, fast_grid(0.1)),
        Err(Error::NonzeroMeanVelocity { component: 0, .. })
    ));
    assert!(matches!(
        embed_perturbation(&d, &dr, &dv, 0.1, fast_grid(0.2)),
        Err(Error::InvalidGrid(_))
    ));
}

#[test]
fn extraction_inverts_embedding_at_start() {
    for w in [vec![1.0], vec![1.0, 2.0], vec![1.0, 1.0, 0.5]] {
        let d = setup(&w);
        let g = slow_grid();
        let f0: Vec<RealField> = (0..w.len())
            .map(|j| bump(&g, 1.0 - 0.4 * j as f64, 0.5 * j as f64))
            .collect();
        let eps = 0.1;
        let (dr, dv) = zeroth_order_state(&f0, &d).unwrap();
        let s = embed_perturbation(&d, &dr, &dv, eps, fast_grid(eps)).unwrap();
        let back = extract_f(&s, &d, eps, 0.0, g).unwrap();
        assert!(relative_error(&back, &f0) < 1e-8);
    }
}

#[test]
fn uniform_state_extracts_to_zero() {
    let d = setup(&[1.0, 2.0]);
    let s = plane_wave(&d.ensemble, &[0.0; 3], 0.0, fast_grid(0.1)).unwrap();
    let f = extract_f(&s, &d, 0.1, 0.0, slow_grid()).unwrap();
    assert!(max_over(&f) < 1e-12);
}

#[test]
fn extraction_follows_the_comoving_frame() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let eps = 0.1;
    let t = 37.0;
    let travelled = d.lambda_star * eps * t;
    let f0 = vec![bump(&g, 1.0, 0.0), bump(&g, 0.5, 0.0)];
    let moved = vec![bump(&g, 1.0, travelled), bump(&g, 0.5, travelled)];
    let (dr, dv) = zeroth_order_state(&moved, &d).unwrap();
    let s = embed_perturbation(&d, &dr, &dv, eps, fast_grid(eps)).unwrap();
    let back = extract_f(&s, &d, eps, t, g).unwrap();
    assert!(relative_error(&back, &f0) < 1e-8);
}

#[test]
fn other_branches_are_invisible() {
    let d = degenerate_ensemble(
        1.0,
        1.0,
        &Weights::new(vec![1.0, 2.0]).unwrap(),
        1.0,
        &[(1.0, 3.5)],
    )
    .unwrap();
    let structure = decompose(&d.ensemble).unwrap();
    let g = slow_grid();
    let amplitude = bump(&g, 1.0, 0.0);
    let n = d.ensemble.n();
    let eps = 0.1;
    // Non-degenerate right movers, and every left mover.
    let columns: Vec<usize> = (d.m()..n).chain(n..2 * n).collect();
    for column in columns {
        let (dr, dv) = mode_perturbation(&structure, column, &amplitude);
        let s = embed_perturbation(&d, &dr, &dv, eps, fast_grid(eps)).unwrap();
        let f = extract_f(&s, &d, eps, 0.0, g).unwrap();
        assert!(max_over(&f) < 1e-8 * amplitude.max_abs(), "column {column}");
    }
}

#[test]
fn single_field_reduces_to_linear_dispersion() {
    let d = degenerate_ensemble(0.8, 1.0, &Weights::new(vec![1.0]).unwrap(), 1.0, &[]).unwrap();
    let g = PeriodicGrid::new(24.0, 128).unwrap();
    let f0 = g.sample(|x| (-(x - 12.0).powi(2)).exp() * (1.0 + 0.3 * (x - 12.0)));
    let tau = 0.7;
    let out = evolve_coupled_kdv_physical(
        std::slice::from_ref(&f0),
        &d,
        tau,
        &IntegratorConfig::new(1e-3),
    )
    .unwrap();

    // f_tau = f_xxx / (8 lambda), so mode k gains exp(-i k^3 tau / (8 lambda)).
    let n = g.n() as i64;
    let exact: Vec<f64> = (0..n)
        .map(|j| {
            (-n / 2 + 1..n / 2)
                .map(|k| {
                    let coeff: Complex64 = f0
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
                    let kappa = 2.0 * PI * k as f64 / g.length();
                    coeff
                        * Complex64::from_polar(1.0, -kappa.powi(3) * tau / (8.0 * d.lambda_star))
                        * Complex64::from_polar(1.0, 2.0 * PI * (k * j) as f64 / n as f64)
                })
                .sum::<Complex64>()
                .re
        })
        .collect();
    assert!(out[0].max_diff(&RealField::new(g, exact).unwrap()) < 1e-8);
}

#[test]
fn zero_amplitudes_stay_zero() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let zeros = vec![RealField::zeros(g); 2];
    let out = evolve_coupled_kdv_physical(&zeros, &d, 0.5, &IntegratorConfig::new(1e-2)).unwrap();
    assert_eq!(max_over(&out), 0.0);
}

#[test]
fn zero_amplitudes_have_zero_reduction_error() {
    let d = setup(&[1.0, 2.0]);
    let g = PeriodicGrid::new(16.0, 64).unwrap();
    let mut exp = ReductionExperiment::new(d, 0.2, vec![RealField::zeros(g); 2]).unwrap();
    exp.tau_final = 0.05;
    let table = convergence_study(&exp, &[0.2, 0.1, 0.05]).unwrap();
    assert!(table.iter().all(|p| p.error() < 1e-10));
}

#[test]
fn study_reports_negative_density() {
    let d = setup(&[1.0, 2.0]);
    let g = slow_grid();
    let exp =
        ReductionExperiment::new(d, 0.2, vec![bump(&g, 40.0, 0.0), bump(&g, 40.0, 0.0)]).unwrap();
    assert!(matches!(
        convergence_study(&exp, &[0.5, 0.3, 0.2]),
        Err(Error::NegativeDensity { .. })
    ));
    assert!(convergence_study(&exp, &[0.1, 0.2, 0.05]).is_err());
}

#[test]
fn synthesis_rejects_invalid_hydrodynamic_fields() {
    let g = slow_grid();
    let rho = vec![g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x / SLOW_LENGTH).cos())];
    let still = vec![RealField::zeros(g)];
    assert!(synthesize(&rho, &still, &[0.0], 0.0).is_ok());
    assert!(matches!(
        synthesize(&[rho[0].map(|r| r - 1.2)], &still, &[0.0], 0.0),
        Err(Error::NegativeDensity { .. })
    ));
    assert!(matches!(
        synthesize(&rho, &[g.sample(|_| 0.3)], &[0.0], 0.0),
        Err(Error::NonzeroMeanVelocity { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn physical_and_standard_paths_agree(
        a in -1.0..1.0f64,
        b in -1.0..1.0f64,
        lambda_star in 0.5..1.5f64,
        l0 in 0.7..1.5f64,
        w2 in 0.5..2.5f64,
    ) {
        let d = degenerate_ensemble(lambda_star, 1.0, &Weights::new(vec![1.0, w2]).unwrap(), 1.0, &[])
            .unwrap();
        let g = PeriodicGrid::new(32.0, 128).unwrap();
        let f0 = vec![bump(&g, a, 0.0), bump(&g, b, 0.7)];
        let cfg = IntegratorConfig::new(2e-3);
        let direct = evolve_coupled_kdv_physical(&f0, &d, 0.3, &cfg).unwrap();
        let routed = evolve_coupled_kdv_standard(&f0, &d, 0.3, l0, &cfg).unwrap();
        let gap = direct.iter().zip(&routed).map(|(x, y)| x.max_diff(y)).fold(0.0, f64::max);
        prop_assert!(gap < 1e-9, "gap {gap:e}");
    }
}
