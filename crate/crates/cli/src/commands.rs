use mkdv_core::coupling::{
    build_universal, mnls_symmetric_value, verify_consistency, CouplingSet, SymmetricPair, Weights,
};
use mkdv_core::eigen::{closed_form_report, decompose};
use mkdv_core::grid::PeriodicGrid;
use mkdv_core::kdv::{evolve, hamiltonian, momentum, IntegratorConfig, MkdvState};
use mkdv_core::mnls::{evolve_mnls, mass, plane_wave};
use mkdv_core::reduction::{
    convergence_study, embed_perturbation, strictly_decreasing, zeroth_order_state,
    ReductionExperiment,
};

use crate::config::{CouplingSection, RunConfig};
use crate::output::{header, number, numbered, resolve_output_dir, write_csv, Artifacts};
use crate::CliError;

pub const COUPLING_TOLERANCE: f64 = 1e-12;
pub const EIGEN_TOLERANCE: f64 = 1e-10;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-12;

fn coupling_from(section: &CouplingSection) -> Result<CouplingSet, CliError> {
    let w = Weights::new(section.weights.clone())?;
    let pair = match (section.s1, section.s2) {
        (Some(s1), Some(s2)) => SymmetricPair::new(s1, s2),
        _ => SymmetricPair::equal(mnls_symmetric_value(&w)?),
    };
    Ok(build_universal(&w, pair)?)
}

fn artifacts(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    Artifacts::create(resolve_output_dir(&cfg.output.directory))
}

fn columns(first: &str, stem: &str, m: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=m).map(|j| format!("{stem}{j}")))
        .collect()
}

fn relative_drift(values: &[f64]) -> f64 {
    let v0 = values[0];
    let scale = if v0 == 0.0 { 1.0 } else { v0.abs() };
    values
        .iter()
        .map(|v| (v - v0).abs() / scale)
        .fold(0.0, f64::max)
}

fn print_records(head: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    write_csv(std::io::stdout().lock(), head, rows.iter().cloned())
        .map_err(|e| CliError::io(std::path::Path::new("<stdout>"), e))
}

pub fn coupling_check(weights: Vec<f64>, s1: Option<f64>, s2: Option<f64>) -> Result<(), CliError> {
    let c = coupling_from(&CouplingSection {
        weights,
        s1,
        s2,
        mnls: s1.is_none(),
    })?;
    let report = verify_consistency(&c);
    let m = c.m();
    let mut rows = Vec::new();
    for (name, mat) in [("N", &c.n_tensor), ("L", &c.l_matrix)] {
        for p in 0..m {
            for q in 0..m {
                rows.push(vec![name.into(), format!("{p}:{q}"), number(mat[(p, q)])]);
            }
        }
    }
    for p in 0..m {
        for q in 0..m {
            for j in 0..m {
                rows.push(vec![
                    "R".into(),
                    format!("{p}:{q}:{j}"),
                    number(c.r_tensor.get(p, q, j)),
                ]);
            }
        }
    }
    let residuals = [
        (
            "l_inverse_relation",
            report.l_inverse_relation.unwrap_or(f64::INFINITY),
        ),
        ("linear_relation", report.linear_relation),
        ("symmetry", report.symmetry),
        ("column_sums", report.column_sums),
    ];
    for (name, v) in residuals {
        rows.push(vec!["residual".into(), name.into(), number(v)]);
    }
    let head = header(["tensor", "index", "value"]);
    print_records(&head, &rows)?;
    let out = Artifacts::create(resolve_output_dir(std::path::Path::new("mkdv-output")))?;
    out.write_records("tensors.csv", &head, rows)?;
    if report.passes(COUPLING_TOLERANCE) {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "largest residual {:e} exceeds {COUPLING_TOLERANCE:e}",
            report.max()
        )))
    }
}

pub fn kdv_run(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid();
    let coupling = coupling_from(cfg.coupling.as_ref().expect("validated"))?;
    let fields = cfg.sample_initial(&grid).map_err(CliError::Input)?;
    let s0 = MkdvState::new(fields, 0.0)?;
    let int = &cfg.integrate;
    let mut integrator =
        IntegratorConfig::new(int.dt.expect("defaulted")).with_stride(int.snapshot_stride);
    integrator.dealias = int.dealias;
    let guideline = integrator.stability_number(&grid);
    let snapshots = evolve(&s0, &coupling, int.t_final.expect("validated"), &integrator)?;

    let out = artifacts(cfg)?;
    let head = columns("x", "u", coupling.m());
    let (mut times, mut p, mut h) = (Vec::new(), Vec::new(), Vec::new());
    for (k, s) in snapshots.iter().enumerate() {
        let rows = (0..grid.n()).map(|i| {
            std::iter::once(grid.point(i))
                .chain(s.fields.iter().map(|f| f.values()[i]))
                .collect()
        });
        out.write_table(&numbered("fields", k), &head, rows)?;
        times.push(s.time);
        p.push(momentum(s, &coupling)?);
        h.push(hamiltonian(s, &coupling)?);
    }
    let rows = (0..times.len()).map(|k| vec![times[k], p[k], h[k]]);
    out.write_table("invariants.csv", &header(["t", "P", "H"]), rows)?;
    println!("dt = {} (stability number {guideline:.3})", integrator.dt);
    println!(
        "{} snapshots written to {}",
        snapshots.len(),
        out.dir().display()
    );
    println!(
        "relative drift: P {:.3e}, H {:.3e}",
        relative_drift(&p),
        relative_drift(&h)
    );
    Ok(())
}

pub fn mnls_run(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid();
    let e = cfg.ensemble();
    let s0 = match (&cfg.perturbation, &cfg.degenerate) {
        (Some(p), Some(d)) => {
            let setup = d.setup()?;
            let slow = PeriodicGrid::new(grid.length() * p.epsilon, grid.n())?;
            let f0 = cfg.sample_initial(&slow).map_err(CliError::Input)?;
            let (delta_rho, delta_v) = zeroth_order_state(&f0, &setup)?;
            embed_perturbation(&setup, &delta_rho, &delta_v, p.epsilon, grid)?
        }
        _ => {
            let phases = cfg
                .plane_wave
                .as_ref()
                .map_or_else(|| vec![0.0; e.n()], |p| p.phases.clone());
            plane_wave(&e, &phases, 0.0, grid)?
        }
    };
    let int = &cfg.integrate;
    let dt = int.dt.expect("defaulted");
    let snapshots = evolve_mnls(
        &s0,
        &e,
        int.t_final.expect("validated"),
        dt,
        int.snapshot_stride,
    )?;

    let out = artifacts(cfg)?;
    let mut head = vec!["x".to_string()];
    for j in 1..=e.n() {
        head.push(format!("re_psi{j}"));
        head.push(format!("im_psi{j}"));
    }
    let mut masses = Vec::new();
    for (k, s) in snapshots.iter().enumerate() {
        let rows = (0..grid.n()).map(|i| {
            let mut row = vec![grid.point(i)];
            for psi in &s.psi {
                row.push(psi.values()[i].re);
                row.push(psi.values()[i].im);
            }
            row
        });
        out.write_table(&numbered("psi", k), &head, rows)?;
        masses.push(std::iter::once(s.time).chain(mass(s)).collect::<Vec<f64>>());
    }
    let drift = (1..=e.n())
        .map(|j| relative_drift(&masses.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    out.write_table("mass.csv", &columns("t", "mass", e.n()), masses)?;
    println!("dt = {dt}");
    println!(
        "{} snapshots written to {}",
        snapshots.len(),
        out.dir().display()
    );
    println!("largest relative mass drift {drift:.3e}");
    Ok(())
}

pub fn spectrum_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let e = cfg.ensemble();
    let s = decompose(&e)?;
    let a = mkdv_core::eigen::build_a(&e);
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |q: &str, idx: String, v: f64| rows.push(vec![q.into(), idx, number(v)]);
    for (k, l) in s.lambda_sq.iter().enumerate() {
        push("lambda_sq", k.to_string(), *l);
    }
    for (k, l) in s.lambda_sq.iter().enumerate() {
        push("multiplicity", k.to_string(), s.multiplicity(*l) as f64);
    }
    let eigen = s.eigen_residual(&a);
    let duality = s.duality_residual();
    push("residual", "eigen".into(), eigen);
    push("residual", "duality".into(), duality);
    push("condition_number", "gram".into(), s.condition_number);
    let mut failures = Vec::new();
    if eigen >= EIGEN_TOLERANCE || duality >= EIGEN_TOLERANCE {
        failures.push(format!(
            "eigen residual {eigen:e}, duality residual {duality:e}"
        ));
    }
    if let Some(d) = &cfg.degenerate {
        let report = closed_form_report(&d.setup()?, &s)?;
        push("closed_form", "eigenvectors".into(), report.eigenvectors);
        push("closed_form", "gram".into(), report.gram);
        push("closed_form", "gram_inverse".into(), report.gram_inverse);
        push("closed_form", "ql_inverse".into(), report.ql_inverse);
        push("closed_form", "scale_bridge".into(), report.scale_bridge);
        if report.max() >= CLOSED_FORM_TOLERANCE {
            failures.push(format!("closed-form gap {:e}", report.max()));
        }
    }
    if s.is_ill_conditioned() {
        eprintln!(
            "warning: Gram matrix condition number {:e}; results may be inaccurate",
            s.condition_number
        );
    }
    let head = header(["quantity", "index", "value"]);
    print_records(&head, &rows)?;
    artifacts(cfg)?.write_records("spectrum.csv", &head, rows)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

pub fn reduce_verify(cfg: &RunConfig) -> Result<(), CliError> {
    let setup = cfg.degenerate.as_ref().expect("validated").setup()?;
    let slow = cfg.grid();
    let f0 = cfg.sample_initial(&slow).map_err(CliError::Input)?;
    let r = cfg.reduction.clone().unwrap_or_default();
    let int = &cfg.integrate;

    let mut exp = ReductionExperiment::new(setup, r.epsilons[0], f0)?;
    exp.tau_final = int.tau_final.expect("defaulted");
    exp.l0 = r.l0;
    exp.kdv_dt = int.dt.expect("defaulted");
    exp.mnls_dt = int.mnls_dt.expect("defaulted");
    if let Some(n) = r.fast_n {
        exp.fast_n = n;
    }
    let table = convergence_study(&exp, &r.epsilons)?;

    let out = artifacts(cfg)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|p| {
            let order = p.order.map_or_else(String::new, number);
            vec![number(p.epsilon()), number(p.error()), order]
        })
        .collect();
    out.write_records(
        "convergence.csv",
        &header(["epsilon", "error", "order"]),
        rows.clone(),
    )?;
    let m = exp.setup.m();
    let mut head = vec!["xi".to_string()];
    head.extend((1..=m).map(|j| format!("f_extracted_{j}")));
    head.extend((1..=m).map(|j| format!("f_kdv_{j}")));
    for p in &table {
        let o = &p.outcome;
        let rows = (0..slow.n()).map(|i| {
            std::iter::once(slow.point(i))
                .chain(o.extracted.iter().map(|f| f.values()[i]))
                .chain(o.kdv.iter().map(|f| f.values()[i]))
                .collect()
        });
        out.write_table(&format!("profiles_eps{}.csv", p.epsilon()), &head, rows)?;
    }
    print_records(&header(["epsilon", "error", "order"]), &rows)?;
    if strictly_decreasing(&table) {
        Ok(())
    } else {
        Err(CliError::Verification(
            "reduction errors do not decrease with epsilon".into(),
        ))
    }
}
