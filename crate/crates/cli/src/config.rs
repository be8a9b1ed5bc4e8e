//! Run configuration: JSON or TOML, schema-checked before anything runs.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};

use mkdv_core::coupling::{build_universal, mnls_symmetric_value, SymmetricPair, Weights};
use mkdv_core::eigen::{degenerate_ensemble, DegenerateSetup};
use mkdv_core::grid::{PeriodicGrid, RealField};
use mkdv_core::kdv::{periodic_soliton, IntegratorConfig};
use mkdv_core::mnls::CondensateEnsemble;
use mkdv_core::reduction::{MAX_EPSILON, SPLIT_STEP_LIMIT};

/// Every violation found in a configuration, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub violations: Vec<String>,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "invalid configuration ({} problems):",
            self.violations.len()
        )?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Kdv,
    Mnls,
    Spectrum,
    Reduce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "json" => Some(Self::Json),
            "toml" => Some(Self::Toml),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: Option<GridSection>,
    pub coupling: Option<CouplingSection>,
    pub ensemble: Option<EnsembleSection>,
    pub degenerate: Option<DegenerateSection>,
    #[serde(default)]
    pub initial: Vec<Profile>,
    pub plane_wave: Option<PlaneWaveSection>,
    pub perturbation: Option<PerturbationSection>,
    #[serde(default)]
    pub integrate: IntegrateSection,
    pub reduction: Option<ReductionSection>,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory that relative `file` profiles are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Profiles already rejected for an unknown `profile` tag.
    #[serde(skip)]
    dropped_profiles: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub length: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub weights: Vec<f64>,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    #[serde(default)]
    pub mnls: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub rho0: Vec<f64>,
    pub g: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegenerateSection {
    pub lambda_star: f64,
    pub h: f64,
    pub weights: Vec<f64>,
    #[serde(default = "one")]
    pub rho_ref: f64,
    /// `[rho0, g]` pairs of condensates outside the degenerate set.
    #[serde(default)]
    pub extras: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `2 kappa^2 sech^2(kappa (x - x0))`.
    Soliton {
        kappa: f64,
        x0: f64,
    },
    Gaussian {
        amplitude: f64,
        sigma: f64,
        x0: f64,
    },
    /// `amplitude (x - x0) / sigma * exp(-(x - x0)^2 / (2 sigma^2))`, zero mean.
    GaussianDerivative {
        amplitude: f64,
        sigma: f64,
        x0: f64,
    },
    /// One column of a CSV file with a header row; column 0 is `x`.
    File {
        path: PathBuf,
        #[serde(default = "first_column")]
        column: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWaveSection {
    pub phases: Vec<f64>,
}

/// Seeds an MNLS run with the embedded slow amplitudes listed in `initial`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateSection {
    pub dt: Option<f64>,
    pub mnls_dt: Option<f64>,
    pub t_final: Option<f64>,
    pub tau_final: Option<f64>,
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default = "yes")]
    pub dealias: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "one")]
    pub l0: f64,
    pub fast_n: Option<usize>,
}

impl Default for ReductionSection {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            l0: 1.0,
            fast_n: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
        }
    }
}

const DEFAULT_MNLS_DT: f64 = 0.05;
const DEFAULT_KDV_DT: f64 = 1e-3;
const DEFAULT_TAU_FINAL: f64 = 0.5;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn first_column() -> usize {
    1
}

pub fn default_epsilons() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}

fn default_directory() -> PathBuf {
    PathBuf::from("mkdv-output")
}

const TOP_KEYS: &[&str] = &[
    "grid",
    "coupling",
    "ensemble",
    "degenerate",
    "initial",
    "plane_wave",
    "perturbation",
    "integrate",
    "reduction",
    "output",
];

fn section_keys(section: &str) -> &'static [&'static str] {
    match section {
        "grid" => &["length", "n"],
        "coupling" => &["weights", "s1", "s2", "mnls"],
        "ensemble" => &["rho0", "g", "h"],
        "degenerate" => &["lambda_star", "h", "weights", "rho_ref", "extras"],
        "plane_wave" => &["phases"],
        "perturbation" => &["epsilon"],
        "integrate" => &[
            "dt",
            "mnls_dt",
            "t_final",
            "tau_final",
            "snapshot_stride",
            "dealias",
        ],
        "reduction" => &["epsilons", "l0", "fast_n"],
        "output" => &["directory"],
        _ => &[],
    }
}

fn profile_keys(kind: &str) -> Option<&'static [&'static str]> {
    match kind {
        "soliton" => Some(&["profile", "kappa", "x0"]),
        "gaussian" | "gaussian_derivative" => Some(&["profile", "amplitude", "sigma", "x0"]),
        "file" => Some(&["profile", "path", "column"]),
        _ => None,
    }
}

fn unknown_in(table: &Map<String, Value>, allowed: &[&str], at: &str, out: &mut Vec<String>) {
    for key in table.keys().filter(|k| !allowed.contains(&k.as_str())) {
        out.push(format!("unknown key `{at}{key}`"));
    }
}

/// Collects unknown keys at every level and removes them so that the typed
/// pass can report type errors in what remains.
fn strip_unknown(root: &mut Value, out: &mut Vec<String>, dropped: &mut usize) {
    let Some(table) = root.as_object_mut() else {
        out.push("configuration must be a table".into());
        return;
    };
    unknown_in(table, TOP_KEYS, "", out);
    table.retain(|k, _| TOP_KEYS.contains(&k.as_str()));
    for (name, section) in table.iter_mut() {
        if name == "initial" {
            let Some(items) = section.as_array_mut() else {
                continue;
            };
            let mut i = 0;
            items.retain_mut(|item| {
                let at = i;
                i += 1;
                let Some(entry) = item.as_object_mut() else { return true };
                let kind = entry.get("profile").and_then(Value::as_str).unwrap_or_default();
                match profile_keys(kind) {
                    Some(allowed) => {
                        unknown_in(entry, allowed, &format!("initial[{at}]."), out);
                        entry.retain(|k, _| allowed.contains(&k.as_str()));
                        true
                    }
                    None => {
                        out.push(format!(
                            "initial[{at}]: profile must be one of soliton, gaussian, gaussian_derivative, file"
                        ));
                        *dropped += 1;
                        false
                    }
                }
            });
        } else if let Some(entry) = section.as_object_mut() {
            let allowed = section_keys(name);
            unknown_in(entry, allowed, &format!("{name}."), out);
            entry.retain(|k, _| allowed.contains(&k.as_str()));
        }
    }
}

/// Parses and validates a configuration for `command`.
pub fn parse_config(
    text: &str,
    format: Format,
    command: Command,
    base_dir: &Path,
) -> Result<RunConfig, SchemaError> {
    let fail = |v: String| SchemaError {
        violations: vec![v],
    };
    let mut value: Value = match format {
        Format::Json => {
            serde_json::from_str(text).map_err(|e| fail(format!("malformed JSON: {e}")))?
        }
        Format::Toml => toml::from_str(text).map_err(|e| fail(format!("malformed TOML: {e}")))?,
    };
    let mut violations = Vec::new();
    let mut dropped = 0;
    strip_unknown(&mut value, &mut violations, &mut dropped);
    let typed = RunConfig::deserialize(value);
    let mut cfg = match typed {
        Ok(cfg) => cfg,
        Err(e) => {
            violations.push(e.to_string());
            return Err(SchemaError { violations });
        }
    };
    cfg.base_dir = base_dir.to_path_buf();
    cfg.dropped_profiles = dropped;
    violations.extend(cfg.check(command));
    if violations.is_empty() {
        cfg.fill_defaults(command);
        Ok(cfg)
    } else {
        Err(SchemaError { violations })
    }
}

/// Reads `path`, picking the format from its extension.
pub fn load_config(path: &Path, command: Command) -> Result<RunConfig, SchemaError> {
    let fail = |v: String| SchemaError {
        violations: vec![v],
    };
    let format = Format::from_path(path).ok_or_else(|| {
        fail(format!(
            "{}: extension must be .json or .toml",
            path.display()
        ))
    })?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, format, command, base)
}

fn positive(name: &str, v: f64, out: &mut Vec<String>) {
    if !(v.is_finite() && v > 0.0) {
        out.push(format!("{name} must be positive and finite, got {v}"));
    }
}

impl RunConfig {
    /// Semantic checks for `command`; returns every violation.
    pub fn check(&self, command: Command) -> Vec<String> {
        let mut out = Vec::new();
        let require = |present: bool, what: &str, out: &mut Vec<String>| {
            if !present {
                out.push(format!("missing `{what}`"));
            }
        };

        if let Some(g) = &self.grid {
            positive("grid.length", g.length, &mut out);
            if g.n < 8 || !g.n.is_power_of_two() {
                out.push(format!("grid.n must be a power of two >= 8, got {}", g.n));
            }
        }
        if let Some(c) = &self.coupling {
            self.check_coupling(c, &mut out);
        }
        if let Some(e) = &self.ensemble {
            check_ensemble(e, &mut out);
        }
        if let Some(d) = &self.degenerate {
            if let Err(e) = d.setup() {
                out.push(format!("degenerate: {e}"));
            }
        }
        for (i, p) in self.initial.iter().enumerate() {
            p.check(i, &mut out);
        }
        let int = &self.integrate;
        for (name, v) in [("integrate.dt", int.dt), ("integrate.mnls_dt", int.mnls_dt)] {
            if let Some(v) = v {
                positive(name, v, &mut out);
            }
        }
        for (name, v) in [
            ("integrate.t_final", int.t_final),
            ("integrate.tau_final", int.tau_final),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                out.push(format!("{name} must be finite"));
            }
        }

        let has_mixture = self.ensemble.is_some() || self.degenerate.is_some();
        if self.ensemble.is_some() && self.degenerate.is_some() {
            out.push("give either `ensemble` or `degenerate`, not both".into());
        }
        match command {
            Command::Kdv => {
                require(self.grid.is_some(), "grid", &mut out);
                require(self.coupling.is_some(), "coupling", &mut out);
                require(int.t_final.is_some(), "integrate.t_final", &mut out);
                if let Some(c) = &self.coupling {
                    self.check_count(c.weights.len(), "coupling.weights", &mut out);
                }
            }
            Command::Mnls => {
                require(self.grid.is_some(), "grid", &mut out);
                require(has_mixture, "ensemble` or `degenerate", &mut out);
                require(int.t_final.is_some(), "integrate.t_final", &mut out);
                self.check_mnls_initial(&mut out);
            }
            Command::Spectrum => require(has_mixture, "ensemble` or `degenerate", &mut out),
            Command::Reduce => {
                require(self.grid.is_some(), "grid", &mut out);
                require(self.degenerate.is_some(), "degenerate", &mut out);
                if let Some(d) = &self.degenerate {
                    self.check_count(d.weights.len(), "degenerate.weights", &mut out);
                }
                let r = self.reduction.clone().unwrap_or_default();
                check_epsilons(&r.epsilons, &mut out);
                positive("reduction.l0", r.l0, &mut out);
            }
        }
        out
    }

    fn fill_defaults(&mut self, command: Command) {
        let int = &mut self.integrate;
        match command {
            Command::Kdv => {
                let grid = self.grid.as_ref().map(|g| PeriodicGrid::new(g.length, g.n));
                if let (None, Some(Ok(grid))) = (int.dt, grid) {
                    int.dt = Some(IntegratorConfig::from_guideline(&grid).dt);
                }
            }
            Command::Mnls => {
                if let (None, Some(g)) = (int.dt, &self.grid) {
                    let k = PeriodicGrid::new(g.length, g.n)
                        .map(|g| g.max_wavenumber())
                        .unwrap_or(1.0);
                    int.dt = Some(DEFAULT_MNLS_DT.min(SPLIT_STEP_LIMIT / (k * k)));
                }
            }
            Command::Spectrum => {}
            Command::Reduce => {
                int.dt.get_or_insert(DEFAULT_KDV_DT);
                int.mnls_dt.get_or_insert(DEFAULT_MNLS_DT);
                int.tau_final.get_or_insert(DEFAULT_TAU_FINAL);
                self.reduction.get_or_insert_with(ReductionSection::default);
            }
        }
    }

    fn check_coupling(&self, c: &CouplingSection, out: &mut Vec<String>) {
        let w = match Weights::new(c.weights.clone()) {
            Ok(w) => w,
            Err(e) => return out.push(format!("coupling.weights: {e}")),
        };
        let pair = match (c.mnls, c.s1, c.s2) {
            (true, None, None) => match mnls_symmetric_value(&w) {
                Ok(s) => SymmetricPair::equal(s),
                Err(e) => return out.push(format!("coupling: {e}")),
            },
            (false, Some(s1), Some(s2)) => SymmetricPair::new(s1, s2),
            _ => return out.push("coupling: give `s1` and `s2`, or `mnls = true`".into()),
        };
        if let Err(e) = build_universal(&w, pair) {
            out.push(format!("coupling: {e}"));
        }
    }

    fn check_count(&self, m: usize, what: &str, out: &mut Vec<String>) {
        let given = self.initial.len() + self.dropped_profiles;
        if given != m {
            out.push(format!(
                "initial: expected {m} profiles (one per entry of {what}), got {given}"
            ));
        }
    }

    fn check_mnls_initial(&self, out: &mut Vec<String>) {
        let n = match (&self.ensemble, &self.degenerate) {
            (Some(e), _) => e.rho0.len(),
            (None, Some(d)) => d.weights.len() + 1 + d.extras.len(),
            (None, None) => return,
        };
        if let Some(p) = &self.plane_wave {
            if p.phases.len() != n {
                out.push(format!(
                    "plane_wave.phases: expected {n} entries, got {}",
                    p.phases.len()
                ));
            }
        }
        match (&self.perturbation, &self.degenerate) {
            (Some(p), Some(d)) => {
                if !(p.epsilon > 0.0 && p.epsilon <= MAX_EPSILON) {
                    out.push(format!(
                        "perturbation.epsilon must lie in (0, {MAX_EPSILON}], got {}",
                        p.epsilon
                    ));
                }
                if self.plane_wave.is_some() {
                    out.push("plane_wave phases cannot be combined with a perturbation".into());
                }
                self.check_count(d.weights.len(), "degenerate.weights", out);
            }
            (Some(_), None) => out.push("perturbation requires a `degenerate` section".into()),
            (None, _) => {
                if self.initial.len() + self.dropped_profiles > 0 {
                    out.push("initial profiles are only used together with `perturbation`".into());
                }
            }
        }
    }

    /// Replaces the configured epsilon sequence, e.g. from the command line.
    pub fn override_epsilons(&mut self, epsilons: Vec<f64>) -> Result<(), SchemaError> {
        let mut violations = Vec::new();
        check_epsilons(&epsilons, &mut violations);
        if !violations.is_empty() {
            return Err(SchemaError { violations });
        }
        self.reduction
            .get_or_insert_with(ReductionSection::default)
            .epsilons = epsilons;
        Ok(())
    }

    pub fn grid(&self) -> PeriodicGrid {
        let g = self.grid.as_ref().expect("validated: grid present");
        PeriodicGrid::new(g.length, g.n).expect("validated: grid admissible")
    }

    pub fn sample_initial(&self, grid: &PeriodicGrid) -> Result<Vec<RealField>, String> {
        self.initial
            .iter()
            .map(|p| p.sample(grid, &self.base_dir))
            .collect()
    }

    pub fn ensemble(&self) -> CondensateEnsemble {
        match (&self.ensemble, &self.degenerate) {
            (Some(e), _) => CondensateEnsemble::new(e.rho0.clone(), e.g.clone(), e.h)
                .expect("validated: ensemble admissible"),
            (None, Some(d)) => {
                d.setup()
                    .expect("validated: degenerate admissible")
                    .ensemble
            }
            (None, None) => unreachable!("validated: a mixture is present"),
        }
    }
}

fn check_ensemble(e: &EnsembleSection, out: &mut Vec<String>) {
    if e.rho0.is_empty() {
        out.push("ensemble.rho0 must not be empty".into());
    }
    if e.rho0.len() != e.g.len() {
        out.push(format!(
            "ensemble: rho0 has {} entries but g has {}",
            e.rho0.len(),
            e.g.len()
        ));
    }
    for (i, r) in e.rho0.iter().enumerate() {
        positive(&format!("ensemble.rho0[{i}]"), *r, out);
    }
    for (i, g) in e.g.iter().enumerate() {
        positive(&format!("ensemble.g[{i}]"), *g, out);
    }
    let min_g = e.g.iter().copied().fold(f64::INFINITY, f64::min);
    if !(e.h < min_g) {
        out.push(format!(
            "ensemble: h = {} must be below min g = {min_g} for the uniform mixture to be stable",
            e.h
        ));
    }
}

fn check_epsilons(eps: &[f64], out: &mut Vec<String>) {
    if eps.len() < 3 {
        out.push(format!(
            "reduction.epsilons: need at least 3 values, got {}",
            eps.len()
        ));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        out.push("reduction.epsilons must be strictly decreasing".into());
    }
    if eps.iter().any(|e| !(*e > 0.0 && *e <= MAX_EPSILON)) {
        out.push(format!("reduction.epsilons must lie in (0, {MAX_EPSILON}]"));
    }
}

impl DegenerateSection {
    pub fn setup(&self) -> mkdv_core::Result<DegenerateSetup> {
        let extras: Vec<(f64, f64)> = self.extras.iter().map(|[r, g]| (*r, *g)).collect();
        degenerate_ensemble(
            self.lambda_star,
            self.h,
            &Weights::new(self.weights.clone())?,
            self.rho_ref,
            &extras,
        )
    }
}

impl Profile {
    fn check(&self, i: usize, out: &mut Vec<String>) {
        match self {
            Self::Soliton { kappa, x0 } => {
                positive(&format!("initial[{i}].kappa"), *kappa, out);
                if !x0.is_finite() {
                    out.push(format!("initial[{i}].x0 must be finite"));
                }
            }
            Self::Gaussian {
                amplitude,
                sigma,
                x0,
            }
            | Self::GaussianDerivative {
                amplitude,
                sigma,
                x0,
            } => {
                positive(&format!("initial[{i}].sigma"), *sigma, out);
                if !(amplitude.is_finite() && x0.is_finite()) {
                    out.push(format!("initial[{i}]: amplitude and x0 must be finite"));
                }
            }
            Self::File { column, .. } => {
                if *column == 0 {
                    out.push(format!(
                        "initial[{i}].column: column 0 holds x; field columns start at 1"
                    ));
                }
            }
        }
    }

    pub fn sample(&self, grid: &PeriodicGrid, base_dir: &Path) -> Result<RealField, String> {
        Ok(match *self {
            Self::Soliton { kappa, x0 } => periodic_soliton(grid, kappa, x0),
            Self::Gaussian {
                amplitude,
                sigma,
                x0,
            } => grid.sample(|x| amplitude * (-(x - x0).powi(2) / (2.0 * sigma * sigma)).exp()),
            Self::GaussianDerivative {
                amplitude,
                sigma,
                x0,
            } => grid.sample(|x| {
                let z = (x - x0) / sigma;
                amplitude * z * (-z * z / 2.0).exp()
            }),
            Self::File { ref path, column } => {
                let path = base_dir.join(path);
                let values = read_column(&path, column)?;
                RealField::new(*grid, values).map_err(|e| format!("{}: {e}", path.display()))?
            }
        })
    }
}

fn read_column(path: &Path, column: usize) -> Result<Vec<f64>, String> {
    let at = |e: &dyn fmt::Display| format!("{}: {e}", path.display());
    let mut reader = csv::Reader::from_path(path).map_err(|e| at(&e))?;
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| at(&e))?;
        let cell = record
            .get(column)
            .ok_or_else(|| at(&format!("row {} has no column {column}", row + 1)))?;
        values.push(
            cell.trim()
                .parse::<f64>()
                .map_err(|e| at(&format!("row {}: {e}", row + 1)))?,
        );
    }
    Ok(values)
}
