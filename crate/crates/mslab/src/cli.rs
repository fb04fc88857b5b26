//! Config-driven experiment runner: parses flat key=value experiment files,
//! executes the requested methods, and emits CSV error tables.

use crate::coeff::{
    self, CoefficientField, LognormalSpec, RasterField,
};
use crate::coupling::{self, PenaltyParams, RhoMode};
use crate::error::{self, ErrorReport};
use crate::fem;
use crate::homog;
use crate::mesh::{
    build_coarse_mesh, build_frame_fine_mesh, pair_interface, split_domain_with_extra, Point,
};
use crate::msbasis::{self, BasisSelection};
use crate::{MsError, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Frozen CSV column set; tested for stability.
pub const CSV_HEADER: &str =
    "method,rel_l2,rel_linf,rel_energy,NH,nh,href,eps,beta,gamma0,gamma1,rho,seed,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Reference,
    MsfemStandard,
    MsfemMixed,
    FeMsfem,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Reference => "reference",
            Method::MsfemStandard => "msfem",
            Method::MsfemMixed => "mixed",
            Method::FeMsfem => "fe-msfem",
        }
    }

    fn parse(s: &str) -> Option<Method> {
        match s {
            "reference" => Some(Method::Reference),
            "msfem" => Some(Method::MsfemStandard),
            "mixed" => Some(Method::MsfemMixed),
            "fe-msfem" => Some(Method::FeMsfem),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RelL2,
    RelLinf,
    RelEnergy,
}

impl Metric {
    fn parse(s: &str) -> Option<Metric> {
        match s {
            "rel_l2" => Some(Metric::RelL2),
            "rel_linf" => Some(Metric::RelLinf),
            "rel_energy" => Some(Metric::RelEnergy),
            _ => None,
        }
    }

    fn pick(&self, rep: &ErrorReport) -> f64 {
        match self {
            Metric::RelL2 => rep.rel_l2,
            Metric::RelLinf => rep.rel_linf,
            Metric::RelEnergy => rep.rel_energy,
        }
    }
}

/// A tolerance annotation: the named metric of the named method must land
/// within `expect_tol` (relative) of `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub method: Method,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoeffSpec {
    Constant { value: f64 },
    Periodic { epsilon: f64 },
    Layered { epsilon: f64 },
    Lognormal { sigma2: f64, l1: f64, l2: f64, grid_n: usize },
    Raster { file: PathBuf },
    Regions { file: PathBuf, base: Box<CoeffSpec> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub coeff: CoeffSpec,
    /// coarse cells per side (1/H)
    pub coarse_n: usize,
    /// fine cells per side (1/h)
    pub fine_n: usize,
    /// reference cells per side (1/h_ref)
    pub ref_n: usize,
    pub layers: usize,
    pub sigma_os: f64,
    pub methods: Vec<Method>,
    pub beta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub rho_mode: RhoMode,
    pub seed: u64,
    pub zero_rhs: bool,
    pub full_scale: bool,
    pub expect_tol: f64,
    pub expectations: Vec<Expectation>,
    /// take interface nodal values from the frame side when prolonging
    pub gamma_from_fine: bool,
    /// directory of the config file; coefficient files resolve against it
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn n_sub(&self) -> usize {
        self.fine_n / self.coarse_n
    }

    pub fn epsilon(&self) -> Option<f64> {
        fn of(spec: &CoeffSpec) -> Option<f64> {
            match spec {
                CoeffSpec::Periodic { epsilon } | CoeffSpec::Layered { epsilon } => Some(*epsilon),
                CoeffSpec::Regions { base, .. } => of(base),
                _ => None,
            }
        }
        of(&self.coeff)
    }
}

fn parse_kv(text: &str, fname: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(MsError::Parse {
                file: fname.to_string(),
                line: ln + 1,
                msg: format!("expected key = value, got `{line}`"),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string(), ln + 1));
    }
    Ok(out)
}

/// Parse and validate an experiment file, collecting every violation rather
/// than stopping at the first.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let fname = path.display().to_string();
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let kv = parse_kv(&text, &fname)?;
    let mut errs: Vec<String> = Vec::new();
    let mut map: HashMap<String, String> = HashMap::new();
    let mut expect_raw: Vec<(String, String)> = Vec::new();
    const KEYS: &[&str] = &[
        "coefficient", "value", "epsilon", "sigma2", "l1", "l2", "grid_n", "raster_file",
        "regions_file", "base", "base_value", "NH", "nh", "href", "layers", "sigma_os",
        "methods", "beta", "gamma0", "gamma1", "rho", "seed", "rhs", "full_scale",
        "expect_tol", "gamma_side",
    ];
    for (k, v, ln) in kv {
        if k.starts_with("expect_") && k != "expect_tol" {
            expect_raw.push((k, v));
            continue;
        }
        if !KEYS.contains(&k.as_str()) {
            errs.push(format!("{fname}:{ln}: unknown key `{k}`"));
            continue;
        }
        if map.insert(k.clone(), v).is_some() {
            errs.push(format!("{fname}:{ln}: duplicate key `{k}`"));
        }
    }
    let get_f64 = |key: &str, default: f64, errs: &mut Vec<String>| -> f64 {
        match map.get(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                errs.push(format!("{fname}: key `{key}`: `{v}` is not a number"));
                default
            }),
        }
    };
    let beta = get_f64("beta", 1.0, &mut errs);
    let gamma0 = get_f64("gamma0", 20.0, &mut errs);
    let gamma1 = get_f64("gamma1", 0.1, &mut errs);
    let sigma_os = get_f64("sigma_os", 3.0, &mut errs);
    let expect_tol = get_f64("expect_tol", 0.25, &mut errs);
    let get_usize = |key: &str, default: usize, errs: &mut Vec<String>| -> usize {
        match map.get(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                errs.push(format!("{fname}: key `{key}`: `{v}` is not a positive integer"));
                default
            }),
        }
    };
    let coarse_n = get_usize("NH", 8, &mut errs);
    let fine_n = get_usize("nh", 256, &mut errs);
    let ref_n = get_usize("href", 512, &mut errs);
    let layers = get_usize("layers", 2, &mut errs);
    let grid_n = get_usize("grid_n", 256, &mut errs);
    let seed = match map.get("seed") {
        None => 0u64,
        Some(v) => v.parse().unwrap_or_else(|_| {
            errs.push(format!("{fname}: key `seed`: `{v}` is not an unsigned integer"));
            0
        }),
    };
    let get_f64b = |key: &str, errs: &mut Vec<String>| -> Option<f64> {
        map.get(key).map(|v| {
            v.parse().unwrap_or_else(|_| {
                errs.push(format!("{fname}: key `{key}`: `{v}` is not a number"));
                0.0
            })
        })
    };
    let epsilon = get_f64b("epsilon", &mut errs);
    // coefficient spec
    let base_spec = |errs: &mut Vec<String>| -> CoeffSpec {
        match map.get("base").map(String::as_str).unwrap_or("constant") {
            "constant" => CoeffSpec::Constant {
                value: map
                    .get("base_value")
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(1.0),
            },
            "periodic" => match epsilon {
                Some(e) => CoeffSpec::Periodic { epsilon: e },
                None => {
                    errs.push(format!("{fname}: base `periodic` needs key `epsilon`"));
                    CoeffSpec::Constant { value: 1.0 }
                }
            },
            other => {
                errs.push(format!("{fname}: unknown overlay base `{other}`"));
                CoeffSpec::Constant { value: 1.0 }
            }
        }
    };
    let coeff = match map.get("coefficient").map(String::as_str) {
        None => {
            errs.push(format!("{fname}: missing key `coefficient`"));
            CoeffSpec::Constant { value: 1.0 }
        }
        Some("constant") => CoeffSpec::Constant {
            value: get_f64("value", 1.0, &mut errs),
        },
        Some("periodic") => match epsilon {
            Some(e) => CoeffSpec::Periodic { epsilon: e },
            None => {
                errs.push(format!("{fname}: coefficient `periodic` needs key `epsilon`"));
                CoeffSpec::Constant { value: 1.0 }
            }
        },
        Some("layered") => match epsilon {
            Some(e) => CoeffSpec::Layered { epsilon: e },
            None => {
                errs.push(format!("{fname}: coefficient `layered` needs key `epsilon`"));
                CoeffSpec::Constant { value: 1.0 }
            }
        },
        Some("lognormal") => CoeffSpec::Lognormal {
            sigma2: get_f64("sigma2", 1.5, &mut errs),
            l1: get_f64("l1", 0.01, &mut errs),
            l2: get_f64("l2", 0.01, &mut errs),
            grid_n,
        },
        Some("raster") => match map.get("raster_file") {
            Some(f) => {
                let p = base_dir.join(f);
                if !p.is_file() {
                    errs.push(format!("{fname}: key `raster_file`: `{}` not found", p.display()));
                }
                CoeffSpec::Raster { file: p }
            }
            None => {
                errs.push(format!("{fname}: coefficient `raster` needs key `raster_file`"));
                CoeffSpec::Constant { value: 1.0 }
            }
        },
        Some("regions") => match map.get("regions_file") {
            Some(f) => {
                let p = base_dir.join(f);
                if !p.is_file() {
                    errs.push(format!("{fname}: key `regions_file`: `{}` not found", p.display()));
                }
                CoeffSpec::Regions {
                    file: p,
                    base: Box::new(base_spec(&mut errs)),
                }
            }
            None => {
                errs.push(format!("{fname}: coefficient `regions` needs key `regions_file`"));
                CoeffSpec::Constant { value: 1.0 }
            }
        },
        Some(other) => {
            errs.push(format!("{fname}: unknown coefficient `{other}`"));
            CoeffSpec::Constant { value: 1.0 }
        }
    };
    // methods
    let methods: Vec<Method> = match map.get("methods") {
        None => {
            errs.push(format!("{fname}: missing key `methods`"));
            Vec::new()
        }
        Some(list) => {
            let mut ms = Vec::new();
            for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match Method::parse(item) {
                    Some(m) => ms.push(m),
                    None => errs.push(format!("{fname}: unknown method `{item}`")),
                }
            }
            if ms.is_empty() {
                errs.push(format!("{fname}: key `methods` lists no valid method"));
            }
            ms
        }
    };
    let rho_mode = match map.get("rho").map(String::as_str).unwrap_or("epsilon") {
        "epsilon" => RhoMode::Epsilon,
        "h" => RhoMode::FineH,
        v => match v.parse::<f64>() {
            Ok(x) if x > 0.0 => RhoMode::Explicit(x),
            _ => {
                errs.push(format!(
                    "{fname}: key `rho`: expected `epsilon`, `h`, or a positive number, got `{v}`"
                ));
                RhoMode::FineH
            }
        },
    };
    let zero_rhs = match map.get("rhs").map(String::as_str).unwrap_or("one") {
        "one" => false,
        "zero" => true,
        v => {
            errs.push(format!("{fname}: key `rhs`: expected `one` or `zero`, got `{v}`"));
            false
        }
    };
    let full_scale = match map.get("full_scale").map(String::as_str).unwrap_or("false") {
        "true" => true,
        "false" => false,
        v => {
            errs.push(format!("{fname}: key `full_scale`: expected true/false, got `{v}`"));
            false
        }
    };
    let gamma_from_fine = match map.get("gamma_side").map(String::as_str).unwrap_or("interior") {
        "interior" => false,
        "frame" => true,
        v => {
            errs.push(format!(
                "{fname}: key `gamma_side`: expected `interior` or `frame`, got `{v}`"
            ));
            false
        }
    };
    // expectations: expect_<method>_<metric> = value
    let mut expectations = Vec::new();
    for (k, v) in &expect_raw {
        let rest = &k["expect_".len()..];
        let parsed = Method::parse(rest.split('_').next().unwrap_or("")).and_then(|m| {
            let mname = m.name();
            rest.strip_prefix(mname)
                .and_then(|r| r.strip_prefix('_'))
                .and_then(Metric::parse)
                .map(|metric| (m, metric))
        });
        match (parsed, v.parse::<f64>()) {
            (Some((method, metric)), Ok(value)) => {
                expectations.push(Expectation {
                    method,
                    metric,
                    value,
                });
            }
            _ => errs.push(format!(
                "{fname}: bad expectation `{k} = {v}` (want expect_<method>_<rel_l2|rel_linf|rel_energy> = <number>)"
            )),
        }
    }
    // structural validation
    if coarse_n < 4 {
        errs.push(format!("{fname}: NH = {coarse_n} is below the minimum of 4"));
    }
    if coarse_n > 0 && 2 * layers >= coarse_n {
        errs.push(format!(
            "{fname}: layers = {layers} leaves no interior at NH = {coarse_n}"
        ));
    }
    if coarse_n > 0 && fine_n % coarse_n != 0 {
        errs.push(format!(
            "{fname}: nh = {fine_n} is not a multiple of NH = {coarse_n}"
        ));
    }
    if fine_n > 0 && ref_n % fine_n != 0 {
        errs.push(format!(
            "{fname}: href = {ref_n} is not a multiple of nh = {fine_n}"
        ));
    }
    if sigma_os <= 1.0 {
        errs.push(format!("{fname}: sigma_os = {sigma_os} must exceed 1"));
    }
    for e in &expectations {
        if !methods.contains(&e.method) {
            errs.push(format!(
                "{fname}: expectation on `{}` but the method is not requested",
                e.method.name()
            ));
        }
    }
    if !errs.is_empty() {
        return Err(MsError::Config(errs));
    }
    Ok(ExperimentConfig {
        coeff,
        coarse_n,
        fine_n,
        ref_n,
        layers,
        sigma_os,
        methods,
        beta,
        gamma0,
        gamma1,
        rho_mode,
        seed,
        zero_rhs,
        full_scale,
        expect_tol,
        expectations,
        gamma_from_fine,
        base_dir,
    })
}

/// Materialize the coefficient field from its spec (generating or loading as
/// needed).
pub fn build_field(cfg: &ExperimentConfig) -> Result<CoefficientField> {
    fn build(spec: &CoeffSpec, seed: u64) -> Result<CoefficientField> {
        match spec {
            CoeffSpec::Constant { value } => Ok(CoefficientField::Constant(*value)),
            CoeffSpec::Periodic { epsilon } => {
                Ok(CoefficientField::PeriodicOscillatory { epsilon: *epsilon })
            }
            CoeffSpec::Layered { epsilon } => {
                Ok(CoefficientField::LayeredSine { epsilon: *epsilon })
            }
            CoeffSpec::Lognormal {
                sigma2,
                l1,
                l2,
                grid_n,
            } => {
                let raster = coeff::generate_lognormal(&LognormalSpec {
                    sigma2: *sigma2,
                    l1: *l1,
                    l2: *l2,
                    nx: *grid_n,
                    ny: *grid_n,
                    seed,
                })?;
                Ok(CoefficientField::Raster(raster))
            }
            CoeffSpec::Raster { file } => Ok(CoefficientField::Raster(coeff::load_raster(file)?)),
            CoeffSpec::Regions { file, base } => {
                let regions = coeff::load_regions(file)?;
                Ok(CoefficientField::Overlay {
                    base: Box::new(build(base, seed)?),
                    regions,
                })
            }
        }
    }
    build(&cfg.coeff, cfg.seed)
}

/// One result row of a run.
#[derive(Debug, Clone)]
pub struct RowRecord {
    pub method: Method,
    pub report: ErrorReport,
    pub rho: f64,
    pub wall_ms: u64,
}

pub struct RunOutput {
    pub csv: String,
    pub rows: Vec<RowRecord>,
}

fn csv_row(cfg: &ExperimentConfig, row: &RowRecord) -> String {
    let e = |v: f64| format!("{v:.6e}");
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.method.name(),
        e(row.report.rel_l2),
        e(row.report.rel_linf),
        e(row.report.rel_energy),
        cfg.coarse_n,
        cfg.fine_n,
        cfg.ref_n,
        e(cfg.epsilon().unwrap_or(0.0)),
        e(cfg.beta),
        e(cfg.gamma0),
        e(cfg.gamma1),
        e(row.rho),
        cfg.seed,
        row.wall_ms,
    )
}

fn dump_nodal(dir: &Path, name: &str, n: usize, values: &[f64]) -> Result<()> {
    let raster = RasterField {
        nx: n + 1,
        ny: n + 1,
        values: values.to_vec(),
    };
    coeff::save_raster(&raster, &dir.join(format!("{name}.raster")))
}

/// Execute a validated config: solve the reference once, then each requested
/// method, measuring errors on the reference grid. Full-scale configs run
/// only when `allow_full`.
pub fn run(cfg: &ExperimentConfig, allow_full: bool, dump: Option<&Path>) -> Result<RunOutput> {
    if cfg.full_scale && !allow_full {
        return Err(MsError::Config(vec![
            "this is a full-scale experiment (expect tens of minutes and gigabytes); rerun with --full-scale".into(),
        ]));
    }
    let field = build_field(cfg)?;
    let zero = cfg.zero_rhs;
    let f = move |_: Point| if zero { 0.0 } else { 1.0 };
    // iterative solvers stall near kappa * machine epsilon; scale the target
    // with the coefficient contrast so high-contrast runs still converge
    let (coeff_lo, coeff_hi) = field.bounds();
    let rtol = (1e-13 * coeff_hi / coeff_lo).clamp(1e-10, 1e-6);
    let t0 = Instant::now();
    let reference = fem::solve_reference(cfg.ref_n, &field, &f, rtol)?;
    let ref_ms = t0.elapsed().as_millis() as u64;
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir)?;
        dump_nodal(dir, "reference", cfg.ref_n, &reference.values)?;
        // coefficient sampled at reference cell centers
        let nc = cfg.ref_n;
        let mut avals = Vec::with_capacity(nc * nc);
        for j in 0..nc {
            for i in 0..nc {
                let p = [(i as f64 + 0.5) / nc as f64, (j as f64 + 0.5) / nc as f64];
                avals.push(field.eval(p));
            }
        }
        coeff::save_raster(
            &RasterField {
                nx: nc,
                ny: nc,
                values: avals,
            },
            &dir.join("coefficient.raster"),
        )?;
    }
    let zero_report = ErrorReport {
        abs_l2: 0.0,
        abs_linf: 0.0,
        abs_energy: 0.0,
        rel_l2: 0.0,
        rel_linf: 0.0,
        rel_energy: 0.0,
    };
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let t = Instant::now();
        let (prolonged, nodal, rho) = match method {
            Method::Reference => {
                rows.push(RowRecord {
                    method,
                    report: zero_report,
                    rho: 0.0,
                    wall_ms: ref_ms,
                });
                continue;
            }
            Method::MsfemStandard => {
                let coarse = build_coarse_mesh(cfg.coarse_n)?;
                let sol = coupling::solve_msfem_standard(&coarse, &field, &f, cfg.n_sub(), rtol)?;
                let nodal = dump
                    .map(|_| error::prolong_coarse(&coarse, &sol, cfg.ref_n))
                    .transpose()?;
                (
                    error::prolong_coarse_broken(&coarse, &sol, cfg.ref_n)?,
                    nodal,
                    0.0,
                )
            }
            Method::MsfemMixed => {
                let coarse = build_coarse_mesh(cfg.coarse_n)?;
                let sol = coupling::solve_msfem_mixed(
                    &coarse,
                    &field,
                    &f,
                    cfg.n_sub(),
                    cfg.sigma_os,
                    cfg.layers,
                    rtol,
                )?;
                let nodal = dump
                    .map(|_| error::prolong_coarse(&coarse, &sol, cfg.ref_n))
                    .transpose()?;
                (
                    error::prolong_coarse_broken(&coarse, &sol, cfg.ref_n)?,
                    nodal,
                    0.0,
                )
            }
            Method::FeMsfem => {
                let coarse = build_coarse_mesh(cfg.coarse_n)?;
                // high-contrast overlay cells join the fine region
                let extra = coeff::high_contrast_cells(&field, cfg.coarse_n, 100.0);
                let split = split_domain_with_extra(&coarse, cfg.layers, &extra)?;
                let fine = build_frame_fine_mesh(&split, cfg.fine_n)?;
                let pairing = pair_interface(&split, &fine, &coarse)?;
                let elems = split.omega2_elements(&coarse);
                let bases = msbasis::build_bases(
                    &coarse.mesh,
                    &elems,
                    &field,
                    cfg.n_sub(),
                    BasisSelection::AllOversampling {
                        sigma_os: cfg.sigma_os,
                    },
                )?;
                let params = PenaltyParams {
                    beta: cfg.beta,
                    gamma0: cfg.gamma0,
                    gamma1: cfg.gamma1,
                    rho_mode: cfg.rho_mode,
                };
                let sol = coupling::solve_fe_msfem(
                    &split, &fine, &coarse, &pairing, bases, &field, &f, &params, rtol,
                )?;
                let rho = sol.rho;
                let nodal = dump
                    .map(|_| {
                        error::prolong_combined(
                            &split,
                            &fine,
                            &coarse,
                            &sol,
                            cfg.ref_n,
                            cfg.gamma_from_fine,
                        )
                    })
                    .transpose()?;
                (
                    error::prolong_combined_broken(&split, &fine, &coarse, &sol, cfg.ref_n)?,
                    nodal,
                    rho,
                )
            }
        };
        let report = error::norms_broken(&prolonged, &reference.values, &reference.grid, &field)?;
        let wall_ms = t.elapsed().as_millis() as u64;
        if let (Some(dir), Some(nodal)) = (dump, &nodal) {
            dump_nodal(dir, method.name(), cfg.ref_n, nodal)?;
        }
        rows.push(RowRecord {
            method,
            report,
            rho,
            wall_ms,
        });
    }
    let mut csv = String::new();
    writeln!(csv, "{CSV_HEADER}").unwrap();
    for row in &rows {
        writeln!(csv, "{}", csv_row(cfg, row)).unwrap();
    }
    Ok(RunOutput { csv, rows })
}

/// Check a run's rows against the config's expectations; returns one message
/// per failed expectation.
pub fn check_expectations(cfg: &ExperimentConfig, rows: &[RowRecord]) -> Vec<String> {
    let mut failures = Vec::new();
    for e in &cfg.expectations {
        let Some(row) = rows.iter().find(|r| r.method == e.method) else {
            failures.push(format!("no row for expected method `{}`", e.method.name()));
            continue;
        };
        let got = e.metric.pick(&row.report);
        let lo = e.value * (1.0 - cfg.expect_tol);
        let hi = e.value * (1.0 + cfg.expect_tol);
        if got < lo || got > hi {
            failures.push(format!(
                "{} {:?}: got {got:.6e}, expected {:.6e} within {:.0}%",
                e.method.name(),
                e.metric,
                e.value,
                cfg.expect_tol * 100.0
            ));
        }
    }
    failures
}

pub struct SuiteOutput {
    pub csv: String,
    pub messages: Vec<String>,
    pub exit_code: i32,
}

/// Run every `.cfg` in a directory (sorted), aggregate the CSV rows, and
/// evaluate expectation annotations. Exit code 0 on success, 1 on failures,
/// 2 if the directory is missing or holds no configs.
pub fn run_suite(dir: &Path, allow_full: bool) -> SuiteOutput {
    let mut messages = Vec::new();
    if !dir.is_dir() {
        return SuiteOutput {
            csv: String::new(),
            messages: vec![format!("suite directory `{}` not found", dir.display())],
            exit_code: 2,
        };
    }
    let mut cfgs: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|x| x == "cfg").unwrap_or(false))
            .collect(),
        Err(e) => {
            return SuiteOutput {
                csv: String::new(),
                messages: vec![format!("cannot read `{}`: {e}", dir.display())],
                exit_code: 2,
            }
        }
    };
    cfgs.sort();
    if cfgs.is_empty() {
        return SuiteOutput {
            csv: String::new(),
            messages: vec![format!("no .cfg files in `{}`", dir.display())],
            exit_code: 2,
        };
    }
    let mut csv = String::new();
    writeln!(csv, "{CSV_HEADER}").unwrap();
    let mut failed = false;
    for path in &cfgs {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let cfg = match parse_config(path) {
            Ok(c) => c,
            Err(e) => {
                messages.push(format!("{name}: parse failed: {e}"));
                failed = true;
                continue;
            }
        };
        if cfg.full_scale && !allow_full {
            messages.push(format!("{name}: skipped (full-scale; pass --full-scale to run)"));
            continue;
        }
        match run(&cfg, allow_full, None) {
            Ok(out) => {
                for row in &out.rows {
                    writeln!(csv, "{}", csv_row(&cfg, row)).unwrap();
                }
                let fails = check_expectations(&cfg, &out.rows);
                if fails.is_empty() {
                    messages.push(format!("{name}: ok"));
                } else {
                    failed = true;
                    for f in fails {
                        messages.push(format!("{name}: FAIL {f}"));
                    }
                }
            }
            Err(e) => {
                messages.push(format!("{name}: run failed: {e}"));
                failed = true;
            }
        }
    }
    SuiteOutput {
        csv,
        messages,
        exit_code: if failed { 1 } else { 0 },
    }
}

/// Compute the effective tensor of the config's coefficient over the unit
/// periodicity cell and render it.
pub fn run_homog(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let fname = path.display().to_string();
    let kv = parse_kv(&text, &fname)?;
    let mut map: HashMap<String, String> = HashMap::new();
    for (k, v, ln) in kv {
        if !["coefficient", "value", "epsilon", "resolution"].contains(&k.as_str()) {
            return Err(MsError::Config(vec![format!("{fname}:{ln}: unknown key `{k}`")]));
        }
        map.insert(k, v);
    }
    let resolution: usize = map
        .get("resolution")
        .map(|v| v.parse())
        .transpose()
        .map_err(|_| MsError::Config(vec![format!("{fname}: bad `resolution`")]))?
        .unwrap_or(256);
    // the cell problem sees the unit-cell profile (one period)
    let profile = match map.get("coefficient").map(String::as_str) {
        Some("constant") => CoefficientField::Constant(
            map.get("value").and_then(|v| v.parse().ok()).unwrap_or(1.0),
        ),
        Some("periodic") => CoefficientField::PeriodicOscillatory { epsilon: 1.0 },
        Some("layered") => CoefficientField::LayeredSine { epsilon: 1.0 },
        other => {
            return Err(MsError::Config(vec![format!(
                "{fname}: homogenization needs an analytic coefficient (constant/periodic/layered), got {other:?}"
            )]))
        }
    };
    let cell = homog::solve_cell(&|y| profile.eval(y), resolution)?;
    let tensor = homog::effective_tensor(&|y| profile.eval(y), &cell);
    let mut out = String::new();
    writeln!(out, "effective tensor (cell resolution {resolution}):").unwrap();
    writeln!(out, "  [{:.6e}  {:.6e}]", tensor.a[0][0], tensor.a[0][1]).unwrap();
    writeln!(out, "  [{:.6e}  {:.6e}]", tensor.a[1][0], tensor.a[1][1]).unwrap();
    writeln!(out, "  asymmetry {:.3e}", tensor.asymmetry).unwrap();
    Ok(out)
}

/// Generate a log-normal coefficient raster from a spec file and save it.
pub fn gen_perm(spec_path: &Path, out_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(spec_path)?;
    let fname = spec_path.display().to_string();
    let kv = parse_kv(&text, &fname)?;
    let mut map: HashMap<String, String> = HashMap::new();
    for (k, v, ln) in kv {
        if !["sigma2", "l1", "l2", "grid_n", "seed"].contains(&k.as_str()) {
            return Err(MsError::Config(vec![format!("{fname}:{ln}: unknown key `{k}`")]));
        }
        map.insert(k, v);
    }
    let getf = |key: &str, default: f64| -> Result<f64> {
        map.get(key)
            .map(|v| v.parse())
            .transpose()
            .map_err(|_| MsError::Config(vec![format!("{fname}: bad `{key}`")]))
            .map(|o| o.unwrap_or(default))
    };
    let grid_n: usize = map
        .get("grid_n")
        .map(|v| v.parse())
        .transpose()
        .map_err(|_| MsError::Config(vec![format!("{fname}: bad `grid_n`")]))?
        .unwrap_or(256);
    let seed: u64 = map
        .get("seed")
        .map(|v| v.parse())
        .transpose()
        .map_err(|_| MsError::Config(vec![format!("{fname}: bad `seed`")]))?
        .unwrap_or(0);
    let spec = LognormalSpec {
        sigma2: getf("sigma2", 1.5)?,
        l1: getf("l1", 0.01)?,
        l2: getf("l2", 0.01)?,
        nx: grid_n,
        ny: grid_n,
        seed,
    };
    let raster = coeff::generate_lognormal(&spec)?;
    let (lo, hi) = raster.min_max();
    coeff::save_raster(&raster, out_path)?;
    Ok(format!(
        "wrote {} ({}x{}, range [{lo:.3e}, {hi:.3e}], contrast {:.3e})\n",
        out_path.display(),
        grid_n,
        grid_n,
        hi / lo
    ))
}
