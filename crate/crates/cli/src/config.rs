//! Experiment configuration: TOML text in, validated [`ExperimentConfig`] out.
//!
//! Parsing walks the document by hand so that every problem (unknown key,
//! wrong type, violated constraint) is reported together, each with its
//! dotted path.

use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};
use sodesync::{DriftSpec, IntegratorOptions, SystemSpec, TimeGrid, MIN_WINDOW_NODES};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PairwiseSync,
    PullbackAttractor,
    NuSweep,
    AveragedConvergence,
    ConjugacyCheck,
    SpectralCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::PairwiseSync,
        Experiment::PullbackAttractor,
        Experiment::NuSweep,
        Experiment::AveragedConvergence,
        Experiment::ConjugacyCheck,
        Experiment::SpectralCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::PairwiseSync => "pairwise-sync",
            Experiment::PullbackAttractor => "pullback-attractor",
            Experiment::NuSweep => "nu-sweep",
            Experiment::AveragedConvergence => "averaged-convergence",
            Experiment::ConjugacyCheck => "conjugacy-check",
            Experiment::SpectralCheck => "spectral-check",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    fn needs_system(self) -> bool {
        self != Experiment::SpectralCheck
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DriftConfig {
    Linear { lambda: f64 },
    Cubic { a: f64, b: f64 },
    Affine { lambda: f64, offset: f64 },
    Tabulated { knots: Vec<f64>, values: Vec<f64>, l: f64 },
}

impl DriftConfig {
    fn build(&self, d: usize) -> sodesync::Result<DriftSpec<f64>> {
        match self {
            DriftConfig::Linear { lambda } => DriftSpec::linear(*lambda, d),
            DriftConfig::Cubic { a, b } => DriftSpec::cubic(*a, *b, d),
            DriftConfig::Affine { lambda, offset } => DriftSpec::affine(*lambda, *offset, d),
            DriftConfig::Tabulated { knots, values, l } => DriftSpec::tabulated(knots.clone(), values.clone(), d, *l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    pub n: usize,
    pub d: usize,
    pub nu: f64,
    /// One entry for all components or one per component.
    pub drifts: Vec<DriftConfig>,
    /// Noise coefficient rows; one row for all components or one per component.
    pub coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubstepConfig {
    Auto,
    Fixed(usize),
}

/// Named thresholds used by the pass/fail assertions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub pairwise_rate: f64,
    pub envelope_slack: f64,
    pub envelope_fraction: f64,
    pub attractor: f64,
    pub invariance: f64,
    pub attractor_fraction: f64,
    pub slope_target: f64,
    pub slope_band: f64,
    pub averaged_fraction: f64,
    pub conjugacy_rel: f64,
    pub conjugacy_fraction: f64,
    pub spectral: f64,
    pub flagged_budget: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            pairwise_rate: -0.9,
            envelope_slack: 0.05,
            envelope_fraction: 0.9,
            attractor: 1e-8,
            invariance: 1e-7,
            attractor_fraction: 0.9,
            slope_target: -1.0,
            slope_band: 0.3,
            averaged_fraction: 0.9,
            conjugacy_rel: 1e-2,
            conjugacy_fraction: 0.95,
            spectral: 1e-10,
            flagged_budget: 0.2,
        }
    }
}

const TOLERANCE_KEYS: [&str; 13] = [
    "pairwise_rate",
    "envelope_slack",
    "envelope_fraction",
    "attractor",
    "invariance",
    "attractor_fraction",
    "slope_target",
    "slope_band",
    "averaged_fraction",
    "conjugacy_rel",
    "conjugacy_fraction",
    "spectral",
    "flagged_budget",
];

impl Tolerances {
    fn slot(&mut self, key: &str) -> &mut f64 {
        match key {
            "pairwise_rate" => &mut self.pairwise_rate,
            "envelope_slack" => &mut self.envelope_slack,
            "envelope_fraction" => &mut self.envelope_fraction,
            "attractor" => &mut self.attractor,
            "invariance" => &mut self.invariance,
            "attractor_fraction" => &mut self.attractor_fraction,
            "slope_target" => &mut self.slope_target,
            "slope_band" => &mut self.slope_band,
            "averaged_fraction" => &mut self.averaged_fraction,
            "conjugacy_rel" => &mut self.conjugacy_rel,
            "conjugacy_fraction" => &mut self.conjugacy_fraction,
            "spectral" => &mut self.spectral,
            "flagged_budget" => &mut self.flagged_budget,
            _ => unreachable!("key list and fields agree"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub system: Option<SystemConfig>,
    pub grid: Option<GridConfig>,
    pub seeds: Vec<u64>,
    pub nus: Vec<f64>,
    pub window: (f64, f64),
    pub depths: Vec<f64>,
    pub t0: f64,
    /// Initial RODE state, `N·d` entries or one broadcast value.
    pub initial: Option<Vec<f64>>,
    pub p_max: usize,
    pub substeps: SubstepConfig,
    pub tolerances: Tolerances,
    /// Not part of the hash: it does not change any output.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

/// One problem found while reading a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Default)]
struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn as_f64(v: &Value, path: &str, issues: &mut Issues) -> Option<f64> {
    match v {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        other => {
            issues.push(path, format!("expected a number, found {}", type_name(other)));
            None
        }
    }
}

fn as_u64(v: &Value, path: &str, issues: &mut Issues) -> Option<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as u64),
        Value::Integer(_) => {
            issues.push(path, "expected a non-negative integer");
            None
        }
        other => {
            issues.push(path, format!("expected an integer, found {}", type_name(other)));
            None
        }
    }
}

fn as_array<'v>(v: &'v Value, path: &str, issues: &mut Issues) -> Option<&'v Vec<Value>> {
    match v {
        Value::Array(a) => Some(a),
        other => {
            issues.push(path, format!("expected an array, found {}", type_name(other)));
            None
        }
    }
}

fn as_f64_list(v: &Value, path: &str, issues: &mut Issues) -> Option<Vec<f64>> {
    let items = as_array(v, path, issues)?;
    let parsed: Vec<Option<f64>> = items
        .iter()
        .enumerate()
        .map(|(i, x)| as_f64(x, &format!("{path}[{i}]"), issues))
        .collect();
    parsed.into_iter().collect()
}

fn as_table<'v>(v: &'v Value, path: &str, issues: &mut Issues) -> Option<&'v Table> {
    match v {
        Value::Table(t) => Some(t),
        other => {
            issues.push(path, format!("expected a table, found {}", type_name(other)));
            None
        }
    }
}

fn reject_unknown(table: &Table, prefix: &str, known: &[&str], issues: &mut Issues) {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            issues.push(join(prefix, key), "unknown key");
        }
    }
}

fn required<'t>(table: &'t Table, prefix: &str, key: &str, issues: &mut Issues) -> Option<&'t Value> {
    let v = table.get(key);
    if v.is_none() {
        issues.push(join(prefix, key), "missing required key");
    }
    v
}

fn parse_drift(v: &Value, path: &str, issues: &mut Issues) -> Option<DriftConfig> {
    let t = as_table(v, path, issues)?;
    let kind = match required(t, path, "kind", issues)? {
        Value::String(s) => s.as_str(),
        other => {
            issues.push(join(path, "kind"), format!("expected a string, found {}", type_name(other)));
            return None;
        }
    };
    let known: &[&str] = match kind {
        "linear" => &["kind", "lambda"],
        "cubic" => &["kind", "a", "b"],
        "affine" => &["kind", "lambda", "offset"],
        "tabulated" => &["kind", "knots", "values", "l"],
        other => {
            issues.push(
                join(path, "kind"),
                format!("unknown drift kind {other:?}; expected linear, cubic, affine or tabulated"),
            );
            return None;
        }
    };
    reject_unknown(t, path, known, issues);
    let num = |key: &str, issues: &mut Issues| {
        required(t, path, key, issues).and_then(|v| as_f64(v, &join(path, key), issues))
    };
    match kind {
        "linear" => Some(DriftConfig::Linear {
            lambda: num("lambda", issues)?,
        }),
        "cubic" => {
            let (a, b) = (num("a", issues), num("b", issues));
            Some(DriftConfig::Cubic { a: a?, b: b? })
        }
        "affine" => {
            let (lambda, offset) = (num("lambda", issues), num("offset", issues));
            Some(DriftConfig::Affine {
                lambda: lambda?,
                offset: offset?,
            })
        }
        _ => {
            let list = |key: &str, issues: &mut Issues| {
                required(t, path, key, issues).and_then(|v| as_f64_list(v, &join(path, key), issues))
            };
            let (knots, values, l) = (list("knots", issues), list("values", issues), num("l", issues));
            Some(DriftConfig::Tabulated {
                knots: knots?,
                values: values?,
                l: l?,
            })
        }
    }
}

fn parse_system(t: &Table, issues: &mut Issues) -> Option<SystemConfig> {
    let p = "system";
    reject_unknown(t, p, &["n", "d", "nu", "drifts", "coeffs"], issues);
    let n = required(t, p, "n", issues).and_then(|v| as_u64(v, "system.n", issues));
    let d = match t.get("d") {
        Some(v) => as_u64(v, "system.d", issues),
        None => Some(1),
    };
    let nu = match t.get("nu") {
        Some(v) => as_f64(v, "system.nu", issues),
        None => Some(1.0),
    };
    let drifts = required(t, p, "drifts", issues)
        .and_then(|v| as_array(v, "system.drifts", issues))
        .and_then(|items| {
            let parsed: Vec<Option<DriftConfig>> = items
                .iter()
                .enumerate()
                .map(|(i, x)| parse_drift(x, &format!("system.drifts[{i}]"), issues))
                .collect();
            parsed.into_iter().collect::<Option<Vec<_>>>()
        });
    let coeffs = required(t, p, "coeffs", issues)
        .and_then(|v| as_array(v, "system.coeffs", issues))
        .and_then(|rows| {
            let parsed: Vec<Option<Vec<f64>>> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| as_f64_list(r, &format!("system.coeffs[{i}]"), issues))
                .collect();
            parsed.into_iter().collect::<Option<Vec<_>>>()
        });
    let (n, d, nu, drifts, coeffs) = (n?, d?, nu?, drifts?, coeffs?);
    let mut ok = true;
    // the coupled problem is posed on a cycle of at least three systems
    if n < 3 {
        issues.push("system.n", format!("N must be at least 3, got {n}"));
        ok = false;
    }
    if d == 0 {
        issues.push("system.d", "d must be at least 1");
        ok = false;
    }
    if !(nu >= 0.0) || !nu.is_finite() {
        issues.push("system.nu", "coupling strength must be finite and non-negative");
        ok = false;
    }
    if drifts.len() != 1 && drifts.len() as u64 != n {
        issues.push("system.drifts", format!("expected 1 or {n} drifts, got {}", drifts.len()));
        ok = false;
    }
    if coeffs.len() != 1 && coeffs.len() as u64 != n {
        issues.push("system.coeffs", format!("expected 1 or {n} rows, got {}", coeffs.len()));
        ok = false;
    }
    if coeffs.first().is_some_and(|r| r.is_empty()) || coeffs.is_empty() {
        issues.push("system.coeffs", "at least one noise driver is required");
        ok = false;
    } else if coeffs.iter().any(|r| r.len() != coeffs[0].len()) {
        issues.push("system.coeffs", "all rows must have the same number of drivers");
        ok = false;
    }
    ok.then_some(SystemConfig {
        n: n as usize,
        d: d as usize,
        nu,
        drifts,
        coeffs,
    })
}

fn parse_grid(t: &Table, issues: &mut Issues) -> Option<GridConfig> {
    reject_unknown(t, "grid", &["t_min", "t_max", "h"], issues);
    let mut get = |key: &str| required(t, "grid", key, issues).and_then(|v| as_f64(v, &join("grid", key), issues));
    let (t_min, t_max, h) = (get("t_min"), get("t_max"), get("h"));
    let grid = GridConfig {
        t_min: t_min?,
        t_max: t_max?,
        h: h?,
    };
    if let Err(e) = TimeGrid::new(grid.t_min, grid.t_max, grid.h) {
        issues.push("grid", e.to_string());
        return None;
    }
    Some(grid)
}

fn check_ascending(values: &[f64], path: &str, what: &str, issues: &mut Issues) {
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        issues.push(path, format!("{what} not ascending"));
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<ConfigIssue>> {
    let doc: Table = toml::from_str(text).map_err(|e| {
        vec![ConfigIssue {
            path: String::new(),
            message: format!("malformed TOML: {}", e.message()),
        }]
    })?;
    let mut issues = Issues::default();
    reject_unknown(
        &doc,
        "",
        &[
            "experiment",
            "system",
            "grid",
            "seeds",
            "nus",
            "window",
            "depths",
            "t0",
            "initial",
            "p_max",
            "substeps",
            "tolerances",
            "output_dir",
        ],
        &mut issues,
    );

    let experiment = match required(&doc, "", "experiment", &mut issues) {
        Some(Value::String(s)) => {
            let e = Experiment::parse(s);
            if e.is_none() {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                issues.push("experiment", format!("unknown experiment {s:?}; expected one of {}", names.join(", ")));
            }
            e
        }
        Some(other) => {
            issues.push("experiment", format!("expected a string, found {}", type_name(other)));
            None
        }
        None => None,
    };
    let needs_system = experiment.is_none_or(|e| e.needs_system());

    let system = match doc.get("system") {
        Some(v) => as_table(v, "system", &mut issues).and_then(|t| parse_system(t, &mut issues)),
        None => {
            if needs_system {
                issues.push("system", "missing required table");
            }
            None
        }
    };
    let grid = match doc.get("grid") {
        Some(v) => as_table(v, "grid", &mut issues).and_then(|t| parse_grid(t, &mut issues)),
        None => {
            if needs_system {
                issues.push("grid", "missing required table");
            }
            None
        }
    };

    let seeds = match doc.get("seeds") {
        Some(v) => as_array(v, "seeds", &mut issues)
            .map(|a| {
                a.iter()
                    .enumerate()
                    .filter_map(|(i, x)| as_u64(x, &format!("seeds[{i}]"), &mut issues))
                    .collect::<Vec<_>>()
            })
            .unwrap_or_default(),
        None => Vec::new(),
    };
    if needs_system && seeds.is_empty() && !issues.0.iter().any(|i| i.path.starts_with("seeds")) {
        issues.push("seeds", "seed list must be non-empty");
    }

    let default_nu = system.as_ref().map_or(1.0, |s| s.nu);
    let nus = match doc.get("nus") {
        Some(v) => as_f64_list(v, "nus", &mut issues).unwrap_or_default(),
        None => vec![default_nu],
    };
    if matches!(experiment, Some(Experiment::NuSweep | Experiment::AveragedConvergence)) {
        if nus.is_empty() {
            issues.push("nus", "coupling list must be non-empty");
        }
        if nus.iter().any(|&v| !(v >= 1.0)) {
            issues.push("nus", "every coupling strength must be at least 1");
        }
    }
    check_ascending(&nus, "nus", "nus", &mut issues);

    let window = match doc.get("window") {
        Some(v) => match as_f64_list(v, "window", &mut issues) {
            Some(w) if w.len() == 2 => (w[0], w[1]),
            Some(_) => {
                issues.push("window", "expected [T1, T2]");
                (1.0, 2.0)
            }
            None => (1.0, 2.0),
        },
        None => (1.0, 2.0),
    };
    let depths = match doc.get("depths") {
        Some(v) => as_f64_list(v, "depths", &mut issues).unwrap_or_default(),
        None => vec![20.0, 30.0],
    };
    if depths.is_empty() || depths.iter().any(|&d| !(d > 0.0)) {
        issues.push("depths", "pullback depths must be a non-empty list of positive times");
    }
    check_ascending(&depths, "depths", "depths", &mut issues);
    let t0 = doc.get("t0").and_then(|v| as_f64(v, "t0", &mut issues)).unwrap_or(0.0);
    let initial = doc.get("initial").and_then(|v| as_f64_list(v, "initial", &mut issues));
    let p_max = match doc.get("p_max") {
        Some(v) => as_u64(v, "p_max", &mut issues).unwrap_or(50) as usize,
        None => 50,
    };
    if p_max < 2 {
        issues.push("p_max", "p_max must be at least 2");
    }
    let substeps = match doc.get("substeps") {
        None => SubstepConfig::Fixed(1),
        Some(Value::String(s)) if s == "auto" => SubstepConfig::Auto,
        Some(Value::Integer(k)) if *k >= 1 => SubstepConfig::Fixed(*k as usize),
        Some(_) => {
            issues.push("substeps", "expected \"auto\" or a positive integer");
            SubstepConfig::Fixed(1)
        }
    };
    let mut tolerances = Tolerances::default();
    if let Some(t) = doc.get("tolerances").and_then(|v| as_table(v, "tolerances", &mut issues)) {
        reject_unknown(t, "tolerances", &TOLERANCE_KEYS, &mut issues);
        for key in TOLERANCE_KEYS {
            if let Some(x) = t.get(key).and_then(|v| as_f64(v, &join("tolerances", key), &mut issues)) {
                *tolerances.slot(key) = x;
            }
        }
        for key in TOLERANCE_KEYS.iter().filter(|k| k.ends_with("fraction") || **k == "flagged_budget") {
            let x = *tolerances.slot(key);
            if !(0.0..=1.0).contains(&x) {
                issues.push(join("tolerances", key), "fractions must lie in [0, 1]");
            }
        }
    }
    let output_dir = match doc.get("output_dir") {
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(other) => {
            issues.push("output_dir", format!("expected a string, found {}", type_name(other)));
            None
        }
        None => None,
    };

    let config = ExperimentConfig {
        experiment: experiment.unwrap_or(Experiment::SpectralCheck),
        system,
        grid,
        seeds,
        nus,
        window,
        depths,
        t0,
        initial,
        p_max,
        substeps,
        tolerances,
        output_dir,
    };
    if experiment.is_some() {
        check_consistency(&config, &mut issues);
    }
    if issues.0.is_empty() {
        Ok(config)
    } else {
        Err(issues.0)
    }
}

/// Cross-field checks that need the system and grid together.
fn check_consistency(c: &ExperimentConfig, issues: &mut Issues) {
    let (Some(sys), Some(g)) = (&c.system, &c.grid) else {
        return;
    };
    if let Err(e) = build_system(sys) {
        issues.push("system", e.to_string());
    }
    if let Some(x) = &c.initial {
        if x.len() != 1 && x.len() != sys.n * sys.d {
            issues.push("initial", format!("expected 1 or {} values", sys.n * sys.d));
        }
    }
    let grid = TimeGrid::new(g.t_min, g.t_max, g.h).expect("validated");
    let deepest = c.depths.last().copied().unwrap_or(0.0);
    let windowed = matches!(c.experiment, Experiment::NuSweep | Experiment::AveragedConvergence);
    if windowed {
        let (t1, t2) = c.window;
        match grid.window(t1, t2) {
            Ok((w, _)) if w.n_points() < MIN_WINDOW_NODES => issues.push(
                "window",
                format!("window has {} grid nodes, need at least {MIN_WINDOW_NODES}", w.n_points()),
            ),
            Ok(_) => {}
            Err(e) => issues.push("window", e.to_string()),
        }
    }
    match c.experiment {
        Experiment::PairwiseSync => {
            if !(g.t_min < 0.0 && g.t_max > 0.0) {
                issues.push("grid", "pairwise-sync needs a grid with t_min < 0 < t_max to locate T_omega");
            }
        }
        Experiment::PullbackAttractor => {
            if g.t_min > -deepest {
                issues.push("grid.t_min", format!("pullback needs t_min <= -{deepest}"));
            }
        }
        Experiment::AveragedConvergence => {
            if g.t_min > c.window.0 - deepest {
                issues.push("grid.t_min", format!("pullback needs t_min <= {}", c.window.0 - deepest));
            }
        }
        Experiment::NuSweep | Experiment::ConjugacyCheck => {
            if grid.index_of(c.t0).is_err() || c.t0 >= g.t_max {
                issues.push("t0", "initial time must be a grid node before t_max");
            }
            if c.experiment == Experiment::NuSweep && c.window.0 < c.t0 {
                issues.push("window", "window starts before t0");
            }
        }
        Experiment::SpectralCheck => {}
    }
}

/// The system at the config's base coupling strength.
pub fn build_system(sys: &SystemConfig) -> sodesync::Result<SystemSpec<f64>> {
    let drifts = (0..sys.n)
        .map(|j| sys.drifts[j.min(sys.drifts.len() - 1)].build(sys.d))
        .collect::<sodesync::Result<Vec<_>>>()?;
    let coeffs = (0..sys.n).map(|j| sys.coeffs[j.min(sys.coeffs.len() - 1)].clone()).collect();
    SystemSpec::new(drifts, coeffs, sys.nu)
}

impl ExperimentConfig {
    /// A config for the spectral check alone.
    pub fn spectral(p_max: usize) -> Self {
        ExperimentConfig {
            experiment: Experiment::SpectralCheck,
            system: None,
            grid: None,
            seeds: Vec::new(),
            nus: Vec::new(),
            window: (1.0, 2.0),
            depths: vec![20.0, 30.0],
            t0: 0.0,
            initial: None,
            p_max,
            substeps: SubstepConfig::Fixed(1),
            tolerances: Tolerances::default(),
            output_dir: None,
        }
    }

    /// SHA-256 of the canonical JSON form of every output-relevant field.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn integrator(&self) -> IntegratorOptions {
        match self.substeps {
            SubstepConfig::Auto => IntegratorOptions::auto(),
            SubstepConfig::Fixed(k) => IntegratorOptions::fixed(k),
        }
    }

    pub fn time_grid(&self) -> Option<TimeGrid<f64>> {
        self.grid.map(|g| TimeGrid::new(g.t_min, g.t_max, g.h).expect("validated"))
    }
}

/// Annotated example config documenting every key.
pub const SCHEMA: &str = r#"# sodesync experiment config (TOML). Unknown keys are rejected.

experiment = "pairwise-sync"   # pairwise-sync | pullback-attractor | nu-sweep |
                               # averaged-convergence | conjugacy-check | spectral-check
seeds = [0, 1, 2]              # required except for spectral-check; non-empty
nus = [1.0, 10.0, 100.0]       # ascending, each >= 1; default [system.nu]
window = [1.0, 2.0]            # [T1, T2], at least 10 grid nodes; default [1, 2]
depths = [20.0, 30.0]          # ascending pullback depths; default [20, 30]
t0 = 0.0                       # start time for nu-sweep and conjugacy-check; default 0
initial = [1.0]                # initial RODE state, 1 or N*d values; default all ones
p_max = 50                     # largest tridiagonal size for spectral-check; default 50
substeps = 1                   # Heun sub-steps per grid cell, or "auto"; default 1
output_dir = "out"             # optional; --out and SODESYNC_OUTPUT_DIR also apply

[system]                       # required except for spectral-check
n = 4                          # number of coupled systems, at least 3
d = 1                          # state dimension of each system; default 1
nu = 1.0                       # base coupling strength; default 1
coeffs = [[0.5]]               # noise rows c^(j), 1 row or N rows of m drivers
drifts = [                     # 1 drift or N drifts
  { kind = "linear", lambda = 1.0 },             # f(x) = -lambda x
  # { kind = "cubic", a = 1.0, b = 1.0 },        # f(x) = -a x - b x^3 componentwise
  # { kind = "affine", lambda = 1.0, offset = 0.5 },  # f(x) = offset - lambda x
  # { kind = "tabulated", knots = [...], values = [...], l = 1.0 },
]

[grid]                         # required except for spectral-check
t_min = -40.0
t_max = 40.0
h = 0.01

[tolerances]                   # all optional; defaults shown
pairwise_rate = -0.9           # deterministic fitted rate must not exceed this
envelope_slack = 0.05          # multiplicative slack on the contraction envelope
envelope_fraction = 0.9        # share of seeds that must satisfy the envelope
attractor = 1e-8               # depth-to-depth and start-to-start pullback gap
invariance = 1e-7              # gap between evolved and shifted pullback estimates
attractor_fraction = 0.9
slope_target = -1.0            # expected log-log slope of the component gap in nu
slope_band = 0.3
averaged_fraction = 0.9
conjugacy_rel = 1e-2           # relative sup gap between the two frames
conjugacy_fraction = 0.95
spectral = 1e-10               # eigenvalue agreement
flagged_budget = 0.2           # above this share of flagged seeds a run is inconclusive
"#;
