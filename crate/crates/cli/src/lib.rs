//! Experiment runner: parses a TOML experiment file, runs one optimizer per
//! seed and writes one CSV curve per seed plus a summary table.
//!
//! Output layout inside the output directory:
//!
//! * `curve_seed_<seed>.csv` with header
//!   `iteration,evals,best_fitness,mean_pairwise_db,process_mean_fitness_1,...`
//! * `summary.csv` with one row per seed and a final `median` row.
//!
//! Numbers are written with 17 significant digits (C `%.17g` style), so
//! every value reads back to the same `f64`. Wall-clock time is never
//! written, which keeps the files a pure function of the config and seeds.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ncnes_core::baseline::run_ncs_c;
use ncnes_core::objective::{self, Objective};
use ncnes_core::parallel::{execute, ExecPlan, Exchange, Mode};
use ncnes_core::{CurveRecord, Reevals, RunConfig, RunReport, UpdateRule};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Run(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algo {
    #[default]
    Ncnes,
    NcsC,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Ncnes => "ncnes",
            Algo::NcsC => "ncs-c",
        })
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ncnes" => Ok(Algo::Ncnes),
            "ncs-c" => Ok(Algo::NcsC),
            other => Err(format!("expected `ncnes` or `ncs-c`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective_id: String,
    pub dimension: usize,
    pub noise_sd: f64,
    /// Seed field is ignored; each run uses its entry from `seeds`.
    pub run: RunConfig,
    pub plan: ExecPlan,
    pub algo: Algo,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

/// Command-line overrides applied on top of a parsed file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces the configured seed list when non-empty.
    pub seeds: Vec<u64>,
    pub mode: Option<Mode>,
    pub algo: Option<Algo>,
    pub out_dir: Option<PathBuf>,
    pub phi: Option<f64>,
}

impl ExperimentConfig {
    pub fn objective(&self) -> Result<Arc<dyn Objective>, CliError> {
        objective::build(&self.objective_id, self.dimension, self.noise_sd).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.seeds.is_empty() {
            v.push("experiment.seeds must list at least one seed".into());
        }
        match objective::build(&self.objective_id, self.dimension, self.noise_sd) {
            Ok(obj) if obj.spec().dimension != self.run.dim() => v.push(format!(
                "objective `{}` has dimension {} but the init box has {}",
                self.objective_id,
                obj.spec().dimension,
                self.run.dim()
            )),
            Ok(_) => {}
            Err(ncnes_core::Error::InvalidConfig(msgs)) => v.extend(msgs.into_iter().map(|m| format!("objective: {m}"))),
            Err(e) => v.push(format!("objective: {e}")),
        }
        v.extend(self.run.violations());
        v.extend(self.plan.violations(&self.run));
        v
    }

    /// Applies `o` and revalidates. A new mode resets the worker count to that mode's default.
    pub fn apply(&mut self, o: Overrides) -> Result<(), CliError> {
        if !o.seeds.is_empty() {
            self.seeds = o.seeds;
        }
        if let Some(mode) = o.mode {
            if mode != self.plan.mode {
                self.plan.mode = mode;
                self.plan.workers = ExecPlan::for_mode(mode, &self.run).workers;
            }
        }
        if let Some(algo) = o.algo {
            self.algo = algo;
        }
        if let Some(out) = o.out_dir {
            self.out_dir = out;
        }
        if let Some(phi) = o.phi {
            self.run.phi = phi;
        }
        let v = self.violations();
        if v.is_empty() { Ok(()) } else { Err(CliError::Config(v)) }
    }
}

const SECTIONS: [(&str, &[&str]); 5] = [
    ("objective", &["id", "dimension", "noise_sd", "init_lower", "init_upper"]),
    ("run", &["lambda", "mu", "phi", "auto_phi", "eta_m_init", "eta_v_init", "budget_evals", "update_rule", "reevals"]),
    ("exec", &["mode", "workers", "exchange", "slow_eval_ms"]),
    ("experiment", &["seeds", "out", "algo"]),
    ("ncs", &["sigma_init", "epoch", "factor"]),
];

/// Typed access to one section, recording every problem instead of stopping.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    errors: &'a mut Vec<String>,
}

impl Section<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn bad(&mut self, key: &str, expected: &str) {
        self.errors.push(format!("{}.{key}: expected {expected}", self.name));
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        match self.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(n) => Some(*n as f64),
            _ => {
                self.bad(key, "a number");
                None
            }
        }
    }

    fn uint(&mut self, key: &str) -> Option<u64> {
        match self.get(key)? {
            Value::Integer(n) if *n >= 0 => Some(*n as u64),
            _ => {
                self.bad(key, "a non-negative integer");
                None
            }
        }
    }

    fn boolean(&mut self, key: &str) -> Option<bool> {
        match self.get(key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.bad(key, "true or false");
                None
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.get(key)? {
            Value::String(s) => Some(s.clone()),
            _ => {
                self.bad(key, "a string");
                None
            }
        }
    }

    fn parsed<T: FromStr<Err = String>>(&mut self, key: &str) -> Option<T> {
        let s = self.string(key)?;
        match s.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{}.{key}: {e}", self.name));
                None
            }
        }
    }

    /// A number (broadcast to every dimension) or an array of numbers.
    fn floats(&mut self, key: &str) -> Option<Bound> {
        match self.get(key)? {
            Value::Float(x) => Some(Bound::Scalar(*x)),
            Value::Integer(n) => Some(Bound::Scalar(*n as f64)),
            Value::Array(items) => {
                let xs: Option<Vec<f64>> = items
                    .iter()
                    .map(|v| match v {
                        Value::Float(x) => Some(*x),
                        Value::Integer(n) => Some(*n as f64),
                        _ => None,
                    })
                    .collect();
                if xs.is_none() {
                    self.bad(key, "a number or an array of numbers");
                }
                xs.map(Bound::PerDim)
            }
            _ => {
                self.bad(key, "a number or an array of numbers");
                None
            }
        }
    }

    fn uints(&mut self, key: &str) -> Option<Vec<u64>> {
        let items = match self.get(key)? {
            Value::Array(items) => items,
            _ => {
                self.bad(key, "an array of non-negative integers");
                return None;
            }
        };
        let xs: Option<Vec<u64>> = items
            .iter()
            .map(|v| match v {
                Value::Integer(n) if *n >= 0 => Some(*n as u64),
                _ => None,
            })
            .collect();
        if xs.is_none() {
            self.bad(key, "an array of non-negative integers");
        }
        xs
    }
}

enum Bound {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl Bound {
    fn expand(self, dim: usize) -> Vec<f64> {
        match self {
            Bound::Scalar(x) => vec![x; dim],
            Bound::PerDim(xs) => xs,
        }
    }
}

/// Reads and fully validates an experiment file. Every problem found is
/// reported, including unknown sections and keys.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, CliError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(vec![e.message().to_string()]))?;
    let mut errors = Vec::new();
    for (name, value) in &doc {
        match SECTIONS.iter().find(|(s, _)| s == name) {
            None => errors.push(format!("unknown section [{name}]")),
            Some((_, keys)) => match value {
                Value::Table(t) => {
                    for key in t.keys().filter(|k| !keys.contains(&k.as_str())) {
                        errors.push(format!("unknown key `{key}` in [{name}]"));
                    }
                }
                _ => errors.push(format!("`{name}` must be a section")),
            },
        }
    }
    let table = |name: &str| doc.get(name).and_then(Value::as_table);

    let mut s = Section { name: "objective", table: table("objective"), errors: &mut errors };
    let id = s.string("id");
    if id.is_none() && s.get("id").is_none() {
        s.errors.push("objective.id is required".into());
    }
    let id = id.unwrap_or_default();
    let fixed_dim = objective::build(&id, 1, 0.0).ok().filter(|o| o.spec().episodic).map(|o| o.spec().dimension);
    let dimension = match (s.uint("dimension"), fixed_dim) {
        (Some(d), Some(fixed)) if d as usize != fixed => {
            s.errors.push(format!("objective.dimension: `{id}` has a fixed dimension of {fixed}, got {d}"));
            fixed
        }
        (Some(d), _) => d as usize,
        (None, Some(d)) => d,
        (None, None) => {
            if s.get("dimension").is_none() {
                s.errors.push("objective.dimension is required".into());
            }
            1
        }
    };
    let noise_sd = s.float("noise_sd").unwrap_or(0.0);
    let init_lower = s.floats("init_lower");
    let init_upper = s.floats("init_upper");

    let mut r = Section { name: "run", table: table("run"), errors: &mut errors };
    let budget = r.uint("budget_evals");
    if budget.is_none() && r.get("budget_evals").is_none() {
        r.errors.push("run.budget_evals is required".into());
    }
    let mut run = match objective::build(&id, dimension, noise_sd) {
        Ok(obj) => RunConfig::for_objective(obj.spec(), budget.unwrap_or(0)),
        Err(_) => RunConfig::new(dimension, budget.unwrap_or(0)),
    };
    if let Some(x) = r.uint("lambda") {
        run.lambda = x as usize;
    }
    if let Some(x) = r.uint("mu") {
        run.mu = x as usize;
    }
    if let Some(x) = r.float("phi") {
        run.phi = x;
    }
    if let Some(x) = r.boolean("auto_phi") {
        run.auto_phi = x;
    }
    if let Some(x) = r.float("eta_m_init") {
        run.eta_m_init = x;
    }
    if let Some(x) = r.float("eta_v_init") {
        run.eta_v_init = x;
    }
    if let Some(x) = r.parsed::<UpdateRule>("update_rule") {
        run.update_rule = x;
    }
    match r.get("reevals") {
        None => {}
        Some(Value::Integer(n)) if *n >= 0 => run.reevals = Reevals::Fixed(*n as u32),
        Some(Value::Array(a)) if a.len() == 2 && a.iter().all(|v| v.as_integer().is_some_and(|n| n >= 0)) => {
            let lo = a[0].as_integer().unwrap_or(0) as u32;
            let hi = a[1].as_integer().unwrap_or(0) as u32;
            run.reevals = Reevals::Range { lo, hi };
        }
        Some(_) => r.bad("reevals", "an integer or a [lo, hi] pair"),
    }
    let dim = run.dim();
    if let Some(lo) = init_lower {
        run.init_box.lower = lo.expand(dim);
    }
    if let Some(hi) = init_upper {
        run.init_box.upper = hi.expand(dim);
    }
    if run.init_box.lower.len() != dim || run.init_box.upper.len() != dim {
        errors.push(format!("objective.init_lower / init_upper must have {dim} entries"));
    }

    let mut n = Section { name: "ncs", table: table("ncs"), errors: &mut errors };
    if let Some(x) = n.float("sigma_init") {
        run.ncs.sigma_init = Some(x);
    }
    if let Some(x) = n.uint("epoch") {
        run.ncs.epoch = x;
    }
    if let Some(x) = n.float("factor") {
        run.ncs.factor = x;
    }

    let mut e = Section { name: "exec", table: table("exec"), errors: &mut errors };
    let mode = e.parsed::<Mode>("mode").unwrap_or(Mode::Serial);
    let mut plan = ExecPlan::for_mode(mode, &run);
    if let Some(w) = e.uint("workers") {
        plan.workers = w as usize;
    }
    if let Some(x) = e.parsed::<Exchange>("exchange") {
        plan.exchange = x;
    }
    plan.slow_eval_ms = e.float("slow_eval_ms");

    let mut x = Section { name: "experiment", table: table("experiment"), errors: &mut errors };
    let seeds = x.uints("seeds").unwrap_or_else(|| vec![0]);
    let out_dir = PathBuf::from(x.string("out").unwrap_or_else(|| "results".into()));
    let algo = x.parsed::<Algo>("algo").unwrap_or_default();

    let cfg = ExperimentConfig { objective_id: id, dimension, noise_sd, run, plan, algo, seeds, out_dir };
    errors.extend(cfg.violations());
    errors.dedup();
    if errors.is_empty() { Ok(cfg) } else { Err(CliError::Config(errors)) }
}

/// `%.17g`: 17 significant digits, trailing zeros removed, exponent form
/// outside `1e-4 <= |x| < 1e17`.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { s }
}

pub fn curve_header(lambda: usize) -> String {
    let mut h = String::from("iteration,evals,best_fitness,mean_pairwise_db");
    for i in 1..=lambda {
        h.push_str(&format!(",process_mean_fitness_{i}"));
    }
    h
}

/// Writes the report's curve as CSV.
pub fn emit_curves(report: &RunReport, path: &Path) -> Result<(), CliError> {
    let mut out = curve_header(report.lambda);
    out.push('\n');
    for rec in &report.curve {
        out.push_str(&format!(
            "{},{},{},{}",
            rec.iteration,
            rec.evals,
            format_g17(rec.best_fitness),
            format_g17(rec.mean_pairwise_db)
        ));
        for f in &rec.process_mean_fitness {
            out.push(',');
            out.push_str(&format_g17(*f));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads a file written by [`emit_curves`].
pub fn read_curve(path: &Path) -> Result<Vec<CurveRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |line: usize, what: &str| CliError::Run(format!("{}:{line}: {what}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let lambda = header.split(',').count().checked_sub(4).ok_or_else(|| bad(1, "short header"))?;
    if header != curve_header(lambda) {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != lambda + 4 {
                return Err(bad(n + 2, "wrong number of fields"));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad(n + 2, "bad number"));
            Ok(CurveRecord {
                iteration: fields[0].parse().map_err(|_| bad(n + 2, "bad iteration"))?,
                evals: fields[1].parse().map_err(|_| bad(n + 2, "bad evals"))?,
                best_fitness: float(fields[2])?,
                mean_pairwise_db: float(fields[3])?,
                process_mean_fitness: fields[4..].iter().map(|s| float(s)).collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

pub fn curve_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("curve_seed_{seed}.csv"))
}

pub const SUMMARY_HEADER: &str = "seed,iterations,evals,best_fitness,final_mean_pairwise_db";

/// Final-row statistics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub iterations: u64,
    pub evals: u64,
    pub best_fitness: f64,
    pub final_mean_pairwise_db: f64,
}

impl SeedSummary {
    fn of(seed: u64, report: &RunReport) -> Self {
        let last = report.curve.last();
        Self {
            seed,
            iterations: report.curve.len() as u64,
            evals: report.evals,
            best_fitness: report.best_fitness,
            final_mean_pairwise_db: last.map_or(f64::NAN, |c| c.mean_pairwise_db),
        }
    }
}

/// Median with the even-length case averaged; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

pub fn write_summary(rows: &[SeedSummary], path: &Path) -> Result<(), CliError> {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.seed,
            r.iterations,
            r.evals,
            format_g17(r.best_fitness),
            format_g17(r.final_mean_pairwise_db)
        ));
    }
    let col = |f: fn(&SeedSummary) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>());
    out.push_str(&format!(
        "median,{},{},{},{}\n",
        format_g17(col(|r| r.iterations as f64)),
        format_g17(col(|r| r.evals as f64)),
        format_g17(col(|r| r.best_fitness)),
        format_g17(col(|r| r.final_mean_pairwise_db))
    ));
    fs::write(path, out).map_err(io_err(path))
}

/// Runs every seed, writes the curves and the summary, and fails if any run failed.
pub fn run_experiment(cfg: &ExperimentConfig, quiet: bool) -> Result<Vec<SeedSummary>, CliError> {
    let objective = cfg.objective()?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        let run = RunConfig { seed, ..cfg.run.clone() };
        let report = match cfg.algo {
            Algo::Ncnes => execute(run, &cfg.plan, objective.clone()).map(|(r, _)| r),
            Algo::NcsC => run_ncs_c(run, objective.clone()),
        }
        .map_err(|e| CliError::Run(format!("seed {seed}: {e}")))?;
        emit_curves(&report, &curve_path(&cfg.out_dir, seed))?;
        let row = SeedSummary::of(seed, &report);
        if let Some(f) = &report.failure {
            failures.push(format!("seed {seed}: {f}"));
        }
        if !quiet {
            let _ = writeln!(
                io::stderr(),
                "{} seed {seed}: best {} after {} evals ({} iterations)",
                cfg.algo,
                format_g17(row.best_fitness),
                row.evals,
                row.iterations
            );
        }
        rows.push(row);
    }
    write_summary(&rows, &cfg.out_dir.join("summary.csv"))?;
    if failures.is_empty() { Ok(rows) } else { Err(CliError::Run(failures.join("\n"))) }
}
