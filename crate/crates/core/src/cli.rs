//! Command-line front end: `eval`, `scan-tube`, `probe` and `report`.
//!
//! Configuration is one flat JSON document (every key optional); flags
//! override it. Exit codes: 0 ok, 2 usage or invalid configuration, 3 a
//! solver stopped on an iteration cap (output still written), 4 I/O.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::envelope::{envelope_bracket, EnvelopeConfig};
use crate::error::Error;
use crate::experiments::{
    direction_constancy_probe, gap_scan, probe_dist_tube_to_s, probe_min_w, segment_affinity_probe, GapGrid,
    GapRecord, TubeSpec, Verdict,
};
use crate::linalg::{Mat2, MinorsPoint};
use crate::objective::{eval_w, ObjectiveSpec};
use crate::search::{log_grid, SearchBudget};
use crate::touching::phi_tau_closed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER_CAP: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const THREADS_ENV: &str = "BUSEMANN_LAB_THREADS";

pub const CSV_HEADER: [&str; 11] = [
    "t", "eta11", "eta12", "eta21", "eta22", "xprime", "phi_tau", "phi_w_lower", "phi_w_upper", "cap", "verdict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Counterexample,
    NormOfMinors,
}

/// Every tunable of a run, flat. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveKind,
    pub y: f64,
    pub epsilon: f64,
    pub t_range: f64,
    pub t_points: usize,
    pub eta_points: usize,
    pub margin: f64,
    pub cap: f64,
    pub grad_box: f64,
    pub restarts: usize,
    pub tol_cut: f64,
    pub max_cut_iters: usize,
    pub audit_samples: usize,
    pub direction_samples: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub radius_count: usize,
    pub det_floor: f64,
    pub refine_iters: usize,
    pub refine_candidates: usize,
    pub seed: u64,
    pub output_path: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvelopeConfig::default();
        let tube = TubeSpec::default();
        let grid = GapGrid::default();
        let budget = SearchBudget::light();
        RunConfig {
            objective: ObjectiveKind::Counterexample,
            y: tube.y,
            epsilon: tube.epsilon,
            t_range: tube.t_range,
            t_points: grid.t_points,
            eta_points: grid.eta_points,
            margin: grid.margin,
            cap: env.cap,
            grad_box: env.grad_box,
            restarts: env.restarts,
            tol_cut: env.tol_cut,
            max_cut_iters: env.max_cut_iters,
            audit_samples: env.audit_samples,
            direction_samples: budget.direction_samples,
            radius_min: budget.radius_grid[0],
            radius_max: *budget.radius_grid.last().unwrap(),
            radius_count: budget.radius_grid.len(),
            det_floor: budget.det_floor,
            refine_iters: budget.refine_iters,
            refine_candidates: budget.refine_candidates,
            seed: 0,
            output_path: PathBuf::from("scan.csv"),
        }
    }
}

impl RunConfig {
    pub fn objective_spec(&self) -> ObjectiveSpec {
        match self.objective {
            ObjectiveKind::Counterexample => ObjectiveSpec::Counterexample { y: self.y },
            ObjectiveKind::NormOfMinors => ObjectiveSpec::NormOfMinors,
        }
    }

    pub fn tube(&self) -> TubeSpec {
        TubeSpec { y: self.y, epsilon: self.epsilon, t_range: self.t_range }
    }

    pub fn grid(&self) -> GapGrid {
        GapGrid { t_points: self.t_points, eta_points: self.eta_points, margin: self.margin }
    }

    pub fn budget(&self) -> SearchBudget {
        SearchBudget {
            direction_samples: self.direction_samples,
            radius_grid: log_grid(self.radius_min, self.radius_max, self.radius_count),
            det_floor: self.det_floor,
            refine_iters: self.refine_iters,
            refine_candidates: self.refine_candidates,
            seed: self.seed,
        }
    }

    pub fn envelope(&self) -> EnvelopeConfig {
        EnvelopeConfig {
            cap: self.cap,
            grad_box: self.grad_box,
            restarts: self.restarts,
            tol_cut: self.tol_cut,
            max_cut_iters: self.max_cut_iters,
            audit_samples: self.audit_samples,
            oracle: self.budget(),
            seed: self.seed,
        }
    }

    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<(), Error> {
        self.objective_spec().validate()?;
        if self.radius_count == 0 {
            return Err(Error::InvalidInput("radius_count must be positive".into()));
        }
        self.budget().validate()?;
        self.envelope().validate()?;
        if self.objective == ObjectiveKind::Counterexample {
            self.tube().validate()?;
        }
        self.grid().validate()
    }
}

#[derive(Debug, Parser)]
#[command(name = "busemann-lab", version, about = "Certified bounds on polyconvex envelopes of 2x2 functions")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override the JSON configuration.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON configuration file (flat document).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub objective: Option<ObjectiveKind>,
    #[arg(long, global = true)]
    pub y: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t_range: Option<f64>,
    #[arg(long, global = true)]
    pub t_points: Option<usize>,
    #[arg(long, global = true)]
    pub eta_points: Option<usize>,
    #[arg(long, global = true)]
    pub cap: Option<f64>,
    #[arg(long, global = true)]
    pub grad_box: Option<f64>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub tol_cut: Option<f64>,
    #[arg(long, global = true)]
    pub max_cut_iters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path (CSV for scan-tube; JSON for probe).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalWhat {
    W,
    Phitau,
    Phiw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeWhich {
    MinW,
    Dist,
    Segment,
    Direction,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate W, the touching function or the envelope bracket at a point.
    Eval {
        #[arg(long, value_enum)]
        what: EvalWhat,
        /// Four matrix entries (row-major) for `w`; X̂ entries then X′ otherwise.
        #[arg(long, num_args = 4..=5, allow_negative_numbers = true, required = true)]
        point: Vec<f64>,
    },
    /// Envelope brackets over the tube grid; writes CSV and a JSON summary.
    ScanTube,
    /// Probe infimum of W, tube distance, segment affinity or direction constancy.
    Probe {
        #[arg(long, value_enum)]
        kind: ProbeWhich,
        /// Segment end X, or line base Y (5 values).
        #[arg(long, num_args = 5, allow_negative_numbers = true)]
        point: Option<Vec<f64>>,
        /// Segment start matrix (4 values).
        #[arg(long, num_args = 4, allow_negative_numbers = true)]
        source: Option<Vec<f64>>,
        /// Line direction, unit norm (5 values).
        #[arg(long, num_args = 5, allow_negative_numbers = true)]
        direction: Option<Vec<f64>>,
        /// Number of bracket evaluations along the segment or line.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Summarise a scan CSV and re-derive every verdict from its fields.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) | Error::OutOfTube { .. } => EXIT_USAGE,
            _ => EXIT_SOLVER_CAP,
        };
        Failure { code, message: e.to_string() }
    }
}

/// Reads the file named by `--config` (if any) and applies the flags.
pub fn resolve_config(o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = o.$field.clone() { cfg.$field = v; } )* };
    }
    apply!(objective, y, epsilon, t_range, t_points, eta_points, cap, grad_box, restarts, tol_cut, max_cut_iters, seed);
    if let Some(p) = &o.output {
        cfg.output_path = p.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Ignoring the error keeps repeated calls (tests) harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn minors(v: &[f64]) -> MinorsPoint {
    MinorsPoint::new(Mat2::new(v[0], v[1], v[2], v[3]), v[4])
}

/// `{:.16e}`: 17 significant digits, fixed layout.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn print_json(value: &serde_json::Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("json values always serialise");
    // a closed pipe (e.g. `| head`) is not an error for a report printer
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn cmd_eval(cfg: &RunConfig, what: EvalWhat, point: &[f64]) -> Result<i32, Failure> {
    let spec = cfg.objective_spec();
    let expected = if what == EvalWhat::W { 4 } else { 5 };
    if point.len() != expected {
        return Err(Failure::usage(format!("eval --what {what:?} takes {expected} values, got {}", point.len())));
    }
    match what {
        EvalWhat::W => {
            let m = Mat2::new(point[0], point[1], point[2], point[3]);
            print_json(&json!({ "what": "w", "xi": m, "value": eval_w(&spec, m), "config": cfg }));
            Ok(EXIT_OK)
        }
        EvalWhat::Phitau => {
            let x = minors(point);
            let y = spec.y().ok_or_else(|| Failure::usage("phitau needs the counterexample objective"))?;
            print_json(&json!({ "what": "phitau", "x": x, "value": phi_tau_closed(x, y), "config": cfg }));
            Ok(EXIT_OK)
        }
        EvalWhat::Phiw => {
            let x = minors(point);
            let b = envelope_bracket(&spec, x, &cfg.envelope())?;
            print_json(&json!({ "what": "phiw", "x": x, "bracket": b, "config": cfg }));
            Ok(if b.cut_cap_reached { EXIT_SOLVER_CAP } else { EXIT_OK })
        }
    }
}

fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

pub fn write_scan_csv(path: &Path, records: &[GapRecord]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::io(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| Failure::io(path, e))?;
    for r in records {
        let e = r.eta.to_array();
        let row = [
            fmt_num(r.t),
            fmt_num(e[0]),
            fmt_num(e[1]),
            fmt_num(e[2]),
            fmt_num(e[3]),
            fmt_num(r.x.last),
            fmt_num(r.phi_tau),
            fmt_num(r.phi_w_lower),
            fmt_num(r.phi_w_upper),
            fmt_num(r.cap),
            r.verdict.as_str().to_string(),
        ];
        w.write_record(&row).map_err(|e| Failure::io(path, e))?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

fn verdict_counts<'a>(verdicts: impl Iterator<Item = &'a Verdict>) -> (usize, usize, usize) {
    verdicts.fold((0, 0, 0), |(c, r, i), v| match v {
        Verdict::GapCertified => (c + 1, r, i),
        Verdict::GapRefutedAtCap => (c, r + 1, i),
        Verdict::Inconclusive => (c, r, i + 1),
    })
}

fn cmd_scan_tube(cfg: &RunConfig) -> Result<i32, Failure> {
    if cfg.objective != ObjectiveKind::Counterexample {
        return Err(Failure::usage("scan-tube needs the counterexample objective"));
    }
    let tube = cfg.tube();
    let spec = cfg.objective_spec();
    let records = gap_scan(&tube, &cfg.grid(), &cfg.envelope(), cfg.seed)?;
    let min_w = probe_min_w(&spec, &cfg.budget(), cfg.cap)?;
    let dist = probe_dist_tube_to_s(&tube, &cfg.budget())?;

    write_scan_csv(&cfg.output_path, &records)?;
    let (c, r, i) = verdict_counts(records.iter().map(|r| &r.verdict));
    let capped = records.iter().filter(|r| r.cut_cap_reached).count();
    let summary = json!({
        "rows": records.len(),
        "min_W": min_w.value,
        "min_W_witness": min_w.witness,
        "dist_tube_to_S": dist.value,
        "dist_tube_to_S_witness": dist.witness,
        "n_gap_certified": c,
        "n_gap_refuted_at_cap": r,
        "n_inconclusive": i,
        "n_cut_cap_reached": capped,
        "seed": cfg.seed,
        "config": cfg,
    });
    let spath = summary_path(&cfg.output_path);
    let text = serde_json::to_string_pretty(&summary).expect("json values always serialise");
    fs::write(&spath, text + "\n").map_err(|e| Failure::io(&spath, e))?;
    print_json(&summary);
    Ok(if capped > 0 { EXIT_SOLVER_CAP } else { EXIT_OK })
}

fn cmd_probe(
    cfg: &RunConfig,
    output: Option<&Path>,
    kind: ProbeWhich,
    point: Option<&[f64]>,
    source: Option<&[f64]>,
    direction: Option<&[f64]>,
    k: usize,
) -> Result<i32, Failure> {
    let spec = cfg.objective_spec();
    let report = match kind {
        ProbeWhich::MinW => probe_min_w(&spec, &cfg.budget(), cfg.cap)?,
        ProbeWhich::Dist => probe_dist_tube_to_s(&cfg.tube(), &cfg.budget())?,
        ProbeWhich::Segment => {
            let x = point.ok_or_else(|| Failure::usage("segment probe needs --point"))?;
            let s = source.ok_or_else(|| Failure::usage("segment probe needs --source"))?;
            segment_affinity_probe(&spec, minors(x), Mat2::new(s[0], s[1], s[2], s[3]), k, &cfg.envelope())?
        }
        ProbeWhich::Direction => {
            let y = point.ok_or_else(|| Failure::usage("direction probe needs --point"))?;
            let e = direction.ok_or_else(|| Failure::usage("direction probe needs --direction"))?;
            direction_constancy_probe(&spec, minors(y), minors(e), cfg.t_range, k, &cfg.envelope())?
        }
    };
    let out = json!({ "report": report, "seed": cfg.seed, "config": cfg });
    let text = serde_json::to_string_pretty(&out).expect("json values always serialise");
    if let Some(path) = output {
        fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))?;
    }
    print_json(&out);
    Ok(EXIT_OK)
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    eta11: f64,
    eta12: f64,
    eta21: f64,
    eta22: f64,
    phi_tau: f64,
    phi_w_lower: f64,
    phi_w_upper: f64,
    cap: f64,
    verdict: String,
}

/// Reads a scan CSV back, recounts verdicts and recomputes each one from
/// the stored numbers with the configured `epsilon` and `margin`.
fn cmd_report(cfg: &RunConfig, input: &Path) -> Result<i32, Failure> {
    let mut rdr = csv::Reader::from_path(input).map_err(|e| Failure::io(input, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Failure::io(input, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != CSV_HEADER {
        return Err(Failure::io(input, "unexpected CSV header"));
    }
    let mut stored = Vec::new();
    let mut mismatches = Vec::new();
    let mut max_order_violation = f64::NEG_INFINITY;
    let mut max_phi_tau = f64::NEG_INFINITY;
    let mut max_eta = 0.0f64;
    let mut caps = Vec::new();
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| Failure::io(input, e))?;
        let v: Verdict = row.verdict.parse().map_err(|e: Error| Failure::io(input, e))?;
        let again = Verdict::classify(row.phi_w_lower, row.phi_w_upper, row.phi_tau, cfg.epsilon, cfg.margin);
        if again != v {
            mismatches.push(i);
        }
        stored.push(v);
        max_order_violation = max_order_violation.max(row.phi_w_lower - row.phi_w_upper);
        max_phi_tau = max_phi_tau.max(row.phi_tau);
        max_eta = max_eta.max(Mat2::new(row.eta11, row.eta12, row.eta21, row.eta22).norm());
        if !caps.contains(&row.cap) {
            caps.push(row.cap);
        }
    }
    let (c, r, i) = verdict_counts(stored.iter());
    let consistent = mismatches.is_empty() && max_order_violation <= 1e-6 && max_phi_tau <= cfg.epsilon + 1e-12;
    print_json(&json!({
        "input": input,
        "rows": stored.len(),
        "n_gap_certified": c,
        "n_gap_refuted_at_cap": r,
        "n_inconclusive": i,
        "caps": caps,
        "verdict_mismatches": mismatches,
        "max_lower_minus_upper": max_order_violation,
        "max_phi_tau": max_phi_tau,
        "max_eta_norm": max_eta,
        "consistent": consistent,
        "epsilon": cfg.epsilon,
        "margin": cfg.margin,
    }));
    Ok(EXIT_OK)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    configure_threads();
    let result = resolve_config(&cli.overrides).and_then(|cfg| match &cli.command {
        Command::Eval { what, point } => cmd_eval(&cfg, *what, point),
        Command::ScanTube => cmd_scan_tube(&cfg),
        Command::Probe { kind, point, source, direction, k } => cmd_probe(
            &cfg,
            cli.overrides.output.as_deref(),
            *kind,
            point.as_deref(),
            source.as_deref(),
            direction.as_deref(),
            *k,
        ),
        Command::Report { input } => cmd_report(&cfg, input),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
