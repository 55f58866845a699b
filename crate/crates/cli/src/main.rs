//! `pilotassign` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 validation, 4 runtime.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pilotassign::harness::{records_to_csv, records_to_json, with_threads, SweepKind};
use pilotassign::rng::{substream, Purpose};
use pilotassign::{
    assign_location_aware_with, draw_drop, run_interference_experiment, run_rate_experiment,
    total_interference, unit_kernel_sweep, ExperimentConfig, ExperimentRecord, MatchingRule,
    PairCounting, PilotAssignment, Scheme, UserDrop,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "pilotassign",
    version,
    about = "Location-aware pilot assignment for massive MIMO uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assign pilots for one user drop.
    Assign(AssignArgs),
    /// Monte Carlo sweep over antenna counts.
    Sweep(SweepArgs),
    /// LOS interference against phase difference for two unit-parameter users.
    Kernel(KernelArgs),
}

/// Settings shared with the sweep config file; flags override file values.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<usize>,
    /// Rician K-factor, linear (`3`, `3lin`) or in dB (`4.77dB`).
    #[arg(long = "k-factor", value_parser = parse_k_factor)]
    k_factor: Option<f64>,
    /// Uplink transmit power over unit noise, linear.
    #[arg(long = "p-u")]
    p_u: Option<f64>,
    #[arg(long)]
    matching: Option<MatchingArg>,
}

#[derive(Args, Debug)]
struct AssignArgs {
    /// JSON drop file `{"users": [{"r": .., "theta": .., "k_factor": ..}, ..]}`.
    /// Without it a random drop is generated from the config and `--seed`.
    drop: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    /// Users in a generated drop.
    #[arg(long)]
    users: Option<usize>,
    /// Number of BS antennas.
    #[arg(long, default_value_t = 20)]
    antennas: usize,
    /// Directory for assignment.json, t_matrix.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    kind: KindArg,
    #[command(flatten)]
    common: CommonArgs,
    /// Drops per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated antenna counts, e.g. `20,50,100`.
    #[arg(long = "m-sweep", value_parser = parse_m_sweep)]
    m_sweep: Option<MSweep>,
    /// Comma-separated schemes: location-aware, random.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<SchemeArg>>,
    #[arg(long = "coherence-T")]
    coherence_t: Option<usize>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long = "fading-per-drop")]
    fading_per_drop: Option<usize>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long, default_value_t = 20)]
    antennas: usize,
    /// Grid intervals over [-pi, pi].
    #[arg(long, default_value_t = 800)]
    steps: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Interference,
    Rate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    LocationAware,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MatchingArg {
    Greedy,
    Optimal,
}

#[derive(Clone, Debug)]
struct MSweep(Vec<usize>);

fn parse_m_sweep(s: &str) -> Result<MSweep, String> {
    let list = s
        .split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| match p.parse::<usize>() {
            Ok(0) => Err("antenna counts must be positive".to_owned()),
            Ok(m) => Ok(m),
            Err(_) => Err(format!("`{p}` is not an antenna count")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err("sweep list is empty".to_owned());
    }
    Ok(MSweep(list))
}

fn parse_k_factor(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let (num, db) = if let Some(v) = s.strip_suffix("dB").or_else(|| s.strip_suffix("db")) {
        (v, true)
    } else if let Some(v) = s.strip_suffix("lin") {
        (v, false)
    } else {
        (s, false)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a K-factor (e.g. 3, 3lin, 4.77dB)"))?;
    let linear = if db { 10f64.powf(v / 10.0) } else { v };
    if linear.is_nan() || linear < 0.0 {
        return Err("K-factor must be non-negative".to_owned());
    }
    Ok(linear)
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        None => ExperimentConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .runtime()?;
            toml::from_str(&text)
                .with_context(|| format!("config {}", path.display()))
                .invalid()?
        }
    };
    if let Some(v) = common.seed {
        cfg.master_seed = v;
    }
    if let Some(v) = common.tau {
        cfg.tau = v;
    }
    if let Some(v) = common.k_factor {
        cfg.k_factor = v;
    }
    if let Some(v) = common.p_u {
        cfg.p_u = v;
    }
    if let Some(v) = common.matching {
        cfg.matching = match v {
            MatchingArg::Greedy => MatchingRule::Greedy,
            MatchingArg::Optimal => MatchingRule::Optimal,
        };
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    master_seed: u64,
    timestamp_unix: u64,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    drop_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    antennas: Option<usize>,
    outputs: Vec<String>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

fn write_manifest(dir: &Path, manifest: &RunManifest<'_>) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(manifest).runtime()?;
    write_file(&dir.join("manifest.json"), &(json + "\n"))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn t_matrix_csv(a: &PilotAssignment) -> String {
    let mut out = (1..=a.tau())
        .map(|p| format!("pilot_{p}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in a.t_matrix() {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map(|u| u.to_string()).unwrap_or_default())
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct AssignOutput {
    tau: usize,
    groups: Vec<Vec<usize>>,
    user_to_pilot: Vec<usize>,
    i_tot: f64,
    i_tot_db: Option<f64>,
    pair_counting: PairCounting,
    antennas: usize,
}

fn cmd_assign(args: AssignArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    if let Some(n) = args.users {
        cfg.n_users = n;
    }
    let drop = match &args.drop {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .runtime()?;
            let drop: UserDrop = serde_json::from_str(&text)
                .with_context(|| format!("drop file {}", path.display()))
                .invalid()?;
            cfg.n_users = drop.len();
            drop
        }
        None => {
            cfg.validate().invalid()?;
            draw_drop(&cfg, &mut substream(cfg.master_seed, 0, Purpose::Drop))
        }
    };
    let cell = cfg.cell(args.antennas);
    cell.validate().invalid()?;
    let training = cfg.training().invalid()?;
    let outcome =
        assign_location_aware_with(&drop, cfg.tau, &cell, &training, cfg.matching).invalid()?;
    let a = outcome.assignment;
    let report = total_interference(&drop, &a, &cell, &training, cfg.pair_counting).invalid()?;
    let out = AssignOutput {
        tau: a.tau(),
        groups: a
            .groups()
            .iter()
            .map(|g| g.iter().map(|u| u + 1).collect())
            .collect(),
        user_to_pilot: a.user_to_pilot().iter().map(|p| p + 1).collect(),
        i_tot: report.total,
        i_tot_db: report.total_db,
        pair_counting: cfg.pair_counting,
        antennas: args.antennas,
    };
    let json = serde_json::to_string_pretty(&out).runtime()? + "\n";
    let csv = t_matrix_csv(&a);
    match &args.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            write!(stdout, "{json}\n{csv}").runtime()?;
        }
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .runtime()?;
            let files = [("assignment.json", &json), ("t_matrix.csv", &csv)];
            for (name, body) in files {
                write_file(&dir.join(name), body)?;
            }
            let drop_json = serde_json::to_string_pretty(&drop).runtime()? + "\n";
            write_file(&dir.join("drop.json"), &drop_json)?;
            write_manifest(
                dir,
                &RunManifest {
                    command: "assign",
                    tool_version: env!("CARGO_PKG_VERSION"),
                    master_seed: cfg.master_seed,
                    timestamp_unix: now_unix(),
                    config: &cfg,
                    drop_file: args.drop.as_ref().map(|p| p.display().to_string()),
                    antennas: Some(args.antennas),
                    outputs: ["assignment.json", "t_matrix.csv", "drop.json"]
                        .iter()
                        .map(|f| dir.join(f).display().to_string())
                        .collect(),
                },
            )?;
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn summary_table(kind: SweepKind, records: &[ExperimentRecord]) -> String {
    let mut out = match kind {
        SweepKind::Interference => format!("{:>6}  {:<15} {:>12}\n", "M", "scheme", "I_tot [dB]"),
        SweepKind::Rate => format!(
            "{:>6}  {:<15} {:>12} {:>14}\n",
            "M", "scheme", "I_tot [dB]", "sum rate"
        ),
    };
    for r in records {
        let db = r
            .mean_i_tot_db
            .map(|v| format!("{v:.2}"))
            .unwrap_or_else(|| "-inf".to_owned());
        match kind {
            SweepKind::Interference => out.push_str(&format!(
                "{:>6}  {:<15} {:>12}\n",
                r.m_antennas,
                r.scheme.as_str(),
                db
            )),
            SweepKind::Rate => out.push_str(&format!(
                "{:>6}  {:<15} {:>12} {:>14.3}\n",
                r.m_antennas,
                r.scheme.as_str(),
                db,
                r.mean_sum_rate.unwrap_or(f64::NAN)
            )),
        }
    }
    out
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    let kind = match args.kind {
        KindArg::Interference => SweepKind::Interference,
        KindArg::Rate => SweepKind::Rate,
    };
    if let Some(t) = args.trials {
        match kind {
            SweepKind::Interference => cfg.trials_interference = t,
            SweepKind::Rate => cfg.trials_rate = t,
        }
    }
    if let Some(MSweep(m)) = args.m_sweep {
        cfg.m_sweep = m;
    }
    if let Some(s) = &args.scheme {
        cfg.schemes = s
            .iter()
            .map(|s| match s {
                SchemeArg::LocationAware => Scheme::LocationAware,
                SchemeArg::Random => Scheme::Random,
            })
            .collect();
        cfg.schemes.dedup();
    }
    if let Some(t) = args.coherence_t {
        cfg.coherence_symbols = t;
    }
    if let Some(n) = args.users {
        cfg.n_users = n;
    }
    if let Some(f) = args.fading_per_drop {
        cfg.fading_per_drop = f;
    }
    if args.threads == Some(0) {
        return Err(Failure::Validation(anyhow::anyhow!(
            "--threads must be at least 1"
        )));
    }
    cfg.validate().invalid()?;

    let records = with_threads(args.threads, || match kind {
        SweepKind::Interference => run_interference_experiment(&cfg),
        SweepKind::Rate => run_rate_experiment(&cfg),
    })
    .runtime()?;

    let dir = &args.out;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime()?;
    let csv_path = dir.join(format!("{}.csv", kind.as_str()));
    let json_path = dir.join(format!("{}.json", kind.as_str()));
    write_file(&csv_path, &records_to_csv(kind, &cfg, &records))?;
    write_file(&json_path, &(records_to_json(kind, &cfg, &records) + "\n"))?;
    write_manifest(
        dir,
        &RunManifest {
            command: match kind {
                SweepKind::Interference => "sweep interference",
                SweepKind::Rate => "sweep rate",
            },
            tool_version: env!("CARGO_PKG_VERSION"),
            master_seed: cfg.master_seed,
            timestamp_unix: now_unix(),
            config: &cfg,
            drop_file: None,
            antennas: None,
            outputs: vec![
                csv_path.display().to_string(),
                json_path.display().to_string(),
            ],
        },
    )?;
    print!("{}", summary_table(kind, &records));
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_kernel(args: KernelArgs) -> Result<(), Failure> {
    if args.antennas == 0 || args.steps == 0 {
        return Err(Failure::Validation(anyhow::anyhow!(
            "--antennas and --steps must be positive"
        )));
    }
    let mut csv = String::from("d_theta,i_sq\n");
    for (dt, v) in unit_kernel_sweep(args.antennas, args.steps) {
        csv.push_str(&format!("{dt},{v}\n"));
    }
    match &args.out {
        None => print!("{csv}"),
        Some(path) => write_file(path, &csv)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assign(a) => cmd_assign(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Kernel(a) => cmd_kernel(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
