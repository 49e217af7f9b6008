//! Command-line surface. `run` parses arguments and returns the process
//! exit code: 0 ok, 1 check failure, 2 usage or I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::engine::{self, CampaignConfig, CampaignReport, TargetSource};
use crate::error::{Error, Result};
use crate::oracle::{self, OracleOptions};
use crate::report;
use crate::simtarget::TargetSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const DEFAULT_ROUNDS: u64 = 1440;

#[derive(Parser, Debug)]
#[command(name = "mobsched", version, about = "Adaptive multi-objective fuzzing scheduler")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one campaign and write its report directory.
    Fuzz(FuzzArgs),
    /// Run one campaign per parameter value and seed, plus a comparison CSV.
    Sweep(SweepArgs),
    /// Render charts and a text summary from a report directory.
    Report(ReportArgs),
    /// Check the scheduler formulas against independent re-derivations.
    Oracle(OracleArgs),
    /// List built-in targets or print one as JSON.
    Targets(TargetsArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
pub struct TargetArgs {
    /// Built-in target name or path to a target JSON file.
    #[arg(long, conflicts_with = "adapter")]
    pub target: Option<String>,
    /// Address of an external harness speaking the adapter protocol.
    #[arg(long)]
    pub adapter: Option<String>,
    /// Total comparison bytes of the adapter target, if known.
    #[arg(long, requires = "adapter")]
    pub cmp_total: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub adapter_timeout_ms: u64,
}

impl TargetArgs {
    fn source(&self) -> Result<TargetSource> {
        match (&self.target, &self.adapter) {
            (Some(t), None) => Ok(TargetSource::Spec(TargetSpec::resolve(t)?)),
            (None, Some(a)) => Ok(TargetSource::Adapter {
                addr: a.clone(),
                cmp_total: self.cmp_total,
                timeout_ms: self.adapter_timeout_ms,
            }),
            _ => Err(Error::Config("one of --target or --adapter is required".into())),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CampaignArgs {
    /// Rounds to run [default: 1440]; on resume, the new horizon.
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Executions per round.
    #[arg(long, default_value_t = 1000)]
    pub round_budget: u64,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub nic: Toggle,
    /// NIC execution budget as a fraction of main-loop executions.
    #[arg(long, default_value_t = 0.06)]
    pub nic_budget: f64,
    /// Directory of raw initial seed files; defaults to the target's seeds.
    #[arg(long)]
    pub seed_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FuzzArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub campaign: CampaignArgs,
    #[arg(long, default_value_t = 0.10, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, required_unless_present = "resume")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue the campaign saved in --out (to --rounds if given).
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub campaign: CampaignArgs,
    /// Comma-separated lambda values to sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "gamma", required_unless_present = "gamma", num_args = 1..)]
    pub lambda: Vec<f64>,
    /// Comma-separated gamma values to sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub gamma: Vec<f64>,
    /// Lambda when sweeping gamma.
    #[arg(long, default_value_t = 0.10)]
    pub fixed_lambda: f64,
    /// Gamma when sweeping lambda.
    #[arg(long, default_value_t = 0.01)]
    pub fixed_gamma: f64,
    /// Comma-separated RNG seeds; one campaign per value per seed.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Campaigns run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report directory written by `fuzz`.
    pub dir: PathBuf,
    /// Where charts go; defaults to <dir>/charts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shift the selector's exploration weight; the UCB check must fail.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub perturb_gamma: f64,
}

#[derive(Args, Debug)]
pub struct TargetsArgs {
    /// Print the named built-in target as JSON.
    #[arg(long)]
    pub show: Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Fuzz(a) => cmd_fuzz(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Targets(a) => cmd_targets(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn read_seed_dir(dir: &Path) -> Result<Vec<Vec<u8>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| fs::read(p).map_err(|e| Error::io(p, e)))
        .collect()
}

fn build_config(
    target: &TargetArgs,
    campaign: &CampaignArgs,
    lambda: f64,
    gamma: f64,
    seed: u64,
) -> Result<(CampaignConfig, Vec<Vec<u8>>)> {
    let source = target.source()?;
    let seeds = match &campaign.seed_dir {
        Some(dir) => read_seed_dir(dir)?,
        None => engine::default_seeds(&source),
    };
    let mut cfg = CampaignConfig::new(source, seed);
    cfg.lambda = lambda;
    cfg.gamma = gamma;
    cfg.total_rounds = campaign.rounds.unwrap_or(DEFAULT_ROUNDS);
    cfg.round_budget = campaign.round_budget;
    cfg.nic_enabled = campaign.nic == Toggle::On;
    cfg.nic.budget_fraction = campaign.nic_budget;
    cfg.validate()?;
    Ok((cfg, seeds))
}

fn print_report(r: &CampaignReport) {
    println!(
        "{} seed {}: {} rounds, {} execs ({:.2}% NIC), pool {}, means {:?}",
        r.target,
        r.seed,
        r.rounds,
        r.total_execs,
        100.0 * r.nic_share,
        r.pool_size,
        r.cumulative_avg
    );
}

pub fn cmd_fuzz(a: FuzzArgs) -> Result<i32> {
    let report = if a.resume {
        engine::resume_campaign(&a.out, a.campaign.rounds)?
    } else {
        let seed = a.seed.expect("clap enforces --seed");
        let (cfg, seeds) = build_config(&a.target, &a.campaign, a.lambda, a.gamma, seed)?;
        engine::run_campaign(cfg, &seeds, &a.out)?
    };
    print_report(&report);
    Ok(EXIT_OK)
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "param,value,seed,speed,stack,cmp,good_seed_fraction,nic_share,dir";

fn sweep_value_label(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let (param, values) = if a.gamma.is_empty() {
        ("lambda", a.lambda.clone())
    } else {
        ("gamma", a.gamma.clone())
    };
    if values.is_empty() || a.seed.is_empty() {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let mut jobs = Vec::new();
    for &v in &values {
        for &seed in &a.seed {
            let (lambda, gamma) = if param == "lambda" {
                (v, a.fixed_gamma)
            } else {
                (a.fixed_lambda, v)
            };
            let (cfg, seeds) = build_config(&a.target, &a.campaign, lambda, gamma, seed)?;
            let dir = a.out.join(format!("{param}-{}-seed{seed}", sweep_value_label(v)));
            jobs.push((v, seed, cfg, seeds, dir));
        }
    }

    let workers = a.jobs.max(1);
    let mut results: Vec<Option<Result<CampaignReport>>> = (0..jobs.len()).map(|_| None).collect();
    for (chunk_idx, chunk) in jobs.chunks(workers).enumerate() {
        let reports: Vec<Result<CampaignReport>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(_, _, cfg, seeds, dir)| {
                    s.spawn(move || engine::run_campaign(cfg.clone(), seeds, dir))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("campaign thread panicked"))
                .collect()
        });
        for (i, r) in reports.into_iter().enumerate() {
            results[chunk_idx * workers + i] = Some(r);
        }
    }

    let mut csv = String::new();
    csv.push_str(SWEEP_HEADER);
    csv.push('\n');
    let mut per_value: Vec<(f64, Vec<[f64; 5]>)> = values.iter().map(|v| (*v, Vec::new())).collect();
    for ((v, seed, _, _, dir), r) in jobs.iter().zip(results) {
        let r = r.expect("every job ran")?;
        print_report(&r);
        let avg = |i: usize| r.cumulative_avg.get(i).copied().unwrap_or(0.0);
        let row = [avg(0), avg(1), avg(2), r.good_seed_fraction, r.nic_share];
        let _ = writeln!(
            csv,
            "{param},{v},{seed},{},{},{},{},{},{}",
            row[0],
            row[1],
            row[2],
            row[3],
            row[4],
            dir.display()
        );
        if let Some((_, rows)) = per_value.iter_mut().find(|(pv, _)| pv == v) {
            rows.push(row);
        }
    }
    for (v, rows) in &per_value {
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..5).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let _ = writeln!(
            csv,
            "{param},{v},mean,{},{},{},{},{},",
            mean[0], mean[1], mean[2], mean[3], mean[4]
        );
    }
    let path = a.out.join(SWEEP_FILE);
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    info!("sweep comparison written to {}", path.display());
    Ok(EXIT_OK)
}

pub fn cmd_report(a: ReportArgs) -> Result<i32> {
    let out = a.out.unwrap_or_else(|| a.dir.join("charts"));
    let summary = report::render(&a.dir, &out)?;
    print!("{summary}");
    Ok(EXIT_OK)
}

pub fn cmd_oracle(a: OracleArgs) -> Result<i32> {
    let checks = oracle::run_all(&OracleOptions {
        seed: a.seed,
        gamma_perturbation: a.perturb_gamma,
    })?;
    let mut failed = Vec::new();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("failing oracles: {}", failed.join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}

pub fn cmd_targets(a: TargetsArgs) -> Result<i32> {
    match a.show {
        Some(name) => {
            let spec = TargetSpec::builtin(&name)
                .ok_or_else(|| Error::Config(format!("no built-in target named {name:?}")))?;
            println!("{}", spec.to_json());
        }
        None => {
            for name in TargetSpec::builtin_names() {
                let spec = TargetSpec::builtin(name).expect("listed built-in exists");
                println!(
                    "{name}: {} comparison sites, {} cmp bytes, {} loops",
                    spec.comparison_sites.len(),
                    spec.total_comparison_bytes(),
                    spec.loops.len()
                );
            }
        }
    }
    Ok(EXIT_OK)
}
