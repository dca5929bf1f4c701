//! The `consortium` command line.
//!
//! Exit status is 0 on success, 2 for bad input (arguments, files,
//! validation) and 3 when the requested method cannot handle the consortium
//! size.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::coalition::Coalition;
use crate::domain::{exclude_insiders, validate_dataset, DataGrant, MemberDataset, MemberRecord};
use crate::error::Error;
use crate::game::{GameHandle, PipelineGame};
use crate::io::{self, ConfigFile, CONFIG_FILE};
use crate::payout::{allocate, PayoutPolicy, PolicyKind};
use crate::pipeline::PipelineConfig;
use crate::shapley::{self, Method, PivotHistogram, ValuationEstimate};
use crate::synthgen::{generate, GenSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "consortium", version, about = "Value consortium members' data by its contribution to a trading decision")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic consortium with planted signal carriers.
    Gen(GenArgs),
    /// Estimate every member's Shapley value and write a report.
    Value(ValueArgs),
    /// Turn a valuation report into payouts.
    Payout(PayoutArgs),
    /// Print the grand coalition's trade decision and value as JSON.
    Report(ReportArgs),
}

/// Pipeline settings; each flag overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub n_min: Option<u32>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub capital: Option<f64>,
    #[arg(long)]
    pub entry_period: Option<u32>,
    #[arg(long)]
    pub exit_period: Option<u32>,
}

impl PipelineFlags {
    fn apply(&self, cfg: &mut ConfigFile) {
        fn set<T: Copy>(slot: &mut Option<T>, flag: Option<T>) {
            if flag.is_some() {
                *slot = flag;
            }
        }
        set(&mut cfg.tau, self.tau);
        set(&mut cfg.sigma_min, self.sigma_min);
        set(&mut cfg.n_min, self.n_min);
        set(&mut cfg.clip, self.clip);
        set(&mut cfg.eps, self.eps);
        set(&mut cfg.capital, self.capital);
        set(&mut cfg.entry_period, self.entry_period);
        set(&mut cfg.exit_period, self.exit_period);
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataFlags {
    /// Directory holding members.csv, signals.csv and prices.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Config file; defaults to config.txt in the data directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 8)]
    pub members: usize,
    #[arg(long, default_value_t = 4)]
    pub periods: u32,
    #[arg(long, default_value_t = 2)]
    pub carriers: usize,
    #[arg(long, default_value_t = 0.5)]
    pub strength: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Segment shares as `name:share,name:share`.
    #[arg(long, default_value = "north:0.5,south:0.5")]
    pub segments: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ValueArgs {
    #[command(flatten)]
    pub data: DataFlags,
    /// exact, permutation (perm), stratified (strat) or cluster.
    #[arg(long, default_value = "exact")]
    pub method: Method,
    /// Permutations for the permutation method.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Removal chains per estimated member.
    #[arg(long, default_value_t = 1000)]
    pub chains: usize,
    /// Cluster count for the cluster method.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub sample_per_cluster: usize,
    /// Locate pivots by binary search instead of scanning every chain.
    #[arg(long)]
    pub bsearch: bool,
    /// Required by every sampling method.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimator threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-member pivot histograms (stratified and cluster).
    #[arg(long)]
    pub pivots: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PayoutArgs {
    /// Valuation report written by `value`.
    #[arg(long)]
    pub report: PathBuf,
    /// Data directory, for member volumes. Needed by volume_blend.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// direct, nonneg_proportional or volume_blend.
    #[arg(long, default_value = "direct")]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = 0.0)]
    pub pot: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataFlags,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Capacity(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Capacity { .. } => Failure::Capacity(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

type Step<T = ()> = std::result::Result<T, Failure>;

/// Parse `args` (program name first) and run, returning the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Value(a) => cmd_value(a, stdout, stderr),
        Command::Payout(a) => cmd_payout(a, stdout),
        Command::Report(a) => cmd_report(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Capacity(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_CAPACITY
        }
    }
}

fn write_out(stdout: &mut dyn Write, dest: Option<&Path>, text: &str) -> Step {
    match dest {
        Some(path) => fs::write(path, text).map_err(|source| {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
            .into()
        }),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Input(format!("writing output: {e}"))),
    }
}

fn parse_segments(text: &str) -> Step<Vec<(String, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, share) = item
                .split_once(':')
                .ok_or_else(|| Failure::Input(format!("segment `{item}` should be name:share")))?;
            let share = share
                .trim()
                .parse()
                .map_err(|_| Failure::Input(format!("segment `{item}` has a non-numeric share")))?;
            Ok((name.trim().to_string(), share))
        })
        .collect()
}

fn cmd_gen(args: &GenArgs, stdout: &mut dyn Write) -> Step {
    let spec = GenSpec {
        n_members: args.members,
        n_periods: args.periods,
        n_carriers: args.carriers,
        carrier_strength: args.strength,
        noise_scale: args.noise,
        segments: parse_segments(&args.segments)?,
        seed: args.seed,
    };
    let generated = generate(&spec)?;
    let mut cfg = ConfigFile::default();
    args.pipeline.apply(&mut cfg);
    let pipeline = cfg.pipeline();
    pipeline.validate()?;
    let paths = io::write_generated(&args.out, &generated, &pipeline)?;
    let listing: String = paths.iter().map(|p| format!("{}\n", p.display())).collect();
    write_out(stdout, None, &listing)
}

/// Load, filter, exclude insiders and validate.
fn load(flags: &DataFlags) -> Step<(MemberDataset, PipelineConfig)> {
    let config_path = flags.config.clone().unwrap_or_else(|| flags.data.join(CONFIG_FILE));
    let mut cfg = ConfigFile::read(&config_path)?;
    flags.pipeline.apply(&mut cfg);
    let pipeline = cfg.pipeline();
    pipeline.validate()?;
    let dataset = exclude_insiders(&io::load_dataset(&flags.data, &cfg)?);
    let violations = validate_dataset(&dataset);
    if !violations.is_empty() {
        let listed: Vec<String> = violations
            .iter()
            .map(|v| format!("  {}: {}", v.code.as_str(), v.detail))
            .collect();
        return Err(Failure::Input(format!("dataset failed validation\n{}", listed.join("\n"))));
    }
    Ok((dataset, pipeline))
}

struct Valuation {
    estimates: Vec<ValuationEstimate>,
    residual: f64,
    fallbacks: u64,
    pivots: Vec<PivotHistogram>,
}

fn estimate(args: &ValueArgs, handle: &GameHandle<PipelineGame>) -> Step<Valuation> {
    let seed = || {
        args.seed
            .ok_or_else(|| Failure::Input(format!("--seed is required for the {} method", args.method)))
    };
    let grand = handle.grand_value();
    let empty = handle.value(&Coalition::empty(handle.players()));
    let unexplained = |est: &[ValuationEstimate]| grand - empty - est.iter().map(|e| e.value).sum::<f64>();
    Ok(match args.method {
        Method::Exact => {
            let estimates = shapley::exact_shapley(handle)?;
            Valuation {
                residual: unexplained(&estimates),
                estimates,
                fallbacks: 0,
                pivots: Vec::new(),
            }
        }
        Method::Permutation => {
            let estimates = shapley::permutation_shapley(handle, args.samples, seed()?);
            Valuation {
                residual: unexplained(&estimates),
                estimates,
                fallbacks: 0,
                pivots: Vec::new(),
            }
        }
        Method::Stratified => {
            let run = shapley::stratified_shapley(handle, args.chains, seed()?, args.bsearch);
            Valuation {
                residual: unexplained(&run.estimates),
                estimates: run.estimates,
                fallbacks: run.fallbacks,
                pivots: run.pivots,
            }
        }
        Method::Cluster => {
            let run =
                shapley::clustered_shapley(handle, args.k, args.sample_per_cluster, args.chains, seed()?, args.bsearch)?;
            Valuation {
                residual: run.residual,
                estimates: run.estimates,
                fallbacks: run.fallbacks,
                pivots: Vec::new(),
            }
        }
    })
}

fn render_pivots(pivots: &[PivotHistogram]) -> String {
    let mut out = String::from("member_id,removals,chains\n");
    for h in pivots {
        for (k, c) in h.counts.iter().enumerate() {
            out.push_str(&format!("{},{k},{c}\n", h.member_id));
        }
        out.push_str(&format!("{},never,{}\n", h.member_id, h.never));
    }
    out
}

fn cmd_value(args: &ValueArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Step {
    let (dataset, pipeline) = load(&args.data)?;
    let handle = GameHandle::new(PipelineGame::new(&dataset, pipeline)?);
    if args.method == Method::Exact && handle.players() > shapley::EXACT_LIMIT {
        return Err(Error::Capacity {
            members: handle.players(),
            limit: shapley::EXACT_LIMIT,
        }
        .into());
    }
    let valuation = match args.workers {
        Some(0) => return Err(Failure::Input("--workers must be at least 1".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Failure::Input(format!("thread pool: {e}")))?
            .install(|| estimate(args, &handle))?,
        None => estimate(args, &handle)?,
    };

    write_out(stdout, args.out.as_deref(), &io::render_report(&valuation.estimates))?;
    if let Some(path) = &args.pivots {
        write_out(stdout, Some(path), &render_pivots(&valuation.pivots))?;
    }
    let _ = writeln!(
        stderr,
        "grand_value={} residual={} fallbacks={}",
        handle.grand_value(),
        valuation.residual,
        valuation.fallbacks
    );
    Ok(())
}

fn cmd_payout(args: &PayoutArgs, stdout: &mut dyn Write) -> Step {
    let estimates = io::read_report(&args.report)?;
    let members: Vec<MemberRecord> = match &args.data {
        Some(dir) => {
            let flags = DataFlags {
                data: dir.clone(),
                config: args.config.clone(),
                pipeline: PipelineFlags::default(),
            };
            load(&flags)?.0.members
        }
        None if args.policy == PolicyKind::VolumeBlend => {
            return Err(Failure::Input("volume_blend needs --data for member volumes".into()))
        }
        None => estimates
            .iter()
            .map(|e| MemberRecord::new(e.member_id.clone(), "", DataGrant::none()))
            .collect(),
    };
    let policy = PayoutPolicy {
        kind: args.policy,
        pot: args.pot,
        alpha: args.alpha,
    };
    let payouts = allocate(&estimates, &members, &policy)?;
    write_out(stdout, args.out.as_deref(), &io::render_payouts(&payouts))
}

#[derive(Serialize)]
struct GrandReport {
    action: &'static str,
    z: f64,
    score: f64,
    value: f64,
}

fn cmd_report(args: &ReportArgs, stdout: &mut dyn Write) -> Step {
    let (dataset, pipeline) = load(&args.data)?;
    let game = PipelineGame::new(&dataset, pipeline)?;
    let grand = game.grand_value();
    let report = GrandReport {
        action: grand.decision.action.as_str(),
        z: grand.decision.z,
        score: grand.decision.score,
        value: grand.value,
    };
    let json = serde_json::to_string(&report).map_err(|e| Failure::Input(e.to_string()))?;
    write_out(stdout, None, &format!("{json}\n"))
}
