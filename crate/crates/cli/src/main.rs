//! Command-line front end: FER campaigns, bandit parameter studies and code
//! inspection.
//!
//! Settings come from an optional TOML file (`--config`) and are then
//! overridden by flags.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rlcabp::bandit::{k_max, BanditAlgo, TsUpdate};
use rlcabp::channel::RateConvention;
use rlcabp::polar::CrcPoly;
use rlcabp::rl::{LearnerMode, Scheme};
use rlcabp::sim::{
    emit_results, emit_study, run_fer_campaign, run_k_study, run_reward_study, CampaignConfig, CampaignResult,
    Ordering, OutputFormat, StudyParam, StudyResult,
};

#[derive(Parser)]
#[command(name = "rlcabp", version, about = "Bandit-driven permutation BP decoding of polar codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frame error rate over an Eb/N0 grid.
    Fer(CampaignArgs),
    /// Mean bandit reward over ε and/or c grids at one Eb/N0.
    RewardStudy {
        #[command(flatten)]
        campaign: CampaignArgs,
        /// ε values (runs ε-greedy).
        #[arg(long, value_delimiter = ',')]
        epsilon_grid: Vec<f64>,
        /// c values (runs UCB).
        #[arg(long, value_delimiter = ',')]
        c_grid: Vec<f64>,
    },
    /// Cumulative bandit reward for each number of arms at one Eb/N0.
    KStudy {
        #[command(flatten)]
        campaign: CampaignArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        k_grid: Vec<usize>,
    },
    /// Prints the code construction.
    CodeInfo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// `nr16`, `nr11`, `nr6` or a hex polynomial such as `0x11021`.
        #[arg(long)]
        crc: Option<CrcPoly>,
        /// Bundle size for the action-count bound.
        #[arg(long = "M")]
        m: Option<usize>,
    },
}

#[derive(Args)]
struct CampaignArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Eb/N0 grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ebn0_db: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rate_convention: Option<RateConvention>,
    #[arg(long)]
    decoder: Option<Scheme>,
    #[arg(long)]
    max_frames: Option<u64>,
    #[arg(long)]
    min_frame_errors: Option<u64>,
    /// Bandit invocations per grid value in studies.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    i_max: Option<usize>,
    #[arg(long)]
    i_min: Option<usize>,
    #[arg(long)]
    algo: Option<BanditAlgo>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Number of arms.
    #[arg(long)]
    k: Option<usize>,
    /// Permutations per frame, identity included.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    ts_update: Option<TsUpdate>,
    #[arg(long)]
    learner: Option<LearnerMode>,
    #[arg(long)]
    pretrain_steps: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pretrain_ebn0_db: Option<f64>,
    #[arg(long)]
    reset_per_point: bool,
    #[arg(long)]
    ordering: Option<Ordering>,
    /// Output directory. Without it the config file decides, then
    /// `RLCABP_OUTPUT_DIR`, then `results`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    format: Option<OutputFormat>,
}

fn load_config(path: Option<&PathBuf>) -> Result<CampaignConfig> {
    match path {
        None => Ok(CampaignConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

impl CampaignArgs {
    fn resolve(&self) -> Result<CampaignConfig> {
        let mut cfg = load_config(self.config.as_ref())?;
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.sim.ebn0_db, self.ebn0_db);
        set!(cfg.sim.base_seed, self.seed);
        set!(cfg.sim.rate_convention, self.rate_convention);
        set!(cfg.decoder.scheme, self.decoder);
        set!(cfg.sim.max_frames, self.max_frames);
        set!(cfg.sim.min_frame_errors, self.min_frame_errors);
        set!(cfg.sim.time_step_budget, self.budget);
        set!(cfg.sim.batch_size, self.batch_size);
        set!(cfg.bp.i_max, self.i_max);
        set!(cfg.bp.i_min, self.i_min);
        set!(cfg.bandit.algo, self.algo);
        set!(cfg.bandit.epsilon, self.epsilon);
        set!(cfg.bandit.c, self.c);
        set!(cfg.bandit.k, self.k);
        set!(cfg.bandit.m, self.m);
        set!(cfg.bandit.ts_update, self.ts_update);
        set!(cfg.learner.mode, self.learner);
        set!(cfg.learner.pretrain_steps, self.pretrain_steps);
        set!(cfg.learner.pretrain_ebn0_db, self.pretrain_ebn0_db);
        set!(cfg.learner.ordering, self.ordering);
        if self.reset_per_point {
            cfg.learner.reset_per_point = true;
        }
        // Flag, then config file, then the environment.
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = Some(dir.clone());
        }
        set!(cfg.output.name, self.name);
        set!(cfg.output.format, self.format);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_campaign(r: &CampaignResult) {
    let m = &r.metadata;
    println!(
        "decoder {}  learner {} ({})  rate {:.4} ({})  payload {} + CRC {}",
        m.scheme, m.learner_mode, m.ordering, m.rate, m.rate_convention, m.payload_bits, m.crc_bits
    );
    if !m.pretrain_mean_reward.is_empty() {
        println!("pretraining mean reward {:?}", m.pretrain_mean_reward);
    }
    println!(
        "{:>8} {:>10} {:>8} {:>12} {:>25} {:>10} {:>9} {:>10}",
        "Eb/N0", "frames", "errors", "FER", "95% CI", "iters", "attempts", "undetected"
    );
    for p in &r.points {
        println!(
            "{:>8.3} {:>10} {:>8} {:>12.4e} {:>25} {:>10.2} {:>9.3} {:>10}",
            p.ebn0_db,
            p.frames,
            p.frame_errors,
            p.fer,
            format!("[{:.3e}, {:.3e}]", p.fer_ci_low, p.fer_ci_high),
            p.mean_iters,
            p.mean_attempts,
            p.undetected_errors
        );
    }
}

fn print_study(r: &StudyResult) {
    println!("Eb/N0 {} dB, {} frames scanned", r.ebn0_db, r.frames_scanned);
    println!("{:>8} {:>12} {:>10} {:>12} {:>12}", "param", "value", "steps", "cumulative", "mean");
    for row in &r.rows {
        let mean = row.mean_reward.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
        println!(
            "{:>8} {:>12} {:>10} {:>12} {:>12}",
            row.param.to_string(),
            row.value,
            row.time_steps,
            row.cumulative_reward,
            mean
        );
    }
    if let Some(best) = r.best_row() {
        println!("best: {} = {}", best.param, best.value);
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn code_info(
    config: Option<&PathBuf>,
    n: Option<usize>,
    k: Option<usize>,
    crc: Option<CrcPoly>,
    m: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(n) = n {
        cfg.code.n = n;
    }
    if let Some(k) = k {
        cfg.code.k = k;
    }
    if let Some(c) = crc {
        cfg.code.crc = c;
    }
    let m = m.unwrap_or(cfg.bandit.m);
    let code = cfg.code.build()?;
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    println!("N = {}, K = {} (CRC counted inside K)", code.len(), code.k());
    println!("payload bits: {}", code.payload_len());
    println!("CRC: {} ({} bits)", code.crc(), code.crc_len());
    println!("rate K/N = {:.6}, payload rate = {:.6}", code.rate(), code.payload_len() as f64 / code.len() as f64);
    println!("information set: {}", join(code.info_set()));
    println!("frozen set: {}", join(code.frozen_set()));
    match k_max(code.stages(), m) {
        Ok(v) => println!("distinct actions for M = {m}: {v}"),
        Err(e) => println!("distinct actions for M = {m}: {e}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fer(args) => {
            let cfg = args.resolve()?;
            let r = run_fer_campaign(&cfg)?;
            print_campaign(&r);
            print_written(&emit_results(&r, &cfg.output.resolved_dir(), &cfg.output.name, cfg.output.format)?);
        }
        Command::RewardStudy {
            campaign,
            epsilon_grid,
            c_grid,
        } => {
            let cfg = campaign.resolve()?;
            let mut grid: Vec<(StudyParam, f64)> = epsilon_grid.iter().map(|&e| (StudyParam::Epsilon, e)).collect();
            grid.extend(c_grid.iter().map(|&c| (StudyParam::C, c)));
            if grid.is_empty() {
                bail!("give --epsilon-grid and/or --c-grid");
            }
            let r = run_reward_study(&cfg, &grid)?;
            print_study(&r);
            print_written(&emit_study(&r, &cfg.output.resolved_dir(), &cfg.output.name, cfg.output.format)?);
        }
        Command::KStudy { campaign, k_grid } => {
            let cfg = campaign.resolve()?;
            let r = run_k_study(&cfg, &k_grid)?;
            print_study(&r);
            print_written(&emit_study(&r, &cfg.output.resolved_dir(), &cfg.output.name, cfg.output.format)?);
        }
        Command::CodeInfo { config, n, k, crc, m } => code_info(config.as_ref(), n, k, crc, m)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
