use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use udrive::perception::write_pgm;
use udrive::ppo::checkpoint::Checkpoint;
use udrive::protocol::metrics::{boxplot_rows, write_boxplot_csv, BoxplotRow, Panel};
use udrive::protocol::train::load_candidates;
use udrive::protocol::{replay_with, select_best, test_policy_logged, train_experiment, BehaviorMetrics, CaseChoice, EpisodeLog, ExperimentConfig, TestPlan};
use udrive::{PerturbationCase, Scenario};

use crate::exit::{CliResult, Failure};
use crate::manifest::RunManifest;
use crate::teleop::{self, TeleopOptions};

#[derive(Debug, Parser)]
#[command(name = "udrive", version, about = "Driving under perceptual uncertainty: train, test, replay, teleop")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one scenario and keep its best checkpoints.
    Train(TrainArgs),
    /// Test a checkpoint on one perception case.
    Test(TestArgs),
    /// Re-simulate a logged episode and check it bit for bit.
    Replay(ReplayArgs),
    /// Train scenarios 1-3, test every case and export boxplot data.
    Study(StudyArgs),
    /// Serve the human teleop channel.
    Teleop(TeleopArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// 1 correct perception, 2 perturbed, 3 perturbed and informed.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: u8,
    /// Experiment config (TOML); keys left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training budget per scenario; overrides the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    /// Directory for checkpoints, training curves and the run manifest.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Checkpoint file to evaluate.
    #[arg(long)]
    pub policy: PathBuf,
    /// vexv, vexx, xexx, vevv or mpc (xevv needs --allow-xevv).
    #[arg(long)]
    pub case: String,
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    /// Also allow XEVV, which is outside the default safety-critical set.
    #[arg(long)]
    pub allow_xevv: bool,
    /// Evaluate a scenario-3 policy with correct perception and a zero uncertainty code.
    #[arg(long)]
    pub scenario4: bool,
    /// Experiment config (TOML); keys left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "test_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Path of the `.jsonl` episode log.
    pub log: PathBuf,
    /// Write one PGM per step of the perceived grid into this directory.
    #[arg(long)]
    pub dump_grids: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Experiment config (TOML); keys left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training budget per scenario; overrides the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    #[arg(long, default_value = "study")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TeleopArgs {
    /// TCP port on all interfaces.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Experiment config (TOML); keys left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of the browser UI's static files.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Where session logs are written.
    #[arg(long, default_value = "teleop_logs")]
    pub log_dir: PathBuf,
    /// Session k drives the world seeded with seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the wall-clock tick (defaults to the simulation step).
    #[arg(long)]
    pub tick_ms: Option<u64>,
    /// Step once per received command instead of on the clock.
    #[arg(long)]
    pub lockstep: bool,
}

pub fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Test(a) => test(a),
        Command::Replay(a) => replay(a),
        Command::Study(a) => study(a),
        Command::Teleop(a) => teleop(a),
    }
}

fn load_config(path: Option<&Path>, scenario: Scenario) -> CliResult<ExperimentConfig> {
    match path {
        Some(p) if !p.exists() => Err(Failure::config(format!("config file {} not found", p.display()))),
        Some(p) => ExperimentConfig::load(p, scenario).map_err(|e| Failure::config(e.to_string())),
        None => Ok(ExperimentConfig::for_scenario(scenario)),
    }
}

/// Runs `body` between a started and a finalized manifest in `dir`.
fn with_manifest(dir: &Path, mut manifest: RunManifest, body: impl FnOnce(&mut RunManifest) -> CliResult) -> CliResult {
    manifest.write(dir)?;
    let result = body(&mut manifest);
    manifest.finish(match &result {
        Ok(()) => "ok".to_string(),
        Err(f) => f.message.clone(),
    });
    manifest.write(dir)?;
    result
}

fn train(a: TrainArgs) -> CliResult {
    let scenario = Scenario::from_id(a.scenario).map_err(|e| Failure::usage(e.to_string()))?;
    let mut cfg = load_config(a.config.as_deref(), scenario)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.total_steps = s;
    }
    cfg.validate()?;
    let dir = a.out;
    let manifest = RunManifest::start("train", Some(cfg.hash()), vec![cfg.seed]);
    with_manifest(&dir, manifest, |m| train_into(&cfg, &dir, m).map(|_| ()))
}

/// Trains, writes artifacts and `best.ckpt`; returns the selected checkpoint.
fn train_into(cfg: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> CliResult<Checkpoint> {
    log::info!("training {} for {} steps (seed {})", cfg.scenario, cfg.total_steps, cfg.seed);
    let run = train_experiment(cfg)?;
    manifest.artifacts.extend(run.write_artifacts(dir)?);
    if let Some(msg) = run.aborted {
        return Err(udrive::Error::Diverged(msg).into());
    }
    let candidates = load_candidates(dir)?;
    let selection = select_best(&candidates, cfg)?;
    let best = dir.join("best.ckpt");
    selection.checkpoint.save(&best)?;
    manifest.artifacts.push(best);
    eprintln!(
        "{}: {} episodes, selected candidate {} (episode {:?}, validation means {:?})",
        cfg.scenario,
        run.episodes.len(),
        selection.index,
        selection.checkpoint.meta.episode,
        selection.means
    );
    Ok(selection.checkpoint)
}

fn parse_case(text: &str, allow_xevv: bool) -> CliResult<CaseChoice> {
    let case: CaseChoice = text.parse().map_err(|e: udrive::Error| Failure::usage(e.to_string()))?;
    if case == CaseChoice::Fixed(PerturbationCase::Xevv) && !allow_xevv {
        return Err(Failure::usage(
            "XEVV is not among the tested safety-critical cases (VEXV, VEXX, XEXX, VEVV, MPC); pass --allow-xevv to test it anyway",
        ));
    }
    Ok(case)
}

fn test(a: TestArgs) -> CliResult {
    let case = parse_case(&a.case, a.allow_xevv)?;
    let ckpt = Checkpoint::load(&a.policy)?;
    let trained = ckpt.meta.scenario;
    let mut cfg = load_config(a.config.as_deref(), trained)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut plan = TestPlan::new(&cfg, case);
    plan.episodes = a.episodes as usize;
    plan.allow_xevv = a.allow_xevv;
    if a.scenario4 {
        if trained != Scenario::INFORMED {
            return Err(Failure::usage(format!("--scenario4 needs a scenario 3 policy, got {trained}")));
        }
        plan.scenario = Scenario::CORRECT_INFORMED;
    }
    let dir = a.out;
    let manifest = RunManifest::start("test", Some(cfg.hash()), vec![cfg.seed]);
    with_manifest(&dir, manifest, |m| {
        let metrics = test_policy_logged(&ckpt.params, &plan, &dir.join("logs"))?;
        let csv = dir.join(format!("metrics_{}.csv", case.label().to_ascii_lowercase()));
        metrics.write_episode_csv(&csv)?;
        m.artifacts.push(csv);
        m.artifacts.push(dir.join("logs"));
        print_table(&[(format!("{} {}", plan.scenario, case), &metrics)]);
        Ok(())
    })
}

fn print_table(rows: &[(String, &BehaviorMetrics)]) {
    println!(
        "{:<24} {:>4} {:>7} {:>7} {:>7} {:>7} {:>10} {:>8} {:>8} {:>9}",
        "run", "n", "finish", "collide", "timeout", "stalled", "dist_m", "b/t", "steps", "gap_m"
    );
    for (label, m) in rows {
        println!(
            "{:<24} {:>4} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>10.2} {:>8.3} {:>8.0} {:>9.2}",
            label,
            m.episodes.len(),
            m.finish_rate,
            m.collision_rate,
            m.timeout_rate,
            m.stalled_rate,
            m.median(Panel::TraveledDistance),
            m.median(Panel::BrakeToThrottleRatio),
            m.median(Panel::EpisodeSteps),
            m.median(Panel::FrontDistance),
        );
    }
}

fn replay(a: ReplayArgs) -> CliResult {
    let log = EpisodeLog::read(&a.log)?;
    if let Some(dir) = &a.dump_grids {
        std::fs::create_dir_all(dir)?;
    }
    let report = replay_with(&log, |i, grid| match &a.dump_grids {
        Some(dir) => write_pgm(grid, &dir.join(format!("step_{i:05}.pgm"))),
        None => Ok(()),
    })?;
    println!("replayed {} steps bit-exactly ({})", report.steps, report.outcome.map_or("open".to_string(), |o| o.to_string()));
    Ok(())
}

fn study(a: StudyArgs) -> CliResult {
    let dir = a.out;
    let mut rows: Vec<BoxplotRow> = Vec::new();
    let manifest = RunManifest::start("study", None, a.seed.into_iter().collect());
    with_manifest(&dir, manifest, |m| {
        let mut table = Vec::new();
        for id in 1..=3u8 {
            let scenario = Scenario::from_id(id)?;
            let mut cfg = load_config(a.config.as_deref(), scenario)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(s) = a.steps {
                cfg.total_steps = s;
            }
            cfg.validate()?;
            let run_dir = dir.join(format!("scenario{id}"));
            let best = train_into(&cfg, &run_dir, m)?;
            let mut plans: Vec<TestPlan> = cfg.test_cases.iter().map(|c| TestPlan::new(&cfg, *c)).collect();
            if scenario == Scenario::INFORMED {
                let mut p4 = TestPlan::new(&cfg, CaseChoice::Fixed(PerturbationCase::Vevv));
                p4.scenario = Scenario::CORRECT_INFORMED;
                plans.push(p4);
            }
            for plan in plans {
                let label = format!("exp{}_s{}_{}", id, plan.scenario.id(), plan.case.label().to_ascii_lowercase());
                let metrics = test_policy_logged(&best.params, &plan, &run_dir.join("logs").join(&label))?;
                let csv = run_dir.join(format!("metrics_{label}.csv"));
                metrics.write_episode_csv(&csv)?;
                m.artifacts.push(csv);
                rows.extend(boxplot_rows(&format!("exp{id}_scenario{}", plan.scenario.id()), plan.case.label(), &metrics));
                table.push((label, metrics));
            }
        }
        let path = dir.join("boxplot.csv");
        write_boxplot_csv(&rows, &path)?;
        m.artifacts.push(path);
        let refs: Vec<(String, &BehaviorMetrics)> = table.iter().map(|(l, m)| (l.clone(), m)).collect();
        print_table(&refs);
        Ok(())
    })
}

fn teleop(a: TeleopArgs) -> CliResult {
    let cfg = load_config(a.config.as_deref(), Scenario::CORRECT)?;
    let mut opts = TeleopOptions::new(cfg.world, cfg.reward, a.log_dir);
    opts.seed = a.seed;
    opts.assets = a.assets;
    opts.lockstep = a.lockstep;
    if let Some(ms) = a.tick_ms {
        opts.tick = Duration::from_millis(ms);
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", a.port)).await?;
        eprintln!("teleop listening on {}", listener.local_addr()?);
        tokio::select! {
            r = teleop::serve(listener, opts) => r.map_err(Failure::from),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
