use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use perp_core::design::{measure, reports_to_csv, Measure, MeasureConfig};
use perp_core::estimator::{
    estimate_differences, estimate_model, estimate_reference, mean_return, off_policy_value, EpisodeDataset,
};
use perp_core::explore::BackendMode;
use perp_core::harness::{rows_to_csv, run_trials, verify_lemmas, CheckStatus};
use perp_core::instances::{figure1_m, planted_gap};
use perp_core::io::{
    mdp_from_json, mdp_to_json, policies_from_json, policies_to_json, read_file, read_trajectories, write_trajectories,
    TrajectoryRecord,
};
use perp_core::perp::{perp, PerpConfig};
use perp_core::sim::Simulator;
use perp_core::{Mdp, Policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "perp", version, about = "PAC policy identification on tabular episodic MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form claims on the two-step instance over an eps grid.
    VerifyLemmas(VerifyArgs),
    /// Compute a complexity measure for a model and policy set.
    Design(DesignArgs),
    /// Run policy elimination once and write a JSON manifest.
    PerpRun(RunArgs),
    /// Run seeded independent elimination runs and write per-trial CSV.
    Trials(TrialsArgs),
    /// Estimate value differences against a reference from logged episodes.
    Estimate(EstimateArgs),
    /// Sample episodes of one policy and write them as JSON lines.
    Simulate(SimulateArgs),
    /// Write a built-in instance and its policies as JSON files.
    Instance(InstanceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceKind {
    /// Two-step four-state instance with a gap of `--instance-eps`.
    Figure1,
    /// Random five-state instance with a planted gap.
    Planted,
}

#[derive(Args, Clone)]
struct InstanceSource {
    /// Model JSON file (requires --policies).
    #[arg(long, conflicts_with = "instance")]
    mdp: Option<PathBuf>,
    /// Policy set JSON file.
    #[arg(long, requires = "mdp")]
    policies: Option<PathBuf>,
    /// Built-in instance used when no model file is given.
    #[arg(long, value_enum)]
    instance: Option<InstanceKind>,
    /// Transition parameter of figure1 (its value gap).
    #[arg(long, default_value_t = 0.1)]
    instance_eps: f64,
    /// Planted value gap.
    #[arg(long, default_value_t = 0.2)]
    gap: f64,
    /// Seed of the planted instance draw.
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
}

impl InstanceSource {
    fn kind(&self) -> InstanceKind {
        self.instance.unwrap_or(InstanceKind::Figure1)
    }

    fn load(&self) -> Result<(Mdp, Vec<Policy>, serde_json::Value)> {
        if let Some(path) = &self.mdp {
            let Some(pol) = &self.policies else {
                bail!("--mdp needs --policies");
            };
            let mdp = mdp_from_json(&read_file(path)?)?;
            let pis = policies_from_json(&read_file(pol)?, mdp.num_states(), mdp.num_actions())?;
            let desc = json!({ "mdp": path, "policies": pol });
            return Ok((mdp, pis, desc));
        }
        match self.kind() {
            InstanceKind::Figure1 => {
                let (mdp, pis) = figure1_m::<f64>(self.instance_eps, false)?;
                Ok((mdp, pis, json!({ "instance": "figure1", "eps": self.instance_eps })))
            }
            InstanceKind::Planted => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.instance_seed);
                let (mdp, pis) = planted_gap(&mut rng, 5, 3, 3, 6, self.gap)?;
                let desc = json!({ "instance": "planted", "gap": self.gap, "instance_seed": self.instance_seed });
                Ok((mdp, pis, desc))
            }
        }
    }
}

#[derive(Args, Clone)]
struct PerpArgs {
    /// Target accuracy; defaults to 0.02 on figure1 and 0.05 on planted.
    #[arg(long)]
    eps: Option<f64>,
    /// Confidence; defaults to 0.05 on figure1 and 0.1 on planted.
    #[arg(long)]
    kappa: Option<f64>,
    /// Multiplier of the reference budget.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Multiplier of the OptCov epoch guard.
    #[arg(long, default_value_t = 1e3)]
    c_guard: f64,
    #[arg(long, value_enum, default_value = "oracle")]
    mode: ModeArg,
    #[arg(long)]
    max_epochs: Option<u32>,
    /// Use the true mean rewards in the difference estimates.
    #[arg(long)]
    known_rewards: bool,
    /// Stop with a partial report after this many episodes.
    #[arg(long)]
    episode_cap: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Oracle,
    Online,
}

impl PerpArgs {
    fn config(&self, kind: InstanceKind) -> PerpConfig {
        let (eps, kappa) = match kind {
            InstanceKind::Figure1 => (0.02, 0.05),
            InstanceKind::Planted => (0.05, 0.1),
        };
        let mut cfg = PerpConfig::new(self.eps.unwrap_or(eps), self.kappa.unwrap_or(kappa));
        cfg.c = self.c;
        cfg.c_guard = self.c_guard;
        cfg.mode = match self.mode {
            ModeArg::Oracle => BackendMode::Oracle,
            ModeArg::Online => BackendMode::Online,
        };
        cfg.max_epochs = self.max_epochs;
        cfg.known_rewards = self.known_rewards;
        cfg.episode_cap = self.episode_cap;
        cfg
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1")]
    eps_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    kappa: f64,
    /// Seed of the random comparison instances.
    #[arg(long, env = "PERP_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Rho,
    Pedel,
    PedelSingle,
    U,
    All,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[arg(long, value_enum, default_value = "rho")]
    measure: MeasureArg,
    /// Floor on the gap denominators.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Relative tolerance of the design certificate.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[command(flatten)]
    perp: PerpArgs,
    #[arg(long, env = "PERP_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the manifest here instead of stdout.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrialsArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[command(flatten)]
    perp: PerpArgs,
    #[arg(long, default_value_t = 50)]
    n: u64,
    #[arg(long, env = "PERP_SEED", default_value_t = 0)]
    base_seed: u64,
    /// Write the per-trial CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Episodes of the reference policy (JSON lines).
    #[arg(long)]
    ref_log: PathBuf,
    /// Exploration episodes used for the model estimate (JSON lines).
    #[arg(long)]
    exp_log: PathBuf,
    #[arg(long)]
    policies: PathBuf,
    /// Index of the reference policy in the policy file.
    #[arg(long, default_value_t = 0)]
    reference: usize,
    /// State count; inferred from the logs when absent.
    #[arg(long)]
    states: Option<usize>,
    /// Action count; inferred from the logs when absent.
    #[arg(long)]
    actions: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: InstanceSource,
    /// Index of the policy to run; `uniform` plays uniformly at random.
    #[arg(long, default_value = "0")]
    policy: String,
    #[arg(long, default_value_t = 1000)]
    episodes: u64,
    #[arg(long, env = "PERP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    #[command(flatten)]
    source: InstanceSource,
    #[arg(long)]
    out_mdp: PathBuf,
    #[arg(long)]
    out_policies: PathBuf,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode> {
    let rows = verify_lemmas(&args.eps_grid, args.kappa, args.seed)?;
    write_output(args.out.as_deref(), &rows_to_csv(&rows)?)?;
    let failed = rows.iter().filter(|r| r.status == CheckStatus::Fail).count();
    let uncertified = rows.iter().filter(|r| !r.certified).count();
    eprintln!("{} rows, {failed} failed, {uncertified} uncertified", rows.len());
    Ok(if uncertified > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_design(args: &DesignArgs) -> Result<ExitCode> {
    let (mdp, pis, _) = args.source.load()?;
    let mut cfg = MeasureConfig::new(args.eps);
    cfg.tol = args.tol;
    let which: &[Measure] = match args.measure {
        MeasureArg::Rho => &[Measure::Rho],
        MeasureArg::Pedel => &[Measure::Pedel],
        MeasureArg::PedelSingle => &[Measure::PedelSingle],
        MeasureArg::U => &[Measure::U],
        MeasureArg::All => &[Measure::Rho, Measure::Pedel, Measure::PedelSingle, Measure::U],
    };
    let reports = which
        .iter()
        .map(|&m| measure(&mdp, &pis, &cfg, m))
        .collect::<perp_core::Result<Vec<_>>>()?;
    for r in &reports {
        if let Some(d) = &r.diagnostic {
            eprintln!("{}: {d}", r.measure.name());
        }
    }
    write_output(
        args.out.as_deref(),
        &reports_to_csv(&reports.iter().collect::<Vec<_>>()),
    )?;
    Ok(if reports.iter().all(|r| r.certified) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let (mdp, pis, desc) = args.source.load()?;
    let cfg = args.perp.config(args.source.kind());
    let (chosen, report) = perp(Simulator::new(&mdp, args.seed), &pis, &cfg)?;
    let epochs: Vec<serde_json::Value> = report
        .epochs
        .iter()
        .map(|e| {
            json!({
                "epoch": e.schedule.epoch,
                "active": e.active.len(),
                "reference": e.reference,
                "n_bar": e.n_bar,
                "episodes": {
                    "prune": e.episodes.prune,
                    "reference": e.episodes.reference,
                    "optcov": e.episodes.optcov,
                    "total": e.episodes.total(),
                },
                "eliminated": e.eliminated,
                "detail": e,
            })
        })
        .collect();
    let manifest = json!({
        "config": cfg,
        "seed": args.seed,
        "source": desc,
        "epochs": epochs,
        "survivors": report.survivors,
        "final": {
            "chosen": chosen,
            "policy": perp_core::io::policy_to_value(&pis[chosen]),
            "status": report.status,
            "total_episodes": report.total_episodes,
        },
    });
    write_output(
        args.manifest.as_deref(),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    eprintln!(
        "chose policy {chosen} after {} epoch(s), {} episodes",
        report.epochs.len(),
        report.total_episodes
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_trials(args: &TrialsArgs) -> Result<ExitCode> {
    let (mdp, pis, _) = args.source.load()?;
    let cfg = args.perp.config(args.source.kind());
    let report = run_trials(&mdp, &pis, &cfg, args.n, args.base_seed)?;
    write_output(args.out.as_deref(), &report.to_csv()?)?;
    eprintln!("{}", serde_json::to_string(&report.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn load_log(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_trajectories(BufReader::new(file))?)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<ExitCode> {
    let ref_log = load_log(&args.ref_log)?;
    let exp_log = load_log(&args.exp_log)?;
    let all = ref_log.iter().chain(&exp_log);
    let Some(horizon) = ref_log.first().map(|r| r.steps.len()) else {
        bail!("reference log is empty");
    };
    let (mut s_max, mut a_max) = (0, 0);
    for rec in all {
        for &(s, a, _, next) in &rec.steps {
            s_max = s_max.max(s).max(next);
            a_max = a_max.max(a);
        }
    }
    let s_n = args.states.unwrap_or(s_max + 1);
    let a_n = args.actions.unwrap_or(a_max + 1);
    let pis = policies_from_json(&read_file(&args.policies)?, s_n, a_n)?;
    let ref_data = EpisodeDataset::from_records(&ref_log, s_n, a_n, horizon, None)?;
    let exp_data = EpisodeDataset::from_records(&exp_log, s_n, a_n, horizon, None)?;
    let model = estimate_model(&exp_data)?;
    let w_ref = estimate_reference(&ref_data)?;
    let v_bar = mean_return(&ref_data)?;
    let est = estimate_differences(&model.model, &pis, args.reference, w_ref, None)?;
    let mut out = String::from("policy,d_hat,value_estimate\n");
    for (i, d) in est.d_hat.iter().enumerate() {
        out.push_str(&format!("{i},{d},{}\n", off_policy_value(*d, v_bar)));
    }
    write_output(args.out.as_deref(), &out)?;
    eprintln!("best by estimate: policy {}", est.argmax());
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let (mdp, pis, _) = args.source.load()?;
    let (policy, tag) = if args.policy == "uniform" {
        (
            Policy::uniform(mdp.num_states(), mdp.num_actions(), mdp.horizon()),
            "uniform".to_string(),
        )
    } else {
        let i: usize = args.policy.parse().context("--policy takes an index or `uniform`")?;
        let Some(p) = pis.get(i) else {
            bail!("policy index {i} out of range for {} policies", pis.len());
        };
        (p.clone(), i.to_string())
    };
    let mut sim = Simulator::new(&mdp, args.seed);
    let mut records = Vec::with_capacity(args.episodes as usize);
    for _ in 0..args.episodes {
        let steps = sim.simulate_episode(&policy)?;
        records.push(TrajectoryRecord {
            policy: tag.clone(),
            steps: steps.iter().map(|t| (t.s, t.a, t.r, t.next)).collect(),
        });
    }
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &records)?;
    write_output(args.out.as_deref(), &String::from_utf8(buf)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_instance(args: &InstanceArgs) -> Result<ExitCode> {
    let (mdp, pis, _) = args.source.load()?;
    fs::write(&args.out_mdp, mdp_to_json(&mdp)? + "\n")?;
    fs::write(&args.out_policies, policies_to_json(&pis)? + "\n")?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::VerifyLemmas(a) => cmd_verify(a),
        Command::Design(a) => cmd_design(a),
        Command::PerpRun(a) => cmd_run(a),
        Command::Trials(a) => cmd_trials(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Instance(a) => cmd_instance(a),
    }
}

fn main() -> ExitCode {
    match run(&Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
