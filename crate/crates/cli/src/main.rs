//! `qumos` command suite.

mod report;
mod setup;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use qumos::data::prepare;
use qumos::engine::{
    run_random_search, run_search, run_single_provider_nas, write_outputs, QuantumEvaluator, SearchOutcome,
};
use qumos::fleet::{serve_service, LogEntry, Orchestrator, ProviderService, Transport};
use qumos::graph::{accuracy, materialize, train_logged, Exact, NodeExecutor, ProviderId};
use qumos::redteam::{attack_from_logs, query_loopback, recover_bodies, unitary_fidelity};
use qumos::security::security_report;

use setup::{Settings, SharedArgs};

#[derive(Parser, Debug)]
#[command(name = "qumos", version, about = "Distributed quantum model design, security metrics and search")]
struct Cli {
    #[command(flatten)]
    shared: SharedArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Train a design and save the model.
    Train(TrainArgs),
    /// Accuracy of a model on the test split.
    Evaluate(ModelArgs),
    /// Security submodels, their accuracies and SecMec of a model.
    Security(SecurityArgs),
    /// Joint architecture and provider search.
    Search(SearchArgs),
    /// Uniform sampling over the same design space.
    RandomSearch(SearchArgs),
    /// Architecture search with every node on one provider.
    NasSingle(NasSingleArgs),
    /// Provider daemons.
    Provider {
        #[command(subcommand)]
        command: ProviderCommand,
    },
    /// Circuit-inversion attack against single- and multi-provider deployments.
    AttackDemo(AttackArgs),
    /// SVG charts from search outputs.
    Report(report::ReportArgs),
}

#[derive(Subcommand, Debug)]
enum DataCommand {
    /// Load, filter and downsample a dataset; optionally write it as CSV.
    Prepare {
        /// Write train.csv and test.csv into the output directory.
        #[arg(long)]
        write: bool,
    },
}

#[derive(Subcommand, Debug)]
enum ProviderCommand {
    /// Serve one provider profile until interrupted.
    Serve {
        /// Provider id from the fleet.
        #[arg(long)]
        profile: String,
        /// Overrides the port of the profile endpoint (0 picks a free one).
        #[arg(long)]
        port: Option<u16>,
        /// Append every received job to this file as JSON lines.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model or design JSON, or a preset: `naive5`, `full`.
    #[arg(long)]
    design: String,
    /// Noiseless exact simulation instead of the fleet.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    epochs: Option<usize>,
    /// Where to write the trained model (default: <out-dir>/model.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SecurityArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Backbone tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Controller learning rate.
    #[arg(long)]
    controller_lr: Option<f64>,
}

#[derive(Args, Debug)]
struct NasSingleArgs {
    #[command(flatten)]
    search: SearchArgs,
    /// Provider every node is pinned to.
    #[arg(long)]
    provider: String,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory of `<provider>.ndjson` daemon journals; requires `--tcp`.
    #[arg(long)]
    logs: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.shared.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::resolve(&cli.shared)?;
    match cli.command {
        Command::Data {
            command: DataCommand::Prepare { write },
        } => data_prepare(&settings, write.then_some(settings.out_dir.as_path())),
        Command::Train(args) => train_cmd(&settings, &args),
        Command::Evaluate(args) => evaluate_cmd(&settings, &args),
        Command::Security(args) => security_cmd(&settings, &args),
        Command::Search(args) => search_cmd(&settings, &args, Mode::Controller),
        Command::RandomSearch(args) => search_cmd(&settings, &args, Mode::Random),
        Command::NasSingle(args) => search_cmd(&settings, &args.search, Mode::Single(args.provider.clone())),
        Command::Provider {
            command: ProviderCommand::Serve { profile, port, journal },
        } => serve_cmd(&settings, &profile, port, journal.as_deref()),
        Command::AttackDemo(args) => attack_cmd(&settings, &args),
        Command::Report(args) => report::run(&args, &settings.out_dir),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn data_prepare(s: &Settings, out_dir: Option<&Path>) -> Result<()> {
    let (train, test) = prepare(s.config.dataset, &s.data_dir, s.config.seed)
        .with_context(|| format!("preparing {} from {}", s.config.dataset, s.data_dir.display()))?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for (name, set) in [("train.csv", &train), ("test.csv", &test)] {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).with_context(|| path.display().to_string())?;
            let mut header: Vec<String> = (0..16).map(|k| format!("f{k}")).collect();
            header.push("label".into());
            w.write_record(&header)?;
            for i in 0..set.len() {
                let mut row: Vec<String> = set.features(i).iter().map(f64::to_string).collect();
                row.push(set.label(i).to_string());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    let counts = |d: &qumos::data::Dataset| {
        let mut c = vec![0usize; d.n_classes()];
        d.labels().iter().for_each(|&l| c[l] += 1);
        c
    };
    print_json(&json!({
        "dataset": s.config.dataset.to_string(),
        "n_classes": train.n_classes(),
        "train": train.len(),
        "test": test.len(),
        "train_per_class": counts(&train),
        "test_per_class": counts(&test),
    }))
}

fn train_cmd(s: &Settings, args: &TrainArgs) -> Result<()> {
    let (trainset, testset) = s.datasets()?;
    let model = s.load_model(&args.model.design, trainset.n_classes())?;
    let mut config = s.config.train.clone();
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    let (trained, log) = train_logged(&model, &trainset, &config, s.config.seed)?;
    let out = args.out.clone().unwrap_or_else(|| s.out_dir.join("model.json"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&out, serde_json::to_string_pretty(&trained.to_file())? + "\n")
        .with_context(|| out.display().to_string())?;
    let acc = accuracy(&trained, &testset, &Exact, s.config.seed)?;
    print_json(&json!({
        "model": out,
        "epoch_losses": log.epoch_losses,
        "test_acc_exact": acc,
    }))
}

fn executor(s: &Settings, exact: bool) -> Result<Box<dyn NodeExecutor>> {
    if exact {
        return Ok(Box::new(Exact));
    }
    Ok(Box::new(s.orchestrator()?))
}

fn evaluate_cmd(s: &Settings, args: &ModelArgs) -> Result<()> {
    let (trainset, testset) = s.datasets()?;
    let model = s.load_model(&args.design, trainset.n_classes())?;
    let exec = executor(s, args.exact)?;
    let acc = accuracy(&model, &testset, exec.as_ref(), s.config.seed)?;
    print_json(&json!({
        "acc": acc,
        "n_nodes": model.n_nodes(),
        "n_test": testset.len().min(qumos::graph::EVAL_CAP),
    }))
}

fn security_cmd(s: &Settings, args: &SecurityArgs) -> Result<()> {
    let (trainset, testset) = s.datasets()?;
    let model = s.load_model(&args.model.design, trainset.n_classes())?;
    let exec = executor(s, args.model.exact)?;
    let report = security_report(&model, &testset, exec.as_ref(), s.config.seed, s.workers)?;
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n").with_context(|| out.display().to_string())?;
    }
    print_json(&report)
}

enum Mode {
    Controller,
    Random,
    Single(String),
}

fn search_cmd(s: &Settings, args: &SearchArgs, mode: Mode) -> Result<()> {
    let mut config = s.config.clone();
    if let Some(e) = args.episodes {
        config.episodes = e;
    }
    if let Some(l) = args.lambda {
        config.lambda = l;
    }
    if let Some(d) = args.depth {
        config.backbone_depth = d;
    }
    if let Some(lr) = args.controller_lr {
        config.controller_lr = lr;
    }
    config.validate()?;
    let (trainset, testset) = s.datasets()?;
    let mut evaluator = QuantumEvaluator {
        trainset,
        testset,
        orchestrator: s.orchestrator()?,
        train: config.train.clone(),
        workers: s.workers,
    };
    let outcome: SearchOutcome = match mode {
        Mode::Controller => run_search(&config, &mut evaluator)?,
        Mode::Random => run_random_search(&config, &mut evaluator)?,
        Mode::Single(p) => run_single_provider_nas(&config, &ProviderId::from(p.as_str()), &mut evaluator)?,
    };
    write_outputs(&outcome, &s.out_dir)?;
    print_json(&json!({
        "out_dir": s.out_dir,
        "episodes": outcome.records.len(),
        "best_acc": {"acc": outcome.best_acc.acc, "sec_mec": outcome.best_acc.sec_mec},
        "best_sec": {"acc": outcome.best_sec.acc, "sec_mec": outcome.best_sec.sec_mec},
        "pareto": outcome.pareto.len(),
    }))
}

fn serve_cmd(s: &Settings, profile: &str, port: Option<u16>, journal: Option<&Path>) -> Result<()> {
    let mut profile = s.fleet.provider(&ProviderId::from(profile))?.clone();
    if let Some(port) = port {
        let host = profile.endpoint.rsplit_once(':').map_or("127.0.0.1", |(h, _)| h).to_string();
        profile.endpoint = format!("{host}:{port}");
    }
    let mut service = ProviderService::new(profile.clone())?;
    if let Some(path) = journal {
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| path.display().to_string())?;
        service = service.with_journal(file);
    }
    let daemon = serve_service(service).with_context(|| format!("binding {}", profile.endpoint))?;
    println!("{} listening on {}", profile.id, daemon.local_addr());
    std::io::stdout().flush()?;
    daemon.wait();
    Ok(())
}

fn read_journal(path: &Path) -> Result<Vec<LogEntry>> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("{}: bad journal line", path.display())))
        .collect()
}

fn attack_cmd(s: &Settings, args: &AttackArgs) -> Result<()> {
    let (trainset, testset) = s.datasets()?;
    let model = s.load_model(&args.model.design, trainset.n_classes())?;
    let probe = setup::probe(s.config.seed);
    let logs: BTreeMap<ProviderId, Vec<LogEntry>> = match (&args.logs, s.tcp) {
        (Some(dir), true) => {
            let orchestrator = s.orchestrator()?;
            qumos::graph::forward(&model, &probe, &orchestrator, s.config.seed)?;
            s.fleet
                .provider_ids()
                .into_iter()
                .map(|p| {
                    let path = dir.join(format!("{p}.ndjson"));
                    let log = if path.exists() { read_journal(&path)? } else { Vec::new() };
                    Ok((p, log))
                })
                .collect::<Result<_>>()?
        }
        (Some(_), false) => bail!("--logs reads daemon journals and needs --tcp"),
        (None, _) => query_loopback(&model, &s.fleet, &probe, s.config.shots, s.config.seed)?,
    };
    let distributed = attack_from_logs(&model, &s.fleet, &logs, &probe, &testset, s.config.shots, s.config.seed)?;

    // Same model with every node on one provider: that provider sees it all.
    let victim = s.fleet.provider_ids().into_iter().next().context("fleet has no providers")?;
    let mut file = model.to_file();
    file.provider.values_mut().for_each(|p| *p = victim.clone());
    let pinned = file.into_model()?;
    let pinned_logs = query_loopback(&pinned, &s.fleet, &probe, s.config.shots, s.config.seed)?;
    let plan = pinned.plan();
    let layout = plan.steps().iter().map(|st| (st.node, st.inputs.clone())).collect();
    let bodies = recover_bodies(&pinned_logs[&victim], &layout, &probe)?;
    let mut single_fidelity: f64 = 1.0;
    for st in plan.steps() {
        single_fidelity = single_fidelity.min(unitary_fidelity(&bodies[&st.node], &st.body)?);
    }
    print_json(&json!({
        "single_provider": {
            "provider": victim,
            "nodes_recovered": bodies.len(),
            "min_fidelity": single_fidelity,
        },
        "distributed": distributed,
        "max_acc_gap": distributed.max_acc_gap(),
    }))
}

pub(crate) fn transport(s: &Settings) -> Result<Arc<dyn Transport>> {
    Ok(if s.tcp {
        Arc::new(qumos::fleet::TcpTransport::new(&s.fleet, s.timeout))
    } else {
        Arc::new(qumos::fleet::Loopback::new(&s.fleet)?)
    })
}

impl Settings {
    fn orchestrator(&self) -> Result<Orchestrator<Arc<dyn Transport>>> {
        Ok(Orchestrator::new(transport(self)?, self.fleet.clone(), self.config.shots)?)
    }

    fn datasets(&self) -> Result<(qumos::data::Dataset, qumos::data::Dataset)> {
        let (train, test) = prepare(self.config.dataset, &self.data_dir, self.config.seed)
            .with_context(|| format!("loading {} from {}", self.config.dataset, self.data_dir.display()))?;
        Ok((train, test.take(self.test_cap)))
    }

    fn load_model(&self, spec: &str, n_classes: usize) -> Result<qumos::graph::Model> {
        let mut model = match setup::preset(spec, &self.fleet)? {
            Some(design) => materialize(&design, self.config.seed)?,
            None => {
                let text = fs::read_to_string(spec).with_context(|| format!("reading design {spec}"))?;
                setup::parse_model(&text, self.config.seed).with_context(|| format!("parsing design {spec}"))?
            }
        };
        model.set_n_classes(n_classes)?;
        Ok(model)
    }
}
