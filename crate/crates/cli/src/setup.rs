use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;

use qumos::arch::TemplateId;
use qumos::data::DatasetName;
use qumos::engine::SearchConfig;
use qumos::fleet::FleetConfig;
use qumos::graph::{materialize, Model, ModelDesign, ModelFile, NodeId, TrainConfig, EVAL_CAP};
use qumos::qsim::Shots;

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
pub struct SharedArgs {
    /// JSON config: search settings plus optional `data_dir` and `out_dir`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "QUMOS_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// mnist2, mnist4, fashion2, fashion4, synth2 or synth4.
    #[arg(long, global = true)]
    pub dataset: Option<DatasetName>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shots per circuit, or `exact`.
    #[arg(long, global = true)]
    pub shots: Option<Shots>,
    /// Short training, small test split and fewer shots.
    #[arg(long, global = true)]
    pub fast: bool,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Fleet JSON (providers, devices, endpoints).
    #[arg(long, global = true)]
    pub fleet: Option<PathBuf>,
    /// Use the built-in fleet with this many providers.
    #[arg(long, global = true, conflicts_with = "fleet")]
    pub providers: Option<usize>,
    /// Send jobs to running provider daemons instead of in-process providers.
    #[arg(long, global = true)]
    pub tcp: bool,
    /// Per-job network deadline in milliseconds.
    #[arg(long, global = true, default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Parallel submodel evaluations.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

pub struct Settings {
    pub config: SearchConfig,
    pub fleet: FleetConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub test_cap: usize,
    pub tcp: bool,
    pub timeout: Duration,
    pub workers: usize,
}

/// Training used by `--fast`.
pub fn fast_train() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        max_samples: Some(96),
        ..TrainConfig::fast()
    }
}

pub const FAST_TEST: usize = 100;
pub const FAST_SHOTS: Shots = Shots::Count(1024);

impl Settings {
    pub fn resolve(args: &SharedArgs) -> Result<Settings> {
        let mut data_dir = None;
        let mut out_dir = None;
        let mut config = match &args.config {
            None => SearchConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                let mut value: serde_json::Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
                let Some(map) = value.as_object_mut() else {
                    bail!("config {} must be a JSON object", path.display());
                };
                data_dir = map.remove("data_dir").map(serde_json::from_value::<PathBuf>).transpose()?;
                out_dir = map.remove("out_dir").map(serde_json::from_value::<PathBuf>).transpose()?;
                serde_json::from_value(value).with_context(|| format!("config {}", path.display()))?
            }
        };
        if let Some(d) = args.dataset {
            config.dataset = d;
        }
        if let Some(s) = args.seed {
            config.seed = s;
        }
        let mut test_cap = EVAL_CAP;
        if args.fast {
            config.train = fast_train();
            config.shots = FAST_SHOTS;
            test_cap = FAST_TEST;
        }
        if let Some(s) = args.shots {
            config.shots = s;
        }
        if let Some(path) = &args.fleet {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading fleet {}", path.display()))?;
            config.fleet = serde_json::from_str(&text).with_context(|| format!("parsing fleet {}", path.display()))?;
        }
        if let Some(n) = args.providers {
            config.fleet = FleetConfig::default_fleet(n)?;
        }
        config.fleet.validate()?;
        Ok(Settings {
            fleet: config.fleet.clone(),
            data_dir: args.data_dir.clone().or(data_dir).unwrap_or_else(|| PathBuf::from("data")),
            out_dir: args.out_dir.clone().or(out_dir).unwrap_or_else(|| PathBuf::from("qumos-out")),
            test_cap,
            tcp: args.tcp,
            timeout: Duration::from_millis(args.timeout_ms),
            workers: args
                .workers
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
                .max(1),
            config,
        })
    }
}

const PRESET_TEMPLATE: u8 = 4;

/// Named designs: `naive5` (five nodes of one template, providers 2/2/1)
/// and `full` (every node of a depth-3 tree on the first provider).
pub fn preset(name: &str, fleet: &FleetConfig) -> Result<Option<ModelDesign>> {
    let ids = fleet.provider_ids();
    let t = TemplateId::new(PRESET_TEMPLATE)?;
    let design = match name {
        "full" => ModelDesign::uniform(3, t, ids[0].clone())?,
        "naive5" => {
            if ids.len() < 3 {
                bail!("naive5 needs three providers, fleet has {}", ids.len());
            }
            let mut d = ModelDesign::uniform(3, t, ids[0].clone())?;
            for n in [5, 7] {
                d.arch.insert(NodeId(n), TemplateId::EMPTY);
            }
            for (n, p) in [(1, 0), (2, 0), (3, 1), (6, 1), (4, 2), (5, 2), (7, 2)] {
                d.provider.insert(NodeId(n), ids[p].clone());
            }
            d
        }
        _ => return Ok(None),
    };
    Ok(Some(design))
}

/// A trained model file, or a bare design that gets fresh parameters.
pub fn parse_model(text: &str, seed: u64) -> Result<Model> {
    if let Ok(file) = serde_json::from_str::<ModelFile>(text) {
        return Ok(file.into_model()?);
    }
    let design: ModelDesign = serde_json::from_str(text).context("neither a model file nor a design")?;
    Ok(materialize(&design, seed)?)
}

/// The attacker's query: 16 angles in [0, π) from `seed`.
pub fn probe(seed: u64) -> Vec<f64> {
    (0..16)
        .map(|k| {
            let h = qumos::seed::derive(qumos::seed::derive(seed, 0x9e0b), k);
            (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::PI
        })
        .collect()
}
