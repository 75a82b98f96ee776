//! Run configuration from flags and `key = value` files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use crate::data_io::Normalization;
use crate::graph_embed::WalkWeighting;
use crate::net::Reduction;
use crate::pipeline::{PipelineConfig, Scale};

use super::CliError;

/// Hyper-parameter flags shared by `train` and `embed-labels`.
///
/// Every flag can also be set in a `--config` file under the same name
/// (without the dashes); flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// key = value file with any of the options below.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Preset for hidden size, embedding dimension and cluster count.
    #[arg(long, value_name = "small|large")]
    pub scale: Option<Scale>,
    /// Label embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Hidden layer width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Network training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Network learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Dropout rate on the output layer.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Loss reduction over a minibatch.
    #[arg(long, value_name = "mean|sum")]
    pub reduction: Option<String>,
    /// Number of k-means clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub kmeans_iters: Option<usize>,
    /// Seed for every random stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feature normalization applied before training and prediction.
    #[arg(long, value_name = "none|unit_l2")]
    pub normalize: Option<Normalization>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Skip-gram context window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples per skip-gram pair.
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Skip-gram passes over the walk corpus.
    #[arg(long)]
    pub walk_epochs: Option<usize>,
    /// Initial skip-gram learning rate.
    #[arg(long)]
    pub walk_lr: Option<f64>,
    /// Walk transition rule.
    #[arg(long, value_name = "uniform|cooccurrence")]
    pub walk_weighting: Option<WalkWeighting>,
    /// Skip-gram worker threads. Above 1 the label embedding is not reproducible.
    #[arg(long)]
    pub walk_threads: Option<usize>,
    /// Disable the network bias terms.
    #[arg(long)]
    pub no_bias: bool,
    /// Keep label targets at their raw (averaged) length.
    #[arg(long)]
    pub no_target_norm: bool,
    /// Visit training points in file order every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
}

/// Keys accepted in config files.
pub const CONFIG_KEYS: &[&str] = &[
    "scale",
    "dim",
    "hidden",
    "epochs",
    "lr",
    "momentum",
    "weight_decay",
    "dropout",
    "batch_size",
    "reduction",
    "clusters",
    "kmeans_iters",
    "seed",
    "threads",
    "normalize",
    "walks_per_node",
    "walk_length",
    "window",
    "negatives",
    "walk_epochs",
    "walk_lr",
    "walk_min_lr",
    "walk_weighting",
    "walk_threads",
    "bias",
    "target_norm",
    "shuffle",
];

/// Parses `key = value` lines. `#` starts a comment; dashes in keys read as underscores.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let key = k.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key {key:?}", n + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {value:?}")),
    }
}

/// Sets one option. `scale` is handled by the caller since it resets defaults.
pub fn apply_setting(config: &mut PipelineConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "scale" => {}
        "dim" => config.deepwalk.dim = parse(key, value)?,
        "hidden" => config.hidden = parse(key, value)?,
        "epochs" => config.train.epochs = parse(key, value)?,
        "lr" => config.train.learning_rate = parse(key, value)?,
        "momentum" => config.train.momentum = parse(key, value)?,
        "weight_decay" => config.train.weight_decay = parse(key, value)?,
        "dropout" => config.train.dropout_rate = parse(key, value)?,
        "batch_size" => config.train.batch_size = parse(key, value)?,
        "reduction" => {
            config.train.reduction = match value {
                "mean" => Reduction::Mean,
                "sum" => Reduction::Sum,
                _ => return Err(format!("reduction: expected mean or sum, got {value:?}")),
            }
        }
        "clusters" => config.clusters = parse(key, value)?,
        "kmeans_iters" => config.kmeans_iters = parse(key, value)?,
        "seed" => {
            let seed: u64 = parse(key, value)?;
            config.deepwalk.seed = seed;
            config.train.seed = seed;
            config.kmeans_seed = seed;
        }
        "threads" => {
            let t: usize = parse(key, value)?;
            config.threads = t;
            config.train.threads = t;
        }
        "normalize" => config.normalization = parse(key, value)?,
        "walks_per_node" => config.deepwalk.walks_per_node = parse(key, value)?,
        "walk_length" => config.deepwalk.walk_length = parse(key, value)?,
        "window" => config.deepwalk.window = parse(key, value)?,
        "negatives" => config.deepwalk.negative_samples = parse(key, value)?,
        "walk_epochs" => config.deepwalk.epochs = parse(key, value)?,
        "walk_lr" => config.deepwalk.initial_learning_rate = parse(key, value)?,
        "walk_min_lr" => config.deepwalk.min_learning_rate = parse(key, value)?,
        "walk_weighting" => config.deepwalk.weighting = parse(key, value)?,
        "walk_threads" => config.deepwalk.threads = parse(key, value)?,
        "bias" => config.use_bias = parse_bool(key, value)?,
        "target_norm" => config.train.normalize_targets = parse_bool(key, value)?,
        "shuffle" => config.train.shuffle = parse_bool(key, value)?,
        other => return Err(format!("unknown option {other:?}")),
    }
    Ok(())
}

impl ConfigArgs {
    /// Flag values as config-file style settings.
    fn flag_settings(&self, threads: usize) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field {
                    out.push(($key, v.to_string()));
                })*
            };
        }
        push!(
            dim => "dim",
            hidden => "hidden",
            epochs => "epochs",
            lr => "lr",
            momentum => "momentum",
            weight_decay => "weight_decay",
            dropout => "dropout",
            batch_size => "batch_size",
            reduction => "reduction",
            clusters => "clusters",
            kmeans_iters => "kmeans_iters",
            seed => "seed",
            normalize => "normalize",
            walks_per_node => "walks_per_node",
            walk_length => "walk_length",
            window => "window",
            negatives => "negatives",
            walk_epochs => "walk_epochs",
            walk_lr => "walk_lr",
            walk_threads => "walk_threads",
        );
        if let Some(w) = self.walk_weighting {
            let name = match w {
                WalkWeighting::Uniform => "uniform",
                WalkWeighting::CoOccurrence => "cooccurrence",
            };
            out.push(("walk_weighting", name.to_string()));
        }
        if self.no_bias {
            out.push(("bias", "false".into()));
        }
        if self.no_target_norm {
            out.push(("target_norm", "false".into()));
        }
        if self.no_shuffle {
            out.push(("shuffle", "false".into()));
        }
        out.push(("threads", threads.to_string()));
        out
    }

    /// Builds and validates the pipeline configuration: scale defaults, then
    /// the config file, then flags.
    pub fn resolve(&self, threads: Option<usize>) -> Result<PipelineConfig, CliError> {
        let file = match &self.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let scale = match (self.scale, file.get("scale")) {
            (Some(s), _) => s,
            (None, Some(s)) => s.parse().map_err(CliError::Usage)?,
            (None, None) => Scale::Small,
        };
        let mut config = PipelineConfig::for_scale(scale, 1);
        for (k, v) in &file {
            apply_setting(&mut config, k, v).map_err(CliError::Usage)?;
        }
        let file_threads = file.get("threads").map(|t| parse::<usize>("threads", t)).transpose();
        let threads = match threads {
            Some(t) => t,
            None => file_threads.map_err(CliError::Usage)?.unwrap_or(1),
        };
        for (k, v) in self.flag_settings(threads) {
            apply_setting(&mut config, k, &v).map_err(CliError::Usage)?;
        }
        if config.threads == 0 {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}
