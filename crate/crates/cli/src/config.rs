//! Run configuration: a flat `key = value` file, overridden by `UNLEARN_*`
//! environment variables, overridden by command-line `--set key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use graph_unlearn::certify::{AssumptionConstants, CertifyConfig};
use graph_unlearn::data::SyntheticSpec;
use graph_unlearn::influence::Solver;
use graph_unlearn::model::{ModelKind, ModelSpec, TrainerConfig};
use graph_unlearn::request::Category;

/// Environment variables `UNLEARN_<KEY>` override file values.
pub const ENV_PREFIX: &str = "UNLEARN_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Native dataset directory; when absent a synthetic graph is generated.
    pub dataset: Option<PathBuf>,
    pub syn_nodes: usize,
    pub syn_classes: usize,
    pub syn_p_intra: f64,
    pub syn_p_inter: f64,
    pub syn_feature_dim: usize,
    pub syn_separation: f64,
    pub syn_noise: f64,
    pub syn_train_fraction: f64,

    pub model: String,
    pub k: usize,
    pub reg_lambda: f64,
    pub hidden: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Checkpoint to start from instead of training.
    pub model_path: Option<PathBuf>,

    /// `auto`, `direct`, `cg` or `stochastic`.
    pub solver: String,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub stoch_t: usize,
    /// Neumann scale; 0 estimates it by power iteration.
    pub stoch_scale: f64,
    pub stoch_damp: f64,

    pub lipschitz_l: f64,
    pub convexity_lambda: f64,
    pub loss_bound_c: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Fixed noise scale; 0 calibrates `σ` from `epsilon`.
    pub sigma: f64,

    pub data_seed: u64,
    pub train_seed: u64,
    pub noise_seed: u64,
    pub sample_seed: u64,

    /// Request JSON file; when absent a request is sampled.
    pub request: Option<PathBuf>,
    pub request_type: String,
    pub unlearn_ratio: f64,
    pub dims_ratio: f64,

    /// Ratios swept by `bench-bounds` and `bench-time`.
    pub ratios: Vec<f64>,
    pub edge_ratios: Vec<f64>,
    pub repeats: usize,

    pub out: PathBuf,
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let syn = SyntheticSpec::default();
        let spec = ModelSpec::default();
        let trainer = TrainerConfig::default();
        let constants = AssumptionConstants::default();
        let cert = CertifyConfig::default();
        Self {
            dataset: None,
            syn_nodes: syn.num_nodes,
            syn_classes: syn.num_classes,
            syn_p_intra: syn.p_intra,
            syn_p_inter: syn.p_inter,
            syn_feature_dim: syn.feature_dim,
            syn_separation: syn.separation,
            syn_noise: syn.noise,
            syn_train_fraction: syn.train_fraction,
            model: "sgc".into(),
            k: spec.k,
            reg_lambda: spec.reg_lambda,
            hidden: spec.hidden,
            tol: trainer.tol,
            max_iters: trainer.max_iters,
            model_path: None,
            solver: "auto".into(),
            cg_tol: 1e-8,
            cg_max_iters: 10_000,
            stoch_t: 1000,
            stoch_scale: 0.0,
            stoch_damp: 0.01,
            lipschitz_l: constants.lipschitz_l,
            convexity_lambda: constants.convexity_lambda,
            loss_bound_c: constants.loss_bound_c,
            epsilon: cert.epsilon,
            delta: cert.delta,
            sigma: 0.0,
            data_seed: 0,
            train_seed: 0,
            noise_seed: 0,
            sample_seed: 0,
            request: None,
            request_type: "nodes".into(),
            unlearn_ratio: 0.05,
            dims_ratio: 0.2,
            ratios: vec![0.01, 0.02, 0.05, 0.1],
            edge_ratios: vec![0.01, 0.02, 0.05, 0.1],
            repeats: 5,
            out: PathBuf::from("out"),
            plot: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid override '{0}', expected key=value")]
    Override(String),
    #[error("invalid configuration")]
    Invalid(Vec<String>),
}

/// Parses a single override value: TOML syntax when it parses, otherwise a
/// bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Builds the merged key table from the three layers.
pub fn merge_layers(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[String],
) -> Result<toml::Table, ConfigError> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            text.parse::<toml::Table>()
                .map_err(|e| ConfigError::Syntax(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(ConfigError::Syntax(format!(
            "config must be flat key = value pairs; '{k}' is a table"
        )));
    }
    let mut env: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .map(|key| (key.to_ascii_lowercase(), v))
        })
        .collect();
    env.sort();
    for (k, v) in env {
        table.insert(k, parse_value(&v));
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(o.clone()))?;
        table.insert(k.trim().to_string(), parse_value(v.trim()));
    }
    Ok(table)
}

impl RunConfig {
    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))
    }

    /// Loads and validates the layered configuration.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg = Self::from_table(merge_layers(file, std::env::vars(), overrides)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if let Some(d) = &self.dataset {
            for f in ["nodes.tsv", "edges.tsv"] {
                if !d.join(f).is_file() {
                    errs.push(format!("dataset file {} does not exist", d.join(f).display()));
                }
            }
        } else if let Err(e) = self.synthetic_spec().validate() {
            errs.push(e.to_string());
        }
        for (name, path) in [("model_path", &self.model_path), ("request", &self.request)] {
            if let Some(p) = path {
                if !p.is_file() {
                    errs.push(format!("{name} file {} does not exist", p.display()));
                }
            }
        }
        if let Err(e) = self.model_spec().and_then(|s| s.validate()) {
            errs.push(e.to_string());
        }
        if !(self.tol > 0.0) {
            errs.push("tol must be > 0".into());
        }
        if let Err(e) = self.solver_choice() {
            errs.push(e.to_string());
        }
        if let Err(e) = self.constants().validate() {
            errs.push(e.to_string());
        }
        if !(self.epsilon > 0.0) {
            errs.push("epsilon must be > 0".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            errs.push("delta must lie in (0, 1)".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            errs.push("sigma must be finite and >= 0".into());
        }
        if let Err(e) = self.request_type.parse::<Category>() {
            errs.push(e.to_string());
        }
        let ratio_ok = |r: f64| r > 0.0 && r <= 1.0;
        if !ratio_ok(self.unlearn_ratio) {
            errs.push("unlearn_ratio must lie in (0, 1]".into());
        }
        if !(self.dims_ratio > 0.0 && self.dims_ratio < 1.0) {
            errs.push("dims_ratio must lie in (0, 1)".into());
        }
        for (name, rs) in [("ratios", &self.ratios), ("edge_ratios", &self.edge_ratios)] {
            if rs.is_empty() || !rs.iter().all(|&r| ratio_ok(r)) {
                errs.push(format!("{name} must be a nonempty list of values in (0, 1]"));
            }
        }
        if self.repeats == 0 {
            errs.push("repeats must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            num_nodes: self.syn_nodes,
            num_classes: self.syn_classes,
            p_intra: self.syn_p_intra,
            p_inter: self.syn_p_inter,
            feature_dim: self.syn_feature_dim,
            separation: self.syn_separation,
            noise: self.syn_noise,
            train_fraction: self.syn_train_fraction,
        }
    }

    pub fn model_spec(&self) -> graph_unlearn::Result<ModelSpec> {
        let kind: ModelKind = self.model.parse()?;
        Ok(ModelSpec {
            kind,
            k: self.k,
            reg_lambda: self.reg_lambda,
            hidden: self.hidden,
        })
    }

    pub fn trainer(&self) -> TrainerConfig {
        TrainerConfig {
            tol: self.tol,
            max_iters: self.max_iters,
        }
    }

    pub fn solver_choice(&self) -> graph_unlearn::Result<Solver> {
        match self.solver.as_str() {
            "auto" => Ok(Solver::Auto),
            "direct" => Ok(Solver::Direct),
            "cg" => Ok(Solver::Cg {
                tol: self.cg_tol,
                max_iters: self.cg_max_iters,
            }),
            "stochastic" => Ok(Solver::Stochastic {
                t: self.stoch_t,
                scale: (self.stoch_scale > 0.0).then_some(self.stoch_scale),
                damp: self.stoch_damp,
            }),
            other => Err(graph_unlearn::Error::Config(format!(
                "unknown solver '{other}' (auto, direct, cg, stochastic)"
            ))),
        }
    }

    pub fn constants(&self) -> AssumptionConstants {
        AssumptionConstants {
            lipschitz_l: self.lipschitz_l,
            convexity_lambda: self.convexity_lambda,
            loss_bound_c: self.loss_bound_c,
        }
    }

    pub fn certify_config(&self) -> CertifyConfig {
        CertifyConfig {
            constants: self.constants(),
            epsilon: self.epsilon,
            delta: self.delta,
            noise_seed: self.noise_seed,
            sigma: (self.sigma > 0.0).then_some(self.sigma),
        }
    }

    pub fn category(&self) -> graph_unlearn::Result<Category> {
        self.request_type.parse()
    }
}
