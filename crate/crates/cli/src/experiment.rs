//! Pipeline steps and sweeps shared by the subcommands and the acceptance
//! suite.

use serde::{Deserialize, Serialize};

use graph_unlearn::certify::{certify, AssumptionConstants, BoundInputs, CertificateReport, CertifyConfig};
use graph_unlearn::data::{gen_synthetic, load_dataset, DatasetStats};
use graph_unlearn::eval::{
    attr_unlearn_loss, f1_micro, mi_proxy_auc, mi_proxy_auc_edges, sample_negative_edges,
    sample_nodes, timed, timed_repeat, EvalReport, TimingStats,
};
use graph_unlearn::model::checkpoint;
use graph_unlearn::oracle::{compare_with_oracle, OracleComparison};
use graph_unlearn::request::{sample_request, Category};
use graph_unlearn::{
    delete, train, unlearn, AttributedGraph, ModelSpec, Solver, TrainedModel, TrainerConfig,
    UnlearnOutcome, UnlearnRequest,
};

use crate::config::RunConfig;
use crate::report::Timing;
use crate::CliResult;

pub struct LoadedGraph {
    pub graph: AttributedGraph,
    pub stats: DatasetStats,
    pub warnings: Vec<String>,
}

/// The dataset directory when configured, otherwise the synthetic graph.
pub fn load_graph(cfg: &RunConfig) -> CliResult<LoadedGraph> {
    Ok(match &cfg.dataset {
        Some(dir) => {
            let ds = load_dataset(dir)?;
            LoadedGraph {
                graph: ds.graph,
                stats: ds.stats,
                warnings: ds.warnings,
            }
        }
        None => {
            let graph = gen_synthetic(&cfg.synthetic_spec(), cfg.data_seed)?;
            let stats = DatasetStats::of(&graph, graph.num_edges());
            LoadedGraph {
                graph,
                stats,
                warnings: Vec::new(),
            }
        }
    })
}

/// The checkpoint when configured, otherwise a freshly trained model.
pub fn obtain_model(cfg: &RunConfig, g: &AttributedGraph) -> CliResult<TrainedModel> {
    Ok(match &cfg.model_path {
        Some(p) => {
            let m = checkpoint::load(p)?;
            m.check_graph(g)?;
            m
        }
        None => train(&cfg.model_spec()?, g, None, cfg.train_seed, cfg.trainer())?,
    })
}

/// The request file when configured, otherwise a sampled request.
pub fn obtain_request(cfg: &RunConfig, g: &AttributedGraph) -> CliResult<UnlearnRequest> {
    Ok(match &cfg.request {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(crate::io_err(p))?;
            UnlearnRequest::from_json(&text)?
        }
        None => sample_request(g, cfg.category()?, cfg.unlearn_ratio, cfg.dims_ratio, cfg.sample_seed)?,
    })
}

pub fn bound_inputs(g: &AttributedGraph, req: &UnlearnRequest, out: &UnlearnOutcome) -> BoundInputs {
    BoundInputs {
        m: g.num_train(),
        delta_v_size: out.delta_v_size(req),
        v_tilde_size: out.sets.v_tilde.len(),
    }
}

/// Short description of a request for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestSummary {
    pub nodes: usize,
    pub edges: usize,
    pub attrs_full: usize,
    pub attrs_partial: usize,
    pub attribute_entries: usize,
}

impl RequestSummary {
    pub fn of(req: &UnlearnRequest, feature_dim: usize) -> Self {
        Self {
            nodes: req.nodes.len(),
            edges: req.edges.len(),
            attrs_full: req.attrs_full.len(),
            attrs_partial: req.attrs_partial.len(),
            attribute_entries: req.attribute_entries(feature_dim).len(),
        }
    }
}

/// One point of a bound sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub category: String,
    pub ratio: f64,
    pub count: usize,
    pub m: usize,
    pub delta_v_size: usize,
    pub v_tilde_size: usize,
    /// `‖θ* − θ̃*‖`.
    pub star_tilde: f64,
    /// `‖θ̃* − θ̄*‖`, the distance the bounds cover.
    pub tilde_bar: f64,
    /// `tilde_bar / star_tilde`.
    pub approx_ratio: f64,
    pub norm_delta_theta_bar: f64,
    pub empirical_l: f64,
    pub empirical_c: f64,
    pub bound_thm2_empirical: f64,
    pub bound_prop3_empirical: f64,
    pub bound_thm2_default: f64,
    pub bound_prop3_default: f64,
    /// Whether the configured constants dominate the measured ones; when
    /// false the default-constant bound carries no guarantee.
    pub assumptions_hold: bool,
    /// `bound_prop3_empirical >= tilde_bar`.
    pub empirical_bound_holds: bool,
}

/// Unlearns and re-trains one request and compares the results.
pub fn bound_point(
    model: &TrainedModel,
    g: &AttributedGraph,
    req: &UnlearnRequest,
    category: &str,
    ratio: f64,
    solver: Solver,
    trainer: TrainerConfig,
    constants: &AssumptionConstants,
) -> CliResult<(BoundRow, OracleComparison)> {
    let out = unlearn(model, g, req, solver)?;
    let tilde = train(&model.spec, &out.graph, Some(model.theta.clone()), model.seed, trainer)?;
    let inputs = bound_inputs(g, req, &out);
    let cmp = compare_with_oracle(
        &model.spec,
        g,
        &out.graph,
        &model.theta,
        &tilde.theta,
        &out.result.theta_bar,
        &out.result.delta_theta_bar,
        inputs.delta_v_size,
        inputs.v_tilde_size,
        constants,
    )?;
    let d = cmp.distances;
    let count = req.nodes.len() + req.edges.len() + req.attrs_full.len() + req.attrs_partial.len();
    let row = BoundRow {
        category: category.to_string(),
        ratio,
        count,
        m: cmp.m,
        delta_v_size: cmp.delta_v_size,
        v_tilde_size: cmp.v_tilde_size,
        star_tilde: d.star_tilde,
        tilde_bar: d.tilde_bar,
        approx_ratio: if d.star_tilde > 0.0 { d.tilde_bar / d.star_tilde } else { 0.0 },
        norm_delta_theta_bar: cmp.norm_delta_theta_bar,
        empirical_l: cmp.empirical.lipschitz_l,
        empirical_c: cmp.empirical.loss_bound_c,
        bound_thm2_empirical: cmp.bound_thm2_empirical,
        bound_prop3_empirical: cmp.bound_prop3_empirical,
        bound_thm2_default: cmp.bound_thm2_default,
        bound_prop3_default: cmp.bound_prop3_default,
        assumptions_hold: cmp.assumptions_hold,
        empirical_bound_holds: cmp.bound_prop3_empirical >= d.tilde_bar,
    };
    Ok((row, cmp))
}

/// Bound points for each ratio of one request category, with nested
/// requests drawn from `sample_seed`.
#[allow(clippy::too_many_arguments)]
pub fn bound_sweep(
    model: &TrainedModel,
    g: &AttributedGraph,
    category: Category,
    ratios: &[f64],
    dims_ratio: f64,
    sample_seed: u64,
    solver: Solver,
    trainer: TrainerConfig,
    constants: &AssumptionConstants,
) -> CliResult<Vec<BoundRow>> {
    ratios
        .iter()
        .map(|&r| {
            let req = sample_request(g, category, r, dims_ratio, sample_seed)?;
            let name = category_name(category);
            Ok(bound_point(model, g, &req, name, r, solver, trainer, constants)?.0)
        })
        .collect()
}

pub fn category_name(c: Category) -> &'static str {
    match c {
        Category::Nodes => "nodes",
        Category::Edges => "edges",
        Category::AttrsFull => "attrs_full",
        Category::AttrsPartial => "attrs_partial",
    }
}

/// Timings of one ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeRow {
    pub category: String,
    pub ratio: f64,
    pub count: usize,
    pub unlearn: TimingStats,
    /// Training from the default start on `G ⊖ ΔG`.
    pub retrain: TimingStats,
    /// Training on `G ⊖ ΔG` warm-started from `θ*`.
    pub retrain_warm: TimingStats,
}

pub fn time_point(
    model: &TrainedModel,
    g: &AttributedGraph,
    req: &UnlearnRequest,
    category: &str,
    ratio: f64,
    solver: Solver,
    trainer: TrainerConfig,
    repeats: usize,
) -> CliResult<TimeRow> {
    let spec: &ModelSpec = &model.spec;
    let (_, unlearn_t) = timed_repeat(repeats, || unlearn(model, g, req, solver))?;
    let (_, retrain_t) = timed_repeat(repeats, || {
        let gm = delete(g, req)?.graph;
        train(spec, &gm, None, model.seed, trainer)
    })?;
    let (_, warm_t) = timed_repeat(repeats, || {
        let gm = delete(g, req)?.graph;
        train(spec, &gm, Some(model.theta.clone()), model.seed, trainer)
    })?;
    Ok(TimeRow {
        category: category.to_string(),
        ratio,
        count: req.nodes.len() + req.edges.len() + req.attrs_full.len() + req.attrs_partial.len(),
        unlearn: unlearn_t,
        retrain: retrain_t,
        retrain_warm: warm_t,
    })
}

/// Everything the `evaluate` pipeline produces.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub request: RequestSummary,
    pub eval: EvalReport,
    pub f1_original: f64,
    pub f1_unlearned: f64,
    pub f1_retrained: f64,
    /// MI proxy AUC of the original model on the same sets.
    pub mi_auc_original: Option<f64>,
    pub mi_auc_edges_original: Option<f64>,
    pub attr_unlearn_loss_original: Option<f64>,
    pub certificate: CertificateReport,
    pub oracle: OracleComparison,
    pub warnings: Vec<String>,
}

/// Train → unlearn → certify → re-train oracle → metrics.
pub fn evaluate(cfg: &RunConfig, timing: &mut Timing) -> CliResult<Evaluation> {
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let mut warnings = loaded.warnings.clone();
    let (model, t) = timed(|| obtain_model(cfg, g));
    let model = model?;
    timing.record("train", t);
    let req = obtain_request(cfg, g)?;
    let solver = cfg.solver_choice()?;

    let (out, t) = timed(|| unlearn(&model, g, &req, solver));
    let out = out?;
    timing.record("unlearn", t);
    let cert_cfg: CertifyConfig = cfg.certify_config();
    let inputs = bound_inputs(g, &req, &out);
    let (theta_cert, mut certificate) = certify(&out.result, inputs, &cert_cfg)?;
    let certified = model.with_theta(theta_cert);

    let (tilde, t) = timed(|| train(&model.spec, &out.graph, Some(model.theta.clone()), model.seed, cfg.trainer()));
    let tilde = tilde?;
    timing.record("retrain", t);
    let oracle = compare_with_oracle(
        &model.spec,
        g,
        &out.graph,
        &model.theta,
        &tilde.theta,
        &out.result.theta_bar,
        &out.result.delta_theta_bar,
        inputs.delta_v_size,
        inputs.v_tilde_size,
        &cert_cfg.constants,
    )?;
    certificate.actual_distance = Some(oracle.distances.tilde_bar);
    if !oracle.assumptions_hold {
        warnings.push(
            "measured constants exceed the configured assumption constants; the certificate bound is not guaranteed"
                .into(),
        );
    }

    let mut eval = EvalReport {
        f1_micro: Some(f1_micro(&certified, &out.graph)?),
        unlearn_ratio: cfg.request.is_none().then_some(cfg.unlearn_ratio),
        request_type: Some(if cfg.request.is_some() {
            "file".into()
        } else {
            cfg.request_type.clone()
        }),
        ..Default::default()
    };
    for (k, v) in [
        ("data_seed", cfg.data_seed),
        ("train_seed", cfg.train_seed),
        ("noise_seed", cfg.noise_seed),
        ("sample_seed", cfg.sample_seed),
    ] {
        eval.seeds.insert(k.into(), v);
    }
    eval.wall_times = timing.0.clone();

    let mut mi_auc_original = None;
    if !req.nodes.is_empty() {
        let test = g.test_nodes();
        match sample_nodes(&test, req.nodes.len(), cfg.sample_seed) {
            Ok(holdout) => {
                eval.mi_auc = Some(mi_proxy_auc(&certified, g, &req.nodes, &holdout)?);
                mi_auc_original = Some(mi_proxy_auc(&model, g, &req.nodes, &holdout)?);
            }
            Err(e) => warnings.push(format!("node MI proxy skipped: {e}")),
        }
    }
    let mut mi_auc_edges_original = None;
    if !req.edges.is_empty() {
        let neg = sample_negative_edges(g, req.edges.len(), cfg.sample_seed)?;
        eval.mi_auc_edges = Some(mi_proxy_auc_edges(&certified, g, &req.edges, &neg)?);
        mi_auc_edges_original = Some(mi_proxy_auc_edges(&model, g, &req.edges, &neg)?);
    }
    let mut attr_unlearn_loss_original = None;
    if !req.attribute_entries(g.feature_dim()).is_empty() {
        eval.attr_unlearn_loss = Some(attr_unlearn_loss(&certified, g, &req)?);
        attr_unlearn_loss_original = Some(attr_unlearn_loss(&model, g, &req)?);
    }

    Ok(Evaluation {
        request: RequestSummary::of(&req, g.feature_dim()),
        eval,
        f1_original: f1_micro(&model, g)?,
        f1_unlearned: f1_micro(&out.model, &out.graph)?,
        f1_retrained: f1_micro(&tilde, &out.graph)?,
        mi_auc_original,
        mi_auc_edges_original,
        attr_unlearn_loss_original,
        certificate,
        oracle,
        warnings,
    })
}
