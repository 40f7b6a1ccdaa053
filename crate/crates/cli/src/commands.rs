//! Subcommand implementations. Each writes `report.json` (plus model,
//! request, CSV and SVG artifacts where relevant) into `cfg.out` and
//! returns the report.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use graph_unlearn::certify::certify;
use graph_unlearn::data::{convert_planetoid, save_dataset, DatasetStats};
use graph_unlearn::eval::{f1_micro, timed};
use graph_unlearn::model::checkpoint;
use graph_unlearn::oracle::{parameter_distances, retrain};
use graph_unlearn::request::{sample_request, Category};
use graph_unlearn::{train, unlearn};

use crate::config::RunConfig;
use crate::experiment::{
    bound_inputs, bound_sweep, evaluate, load_graph, obtain_model, obtain_request, time_point,
    BoundRow, RequestSummary, TimeRow,
};
use crate::plot::{line_chart, Series};
use crate::report::{envelope, to_value, write_csv, write_json, Timing};
use crate::{io_err, CliError, CliResult};

/// Configuration echoed into reports; the output directory is left out so
/// identical runs into different directories produce identical reports.
pub fn config_echo(cfg: &RunConfig) -> Value {
    let mut v = to_value(cfg);
    if let Value::Object(m) = &mut v {
        m.remove("out");
    }
    v
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: PathBuf, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(&path, bytes).map_err(io_err(path))
}

fn finish(cfg: &RunConfig, command: &str, result: Value, timing: &Timing) -> CliResult<Value> {
    let report = envelope(command, config_echo(cfg), result, timing);
    let path = cfg.out.join("report.json");
    write_json(&path, &report).map_err(io_err(path))?;
    Ok(report)
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let mut timing = Timing::default();
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let (model, t) = timed(|| train(&cfg.model_spec()?, g, None, cfg.train_seed, cfg.trainer()));
    let model = model?;
    timing.record("train", t);
    let path = cfg.out.join("model.bin");
    checkpoint::save(&model, &path)?;
    let result = json!({
        "dataset": loaded.stats,
        "dataset_warnings": loaded.warnings,
        "num_params": model.theta.len(),
        "diagnostics": model.diagnostics,
        "f1_micro": f1_micro(&model, g)?,
        "model_file": "model.bin",
    });
    finish(cfg, "train", result, &timing)
}

pub fn cmd_unlearn(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let mut timing = Timing::default();
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let model = obtain_model(cfg, g)?;
    let req = obtain_request(cfg, g)?;
    write_file(cfg.out.join("request.json"), req.to_json())?;
    let (out, t) = timed(|| unlearn(&model, g, &req, cfg.solver_choice()?));
    let out = out?;
    timing.record("unlearn", t);
    let inputs = bound_inputs(g, &req, &out);
    // Bounds without noise: the certificate of the configured constants.
    let (_, cert) = certify(&out.result, inputs, &cfg.certify_config())?;
    checkpoint::save(&out.model, &cfg.out.join("model_unlearned.bin"))?;
    let result = json!({
        "request": RequestSummary::of(&req, g.feature_dim()),
        "influence": out.result,
        "bound_thm2": cert.bound_thm2,
        "bound_prop3": cert.bound_prop3,
        "norm_delta_theta_bar": cert.norm_delta_theta_bar,
        "f1_micro": f1_micro(&out.model, &out.graph)?,
        "model_file": "model_unlearned.bin",
    });
    finish(cfg, "unlearn", result, &timing)
}

pub fn cmd_retrain(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let mut timing = Timing::default();
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let model = obtain_model(cfg, g)?;
    let req = obtain_request(cfg, g)?;
    let (res, t) = timed(|| retrain(&model, g, &req, cfg.trainer()));
    let (tilde, g_minus) = res?;
    timing.record("retrain", t);
    checkpoint::save(&tilde, &cfg.out.join("model_retrained.bin"))?;
    let d = parameter_distances(&model.theta, &tilde.theta, &tilde.theta)?;
    let result = json!({
        "request": RequestSummary::of(&req, g.feature_dim()),
        "diagnostics": tilde.diagnostics,
        "distance_to_original": d.star_tilde,
        "f1_micro": f1_micro(&tilde, &g_minus)?,
        "model_file": "model_retrained.bin",
    });
    finish(cfg, "retrain", result, &timing)
}

pub fn cmd_certify(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let mut timing = Timing::default();
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let model = obtain_model(cfg, g)?;
    let req = obtain_request(cfg, g)?;
    let (out, t) = timed(|| unlearn(&model, g, &req, cfg.solver_choice()?));
    let out = out?;
    timing.record("unlearn", t);
    let (theta, cert) = certify(&out.result, bound_inputs(g, &req, &out), &cfg.certify_config())?;
    let certified = model.with_theta(theta);
    checkpoint::save(&certified, &cfg.out.join("model_certified.bin"))?;
    let result = json!({
        "request": RequestSummary::of(&req, g.feature_dim()),
        "certificate": cert,
        "f1_micro": f1_micro(&certified, &out.graph)?,
        "model_file": "model_certified.bin",
    });
    finish(cfg, "certify", result, &timing)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let mut timing = Timing::default();
    let ev = evaluate(cfg, &mut timing)?;
    finish(cfg, "evaluate", to_value(&ev), &timing)
}

fn bound_series(rows: &[BoundRow]) -> Vec<Series> {
    let s = |label: &str, f: fn(&BoundRow) -> f64| Series {
        label: label.into(),
        points: rows.iter().map(|r| (100.0 * r.ratio, f(r))).collect(),
    };
    vec![
        s("actual", |r| r.tilde_bar),
        s("bound (measured)", |r| r.bound_prop3_empirical),
        s("bound (default)", |r| r.bound_prop3_default),
    ]
}

pub fn cmd_bench_bounds(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let mut timing = Timing::default();
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let model = obtain_model(cfg, g)?;
    let solver = cfg.solver_choice()?;
    let constants = cfg.constants();
    let mut all = Vec::new();
    let mut sweeps = Vec::new();
    for (cat, ratios) in [(Category::Nodes, &cfg.ratios), (Category::Edges, &cfg.edge_ratios)] {
        let (rows, t) = timed(|| {
            bound_sweep(&model, g, cat, ratios, cfg.dims_ratio, cfg.sample_seed, solver, cfg.trainer(), &constants)
        });
        let rows = rows?;
        let name = crate::experiment::category_name(cat);
        timing.record(&format!("sweep_{name}"), t);
        if cfg.plot {
            let svg = line_chart(
                &format!("distance bound vs actual ({name})"),
                "unlearn ratio (%)",
                "distance (log10)",
                &bound_series(&rows),
                true,
            );
            write_file(cfg.out.join(format!("bounds_{name}.svg")), svg)?;
        }
        sweeps.push(json!({
            "category": name,
            "all_bounds_hold": rows.iter().all(|r| r.empirical_bound_holds),
            "flagged_assumption_violations": rows.iter().filter(|r| !r.assumptions_hold).count(),
        }));
        all.extend(rows);
    }
    write_csv(&cfg.out.join("bounds.csv"), &all)?;
    let result = json!({ "sweeps": sweeps, "points": all });
    finish(cfg, "bench-bounds", result, &timing)
}

#[derive(Serialize)]
struct TimeCsvRow<'a> {
    category: &'a str,
    ratio: f64,
    count: usize,
    unlearn_median: f64,
    unlearn_variance: f64,
    retrain_median: f64,
    retrain_variance: f64,
    retrain_warm_median: f64,
    repeats: usize,
}

pub fn cmd_bench_time(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let loaded = load_graph(cfg)?;
    let g = &loaded.graph;
    let model = obtain_model(cfg, g)?;
    let solver = cfg.solver_choice()?;
    let cat = cfg.category()?;
    let name = crate::experiment::category_name(cat);
    let rows: Vec<TimeRow> = cfg
        .ratios
        .iter()
        .map(|&r| {
            let req = sample_request(g, cat, r, cfg.dims_ratio, cfg.sample_seed)?;
            time_point(&model, g, &req, name, r, solver, cfg.trainer(), cfg.repeats)
        })
        .collect::<CliResult<_>>()?;
    let csv_rows: Vec<TimeCsvRow> = rows
        .iter()
        .map(|r| TimeCsvRow {
            category: &r.category,
            ratio: r.ratio,
            count: r.count,
            unlearn_median: r.unlearn.median,
            unlearn_variance: r.unlearn.variance,
            retrain_median: r.retrain.median,
            retrain_variance: r.retrain.variance,
            retrain_warm_median: r.retrain_warm.median,
            repeats: r.unlearn.repeats,
        })
        .collect();
    write_csv(&cfg.out.join("timing.csv"), &csv_rows)?;
    if cfg.plot {
        let pts = |f: fn(&TimeRow) -> f64| rows.iter().map(|r| (100.0 * r.ratio, f(r))).collect();
        let svg = line_chart(
            "running time",
            "unlearn ratio (%)",
            "seconds (log10)",
            &[
                Series { label: "unlearn".into(), points: pts(|r| r.unlearn.median) },
                Series { label: "retrain".into(), points: pts(|r| r.retrain.median) },
                Series { label: "retrain (warm)".into(), points: pts(|r| r.retrain_warm.median) },
            ],
            true,
        );
        write_file(cfg.out.join("timing.svg"), svg)?;
    }
    let counts: Vec<usize> = rows.iter().map(|r| r.count).collect();
    let timing = Timing::default();
    // Every measured quantity here is a timing; the whole table lives under
    // the timing key.
    let mut report = envelope(
        "bench-time",
        config_echo(cfg),
        json!({ "category": name, "ratios": cfg.ratios, "counts": counts }),
        &timing,
    );
    report["timing"] = to_value(&rows);
    let path = cfg.out.join("report.json");
    write_json(&path, &report).map_err(io_err(path))?;
    Ok(report)
}

pub fn cmd_gen_synthetic(cfg: &RunConfig) -> CliResult<Value> {
    prepare_out(&cfg.out)?;
    let loaded = load_graph(cfg)?;
    save_dataset(&loaded.graph, &cfg.out)?;
    let result = json!({ "dataset": DatasetStats::of(&loaded.graph, loaded.graph.num_edges()) });
    finish(cfg, "gen-synthetic", result, &Timing::default())
}

pub fn cmd_convert(cfg: &RunConfig, content: &Path, cites: &Path, train_fraction: f64) -> CliResult<Value> {
    for p in [content, cites] {
        if !p.is_file() {
            return Err(CliError::Usage(format!("input file {} does not exist", p.display())));
        }
    }
    prepare_out(&cfg.out)?;
    let manifest = convert_planetoid(content, cites, &cfg.out, train_fraction, cfg.data_seed)?;
    let result = json!({
        "stats": manifest.stats,
        "classes": manifest.classes,
        "stratified": manifest.stratified,
        "self_loops_dropped": manifest.self_loops_dropped,
        "dangling_edges_dropped": manifest.dangling_edges_dropped,
        "manifest_file": "manifest.json",
    });
    finish(cfg, "convert", result, &Timing::default())
}
