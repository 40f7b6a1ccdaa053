//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary (`harness = false`).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graph_unlearn::certify::{bound_optimals, calibrate_sigma, gaussian_noise, AssumptionConstants};
use graph_unlearn::data::{gen_synthetic, SyntheticSpec};
use graph_unlearn::influence::solve_hessian_system;
use graph_unlearn::linalg::{distance, dot, norm, Matrix};
use graph_unlearn::model::{Differentiable, Forward, Objective};
use graph_unlearn::oracle::argmin_xi_objective;
use graph_unlearn::request::{Category, PartialAttr};
use graph_unlearn::{
    compute_affected_sets, delete, train, AttributedGraph, GraphBuilder, ModelSpec, NodeSet,
    Solver, TrainerConfig, UnlearnRequest,
};
use unlearn_cli::experiment::{bound_sweep, evaluate, time_point, BoundRow};
use unlearn_cli::report::{strip_timing, Timing};
use unlearn_cli::RunConfig;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- fixtures

fn random_graph(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize, p_edge: f64) -> AttributedGraph {
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let mut feats = Vec::with_capacity(n * d);
    for &l in &labels {
        for j in 0..d {
            let shift = if j % c == l { 1.0 } else { 0.0 };
            feats.push(shift + rng.gen_range(-1.0..1.0));
        }
    }
    let mut train = vec![false; n];
    for t in train.iter_mut() {
        *t = rng.gen_bool(0.7);
    }
    train[0] = true;
    train[1] = true;
    let test: Vec<bool> = train.iter().map(|t| !t).collect();
    let mut b = GraphBuilder::new(Matrix::from_vec(n, d, feats), labels, c).masks(train, test);
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen_bool(p_edge) {
                b = b.edge(u, v);
            }
        }
    }
    b.build().expect("valid random graph").0
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, pool: &[T], count: usize) -> Vec<T> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(count.min(pool.len()));
    v
}

/// Random request; `kinds` selects the categories present.
fn random_request(rng: &mut ChaCha8Rng, g: &AttributedGraph, kinds: &[Category]) -> UnlearnRequest {
    let mut req = UnlearnRequest::default();
    let train: Vec<usize> = g.train_nodes().iter().collect();
    let all: Vec<usize> = (0..g.num_nodes()).collect();
    let mut used = NodeSet::new();
    for kind in kinds {
        let count = rng.gen_range(1..=3);
        match kind {
            Category::Nodes => {
                // keep at least two training nodes
                let nodes = pick(rng, &train, count.min(train.len().saturating_sub(2)).max(1));
                req.nodes = nodes.into_iter().collect();
            }
            Category::Edges => {
                let edges = g.edges();
                if !edges.is_empty() {
                    req.edges = pick(rng, &edges, count);
                }
            }
            Category::AttrsFull => {
                req.attrs_full = pick(rng, &all, count).into_iter().collect();
                used = req.attrs_full.clone();
            }
            Category::AttrsPartial => {
                let free: Vec<usize> = all.iter().copied().filter(|&v| !used.contains(v)).collect();
                let d = g.feature_dim();
                let dims: Vec<usize> = (0..d).collect();
                let mut nodes = pick(rng, &free, count);
                nodes.sort_unstable();
                req.attrs_partial = nodes
                    .into_iter()
                    .map(|node| {
                        let k = rng.gen_range(1..d);
                        let mut ds = pick(rng, &dims, k);
                        ds.sort_unstable();
                        PartialAttr { node, dims: ds }
                    })
                    .collect();
            }
        }
    }
    req
}

const ALL: [Category; 4] = [Category::Nodes, Category::Edges, Category::AttrsFull, Category::AttrsPartial];

fn category_mix(i: usize) -> Vec<Category> {
    match i % 6 {
        0 => vec![Category::Nodes],
        1 => vec![Category::Edges],
        2 => vec![Category::AttrsFull],
        3 => vec![Category::AttrsPartial],
        4 => ALL.to_vec(),
        _ => vec![Category::Nodes, Category::Edges],
    }
}

fn sbm_config(seed: u64) -> RunConfig {
    RunConfig {
        data_seed: seed,
        train_seed: seed,
        noise_seed: seed,
        sample_seed: seed,
        ..Default::default()
    }
}

struct Sweep {
    nodes: Vec<BoundRow>,
    edges: Vec<BoundRow>,
}

/// Node ratios {1, 2, 5, 10}% and edge ratios {1, 2, 5, 10}% on the
/// 300-node SBM with SGC (k = 2, λ = 0.05), one sweep per seed.
fn bound_sweeps() -> Vec<Sweep> {
    (0..5u64)
        .map(|s| {
            let cfg = sbm_config(s);
            let g = gen_synthetic(&cfg.synthetic_spec(), s).unwrap();
            let spec = ModelSpec::sgc(2, 0.05);
            let model = train(&spec, &g, None, s, cfg.trainer()).unwrap();
            let c = cfg.constants();
            let ratios = [0.01, 0.02, 0.05, 0.1];
            let run = |cat| bound_sweep(&model, &g, cat, &ratios, 0.2, s, Solver::Auto, cfg.trainer(), &c).unwrap();
            Sweep {
                nodes: run(Category::Nodes),
                edges: run(Category::Edges),
            }
        })
        .collect()
}

// ---------------------------------------------------------------- criteria

fn weighted_objective_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = TrainerConfig {
        tol: 1e-10,
        max_iters: 200_000,
    };
    let mut worst: f64 = 0.0;
    let mut covered = [false; 4];
    let instances = 24;
    for i in 0..instances {
        let n = rng.gen_range(12..=50);
        let (d, c) = (rng.gen_range(3..=6), rng.gen_range(2..=4));
        let g = random_graph(&mut rng, n, d, c, 0.12);
        let req = random_request(&mut rng, &g, &category_mix(i));
        for (c, on) in req.alphas().iter().enumerate() {
            covered[c] |= *on;
        }
        let k = 1 + i % 2;
        let spec = ModelSpec::sgc(k, 0.1);
        let model = train(&spec, &g, None, 0, cfg).map_err(|e| e.to_string())?;
        let g_minus = delete(&g, &req).map_err(|e| e.to_string())?.graph;
        let sets = compute_affected_sets(&g, &req, k).map_err(|e| e.to_string())?;
        let xi = 1.0 / g.num_train() as f64;
        let theta_xi = argmin_xi_objective(&spec, &g, &g_minus, &sets, xi, model.theta.clone(), cfg)
            .map_err(|e| e.to_string())?;
        let re = train(&spec, &g_minus, Some(model.theta.clone()), 0, cfg).map_err(|e| e.to_string())?;
        let rel = distance(&theta_xi, &re.theta) / (1.0 + norm(&re.theta));
        worst = worst.max(rel);
    }
    ensure(
        worst <= 1e-5 && covered.iter().all(|&c| c),
        format!("{instances} instances, categories covered {covered:?}, worst relative gap {worst:.2e} (tol 1e-5)"),
    )
}

fn locality_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut compared = 0usize;
    for i in 0..100 {
        let n = rng.gen_range(10..=40);
        let (d, c) = (rng.gen_range(2..=5), rng.gen_range(2..=4));
        let g = random_graph(&mut rng, n, d, c, 0.1);
        let req = random_request(&mut rng, &g, &category_mix(i));
        let k = 1 + i % 3;
        let spec = if i % 2 == 0 {
            ModelSpec::sgc(k, 0.05)
        } else {
            ModelSpec::gcn2(k.max(2), 0.05, 4)
        };
        let p = spec.num_params(g.feature_dim(), g.num_classes());
        let theta: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g_minus = delete(&g, &req).map_err(|e| e.to_string())?.graph;
        let affected = compute_affected_sets(&g, &req, spec.k).map_err(|e| e.to_string())?.all_affected();
        let f = Forward::new(&spec, &g).map_err(|e| e.to_string())?;
        let fm = Forward::new(&spec, &g_minus).map_err(|e| e.to_string())?;
        for v in g_minus.train_nodes().iter().filter(|&v| !affected.contains(v)) {
            let a = f.node_loss(&theta, v).map_err(|e| e.to_string())?;
            let b = fm.node_loss(&theta, v).map_err(|e| e.to_string())?;
            if a.to_bits() != b.to_bits() {
                return Err(format!("triple {i}: node {v} loss {a} vs {b}"));
            }
            compared += 1;
        }
    }
    ensure(compared > 0, format!("100 triples, {compared} unaffected node losses bit-identical"))
}

/// `Ŝᵏ X` built densely from the adjacency lists.
fn dense_propagation(g: &AttributedGraph, k: usize) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let d = g.feature_dim();
    let mut z: Vec<Vec<f64>> = (0..n).map(|v| g.features().row(v).to_vec()).collect();
    for _ in 0..k {
        let next = (0..n)
            .map(|v| {
                let nb = g.neighbors(v);
                let w = 1.0 / (nb.len() + 1) as f64;
                let mut row = vec![0.0; d];
                for &u in nb.iter().chain(std::iter::once(&v)) {
                    for j in 0..d {
                        row[j] += w * z[u][j];
                    }
                }
                row
            })
            .collect();
        z = next;
    }
    z
}

/// Explicit SGC Hessian `(1/m)Σ (diag(p) − ppᵀ) ⊗ zzᵀ + λI` with
/// `θ[i·c + a] = W[i][a]`.
fn explicit_sgc_hessian(g: &AttributedGraph, k: usize, lambda: f64, theta: &[f64]) -> Vec<Vec<f64>> {
    let d = g.feature_dim();
    let c = g.num_classes();
    let p = d * c;
    let z = dense_propagation(g, k);
    let train = g.train_nodes();
    let m = train.len() as f64;
    let mut h = vec![vec![0.0; p]; p];
    for v in train.iter() {
        let logits: Vec<f64> = (0..c)
            .map(|a| (0..d).map(|i| z[v][i] * theta[i * c + a]).sum())
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        let pr: Vec<f64> = e.iter().map(|x| x / s).collect();
        for i in 0..d {
            for a in 0..c {
                for j in 0..d {
                    for b in 0..c {
                        let curv = if a == b { pr[a] - pr[a] * pr[b] } else { -pr[a] * pr[b] };
                        h[i * c + a][j * c + b] += z[v][i] * z[v][j] * curv / m;
                    }
                }
            }
        }
    }
    for (i, row) in h.iter_mut().enumerate() {
        row[i] += lambda;
    }
    h
}

fn gradient_hvp() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_dir: f64 = 0.0;
    for i in 0..20 {
        let g = random_graph(&mut rng, 30, 5, 3, 0.1);
        let spec = if i % 2 == 0 {
            ModelSpec::sgc(2, 0.05)
        } else {
            ModelSpec::gcn2(2, 0.05, 6)
        };
        let obj = Objective::new(&spec, &g).map_err(|e| e.to_string())?;
        let p = obj.dim();
        let theta: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dir: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nd = norm(&dir);
        dir.iter_mut().for_each(|x| *x /= nd);
        let h = 1e-5;
        let at = |t: f64| -> Vec<f64> { theta.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };
        let fd = (obj.value(&at(h)).unwrap() - obj.value(&at(-h)).unwrap()) / (2.0 * h);
        let an = dot(&obj.gradient(&theta).unwrap(), &dir);
        worst_dir = worst_dir.max((fd - an).abs() / an.abs().max(fd.abs()));
    }
    let mut worst_hvp: f64 = 0.0;
    for _ in 0..5 {
        let (d, c) = (rng.gen_range(10..=40), rng.gen_range(2..=5));
        let g = random_graph(&mut rng, 40, d, c, 0.1);
        let spec = ModelSpec::sgc(2, 0.05);
        let obj = Objective::new(&spec, &g).map_err(|e| e.to_string())?;
        let p = obj.dim();
        if p > 200 {
            continue;
        }
        let theta: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = explicit_sgc_hessian(&g, 2, 0.05, &theta);
        let hv: Vec<f64> = h.iter().map(|row| dot(row, &v)).collect();
        let got = obj.hvp(&theta, &v).map_err(|e| e.to_string())?;
        worst_hvp = worst_hvp.max(distance(&got, &hv) / norm(&hv));
    }
    ensure(
        worst_dir <= 1e-5 && worst_hvp <= 1e-8,
        format!("directional derivative worst rel {worst_dir:.2e} (tol 1e-5); hvp vs explicit Hessian worst rel {worst_hvp:.2e} (tol 1e-8)"),
    )
}

fn solver_agreement() -> Check {
    let mut worst_cg: f64 = 0.0;
    let mut worst_st: f64 = 0.0;
    for seed in 0..3u64 {
        let spec_g = SyntheticSpec {
            num_nodes: 200,
            feature_dim: 50,
            num_classes: 4,
            ..Default::default()
        };
        let g = gen_synthetic(&spec_g, seed).map_err(|e| e.to_string())?;
        let spec = ModelSpec::sgc(2, 0.05);
        let model = train(&spec, &g, None, seed, TrainerConfig::default()).map_err(|e| e.to_string())?;
        let obj = Objective::new(&spec, &g).map_err(|e| e.to_string())?;
        assert_eq!(obj.dim(), 200);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let solve = |s| solve_hessian_system(&obj, &model.theta, &b, s).map(|r| r.0);
        let xd = solve(Solver::Direct).map_err(|e| e.to_string())?;
        let xc = solve(Solver::cg()).map_err(|e| e.to_string())?;
        let xs = solve(Solver::Stochastic {
            t: 1000,
            scale: None,
            damp: 0.0,
        })
        .map_err(|e| e.to_string())?;
        worst_cg = worst_cg.max(distance(&xd, &xc) / norm(&xd));
        worst_st = worst_st.max(distance(&xd, &xs) / norm(&xd));
    }
    ensure(
        worst_cg <= 1e-6 && worst_st <= 1e-3,
        format!("p=200: CG rel {worst_cg:.2e} (tol 1e-6), stochastic t=1000 rel {worst_st:.2e} (tol 1e-3)"),
    )
}

fn approximation_quality(sweeps: &[Sweep]) -> Check {
    let mut at_one = Vec::new();
    let mut monotone = 0;
    for s in sweeps {
        let r: Vec<f64> = s.nodes.iter().take(3).map(|r| r.approx_ratio).collect();
        at_one.push(r[0]);
        if r[0] <= r[1] && r[1] <= r[2] {
            monotone += 1;
        }
    }
    let worst = at_one.iter().cloned().fold(0.0, f64::max);
    ensure(
        worst <= 0.5 && 2 * monotone > sweeps.len(),
        format!(
            "ratio at 1% per seed {:?} (max {worst:.3}, tol 0.5); nondecreasing over {{1,2,5}}% in {monotone}/{} seeds",
            at_one.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            sweeps.len()
        ),
    )
}

fn bound_validity(sweeps: &[Sweep]) -> Check {
    let rows: Vec<&BoundRow> = sweeps.iter().flat_map(|s| s.nodes.iter().chain(&s.edges)).collect();
    let held = rows.iter().filter(|r| r.empirical_bound_holds).count();
    let flagged = rows.iter().filter(|r| !r.assumptions_hold).count();
    let min_slack = rows
        .iter()
        .map(|r| r.bound_prop3_empirical - r.tilde_bar)
        .fold(f64::INFINITY, f64::min);
    ensure(
        held == rows.len(),
        format!(
            "measured-constant bound >= actual at {held}/{} points (min slack {min_slack:.3}); {flagged} points flagged for default constants below measured ones",
            rows.len()
        ),
    )
}

fn bound_monotonicity(sweeps: &[Sweep]) -> Check {
    let s = &sweeps[0];
    let nondecreasing = |rows: &[BoundRow]| rows.windows(2).all(|w| w[1].bound_prop3_default >= w[0].bound_prop3_default);
    let fmt = |rows: &[BoundRow]| rows.iter().map(|r| format!("{:.3}", r.bound_prop3_default)).collect::<Vec<_>>().join(", ");
    ensure(
        nondecreasing(&s.nodes) && nondecreasing(&s.edges),
        format!("seed 0 nodes [{}]; edges [{}]", fmt(&s.nodes), fmt(&s.edges)),
    )
}

fn efficiency() -> Check {
    let cfg = sbm_config(0);
    let g = gen_synthetic(&cfg.synthetic_spec(), 0).map_err(|e| e.to_string())?;
    let spec = ModelSpec::sgc(2, 0.05);
    let model = train(&spec, &g, None, 0, cfg.trainer()).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for r in [0.001, 0.01, 0.05, 0.1] {
        let req = graph_unlearn::request::sample_request(&g, Category::Nodes, r, 0.2, 0).map_err(|e| e.to_string())?;
        rows.push(time_point(&model, &g, &req, "nodes", r, Solver::Auto, cfg.trainer(), 9).map_err(|e| e.to_string())?);
    }
    let faster = rows.iter().all(|r| r.unlearn.median < r.retrain.median);
    let spread = |f: &dyn Fn(&unlearn_cli::experiment::TimeRow) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let un = spread(&|r| r.unlearn.median);
    let re = spread(&|r| r.retrain.median);
    let table = rows
        .iter()
        .map(|r| format!("{}%: {:.2}ms vs {:.2}ms", r.ratio * 100.0, r.unlearn.median * 1e3, r.retrain.median * 1e3))
        .collect::<Vec<_>>()
        .join("; ");
    ensure(
        faster && un < 2.0 && re < 2.0,
        format!("SBM unlearn vs retrain medians [{table}]; unlearn max/min {un:.2}, retrain max/min {re:.2}; no converted Cora available"),
    )
}

fn utility() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for s in 0..3u64 {
        let cfg = RunConfig {
            sigma: 0.01,
            unlearn_ratio: 0.05,
            ..sbm_config(s)
        };
        let ev = evaluate(&cfg, &mut Timing::default()).map_err(|e| e.to_string())?;
        let f = ev.eval.f1_micro.unwrap();
        ok &= f >= ev.f1_retrained - 0.05;
        lines.push(format!("seed {s}: {f:.3} vs {:.3}", ev.f1_retrained));
    }
    ensure(ok, format!("SBM fallback, 5% nodes, sigma 0.01: certified vs retrain F1 [{}]", lines.join("; ")))
}

fn effectiveness() -> Check {
    let mut wins = 0;
    let mut trials = Vec::new();
    for s in 0..10u64 {
        let cfg = RunConfig {
            sigma: 0.01,
            unlearn_ratio: 0.1,
            ..sbm_config(s)
        };
        let ev = evaluate(&cfg, &mut Timing::default()).map_err(|e| e.to_string())?;
        let (cert, orig) = (ev.eval.mi_auc.unwrap(), ev.mi_auc_original.unwrap());
        if cert <= 0.6 && cert <= orig {
            wins += 1;
        }
        trials.push(format!("{cert:.3}/{orig:.3}"));
    }
    // Table-style ordering of mean losses over seeded runs; single runs can
    // invert it even for exact re-training.
    let mut attr_ok = true;
    let mut attrs = Vec::new();
    for dims in [0.2, 0.5, 0.8] {
        let (mut cert_sum, mut orig_sum, mut below) = (0.0, 0.0, 0);
        for s in 0..10u64 {
            let cfg = RunConfig {
                sigma: 0.01,
                unlearn_ratio: 0.1,
                request_type: "attrs_partial".into(),
                dims_ratio: dims,
                ..sbm_config(s)
            };
            let ev = evaluate(&cfg, &mut Timing::default()).map_err(|e| e.to_string())?;
            let (cert, orig) = (ev.eval.attr_unlearn_loss.unwrap(), ev.attr_unlearn_loss_original.unwrap());
            cert_sum += cert;
            orig_sum += orig;
            below += usize::from(cert <= orig);
        }
        attr_ok &= cert_sum <= orig_sum;
        attrs.push(format!(
            "{}%: mean {:.4}/{:.4} ({below}/10 runs lower)",
            dims * 100.0,
            cert_sum / 10.0,
            orig_sum / 10.0
        ));
    }
    ensure(
        wins >= 8 && attr_ok,
        format!(
            "node MI AUC certified/original [{}], {wins}/10 trials <= 0.60 and <= original; attribute loss certified/original over 10 seeds [{}]",
            trials.join(", "),
            attrs.join(", ")
        ),
    )
}

fn certification_arithmetic() -> Check {
    let s = calibrate_sigma(1.0, 1.0, 0.05).map_err(|e| e.to_string())?;
    let b = bound_optimals(&AssumptionConstants::default(), 100, 1, 5).map_err(|e| e.to_string())?;
    let same = gaussian_noise(42, 64, 0.3) == gaussian_noise(42, 64, 0.3);
    let differ = gaussian_noise(42, 64, 0.3) != gaussian_noise(43, 64, 0.3);
    ensure(
        (s - 2.5373).abs() <= 1e-4 && (b - 3.5145).abs() <= 1e-4 && same && differ,
        format!("calibrate_sigma(1,1,0.05) = {s:.6}; bound example = {b:.6}; seeded noise repeatable {same}, seed-sensitive {differ}"),
    )
}

fn run_cli(args: &[&str], out: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_unlearn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stdout).into_owned());
    }
    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string_pretty(&strip_timing(&v)).unwrap())
}

fn pipeline_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for (name, args) in [
        ("evaluate", vec!["evaluate", "--seed", "3"]),
        ("evaluate edges", vec!["evaluate", "--set", "request_type=\"edges\""]),
        ("bench-bounds", vec!["bench-bounds", "--set", "plot=false"]),
    ] {
        let a = run_cli(&args, &dir.path().join(format!("{name}-a")))?;
        let b = run_cli(&args, &dir.path().join(format!("{name}-b")))?;
        if a != b {
            return Err(format!("{name}: reports differ"));
        }
        checked.push(format!("{name} ({} bytes)", a.len()));
    }
    Ok(format!("identical reports excluding timing: {}", checked.join(", ")))
}

// ---------------------------------------------------------------- driver

fn main() {
    let mut results: Vec<(String, bool)> = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name} [{secs:.1}s]: {detail}");
        results.push((name.to_string(), out.is_ok()));
    };

    run("weighted-objective-equivalence", &mut weighted_objective_equivalence);
    run("locality-exactness", &mut locality_exactness);
    run("gradient-hvp", &mut gradient_hvp);
    run("solver-agreement", &mut solver_agreement);
    let start = Instant::now();
    let sweeps = catch_unwind(bound_sweeps).ok();
    println!("     (bound sweeps: 5 seeds in {:.1}s)", start.elapsed().as_secs_f64());
    let with = |f: fn(&[Sweep]) -> Check| {
        let s = sweeps.as_deref();
        move || s.map_or_else(|| Err("bound sweep failed".to_string()), f)
    };
    run("approximation-quality", &mut with(approximation_quality));
    run("bound-validity", &mut with(bound_validity));
    run("bound-monotonicity", &mut with(bound_monotonicity));
    run("efficiency", &mut efficiency);
    run("utility-retention", &mut utility);
    run("effectiveness", &mut effectiveness);
    run("certification-arithmetic", &mut certification_arithmetic);
    run("pipeline-determinism", &mut pipeline_determinism);

    let failed: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
