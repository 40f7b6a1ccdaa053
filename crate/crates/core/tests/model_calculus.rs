mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use common::{graph_from, random_graph, rel, rng};
use graph_unlearn::linalg::{dot, norm};
use graph_unlearn::model::{loss_per_node, predict, Differentiable, Objective};
use graph_unlearn::oracle::{xi_objective, XiObjective};
use graph_unlearn::{compute_affected_sets, delete, train, AttributedGraph, ModelSpec, TrainerConfig, UnlearnRequest};

/// `Ŝᵏ X` from the adjacency lists, `Ŝ = D̃⁻¹(A + I)`.
fn dense_propagation(g: &AttributedGraph, k: usize) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let d = g.feature_dim();
    let mut z: Vec<Vec<f64>> = (0..n).map(|v| g.features().row(v).to_vec()).collect();
    for _ in 0..k {
        z = (0..n)
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
    }
    z
}

fn softmax(l: &[f64]) -> Vec<f64> {
    let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Per-sample outer-product assembly of the SGC Hessian.
fn explicit_hessian(g: &AttributedGraph, k: usize, lambda: f64, theta: &[f64]) -> DMatrix<f64> {
    let (d, c) = (g.feature_dim(), g.num_classes());
    let z = dense_propagation(g, k);
    let train = g.train_nodes();
    let m = train.len() as f64;
    let mut h = DMatrix::<f64>::identity(d * c, d * c) * lambda;
    for v in train.iter() {
        let logits: Vec<f64> = (0..c).map(|a| (0..d).map(|i| z[v][i] * theta[i * c + a]).sum()).collect();
        let p = softmax(&logits);
        for i in 0..d {
            for a in 0..c {
                for j in 0..d {
                    for b in 0..c {
                        let curv = if a == b { p[a] * (1.0 - p[a]) } else { -p[a] * p[b] };
                        h[(i * c + a, j * c + b)] += z[v][i] * z[v][j] * curv / m;
                    }
                }
            }
        }
    }
    h
}

fn random_vec(r: &mut impl Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| r.gen_range(-1.0..1.0)).collect()
}

#[test]
fn directional_derivatives_match_central_differences() {
    let mut r = rng(1);
    for i in 0..20 {
        let g = random_graph(&mut r, 25, 4, 3, 0.15);
        let spec = if i % 2 == 0 { ModelSpec::sgc(2, 0.05) } else { ModelSpec::gcn2(2, 0.05, 5) };
        let obj = Objective::new(&spec, &g).unwrap();
        let theta = random_vec(&mut r, obj.dim());
        let mut u = random_vec(&mut r, obj.dim());
        let nu = norm(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        let h = 1e-5;
        let at = |t: f64| -> Vec<f64> { theta.iter().zip(&u).map(|(a, b)| a + t * b).collect() };
        let fd = (obj.value(&at(h)).unwrap() - obj.value(&at(-h)).unwrap()) / (2.0 * h);
        let (value, grad) = obj.value_and_gradient(&theta).unwrap();
        let an = dot(&grad, &u);
        assert!((fd - an).abs() / (1.0 + value.abs()) <= 1e-5, "case {i}: {fd} vs {an}");
    }
}

#[test]
fn gcn2_hvp_matches_gradient_differences_and_is_symmetric() {
    let mut r = rng(21);
    for _ in 0..6 {
        let g = random_graph(&mut r, 30, 5, 3, 0.12);
        let obj = Objective::new(&ModelSpec::gcn2(2, 0.05, 6), &g).unwrap();
        let p = obj.dim();
        let theta = random_vec(&mut r, p);
        let (u, w) = (random_vec(&mut r, p), random_vec(&mut r, p));
        // small enough that no ReLU pre-activation changes sign
        let h = 1e-7;
        let at = |t: f64| -> Vec<f64> { theta.iter().zip(&u).map(|(a, b)| a + t * b).collect() };
        let (gp, gm) = (obj.gradient(&at(h)).unwrap(), obj.gradient(&at(-h)).unwrap());
        let fd: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let hu = obj.hvp(&theta, &u).unwrap();
        assert!(rel(&hu, &fd) <= 1e-5, "{}", rel(&hu, &fd));
        let hw = obj.hvp(&theta, &w).unwrap();
        assert!((dot(&w, &hu) - dot(&u, &hw)).abs() <= 1e-10 * (1.0 + dot(&w, &hu).abs()));
    }
}

#[test]
fn sgc_hvp_and_hessian_match_explicit_assembly() {
    let mut r = rng(2);
    for _ in 0..4 {
        let g = random_graph(&mut r, 40, 12, 4, 0.1);
        let spec = ModelSpec::sgc(2, 0.05);
        let obj = Objective::new(&spec, &g).unwrap();
        let p = obj.dim();
        assert!(p <= 200);
        let theta = random_vec(&mut r, p);
        let h = explicit_hessian(&g, 2, 0.05, &theta);
        let v = random_vec(&mut r, p);
        let hv: Vec<f64> = (&h * DMatrix::from_column_slice(p, 1, &v)).column(0).iter().copied().collect();
        assert!(rel(&obj.hvp(&theta, &v).unwrap(), &hv) <= 1e-8);
        let lib = obj.hessian(&theta).unwrap();
        for i in 0..p {
            for j in 0..p {
                assert!((lib[(i, j)] - h[(i, j)]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn sgc_hessian_is_spd_with_floor_lambda() {
    let mut r = rng(3);
    let g = random_graph(&mut r, 30, 8, 3, 0.1);
    let lambda = 0.05;
    let obj = Objective::new(&ModelSpec::sgc(2, lambda), &g).unwrap();
    let theta = random_vec(&mut r, obj.dim());
    let h = explicit_hessian(&g, 2, lambda, &theta);
    assert!((&h - h.transpose()).amax() < 1e-14);
    let eig = SymmetricEigen::new(h);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min >= lambda - 1e-12, "min eigenvalue {min}");
}

#[test]
fn hvp_is_linear() {
    let mut r = rng(4);
    let g = random_graph(&mut r, 30, 6, 3, 0.1);
    let obj = Objective::new(&ModelSpec::sgc(2, 0.05), &g).unwrap();
    let p = obj.dim();
    let theta = random_vec(&mut r, p);
    assert!(obj.hvp(&theta, &vec![0.0; p]).unwrap().iter().all(|&x| x == 0.0));
    let (v, w) = (random_vec(&mut r, p), random_vec(&mut r, p));
    let (a, b) = (0.7, -2.3);
    let combo: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
    let lhs = obj.hvp(&theta, &combo).unwrap();
    let hv = obj.hvp(&theta, &v).unwrap();
    let hw = obj.hvp(&theta, &w).unwrap();
    let rhs: Vec<f64> = hv.iter().zip(&hw).map(|(x, y)| a * x + b * y).collect();
    assert!(rel(&lhs, &rhs) <= 1e-7);
}

#[test]
fn sgc_objective_is_strongly_convex() {
    let mut r = rng(5);
    let g = random_graph(&mut r, 30, 5, 3, 0.1);
    let lambda = 0.05;
    let obj = Objective::new(&ModelSpec::sgc(2, lambda), &g).unwrap();
    for _ in 0..20 {
        let t1: Vec<f64> = random_vec(&mut r, obj.dim()).iter().map(|x| 3.0 * x).collect();
        let t2: Vec<f64> = random_vec(&mut r, obj.dim()).iter().map(|x| 3.0 * x).collect();
        let (l1, g1) = obj.value_and_gradient(&t1).unwrap();
        let l2 = obj.value(&t2).unwrap();
        let diff: Vec<f64> = t2.iter().zip(&t1).map(|(a, b)| a - b).collect();
        let lower = l1 + dot(&g1, &diff) + 0.5 * lambda * dot(&diff, &diff);
        assert!(l2 >= lower - 1e-12, "{l2} < {lower}");
    }
}

#[test]
fn trained_optimum_has_vanishing_gradient_and_is_deterministic() {
    let mut r = rng(6);
    let g = random_graph(&mut r, 40, 5, 3, 0.1);
    let spec = ModelSpec::sgc(2, 0.05);
    let cfg = TrainerConfig::default();
    let a = train(&spec, &g, None, 9, cfg).unwrap();
    let b = train(&spec, &g, None, 9, cfg).unwrap();
    assert_eq!(a.theta, b.theta);
    assert!(norm(&Objective::new(&spec, &g).unwrap().gradient(&a.theta).unwrap()) <= 1e-8);
    let warm = train(&spec, &g, Some(a.theta.clone()), 9, cfg).unwrap();
    assert!(warm.diagnostics.iterations <= 1);

    let gcn = ModelSpec::gcn2(2, 0.05, 8);
    let x = train(&gcn, &g, None, 4, cfg).unwrap();
    let y = train(&gcn, &g, None, 4, cfg).unwrap();
    assert_eq!(x.theta, y.theta);
}

#[test]
fn zero_features_and_zero_theta_give_zero_gradient() {
    let g = graph_from(vec![vec![0.0; 3]; 4], vec![0, 1, 0, 1], 2, &[(0, 1), (2, 3)], &[]);
    let obj = Objective::new(&ModelSpec::sgc(1, 0.05), &g).unwrap();
    assert!(obj.gradient(&[0.0; 6]).unwrap().iter().all(|&x| x == 0.0));
}

#[test]
fn uniform_logits_give_ln_c_and_margins_match_brute_force() {
    let g = graph_from(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![0, 1, 2], 3, &[(0, 1)], &[]);
    let spec = ModelSpec::sgc(1, 0.05);
    let zero = graph_unlearn::TrainedModel {
        spec: spec.clone(),
        feature_dim: 2,
        num_classes: 3,
        theta: vec![0.0; 6],
        seed: 0,
        diagnostics: Default::default(),
    };
    for v in 0..3 {
        assert!((loss_per_node(&zero, &g, v).unwrap() - 3f64.ln()).abs() < 1e-15);
    }
    let theta = vec![2.0, -1.0, 0.5, 0.3, 0.0, -0.7];
    let model = zero.with_theta(theta.clone());
    let z = dense_propagation(&g, 1);
    for v in 0..3 {
        let logits: Vec<f64> = (0..3).map(|a| (0..2).map(|i| z[v][i] * theta[i * 3 + a]).sum()).collect();
        let sum: f64 = logits.iter().map(|l| l.exp()).sum();
        let naive = -(logits[g.labels()[v]].exp() / sum).ln();
        assert!((loss_per_node(&model, &g, v).unwrap() - naive).abs() < 1e-12);
    }
}

#[test]
fn separable_two_class_graph_is_fit_exactly() {
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    for v in 0..20 {
        let y = v % 2;
        labels.push(y);
        feats.push(if y == 0 { vec![2.0, 0.1 * v as f64 / 20.0] } else { vec![-2.0, 0.1] });
        if v >= 2 {
            edges.push((v - 2, v));
        }
    }
    let g = graph_from(feats, labels, 2, &edges, &[]);
    let m = train(&ModelSpec::sgc(2, 0.05), &g, None, 0, TrainerConfig::default()).unwrap();
    let pred = predict(&m, &g).unwrap();
    assert_eq!(pred, g.labels());
}

#[test]
fn xi_objective_reduces_and_differentiates_correctly() {
    let mut r = rng(7);
    let g = random_graph(&mut r, 25, 4, 3, 0.15);
    let spec = ModelSpec::sgc(2, 0.05);
    let req = UnlearnRequest::nodes([0]);
    let gm = delete(&g, &req).unwrap().graph;
    let sets = compute_affected_sets(&g, &req, 2).unwrap();
    let theta = random_vec(&mut r, spec.num_params(4, 3));
    let base = Objective::new(&spec, &g).unwrap().value(&theta).unwrap();
    assert_eq!(xi_objective(&spec, &g, &gm, &sets, 0.0, &theta).unwrap(), base);

    let obj = XiObjective::new(&spec, &g, &gm, sets, 1.0 / g.num_train() as f64).unwrap();
    let u = random_vec(&mut r, theta.len());
    let h = 1e-5;
    let at = |t: f64| -> Vec<f64> { theta.iter().zip(&u).map(|(a, b)| a + t * b).collect() };
    let fd = (obj.value(&at(h)).unwrap() - obj.value(&at(-h)).unwrap()) / (2.0 * h);
    let (value, grad) = obj.value_and_gradient(&theta).unwrap();
    assert!((fd - dot(&grad, &u)).abs() / (1.0 + value.abs()) <= 1e-5);
}
