use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symreg_core::bench::{summarize, TaskId};
use symreg_core::expr::{eval_tree, parse_infix, to_infix, Affine, DataMatrix, ExprTree, Node, OperatorSet, Precision};
use symreg_core::jump::{expansion_log_jacobian, j_expand, j_shrink, shrinkage_log_jacobian};
use symreg_core::mixture::{log_likelihood, ols_fit};
use symreg_core::moves::{log_move_density, propose, replay, reverse_move, MoveConstants};
use symreg_core::prior::{sample_tree, PriorConfig};

fn prior(ops: OperatorSet, d: usize) -> PriorConfig {
    PriorConfig::new(ops, d)
}

fn oracle_eval(node: &Node, ops: &OperatorSet, row: &[f64]) -> f64 {
    match node {
        Node::Terminal { feature } => row[*feature],
        Node::Op { op, params, children } => {
            let x = oracle_eval(&children[0], ops, row);
            let name = ops.get(*op).unwrap().name.as_str();
            match name {
                "lt" => {
                    let p = params.unwrap();
                    p.a * x + p.b
                }
                "exp" => {
                    if x > 700.0 {
                        f64::INFINITY
                    } else {
                        x.exp()
                    }
                }
                "sin" => x.sin(),
                "cos" => x.cos(),
                "inv" => 1.0 / x,
                "neg" => -x,
                "square" => x.powi(2),
                "cube" => x.powi(3),
                _ => {
                    let y = oracle_eval(&children[1], ops, row);
                    match name {
                        "add" => x + y,
                        "sub" => x - y,
                        "mul" => x * y,
                        "div" => x / y,
                        other => panic!("unexpected operator {other}"),
                    }
                }
            }
        }
    }
}

fn same_value(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn infix_round_trip(seed in any::<u64>()) {
        let ops = OperatorSet::benchmark_pool();
        let cfg = prior(ops.clone(), 3);
        let tree = sample_tree(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let text = to_infix(&tree, &ops, Precision::Exact).unwrap();
        prop_assert_eq!(parse_infix(&text, &ops).unwrap(), tree.clone());
        let rounded = to_infix(&tree, &ops, Precision::Significant(4)).unwrap();
        let back = parse_infix(&rounded, &ops).unwrap();
        prop_assert!(back.same_structure(&tree));
        prop_assert_eq!(back.features(), tree.features());
    }

    #[test]
    fn evaluation_matches_oracle(seed in any::<u64>()) {
        let ops = OperatorSet::benchmark_pool().with_operator(symreg_core::expr::OperatorSpec::builtin("inv").unwrap(), 0.05).unwrap();
        let cfg = prior(ops.clone(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = sample_tree(&cfg, &mut rng);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let data = DataMatrix::from_rows(&rows, None).unwrap();
        let out = eval_tree(&tree, &ops, &data).unwrap();
        for (row, v) in rows.iter().zip(&out.values) {
            let expect = oracle_eval(&tree.root, &ops, row);
            prop_assert!(same_value(*v, expect), "{} vs {}", v, expect);
        }
        prop_assert_eq!(out.finite, out.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn move_probabilities_are_a_distribution(seed in any::<u64>()) {
        let cfg = prior(OperatorSet::default_pool(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = sample_tree(&cfg, &mut rng);
        for c in [MoveConstants::default(), MoveConstants { grow_scale: 2.0, ..MoveConstants::default() }] {
            let p = symreg_core::moves::move_probabilities(&tree, &cfg, &c);
            prop_assert!(p.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_decreases_in_rss(n in 1usize..500, s2 in 0.01f64..100.0, a in 0.0f64..1e3, b in 0.0f64..1e3) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(log_likelihood(lo, n, s2).unwrap() >= log_likelihood(hi, n, s2).unwrap());
    }
}

/// Every proposal names a reverse move that reproduces the original structure, and the
/// reverse density is positive whenever the forward kernel can reach back.
#[test]
fn proposals_reverse_on_ten_thousand_trees() {
    let ops = OperatorSet::default_pool();
    let cfg = prior(ops.clone(), 2);
    let c = MoveConstants {
        grow_scale: 2.0,
        ..MoveConstants::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10_000 {
        let tree = sample_tree(&cfg, &mut rng);
        let out = propose(&tree, &cfg, &c, &mut rng);
        assert!(out.log_q_forward.is_finite());
        let back = replay(&out.new_tree, &out.reverse, &ops).unwrap();
        assert!(back.same_structure(&tree), "{:?} then {:?}", out.mv, out.reverse);
        assert_eq!(back.features(), tree.features());
        assert!(out.log_q_reverse.is_finite(), "{:?}", out.mv);
        assert_eq!(reverse_move(&out.new_tree, &out.reverse, &ops).unwrap().tag(), out.mv.tag());
        assert!((log_move_density(&tree, &out.mv, &cfg, &c) - out.log_q_forward).abs() < 1e-12);
    }
}

fn flatten(pairs: &[Affine]) -> Vec<f64> {
    pairs.iter().flat_map(|p| [p.a, p.b]).collect()
}

fn pairs(v: &[f64]) -> Vec<Affine> {
    v.chunks(2).map(|c| Affine::new(c[0], c[1])).collect()
}

fn numeric_log_det(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let h = 1e-5;
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[j] += h;
        dn[j] -= h;
        let (fu, fd) = (f(&up), f(&dn));
        for i in 0..n {
            jac[(i, j)] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}

#[test]
fn jacobians_match_numerical_differentiation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = rng.random_range(1..5);
        let extra = rng.random_range(1..4);
        let x: Vec<f64> = (0..2 * (2 * m + extra)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let expand = |v: &[f64]| {
            let (t, u) = j_expand(&pairs(&v[..2 * m]), &pairs(&v[2 * m..4 * m]), &pairs(&v[4 * m..])).unwrap();
            [flatten(&t), flatten(&u)].concat()
        };
        let shrink = |v: &[f64]| {
            let (t, u) = j_shrink(&pairs(&v[..2 * m]), &pairs(&v[2 * m..2 * m + 2 * extra]), &pairs(&v[2 * m + 2 * extra..])).unwrap();
            [flatten(&t), flatten(&u)].concat()
        };
        let e = numeric_log_det(expand, &x);
        let s = numeric_log_det(shrink, &x);
        assert!(((e - expansion_log_jacobian(m)) / expansion_log_jacobian(m)).abs() < 1e-6);
        assert!(((s - shrinkage_log_jacobian(m)) / shrinkage_log_jacobian(m)).abs() < 1e-6);
        assert_eq!(expand(&x).len(), x.len());
    }
}

fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let xt = x.transpose();
    (&xt * x).lu().solve(&(&xt * DVector::from_column_slice(y))).unwrap()
}

fn random_problem(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>) {
    let n = rng.random_range(10..60);
    let p = rng.random_range(1..5);
    let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
    let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    (x, y)
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (x, y) = random_problem(&mut rng);
        let fit = ols_fit(&x, &y).unwrap();
        let oracle = normal_equations(&x, &y);
        for (b, o) in fit.beta.iter().zip(oracle.iter()) {
            assert!((b - o).abs() <= 1e-8 * o.abs().max(1.0), "{b} vs {o}");
        }
        let resid = DVector::from_column_slice(&y) - &x * &oracle;
        assert!((fit.rss - resid.norm_squared()).abs() <= 1e-8 * fit.rss.max(1.0));
    }
}

#[test]
fn ols_is_locally_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (x, y) = random_problem(&mut rng);
    let fit = ols_fit(&x, &y).unwrap();
    let yv = DVector::from_column_slice(&y);
    for _ in 0..1000 {
        let delta = DVector::from_fn(fit.beta.len(), |_, _| rng.random_range(-1e-3..1e-3));
        let moved = DVector::from_column_slice(&fit.beta) + delta;
        assert!((&yv - &x * moved).norm_squared() >= fit.rss - 1e-9);
    }
}

#[test]
fn task_truth_matches_independent_formulas() {
    let oracle: [fn(f64, f64) -> f64; 6] = [
        |a, b| 2.5 * a * a * a * a - 1.3 * a * a * a + 0.5 * b * b - 1.7 * b,
        |a, b| 8.0 * a * a + 8.0 * b * b * b - 15.0,
        |a, b| 0.2 * a * a * a + 0.5 * b * b * b - 1.2 * b - 0.5 * a,
        |a, b| 1.5 * a.exp() + 5.0 * b.cos(),
        |a, b| 6.0 * a.sin() * b.cos(),
        |a, b| 1.35 * a * b + 5.5 * ((a - 1.0) * (b - 1.0)).sin(),
    ];
    for (task, f) in TaskId::ALL.into_iter().zip(oracle) {
        for i in 0..21 {
            for j in 0..21 {
                let (a, b) = (-3.0 + 0.3 * i as f64, -3.0 + 0.3 * j as f64);
                let (got, want) = (task.truth(a, b), f(a, b));
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{task} at ({a}, {b})");
            }
        }
    }
}

#[test]
fn summary_recomputes_from_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v: Vec<f64> = (0..37).map(|_| rng.random_range(0.0..10.0)).collect();
    let s = summarize(&v).unwrap();
    let mean = v.iter().sum::<f64>() / 37.0;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 36.0;
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((s.mean - mean).abs() < 1e-12);
    assert!((s.std - var.sqrt()).abs() < 1e-12);
    assert_eq!(s.median, sorted[18]);
}

#[test]
fn tree_parse_examples() {
    let ops = OperatorSet::benchmark_pool();
    let t = parse_infix("(exp(x1)+(0.5*x2-1.0))", &ops).unwrap();
    assert_eq!(t.node_count(), 5);
    assert_eq!(t.count_lt(), 1);
    assert_eq!(t.params(), vec![Affine::new(0.5, -1.0)]);
    assert!(parse_infix("(x1+", &ops).is_err());
    assert_eq!(ExprTree::terminal(0), parse_infix("x1", &ops).unwrap());
}
