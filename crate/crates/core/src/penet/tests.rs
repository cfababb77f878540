use super::*;
use crate::numerics::Rng;
use crate::Error;

fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect()
}

fn random_perm(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut p);
    p
}

/// `(πᵀXπ)_ij = X_{p(i) p(j)}` on an `n × n × c` array.
fn permute(x: &[f64], n: usize, c: usize, p: &[usize]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for i in 0..n {
        for j in 0..n {
            let src = (p[i] * n + p[j]) * c;
            y[(i * n + j) * c..(i * n + j + 1) * c].copy_from_slice(&x[src..src + c]);
        }
    }
    y
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn count(task: Task, family: Family, n: usize) -> usize {
    build_model(&ModelConfig::standard(task, family, n), 0).unwrap().parameter_count()
}

#[test]
fn parameter_counts() {
    assert_eq!(count(Task::Tomography, Family::Mlp, 2), 2128);
    assert_eq!(count(Task::Purity, Family::Mlp, 2), 1633);
    assert_eq!(count(Task::Tomography, Family::Pemlp, 2), 3972);
    assert_eq!(count(Task::Purity, Family::Pemlp, 2), 3989);
    assert_eq!(count(Task::Tomography, Family::Combined, 4), 295_748);
    assert_eq!(count(Task::Purity, Family::Combined, 4), 164_933);
}

#[test]
fn layer_count_formulas() {
    let mut rng = Rng::new(0);
    for (c, d) in [(1, 1), (2, 64), (64, 2), (32, 32)] {
        let l = PeLinear::new(&mut rng, c, d);
        assert_eq!(l.parameter_count(), 15 * c * d + 2 * d);
        let sizes: usize = [&l.weight, &l.bias_all, &l.bias_diag].iter().map(|t| t.len()).sum();
        assert_eq!(sizes, l.parameter_count());
    }
    let l = Linear::new(&mut rng, 16, 32);
    assert_eq!(l.parameter_count(), 16 * 32 + 32);
}

#[test]
fn combined_purity_places_dropout_before_output() {
    let m = build_model(&ModelConfig::standard(Task::Purity, Family::Combined, 4), 0).unwrap();
    let layers = m.layers();
    assert!(matches!(layers[layers.len() - 2], Layer::Dropout(Dropout { p }) if p == 0.5));
    assert!(matches!(&layers[layers.len() - 1], Layer::Linear(l) if l.in_features == 512 && l.out_features == 1));
}

#[test]
fn invalid_configs() {
    let mut cfg = ModelConfig::standard(Task::Tomography, Family::Mlp, 2);
    cfg.pe_features = vec![8];
    assert!(matches!(build_model(&cfg, 0), Err(Error::InvalidConfig(_))));
    let mut cfg = ModelConfig::standard(Task::Tomography, Family::Combined, 2);
    cfg.dense_hidden.clear();
    assert!(matches!(build_model(&cfg, 0), Err(Error::InvalidConfig(_))));
    let cfg = ModelConfig::standard(Task::Tomography, Family::Mlp, 5);
    assert!(matches!(build_model(&cfg, 0), Err(Error::InvalidConfig(_))));
    let mut cfg = ModelConfig::standard(Task::Purity, Family::Mlp, 2);
    cfg.dropout = 1.0;
    assert!(build_model(&cfg, 0).is_err());
}

fn zero_pe(c: usize, d: usize) -> PeLinear {
    let mut l = PeLinear::new(&mut Rng::new(0), c, d);
    for t in [&mut l.weight, &mut l.bias_all, &mut l.bias_diag] {
        t.values_mut().fill(0.0);
    }
    l
}

#[test]
fn pe_identity_configuration() {
    let c = 3;
    let mut l = zero_pe(c, c);
    for ch in 0..c {
        l.weight.values_mut()[ch * c + ch] = 1.0;
    }
    let x = random_vec(&mut Rng::new(1), 4 * 4 * c);
    assert_eq!(l.forward(&x).unwrap(), x);
}

#[test]
fn pe_trace_broadcast() {
    let mut l = zero_pe(1, 1);
    l.weight.values_mut()[7] = 1.0;
    let x = random_vec(&mut Rng::new(2), 16);
    let tau: f64 = (0..4).map(|i| x[i * 4 + i]).sum();
    for y in l.forward(&x).unwrap() {
        assert!((y - tau).abs() < 1e-15);
    }
}

#[test]
fn pe_single_terms_match_formula() {
    // Each weight alone, checked against a direct evaluation of its term.
    let n = 3;
    let x = random_vec(&mut Rng::new(3), n * n);
    let at = |i: usize, j: usize| x[i * n + j];
    let row = |i: usize| (0..n).map(|v| at(i, v)).sum::<f64>();
    let col = |j: usize| (0..n).map(|u| at(u, j)).sum::<f64>();
    let total: f64 = x.iter().sum();
    let trace: f64 = (0..n).map(|u| at(u, u)).sum();
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let term = |k: usize, i: usize, j: usize| match k {
        0 => at(i, j),
        1 => at(j, i),
        2 => row(i),
        3 => col(i),
        4 => col(j),
        5 => row(j),
        6 => total,
        7 => trace,
        8 => at(i, i),
        9 => at(j, j),
        10 => delta(i, j) * at(i, j),
        11 => delta(i, j) * trace,
        12 => delta(i, j) * total,
        13 => delta(i, j) * row(i),
        14 => delta(i, j) * col(i),
        _ => unreachable!(),
    };
    for k in 0..PE_TERMS {
        let mut l = zero_pe(1, 1);
        l.weight.values_mut()[k] = 1.0;
        let y = l.forward(&x).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((y[i * n + j] - term(k, i, j)).abs() < 1e-14, "term {k} at ({i},{j})");
            }
        }
    }
    let mut l = zero_pe(1, 1);
    l.bias_all.values_mut()[0] = 0.5;
    l.bias_diag.values_mut()[0] = 2.0;
    let y = l.forward(&x).unwrap();
    assert_eq!(y[0], 2.5);
    assert_eq!(y[1], 0.5);
}

#[test]
fn pe_shape_errors() {
    let l = zero_pe(2, 2);
    assert!(matches!(l.forward(&[0.0; 7]), Err(Error::ShapeMismatch { .. })));
    assert!(matches!(l.forward(&[0.0; 6]), Err(Error::ShapeMismatch { .. })));
    let m = build_model(&ModelConfig::standard(Task::Tomography, Family::Mlp, 2), 0).unwrap();
    assert!(matches!(m.predict(&[0.0; 15]), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn pe_stack_equivariance() {
    let mut rng = Rng::new(4);
    for n_qubits in [1, 2, 4] {
        let n = 1 << n_qubits;
        for _ in 0..100 {
            let stack = Model::from_layers(vec![
                Layer::PeLinear(PeLinear::new(&mut rng, 2, 5)),
                Layer::Relu,
                Layer::PeLinear(PeLinear::new(&mut rng, 5, 3)),
            ]);
            let x = random_vec(&mut rng, n * n * 2);
            let p = random_perm(&mut rng, n);
            let lhs = stack.predict(&permute(&x, n, 2, &p)).unwrap();
            let rhs = permute(&stack.predict(&x).unwrap(), n, 3, &p);
            assert!(max_diff(&lhs, &rhs) < 1e-9);
        }
    }
}

#[test]
fn pemlp_intermediate_permutes_with_input() {
    let m = build_model(&ModelConfig::standard(Task::Tomography, Family::Pemlp, 2), 5).unwrap();
    let mut rng = Rng::new(5);
    let x = random_vec(&mut rng, 32);
    let p = random_perm(&mut rng, 4);
    let g = m.forward(&x).unwrap();
    let gp = m.forward(&permute(&x, 4, 2, &p)).unwrap();
    // Layers 0..=2 are PE, ReLU, PE: all matrix-shaped.
    for (k, c) in [(0, 64), (1, 64), (2, 2)] {
        let lhs = gp.activation(k).unwrap();
        let rhs = permute(g.activation(k).unwrap(), 4, c, &p);
        assert!(max_diff(lhs, &rhs) < 1e-12);
    }
}

/// Loss `Σ o·y` and gradient check of every parameter and the input.
fn check_gradients(model: &mut Model, x: &[f64], mask_seed: Option<u64>) {
    let forward = |m: &Model, x: &[f64]| match mask_seed {
        Some(s) => m.forward_train(x, &mut Rng::new(s)).unwrap(),
        None => m.forward(x).unwrap(),
    };
    let out_len = forward(model, x).output().len();
    let o = random_vec(&mut Rng::new(99), out_len);
    let loss = |m: &Model, x: &[f64]| forward(m, x).output().iter().zip(&o).map(|(a, b)| a * b).sum::<f64>();

    model.zero_grad();
    let g = forward(model, x);
    let gx = model.backward(&g, &o).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|t| t.grad().unwrap().to_vec()).collect();

    let h = 1e-5;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
    let n_params = model.params().len();
    for p in 0..n_params {
        let len = model.params()[p].len();
        for k in 0..len {
            let orig = model.params()[p].values()[k];
            model.params_mut()[p].values_mut()[k] = orig + h;
            let up = loss(model, x);
            model.params_mut()[p].values_mut()[k] = orig - h;
            let down = loss(model, x);
            model.params_mut()[p].values_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!(rel(analytic[p][k], fd) < 1e-4, "param {p}[{k}]: {} vs {fd}", analytic[p][k]);
        }
    }
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        xp[k] += h;
        let up = loss(model, &xp);
        xp[k] -= 2.0 * h;
        let down = loss(model, &xp);
        let fd = (up - down) / (2.0 * h);
        assert!(rel(gx[k], fd) < 1e-4, "input {k}: {} vs {fd}", gx[k]);
    }
}

#[test]
fn gradients_linear_and_activations() {
    let mut rng = Rng::new(6);
    let mut m = Model::from_layers(vec![
        Layer::Linear(Linear::new(&mut rng, 6, 8)),
        Layer::Relu,
        Layer::Dropout(Dropout { p: 0.5 }),
        Layer::Linear(Linear::new(&mut rng, 8, 3)),
    ]);
    check_gradients(&mut m, &random_vec(&mut rng, 6), Some(11));
}

#[test]
fn gradients_pe_and_readout() {
    let mut rng = Rng::new(7);
    let mut m = Model::from_layers(vec![
        Layer::PeLinear(PeLinear::new(&mut rng, 2, 3)),
        Layer::Relu,
        Layer::PeLinear(PeLinear::new(&mut rng, 3, 2)),
        Layer::Readout,
        Layer::Linear(Linear::new(&mut rng, 16, 2)),
    ]);
    check_gradients(&mut m, &random_vec(&mut rng, 32), None);
}

#[test]
fn gradients_standard_models() {
    for family in [Family::Mlp, Family::Pemlp, Family::Combined] {
        let mut cfg = ModelConfig::standard(Task::Purity, family, 2);
        if family == Family::Combined {
            cfg.pe_features = vec![4, 4];
            cfg.dense_hidden = vec![8];
        }
        let mut m = build_model(&cfg, 8).unwrap();
        let x = random_vec(&mut Rng::new(8), cfg.input_len());
        check_gradients(&mut m, &x, Some(3));
    }
}

#[test]
fn linear_gradient_closed_form() {
    let mut rng = Rng::new(9);
    let lin = Linear::new(&mut rng, 4, 3);
    let mut m = Model::from_layers(vec![Layer::Linear(lin)]);
    let x = random_vec(&mut rng, 4);
    let t = random_vec(&mut rng, 3);
    let g = m.forward(&x).unwrap();
    let pred = g.output().to_vec();
    let (_, grad) = mse_loss(&pred, &t);
    m.zero_grad();
    m.backward(&g, &grad).unwrap();
    let Layer::Linear(l) = &m.layers()[0] else { unreachable!() };
    let gw = l.weight.grad().unwrap();
    for o in 0..3 {
        for i in 0..4 {
            let expected = 2.0 * (pred[o] - t[o]) * x[i] / 3.0;
            assert!((gw[o * 4 + i] - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_loss_gives_zero_gradients() {
    let mut m = build_model(&ModelConfig::standard(Task::Tomography, Family::Pemlp, 2), 1).unwrap();
    let x = random_vec(&mut Rng::new(10), 32);
    let g = m.forward(&x).unwrap();
    let target = g.output().to_vec();
    let (loss, grad) = mse_loss(g.output(), &target);
    assert_eq!(loss, 0.0);
    m.zero_grad();
    m.backward(&g, &grad).unwrap();
    for t in m.params() {
        assert!(t.grad().unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn backward_without_graph() {
    let mut m = build_model(&ModelConfig::standard(Task::Tomography, Family::Mlp, 2), 0).unwrap();
    assert!(matches!(m.backward(&Graph::default(), &[0.0; 16]), Err(Error::GraphNotBuilt)));
    let g = m.forward(&[0.5; 16]).unwrap();
    assert!(matches!(m.backward(&g, &[0.0; 3]), Err(Error::GraphNotBuilt)));
}

fn one_param(values: Vec<f64>, grad: Vec<f64>) -> Tensor {
    let mut t = Tensor::new(vec![values.len()], values).unwrap();
    t.grad_mut().copy_from_slice(&grad);
    t
}

#[test]
fn adam_zero_gradient_is_noop() {
    let mut t = one_param(vec![1.0, -2.0], vec![0.0, 0.0]);
    let mut adam = Adam::new(1e-3);
    adam.step(&mut [&mut t]);
    assert_eq!(t.values(), &[1.0, -2.0]);
}

#[test]
fn adam_first_step_is_sign_scaled() {
    let mut t = one_param(vec![1.0, 1.0, 1.0], vec![0.3, -5.0, 1e-3]);
    let mut adam = Adam::new(1e-3);
    adam.step(&mut [&mut t]);
    for (v, s) in t.values().iter().zip([-1.0, 1.0, -1.0]) {
        assert!((v - (1.0 + s * 1e-3)).abs() < 1e-8);
    }
    adam.step(&mut [&mut t]);
    assert_eq!(adam.steps(), 2);
    assert!(adam.second_moments()[0].iter().all(|&v| v > 0.0));
}

#[test]
fn adam_is_deterministic() {
    let run = || {
        let mut t = one_param(vec![0.1, 0.2], vec![0.5, -0.25]);
        let mut adam = Adam::new(1e-2);
        for _ in 0..5 {
            adam.step(&mut [&mut t]);
        }
        t.values().to_vec()
    };
    assert_eq!(run(), run());
}

fn toy_examples(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let input = random_vec(&mut rng, 16);
            let target = vec![input.iter().sum::<f64>() / 16.0];
            Example { input, target }
        })
        .collect()
}

#[test]
fn overfits_single_sample() {
    let mut m = build_model(&ModelConfig::standard(Task::Tomography, Family::Mlp, 2), 2).unwrap();
    let mut rng = Rng::new(12);
    let ex = Example {
        input: random_vec(&mut rng, 16),
        target: random_vec(&mut rng, 16),
    };
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 32,
        lr: 1e-2,
        seed: 0,
    };
    let h = train(&mut m, &[ex.clone()], &[], &cfg).unwrap();
    assert_eq!(h.train_loss.len(), 200);
    assert!(evaluate_loss(&m, &[ex]).unwrap() < 1e-4);
}

#[test]
fn training_is_deterministic_and_finite() {
    let data = toy_examples(100, 13);
    let mut cfg = ModelConfig::standard(Task::Purity, Family::Mlp, 2);
    cfg.dropout = 0.5;
    let tc = TrainConfig {
        epochs: 5,
        seed: 21,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = build_model(&cfg, 3).unwrap();
        let h = train(&mut m, &data[..80], &data[80..], &tc).unwrap();
        (m.flat_params(), h)
    };
    let (p1, h1) = run();
    let (p2, h2) = run();
    assert_eq!(p1, p2);
    assert_eq!(h1, h2);
    assert_eq!(h1.val_loss.len(), 5);
    assert!(h1.train_loss.iter().chain(&h1.val_loss).all(|v| v.is_finite()));
    assert!(h1.val_loss[4] < h1.val_loss[0]);
}

#[test]
fn training_rejects_empty_set() {
    let mut m = build_model(&ModelConfig::standard(Task::Purity, Family::Mlp, 2), 0).unwrap();
    assert!(matches!(train(&mut m, &[], &[], &TrainConfig::default()), Err(Error::EmptyDataset)));
}

#[test]
fn dropout_statistics() {
    let d = Dropout { p: 0.5 };
    let n = 10_000;
    let mask = d.mask(&mut Rng::new(14), n);
    let zeros = mask.iter().filter(|&&m| m == 0.0).count() as f64;
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((zeros - 5000.0).abs() < 3.0 * sigma);
    assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));

    let m = Model::from_layers(vec![Layer::Dropout(d)]);
    let x = vec![1.0; n];
    assert_eq!(m.predict(&x).unwrap(), x);
}

#[test]
fn untrained_output_is_pinned() {
    let m = build_model(&ModelConfig::standard(Task::Tomography, Family::Mlp, 2), 42).unwrap();
    let y = m.predict(&[0.25; 16]).unwrap();
    let pinned = PINNED_MLP_OUTPUT;
    for (a, b) in y.iter().zip(pinned) {
        assert!((a - b).abs() < 1e-12, "{y:?}");
    }
}

const PINNED_MLP_OUTPUT: [f64; 3] = [-0.0011196597713443793, -0.22996641208635898, -0.06027717320439197];

#[test]
fn batch_prediction_preserves_order() {
    let m = build_model(&ModelConfig::standard(Task::Purity, Family::Pemlp, 2), 4).unwrap();
    let mut rng = Rng::new(15);
    let xs: Vec<Vec<f64>> = (0..20).map(|_| random_vec(&mut rng, 32)).collect();
    let batch = m.predict_batch(&xs).unwrap();
    for (x, y) in xs.iter().zip(&batch) {
        assert_eq!(&m.predict(x).unwrap(), y);
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let m = build_model(&ModelConfig::standard(Task::Purity, Family::Combined, 2), 5).unwrap();
    m.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
    let back = Model::load(&path).unwrap();
    assert_eq!(back, m);

    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(Model::load(&path), Err(Error::Format(_))));

    let bare = Model::from_layers(vec![Layer::Relu]);
    assert!(matches!(bare.save(&path), Err(Error::InvalidConfig(_))));
}
