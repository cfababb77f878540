//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.
//!
//! The training criteria share one 24,000-sample two-qubit dataset (seed 7)
//! and take several minutes on a single core.

use std::io::Write;
use std::sync::OnceLock;

use tqst::baseline::{direct_invert, mle_refine};
use tqst::datagen::{build_dataset, split, Dataset, DatasetSpec, Sample, Split, SplitFractions};
use tqst::eval::{evaluate_model, evaluate_states, examples, EvalReport};
use tqst::numerics::Rng;
use tqst::penet::{build_model, train, Family, Graph, Layer, Linear, Model, ModelConfig, PeLinear, Task, TrainConfig};
use tqst::qstate::{fidelity, generate_state, DensityMatrix, NoiseSpec, StateSpec, MIN_EIGENVALUE};
use tqst::reconstruct::{encode_params, project_psd, reconstruct, RawReconstruction};
use tqst::tqst::{measure, select_measurements, MeasureOptions, ThresholdMode};

const SEED: u64 = 7;

// Written straight to stdout: the test harness only captures `print!`, and
// the verdict line should show for passing criteria too.
fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance criterion {n:>2} {tag} {name}: {detail}");
    let _ = out.flush();
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

struct TwoQubit {
    clean: Dataset,
    split: Split,
}

fn two_qubit() -> &'static TwoQubit {
    static DATA: OnceLock<TwoQubit> = OnceLock::new();
    DATA.get_or_init(|| {
        let clean = build_dataset(&DatasetSpec::new(2, 2000, SEED)).unwrap();
        let split = split(&clean, SplitFractions::default(), SEED).unwrap();
        TwoQubit { clean, split }
    })
}

/// Trains a standard architecture with the reference hyperparameters and
/// scores it on the test split.
fn train_and_eval(ds: &Dataset, sp: &Split, task: Task, family: Family) -> EvalReport {
    let cfg = ModelConfig::standard(task, family, ds.n_qubits());
    let mut model = build_model(&cfg, SEED).unwrap();
    let train_set = examples(&model, task, &ds.select(&sp.train));
    let val_set = examples(&model, task, &ds.select(&sp.val));
    let tc = TrainConfig {
        seed: SEED,
        ..TrainConfig::default()
    };
    let history = train(&mut model, &train_set, &val_set, &tc).unwrap();
    assert!(history.train_loss.iter().chain(&history.val_loss).all(|v| v.is_finite()));
    evaluate_model(&model, &ds.select(&sp.test)).unwrap()
}

fn noiseless_mlp() -> &'static EvalReport {
    static REPORT: OnceLock<EvalReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let d = two_qubit();
        train_and_eval(&d.clean, &d.split, Task::Tomography, Family::Mlp)
    })
}

#[test]
fn criterion_01_parameter_counts() {
    let count = |task, family| {
        build_model(&ModelConfig::standard(task, family, 2), 0)
            .unwrap()
            .parameter_count()
    };
    let got = [
        count(Task::Tomography, Family::Mlp),
        count(Task::Purity, Family::Mlp),
        count(Task::Tomography, Family::Pemlp),
    ];
    verdict(
        1,
        "parameter counts",
        got == [2128, 1633, 3972],
        &format!("MLP tomography/purity {}/{}, PEMLP tomography {}", got[0], got[1], got[2]),
    );
}

fn random_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect()
}

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

#[test]
fn criterion_02_equivariance() {
    let mut rng = Rng::new(SEED);
    let mut worst: f64 = 0.0;
    for n_qubits in [1, 2, 4] {
        let n = 1 << n_qubits;
        for _ in 0..100 {
            let stack = Model::from_layers(vec![
                Layer::PeLinear(PeLinear::new(&mut rng, 2, 8)),
                Layer::Relu,
                Layer::PeLinear(PeLinear::new(&mut rng, 8, 4)),
                Layer::Relu,
                Layer::PeLinear(PeLinear::new(&mut rng, 4, 2)),
            ]);
            let x = random_vec(&mut rng, n * n * 2);
            let mut p: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut p);
            let lhs = stack.predict(&permute(&x, n, 2, &p)).unwrap();
            let rhs = permute(&stack.predict(&x).unwrap(), n, 2, &p);
            for (a, b) in lhs.iter().zip(&rhs) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(2, "equivariance", worst < 1e-9, &format!("max deviation {worst:.2e} over 300 pairs"));
}

/// Sign pattern of every ReLU input; the loss is smooth while it holds.
fn relu_pattern(model: &Model, x: &[f64], g: &Graph) -> Vec<bool> {
    let mut pattern = Vec::new();
    for (k, layer) in model.layers().iter().enumerate() {
        if matches!(layer, Layer::Relu) {
            let input = if k == 0 { x } else { g.activation(k - 1).unwrap() };
            pattern.extend(input.iter().map(|&v| v > 0.0));
        }
    }
    pattern
}

/// Worst relative error between backprop and central differences over every
/// parameter of `model`, for the loss `Σ o·y`, and the number of parameters
/// whose step-1e-5 stencil crossed a ReLU kink. Those are re-checked with the
/// largest step in 1e-6..1e-8 that keeps the activation pattern fixed.
fn worst_gradient_error(model: &mut Model, x: &[f64], dropout_seed: u64) -> (f64, usize) {
    let run = |m: &Model| m.forward_train(x, &mut Rng::new(dropout_seed)).unwrap();
    let o = random_vec(&mut Rng::new(1), run(model).output().len());
    let loss = |g: &Graph| g.output().iter().zip(&o).map(|(a, b)| a * b).sum::<f64>();
    model.zero_grad();
    let g = run(model);
    let base = relu_pattern(model, x, &g);
    model.backward(&g, &o).unwrap();
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|t| t.grad().unwrap().to_vec()).collect();
    let mut worst: f64 = 0.0;
    let mut kinks = 0;
    for (p, grads) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let orig = model.params()[p].values()[k];
            for (attempt, h) in [1e-5, 1e-6, 1e-7, 1e-8].into_iter().enumerate() {
                model.params_mut()[p].values_mut()[k] = orig + h;
                let gu = run(model);
                model.params_mut()[p].values_mut()[k] = orig - h;
                let gd = run(model);
                model.params_mut()[p].values_mut()[k] = orig;
                let smooth = relu_pattern(model, x, &gu) == base && relu_pattern(model, x, &gd) == base;
                if !smooth && h > 1e-8 {
                    continue;
                }
                if attempt > 0 {
                    kinks += 1;
                }
                let fd = (loss(&gu) - loss(&gd)) / (2.0 * h);
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
                break;
            }
        }
    }
    (worst, kinks)
}

#[test]
fn criterion_03_gradients() {
    let mut rng = Rng::new(SEED);
    let mut worst: f64 = 0.0;
    let mut total = 0;
    let mut kinks = 0;
    let mut combined = ModelConfig::standard(Task::Purity, Family::Combined, 2);
    combined.dense_hidden = vec![64];
    let configs = [
        ModelConfig::standard(Task::Tomography, Family::Mlp, 2),
        ModelConfig::standard(Task::Purity, Family::Mlp, 2),
        ModelConfig::standard(Task::Tomography, Family::Pemlp, 2),
        ModelConfig::standard(Task::Purity, Family::Pemlp, 2),
        combined,
    ];
    for cfg in &configs {
        let mut m = build_model(cfg, SEED).unwrap();
        total += m.parameter_count();
        let x = random_vec(&mut rng, cfg.input_len());
        let (w, k) = worst_gradient_error(&mut m, &x, SEED);
        worst = worst.max(w);
        kinks += k;
    }
    let mut plain = Model::from_layers(vec![Layer::Linear(Linear::new(&mut rng, 5, 4))]);
    total += plain.parameter_count();
    worst = worst.max(worst_gradient_error(&mut plain, &random_vec(&mut rng, 5), 0).0);
    verdict(
        3,
        "gradient oracle",
        worst < 1e-4,
        &format!("worst relative error {worst:.2e} over {total} parameters ({kinks} re-stepped off a ReLU kink)"),
    );
}

#[test]
fn criterion_04_protocol_pins() {
    let bell = select_measurements(&DensityMatrix::bell_phi_minus().diagonal()).unwrap();
    let (_, rec) = measure(&mut Rng::new(0), &DensityMatrix::bell_phi_minus(), &MeasureOptions::default()).unwrap();
    let bell_ok = (bell.gini - 0.5).abs() < 1e-12
        && (bell.threshold - 1.0 / 6.0).abs() < 1e-12
        && bell.measurement_count() == 6
        && rec.performed_count() == 6;
    let mut uniform_ok = true;
    for n in 1..=4 {
        let rho = DensityMatrix::maximally_mixed(n).unwrap();
        let rep = select_measurements(&rho.diagonal()).unwrap();
        uniform_ok &= rep.gini.abs() < 1e-12 && rep.measurement_count() == 1 << (2 * n);
    }
    verdict(
        4,
        "protocol pins",
        bell_ok && uniform_ok,
        &format!(
            "Bell GI {:.6}, t {:.6}, {} measurements; uniform diagonal full count: {uniform_ok}",
            bell.gini,
            bell.threshold,
            bell.measurement_count()
        ),
    );
}

#[test]
fn criterion_05_physicality() {
    let mut rng = Rng::new(SEED);
    let mut worst_trace: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut worst_idem: f64 = 0.0;
    for k in 0..10_000 {
        let n = 1 + k % 4;
        let d = 1usize << n;
        let spec = StateSpec::mixed(n, rng.below(d - 1), 2).unwrap();
        let rho = generate_state(&mut rng, &spec).unwrap();
        // Perturbed target, standing in for a network output.
        let params: Vec<f64> = encode_params(&rho).iter().map(|v| v + 0.2 * rng.normal()).collect();
        let raw = RawReconstruction::new(n, params).unwrap();
        let Ok(out) = reconstruct(&raw) else { continue };
        worst_trace = worst_trace.max((out.matrix().trace().re - 1.0).abs());
        min_eig = min_eig.min(out.min_eigenvalue().unwrap());
        let again = project_psd(out.matrix()).unwrap();
        worst_idem = worst_idem.max(again.matrix().max_abs_diff(out.matrix()));
    }
    verdict(
        5,
        "physicality",
        worst_trace <= 1e-10 && min_eig >= MIN_EIGENVALUE && worst_idem <= 1e-12,
        &format!("trace error {worst_trace:.1e}, min eigenvalue {min_eig:.1e}, idempotence {worst_idem:.1e}"),
    );
}

#[test]
fn criterion_06_baseline() {
    let mut rng = Rng::new(SEED);
    let full = MeasureOptions {
        threshold: ThresholdMode::Fixed(0.0),
        shots: None,
    };
    let mut worst_full = f64::INFINITY;
    for _ in 0..1000 {
        let z = rng.below(3);
        let r = 1 + rng.below(4 - z);
        let spec = if r == 1 { StateSpec::pure(2, z) } else { StateSpec::mixed(2, z, r) }.unwrap();
        let rho = generate_state(&mut rng, &spec).unwrap();
        let (_, rec) = measure(&mut rng, &rho, &full).unwrap();
        worst_full = worst_full.min(fidelity(&direct_invert(&rec).unwrap(), &rho).unwrap());
    }

    let d = two_qubit();
    let test: Vec<&Sample> = d.clean.select(&d.split.test);
    let states: Vec<Option<DensityMatrix>> = test
        .iter()
        .map(|s| {
            let init = direct_invert(&s.record).unwrap();
            Some(mle_refine(&s.record, &init, 200, 0.5).unwrap().state)
        })
        .collect();
    let rep = evaluate_states(&states, &test).unwrap();
    let mean = rep.mean_fidelity.unwrap();
    verdict(
        6,
        "baseline oracle",
        worst_full >= 0.999 && mean >= 0.95,
        &format!(
            "threshold 0 worst {worst_full:.6}; Gini threshold mean {mean:.4} ± {:.4} over {} test states",
            rep.std_fidelity.unwrap(),
            rep.count
        ),
    );
}

#[test]
fn criterion_07_tomography_training() {
    let mlp = noiseless_mlp().mean_fidelity.unwrap();
    let d = two_qubit();
    let pe = train_and_eval(&d.clean, &d.split, Task::Tomography, Family::Pemlp);
    let pe_fid = pe.mean_fidelity.unwrap();
    verdict(
        7,
        "two-qubit tomography",
        mlp >= 0.93 && pe_fid >= 0.85,
        &format!(
            "MLP {mlp:.4} ± {:.4} (≥ 0.93), PEMLP {pe_fid:.4} ± {:.4} (≥ 0.85)",
            noiseless_mlp().std_fidelity.unwrap(),
            pe.std_fidelity.unwrap()
        ),
    );
}

#[test]
fn criterion_08_purity_training() {
    let d = two_qubit();
    let pe = train_and_eval(&d.clean, &d.split, Task::Purity, Family::Pemlp);
    let mlp = train_and_eval(&d.clean, &d.split, Task::Purity, Family::Mlp);
    let (pe_r2, pe_mse, mlp_r2) = (pe.r2.unwrap(), pe.mse.unwrap(), mlp.r2.unwrap());
    verdict(
        8,
        "two-qubit purity",
        pe_r2 >= 0.80 && pe_mse <= 0.013 && mlp_r2 >= 0.72,
        &format!(
            "PEMLP R² {pe_r2:.4} (≥ 0.80), MSE {pe_mse:.4} (≤ 0.013); MLP R² {mlp_r2:.4} (≥ 0.72), MSE {:.4}",
            mlp.mse.unwrap()
        ),
    );
}

#[test]
fn criterion_09_noise_robustness() {
    let d = two_qubit();
    let noisy = build_dataset(&DatasetSpec::new(2, 2000, SEED).with_noise(NoiseSpec::depolarizing(0.05))).unwrap();
    let sp = split(&noisy, SplitFractions::default(), SEED).unwrap();
    assert_eq!(sp, d.split, "noisy and clean datasets share strata");
    let noisy_fid = train_and_eval(&noisy, &sp, Task::Tomography, Family::Mlp).mean_fidelity.unwrap();
    let clean_fid = noiseless_mlp().mean_fidelity.unwrap();
    let delta = (noisy_fid - clean_fid).abs();
    verdict(
        9,
        "noise robustness",
        delta < 0.03,
        &format!("MLP noiseless {clean_fid:.4}, depolarizing 0.05 {noisy_fid:.4}, |Δ| {delta:.4}"),
    );
}

#[test]
#[ignore = "four-qubit training takes hours on one core"]
fn criterion_10_four_qubit() {
    let ds = build_dataset(&DatasetSpec::new(4, 500, SEED)).unwrap();
    let sp = split(&ds, SplitFractions::default(), SEED).unwrap();
    let rep = train_and_eval(&ds, &sp, Task::Tomography, Family::Combined);
    let mean = rep.mean_fidelity.unwrap();
    let low = rep.buckets[0].mean.unwrap();
    let high = rep.buckets[2].mean.unwrap();
    verdict(
        10,
        "four-qubit combined model",
        mean >= 0.80 && high >= low,
        &format!("mean {mean:.4}; zeros 0–4 {low:.4}, 10–14 {high:.4}"),
    );
}

#[test]
fn criterion_11_determinism() {
    let spec = DatasetSpec::new(2, 2000, SEED);
    let a = build_dataset(&spec).unwrap();
    let b = build_dataset(&spec).unwrap();
    let datasets_equal = a.samples == b.samples;

    let dir = tempfile::tempdir().unwrap();
    let sp = split(&a, SplitFractions::default(), SEED).unwrap();
    let run = |tag: &str| {
        let cfg = ModelConfig::standard(Task::Tomography, Family::Mlp, 2);
        let mut model = build_model(&cfg, SEED).unwrap();
        let train_set = examples(&model, Task::Tomography, &a.select(&sp.train));
        let tc = TrainConfig {
            epochs: 5,
            seed: SEED,
            ..TrainConfig::default()
        };
        train(&mut model, &train_set, &[], &tc).unwrap();
        let path = dir.path().join(format!("{tag}.bin"));
        model.save(&path).unwrap();
        let report = evaluate_model(&model, &a.select(&sp.test)).unwrap();
        (std::fs::read(path).unwrap(), serde_json::to_string(&report).unwrap())
    };
    let (ckpt1, rep1) = run("a");
    let (ckpt2, rep2) = run("b");
    verdict(
        11,
        "determinism",
        datasets_equal && ckpt1 == ckpt2 && rep1 == rep2,
        &format!(
            "datasets equal {datasets_equal}, checkpoints equal {}, reports equal {}",
            ckpt1 == ckpt2,
            rep1 == rep2
        ),
    );
}
