//! One-command invariant suite: gradient checks, firing-rule equivalence,
//! modification algebra, cost-model agreement, and I/O round trips.
//!
//! Each check prints one pass/fail line; [`run`] returns whether everything
//! passed. The CLI exposes this as the `selftest` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alphamod::{modify_alpha, LAMBDA_MAX};
use crate::cif::{self, AlphaWeights, CifOptions};
use crate::data_io::{generate_corpus, read_features, write_features, SyntheticSpec};
use crate::diffmath::{fdcheck, Graph, Matrix};
use crate::model::{StudentConfig, StudentModel};
use crate::profile::{transformer_macs, MacsConfig};

pub fn run() -> bool {
    let checks: &[(&str, fn() -> Result<(), String>)] = &[
        ("tape gradients match finite differences", check_tape_gradients),
        ("backward is linear over summed losses", check_backward_linearity),
        ("firing scan matches the mass-count rule", check_fire_counts),
        ("boundary weights conserve alpha mass", check_weight_conservation),
        ("alpha modification algebra", check_modification_algebra),
        ("mixer cost formula matches counted MACs", check_macs_agreement),
        ("feature files round-trip bit-exactly", check_feature_round_trip),
        ("corpus generation is seed-deterministic", check_corpus_determinism),
    ];
    let mut ok = true;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest PASS {name}"),
            Err(msg) => {
                ok = false;
                println!("selftest FAIL {name}: {msg}");
            }
        }
    }
    ok
}

fn check_tape_gradients() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.gen_range(2..=6);
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..=1.5)).collect();
        let w0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();

        let eval = |x: &[f64], w: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let mut g = Graph::new();
            let xn = g.leaf(Matrix::from_vec(1, x.len(), x.to_vec()).unwrap());
            let wn = g.leaf(Matrix::from_vec(x.len(), 1, w.to_vec()).unwrap());
            let z = g.matmul(xn, wn).unwrap();
            let s = g.sigmoid(z);
            let t = g.tanh(xn);
            let tm = g.mean(t);
            let loss = g.mul(s, s).unwrap();
            let loss = g.add(loss, tm).unwrap();
            g.backward(loss).unwrap();
            (
                g.value(loss).get(0, 0),
                g.grad_matrix(xn).data().to_vec(),
                g.grad_matrix(wn).data().to_vec(),
            )
        };
        let (_, dx, dw) = eval(&x0, &w0);
        let w_fixed = w0.clone();
        let mut fx = |x: &[f64]| eval(x, &w_fixed).0;
        let ex = fdcheck::max_rel_error(&mut fx, &x0, &dx, fdcheck::FD_STEP);
        let x_fixed = x0.clone();
        let mut fw = |w: &[f64]| eval(&x_fixed, w).0;
        let ew = fdcheck::max_rel_error(&mut fw, &w0, &dw, fdcheck::FD_STEP);
        if ex > fdcheck::FD_REL_TOL || ew > fdcheck::FD_REL_TOL {
            return Err(format!("relative errors {ex:.2e} / {ew:.2e}"));
        }
    }
    Ok(())
}

fn check_backward_linearity() -> Result<(), String> {
    let x0 = Matrix::from_vec(1, 4, vec![0.2, -0.4, 0.9, -1.3]).unwrap();
    let grads = |combined: bool| -> Vec<f64> {
        let mut g = Graph::new();
        let x = g.leaf(x0.clone());
        let s = g.sigmoid(x);
        let l1 = g.mean(s);
        let t = g.tanh(x);
        let l2 = g.mean(t);
        if combined {
            let tot = g.add(l1, l2).unwrap();
            g.backward(tot).unwrap();
            g.grad_matrix(x).data().to_vec()
        } else {
            g.backward(l1).unwrap();
            let a = g.grad_matrix(x).data().to_vec();
            g.backward(l2).unwrap();
            let b = g.grad_matrix(x).data().to_vec();
            a.iter().zip(&b).map(|(u, v)| u + v).collect()
        }
    };
    let a = grads(true);
    let b = grads(false);
    for (x, y) in a.iter().zip(&b) {
        if (x - y).abs() > 1e-13 {
            return Err(format!("combined {x} vs separate {y}"));
        }
    }
    Ok(())
}

fn check_fire_counts() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let t = rng.gen_range(1..=24);
        let vals: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let alpha = AlphaWeights::new(vals.clone()).map_err(|e| e.to_string())?;
        let count = cif::fire_count(&alpha).map_err(|e| e.to_string())?;
        // Mass-count rule: full fires are the integer part of the total,
        // the tail adds one when the remainder reaches 0.5, and an empty
        // result is forced to a single event.
        let total: f64 = vals.iter().sum();
        let full = ((total + 1e-9).floor() as usize).min(t);
        let residual = total - full as f64;
        let expected = (full + usize::from(residual >= 0.5)).max(1);
        if count != expected {
            return Err(format!("alpha sum {total}: counted {count}, expected {expected}"));
        }
    }
    Ok(())
}

fn check_weight_conservation() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..200 {
        let t = rng.gen_range(1..=16);
        let vals: Vec<f64> = (0..t).map(|_| rng.gen_range(0.01..=1.0)).collect();
        let alpha = AlphaWeights::new(vals.clone()).map_err(|e| e.to_string())?;
        let seg =
            cif::integrate_and_fire(&alpha, &CifOptions::default()).map_err(|e| e.to_string())?;
        for (ev, span) in seg.events.iter().zip(&seg.spans) {
            if !ev.is_tail {
                let left = *span.weights.last().unwrap();
                let residual = vals[ev.fire_frame] - left;
                if (left + residual - vals[ev.fire_frame]).abs() > 1e-15 {
                    return Err(format!("frame {} split does not reconstruct", ev.fire_frame));
                }
                if (span.total_weight() - 1.0).abs() > 1e-9 {
                    return Err(format!("segment weight {} != threshold", span.total_weight()));
                }
            }
        }
    }
    Ok(())
}

fn check_modification_algebra() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let t = rng.gen_range(1..=32);
        let vals: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let alpha = AlphaWeights::new(vals).map_err(|e| e.to_string())?;

        if modify_alpha(&alpha, 1.0).map_err(|e| e.to_string())? != alpha {
            return Err("identity at lambda = 1 violated".into());
        }
        let lo = modify_alpha(&alpha, 1.0 - 1e-6).map_err(|e| e.to_string())?;
        let hi = modify_alpha(&alpha, 1.0 + 1e-6).map_err(|e| e.to_string())?;
        for (a, b) in lo.values().iter().zip(hi.values()) {
            if (a - b).abs() > 1e-5 {
                return Err(format!("discontinuity at lambda = 1: {a} vs {b}"));
            }
        }

        let mut prev_mass = f64::INFINITY;
        let mut prev_count = usize::MAX;
        for i in 0..=20 {
            let lambda = (LAMBDA_MAX * i as f64 / 20.0).min(LAMBDA_MAX);
            let m = modify_alpha(&alpha, lambda).map_err(|e| e.to_string())?;
            if m.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(format!("range violated at lambda {lambda}"));
            }
            let mass = m.sum();
            if mass > prev_mass + 1e-12 {
                return Err(format!("mass increased at lambda {lambda}"));
            }
            prev_mass = mass;
            let count = cif::fire_count(&m).map_err(|e| e.to_string())?;
            if count > prev_count {
                return Err(format!("fire count increased at lambda {lambda}"));
            }
            prev_count = count;
        }
    }
    Ok(())
}

fn check_macs_agreement() -> Result<(), String> {
    let cfg = StudentConfig::default();
    let student = StudentModel::new_seeded(cfg, 3);
    let macs_cfg = MacsConfig::from_student(&cfg, 20.0);
    for n in [1usize, 4, 9, 16] {
        let input = Matrix::from_fn(n, cfg.model_dim, |r, c| ((r + c) as f64).sin());
        let mut g = Graph::new();
        let x = g.leaf(input);
        student.mixer_forward(&mut g, x).map_err(|e| e.to_string())?;
        let mixer_macs = g.macs();
        let mut ga = Graph::new();
        let enc = ga.leaf(Matrix::from_fn(n, cfg.model_dim, |r, c| ((r * c) as f64).cos()));
        student.alpha_forward(&mut ga, enc).map_err(|e| e.to_string())?;
        let counted = mixer_macs + ga.macs();
        let formula = transformer_macs(n as u64, &macs_cfg).total;
        if counted != formula {
            return Err(format!("n = {n}: counted {counted}, formula {formula}"));
        }
    }
    Ok(())
}

fn check_feature_round_trip() -> Result<(), String> {
    let dir = std::env::temp_dir().join(format!("ofa-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let spec = SyntheticSpec { num_utterances: 4, ..Default::default() };
    let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
    for (i, utt) in corpus.iter().enumerate() {
        let path = dir.join(format!("u{i}.ofaf"));
        write_features(&path, &utt.features, utt.frame_period_ms, Some(&utt.targets))
            .map_err(|e| e.to_string())?;
        let (feats, period, targets) = read_features(&path).map_err(|e| e.to_string())?;
        let path2 = dir.join(format!("u{i}b.ofaf"));
        write_features(&path2, &feats, period, targets.as_ref()).map_err(|e| e.to_string())?;
        let a = std::fs::read(&path).map_err(|e| e.to_string())?;
        let b = std::fs::read(&path2).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("file {i} not byte-identical after round trip"));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

fn check_corpus_determinism() -> Result<(), String> {
    let spec = SyntheticSpec { num_utterances: 6, ..Default::default() };
    let a = generate_corpus(&spec).map_err(|e| e.to_string())?;
    let b = generate_corpus(&spec).map_err(|e| e.to_string())?;
    if a != b {
        return Err("two generations with one seed differ".into());
    }
    Ok(())
}
