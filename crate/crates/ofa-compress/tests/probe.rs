//! Temporary tuning probe; removed before finalizing.

use ofa_compress::alphamod::{SampleRange, LAMBDA_MAX};
use ofa_compress::data_io::{generate_corpus, SyntheticSpec, TaskData, TaskKind};
use ofa_compress::model::{StudentConfig, StudentModel, TeacherConfig, TeacherModel};
use ofa_compress::training::{
    adapt_lambda, eval_distill_loss, fixed_lambda_pretrain, ofa_pretrain, AdaptConfig,
    TrainConfig,
};

fn setup(steps: usize, lr: f64) -> (TrainConfig, Vec<ofa_compress::data_io::Utterance>, TeacherModel) {
    let spec = SyntheticSpec { num_utterances: 100, ..Default::default() };
    let corpus = generate_corpus(&spec).unwrap();
    let cfg = TrainConfig {
        steps,
        learning_rate: lr,
        sample_range: SampleRange::full(),
        ..Default::default()
    };
    let teacher = TeacherModel::new_seeded(
        TeacherConfig { input_dim: 8, dim: 8, layers: 2 },
        cfg.seed + 1,
    );
    (cfg, corpus, teacher)
}

#[test]
#[ignore]
fn probe_ofa_vs_specialists() {
    for (steps, lr) in [(400usize, 0.05f64), (800, 0.05), (800, 0.1)] {
        let (cfg, corpus, teacher) = setup(steps, lr);
        let init = StudentModel::new_seeded(cfg.model, cfg.seed);
        let t0 = std::time::Instant::now();
        let ofa = ofa_pretrain(&cfg, &corpus, init.clone(), &teacher).unwrap();
        println!("steps={steps} lr={lr} ofa train took {:?}", t0.elapsed());
        for lambda in [0.0, 0.5, 1.0, 1.5] {
            let spec_model =
                fixed_lambda_pretrain(&cfg, &corpus, init.clone(), &teacher, lambda).unwrap();
            let lo = eval_distill_loss(&ofa.student, &teacher, &corpus, lambda, 1.0).unwrap();
            let ls = eval_distill_loss(&spec_model.student, &teacher, &corpus, lambda, 1.0).unwrap();
            println!(
                "  lambda={lambda}: ofa={lo:.4} specialist={ls:.4} ratio={:.3}",
                lo / ls
            );
        }
    }
}

#[test]
#[ignore]
fn probe_adapt() {
    let (cfg, corpus, teacher) = setup(600, 0.05);
    let init = StudentModel::new_seeded(cfg.model, cfg.seed);
    let ofa = ofa_pretrain(&cfg, &corpus, init, &teacher).unwrap();
    let student = ofa.student;

    for kind in [TaskKind::Utterance, TaskKind::Frame] {
        let spec = SyntheticSpec {
            num_utterances: 80,
            min_frames: 16,
            max_frames: 48,
            seed: 77,
            ..Default::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        let classes = match kind {
            TaskKind::Utterance => spec.num_classes,
            TaskKind::Frame => spec.vocab_size,
        };
        let task = TaskData::split(corpus, kind, classes).unwrap();
        for (theta_lr, cw) in [(0.3f64, 0.2f64), (0.5, 0.3), (1.0, 0.3)] {
            let acfg = AdaptConfig {
                steps: 300,
                theta_lr,
                compress_weight: cw,
                ..Default::default()
            };
            let t0 = std::time::Instant::now();
            let outcome = adapt_lambda(&student, &task, &acfg, LAMBDA_MAX).unwrap();
            print!("kind={kind:?} tlr={theta_lr} cw={cw} took {:?}:", t0.elapsed());
            for r in &outcome.runs {
                print!(
                    " [init {:.2} -> {:.2}, acc {:.3}]",
                    r.lambda_init, r.final_lambda, r.eval_metric
                );
            }
            println!();
        }
    }
}
