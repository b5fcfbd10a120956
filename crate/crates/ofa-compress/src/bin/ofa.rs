//! Command-line entry point: data generation, once-for-all and fixed-lambda
//! pre-training, lambda sweeps, adaptive compression-rate learning, compute
//! profiling, and the built-in invariant suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ofa_compress::alphamod::SampleRange;
use ofa_compress::data_io::{
    generate_corpus, load_task, read_corpus_dir, write_corpus_dir, SyntheticSpec, TaskInfo,
    TaskKind,
};
use ofa_compress::error::{Error, Result};
use ofa_compress::model::{StudentModel, TeacherConfig, TeacherModel};
use ofa_compress::profile::{reduction_report, sweep, sweep_csv, MacsConfig};
use ofa_compress::training::{
    adapt_lambda, fixed_lambda_pretrain, grid_search_lambda, ofa_pretrain, AdaptConfig,
    AdaptOutcome, TrainConfig,
};
use ofa_compress::{selftest, Error as OfaError};

const TEACHER_SEED_OFFSET: u64 = 0x7EAC_4E2;

#[derive(Parser)]
#[command(name = "ofa", version, about = "Once-for-all sequence compression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Utterance,
    Frame,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus into a directory
    GenData {
        /// JSON file with generation settings (defaults used when omitted)
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed (falls back to OFA_SEED)
        #[arg(long)]
        seed: Option<u64>,
        /// Declare downstream labels in the manifest
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
    /// Once-for-all pre-training with per-step lambda sampling
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sampling range as low:high (high of 2 means the open interval)
        #[arg(long)]
        range: Option<String>,
        /// Loss trace CSV path (defaults to <out>.trace.csv)
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Specialist pre-training at one fixed lambda
    PretrainFixed {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint across lambda values
    Sweep {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma list (0,0.5,1) or grid syntax low:high:count
        #[arg(long)]
        lambdas: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a task-specific lambda with the backbone frozen
    Adapt {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        theta_lr: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        inits: Option<usize>,
        #[arg(long)]
        head_lr: Option<f64>,
        #[arg(long)]
        compress_weight: Option<f64>,
        /// Also run a lambda grid search with this many points
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Analytic MACs reduction table over frame periods
    Profile {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "20,90,960")]
        periods: String,
        /// Utterance length in base frames for the comparison
        #[arg(long, default_value_t = 500)]
        frames: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suite
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("OFA_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_seed(flag: Option<u64>, fallback: u64) -> u64 {
    flag.or_else(env_seed).unwrap_or(fallback)
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn parse_range(spec: &str) -> Result<SampleRange> {
    let (low, high) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("range '{spec}' must be low:high")))?;
    let low: f64 = low
        .parse()
        .map_err(|_| Error::Config(format!("bad range low '{low}'")))?;
    let high: f64 = high
        .parse()
        .map_err(|_| Error::Config(format!("bad range high '{high}'")))?;
    SampleRange::new(low, high)
}

fn parse_lambdas(spec: &str) -> Result<Vec<f64>> {
    if let Some((rest, count)) = spec.rsplit_once(':') {
        if let Some((low, high)) = rest.split_once(':') {
            let low: f64 = low
                .parse()
                .map_err(|_| Error::Config(format!("bad grid low '{low}'")))?;
            let high: f64 = high
                .parse()
                .map_err(|_| Error::Config(format!("bad grid high '{high}'")))?;
            let count: usize = count
                .parse()
                .map_err(|_| Error::Config(format!("bad grid count '{count}'")))?;
            if count == 0 {
                return Err(Error::Config("grid count must be positive".into()));
            }
            // Half-open grid: count points on [low, high).
            return Ok((0..count)
                .map(|i| low + (high - low) * i as f64 / count as f64)
                .collect());
        }
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad lambda '{s}'")))
        })
        .collect()
}

fn teacher_for(cfg: &TrainConfig) -> TeacherModel {
    TeacherModel::new_seeded(
        TeacherConfig {
            input_dim: cfg.model.input_dim,
            dim: cfg.model.teacher_dim,
            layers: cfg.model.distill_heads,
        },
        cfg.seed.wrapping_add(TEACHER_SEED_OFFSET),
    )
}

fn run_pretrain_command(
    config: Option<PathBuf>,
    data: &Path,
    out: &Path,
    trace: Option<PathBuf>,
    seed: Option<u64>,
    range: Option<SampleRange>,
    fixed_lambda: Option<f64>,
) -> Result<ExitCode> {
    let mut cfg: TrainConfig = load_json(&config)?;
    cfg.seed = resolve_seed(seed, cfg.seed);
    if let Some(r) = range {
        cfg.sample_range = r;
    }
    cfg.validate()?;
    let (corpus, _) = read_corpus_dir(data)?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus directory".into()));
    }
    if corpus[0].features.cols() != cfg.model.input_dim {
        return Err(Error::Config(format!(
            "corpus dim {} vs configured input dim {}",
            corpus[0].features.cols(),
            cfg.model.input_dim
        )));
    }
    let student = StudentModel::new_seeded(cfg.model, cfg.seed);
    let teacher = teacher_for(&cfg);
    let (outcome, ckpt_range) = match fixed_lambda {
        Some(lambda) => (
            fixed_lambda_pretrain(&cfg, &corpus, student, &teacher, lambda)?,
            SampleRange::new(lambda, lambda)?,
        ),
        None => (
            ofa_pretrain(&cfg, &corpus, student, &teacher)?,
            cfg.sample_range,
        ),
    };
    outcome.student.save_checkpoint(out, &teacher, &ckpt_range)?;
    let trace_path = trace.unwrap_or_else(|| trace_default(out));
    std::fs::write(&trace_path, outcome.trace.to_csv())?;
    if let Some(last) = outcome.trace.rows.last() {
        println!(
            "trained {} steps; final total loss {:.6}; checkpoint {}",
            outcome.trace.rows.len(),
            last.total,
            out.display()
        );
    } else {
        println!("no training steps; wrote initial checkpoint {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn trace_default(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".trace.csv");
    PathBuf::from(os)
}

#[derive(Serialize)]
struct GridPoint {
    lambda: f64,
    eval_metric: f64,
}

#[derive(Serialize)]
struct AdaptReport {
    task_kind: TaskKind,
    num_classes: usize,
    lambda_max: f64,
    theta_lr: f64,
    outcome: AdaptOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<GridPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_grid: Option<GridPoint>,
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::GenData { spec, out, seed, task } => {
            let mut sspec: SyntheticSpec = load_json(&spec)?;
            sspec.seed = resolve_seed(seed, sspec.seed);
            sspec.validate()?;
            let corpus = generate_corpus(&sspec)?;
            let task_info = task.map(|t| TaskInfo {
                kind: match t {
                    TaskArg::Utterance => TaskKind::Utterance,
                    TaskArg::Frame => TaskKind::Frame,
                },
                num_classes: match t {
                    TaskArg::Utterance => sspec.num_classes,
                    TaskArg::Frame => sspec.vocab_size,
                },
            });
            write_corpus_dir(&out, &corpus, &sspec, task_info)?;
            println!(
                "wrote {} utterances and manifest.json to {}",
                corpus.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Pretrain { config, data, out, range, trace, seed } => {
            let range = range.as_deref().map(parse_range).transpose()?;
            run_pretrain_command(config, &data, &out, trace, seed, range, None)
        }
        Command::PretrainFixed { config, data, out, lambda, trace, seed } => {
            run_pretrain_command(config, &data, &out, trace, seed, None, Some(lambda))
        }
        Command::Sweep { ckpt, data, lambdas, out } => {
            let (student, teacher, range) = StudentModel::load_checkpoint(&ckpt)?;
            let (corpus, _) = read_corpus_dir(&data)?;
            let lambdas = parse_lambdas(&lambdas)?;
            let macs_cfg = MacsConfig::from_student(
                &student.cfg,
                corpus.first().map(|u| u.frame_period_ms).unwrap_or(20.0),
            );
            let rows = sweep(&student, &teacher, &corpus, &lambdas, &macs_cfg, Some(&range))?;
            for r in rows.iter().filter(|r| r.extrapolated) {
                eprintln!(
                    "warning: lambda {} outside pre-training range [{}, {}]; row flagged extrapolated",
                    r.lambda, range.low, range.high
                );
            }
            std::fs::write(&out, sweep_csv(&rows))?;
            println!("wrote {} sweep rows to {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Adapt {
            ckpt,
            task,
            theta_lr,
            out,
            seed,
            steps,
            inits,
            head_lr,
            compress_weight,
            grid,
        } => {
            let (student, _, range) = StudentModel::load_checkpoint(&ckpt)?;
            let task_data = load_task(&task)?;
            let mut acfg = AdaptConfig { theta_lr, ..Default::default() };
            acfg.seed = resolve_seed(seed, acfg.seed);
            if let Some(s) = steps {
                acfg.steps = s;
            }
            if let Some(i) = inits {
                acfg.inits = i;
            }
            if let Some(lr) = head_lr {
                acfg.head_lr = lr;
            }
            if let Some(w) = compress_weight {
                acfg.compress_weight = w;
            }
            let lambda_max = range.high;
            let outcome = adapt_lambda(&student, &task_data, &acfg, lambda_max)?;
            for (i, r) in outcome.runs.iter().enumerate() {
                if r.saturation_warning {
                    eprintln!("warning: init {i} saw a full epoch of zero theta gradient (lambda stuck at saturation)");
                }
            }
            let grid_points = match grid {
                Some(points) => {
                    let g = grid_search_lambda(&student, &task_data, &acfg, lambda_max, points)?;
                    Some(
                        g.into_iter()
                            .map(|(lambda, eval_metric)| GridPoint { lambda, eval_metric })
                            .collect::<Vec<_>>(),
                    )
                }
                None => None,
            };
            let best_grid = grid_points.as_ref().map(|g| {
                let best = g
                    .iter()
                    .max_by(|a, b| a.eval_metric.total_cmp(&b.eval_metric))
                    .expect("non-empty grid");
                GridPoint { lambda: best.lambda, eval_metric: best.eval_metric }
            });
            let report = AdaptReport {
                task_kind: task_data.kind,
                num_classes: task_data.num_classes,
                lambda_max,
                theta_lr,
                outcome,
                grid: grid_points,
                best_grid,
            };
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            let best = report.outcome.best_run();
            println!(
                "learned lambda {:.4} with eval metric {:.4}; report {}",
                best.final_lambda,
                best.eval_metric,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Profile { config, periods, frames, out } => {
            let cfg: MacsConfig = load_json(&config)?;
            let mut csv = String::from("period_ms,frames,total_macs,macs_reduction\n");
            for p in periods.split(',') {
                let period: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad period '{p}'")))?;
                if period <= 0.0 {
                    return Err(Error::Config(format!("period {period} must be positive")));
                }
                let n_comp = ((frames as f64 * cfg.base_period_ms / period).round() as u64)
                    .clamp(1, frames);
                let report = reduction_report(frames, n_comp, &cfg)?;
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    period, n_comp, report.total, report.reduction
                ));
            }
            std::fs::write(&out, csv)?;
            println!("wrote profile table to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            if selftest::run() {
                println!("selftest: all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                Err(OfaError::InvalidArg("selftest failed".into()))
            }
        }
    }
}
