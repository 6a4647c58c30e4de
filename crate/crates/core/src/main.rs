use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pptp_core::autodiff::{primitive_checks, GradCheckOptions};
use pptp_core::cp::{failure_risk_trace, failure_risk_vector};
use pptp_core::model::{model_grad_check, ModelConfig, PptpModel};
use pptp_core::session::{load_session, load_sessions, Difficulty, WindowingConfig};
use pptp_core::synth::{generate_cohort, SynthConfig};
use pptp_core::train::{
    ablate, evaluate, full_grid, one_way_anova, run_split, AblationRow, Dataset, MetricsReport, TrainConfig,
};
use pptp_core::{Error, Result};

/// Trust prediction from physiological signals and block-stacking performance.
#[derive(Parser)]
#[command(name = "pptp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file with any of the sections `synth`, `windowing`, `model`, `train`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print JSON instead of text tables.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort of session directories.
    Synth {
        #[arg(long, default_value_t = 5)]
        subjects: usize,
        #[arg(long, default_value_t = 3)]
        tasks_per_subject: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Failure-risk vector of a session's placements.
    CpEval {
        #[arg(long)]
        session: PathBuf,
        /// Evaluate as of this time; defaults to after the last placement.
        #[arg(long)]
        at_ms: Option<i64>,
        /// Print per-step skew and risk instead of the vector.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model on the step-interval split of a dataset.
    Train {
        /// A session directory or a directory of them.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Metrics JSON to write.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Confusion matrix CSV to write.
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on every frame of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the signal / CP / resolution grid.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// One model per cell over all subjects instead of one per subject.
        #[arg(long)]
        pooled: bool,
        /// Table JSON to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check analytic gradients against central differences. The model is
    /// the desk-scale configuration unless `--config` supplies one.
    Gradcheck {
        /// Largest acceptable relative error for the full model.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Coordinates sampled per parameter array of the model.
        #[arg(long, default_value_t = 20)]
        coords: usize,
        #[arg(long, default_value_t = 2)]
        batch: usize,
        /// Central-difference step for the model check. Smaller steps let
        /// rounding swamp the tiny gradients of deep parameters.
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
    /// One-way ANOVA over groups of values.
    Anova {
        /// JSON array of number arrays.
        #[arg(long, conflicts_with = "data")]
        input: Option<PathBuf>,
        /// Sessions whose mean trust labels are grouped by difficulty.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    synth: SynthConfig,
    windowing: WindowingConfig,
    model: ModelConfig,
    train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            windowing: WindowingConfig::default(),
            model: ModelConfig::compact(),
            train: TrainConfig::default(),
        }
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let Some(path) = &self.config else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.windowing.validate()?;
        cfg.model.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

/// Left-aligned first column, right-aligned others.
fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for r in rows {
        out.push('\n');
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn emit(json: bool, value: &impl Serialize, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        println!("{}", text());
    }
    Ok(())
}

/// Confusion total and accuracy must agree with the evaluated set.
fn check_report(report: &MetricsReport, n: usize) -> Result<()> {
    let trace: usize = (0..report.n_classes).map(|i| report.confusion[i][i]).sum();
    if report.total() != n || report.accuracy != trace as f64 / n as f64 {
        return Err(Error::Validation(format!(
            "metrics invariant failed: confusion total {} for {n} frames",
            report.total()
        )));
    }
    Ok(())
}

fn report_text(report: &MetricsReport) -> String {
    let mut rows: Vec<Vec<String>> = report
        .per_subject
        .iter()
        .map(|s| vec![s.subject.clone(), s.n.to_string(), format!("{:.4}", s.accuracy), format!("{:.4}", s.macro_f1)])
        .collect();
    rows.push(vec![
        "all".into(),
        report.total().to_string(),
        format!("{:.4}", report.accuracy),
        format!("{:.4}", report.macro_f1),
    ]);
    format!(
        "{}\nsubject mean accuracy {:.4} ± {:.4}, macro-F1 {:.4} ± {:.4}\nconfusion (rows predicted, columns truth):\n{}",
        table(&["subject", "frames", "accuracy", "macro_f1"], &rows),
        report.mean_accuracy,
        report.std_accuracy,
        report.mean_f1,
        report.std_f1,
        report.confusion_csv().trim_end()
    )
}

fn write_outputs(report: &MetricsReport, metrics: &Option<PathBuf>, confusion: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = metrics {
        write_json(p, report)?;
    }
    if let Some(p) = confusion {
        fs::write(p, report.confusion_csv())?;
    }
    Ok(())
}

fn dataset(data: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let sessions = load_sessions(data)?;
    Dataset::from_sessions(&sessions, &cfg.windowing, cfg.train.frame_stride)
}

fn ablation_text(rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.cell.label(),
                format!("{:.4} ± {:.4}", r.report.mean_accuracy, r.report.std_accuracy),
                format!("{:.4} ± {:.4}", r.report.mean_f1, r.report.std_f1),
                r.report.total().to_string(),
            ]
        })
        .collect();
    table(&["cell", "accuracy", "macro_f1", "frames"], &body)
}

#[derive(Serialize)]
struct GradReport {
    primitives: Vec<(String, f64)>,
    model_max_rel_error: f64,
    threshold: f64,
    passed: bool,
}

const PRIMITIVE_TOLERANCE: f64 = 1e-6;

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth {
            subjects,
            tasks_per_subject,
            seed,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let dirs = generate_cohort(subjects, tasks_per_subject, seed, &cfg.synth, &out)?;
            let names: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
            emit(common.json, &names, || format!("wrote {} sessions under {}", dirs.len(), out.display()))?;
        }
        Command::CpEval {
            session,
            at_ms,
            trace,
            common,
        } => {
            let cfg = common.load()?;
            let s = load_session(&session)?;
            let gamma = cfg.windowing.cp_gamma;
            if trace {
                let rows = failure_risk_trace(&s.placements, gamma)?;
                emit(common.json, &rows, || {
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.step_index.to_string(),
                                r.timestamp_ms.to_string(),
                                format!("{:.6}", r.skew),
                                format!("{:.6}", r.risk),
                                r.collapsed_after.to_string(),
                            ]
                        })
                        .collect();
                    table(&["step", "t_ms", "skew", "risk", "collapsed"], &body)
                })?;
            } else {
                let at = at_ms.unwrap_or(i64::MAX);
                let f = failure_risk_vector(&s.placements, at, gamma)?;
                emit(common.json, &f, || {
                    let vals: Vec<String> = f.f.iter().map(|v| format!("{v:.6}")).collect();
                    format!("F = [{}]\nstacked {}, collapsed {}", vals.join(", "), f.n_stacked, f.collapsed)
                })?;
            }
        }
        Command::Train {
            data,
            out,
            metrics,
            confusion,
            common,
        } => {
            let cfg = common.load()?;
            let ds = dataset(&data, &cfg)?;
            let samples = ds.all();
            let r = run_split(&samples, &cfg.model, &cfg.train)?;
            check_report(&r.report, r.split.test.len())?;
            r.model.save(&out)?;
            write_outputs(&r.report, &metrics, &confusion)?;
            #[derive(Serialize)]
            struct TrainJson<'a> {
                history: &'a [pptp_core::train::EpochRecord],
                train_frames: usize,
                test_frames: usize,
                purged: usize,
                report: &'a MetricsReport,
            }
            let j = TrainJson {
                history: &r.history,
                train_frames: r.split.train.len(),
                test_frames: r.split.test.len(),
                purged: r.split.purged,
                report: &r.report,
            };
            emit(common.json, &j, || {
                let hist: Vec<Vec<String>> = r
                    .history
                    .iter()
                    .map(|e| {
                        vec![
                            e.epoch.to_string(),
                            format!("{:.5}", e.train_loss),
                            e.test_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
                        ]
                    })
                    .collect();
                format!(
                    "{}\n\ntrain {} frames ({} intervals), test {} frames ({} intervals), purged {}\n\n{}",
                    table(&["epoch", "train_loss", "test_acc"], &hist),
                    r.split.train.len(),
                    r.split.train_intervals,
                    r.split.test.len(),
                    r.split.test_intervals,
                    r.split.purged,
                    report_text(&r.report)
                )
            })?;
        }
        Command::Eval {
            model,
            data,
            metrics,
            confusion,
            common,
        } => {
            let cfg = common.load()?;
            let m = PptpModel::load(&model)?;
            let ds = dataset(&data, &cfg)?;
            let samples = ds.all();
            let report = evaluate(&m, &samples, cfg.train.signal_mask)?;
            check_report(&report, samples.len())?;
            write_outputs(&report, &metrics, &confusion)?;
            emit(common.json, &report, || report_text(&report))?;
        }
        Command::Ablate {
            data,
            pooled,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let ds = dataset(&data, &cfg)?;
            let rows = ablate(&ds, &full_grid(), &cfg.model, &cfg.train, pooled)?;
            if let Some(p) = &out {
                write_json(p, &rows)?;
            }
            emit(common.json, &rows, || ablation_text(&rows))?;
        }
        Command::Gradcheck {
            threshold,
            coords,
            batch,
            eps,
            common,
        } => {
            let mc = if common.config.is_some() { common.load()?.model } else { ModelConfig::desk() };
            let prims = primitive_checks(&GradCheckOptions::default())?;
            let model = model_grad_check(
                &mc,
                batch,
                &GradCheckOptions {
                    eps,
                    max_coords_per_array: coords,
                    ..Default::default()
                },
            )?;
            let passed =
                prims.iter().all(|(_, r)| r.max_rel_error <= PRIMITIVE_TOLERANCE) && model.max_rel_error <= threshold;
            let rep = GradReport {
                primitives: prims.iter().map(|(n, r)| (n.to_string(), r.max_rel_error)).collect(),
                model_max_rel_error: model.max_rel_error,
                threshold,
                passed,
            };
            emit(common.json, &rep, || {
                let mut rows: Vec<Vec<String>> =
                    rep.primitives.iter().map(|(n, e)| vec![n.clone(), format!("{e:.3e}")]).collect();
                rows.push(vec!["model".into(), format!("{:.3e}", rep.model_max_rel_error)]);
                format!("{}\n{}", table(&["check", "max_rel_error"], &rows), if passed { "PASS" } else { "FAIL" })
            })?;
            return Ok(passed);
        }
        Command::Anova { input, data, common } => {
            let groups: Vec<Vec<f64>> = match (input, data) {
                (Some(p), _) => serde_json::from_str(&fs::read_to_string(&p)?)?,
                (None, Some(d)) => {
                    let mut by: Vec<Vec<f64>> = vec![Vec::new(); Difficulty::ALL.len()];
                    for s in load_sessions(&d)? {
                        let e = &s.labels.entries;
                        if !e.is_empty() {
                            by[s.meta.difficulty as usize].push(e.iter().map(|x| x.muir_mean).sum::<f64>() / e.len() as f64);
                        }
                    }
                    by.retain(|g| !g.is_empty());
                    by
                }
                (None, None) => return Err(Error::Config("anova needs --input or --data".into())),
            };
            let r = one_way_anova(&groups)?;
            #[derive(Serialize)]
            struct AnovaJson {
                f_stat: f64,
                p_value: f64,
                df_between: usize,
                df_within: usize,
            }
            let j = AnovaJson {
                f_stat: r.f_stat,
                p_value: r.p_value,
                df_between: r.df_between,
                df_within: r.df_within,
            };
            emit(common.json, &j, || {
                format!("F({}, {}) = {:.6}, p = {:.6e}", r.df_between, r.df_within, r.f_stat, r.p_value)
            })?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
