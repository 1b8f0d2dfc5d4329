//! `dge` command-line harness.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dge_core::ahnet::{convert_dataset, DomainDcnn, LabelSource};
use dge_core::dataset::{Dataset, DatasetMeta, LabeledSample, SplitProtocol};
use dge_core::experiment::{self, ExperimentConfig};
use dge_core::recognizers::{RecognizerKind, RecognizerParams, SvmConfig};
use dge_core::signal::{frame_stream_to_sample, import_ndjson, KalmanParams};
use dge_core::synth::{generate_dataset, GeneratorConfig};
use dge_core::train::TrainConfig;
use dge_core::Error;

#[derive(Parser)]
#[command(name = "dge", version, about = "Domain-gap elimination experiments on CSI amplitude samples")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic benchmark as a DISET file.
    Synth {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "benchmark.diset")]
        out: PathBuf,
    },
    /// Split, train the domain DCNN, convert, fit a recognizer, evaluate.
    Run {
        #[command(flatten)]
        pipe: PipelineArgs,
        /// Skip DGE conversion (baseline).
        #[arg(long)]
        no_dge: bool,
        /// Also emit a without-DGE baseline row from the same domain model.
        #[arg(long, conflicts_with = "no_dge")]
        compare: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// One run per α sharing a single trained domain DCNN.
    SweepAlpha {
        #[command(flatten)]
        pipe: PipelineArgs,
        #[arg(long, default_value_t = 0.04)]
        alpha_start: f64,
        #[arg(long, default_value_t = 0.20)]
        alpha_stop: f64,
        #[arg(long, default_value_t = 0.01)]
        alpha_step: f64,
        /// Explicit comma-separated grid; overrides start/stop/step.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// PCA embedding CSV of a dataset, optionally DGE-converted first.
    ExportEmbedding {
        #[arg(long)]
        dataset: PathBuf,
        /// Domain model used to convert the dataset before embedding.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = LabelArg::True)]
        label_source: LabelArg,
        #[arg(long, default_value = "embedding.csv")]
        out: PathBuf,
    },
    /// Domain accuracy of a domain DCNN, optionally on DGE-converted samples.
    EvalDomain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Convert with this α before evaluating.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = LabelArg::True)]
        label_source: LabelArg,
    },
    /// Build a DISET from NDJSON recordings listed in an index CSV with
    /// lines `path,gesture,domain` (paths relative to the index).
    Import {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 90)]
        rows: usize,
        #[arg(long, default_value_t = 128)]
        cols: usize,
        #[arg(long, default_value_t = KalmanParams::default().q)]
        kalman_q: f64,
        #[arg(long, default_value_t = KalmanParams::default().r)]
        kalman_r: f64,
        #[arg(long, default_value = "imported.diset")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = GeneratorConfig::default().gestures)]
    gestures: usize,
    #[arg(long, default_value_t = GeneratorConfig::default().domains)]
    domains: usize,
    #[arg(long, default_value_t = GeneratorConfig::default().reps)]
    reps: usize,
    #[arg(long, default_value_t = GeneratorConfig::default().rows)]
    gen_rows: usize,
    #[arg(long, default_value_t = GeneratorConfig::default().cols)]
    gen_cols: usize,
    #[arg(long, default_value_t = GeneratorConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = GeneratorConfig::default().gain_strength)]
    gain_strength: f64,
    #[arg(long, default_value_t = GeneratorConfig::default().offset_strength)]
    offset_strength: f64,
    #[arg(long, default_value_t = GeneratorConfig::default().warp_strength)]
    warp_strength: f64,
}

impl GenArgs {
    fn config(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            gestures: self.gestures,
            domains: self.domains,
            reps: self.reps,
            rows: self.gen_rows,
            cols: self.gen_cols,
            noise: self.noise,
            gain_strength: self.gain_strength,
            offset_strength: self.offset_strength,
            warp_strength: self.warp_strength,
            seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelArg {
    True,
    Predicted,
}

impl From<LabelArg> for LabelSource {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::True => LabelSource::TrueLabel,
            LabelArg::Predicted => LabelSource::PredictedLabel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Mixed,
    Lodo,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecognizerArg {
    Knn,
    Svm,
    Cnn,
}

#[derive(Args)]
struct PipelineArgs {
    /// DISET input; the benchmark is generated when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
    /// Seeds generation, splitting, weight init and shuffling.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Labels used to convert the training split.
    #[arg(long, value_enum, default_value_t = LabelArg::True)]
    label_source: LabelArg,
    #[arg(long)]
    strict_paper_arch: bool,
    #[arg(long, value_enum, default_value_t = RecognizerArg::Cnn)]
    recognizer: RecognizerArg,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Lodo)]
    protocol: ProtocolArg,
    #[arg(long, default_value_t = 0)]
    held_domain: usize,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Epochs for both CNNs.
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    /// Epochs for the domain DCNN only; defaults to --epochs.
    #[arg(long)]
    domain_epochs: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().momentum)]
    momentum: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch)]
    batch: usize,
    #[arg(long, default_value_t = RecognizerParams::default().k)]
    k: usize,
    #[arg(long, default_value_t = SvmConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = SvmConfig::default().epochs)]
    svm_epochs: usize,
}

impl PipelineArgs {
    fn config(&self, with_dge: bool) -> ExperimentConfig {
        let train = TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            momentum: self.momentum,
            batch: self.batch,
            seed: self.seed,
        };
        ExperimentConfig {
            dataset: self.dataset.clone(),
            generator: self.gen.config(self.seed),
            protocol: match self.protocol {
                ProtocolArg::Mixed => SplitProtocol::Mixed {
                    train_frac: self.train_frac,
                    seed: self.seed,
                },
                ProtocolArg::Lodo => SplitProtocol::LeaveOneDomainOut {
                    held_domain: self.held_domain,
                },
            },
            dge: dge_core::ahnet::DgeConfig {
                alpha: self.alpha,
                label_source: self.label_source.into(),
                strict_paper_arch: self.strict_paper_arch,
            },
            with_dge,
            recognizer: match self.recognizer {
                RecognizerArg::Knn => RecognizerKind::Knn,
                RecognizerArg::Svm => RecognizerKind::Svm,
                RecognizerArg::Cnn => RecognizerKind::Cnn,
            },
            recognizer_params: RecognizerParams {
                k: self.k,
                svm: SvmConfig {
                    lambda: self.lambda,
                    epochs: self.svm_epochs,
                    seed: self.seed,
                },
                cnn: train.clone(),
            },
            domain_train: TrainConfig {
                epochs: self.domain_epochs.unwrap_or(self.epochs),
                ..train
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> dge_core::Result<()> {
    match cmd {
        Cmd::Synth { gen, seed, out } => {
            let ds = generate_dataset(&gen.config(seed))?;
            ds.save(&out)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
        Cmd::Run {
            pipe,
            no_dge,
            compare,
            out,
        } => {
            let cfg = pipe.config(!no_dge);
            let outcome = experiment::run(&cfg, compare)?;
            let mut rec = Vec::new();
            outcome.recognizer.write(&mut rec)?;
            let report = experiment::report_csv(&outcome.rows);
            let margin = experiment::dge_margin(&outcome.rows);
            experiment::write_artifacts(
                &out,
                &cfg,
                &[
                    ("report.csv", report.clone().into_bytes()),
                    ("domain_model.dimdl", experiment::model_bytes(&outcome.prepared.domain_model)?),
                    ("recognizer.dimdl", rec),
                ],
                json!({
                    "command": "run",
                    "dge_margin": margin,
                    "domain_train_s": outcome.prepared.domain_train_s,
                    "domain_trace": outcome.prepared.domain_trace,
                    "rows": outcome.rows,
                }),
            )?;
            print!("{report}");
        }
        Cmd::SweepAlpha {
            pipe,
            alpha_start,
            alpha_stop,
            alpha_step,
            alphas,
            out,
        } => {
            let grid = match alphas {
                Some(g) => g,
                None => experiment::alpha_grid(alpha_start, alpha_stop, alpha_step)?,
            };
            let cfg = pipe.config(true);
            let (prepared, rows) = experiment::sweep_alpha(&cfg, &grid)?;
            let report = experiment::report_csv(&rows);
            experiment::write_artifacts(
                &out,
                &cfg,
                &[
                    ("sweep.csv", report.clone().into_bytes()),
                    ("domain_model.dimdl", experiment::model_bytes(&prepared.domain_model)?),
                ],
                json!({
                    "command": "sweep-alpha",
                    "grid": grid,
                    "domain_train_s": prepared.domain_train_s,
                    "rows": rows,
                }),
            )?;
            print!("{report}");
        }
        Cmd::ExportEmbedding {
            dataset,
            model,
            alpha,
            label_source,
            out,
        } => {
            let mut ds = Dataset::load(&dataset)?;
            if let Some(m) = model {
                ds = convert_dataset(&DomainDcnn::load(m)?, &ds, alpha, label_source.into())?;
            }
            let rows = experiment::pca_embedding(&ds)?;
            write_file(&out, experiment::embedding_csv(&rows).as_bytes())?;
            println!(
                "wrote {} rows to {}; mean domain-centroid distance {}",
                rows.len(),
                out.display(),
                experiment::domain_centroid_distance(&rows)
            );
        }
        Cmd::EvalDomain {
            model,
            dataset,
            alpha,
            label_source,
        } => {
            let model = DomainDcnn::load(model)?;
            let mut ds = Dataset::load(dataset)?;
            if let Some(a) = alpha {
                ds = convert_dataset(&model, &ds, a, label_source.into())?;
            }
            println!("{}", experiment::eval_domain(&model, &ds)?);
        }
        Cmd::Import {
            index,
            rows,
            cols,
            kalman_q,
            kalman_r,
            out,
        } => {
            let params = KalmanParams {
                q: kalman_q,
                r: kalman_r,
                ..KalmanParams::default()
            };
            params.validate()?;
            let ds = import_index(&index, &params, rows, cols)?;
            ds.save(&out)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> dge_core::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn import_index(index: &Path, params: &KalmanParams, rows: usize, cols: usize) -> dge_core::Result<Dataset> {
    let text = fs::read_to_string(index)?;
    let base = index.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    let mut files = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(parse_err(format!("expected path,gesture,domain; got {} fields", f.len())));
        }
        let gesture: usize = f[1].parse().map_err(|e| parse_err(format!("gesture: {e}")))?;
        let domain: usize = f[2].parse().map_err(|e| parse_err(format!("domain: {e}")))?;
        let frames = import_ndjson(base.join(f[0]))?;
        samples.push(LabeledSample {
            sample: frame_stream_to_sample(&frames, params, rows, cols)?,
            domain,
            gesture,
        });
        files.push(f[0].to_string());
    }
    if samples.is_empty() {
        return Err(Error::Empty(format!("{} lists no recordings", index.display())));
    }
    let meta = DatasetMeta {
        shape: [rows, cols],
        gestures: samples.iter().map(|s| s.gesture).max().unwrap_or(0) + 1,
        domains: samples.iter().map(|s| s.domain).max().unwrap_or(0) + 1,
        count: samples.len(),
        seed: 0,
        provenance: json!({
            "source": "ndjson",
            "files": files,
            "kalman": {"q": params.q, "r": params.r, "p0": params.p0},
        }),
    };
    Dataset::new(meta, samples)
}
