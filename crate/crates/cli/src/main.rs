use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmdpt_core::config::RunConfig;
use tmdpt_core::model::Tmdpt;
use tmdpt_core::pointcloud::{
    decode_depth_frame, depth_to_points, normalize_video, read_pcv, voxel_occupancy, write_pcv, PointCloudVideo,
};
use tmdpt_core::synth::{generate_synthetic_dataset, SyntheticSpec};
use tmdpt_core::train::{self, EpochMetrics};
use tmdpt_core::CoreError;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// Interaction recognition on point-cloud videos.
#[derive(Parser)]
#[command(name = "tmdpt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-person interaction dataset.
    Synth {
        /// JSON dataset spec; defaults apply to missing keys.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a directory of `.dep` depth frames (sorted by file name) into one `.pcv` video.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        label: Option<u32>,
        /// Voxel edge in normalized units.
        #[arg(long, default_value_t = 0.05)]
        voxel_size: f64,
    },
    /// Train from a run config; writes the checkpoint and metrics CSV to its output_dir.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Run config to use instead of the checkpoint's sidecar.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Classify one `.pcv` video.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 24)]
        params: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::Config(_) | CoreError::Incompatible(_) => EXIT_CONFIG,
            CoreError::NumericAbort { .. } => EXIT_NUMERIC,
            CoreError::Format(_)
            | CoreError::EmptyFrame
            | CoreError::DegenerateGeometry(_)
            | CoreError::Data(_)
            | CoreError::Checkpoint(_)
            | CoreError::Io { .. }
            | CoreError::Json(_) => EXIT_DATA,
            CoreError::Contract(_) | CoreError::Tensor(_) => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Any failure while reading a config is a config error.
fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: e.to_string(),
    })
}

fn load_model(ckpt: &Path, config: Option<&Path>) -> Result<Tmdpt, Failure> {
    Ok(match config {
        Some(c) => Tmdpt::load(ckpt, &load_config(c)?)?,
        None => Tmdpt::load_with_sidecar(ckpt)?,
    })
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn convert(input: &Path, out: &Path, label: Option<u32>, voxel_size: f64) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| data_failure(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dep"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: format!("{}: no .dep files", input.display()),
        });
    }
    let frames = files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(f).map_err(|e| data_failure(f, e))?;
            depth_to_points(&decode_depth_frame(&bytes)?).map_err(|e| Failure::from(e).context(f))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let source_id = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let video = normalize_video(&PointCloudVideo { frames, label, source_id })?;
    let frames = video
        .frames
        .iter()
        .map(|f| voxel_occupancy(f, voxel_size))
        .collect::<Result<Vec<_>, _>>()?;
    let voxelized = PointCloudVideo { frames, ..video };
    write_pcv(out, &voxelized)?;
    println!(
        "wrote {} frames ({} points) to {}",
        voxelized.frames.len(),
        voxelized.frames.iter().map(|f| f.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn data_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

impl Failure {
    fn context(self, path: &Path) -> Self {
        Failure {
            message: format!("{}: {}", path.display(), self.message),
            ..self
        }
    }
}

fn log_epoch(m: &EpochMetrics) {
    let eval = m.eval_acc.map(|a| format!(" eval_acc {a:.4}")).unwrap_or_default();
    eprintln!(
        "epoch {:>3}  lr {:.6}  loss {:.4}  train_acc {:.4}{eval}  {:.1}s",
        m.epoch, m.lr, m.train_loss, m.train_acc, m.wall_secs
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth { spec, seed, out } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Failure {
                        code: EXIT_CONFIG,
                        message: format!("{}: {e}", p.display()),
                    })?;
                    serde_json::from_str::<SyntheticSpec>(&text).map_err(|e| Failure {
                        code: EXIT_CONFIG,
                        message: format!("{}: {e}", p.display()),
                    })?
                }
                None => SyntheticSpec::default(),
            };
            let entries = generate_synthetic_dataset(&spec, seed, &out)?;
            println!("wrote {} videos to {}", entries.len(), out.display());
        }
        Command::Convert {
            input,
            out,
            label,
            voxel_size,
        } => convert(&input, &out, label, voxel_size)?,
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            let (outcome, ckpt) = train::train(&cfg, log_epoch)?;
            let last = outcome.metrics.rows.last().expect("at least one epoch");
            println!(
                "trained {} epochs ({} parameters); train_acc {:.4}; checkpoint {}",
                outcome.metrics.rows.len(),
                outcome.model.params.num_scalars(),
                last.train_acc,
                ckpt.display()
            );
        }
        Command::Eval { ckpt, data, config } => {
            let model = load_model(&ckpt, config.as_deref())?;
            print_json(&train::evaluate(&model, &data)?);
        }
        Command::Predict { ckpt, input, config } => {
            let model = load_model(&ckpt, config.as_deref())?;
            print_json(&train::predict_video(&model, &read_pcv(&input)?)?);
        }
        Command::Gradcheck { config, params } => {
            let cfg = load_config(&config)?;
            let report = train::gradcheck(&cfg, params)?;
            println!("{:<32} {:>6} {:>14} {:>14} {:>10}", "parameter", "index", "analytic", "numeric", "rel_err");
            for r in &report.rows {
                println!(
                    "{:<32} {:>6} {:>14.6e} {:>14.6e} {:>10.2e}",
                    r.name, r.index, r.analytic, r.numeric, r.rel_err
                );
            }
            println!("checked {} parameters; max rel err {:.3e}", report.rows.len(), report.max_rel_err);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
