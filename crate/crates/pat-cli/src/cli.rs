//! Command-line definitions and dispatch.

use crate::array::ArrayFile;
use crate::config::{DiscConfig, Engine, EvaluationConfig, ExperimentConfig, Method, NoiseConfig};
use crate::error::{CliError, Result};
use crate::image::pgm_bytes;
use crate::run;
use clap::{Args, Parser, Subcommand, ValueEnum};
use pat_core::masks::{equiangular_mask_2d, equispaced_mask, equisteradian_mask_3d, MaskSpec};
use pat_core::recon::ReconOptions;
use pat_core::WindowSpec;
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "pat", version, about = "Planar photoacoustic reconstruction experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sensor mask as CSV.
    Mask(MaskArgs),
    /// Run the forward model of a configuration and store the traces.
    Simulate(SimulateArgs),
    /// Reconstruct an image or volume from stored traces.
    Reconstruct(ReconstructArgs),
    /// Compare an image with a model standard.
    Evaluate(EvaluateArgs),
    /// Run every stage of a configuration into a directory.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskType {
    Equispaced,
    Equiangular,
    Equisteradian,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long = "type", value_enum)]
    pub kind: MaskType,
    /// Image dimensionality; equiangular masks are 2D, equi-steradian 3D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Grid nodes per lateral axis.
    #[arg(long)]
    pub grid: usize,
    #[arg(long)]
    pub pitch: f64,
    /// Standoff of the centre of interest.
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    /// Requested sensor count.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub interval: usize,
    /// Lateral centre of interest, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    #[arg(long)]
    pub no_snap: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional PGM preview of the detector grid.
    #[arg(long)]
    pub preview: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EngineArg {
    Fourier,
    Analytic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Signal-to-noise ratio in dB; overrides the configuration.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub phantom_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Nufft,
    Interp,
    GridNufft,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Nufft => Method::Nufft,
            MethodArg::Interp => Method::Interp,
            MethodArg::GridNufft => Method::GridNufft,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV mask selecting and weighting a subset of the stored traces.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "nufft")]
    pub method: MethodArg,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub upsample: usize,
    #[arg(long)]
    pub axial_pad: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub oversampling: f64,
    #[arg(long, default_value_t = 6)]
    pub half_width: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Write PGM previews (projections for volumes) next to the output.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Region disc as `row,col,diameter` in pixels.
    #[arg(long, value_delimiter = ',')]
    pub disc: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[arg(long, value_delimiter = ',')]
    pub diameters: Vec<f64>,
    #[arg(long, default_value_t = 0.04)]
    pub sweep_threshold: f64,
    #[arg(long, value_delimiter = ',')]
    pub counts: Vec<usize>,
    /// JSON report; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn write(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(CliError::io(format!("writing {}", path.display())))
}

fn cmd_mask(a: MaskArgs) -> Result<()> {
    let dim = a.dim.unwrap_or(match a.kind {
        MaskType::Equisteradian => 3,
        _ => 2,
    });
    let mut spec = MaskSpec::new(dim, a.grid, a.pitch, a.r0, a.n).with_snap(!a.no_snap);
    if let Some(c) = a.center {
        spec.center = c;
    }
    let mask = match a.kind {
        MaskType::Equispaced => equispaced_mask(&spec, a.interval)?,
        MaskType::Equiangular => equiangular_mask_2d(&spec)?,
        MaskType::Equisteradian => equisteradian_mask_3d(&spec)?,
    };
    write(&a.out, &run::mask_csv(&mask)?)?;
    if let Some(p) = a.preview {
        let rows = if dim == 3 { a.grid } else { 8 };
        let mut img = vec![0.0; rows * a.grid];
        let snapped = spec.clone().with_snap(true);
        let idx = if spec.snap {
            mask.grid_indices(&snapped)?
        } else {
            mask.positions
                .iter()
                .map(|p| p.iter().map(|x| ((x / a.pitch).round() as i64 + (a.grid / 2) as i64).clamp(0, a.grid as i64 - 1) as usize).collect())
                .collect()
        };
        for i in idx {
            if dim == 3 {
                img[i[0] * a.grid + i[1]] = 1.0;
            } else {
                (0..rows).for_each(|r| img[r * a.grid + i[0]] = 1.0);
            }
        }
        write(&p, &pgm_bytes(rows, a.grid, &img))?;
    }
    eprintln!("{} sensors, weight ratio {}", mask.len(), mask.weight_ratio());
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(e) = a.engine {
        cfg.acquisition.engine = match e {
            EngineArg::Fourier => Engine::Fourier,
            EngineArg::Analytic => Engine::Analytic,
        };
        cfg.validate()?;
    }
    if let Some(snr) = a.snr {
        cfg.noise = Some(NoiseConfig { snr_db: snr, seed: a.seed });
    }
    let (phantom, rec) = run::simulate(&cfg)?;
    ArrayFile::from_record(&rec).write(&a.out)?;
    if let Some(p) = a.phantom_out {
        ArrayFile::from_field(&phantom).write(&p)?;
    }
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let rec = ArrayFile::read(&a.input)?.to_record()?;
    let mask = a.mask.as_deref().map(run::read_mask_csv).transpose()?;
    let opts = ReconOptions {
        window: WindowSpec::kaiser_bessel(a.oversampling, a.half_width),
        upsample: a.upsample,
        depth: a.depth,
        axial_pad: a.axial_pad,
    };
    let method: Method = a.method.into();
    let (img, elapsed) = run::reconstruct(&rec, mask.as_ref(), method, &opts)?;
    ArrayFile::from_field(&img).write(&a.out)?;
    if a.pgm {
        let stem = a.out.with_extension("");
        if img.ndim() == 2 {
            crate::image::write_pgm(&img, &stem.with_extension("pgm"))?;
        } else {
            for axis in 0..3 {
                let name = format!("{}_mip{axis}.pgm", stem.file_name().unwrap().to_string_lossy());
                crate::image::write_pgm(&pat_core::metrics::mip(&img, axis)?, &stem.with_file_name(name))?;
            }
        }
    }
    println!("{}", json!({ "method": method.name(), "dims": img.dims, "seconds": elapsed.as_secs_f64() }));
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let image = ArrayFile::read(&a.image)?.to_field()?;
    let model = ArrayFile::read(&a.model)?.to_field()?;
    let disc = match a.disc.as_deref() {
        None => None,
        Some(&[r, c, d]) => Some(DiscConfig { center: [r, c], diameter: d }),
        Some(_) => return Err(CliError::Usage("--disc takes row,col,diameter".into())),
    };
    let cfg = EvaluationConfig {
        disc,
        threshold: a.threshold,
        diameters: a.diameters,
        sweep_threshold: a.sweep_threshold,
        counts: a.counts,
        ..Default::default()
    };
    let e = run::evaluate(&image, &model, &cfg)?;
    let text = serde_json::to_string_pretty(&e).expect("report serialises");
    match a.out {
        Some(p) => write(&p, text.as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let report = run::pipeline(&cfg, &a.out)?;
    for r in &report.rows {
        let t = r.evaluation.tenenbaum.map_or("-".to_string(), |t| format!("{t:.5}"));
        println!("{:<24} {:<10} sensors {:>6} rho {:.4} tenenbaum {t}", r.label, r.method, r.sensors, r.evaluation.rho);
    }
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask(a) => cmd_mask(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}
