//! Command-line surface and the TOML overlay.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::Deserialize;
use sketch3d_core::optimize::InitMethod;
use sketch3d_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "sketch3d",
    version,
    about = "Fit and render 3D sketches made of Bézier strokes and superquadrics"
)]
pub struct Cli {
    /// TOML file whose keys override the matching flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Initialize a stroke file from a dataset.
    Init {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Fit a stroke file to a dataset and write the loss log.
    Optimize {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Starting stroke file.
        #[arg(long = "init-file", value_name = "FILE")]
        init_file: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Loss log (`step,stage,loss`); defaults to the output path with a
        /// `.csv` extension.
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Render a stroke file to PNG images.
    Render {
        #[arg(long, value_name = "FILE")]
        strokes: PathBuf,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        view: ViewSpec,
        /// Render N turntable views instead of a single camera.
        #[arg(long, value_name = "N", conflicts_with_all = ["frame", "eye"])]
        turntable: Option<usize>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Export the sketch seen from one camera as SVG.
    ExportSvg {
        #[arg(long, value_name = "FILE")]
        strokes: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        view: ViewSpec,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Per-view pixel-l2 and distance-transform report as CSV on stdout.
    Eval {
        #[arg(long, value_name = "FILE")]
        strokes: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write a synthetic turntable dataset with its ground-truth strokes.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        views: usize,
        #[command(flatten)]
        tuning: Tuning,
    },
}

/// Camera selection for single-view commands.
#[derive(Debug, Args)]
pub struct ViewSpec {
    /// Dataset supplying cameras and the scene box.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Frame index in the dataset.
    #[arg(long, requires = "data", conflicts_with = "eye")]
    pub frame: Option<usize>,
    /// Camera position `x,y,z`.
    #[arg(long, value_parser = parse_vec3, requires = "look_at")]
    pub eye: Option<Vector3<f64>>,
    /// Point the camera looks at, `x,y,z`.
    #[arg(long, value_parser = parse_vec3)]
    pub look_at: Option<Vector3<f64>>,
    /// World up direction, `x,y,z`.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,1")]
    pub up: Vector3<f64>,
    /// Horizontal field of view in degrees.
    #[arg(long, default_value_t = 40.0)]
    pub fov_deg: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Random,
    Fps,
    Lines,
}

impl From<InitArg> for InitMethod {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Random => InitMethod::Random,
            InitArg::Fps => InitMethod::Fps,
            InitArg::Lines => InitMethod::Lines,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossArg {
    /// Pixel L2 structural term.
    L2,
    /// Distance-transform structural term.
    Dt,
    /// External perceptual loss service.
    Sidecar,
}

/// Options shared by every subcommand. All are optional so that a config
/// file can fill or override them.
#[derive(Clone, Debug, Default, PartialEq, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Tuning {
    /// Number of Bézier curves.
    #[arg(long)]
    pub n_ind: Option<usize>,
    /// Number of superquadrics.
    #[arg(long)]
    pub n_dep: Option<usize>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Fraction of steps spent on superquadrics.
    #[arg(long)]
    pub stage_split: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_name = "HOST:PORT")]
    pub sidecar_addr: Option<String>,
    /// Weight of the structural term.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Disable the robust loss wrapper.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub no_robust: Option<bool>,
    /// Working image width in pixels.
    #[arg(long)]
    pub res: Option<usize>,
    /// Exponent on n·d in the contour density.
    #[arg(long)]
    pub beta: Option<u32>,
    /// Ray-march samples per pixel.
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Stroke width in pixels.
    #[arg(long)]
    pub width_px: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Views per optimization step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Write a checkpoint every N steps.
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<usize>,
}

impl Tuning {
    /// Fields set in `file` replace those given on the command line.
    pub fn overlay(self, file: Tuning) -> Tuning {
        macro_rules! pick {
            ($($f:ident),*) => { Tuning { $($f: file.$f.or(self.$f)),* } };
        }
        pick!(
            n_ind,
            n_dep,
            init,
            seed,
            steps,
            stage_split,
            loss,
            sidecar_addr,
            lambda,
            no_robust,
            res,
            beta,
            n_samples,
            width_px,
            lr,
            batch_size,
            checkpoint_every
        )
    }
}

pub fn load_config(path: &Path) -> Result<Tuning> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_vec3(s: &str) -> std::result::Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers 'x,y,z', got '{s}'")),
    }
}
