//! The `fat` command line. Exit codes: 0 success, 1 usage, 2 data or
//! format error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Parser, Subcommand, ValueEnum};

use crate::bench;
use crate::error::{FatError, Result};
use crate::face::{self, FaceSample};
use crate::highres::{crop_and_resize, pyramid_reconstruct, CropBox};
use crate::io::{self, Corpus};
use crate::model::{Generator, Side};
use crate::pgt::{self, PseudoGT};
use crate::tps::{read_points, tps_solve, warp_image, ControlPoints};
use crate::train::{fit, format_loss_csv, load_generator, prepare_pairs, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "fat", version, about = "Facial attribute transfer on synthetic faces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PgtKind {
    Tps,
    Hist,
    Blend,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic corpus with landmarks, masks and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build a pseudo ground truth for a source/reference pair.
    Pgt {
        #[arg(long)]
        source: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_enum)]
        mode: PgtKind,
        /// Label set given the reference shape (tps mode only), e.g. `eyebrows`.
        #[arg(long)]
        spatial_part: Option<String>,
        #[arg(long, default_value_t = pgt::BLEND_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a generator on a corpus directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// `key = value` file; flags given on the command line win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long)]
        spatial: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Run a trained generator on one pair.
    Transfer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Full-resolution frame the source was cropped from.
        #[arg(long, requires = "bbox")]
        highres: Option<PathBuf>,
        /// Crop box `x,y,w,h` inside the high-resolution frame.
        #[arg(long = "box", requires = "highres")]
        bbox: Option<String>,
    },
    /// Warp an image so the source points move onto the destination points.
    Warp {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        src_pts: PathBuf,
        #[arg(long)]
        dst_pts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time batched FAT against sequential per-part static attention.
    Bench {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: bool,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Fat(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Fat(FatError),
}

impl From<FatError> for CliError {
    fn from(e: FatError) -> Self {
        CliError::Fat(e)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| FatError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Where the PGT sidecar goes: `F` with a `.txt` extension.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("txt")
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> std::result::Result<(), CliError> {
    let say = |stdout: &mut dyn Write, s: String| {
        let _ = writeln!(stdout, "{s}");
    };
    match command {
        Command::Synth { out, count, size, seed } => {
            let manifest = io::make_corpus(&out, count, size, seed)?;
            say(stdout, manifest.display().to_string());
        }
        Command::Pgt {
            source,
            reference,
            mode,
            spatial_part,
            alpha,
            out,
        } => {
            if spatial_part.is_some() && mode != PgtKind::Tps {
                return Err(CliError::Usage("--spatial-part requires --mode tps".into()));
            }
            let src = io::load_sample(&source)?;
            let refs = io::load_sample(&reference)?;
            let result = build_pgt(&src, &refs, mode, spatial_part.as_deref(), alpha)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            io::write_ppm(&out, &result.image)?;
            write_text(&sidecar_path(&out), &format!("{}\n", result.sidecar()))?;
            say(stdout, result.sidecar());
        }
        Command::Train {
            data,
            config,
            steps,
            lr,
            heads,
            spatial,
            seed,
            out,
            log,
        } => {
            let mut cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| FatError::Io {
                        path: p.display().to_string(),
                        source: e,
                    })?;
                    TrainConfig::parse(&text, &p.display().to_string())?
                }
                None => TrainConfig::default(),
            };
            cfg.steps = steps.unwrap_or(cfg.steps);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.generator.heads = heads.unwrap_or(cfg.generator.heads);
            cfg.generator.spatial |= spatial;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let corpus = Corpus::open(&data)?;
            let pairs = corpus.pairs()?;
            let size = pairs.first().map_or(cfg.generator.size, |(x, _)| x.height());
            cfg.generator.size = size;
            cfg.validate()?;
            let prepared = prepare_pairs(pairs, &cfg.generator)?;
            let state = fit(&prepared, cfg, |_| {})?;
            state.save(&out)?;
            write_text(&log, &format_loss_csv(&state.history))?;
            if let Some(last) = state.history.last() {
                say(
                    stdout,
                    format!("steps={} j_g={} j_d={}", state.history.len(), last.j_g, last.j_d),
                );
            }
        }
        Command::Transfer {
            model,
            source,
            reference,
            out,
            highres,
            bbox,
        } => {
            let generator = load_generator(&model)?;
            let src = io::load_sample(&source)?;
            let refs = io::load_sample(&reference)?;
            let image = match (highres, bbox) {
                (Some(frame_path), Some(b)) => {
                    let frame = io::read_ppm(&frame_path)?;
                    let bbox: CropBox = b.parse()?;
                    transfer_highres(&frame, bbox, &src, |x| run_generator(&generator, &src, &refs, Some(x)))?
                }
                _ => run_generator(&generator, &src, &refs, None)?,
            };
            io::write_ppm(&out, &image)?;
            let s = image.shape();
            say(stdout, format!("{}x{}", s[2], s[1]));
        }
        Command::Warp {
            image,
            src_pts,
            dst_pts,
            out,
        } => {
            let img = io::read_ppm(&image)?;
            let p = read_points(&src_pts)?;
            let q = read_points(&dst_pts)?;
            let (h, w) = (img.shape()[1], img.shape()[2]);
            // Backward sampling: output location Q samples input location P.
            let grid = tps_solve(&ControlPoints::new(q, p)?)?.grid(h, w)?;
            let warped = warp_image(&img, &grid)?;
            io::write_ppm(&out, &warped)?;
        }
        Command::Bench {
            size,
            heads,
            iters,
            seed,
            csv,
        } => {
            let report = bench::run(size, heads, iters, seed)?;
            let text = if csv { report.to_csv() } else { report.to_text() };
            let _ = stdout.write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn build_pgt(
    source: &FaceSample,
    reference: &FaceSample,
    mode: PgtKind,
    spatial_part: Option<&str>,
    alpha: f64,
) -> Result<PseudoGT> {
    match mode {
        PgtKind::Hist => pgt::histogram_pgt(source, reference),
        PgtKind::Blend => pgt::blend_pgt(source, reference, alpha),
        PgtKind::Tps => {
            let mut result = pgt::color_pgt(source, reference)?;
            if let Some(part) = spatial_part {
                let labels = face::parse_label_set(part)?;
                if labels.is_empty() {
                    return Err(FatError::param("pgt", format!("empty spatial part set {part:?}")));
                }
                for label in labels {
                    result = pgt::spatial_pgt(&result, source, reference, label)?;
                }
            }
            Ok(result)
        }
    }
}

/// Runs `generator` on the pair, optionally substituting the source image.
/// The sample size must match the model.
pub fn run_generator(
    generator: &Generator,
    source: &FaceSample,
    reference: &FaceSample,
    source_image: Option<&fat_tensor::Tensor>,
) -> Result<fat_tensor::Tensor> {
    let size = generator.config.size;
    for (name, s) in [("source", source), ("reference", reference)] {
        if s.height() != size || s.width() != size {
            return Err(FatError::param(
                "transfer",
                format!(
                    "{name} is {}×{} but the model expects {size}×{size}",
                    s.height(),
                    s.width()
                ),
            ));
        }
    }
    let mut src_side = Side::from(source);
    if let Some(img) = source_image {
        src_side = src_side.with_image(img);
    }
    Ok(generator.forward(src_side, Side::from(reference))?.image.detach())
}

/// Crops `bbox` out of `frame`, resizes it to the source sample size, runs
/// `generate` on the low-resolution crop and restores the high-frequency
/// residual at crop resolution.
pub fn transfer_highres(
    frame: &fat_tensor::Tensor,
    bbox: CropBox,
    source: &FaceSample,
    generate: impl FnOnce(&fat_tensor::Tensor) -> Result<fat_tensor::Tensor>,
) -> Result<fat_tensor::Tensor> {
    let pair = crop_and_resize(frame, bbox, source.height())?;
    let z = generate(&pair.low)?;
    pyramid_reconstruct(&pair, &z)
}
