use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use craft::commands::{self, CorrArgs, CorrMode, SstransApply};
use craft::config::{parse_pair, parse_size, parse_sizes, RunConfig};
use craft::{report, CraftError};

#[derive(Parser)]
#[command(name = "craft", version, about = "Cross-frame attention correlation volumes, shift attacks and flow metrics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override `--config`.
#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Image size in pixels, `HxW`.
    #[arg(long, global = true)]
    size: Option<String>,
    #[arg(long, global = true)]
    dims: Option<usize>,
    /// Attention modes of the smoothing transformer.
    #[arg(long, global = true)]
    modes: Option<usize>,
    #[arg(long, global = true)]
    radius: Option<usize>,
    #[arg(long, global = true)]
    cfa_modes: Option<usize>,
    #[arg(long, global = true)]
    patch: Option<usize>,
    /// Layer-normalize correlation volumes.
    #[arg(long, global = true)]
    normalize: bool,
    /// Heatmap field of view in pixels.
    #[arg(long, global = true)]
    fov: Option<usize>,
    /// Pixels per grid cell.
    #[arg(long, global = true)]
    scale: Option<usize>,
    /// `start:end:step` or `a,b,c`.
    #[arg(long, global = true)]
    sweep: Option<String>,
    /// Scene displacement `dx,dy`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    displacement: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> craft::error::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(s) = &self.size {
            (c.height, c.width) = parse_size(s)?;
        }
        if let Some(v) = self.dims {
            c.dims = v;
        }
        if let Some(v) = self.modes {
            c.modes = v;
        }
        if let Some(v) = self.radius {
            c.radius = v;
        }
        if let Some(v) = self.cfa_modes {
            c.cfa_modes = v;
        }
        if let Some(v) = self.patch {
            c.patch = v;
        }
        c.normalize |= self.normalize;
        if let Some(v) = self.fov {
            c.fov = v;
        }
        if let Some(v) = self.scale {
            c.scale = v;
        }
        if let Some(s) = &self.sweep {
            c.sweep = s.clone();
        }
        if let Some(s) = &self.displacement {
            c.displacement = parse_pair(s)?;
        }
        Ok(c)
    }

    fn out(&self) -> craft::error::Result<PathBuf> {
        self.out.clone().ok_or_else(|| CraftError::Usage("--out is required".into()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Dot,
    Cfa,
}

#[derive(Clone, Copy, ValueEnum)]
enum SstransArg {
    None,
    Frame2,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Translated noise scene: I1.pgm, I2.pgm, gt.flo, scene.json in --out.
    Gen,
    /// Patch features of an image.
    Featurize { image: PathBuf },
    /// Seeded smoothing-transformer and cross-frame attention weights.
    InitWeights,
    /// Run the smoothing transformer on a feature file.
    Sstrans {
        features: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Build a correlation volume.
    Corr {
        features1: PathBuf,
        features2: PathBuf,
        #[arg(long, value_enum, default_value = "dot")]
        mode: ModeArg,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "none")]
        sstrans: SstransArg,
    },
    /// Query heatmap as PGM plus a JSON sidecar.
    Heatmap {
        volume: PathBuf,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        col: usize,
    },
    /// Exhaustive argmax flow between two images.
    Match {
        image1: PathBuf,
        image2: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Shift-attack sweep on a generated scene (JSONL to --out).
    Attack {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Analytic versus finite-difference gradients.
    Gradcheck {
        /// `HxWxD,...`; omit for the default suite.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb: f64,
    },
    /// AEPE, outlier rates and binned error of a predicted flow.
    Metrics {
        pred: PathBuf,
        gt: PathBuf,
        /// PGM; non-zero marks foreground.
        #[arg(long)]
        foreground: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> craft::error::Result<()> {
    let cfg = cli.common.resolve()?;
    let c = &cli.common;
    match cli.command {
        Command::Gen => {
            let info = commands::gen(&cfg, &c.out()?)?;
            println!("{}", serde_json::to_string(&info)?);
        }
        Command::Featurize { image } => {
            let f = commands::featurize(&cfg, &image, &c.out()?)?;
            println!("features {}x{}x{}", f.height(), f.width(), f.channels());
        }
        Command::InitWeights => {
            let w = commands::init_weights(&cfg, &c.out()?)?;
            println!("{} records", w.records.len());
        }
        Command::Sstrans { features, weights } => {
            commands::sstrans(&features, &weights, &c.out()?)?;
        }
        Command::Corr { features1, features2, mode, weights, sstrans } => {
            let args = CorrArgs {
                features1,
                features2,
                weights,
                mode: match mode {
                    ModeArg::Dot => CorrMode::Dot,
                    ModeArg::Cfa => CorrMode::Cfa,
                },
                sstrans: match sstrans {
                    SstransArg::None => SstransApply::None,
                    SstransArg::Frame2 => SstransApply::Frame2,
                    SstransArg::Both => SstransApply::Both,
                },
                out: c.out()?,
            };
            let v = commands::corr(&cfg, &args)?;
            println!("volume {}x{} {:?}", v.height(), v.width(), v.kind());
        }
        Command::Heatmap { volume, row, col } => {
            let info = commands::heatmap(&cfg, &volume, (row, col), &c.out()?)?;
            println!("{}", serde_json::to_string(&info)?);
        }
        Command::Match { image1, image2, weights } => {
            let f = commands::match_flow(&cfg, &image1, &image2, weights.as_deref(), &c.out()?)?;
            println!("flow {}x{}", f.width(), f.height());
        }
        Command::Attack { weights, csv } => {
            let rows = commands::attack(&cfg, weights.as_deref(), &c.out()?, csv.as_deref())?;
            print!("{}", report::jsonl(&rows)?);
        }
        Command::Gradcheck { sizes, perturb } => {
            let sizes = sizes.as_deref().map(parse_sizes).transpose()?;
            if sizes.as_ref().is_some_and(Vec::is_empty) {
                eprintln!("warning: empty size list, nothing to check");
            }
            let lines = commands::gradcheck(&cfg, sizes.as_deref(), perturb)?;
            for l in &lines {
                println!("{} {} (checked {}, max rel {:.2e})", if l.passed { "PASS" } else { "FAIL" }, l.label, l.checked, l.max_rel_error);
            }
            if let Some(out) = &c.out {
                report::write_jsonl(&lines, out)?;
            }
            commands::ensure_passed(&lines)?;
        }
        Command::Metrics { pred, gt, foreground } => {
            let r = commands::metrics(&pred, &gt, foreground.as_deref(), c.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("craft: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
