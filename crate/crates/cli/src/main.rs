use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sdq_core::decoder::SolverConfig;
use sdq_core::encoder::EncodeMode;
use sdq_core::error::SdqError;
use sdq_core::pipeline::experiments::{run_experiment, Experiment};
use sdq_core::pipeline::{
    build_report, quantize_image, read_image, reconstruct, write_image, PatchLayout,
    QuantizeOptions, ReconClass, ReconstructOptions, Remainder, SdqContainer,
};

const EXIT_FORMAT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INSTABILITY: u8 = 4;

#[derive(Parser)]
#[command(name = "sdq", version, about = "Sigma-delta quantization of images and TV-regularized reconstruction")]
struct Cli {
    /// Worker threads for patch-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Msq,
    MsqDither,
    Sd1d,
    Sd2d,
}

impl From<Mode> for EncodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Msq => EncodeMode::Msq,
            Mode::MsqDither => EncodeMode::MsqDither,
            Mode::Sd1d => EncodeMode::Sd1dCol,
            Mode::Sd2d => EncodeMode::Sd2d,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Class {
    Naive,
    C1,
    C2,
    C3,
}

impl From<Class> for ReconClass {
    fn from(c: Class) -> Self {
        match c {
            Class::Naive => ReconClass::Naive,
            Class::C1 => ReconClass::C1,
            Class::C2 => ReconClass::C2,
            Class::C3 => ReconClass::C3,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a PGM/PPM image into an .sdq container.
    Quantize {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 3)]
        bits: u32,
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Patch size `RxC`; the whole image when omitted.
        #[arg(long)]
        patch: Option<String>,
        /// Reflect-pad edge patches instead of allowing smaller ones.
        #[arg(long)]
        pad_reflect: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Alphabet range `A,B`.
        #[arg(long, default_value = "0,1", value_parser = parse_range)]
        range: (f64, f64),
        /// Quantize the last `order` samples of each column with the fine
        /// boundary alphabet (sd1d only; needed by class c3).
        #[arg(long)]
        fine_tail: bool,
        /// Smoothness order hint stored in the container.
        #[arg(long, default_value_t = 1)]
        beta: usize,
        input: PathBuf,
        output: PathBuf,
    },
    /// Decode an .sdq container into an image.
    Reconstruct {
        #[arg(long, value_enum)]
        class: Class,
        #[arg(long, default_value_t = 1)]
        beta: usize,
        /// Solver settings file with `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one solver setting, e.g. `--set tol=1e-6`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Ground truth image for the quality report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Write a JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Apply X^(1/3) to the result.
        #[arg(long)]
        brighten: bool,
        /// Allow class c2 on higher-order containers.
        #[arg(long)]
        experimental: bool,
        input: PathBuf,
        output: PathBuf,
    },
    /// Run a named study and write its CSV tables.
    Experiment {
        name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        outdir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected A,B")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn solver_config(path: Option<&Path>, overrides: &[String]) -> Result<SolverConfig> {
    let mut cfg = match path {
        Some(p) => SolverConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => SolverConfig::default(),
    };
    for kv in overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!(SdqError::InvalidArgument(format!("--set expects KEY=VALUE, got {kv:?}")));
        };
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome that maps to a nonzero exit code without being an error.
struct Unconverged(usize);

fn run(cli: Cli) -> Result<Option<Unconverged>> {
    match cli.command {
        Command::Quantize {
            mode,
            bits,
            order,
            patch,
            pad_reflect,
            seed,
            range,
            fine_tail,
            beta,
            input,
            output,
        } => {
            let img = read_image(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut opts = QuantizeOptions::new(mode.into(), bits, order);
            opts.seed = seed;
            opts.range = range;
            opts.fine_tail = fine_tail;
            opts.beta_hint = beta;
            if let Some(p) = patch {
                let mut layout = PatchLayout::parse(&p)?;
                if pad_reflect {
                    layout.remainder = Remainder::PadReflect;
                }
                opts.layout = Some(layout);
            }
            let container = quantize_image(&img, &opts)?;
            container
                .write(&output)
                .with_context(|| format!("writing {}", output.display()))?;
            Ok(None)
        }
        Command::Reconstruct {
            class,
            beta,
            config,
            overrides,
            truth,
            report,
            brighten,
            experimental,
            input,
            output,
        } => {
            let container = SdqContainer::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut opts = ReconstructOptions::new(class.into(), beta);
            opts.solver = solver_config(config.as_deref(), &overrides)?;
            opts.brighten = brighten;
            opts.experimental = experimental;
            let rec = reconstruct(&container, &opts)?;
            write_image(&output, &rec.image).with_context(|| format!("writing {}", output.display()))?;
            let truth = match truth {
                Some(p) => Some(read_image(&p).with_context(|| format!("reading {}", p.display()))?),
                None => None,
            };
            let rep = build_report(&container, &opts, &rec, truth.as_ref())?;
            if let Some(q) = &rep.quality {
                eprintln!("PSNR {:.3} dB, SNR {:.3} dB", q.psnr_db, q.snr_db);
            }
            if let Some(path) = report {
                let json = rep.to_json()?;
                std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok((rep.nonconverged > 0).then_some(Unconverged(rep.nonconverged)))
        }
        Command::Experiment {
            name,
            seed,
            outdir,
            config,
        } => {
            let which: Experiment = name.parse()?;
            let solver = solver_config(config.as_deref(), &[])?;
            std::fs::create_dir_all(&outdir).with_context(|| format!("creating {}", outdir.display()))?;
            for table in run_experiment(which, seed, &solver)? {
                let path = table.write_to(&outdir)?;
                eprintln!("wrote {}", path.display());
            }
            Ok(None)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<SdqError>()) {
        Some(SdqError::Format(_)) => EXIT_FORMAT,
        Some(SdqError::SolverDivergence { .. } | SdqError::LinearSolve { .. }) => EXIT_SOLVER,
        Some(SdqError::EncoderInstability { .. }) => EXIT_INSTABILITY,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Unconverged(n))) => {
            eprintln!("warning: {n} solve(s) hit the iteration cap before converging");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
