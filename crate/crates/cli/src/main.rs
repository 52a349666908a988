use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hcip_cli::error::exit;
use hcip_cli::pipeline;
use hcip_cli::{io, CliError, Phantom, Result, RunConfig};

#[derive(Parser)]
#[command(name = "hcip", version, about = "Dielectric constant reconstruction from multi-frequency backscatter data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Settings {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set omega_nodes=48`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

impl Settings {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for s in &self.set {
            cfg.set(s)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize target and reference measurements for a phantom.
    Simulate {
        /// Built-in phantom (object1 ... object6, empty).
        #[arg(long, conflicts_with = "phantom")]
        preset: Option<String>,
        /// Phantom description in JSON.
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Turn raw measurements into boundary data for the inversion.
    Preprocess {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Reconstruct the dielectric constant from a preprocessed bundle.
    Invert {
        #[arg(long)]
        bundle: PathBuf,
        /// Ground truth for the error columns of the summary.
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Slices, isosurface and data curves for a reconstruction.
    Report {
        /// Directory written by `invert`.
        #[arg(long)]
        result: PathBuf,
        /// Directory written by `preprocess`, for the data curves.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        phantom: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Check the spectral propagator against the double-layer potential.
    VerifyTheorem {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { preset, phantom, out, settings } => {
            let cfg = settings.load()?;
            let phantom = match (preset, phantom) {
                (Some(name), _) => Phantom::preset(&name)?,
                (None, Some(path)) => io::read_json(&path)?,
                (None, None) => return Err(CliError::Config("simulate needs --preset or --phantom".into())),
            };
            let ds = pipeline::simulate(&cfg, &phantom, &out)?;
            println!("{}", ds.target.display());
            println!("{}", ds.reference.display());
        }
        Command::Preprocess { target, reference, out, settings } => {
            let b = pipeline::preprocess(&settings.load()?, &target, &reference, &out)?;
            println!(
                "z* = {}  interval {}..={}  optimal {:.4} GHz  footprint {} nodes",
                b.z_star,
                b.interval.start,
                b.interval.end,
                b.interval.f_opt_ghz,
                b.footprint.nodes.len()
            );
        }
        Command::Invert { bundle, phantom, out, settings } => {
            let truth: Option<Phantom> = phantom.as_deref().map(io::read_json).transpose()?;
            let s = pipeline::invert(&settings.load()?, &bundle, truth.as_ref(), &out)?;
            print!("max c = {:.4}  converged = {}  sweeps = {}", s.max_c, s.converged, s.sweeps);
            match &s.truth {
                Some(t) => println!("  relative error = {:.2}%", 100.0 * t.relative_error),
                None => println!(),
            }
        }
        Command::Report { result, bundle, phantom, out, settings } => {
            let cfg = settings.load()?;
            let vol = io::read_vtk(&result.join(pipeline::COEFFICIENT_FILE))?;
            let b = bundle.map(|d| pipeline::load_bundle(&d).map(|x| x.0)).transpose()?;
            let truth: Option<Phantom> = phantom.as_deref().map(io::read_json).transpose()?;
            let (r, _) = pipeline::report(&vol, b.as_ref(), truth.as_ref(), cfg.isovalue, &out)?;
            println!("max c = {:.4}  isosurface: {} triangles", r.max_c, r.mesh_triangles);
        }
        Command::VerifyTheorem { out } => {
            let r = pipeline::verify_theorem()?;
            for (n, e) in r.nodes.iter().zip(r.rel_error) {
                println!("{n}x{n}: relative L2 error {e:.3e}");
            }
            println!("decreasing under refinement: {}", r.decreasing);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
                io::write_json(&dir.join("theorem.json"), &r)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
