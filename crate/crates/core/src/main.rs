use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use ghostsim::config::{preset, ExperimentConfig, PRESETS};
use ghostsim::io::GridImage;
use ghostsim::metrics::epsilon;
use ghostsim::runner::Experiment;
use ghostsim::{Error, Result};

#[derive(Parser)]
#[command(name = "ghostsim", version, about = "Ghost imaging simulator for a PDC source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write the result bundle.
    Run(RunArgs),
    /// Write only the oracle images (same as `run --shots 0`).
    Oracle(RunArgs),
    /// Print a preset as TOML, or list the presets.
    Preset { name: Option<String> },
    /// Compare two exported GIMG maps.
    Diff {
        a: PathBuf,
        b: PathBuf,
        /// Number of peaks of `a` to tabulate.
        #[arg(long, default_value_t = 5)]
        peaks: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --config or --preset, not both".into())),
        (Some(path), None) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if let Some(n) = args.shots {
        cfg.run.shots = n;
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.run.threads = t;
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Ok(dir) = std::env::var("GHOSTSIM_OUT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    args.out
        .clone()
        .or_else(|| cfg.run.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", cfg.preset.as_deref().unwrap_or("run"))))
}

fn run(args: &RunArgs, oracle_only: bool) -> Result<()> {
    let mut cfg = load_config(args)?;
    if oracle_only {
        cfg.run.shots = 0;
    }
    let dir = out_dir(args, &cfg);
    let exp = Experiment::new(&cfg)?;
    let result = exp.run()?;
    result.write(&dir)?;
    for ch in &result.channels {
        match (ch.final_epsilon, ch.fit) {
            (Some(e), Some(f)) => println!("{}: epsilon {e:.4e}, d0 {:.4e}, d1 {:.4e}", ch.name, f.d0, f.d1),
            (Some(e), None) => println!("{}: epsilon {e:.4e}", ch.name),
            _ => println!("{}: oracle only", ch.name),
        }
    }
    info!("results written to {}", dir.display());
    println!("wrote {}", dir.display());
    Ok(())
}

/// Local maxima (8-neighbourhood, periodic) sorted by value, largest first.
fn peaks(img: &GridImage, count: usize) -> Vec<(usize, usize, f64)> {
    let (nx, ny) = (img.nx, img.ny);
    let v = |x: isize, y: isize| {
        let xi = x.rem_euclid(nx as isize) as usize;
        let yi = y.rem_euclid(ny as isize) as usize;
        img.values[yi * nx + xi]
    };
    let mut out = Vec::new();
    for y in 0..ny as isize {
        for x in 0..nx as isize {
            let c = v(x, y);
            let mut is_peak = c > 0.0;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if (dx, dy) == (0, 0) || (ny == 1 && dy != 0) {
                        continue;
                    }
                    let n = v(x + dx, y + dy);
                    // ties resolved towards the lower index
                    if n > c || (n == c && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_peak = false;
                    }
                }
            }
            if is_peak {
                out.push((x as usize, y as usize, c));
            }
        }
    }
    out.sort_by(|a, b| b.2.total_cmp(&a.2));
    out.truncate(count);
    out
}

fn diff(a: &Path, b: &Path, npeaks: usize) -> Result<()> {
    let ga = GridImage::read(a)?;
    let gb = GridImage::read(b)?;
    if (ga.nx, ga.ny) != (gb.nx, gb.ny) {
        return Err(Error::Format(format!("map sizes differ: {}x{} vs {}x{}", ga.nx, ga.ny, gb.nx, gb.ny)));
    }
    println!("epsilon,{:.10e}", epsilon(&gb.values, &ga.values)?);
    let ma = ga.values.iter().cloned().fold(f64::MIN, f64::max);
    let mb = gb.values.iter().cloned().fold(f64::MIN, f64::max);
    println!("x,y,a_rescaled,b_rescaled,ratio_b_over_a");
    for (x, y, va) in peaks(&ga, npeaks) {
        let vb = gb.values[y * ga.nx + x];
        let (ra, rb) = (va / ma, vb / mb);
        let xc = (x as f64 - (ga.nx / 2) as f64) * ga.dx;
        let yc = (y as f64 - (ga.ny / 2) as f64) * ga.dy;
        println!("{xc:.6e},{yc:.6e},{ra:.6e},{rb:.6e},{:.6e}", rb / ra);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => run(a, false),
        Command::Oracle(a) => run(a, true),
        Command::Preset { name: Some(name) } => preset(name).and_then(|c| c.resolved().to_toml()).map(|t| print!("{t}")),
        Command::Preset { name: None } => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(())
        }
        Command::Diff { a, b, peaks } => diff(a, b, *peaks),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
