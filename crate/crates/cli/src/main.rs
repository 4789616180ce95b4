//! `ladder-ed`: runs the named presets and custom experiments.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ladder_ed::hamiltonians::Boundary;

use config::{Experiment, ExperimentConfig, OneOrMany, Overrides, Preset};

const OUTPUT_HELP: &str = "\
OUTPUT FILES (all in --out, plus manifest.json describing the run):
  gap ratio (fig1a, fig5):
    gap_ratio.csv                         g, D, L, n_samples, mean_r, stderr_r, dropped_fraction
    gap_ratio_L*_g*_D*_hist.csv           r_lo, r_hi, count, density
  quench (fig1b, fig2, fig3, fig4, fig6):
    entropy_L*_g*_{D*|h*}.csv             t, entropy, entropy_stderr
    populations_L*_g*_{D*|h*}.csv         t, P0, P0_stderr, P2, P2_stderr, ...
    correlators_L*_g*_{D*|h*}.csv         t, C00_d1, C00_d1_stderr, ... (C{x}{y}_d{d})
    order_parameter_L*_g*_{D*|h*}.csv     t, order_parameter, order_parameter_stderr
  single quasiparticle (figA1, figA2):
    occupation_L*_h*.csv                  t, N1, ..., NL
    potential_L*_h*.csv                   t, site, M_jj, valid (empty M_jj where valid = 0)
    potential_L*_h*.json                  late-window mean and stderr per site
  duality_check:
    duality.csv                           L, D, sample, max_mismatch, structural_mismatch, max_moment_deviation
    duality.json                          full spectra and multiplicity tables

Precedence: flags > --config file > preset defaults.
Exit status: 0 success, 1 runtime failure, 2 invalid input, 3 resource cap exceeded.";

#[derive(Debug, Parser)]
#[command(name = "ladder-ed", version, about = "Exact diagonalization of the disordered spin ladder and its dual chain", after_long_help = OUTPUT_HELP)]
struct Cli {
    /// Named experiment with fixed default parameters
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Experiment kind (for `custom`, or to change what a preset computes)
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// TOML file with the same keys as the flags (L, D, g, J, h, boundary, ...)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run exactly what a previous manifest.json describes
    #[arg(long, conflicts_with_all = ["preset", "config"])]
    replay: Option<PathBuf>,
    /// System sizes, comma separated
    #[arg(long = "L", value_delimiter = ',')]
    sites: Option<Vec<usize>>,
    /// Disorder strengths: fields drawn from [-D/2, D/2]
    #[arg(long = "D", value_delimiter = ',', allow_negative_numbers = true)]
    disorder: Option<Vec<f64>>,
    /// Ising couplings, comma separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    g: Option<Vec<f64>>,
    /// Flip-flop coupling
    #[arg(long = "J", allow_negative_numbers = true)]
    j: Option<f64>,
    /// Constant fields (quench) or hopping amplitudes (single quasiparticle)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    h: Option<Vec<f64>>,
    #[arg(long, value_parser = clap::value_parser!(Boundary))]
    boundary: Option<Boundary>,
    /// Disorder samples per parameter point
    #[arg(long)]
    samples: Option<usize>,
    /// Master seed of the disorder generator
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, env = "LADDER_ED_WORKERS")]
    workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log-spaced time grid as tmin:tmax:points_per_decade
    #[arg(long)]
    grid: Option<String>,
    /// Averaging window tmin:tmax for the on-site potential
    #[arg(long)]
    window: Option<String>,
    /// Largest Hilbert-space dimension to build
    #[arg(long)]
    dim_cap: Option<usize>,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset,
            experiment: self.experiment,
            sites: self.sites.clone().map(OneOrMany::Many),
            disorder: self.disorder.clone().map(OneOrMany::Many),
            g: self.g.clone().map(OneOrMany::Many),
            j: self.j,
            h: self.h.clone().map(OneOrMany::Many),
            boundary: self.boundary,
            samples: self.samples,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            grid: self.grid.clone(),
            window: self.window.clone(),
            dim_cap: self.dim_cap,
        }
    }

    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        if let Some(path) = &self.replay {
            let mut cfg = runner::Manifest::read(path)?.config;
            // only the schedule and the destination may change on replay
            if let Some(w) = self.workers {
                cfg.workers = w;
            }
            if let Some(o) = &self.out {
                cfg.out = o.clone();
            }
            return Ok(cfg);
        }
        let file = self.config.as_deref().map(Overrides::from_file).transpose()?;
        ExperimentConfig::resolve(file, self.overrides())
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ladder_ed::Error>() {
        Some(ladder_ed::Error::Resource { .. }) => 3,
        Some(ladder_ed::Error::Parameter(_) | ladder_ed::Error::Unsupported(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match runner::run(&cfg) {
        Ok(m) => {
            let files: usize = m.runs.iter().map(|r| r.outputs.len()).sum();
            log::info!("wrote {} runs ({files} outputs) to {}", m.runs.len(), cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
