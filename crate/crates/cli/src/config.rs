//! Experiment configuration: preset defaults, an optional TOML file and
//! command-line flags, layered in that order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use ladder_ed::dynamics::TimeGrid;
use ladder_ed::hamiltonians::Boundary;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Preset {
    #[value(name = "fig1a")]
    #[serde(rename = "fig1a")]
    Fig1a,
    #[value(name = "fig1b")]
    #[serde(rename = "fig1b")]
    Fig1b,
    #[value(name = "fig2")]
    #[serde(rename = "fig2")]
    Fig2,
    #[value(name = "fig3")]
    #[serde(rename = "fig3")]
    Fig3,
    #[value(name = "fig4")]
    #[serde(rename = "fig4")]
    Fig4,
    #[value(name = "fig5")]
    #[serde(rename = "fig5")]
    Fig5,
    #[value(name = "fig6")]
    #[serde(rename = "fig6")]
    Fig6,
    #[value(name = "figA1")]
    #[serde(rename = "figA1")]
    FigA1,
    #[value(name = "figA2")]
    #[serde(rename = "figA2")]
    FigA2,
    DualityCheck,
    Custom,
}

/// What a run computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    /// Disorder-averaged level-spacing ratios.
    GapRatio,
    /// Néel quench: entanglement entropy only.
    Entropy,
    /// Néel quench: entropy and the order parameter.
    Metastability,
    /// Néel quench: entropy, populations, correlators and order parameter.
    Quench,
    /// Single-quasiparticle site occupations.
    Occupation,
    /// Rotating-frame on-site potential.
    Potential,
    /// Ladder versus chain spectra.
    Duality,
}

/// Scalar or list, so a config file can say `D = 3.0` or `D = [0.3, 3.0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

/// One layer of settings; `None` means "not set here".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub experiment: Option<Experiment>,
    #[serde(rename = "L")]
    pub sites: Option<OneOrMany<usize>>,
    #[serde(rename = "D")]
    pub disorder: Option<OneOrMany<f64>>,
    pub g: Option<OneOrMany<f64>>,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub h: Option<OneOrMany<f64>>,
    pub boundary: Option<Boundary>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub grid: Option<String>,
    pub window: Option<String>,
    pub dim_cap: Option<usize>,
}

impl Overrides {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// A fully specified run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub experiment: Experiment,
    #[serde(rename = "L")]
    pub sites: Vec<usize>,
    #[serde(rename = "D")]
    pub disorder: Vec<f64>,
    pub g: Vec<f64>,
    #[serde(rename = "J")]
    pub j: f64,
    /// Constant fields; replaces `D` for quenches when set.
    pub h: Vec<f64>,
    pub boundary: Boundary,
    pub samples: usize,
    pub seed: u64,
    /// 0 = one per core. Not part of the result, only of the schedule.
    pub workers: usize,
    pub out: PathBuf,
    pub grid: Option<String>,
    pub window: Option<String>,
    pub dim_cap: usize,
}

fn defaults(preset: Preset) -> ExperimentConfig {
    let base = ExperimentConfig {
        preset,
        experiment: Experiment::Entropy,
        sites: vec![12],
        disorder: vec![],
        g: vec![1.0],
        j: 1.0,
        h: vec![],
        boundary: Boundary::Open,
        samples: 200,
        seed: 1,
        workers: 0,
        out: PathBuf::from("out"),
        grid: None,
        window: None,
        dim_cap: ladder_ed::hamiltonians::DEFAULT_DIM_CAP,
    };
    let grid = |s: &str| Some(s.to_string());
    match preset {
        Preset::Fig1a => ExperimentConfig {
            experiment: Experiment::GapRatio,
            disorder: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0],
            boundary: Boundary::Periodic,
            ..base
        },
        Preset::Fig1b => ExperimentConfig {
            disorder: vec![0.3, 3.0, 30.0],
            grid: grid("0.1:1e6:20"),
            ..base
        },
        Preset::Fig2 => ExperimentConfig {
            experiment: Experiment::Quench,
            disorder: vec![0.1, 0.5, 3.0],
            grid: grid("0.1:1e10:20"),
            ..base
        },
        Preset::Fig3 => ExperimentConfig {
            experiment: Experiment::Metastability,
            disorder: vec![0.1],
            g: vec![1.0, 0.1],
            grid: grid("0.1:1e10:20"),
            ..base
        },
        Preset::Fig4 => ExperimentConfig {
            experiment: Experiment::Metastability,
            h: vec![0.1, 0.5, 2.0],
            samples: 1,
            grid: grid("0.1:1e10:20"),
            ..base
        },
        Preset::Fig5 => ExperimentConfig {
            experiment: Experiment::GapRatio,
            sites: vec![8, 10, 12],
            disorder: vec![0.1, 0.3, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0, 13.0, 16.0, 20.0, 26.0, 30.0, 50.0],
            boundary: Boundary::Periodic,
            ..base
        },
        Preset::Fig6 => ExperimentConfig {
            sites: vec![8, 10, 12],
            disorder: vec![0.1, 0.3, 1.0],
            grid: grid("0.1:1e8:20"),
            ..base
        },
        Preset::FigA1 => ExperimentConfig {
            experiment: Experiment::Occupation,
            sites: vec![9],
            h: vec![0.1, 0.5, 1.0],
            samples: 1,
            grid: grid("0.1:1e6:20"),
            ..base
        },
        Preset::FigA2 => ExperimentConfig {
            experiment: Experiment::Potential,
            sites: vec![9],
            h: vec![0.1],
            samples: 1,
            grid: grid("1e3:1e6:100"),
            window: grid("1e3:1e6"),
            ..base
        },
        Preset::DualityCheck => ExperimentConfig {
            experiment: Experiment::Duality,
            sites: vec![4, 6, 8],
            disorder: vec![0.1, 1.0, 10.0],
            samples: 20,
            ..base
        },
        Preset::Custom => ExperimentConfig {
            sites: vec![8],
            disorder: vec![1.0],
            samples: 10,
            grid: grid("0.1:1e4:10"),
            ..base
        },
    }
}

impl ExperimentConfig {
    /// Preset defaults, then `file`, then `flags`. The preset comes from the
    /// highest layer that names one.
    pub fn resolve(file: Option<Overrides>, flags: Overrides) -> anyhow::Result<Self> {
        let layers: Vec<Overrides> = file.into_iter().chain(std::iter::once(flags)).collect();
        let preset = layers.iter().rev().find_map(|l| l.preset).unwrap_or(Preset::Custom);
        let mut cfg = defaults(preset);
        for layer in layers {
            cfg.apply(layer)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: Overrides) -> anyhow::Result<()> {
        if o.disorder.is_some() && o.h.is_some() && self.experiment_takes_both(o.experiment) {
            bail!("set either D or h, not both");
        }
        if let Some(v) = o.experiment {
            self.experiment = v;
        }
        if let Some(v) = o.sites {
            self.sites = v.into();
        }
        // a layer choosing one kind of field clears the other from below
        if let Some(v) = o.disorder {
            self.disorder = v.into();
            if self.is_quench() {
                self.h.clear();
            }
        }
        if let Some(v) = o.h {
            self.h = v.into();
            if self.is_quench() {
                self.disorder.clear();
            }
        }
        if let Some(v) = o.g {
            self.g = v.into();
        }
        if let Some(v) = o.j {
            self.j = v;
        }
        if let Some(v) = o.boundary {
            self.boundary = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.workers {
            self.workers = v;
        }
        if let Some(v) = o.out {
            self.out = v;
        }
        if let Some(v) = o.grid {
            self.grid = Some(v);
        }
        if let Some(v) = o.window {
            self.window = Some(v);
        }
        if let Some(v) = o.dim_cap {
            self.dim_cap = v;
        }
        Ok(())
    }

    fn experiment_takes_both(&self, layer: Option<Experiment>) -> bool {
        matches!(
            layer.unwrap_or(self.experiment),
            Experiment::Entropy | Experiment::Metastability | Experiment::Quench
        )
    }

    pub fn is_quench(&self) -> bool {
        matches!(self.experiment, Experiment::Entropy | Experiment::Metastability | Experiment::Quench)
    }

    pub fn time_grid(&self) -> anyhow::Result<TimeGrid> {
        let text = self.grid.as_deref().unwrap_or("0.1:1e4:10");
        Ok(text.parse()?)
    }

    pub fn averaging_window(&self) -> anyhow::Result<(f64, f64)> {
        let text = self.window.as_deref().unwrap_or("1e3:1e6");
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b] = parts.as_slice() else {
            bail!("window must look like tmin:tmax, got {text:?}");
        };
        let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
        if !(a > 0.0 && a < b) {
            bail!("window {text:?} must satisfy 0 < tmin < tmax");
        }
        Ok((a, b))
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.sites.is_empty() {
            bail!("L must list at least one size");
        }
        if self.samples == 0 {
            bail!("samples must be at least 1");
        }
        if self.g.is_empty() {
            bail!("g must list at least one value");
        }
        let needs_h = matches!(self.experiment, Experiment::Occupation | Experiment::Potential);
        let needs_d = matches!(self.experiment, Experiment::GapRatio | Experiment::Duality);
        if needs_h && self.h.is_empty() {
            bail!("{:?} runs need h", self.experiment);
        }
        if needs_d && self.disorder.is_empty() {
            bail!("{:?} runs need D", self.experiment);
        }
        if self.is_quench() && self.disorder.is_empty() && self.h.is_empty() {
            bail!("quench runs need D or h");
        }
        if let Some(d) = self.disorder.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            bail!("D must be finite and non-negative, got {d}");
        }
        if self.experiment == Experiment::Duality && self.boundary == Boundary::Periodic {
            bail!("the ladder form is defined with open boundaries only");
        }
        if self.is_quench() || matches!(self.experiment, Experiment::Occupation | Experiment::Potential) {
            self.time_grid()?;
        }
        if self.experiment == Experiment::Potential {
            self.averaging_window()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Overrides {
        Overrides::default()
    }

    #[test]
    fn flags_beat_file_beat_preset() {
        let file = Overrides {
            preset: Some(Preset::Fig1b),
            samples: Some(7),
            seed: Some(3),
            ..flags()
        };
        let cli = Overrides { seed: Some(9), ..flags() };
        let cfg = ExperimentConfig::resolve(Some(file), cli).unwrap();
        assert_eq!(cfg.preset, Preset::Fig1b);
        assert_eq!(cfg.samples, 7);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.disorder, vec![0.3, 3.0, 30.0]);
    }

    #[test]
    fn constant_fields_replace_the_disorder_list() {
        let cli = Overrides {
            preset: Some(Preset::Fig1b),
            h: Some(OneOrMany::One(0.2)),
            ..flags()
        };
        let cfg = ExperimentConfig::resolve(None, cli).unwrap();
        assert!(cfg.disorder.is_empty());
        assert_eq!(cfg.h, vec![0.2]);
    }

    #[test]
    fn toml_accepts_scalars_and_lists() {
        let o: Overrides = toml::from_str("preset = \"fig5\"\nL = [8, 10]\nD = 3.0\nboundary = \"periodic\"\n").unwrap();
        let cfg = ExperimentConfig::resolve(Some(o), flags()).unwrap();
        assert_eq!(cfg.sites, vec![8, 10]);
        assert_eq!(cfg.disorder, vec![3.0]);
        assert_eq!(cfg.experiment, Experiment::GapRatio);
    }

    #[test]
    fn rejects_bad_combinations() {
        let both = Overrides {
            disorder: Some(OneOrMany::One(1.0)),
            h: Some(OneOrMany::One(0.1)),
            ..flags()
        };
        assert!(ExperimentConfig::resolve(None, both).is_err());
        let periodic_duality = Overrides {
            preset: Some(Preset::DualityCheck),
            boundary: Some(Boundary::Periodic),
            ..flags()
        };
        assert!(ExperimentConfig::resolve(None, periodic_duality).is_err());
        let no_samples = Overrides { samples: Some(0), ..flags() };
        assert!(ExperimentConfig::resolve(None, no_samples).is_err());
        assert!(toml::from_str::<Overrides>("bogus = 1").is_err());
    }
}
