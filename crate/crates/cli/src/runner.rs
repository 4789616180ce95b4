//! Executes a resolved [`ExperimentConfig`] and writes CSV series plus a
//! JSON manifest into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ladder_ed::duality::{verify_duality, DualityReport};
use ladder_ed::dynamics::{evolve_expectations, LogBase, SiteOccupation};
use ladder_ed::ensemble::{
    run_gap_ratio, run_quench, AggregatedSeries, DisorderModel, ObservableSet, QuenchExperiment, RunOptions,
    SampleStatus,
};
use ladder_ed::hamiltonians::{Boundary, HamiltonianSpec};
use ladder_ed::hilbert::binomial;
use ladder_ed::rotframe::{emergent_potential_series, localized_state, SingleQuasiparticleSystem};
use ladder_ed::spectra::{histogram, GapRatioOptions, GapRatioRow};
use ladder_ed::Error;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};

pub const MANIFEST: &str = "manifest.json";
const HISTOGRAM_BINS: usize = 50;

/// One unit of work (a parameter point) and the files it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub spec: HamiltonianSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<DisorderModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub status: Vec<SampleStatus>,
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

struct RunContext {
    cfg: ExperimentConfig,
    out: PathBuf,
    runs: Vec<RunRecord>,
}

impl RunContext {
    fn options(&self, label: &str) -> RunOptions {
        RunOptions {
            workers: self.cfg.workers,
            checkpoint: Some(self.out.join("checkpoints").join(format!("{label}.json"))),
        }
    }

    fn finish_checkpoint(&self, label: &str) {
        let _ = fs::remove_file(self.out.join("checkpoints").join(format!("{label}.json")));
    }

    fn write_manifest(&self, error: Option<String>) -> anyhow::Result<()> {
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: self.cfg.clone(),
            complete: error.is_none(),
            error,
            runs: self.runs.clone(),
        };
        let path = self.out.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&m)?).with_context(|| format!("writing {}", path.display()))
    }

    fn csv(&self, name: &str) -> anyhow::Result<csv::Writer<fs::File>> {
        let path = self.out.join(name);
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn check_dim(what: &str, dim: usize, cap: usize) -> anyhow::Result<()> {
    if dim > cap {
        return Err(Error::Resource {
            what: what.into(),
            dim,
            cap,
        }
        .into());
    }
    Ok(())
}

/// Runs everything in `cfg`, writing outputs and the manifest. The manifest
/// is written even when a run fails, so finished parts can be inspected and
/// the run resumed with `--replay`.
pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<Manifest> {
    fs::create_dir_all(cfg.out.join("checkpoints")).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut ctx = RunContext {
        cfg: cfg.clone(),
        out: cfg.out.clone(),
        runs: Vec::new(),
    };
    let result = match cfg.experiment {
        Experiment::GapRatio => gap_ratio(&mut ctx),
        Experiment::Entropy | Experiment::Metastability | Experiment::Quench => quench(&mut ctx),
        Experiment::Occupation => occupation(&mut ctx),
        Experiment::Potential => potential(&mut ctx),
        Experiment::Duality => duality(&mut ctx),
    };
    ctx.write_manifest(result.as_ref().err().map(|e| format!("{e:#}")))?;
    result?;
    let _ = fs::remove_dir(ctx.out.join("checkpoints"));
    Manifest::read(&ctx.out.join(MANIFEST))
}

fn gap_ratio(ctx: &mut RunContext) -> anyhow::Result<()> {
    let cfg = ctx.cfg.clone();
    let mut rows = Vec::new();
    for &sites in &cfg.sites {
        check_dim("parity block", binomial(sites, sites / 2) / 2, cfg.dim_cap)?;
        for &g in &cfg.g {
            for &d in &cfg.disorder {
                let label = format!("gap_ratio_L{sites}_g{}_D{}", fmt(g), fmt(d));
                let spec = HamiltonianSpec::chain(sites, cfg.j, g, vec![0.0; sites / 2], cfg.boundary)?;
                let model = DisorderModel::uniform(d, cfg.seed, cfg.samples)?;
                let summary = run_gap_ratio(&spec, &model, &GapRatioOptions::default(), &ctx.options(&label), true)?;
                ctx.finish_checkpoint(&label);
                log::info!("L={sites} g={g} D={d}: r = {:.4} ± {:.4}", summary.mean, summary.stderr);

                let values: Vec<f64> = summary.per_sample.iter().flat_map(|s| s.values.iter().copied()).collect();
                let hist = histogram(&values, HISTOGRAM_BINS)?;
                let hist_name = format!("{label}_hist.csv");
                let mut w = ctx.csv(&hist_name)?;
                w.write_record(["r_lo", "r_hi", "count", "density"])?;
                for (k, density) in hist.density().iter().enumerate() {
                    w.write_record([fmt(hist.edges[k]), fmt(hist.edges[k + 1]), hist.counts[k].to_string(), fmt(*density)])?;
                }
                w.flush()?;

                rows.push((
                    g,
                    GapRatioRow {
                        disorder: d,
                        sites,
                        n_samples: summary.n_samples,
                        mean_r: summary.mean,
                        stderr_r: summary.stderr,
                        dropped_fraction: summary.dropped_fraction,
                    },
                ));
                ctx.runs.push(RunRecord {
                    label,
                    spec,
                    model: Some(model),
                    fingerprint: Some(summary.fingerprint),
                    status: summary.status,
                    outputs: vec!["gap_ratio.csv".into(), hist_name],
                });
            }
        }
    }
    let mut w = ctx.csv("gap_ratio.csv")?;
    w.write_record(["g", "D", "L", "n_samples", "mean_r", "stderr_r", "dropped_fraction"])?;
    for (g, r) in rows {
        w.write_record([
            fmt(g),
            fmt(r.disorder),
            r.sites.to_string(),
            r.n_samples.to_string(),
            fmt(r.mean_r),
            fmt(r.stderr_r),
            fmt(r.dropped_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_series(ctx: &RunContext, name: &str, s: &AggregatedSeries) -> anyhow::Result<()> {
    let mut w = ctx.csv(name)?;
    let mut header = vec!["t".to_string()];
    for c in &s.columns {
        header.push(c.clone());
        header.push(format!("{c}_stderr"));
    }
    w.write_record(&header)?;
    for (k, t) in s.times.iter().enumerate() {
        let mut row = vec![fmt(*t)];
        for c in 0..s.columns.len() {
            row.push(fmt(s.mean[k][c]));
            row.push(fmt(s.stderr[k][c]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn quench(ctx: &mut RunContext) -> anyhow::Result<()> {
    let cfg = ctx.cfg.clone();
    let grid = cfg.time_grid()?;
    let observables = match cfg.experiment {
        Experiment::Entropy => ObservableSet::entropy_only(),
        Experiment::Metastability => ObservableSet {
            order_parameter: true,
            ..ObservableSet::entropy_only()
        },
        _ => ObservableSet::all(),
    };
    let points: Vec<(String, DisorderModel)> = if cfg.h.is_empty() {
        cfg.disorder
            .iter()
            .map(|&d| Ok((format!("D{}", fmt(d)), DisorderModel::uniform(d, cfg.seed, cfg.samples)?)))
            .collect::<ladder_ed::Result<_>>()?
    } else {
        cfg.h
            .iter()
            .map(|&h| Ok((format!("h{}", fmt(h)), DisorderModel::constant(h, cfg.samples)?)))
            .collect::<ladder_ed::Result<_>>()?
    };
    for &sites in &cfg.sites {
        check_dim("zero-magnetization sector", binomial(sites, sites / 2), cfg.dim_cap)?;
        for &g in &cfg.g {
            for (tag, model) in &points {
                let label = format!("L{sites}_g{}_{tag}", fmt(g));
                let exp = QuenchExperiment {
                    spec: HamiltonianSpec::chain(sites, cfg.j, g, vec![0.0; sites / 2], cfg.boundary)?,
                    grid: grid.clone(),
                    observables,
                    normalization: Default::default(),
                    log_base: LogBase::Nats,
                };
                let result = run_quench(&exp, model, &ctx.options(&label))?;
                ctx.finish_checkpoint(&label);
                let mut outputs = Vec::new();
                for s in &result.series {
                    let name = format!("{}_{label}.csv", s.name);
                    write_series(ctx, &name, s)?;
                    outputs.push(name);
                }
                log::info!("{label}: {} samples done", result.n_samples);
                ctx.runs.push(RunRecord {
                    label,
                    spec: exp.spec,
                    model: Some(*model),
                    fingerprint: Some(result.fingerprint),
                    status: result.status,
                    outputs,
                });
            }
        }
    }
    Ok(())
}

fn sq_system(cfg: &ExperimentConfig, sites: usize, h: f64) -> anyhow::Result<(HamiltonianSpec, SingleQuasiparticleSystem)> {
    if cfg.boundary == Boundary::Periodic {
        return Err(Error::Unsupported("the single-quasiparticle model uses open boundaries".into()).into());
    }
    let g = cfg.g[0];
    if cfg.g.len() > 1 {
        log::warn!("single-quasiparticle runs use only g = {g}");
    }
    let spec = HamiltonianSpec::single_quasiparticle(sites, cfg.j, g, h)?;
    let system = SingleQuasiparticleSystem::new(&spec, cfg.dim_cap)?;
    Ok((spec, system))
}

fn occupation(ctx: &mut RunContext) -> anyhow::Result<()> {
    let cfg = ctx.cfg.clone();
    let grid = cfg.time_grid()?;
    for &sites in &cfg.sites {
        for &h in &cfg.h {
            let label = format!("occupation_L{sites}_h{}", fmt(h));
            let (spec, sys) = sq_system(&cfg, sites, h)?;
            let psi0 = localized_state(&sys.basis, sites / 2)?;
            let occ = SiteOccupation::new(sys.basis.clone());
            let series = evolve_expectations(&sys.propagator, &psi0, &grid, &[&occ])?;
            let s = &series[0];
            let name = format!("{label}.csv");
            let mut w = ctx.csv(&name)?;
            let mut header = vec!["t".to_string()];
            header.extend(s.columns.iter().cloned());
            w.write_record(&header)?;
            for (k, t) in s.times.iter().enumerate() {
                let mut row = vec![fmt(*t)];
                row.extend(s.values[k].iter().map(|v| fmt(*v)));
                w.write_record(&row)?;
            }
            w.flush()?;
            ctx.runs.push(RunRecord {
                label,
                spec,
                model: None,
                fingerprint: None,
                status: vec![],
                outputs: vec![name],
            });
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PotentialSummary<'a> {
    sites: usize,
    h: f64,
    window: (f64, f64),
    averages: &'a [ladder_ed::rotframe::SiteAverage],
    /// Sites whose mean differs from all others by more than 2 combined
    /// standard errors.
    distinct_sites: Vec<usize>,
}

fn potential(ctx: &mut RunContext) -> anyhow::Result<()> {
    let cfg = ctx.cfg.clone();
    let grid = cfg.time_grid()?;
    let window = cfg.averaging_window()?;
    for &sites in &cfg.sites {
        for &h in &cfg.h {
            let label = format!("potential_L{sites}_h{}", fmt(h));
            let (spec, sys) = sq_system(&cfg, sites, h)?;
            let psi0 = localized_state(&sys.basis, sites / 2)?;
            let pot = emergent_potential_series(&sys, &psi0, &grid, window)?;
            let name = format!("{label}.csv");
            let mut w = ctx.csv(&name)?;
            w.write_record(["t", "site", "M_jj", "valid"])?;
            for (t, row) in pot.times.iter().zip(&pot.diagonal) {
                for (j, v) in row.iter().enumerate() {
                    let (value, valid) = match v {
                        Some(x) => (fmt(*x), "1"),
                        None => (String::new(), "0"),
                    };
                    w.write_record([fmt(*t), (j + 1).to_string(), value, valid.into()])?;
                }
            }
            w.flush()?;
            let summary_name = format!("{label}.json");
            let summary = PotentialSummary {
                sites,
                h,
                window,
                averages: &pot.averages,
                distinct_sites: pot.distinct_sites(2.0),
            };
            fs::write(ctx.out.join(&summary_name), serde_json::to_string_pretty(&summary)?)?;
            ctx.runs.push(RunRecord {
                label,
                spec,
                model: None,
                fingerprint: None,
                status: vec![],
                outputs: vec![name, summary_name],
            });
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DualityEntry {
    #[serde(rename = "L")]
    sites: usize,
    #[serde(rename = "D")]
    disorder: f64,
    sample: usize,
    fields: Vec<f64>,
    report: DualityReport,
}

fn duality(ctx: &mut RunContext) -> anyhow::Result<()> {
    let cfg = ctx.cfg.clone();
    let mut entries = Vec::new();
    let mut w = ctx.csv("duality.csv")?;
    w.write_record(["L", "D", "sample", "max_mismatch", "structural_mismatch", "max_moment_deviation"])?;
    for &sites in &cfg.sites {
        check_dim("ladder", 1usize << sites.min(62), cfg.dim_cap)?;
        for &d in &cfg.disorder {
            let model = DisorderModel::uniform(d, cfg.seed, cfg.samples)?;
            for sample in 0..cfg.samples {
                let fields = model.draw_fields(sample, sites / 2)?;
                let report = verify_duality(sites, cfg.j, cfg.g[0], &fields)?;
                w.write_record([
                    sites.to_string(),
                    fmt(d),
                    sample.to_string(),
                    report.max_mismatch.map_or_else(|| "nan".into(), fmt),
                    report.structural_mismatch.to_string(),
                    fmt(report.max_moment_deviation()),
                ])?;
                entries.push(DualityEntry {
                    sites,
                    disorder: d,
                    sample,
                    fields,
                    report,
                });
            }
            ctx.runs.push(RunRecord {
                label: format!("duality_L{sites}_D{}", fmt(d)),
                spec: HamiltonianSpec::ladder(sites, cfg.j, cfg.g[0], vec![0.0; sites / 2])?,
                model: Some(model),
                fingerprint: None,
                status: vec![],
                outputs: vec!["duality.csv".into(), "duality.json".into()],
            });
        }
    }
    w.flush()?;
    let worst = entries
        .iter()
        .map(|e| e.report.max_mismatch.unwrap_or(f64::INFINITY))
        .fold(0.0f64, f64::max);
    log::info!("duality: {} draws, worst mismatch {worst:.2e}", entries.len());
    fs::write(ctx.out.join("duality.json"), serde_json::to_string_pretty(&entries)?)?;
    Ok(())
}
