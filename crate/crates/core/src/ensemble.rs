//! Disorder sampling, scheduling-independent execution over samples and
//! aggregation into means and standard errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve_expectations, Correlators, CorrelatorNormalization, Cut, HalfChainEntropy, LogBase, Observable,
    ObservableSeries, OrderParameter, Populations, Propagator, TimeGrid,
};
use crate::error::{param, Error, Result};
use crate::hamiltonians::{build_chain, HamiltonianSpec, Variant};
use crate::hilbert::{neel_state, QuasiparticleTable, SpinBasis, SymmetrySector};
use crate::spectra::{diagonalize, sample_gap_ratio, sector_blocks, GapRatioOptions, SampleGapRatio, SectorPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisorderKind {
    /// `h_i` uniform in `[−D/2, D/2]`.
    UniformBox { strength: f64 },
    /// Every `h_i` equal to `value`.
    Constant { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderModel {
    #[serde(flatten)]
    pub kind: DisorderKind,
    pub master_seed: u64,
    pub n_samples: usize,
}

impl DisorderModel {
    pub fn uniform(strength: f64, master_seed: u64, n_samples: usize) -> Result<Self> {
        let m = DisorderModel {
            kind: DisorderKind::UniformBox { strength },
            master_seed,
            n_samples,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn constant(value: f64, n_samples: usize) -> Result<Self> {
        let m = DisorderModel {
            kind: DisorderKind::Constant { value },
            master_seed: 0,
            n_samples,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return param("need at least one sample");
        }
        match self.kind {
            DisorderKind::UniformBox { strength } if !(strength >= 0.0 && strength.is_finite()) => {
                param(format!("disorder strength {strength} must be finite and non-negative"))
            }
            DisorderKind::Constant { value } if !value.is_finite() => param("constant field must be finite"),
            _ => Ok(()),
        }
    }

    /// Fields of sample `index`: a pure function of `(master_seed, index)`.
    ///
    /// Each sample reads its own ChaCha20 stream, so the field on site `i`
    /// is the `i`-th draw of stream `index`.
    pub fn draw_fields(&self, index: usize, count: usize) -> Result<Vec<f64>> {
        if index >= self.n_samples {
            return param(format!("sample {index} out of range ({} samples)", self.n_samples));
        }
        Ok(match self.kind {
            DisorderKind::Constant { value } => vec![value; count],
            DisorderKind::UniformBox { strength } => {
                let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
                rng.set_stream(index as u64);
                (0..count)
                    .map(|_| strength * (rng.random::<f64>() - 0.5))
                    .collect()
            }
        })
    }

    pub fn strength(&self) -> f64 {
        match self.kind {
            DisorderKind::UniformBox { strength } => strength,
            DisorderKind::Constant { value } => value,
        }
    }
}

/// Worker pool size and checkpointing for [`run_samples`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// 0 means one worker per available core.
    pub workers: usize,
    /// JSON file holding finished samples; read on start, rewritten as
    /// samples complete.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Done,
    Retried,
    Failed,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint<T> {
    fingerprint: String,
    samples: BTreeMap<usize, T>,
    status: BTreeMap<usize, SampleStatus>,
    #[serde(default)]
    failure: Option<String>,
}

/// 64-bit FNV-1a of a string, used to tie checkpoints to their inputs.
pub fn fingerprint(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn read_checkpoint<T: DeserializeOwned>(path: &Path, fingerprint: &str) -> Result<Option<Checkpoint<T>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cp: Checkpoint<T> = serde_json::from_str(&text)?;
    if cp.fingerprint != fingerprint {
        return param(format!(
            "checkpoint {} belongs to a different run ({} vs {fingerprint})",
            path.display(),
            cp.fingerprint
        ));
    }
    Ok(Some(cp))
}

fn write_checkpoint<T: Serialize>(path: &Path, cp: &Checkpoint<T>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string(cp)?;
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn attempt<T>(f: &(impl Fn(usize) -> Result<T> + Sync), index: usize) -> std::result::Result<T, String> {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(index))) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

type Finished<T> = (usize, std::result::Result<(T, SampleStatus), String>);

fn run_one<T>(f: &(impl Fn(usize) -> Result<T> + Sync), index: usize) -> Finished<T> {
    let out = match attempt(f, index) {
        Ok(v) => Ok((v, SampleStatus::Done)),
        Err(first) => {
            log::warn!("sample {index} failed ({first}); retrying once");
            attempt(f, index).map(|v| (v, SampleStatus::Retried))
        }
    };
    (index, out)
}

fn map_batch<T: Send>(
    batch: &[usize],
    f: &(impl Fn(usize) -> Result<T> + Sync),
    workers: usize,
) -> Result<Vec<Finished<T>>> {
    #[cfg(feature = "parallel")]
    if workers != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
        return Ok(pool.install(|| batch.par_iter().map(|&i| run_one(f, i)).collect()));
    }
    let _ = workers;
    Ok(batch.iter().map(|&i| run_one(f, i)).collect())
}

/// Runs `f` on every sample index in `0..n_samples` and returns the results
/// in index order.
///
/// A failing sample is retried once; a second failure aborts the run after
/// recording the finished samples and the failure in the checkpoint.
pub fn run_samples<T, F>(n_samples: usize, key: &str, options: &RunOptions, f: F) -> Result<Vec<T>>
where
    T: Serialize + DeserializeOwned + Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    Ok(run_samples_with_status(n_samples, key, options, f)?.0)
}

/// [`run_samples`], also returning how each sample finished.
pub fn run_samples_with_status<T, F>(n_samples: usize, key: &str, options: &RunOptions, f: F) -> Result<(Vec<T>, Vec<SampleStatus>)>
where
    T: Serialize + DeserializeOwned + Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let print = fingerprint(key);
    let mut cp = match &options.checkpoint {
        Some(path) => read_checkpoint(path, &print)?,
        None => None,
    }
    .unwrap_or_else(|| Checkpoint {
        fingerprint: print.clone(),
        samples: BTreeMap::new(),
        status: BTreeMap::new(),
        failure: None,
    });
    cp.failure = None;
    let missing: Vec<usize> = (0..n_samples).filter(|i| !cp.samples.contains_key(i)).collect();
    if missing.len() < n_samples {
        log::info!("resuming: {} of {n_samples} samples already done", n_samples - missing.len());
    }
    let workers = if options.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        options.workers
    };
    let batch_size = if options.checkpoint.is_some() { (4 * workers).max(8) } else { missing.len().max(1) };
    for batch in missing.chunks(batch_size) {
        let mut failure = None;
        for (index, out) in map_batch(batch, &f, workers)? {
            match out {
                Ok((v, status)) => {
                    cp.samples.insert(index, v);
                    cp.status.insert(index, status);
                }
                Err(reason) => {
                    cp.status.insert(index, SampleStatus::Failed);
                    failure.get_or_insert((index, reason));
                }
            }
        }
        if let Some((index, reason)) = failure {
            cp.failure = Some(format!("sample {index}: {reason}"));
            if let Some(path) = &options.checkpoint {
                write_checkpoint(path, &cp)?;
            }
            return Err(Error::SampleFailed { index, reason });
        }
        if let Some(path) = &options.checkpoint {
            write_checkpoint(path, &cp)?;
        }
    }
    Ok((cp.samples.into_values().collect(), cp.status.into_values().collect()))
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Mean and standard error of the mean (`n − 1` variance; 0 for one value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedSeries {
    pub name: String,
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// `[time][column]`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl AggregatedSeries {
    pub fn mean_column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|x| x == name)?;
        Some(self.mean.iter().map(|row| row[c]).collect())
    }

    pub fn stderr_column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|x| x == name)?;
        Some(self.stderr.iter().map(|row| row[c]).collect())
    }
}

/// Aggregates per-sample series (all with identical layout).
pub fn aggregate(samples: &[Vec<ObservableSeries>]) -> Result<Vec<AggregatedSeries>> {
    let first = samples.first().ok_or_else(|| Error::Parameter("no samples to aggregate".into()))?;
    let mut out = Vec::with_capacity(first.len());
    for (o, template) in first.iter().enumerate() {
        let rows = template.values.len();
        let cols = template.columns.len();
        let mut mean = vec![vec![0.0; cols]; rows];
        let mut stderr = vec![vec![0.0; cols]; rows];
        let mut buf = Vec::with_capacity(samples.len());
        for r in 0..rows {
            for c in 0..cols {
                buf.clear();
                for s in samples {
                    let series = s.get(o).filter(|x| x.name == template.name && x.values.len() == rows);
                    let series = series.ok_or_else(|| Error::Parameter("samples disagree on layout".into()))?;
                    buf.push(series.values[r][c]);
                }
                (mean[r][c], stderr[r][c]) = mean_stderr(&buf);
            }
        }
        out.push(AggregatedSeries {
            name: template.name.clone(),
            columns: template.columns.clone(),
            times: template.times.clone(),
            mean,
            stderr,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub series: Vec<AggregatedSeries>,
    pub n_samples: usize,
    pub master_seed: u64,
    pub fingerprint: String,
    pub status: Vec<SampleStatus>,
    /// Per-sample data, kept for sample-level statistics.
    #[serde(skip)]
    pub samples: Vec<Vec<ObservableSeries>>,
}

impl EnsembleResult {
    pub fn series(&self, name: &str) -> Option<&AggregatedSeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// Which observables a quench run records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservableSet {
    pub entropy: bool,
    pub populations: bool,
    pub correlators: bool,
    pub order_parameter: bool,
}

impl ObservableSet {
    pub fn entropy_only() -> Self {
        ObservableSet {
            entropy: true,
            populations: false,
            correlators: false,
            order_parameter: false,
        }
    }

    pub fn all() -> Self {
        ObservableSet {
            entropy: true,
            populations: true,
            correlators: true,
            order_parameter: true,
        }
    }
}

/// A Néel quench of the chain, repeated over disorder samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchExperiment {
    /// Chain spec; its fields are replaced sample by sample.
    pub spec: HamiltonianSpec,
    pub grid: TimeGrid,
    pub observables: ObservableSet,
    pub normalization: CorrelatorNormalization,
    pub log_base: LogBase,
}

/// Shared, sample-independent data of a quench run.
pub struct QuenchContext {
    experiment: QuenchExperiment,
    target: Arc<SpinBasis>,
    blocks: Vec<Arc<SpinBasis>>,
    psi0: Vec<f64>,
    observables: Vec<Box<dyn Observable>>,
}

impl QuenchContext {
    pub fn new(experiment: &QuenchExperiment) -> Result<Self> {
        if experiment.spec.variant != Variant::Chain {
            return param("quench experiments evolve the chain variant");
        }
        let sites = experiment.spec.sites;
        let target = Arc::new(SpinBasis::enumerate(sites, SymmetrySector::zero_magnetization())?);
        // the chain commutes with the global spin flip for either boundary
        let blocks = sector_blocks(sites, SectorPolicy::ParityResolved)?;
        let psi0 = neel_state(&target)?;
        let table = Arc::new(QuasiparticleTable::new(&target)?);
        let set = experiment.observables;
        let mut observables: Vec<Box<dyn Observable>> = Vec::new();
        if set.entropy {
            observables.push(Box::new(HalfChainEntropy::new(&target, Cut::Left, experiment.log_base)?));
        }
        if set.populations {
            observables.push(Box::new(Populations::new(table.clone())));
        }
        if set.correlators {
            observables.push(Box::new(Correlators::new(&table, experiment.normalization)));
        }
        if set.order_parameter && table.pairs() >= 2 {
            observables.push(Box::new(OrderParameter::new(&table, experiment.normalization)?));
        }
        Ok(QuenchContext {
            experiment: experiment.clone(),
            target,
            blocks,
            psi0,
            observables,
        })
    }

    /// One realization with the given fields.
    pub fn run(&self, fields: Vec<f64>) -> Result<Vec<ObservableSeries>> {
        let spec = self.experiment.spec.with_fields(fields)?;
        let mut decomps = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let h = build_chain(&spec, b)?;
            decomps.push(diagonalize(&h, &format!("{:?}", b.sector()))?);
        }
        let pairs: Vec<(&SpinBasis, &_)> = self.blocks.iter().map(|b| &**b).zip(decomps.iter()).collect();
        let prop = Propagator::from_blocks(&self.target, &pairs)?;
        let refs: Vec<&dyn Observable> = self.observables.iter().map(|o| &**o).collect();
        evolve_expectations(&prop, &self.psi0, &self.experiment.grid, &refs)
    }
}

fn run_key(what: &str, payload: &impl Serialize, model: &DisorderModel) -> Result<String> {
    Ok(format!("{what}|{}|{}", serde_json::to_string(payload)?, serde_json::to_string(model)?))
}

/// Disorder-averaged quench dynamics.
pub fn run_quench(experiment: &QuenchExperiment, model: &DisorderModel, options: &RunOptions) -> Result<EnsembleResult> {
    model.validate()?;
    let ctx = QuenchContext::new(experiment)?;
    let key = run_key("quench", experiment, model)?;
    let pairs = experiment.spec.sites / 2;
    let (samples, status) = run_samples_with_status(model.n_samples, &key, options, |i| ctx.run(model.draw_fields(i, pairs)?))?;
    Ok(EnsembleResult {
        series: aggregate(&samples)?,
        n_samples: model.n_samples,
        master_seed: model.master_seed,
        fingerprint: fingerprint(&key),
        status,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatioSummary {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub dropped_fraction: f64,
    pub fingerprint: String,
    pub status: Vec<SampleStatus>,
    pub per_sample: Vec<SampleGapRatio>,
}

/// Disorder-averaged mean gap ratio: the per-sample mean over all retained
/// ratios of all blocks, averaged over samples.
pub fn run_gap_ratio(
    spec: &HamiltonianSpec,
    model: &DisorderModel,
    gap: &GapRatioOptions,
    options: &RunOptions,
    keep_values: bool,
) -> Result<GapRatioSummary> {
    model.validate()?;
    let blocks = sector_blocks(spec.sites, gap.policy)?;
    let key = run_key("gap_ratio", &(spec, gap, keep_values), model)?;
    let pairs = spec.sites / 2;
    let (per_sample, status) = run_samples_with_status(model.n_samples, &key, options, |i| {
        let s = spec.with_fields(model.draw_fields(i, pairs)?)?;
        sample_gap_ratio(&s, &blocks, gap, keep_values)
    })?;
    let means: Vec<f64> = per_sample.iter().map(|s| s.mean).collect();
    let (mean, stderr) = mean_stderr(&means);
    let retained: usize = per_sample.iter().map(|s| s.retained).sum();
    let dropped: usize = per_sample.iter().map(|s| s.dropped).sum();
    Ok(GapRatioSummary {
        mean,
        stderr,
        n_samples: model.n_samples,
        dropped_fraction: dropped as f64 / (retained + dropped).max(1) as f64,
        fingerprint: fingerprint(&key),
        status,
        per_sample,
    })
}
