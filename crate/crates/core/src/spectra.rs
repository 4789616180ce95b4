//! Dense symmetric eigendecomposition and adjacent-gap-ratio statistics.

use std::sync::Arc;

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::hamiltonians::{build_chain, DenseHamiltonian, HamiltonianSpec, Variant};
use crate::hilbert::{Parity, SpinBasis, SymmetrySector};

/// Mean gap ratio of uncorrelated (Poissonian) levels, `2 ln 2 − 1`.
pub fn poisson_mean_r() -> f64 {
    2.0 * std::f64::consts::LN_2 - 1.0
}

/// Mean gap ratio of the Gaussian orthogonal ensemble. Checked against
/// [`goe_oracle`] in the test suite before anything relies on it.
pub const GOE_MEAN_R: f64 = 0.5307;

#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the basis order of the input.
    pub eigenvectors: Mat<f64>,
    pub label: String,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn spectral_range(&self) -> f64 {
        match (self.eigenvalues.first(), self.eigenvalues.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// max_n ‖H v_n − E_n v_n‖.
    pub fn max_residual(&self, h: &Mat<f64>) -> f64 {
        let hv = h * &self.eigenvectors;
        let mut worst = 0.0f64;
        for n in 0..self.dim() {
            let e = self.eigenvalues[n];
            let r: f64 = (0..self.dim())
                .map(|i| (hv[(i, n)] - e * self.eigenvectors[(i, n)]).powi(2))
                .sum();
            worst = worst.max(r.sqrt());
        }
        worst
    }

    /// max |VᵀV − 1|.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self.eigenvectors.transpose() * &self.eigenvectors;
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

pub fn diagonalize(h: &DenseHamiltonian, label: &str) -> Result<SpectralDecomposition> {
    diagonalize_matrix(&h.matrix, label)
}

pub fn diagonalize_matrix(m: &Mat<f64>, label: &str) -> Result<SpectralDecomposition> {
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numeric {
        block: label.to_string(),
        reason: format!("{e:?}"),
    })?;
    let eigenvalues: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    if eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric {
            block: label.to_string(),
            reason: "non-finite eigenvalue".into(),
        });
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: evd.U().to_owned(),
        label: label.to_string(),
    })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(m: &Mat<f64>, label: &str) -> Result<Vec<f64>> {
    let values = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Numeric {
        block: label.to_string(),
        reason: format!("{e:?}"),
    })?;
    if values.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numeric {
            block: label.to_string(),
            reason: "non-finite eigenvalue".into(),
        });
    }
    Ok(values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatioSample {
    pub values: Vec<f64>,
    pub block_label: String,
    /// Interior levels whose larger neighbouring spacing fell below the
    /// degeneracy tolerance.
    pub dropped: usize,
}

impl GapRatioSample {
    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
        }
    }
}

/// `r_n = min(δ_n, δ_{n−1}) / max(δ_n, δ_{n−1})` for every interior level.
///
/// `degeneracy_tol` defaults to `1e−10` times the spectral range.
pub fn gap_ratios(spectrum: &[f64], degeneracy_tol: Option<f64>, label: &str) -> Result<GapRatioSample> {
    if spectrum.len() < 3 {
        return param(format!("need at least three levels, got {}", spectrum.len()));
    }
    if spectrum.windows(2).any(|w| !(w[1] >= w[0])) {
        return param("spectrum must be sorted ascending");
    }
    let range = spectrum[spectrum.len() - 1] - spectrum[0];
    let tol = degeneracy_tol.unwrap_or(1e-10 * range);
    let mut values = Vec::with_capacity(spectrum.len() - 2);
    let mut dropped = 0;
    for w in spectrum.windows(3) {
        let (a, b) = (w[1] - w[0], w[2] - w[1]);
        let hi = a.max(b);
        if hi < tol || hi == 0.0 {
            dropped += 1;
            continue;
        }
        values.push(a.min(b) / hi);
    }
    Ok(GapRatioSample {
        values,
        block_label: label.to_string(),
        dropped,
    })
}

/// Keeps the central `fraction` of a sorted spectrum.
pub fn central_levels(spectrum: &[f64], fraction: f64) -> Result<&[f64]> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return param(format!("center fraction {fraction} outside (0, 1]"));
    }
    let n = spectrum.len();
    let keep = ((n as f64) * fraction).round() as usize;
    let start = (n - keep) / 2;
    Ok(&spectrum[start..start + keep])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorPolicy {
    /// Both parity blocks of the zero-magnetization sector, statistics pooled.
    ParityResolved,
    /// Zero-magnetization sector without parity resolution.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatioOptions {
    pub policy: SectorPolicy,
    pub min_block_dim: usize,
    pub center_fraction: Option<f64>,
    /// Degeneracy tolerance relative to each block's spectral range.
    pub relative_tolerance: f64,
}

impl Default for GapRatioOptions {
    fn default() -> Self {
        GapRatioOptions {
            policy: SectorPolicy::ParityResolved,
            min_block_dim: 20,
            center_fraction: None,
            relative_tolerance: 1e-10,
        }
    }
}

/// Symmetry blocks of the zero-magnetization sector for a policy.
pub fn sector_blocks(sites: usize, policy: SectorPolicy) -> Result<Vec<Arc<SpinBasis>>> {
    let parities: &[Parity] = match policy {
        SectorPolicy::ParityResolved => &[Parity::Even, Parity::Odd],
        SectorPolicy::Unresolved => &[Parity::Unresolved],
    };
    parities
        .iter()
        .map(|&p| Ok(Arc::new(SpinBasis::enumerate(sites, SymmetrySector::new(0, p)?)?)))
        .collect()
}

/// Gap-ratio statistics of one disorder realization, pooled over blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGapRatio {
    pub mean: f64,
    pub retained: usize,
    pub dropped: usize,
    pub skipped_blocks: Vec<String>,
    /// Individual ratios, kept only when histograms are requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

pub fn sample_gap_ratio(
    spec: &HamiltonianSpec,
    blocks: &[Arc<SpinBasis>],
    options: &GapRatioOptions,
    keep_values: bool,
) -> Result<SampleGapRatio> {
    if spec.variant != Variant::Chain {
        return param("gap-ratio statistics are computed for the chain variant");
    }
    let mut pooled = Vec::new();
    let mut dropped = 0;
    let mut skipped = Vec::new();
    for basis in blocks {
        let label = format!("{:?}", basis.sector());
        if basis.dim() < options.min_block_dim {
            log::warn!("skipping block {label}: dimension {} below {}", basis.dim(), options.min_block_dim);
            skipped.push(label);
            continue;
        }
        let h = build_chain(spec, basis)?;
        let levels = eigenvalues(&h.matrix, &label)?;
        let levels = match options.center_fraction {
            Some(f) => central_levels(&levels, f)?,
            None => &levels[..],
        };
        if levels.len() < 3 {
            skipped.push(label);
            continue;
        }
        let range = levels[levels.len() - 1] - levels[0];
        let sample = gap_ratios(levels, Some(options.relative_tolerance * range), &label)?;
        dropped += sample.dropped;
        pooled.extend(sample.values);
    }
    if pooled.is_empty() {
        return Err(Error::Numeric {
            block: "all".into(),
            reason: "no gap ratios retained".into(),
        });
    }
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    Ok(SampleGapRatio {
        mean,
        retained: pooled.len(),
        dropped,
        skipped_blocks: skipped,
        values: if keep_values { pooled } else { Vec::new() },
    })
}

/// One CSV row of disorder-averaged statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatioRow {
    #[serde(rename = "D")]
    pub disorder: f64,
    #[serde(rename = "L")]
    pub sites: usize,
    pub n_samples: usize,
    pub mean_r: f64,
    pub stderr_r: f64,
    pub dropped_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Normalized density per bin.
    pub fn density(&self) -> Vec<f64> {
        let total: u64 = self.counts.iter().sum();
        let width = 1.0 / self.counts.len() as f64;
        self.counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / (total as f64 * width) })
            .collect()
    }
}

/// Histogram of gap ratios on [0, 1].
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return param("histogram needs at least one bin");
    }
    let edges = (0..=bins).map(|k| k as f64 / bins as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return param(format!("gap ratio {v} outside [0, 1]"));
        }
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Mean and standard error of the gap ratio over `matrices` GOE draws of
/// dimension `dim`.
pub fn goe_oracle(matrices: usize, dim: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(matrices);
    for k in 0..matrices {
        let a = Mat::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let h = Mat::<f64>::from_fn(dim, dim, |i, j| a[(i, j)] + a[(j, i)]);
        let levels = eigenvalues(&h, &format!("goe-{k}"))?;
        let sample = gap_ratios(&levels, None, "goe")?;
        means.push(sample.mean().unwrap_or(0.0));
    }
    Ok(mean_and_stderr(&means))
}

/// Mean gap ratio of `spacings` independent exponential spacings.
pub fn poisson_oracle(spacings: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = Vec::with_capacity(spacings + 1);
    let mut e = 0.0;
    levels.push(e);
    for _ in 0..spacings {
        let s: f64 = Exp1.sample(&mut rng);
        e += s;
        levels.push(e);
    }
    let sample = gap_ratios(&levels, Some(0.0), "poisson")?;
    sample.mean().ok_or_else(|| Error::Parameter("no spacings".into()))
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
