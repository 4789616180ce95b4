//! Exact quench evolution through the spectral decomposition, plus the
//! observables evaluated along the way.
//!
//! `|Ψ(t)⟩ = V e^{−iEt} Vᵀ|Ψ(0)⟩` with a real eigenbasis `V` and a real
//! initial state, so the real and imaginary parts of a whole chunk of times
//! come out of two real matrix products.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::str::FromStr;
use std::sync::Arc;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::hamiltonians::SingleQuasiparticleBasis;
use crate::hilbert::{PairContent, QuasiparticleTable, SpinBasis};
use crate::spectra::SpectralDecomposition;

/// Time points evaluated per matrix product. Fixed so results never depend on
/// how chunks are scheduled.
const CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return param("time grid is empty");
        }
        if points.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return param("times must be finite and non-negative");
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return param("times must be strictly increasing");
        }
        Ok(TimeGrid { points })
    }

    /// `points_per_decade` log-spaced points from `tmin` to `tmax`, both included.
    pub fn log(tmin: f64, tmax: f64, points_per_decade: usize) -> Result<Self> {
        if !(tmin > 0.0 && tmax > tmin) || points_per_decade == 0 {
            return param(format!("bad log grid {tmin}:{tmax}:{points_per_decade}"));
        }
        let decades = (tmax / tmin).log10();
        let steps = ((decades * points_per_decade as f64).round() as usize).max(1);
        let (a, b) = (tmin.log10(), tmax.log10());
        let points = (0..=steps)
            .map(|k| match k {
                0 => tmin,
                k if k == steps => tmax,
                k => 10f64.powf(a + (b - a) * k as f64 / steps as f64),
            })
            .collect();
        TimeGrid::new(points)
    }

    pub fn linear(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t1 > t0) {
            return param("bad linear grid");
        }
        TimeGrid::new((0..=steps).map(|k| t0 + (t1 - t0) * k as f64 / steps as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Parses `tmin:tmax:points_per_decade`.
impl FromStr for TimeGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return param(format!("grid '{s}' is not tmin:tmax:ppd"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::Parameter(format!("bad number '{p}' in grid")));
        let ppd = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Parameter(format!("bad points per decade '{}'", parts[2])))?;
        TimeGrid::log(num(parts[0])?, num(parts[1])?, ppd)
    }
}

const TWO_PI_HI: f64 = TAU;
const TWO_PI_MID: f64 = 2.4492935982947064e-16;
const TWO_PI_LO: f64 = -5.989539619436679e-33;

/// `(e·t) mod 2π` in `[0, 2π)`, treating `e` and `t` as exact.
///
/// The product is split into a rounded part and its exact error, and 2π into
/// three pieces, so the result stays accurate to ~1e−12 for |e·t| up to 1e21.
pub fn reduce_phase(e: f64, t: f64) -> f64 {
    let p = e * t;
    if p.abs() < TAU {
        return p.rem_euclid(TAU);
    }
    let err = e.mul_add(t, -p);
    let k = (p / TWO_PI_HI).round();
    let mut r = (-k).mul_add(TWO_PI_HI, p);
    r = (-k).mul_add(TWO_PI_MID, r);
    r = (-k).mul_add(TWO_PI_LO, r);
    (r + err).rem_euclid(TAU)
}

/// Spectral propagator in a fixed observation basis.
#[derive(Clone, Debug)]
pub struct Propagator {
    energies: Vec<f64>,
    /// Eigenvectors expressed in the observation basis, one per column.
    vectors: Mat<f64>,
}

impl Propagator {
    pub fn from_decomposition(decomp: &SpectralDecomposition) -> Self {
        Propagator {
            energies: decomp.eigenvalues.clone(),
            vectors: decomp.eigenvectors.clone(),
        }
    }

    /// Combines symmetry blocks into a propagator on `target`, an unresolved
    /// basis containing every configuration of every block.
    pub fn from_blocks(target: &SpinBasis, blocks: &[(&SpinBasis, &SpectralDecomposition)]) -> Result<Self> {
        if target.is_parity_resolved() {
            return param("the observation basis must not be parity resolved");
        }
        let total: usize = blocks.iter().map(|(b, _)| b.dim()).sum();
        if total != target.dim() {
            return param(format!("blocks span {total} states, target has {}", target.dim()));
        }
        let mut vectors = Mat::<f64>::zeros(target.dim(), total);
        let mut energies = Vec::with_capacity(total);
        let mut col = 0;
        for (basis, decomp) in blocks {
            if decomp.dim() != basis.dim() {
                return param("decomposition does not match its block basis");
            }
            for k in 0..basis.dim() {
                for (bits, w) in basis.components(k) {
                    let row = target
                        .locate(bits)
                        .ok_or_else(|| Error::Parameter("block state missing from the target basis".into()))?
                        .index;
                    for n in 0..decomp.dim() {
                        vectors[(row, col + n)] += w * decomp.eigenvectors[(k, n)];
                    }
                }
            }
            energies.extend_from_slice(&decomp.eigenvalues);
            col += decomp.dim();
        }
        Ok(Propagator { energies, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Overlaps `Vᵀψ₀`.
    pub fn coefficients(&self, psi0: &[f64]) -> Result<Vec<f64>> {
        if psi0.len() != self.dim() {
            return param(format!("state has length {}, basis has {}", psi0.len(), self.dim()));
        }
        let v = &self.vectors;
        Ok((0..v.ncols())
            .map(|n| (0..v.nrows()).map(|i| v[(i, n)] * psi0[i]).sum())
            .collect())
    }

    /// Real and imaginary parts of `|Ψ(t)⟩` for a run of times, as
    /// `dim × times.len()` matrices.
    pub fn states(&self, coefficients: &[f64], times: &[f64]) -> (Mat<f64>, Mat<f64>) {
        let n = self.energies.len();
        let mut cos = Mat::<f64>::zeros(n, times.len());
        let mut sin = Mat::<f64>::zeros(n, times.len());
        for (c, &t) in times.iter().enumerate() {
            for (k, (&e, &a)) in self.energies.iter().zip(coefficients).enumerate() {
                if a == 0.0 {
                    continue;
                }
                let phase = reduce_phase(e, t);
                cos[(k, c)] = a * phase.cos();
                sin[(k, c)] = -a * phase.sin();
            }
        }
        (&self.vectors * &cos, &self.vectors * &sin)
    }

    /// Single state at time `t`, as complex amplitudes.
    pub fn state(&self, psi0: &[f64], t: f64) -> Result<Vec<c64>> {
        let a = self.coefficients(psi0)?;
        let (re, im) = self.states(&a, &[t]);
        Ok((0..self.dim()).map(|i| c64::new(re[(i, 0)], im[(i, 0)])).collect())
    }
}

/// A quantity evaluated on `|Ψ(t)⟩`.
pub trait Observable: Send + Sync {
    fn name(&self) -> &str;
    fn columns(&self) -> Vec<String>;
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub name: String,
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    /// One row per time.
    pub values: Vec<Vec<f64>>,
}

impl ObservableSeries {
    /// Values of one column over time.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[index]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.columns.iter().position(|c| c == name).map(|i| self.column(i))
    }
}

/// Evolves a real initial state and evaluates each observable on the grid.
pub fn evolve_expectations(
    propagator: &Propagator,
    psi0: &[f64],
    grid: &TimeGrid,
    observables: &[&dyn Observable],
) -> Result<Vec<ObservableSeries>> {
    let norm: f64 = psi0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return param(format!("initial state has norm {norm}"));
    }
    let a = propagator.coefficients(psi0)?;
    let chunks: Vec<&[f64]> = grid.points().chunks(CHUNK).collect();
    let eval_chunk = |times: &&[f64]| -> Vec<Vec<Vec<f64>>> {
        let (re, im) = propagator.states(&a, times);
        (0..times.len())
            .map(|c| {
                let (r, i) = (re.col(c), im.col(c));
                let r: Vec<f64> = r.iter().copied().collect();
                let i: Vec<f64> = i.iter().copied().collect();
                observables.iter().map(|o| o.evaluate(&r, &i)).collect()
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<Vec<Vec<f64>>>> = {
        use rayon::prelude::*;
        chunks.par_iter().map(eval_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<Vec<Vec<f64>>>> = chunks.iter().map(eval_chunk).collect();

    let mut series: Vec<ObservableSeries> = observables
        .iter()
        .map(|o| ObservableSeries {
            name: o.name().to_string(),
            columns: o.columns(),
            times: grid.points().to_vec(),
            values: Vec::with_capacity(grid.len()),
        })
        .collect();
    for per_time in rows.into_iter().flatten() {
        for (s, v) in series.iter_mut().zip(per_time) {
            s.values.push(v);
        }
    }
    Ok(series)
}

fn probabilities<'a>(re: &'a [f64], im: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    re.iter().zip(im).map(|(r, i)| r * r + i * i)
}

/// `⟨Ψ|Ψ⟩`.
pub struct Norm;

impl Observable for Norm {
    fn name(&self) -> &str {
        "norm"
    }
    fn columns(&self) -> Vec<String> {
        vec!["norm".into()]
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        vec![probabilities(re, im).sum()]
    }
}

/// `⟨Ψ|H|Ψ⟩` for a real symmetric `H`.
pub struct Energy {
    pub matrix: Mat<f64>,
}

impl Observable for Energy {
    fn name(&self) -> &str {
        "energy"
    }
    fn columns(&self) -> Vec<String> {
        vec!["energy".into()]
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let n = re.len();
        let mut e = 0.0;
        for j in 0..n {
            let col = self.matrix.col(j);
            let (mut hr, mut hi) = (0.0, 0.0);
            for i in 0..n {
                hr += col[i] * re[i];
                hi += col[i] * im[i];
            }
            e += re[j] * hr + im[j] * hi;
        }
        vec![e]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Nats,
    Bits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cut {
    /// Reduced state of sites 1..L/2.
    Left,
    /// Reduced state of sites L/2+1..L.
    Right,
}

/// Von Neumann entropy of half the chain, cut between sites L/2 and L/2+1.
pub struct HalfChainEntropy {
    base: LogBase,
    /// For each basis state: (block, row, column).
    slots: Vec<(usize, usize, usize)>,
    shapes: Vec<(usize, usize)>,
}

impl HalfChainEntropy {
    pub fn new(basis: &SpinBasis, cut: Cut, base: LogBase) -> Result<Self> {
        if basis.is_parity_resolved() {
            return param("entropy needs an unresolved basis");
        }
        let half = basis.sites() / 2;
        let mask = (1u32 << half) - 1;
        let mut blocks: HashMap<(u32, u32), usize> = HashMap::new();
        let mut rows: Vec<HashMap<u32, usize>> = Vec::new();
        let mut cols: Vec<HashMap<u32, usize>> = Vec::new();
        let mut slots = Vec::with_capacity(basis.dim());
        for &bits in basis.representatives() {
            let (mut a, mut b) = (bits & mask, bits >> half);
            if cut == Cut::Right {
                std::mem::swap(&mut a, &mut b);
            }
            let key = (a.count_ones(), b.count_ones());
            let next = blocks.len();
            let block = *blocks.entry(key).or_insert(next);
            if block == rows.len() {
                rows.push(HashMap::new());
                cols.push(HashMap::new());
            }
            let nr = rows[block].len();
            let r = *rows[block].entry(a).or_insert(nr);
            let nc = cols[block].len();
            let c = *cols[block].entry(b).or_insert(nc);
            slots.push((block, r, c));
        }
        let shapes = rows.iter().zip(&cols).map(|(r, c)| (r.len(), c.len())).collect();
        Ok(HalfChainEntropy { base, slots, shapes })
    }

    /// Entropy of a complex amplitude vector.
    pub fn entropy(&self, re: &[f64], im: &[f64]) -> f64 {
        let mut mats: Vec<Mat<c64>> = self.shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect();
        for (k, &(b, r, c)) in self.slots.iter().enumerate() {
            mats[b][(r, c)] = c64::new(re[k], im[k]);
        }
        let mut s = 0.0;
        for m in &mats {
            let values = if m.nrows() == 1 || m.ncols() == 1 {
                vec![m.norm_l2()]
            } else {
                m.singular_values().unwrap_or_else(|_| vec![m.norm_l2()])
            };
            for sv in values {
                let p = sv * sv;
                if p > 1e-14 {
                    s -= p * p.ln();
                }
            }
        }
        match self.base {
            LogBase::Nats => s,
            LogBase::Bits => s / std::f64::consts::LN_2,
        }
    }
}

impl Observable for HalfChainEntropy {
    fn name(&self) -> &str {
        "entropy"
    }
    fn columns(&self) -> Vec<String> {
        vec!["entropy".into()]
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        vec![self.entropy(re, im)]
    }
}

/// `P(2n)`, the weight in the sector with `2n` quasiparticles, for
/// `n = 0..=L/4`.
pub struct Populations {
    table: Arc<QuasiparticleTable>,
}

impl Populations {
    pub fn new(table: Arc<QuasiparticleTable>) -> Self {
        Populations { table }
    }
}

impl Observable for Populations {
    fn name(&self) -> &str {
        "populations"
    }
    fn columns(&self) -> Vec<String> {
        (0..self.table.sectors()).map(|n| format!("P{}", 2 * n)).collect()
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.table.sectors()];
        for (k, w) in probabilities(re, im).enumerate() {
            p[self.table.count(k) / 2] += w;
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelatorNormalization {
    /// `2/N̄` applied inside each quasiparticle sector; vacuum contributes 0.
    #[default]
    SectorInverse,
    /// `2/⟨N̄⟩` applied to the expectation value.
    MeanInverse,
}

/// Pair-resolved quasiparticle counts: for a basis state, the number of pairs
/// `i` (modulo L/2) with `x̄` at `i` and `ȳ` at `i + d`.
struct PairCounts {
    pairs: usize,
    /// `counts[((x * 2 + y) * pairs + d) * dim + k]`, d in 0..pairs.
    counts: Vec<u8>,
    totals: Vec<u8>,
    dim: usize,
}

impl PairCounts {
    fn new(table: &QuasiparticleTable) -> Self {
        let (pairs, dim) = (table.pairs(), table.dim());
        let mut counts = vec![0u8; 4 * pairs * dim];
        let kind = |c: PairContent| match c {
            PairContent::Quasi0 => Some(0),
            PairContent::Quasi1 => Some(1),
            _ => None,
        };
        for k in 0..dim {
            let contents = table.contents(k);
            for i in 0..pairs {
                let Some(x) = kind(contents[i]) else { continue };
                for d in 1..pairs {
                    if let Some(y) = kind(contents[(i + d) % pairs]) {
                        counts[((x * 2 + y) * pairs + d) * dim + k] += 1;
                    }
                }
            }
        }
        let totals = (0..dim).map(|k| table.count(k) as u8).collect();
        PairCounts {
            pairs,
            counts,
            totals,
            dim,
        }
    }

    fn correlator(&self, probs: &[f64], x: usize, y: usize, d: usize, norm: CorrelatorNormalization) -> f64 {
        let slice = &self.counts[((x * 2 + y) * self.pairs + d) * self.dim..][..self.dim];
        match norm {
            CorrelatorNormalization::SectorInverse => slice
                .iter()
                .zip(&self.totals)
                .zip(probs)
                .filter(|((_, &n), _)| n >= 2)
                .map(|((&c, &n), p)| p * 2.0 * c as f64 / n as f64)
                .sum(),
            CorrelatorNormalization::MeanInverse => {
                let mean_n: f64 = self.totals.iter().zip(probs).map(|(&n, p)| n as f64 * p).sum();
                if mean_n < 1e-300 {
                    return 0.0;
                }
                let raw: f64 = slice.iter().zip(probs).map(|(&c, p)| c as f64 * p).sum();
                2.0 * raw / mean_n
            }
        }
    }
}

/// `C_{x̄ȳ}(d)` for all `x, y ∈ {0, 1}` and `d = 1..L/2−1`, with the pair index
/// taken modulo L/2.
pub struct Correlators {
    counts: PairCounts,
    normalization: CorrelatorNormalization,
}

impl Correlators {
    pub fn new(table: &QuasiparticleTable, normalization: CorrelatorNormalization) -> Self {
        Correlators {
            counts: PairCounts::new(table),
            normalization,
        }
    }

    pub fn value(&self, probs: &[f64], x: usize, y: usize, d: usize) -> f64 {
        self.counts.correlator(probs, x, y, d, self.normalization)
    }

    pub fn column_name(x: usize, y: usize, d: usize) -> String {
        format!("C{x}{y}_d{d}")
    }
}

impl Observable for Correlators {
    fn name(&self) -> &str {
        "correlators"
    }
    fn columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for d in 1..self.counts.pairs {
                    out.push(Self::column_name(x, y, d));
                }
            }
        }
        out
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let probs: Vec<f64> = probabilities(re, im).collect();
        let mut out = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                for d in 1..self.counts.pairs {
                    out.push(self.value(&probs, x, y, d));
                }
            }
        }
        out
    }
}

/// `𝒞 = Σ_{d=1}^{⌊L/4⌋} [C_{0̄1̄}(d) − C_{1̄0̄}(d)]`.
pub struct OrderParameter {
    counts: PairCounts,
    normalization: CorrelatorNormalization,
}

impl OrderParameter {
    pub fn new(table: &QuasiparticleTable, normalization: CorrelatorNormalization) -> Result<Self> {
        if table.pairs() < 2 {
            return param("the order parameter needs at least four sites");
        }
        Ok(OrderParameter {
            counts: PairCounts::new(table),
            normalization,
        })
    }

    pub fn value(&self, probs: &[f64]) -> f64 {
        (1..=self.counts.pairs / 2)
            .map(|d| {
                self.counts.correlator(probs, 0, 1, d, self.normalization)
                    - self.counts.correlator(probs, 1, 0, d, self.normalization)
            })
            .sum()
    }
}

impl Observable for OrderParameter {
    fn name(&self) -> &str {
        "order_parameter"
    }
    fn columns(&self) -> Vec<String> {
        vec!["order_parameter".into()]
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let probs: Vec<f64> = probabilities(re, im).collect();
        vec![self.value(&probs)]
    }
}

/// `⟨N̄_i⟩` for every site of the single-quasiparticle model.
pub struct SiteOccupation {
    basis: Arc<SingleQuasiparticleBasis>,
}

impl SiteOccupation {
    pub fn new(basis: Arc<SingleQuasiparticleBasis>) -> Self {
        SiteOccupation { basis }
    }
}

impl Observable for SiteOccupation {
    fn name(&self) -> &str {
        "occupation"
    }
    fn columns(&self) -> Vec<String> {
        (1..=self.basis.sites()).map(|i| format!("N{i}")).collect()
    }
    fn evaluate(&self, re: &[f64], im: &[f64]) -> Vec<f64> {
        let mut n = vec![0.0; self.basis.sites()];
        for (k, w) in probabilities(re, im).enumerate() {
            n[self.basis.state(k).0] += w;
        }
        n
    }
}

/// Least-squares fit `y = a + b ln t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits the points with `t0 ≤ t ≤ t1`.
pub fn log_fit(times: &[f64], values: &[f64], t0: f64, t1: f64) -> Result<LogFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0 * (1.0 - 1e-12) && **t <= t1 * (1.0 + 1e-12) && **t > 0.0)
        .map(|(t, v)| (t.ln(), *v))
        .collect();
    if pts.len() < 3 {
        return param(format!("only {} points in the fit window [{t0}, {t1}]", pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogFit {
        intercept,
        slope,
        r_squared,
        points: pts.len(),
    })
}

/// Linear interpolation in `ln t`.
pub fn interpolate_log(times: &[f64], values: &[f64], t: f64) -> Result<f64> {
    if times.is_empty() || t < times[0] || t > times[times.len() - 1] {
        return param(format!("time {t} outside the series"));
    }
    let k = times.partition_point(|&x| x < t);
    if times[k] == t || k == 0 {
        return Ok(values[k]);
    }
    let (t0, t1) = (times[k - 1].ln(), times[k].ln());
    let w = (t.ln() - t0) / (t1 - t0);
    Ok(values[k - 1] * (1.0 - w) + values[k] * w)
}

/// Whether `|S(t_a) − S(t_b)| < tolerance · |S(t_b)|`.
pub fn saturated(times: &[f64], values: &[f64], t_a: f64, t_b: f64, tolerance: f64) -> Result<(bool, f64, f64)> {
    let a = interpolate_log(times, values, t_a)?;
    let b = interpolate_log(times, values, t_b)?;
    Ok(((a - b).abs() < tolerance * b.abs(), a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub start: f64,
    pub end: f64,
    pub mean: f64,
    /// |fitted change across the window| / |mean|.
    pub drift: f64,
}

/// Flattest window spanning `decades` decades in which `|y|` stays above
/// `floor_fraction · max|y|` and the relative drift is below `flatness`.
pub fn find_plateau(times: &[f64], values: &[f64], decades: f64, flatness: f64, floor_fraction: f64) -> Option<Plateau> {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return None;
    }
    let mut best: Option<Plateau> = None;
    for i in 0..times.len() {
        if times[i] <= 0.0 {
            continue;
        }
        let end = times[i] * 10f64.powf(decades);
        let Some(j) = times.iter().rposition(|&t| t <= end * (1.0 + 1e-9)) else { continue };
        if times[j] < end * (1.0 - 1e-9) || j < i + 2 {
            continue;
        }
        let window = &values[i..=j];
        if window.iter().any(|v| v.abs() <= floor_fraction * peak) {
            continue;
        }
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        let Ok(fit) = log_fit(&times[i..=j], window, times[i], times[j]) else { continue };
        let drift = (fit.slope * (times[j] / times[i]).ln()).abs() / mean.abs();
        if drift < flatness && best.map_or(true, |b| drift < b.drift) {
            best = Some(Plateau {
                start: times[i],
                end: times[j],
                mean,
                drift,
            });
        }
    }
    best
}

/// Earliest time after which every one-decade window shows an absolute change
/// below `threshold` in every series.
pub fn equilibration_time(times: &[f64], series: &[Vec<f64>], threshold: f64) -> Option<f64> {
    let settled_from = |i: usize| -> bool {
        (i..times.len()).all(|a| {
            let end = times[a] * 10.0;
            let Some(b) = times.iter().rposition(|&t| t <= end * (1.0 + 1e-9)) else { return true };
            series.iter().all(|s| {
                let (lo, hi) = s[a..=b]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                hi - lo < threshold
            })
        })
    };
    let last_full = times.iter().rposition(|&t| t * 10.0 <= times[times.len() - 1])?;
    (0..=last_full).find(|&i| times[i] > 0.0 && settled_from(i)).map(|i| times[i])
}

/// First time after the maximum of `|y|` where `|y|` falls below half of it.
pub fn half_decay_time(times: &[f64], values: &[f64]) -> Option<f64> {
    let (peak_at, peak) = values
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(k, m), (i, v)| if v.abs() > m { (i, v.abs()) } else { (k, m) });
    if peak == 0.0 {
        return None;
    }
    (peak_at..times.len()).find(|&i| values[i].abs() < 0.5 * peak).map(|i| times[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = TimeGrid::log(0.1, 1e5, 40).unwrap();
        assert_eq!(g.len(), 241);
        assert_eq!(g.points()[0], 0.1);
        assert_eq!(g.points()[240], 1e5);
        assert!((g.points()[40] - 1.0).abs() < 1e-12);
        assert!(TimeGrid::log(1.0, 0.5, 10).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn grid_parse() {
        let g: TimeGrid = "1:100:5".parse().unwrap();
        assert_eq!(g.len(), 11);
        assert!("1:100".parse::<TimeGrid>().is_err());
        assert!("a:100:3".parse::<TimeGrid>().is_err());
    }

    #[test]
    fn phase_reduction_reference_values() {
        // reference residues computed in 60-digit arithmetic
        let cases = [
            (1.2345678901234567, 1e20, 0.6739446176686695),
            (-3.75, 1e18, 5.445548033356719),
            (0.1, 1e15, 3.3581135804199302),
        ];
        for (e, t, want) in cases {
            let got = reduce_phase(e, t);
            assert!((got - want).abs() < 1e-9, "{e} {t}: {got} vs {want}");
        }
        assert!((reduce_phase(0.5, 2.0) - 1.0).abs() < 1e-15);
        assert!((reduce_phase(-1.0, 1.0) - (TAU - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn log_fit_exact_line() {
        let t: Vec<f64> = (0..20).map(|k| 10f64.powf(k as f64 / 5.0)).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.3 + 0.2 * t.ln()).collect();
        let fit = log_fit(&t, &y, 1.0, 1e4).unwrap();
        assert!((fit.slope - 0.2).abs() < 1e-12);
        assert!((fit.intercept - 0.3).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(log_fit(&t, &y, 1e10, 1e11).is_err());
    }

    #[test]
    fn interpolation_and_saturation() {
        let t = [1.0, 10.0, 100.0];
        let y = [0.0, 1.0, 1.0];
        assert!((interpolate_log(&t, &y, 10f64.sqrt()).unwrap() - 0.5).abs() < 1e-12);
        assert!(saturated(&t, &y, 10.0, 100.0, 0.05).unwrap().0);
        assert!(!saturated(&t, &y, 1.0, 100.0, 0.05).unwrap().0);
        assert!(interpolate_log(&t, &y, 1000.0).is_err());
    }

    #[test]
    fn plateau_detection() {
        let t: Vec<f64> = (0..=80).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        // rises, holds at 1 from 1e2 to 1e5, decays
        let y: Vec<f64> = t
            .iter()
            .map(|&t| {
                let rise = 1.0 - (-t / 10.0).exp();
                rise * (-t / 1e6).exp()
            })
            .collect();
        let p = find_plateau(&t, &y, 2.0, 0.1, 0.1).unwrap();
        assert!(p.start >= 10.0 && p.end <= 1e6, "{p:?}");
        let ramp: Vec<f64> = t.iter().map(|t| t.ln() + 1.0).collect();
        assert!(find_plateau(&t, &ramp, 2.0, 0.1, 0.1).is_none());
    }

    #[test]
    fn detector_ordering() {
        let t: Vec<f64> = (0..=80).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
        let fast: Vec<f64> = t.iter().map(|&t| (-t).exp()).collect();
        let slow: Vec<f64> = t.iter().map(|&t| (1.0 - (-t).exp()) * (-t / 1e5).exp()).collect();
        let t1 = equilibration_time(&t, &[fast], 0.05).unwrap();
        let t2 = half_decay_time(&t, &slow).unwrap();
        assert!(t1 < 10.0 && t2 > 1e4, "{t1} {t2}");
    }
}
