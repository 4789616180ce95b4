//! Rotating-frame description of the single-quasiparticle model.
//!
//! A state is written `|Ψ⟩ = Σ_j c_j e^{iR_j} |q̄⟩_j |φ_j⟩` with normalized
//! vacuum states `|φ_j⟩ = P_j|Ψ⟩ / ‖P_j|Ψ⟩‖`. The phase `R_j` is the
//! accumulated Berry phase of `|φ_j⟩` and `c_j = ‖P_j|Ψ⟩‖ e^{−iR_j}`, so that
//! `c_j e^{iR_j}` is the non-negative projection norm. With this split the
//! amplitudes obey `i ċ = M(t) c` exactly, where `M` is the quasiparticle
//! Hamiltonian below.

use std::sync::Arc;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::dynamics::{interpolate_log, Propagator, TimeGrid};
use crate::ensemble::mean_stderr;
use crate::error::{param, Error, Result};
use crate::hamiltonians::{
    build_single_quasiparticle_parts, DenseHamiltonian, HamiltonianSpec, SingleQuasiparticleBasis, DEFAULT_DIM_CAP,
};
use crate::spectra::diagonalize_matrix;

/// `|c_j|²` below this leaves `|φ_j⟩` undefined.
pub const VALIDITY_THRESHOLD: f64 = 1e-12;
/// Smallest accepted `|⟨φ_j(t)|φ_j(t+δ)⟩|`.
pub const OVERLAP_THRESHOLD: f64 = 0.99;

/// Per-site projections of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `‖P_j|Ψ⟩‖`.
    pub weights: Vec<f64>,
    /// Normalized vacuum components; `None` where the weight is below threshold.
    pub phi: Vec<Option<Vec<c64>>>,
}

pub fn decompose(basis: &SingleQuasiparticleBasis, psi: &[c64]) -> Result<Projection> {
    if psi.len() != basis.dim() {
        return param(format!("state has length {}, basis has {}", psi.len(), basis.dim()));
    }
    let block = basis.vacuum_dim();
    let mut weights = Vec::with_capacity(basis.sites());
    let mut phi = Vec::with_capacity(basis.sites());
    for j in 0..basis.sites() {
        let v = &psi[j * block..(j + 1) * block];
        let w2: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        weights.push(w2.sqrt());
        phi.push((w2 >= VALIDITY_THRESHOLD).then(|| v.iter().map(|a| a / w2.sqrt()).collect()));
    }
    Ok(Projection { weights, phi })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RotatingFrameSnapshot {
    pub t: f64,
    pub c: Vec<c64>,
    pub phi: Vec<Option<Vec<c64>>>,
    /// `R_j`, radians.
    pub phases: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RotatingFrameSnapshot {
    /// `Σ_j c_j e^{iR_j} |q̄⟩_j |φ_j⟩`; invalid sites contribute nothing.
    pub fn reconstruct(&self, basis: &SingleQuasiparticleBasis) -> Vec<c64> {
        let block = basis.vacuum_dim();
        let mut psi = vec![c64::new(0.0, 0.0); basis.dim()];
        for (j, phi) in self.phi.iter().enumerate() {
            if let Some(phi) = phi {
                let amp = self.c[j] * c64::from_polar(1.0, self.phases[j]);
                for (k, a) in phi.iter().enumerate() {
                    psi[j * block + k] = amp * a;
                }
            }
        }
        psi
    }
}

fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Accumulates `R_j` along a sequence of states.
#[derive(Clone, Debug)]
pub struct PhaseTracker {
    basis: Arc<SingleQuasiparticleBasis>,
    phases: Vec<f64>,
    last: Projection,
    t: f64,
}

impl PhaseTracker {
    /// Starts with `R_j = 0`.
    pub fn new(basis: Arc<SingleQuasiparticleBasis>, psi: &[c64], t: f64) -> Result<Self> {
        let last = decompose(&basis, psi)?;
        Ok(PhaseTracker {
            phases: vec![0.0; basis.sites()],
            basis,
            last,
            t,
        })
    }

    pub fn snapshot(&self) -> RotatingFrameSnapshot {
        let c = self
            .last
            .weights
            .iter()
            .zip(&self.phases)
            .map(|(&w, &r)| c64::from_polar(w, -r))
            .collect();
        RotatingFrameSnapshot {
            t: self.t,
            c,
            phi: self.last.phi.clone(),
            phases: self.phases.clone(),
            valid: self.last.phi.iter().map(Option::is_some).collect(),
        }
    }

    /// Moves to the state at `t`. For every site valid at both times,
    /// `R_j` grows by `−arg⟨φ_j(t_prev)|φ_j(t)⟩`; a site that becomes valid
    /// again restarts from `R_j = 0`.
    ///
    /// Fails without changing the tracker if an overlap magnitude falls to
    /// [`OVERLAP_THRESHOLD`] or below.
    pub fn accumulate_phase(&mut self, psi: &[c64], t: f64) -> Result<RotatingFrameSnapshot> {
        let next = decompose(&self.basis, psi)?;
        let mut phases = self.phases.clone();
        for j in 0..self.basis.sites() {
            match (&self.last.phi[j], &next.phi[j]) {
                (Some(a), Some(b)) => {
                    let ov = inner(a, b);
                    if ov.norm() <= OVERLAP_THRESHOLD {
                        return Err(Error::StepSize {
                            t,
                            site: j + 1,
                            overlap: ov.norm(),
                            threshold: OVERLAP_THRESHOLD,
                        });
                    }
                    phases[j] -= ov.arg();
                }
                (None, Some(_)) => phases[j] = 0.0,
                _ => {}
            }
        }
        self.phases = phases;
        self.last = next;
        self.t = t;
        Ok(self.snapshot())
    }
}

/// Quasiparticle Hamiltonian `M(t)` on the valid sites.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveHamiltonian {
    pub sites: usize,
    /// Row-major `L × L`; entries touching an invalid site are `None`.
    pub entries: Vec<Option<c64>>,
}

impl EffectiveHamiltonian {
    pub fn get(&self, j: usize, k: usize) -> Option<c64> {
        self.entries[j * self.sites + k]
    }

    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.sites).map(|j| self.get(j, j).map(|z| z.re)).collect()
    }

    /// Largest |M_jk − conj(M_kj)| over valid pairs.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.sites {
            for k in 0..self.sites {
                if let (Some(a), Some(b)) = (self.get(j, k), self.get(k, j)) {
                    worst = worst.max((a - b.conj()).norm());
                }
            }
        }
        worst
    }
}

fn block_expectation(m: &Mat<f64>, basis: &SingleQuasiparticleBasis, j: usize, k: usize, a: &[c64], b: &[c64]) -> c64 {
    let block = basis.vacuum_dim();
    let (rj, ck) = (j * block, k * block);
    let mut acc = c64::new(0.0, 0.0);
    for q in 0..block {
        if b[q] == c64::new(0.0, 0.0) {
            continue;
        }
        let col = m.col(ck + q);
        let mut hb = c64::new(0.0, 0.0);
        for p in 0..block {
            let x = col[rj + p];
            if x != 0.0 {
                hb += a[p].conj() * x;
            }
        }
        acc += hb * b[q];
    }
    acc
}

/// `M_jj = ⟨φ_j|H_0|φ_j⟩` and `M_jk = e^{−i(R_j − R_k)} ⟨φ_j|H_1|φ_k⟩`.
pub fn effective_hamiltonian(
    snapshot: &RotatingFrameSnapshot,
    basis: &SingleQuasiparticleBasis,
    h0: &DenseHamiltonian,
    h1: &DenseHamiltonian,
) -> EffectiveHamiltonian {
    let l = basis.sites();
    let mut entries = vec![None; l * l];
    for j in 0..l {
        let Some(pj) = &snapshot.phi[j] else { continue };
        entries[j * l + j] = Some(block_expectation(&h0.matrix, basis, j, j, pj, pj));
        for k in [j.wrapping_sub(1), j + 1] {
            if k >= l {
                continue;
            }
            let Some(pk) = &snapshot.phi[k] else { continue };
            let gauge = c64::from_polar(1.0, -(snapshot.phases[j] - snapshot.phases[k]));
            entries[j * l + k] = Some(gauge * block_expectation(&h1.matrix, basis, j, k, pj, pk));
        }
    }
    EffectiveHamiltonian { sites: l, entries }
}

/// `M_jj(t) = ⟨Ψ|P_j H_0 P_j|Ψ⟩ / ‖P_j Ψ‖²`; needs no phases.
pub fn diagonal_potential(basis: &SingleQuasiparticleBasis, h0: &DenseHamiltonian, psi: &[c64]) -> Result<Vec<Option<f64>>> {
    let proj = decompose(basis, psi)?;
    Ok((0..basis.sites())
        .map(|j| proj.phi[j].as_ref().map(|p| block_expectation(&h0.matrix, basis, j, j, p, p).re))
        .collect())
}

/// `|q̄⟩_site ⊗ |0…0⟩`, `site` 0-based.
pub fn localized_state(basis: &SingleQuasiparticleBasis, site: usize) -> Result<Vec<f64>> {
    if site >= basis.sites() {
        return param(format!("site {} outside 1..={}", site + 1, basis.sites()));
    }
    let mut psi = vec![0.0; basis.dim()];
    psi[basis.index(site, 0)] = 1.0;
    Ok(psi)
}

/// Equal superposition of every quasiparticle position over `|0…0⟩`.
pub fn delocalized_state(basis: &SingleQuasiparticleBasis) -> Vec<f64> {
    let mut psi = vec![0.0; basis.dim()];
    let a = 1.0 / (basis.sites() as f64).sqrt();
    for j in 0..basis.sites() {
        psi[basis.index(j, 0)] = a;
    }
    psi
}

/// Diagonalized single-quasiparticle model with its two parts kept.
pub struct SingleQuasiparticleSystem {
    pub basis: Arc<SingleQuasiparticleBasis>,
    pub h0: DenseHamiltonian,
    pub h1: DenseHamiltonian,
    pub propagator: Propagator,
}

impl SingleQuasiparticleSystem {
    pub fn new(spec: &HamiltonianSpec, dim_cap: usize) -> Result<Self> {
        let basis = Arc::new(SingleQuasiparticleBasis::new(spec.sites, dim_cap)?);
        let (h0, h1) = build_single_quasiparticle_parts(spec, &basis)?;
        let h = &h0.matrix + &h1.matrix;
        let decomp = diagonalize_matrix(&h, "single-quasiparticle")?;
        Ok(SingleQuasiparticleSystem {
            basis,
            h0,
            h1,
            propagator: Propagator::from_decomposition(&decomp),
        })
    }

    pub fn with_default_cap(spec: &HamiltonianSpec) -> Result<Self> {
        Self::new(spec, DEFAULT_DIM_CAP)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteAverage {
    pub site: usize,
    pub mean: f64,
    /// Standard deviation of the sampled values over the window divided by
    /// the square root of the number of samples.
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmergentPotential {
    pub times: Vec<f64>,
    /// `[time][site]`, `None` where the site is invalid.
    pub diagonal: Vec<Vec<Option<f64>>>,
    pub window: (f64, f64),
    pub averages: Vec<SiteAverage>,
}

impl EmergentPotential {
    /// Sites whose late-window mean differs from every other site's by more
    /// than `sigmas` combined standard errors.
    pub fn distinct_sites(&self, sigmas: f64) -> Vec<usize> {
        self.averages
            .iter()
            .filter(|a| {
                self.averages.iter().filter(|b| b.site != a.site).all(|b| {
                    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
                    (a.mean - b.mean).abs() > sigmas * se
                })
            })
            .map(|a| a.site)
            .collect()
    }
}

/// `M_jj(t)` on `grid` for evolution from `psi0`, with per-site averages over
/// `window`. Only grid points inside the window enter the averages.
pub fn emergent_potential_series(
    system: &SingleQuasiparticleSystem,
    psi0: &[f64],
    grid: &TimeGrid,
    window: (f64, f64),
) -> Result<EmergentPotential> {
    if !(window.0 < window.1) {
        return param("empty averaging window");
    }
    let a = system.propagator.coefficients(psi0)?;
    let l = system.basis.sites();
    let mut diagonal = Vec::with_capacity(grid.len());
    for times in grid.points().chunks(64) {
        let (re, im) = system.propagator.states(&a, times);
        for c in 0..times.len() {
            let psi: Vec<c64> = (0..system.basis.dim()).map(|i| c64::new(re[(i, c)], im[(i, c)])).collect();
            diagonal.push(diagonal_potential(&system.basis, &system.h0, &psi)?);
        }
    }
    let averages = (0..l)
        .map(|j| {
            let vals: Vec<f64> = grid
                .points()
                .iter()
                .zip(&diagonal)
                .filter(|(t, _)| **t >= window.0 && **t <= window.1)
                .filter_map(|(_, row)| row[j])
                .collect();
            let (mean, stderr) = mean_stderr(&vals);
            SiteAverage {
                site: j + 1,
                mean,
                stderr,
                samples: vals.len(),
            }
        })
        .collect();
    Ok(EmergentPotential {
        times: grid.points().to_vec(),
        diagonal,
        window,
        averages,
    })
}

/// Occupations `⟨N̄_j⟩` averaged over the grid points inside `window`.
pub fn late_occupation(times: &[f64], occupation: &[Vec<f64>], window: (f64, f64)) -> Result<Vec<f64>> {
    let rows: Vec<&Vec<f64>> = times
        .iter()
        .zip(occupation)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(_, r)| r)
        .collect();
    if rows.is_empty() {
        return param("no grid points inside the averaging window");
    }
    let sites = rows[0].len();
    Ok((0..sites)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// max_t max_j ||c_j|² (integrated) − |c_j|² (exact)|.
    pub max_deviation: f64,
    /// Phase-accumulation step.
    pub delta: f64,
    pub steps: usize,
    /// Largest Hermiticity error of `M` seen along the way.
    pub max_hermiticity_error: f64,
}

/// Integrates `i ċ = M(t) c` with classical RK4 (step `2δ`, `M` sampled on
/// the δ grid used for the phases) and compares `|c_j|²` with exact evolution.
///
/// Starts from `delta` and halves it whenever an overlap check fails.
pub fn dynamics_equivalence(system: &SingleQuasiparticleSystem, psi0: &[f64], t_end: f64, delta: f64) -> Result<EquivalenceReport> {
    let mut delta = delta;
    for _ in 0..12 {
        match integrate_frame(system, psi0, t_end, delta) {
            Err(Error::StepSize { .. }) => delta /= 2.0,
            other => return other,
        }
    }
    Err(Error::Numeric {
        block: "rotating frame".into(),
        reason: "phase step did not converge".into(),
    })
}

fn integrate_frame(system: &SingleQuasiparticleSystem, psi0: &[f64], t_end: f64, delta: f64) -> Result<EquivalenceReport> {
    let basis = &system.basis;
    let l = basis.sites();
    let half_steps = (t_end / delta).ceil() as usize;
    let half_steps = half_steps + half_steps % 2;
    let times: Vec<f64> = (0..=half_steps).map(|k| k as f64 * delta).collect();
    let a = system.propagator.coefficients(psi0)?;

    let psi0c: Vec<c64> = psi0.iter().map(|&x| c64::new(x, 0.0)).collect();
    let mut tracker = PhaseTracker::new(basis.clone(), &psi0c, 0.0)?;
    let mut frames = Vec::with_capacity(times.len());
    let mut snaps = vec![tracker.snapshot()];
    let mut herm = 0.0f64;
    for chunk in times[1..].chunks(64) {
        let (re, im) = system.propagator.states(&a, chunk);
        for (c, &t) in chunk.iter().enumerate() {
            let psi: Vec<c64> = (0..basis.dim()).map(|i| c64::new(re[(i, c)], im[(i, c)])).collect();
            snaps.push(tracker.accumulate_phase(&psi, t)?);
        }
    }
    for s in &snaps {
        if s.valid.iter().any(|v| !v) {
            return Err(Error::Numeric {
                block: "rotating frame".into(),
                reason: format!("a site lost its vacuum component at t = {}", s.t),
            });
        }
        let m = effective_hamiltonian(s, basis, &system.h0, &system.h1);
        herm = herm.max(m.hermiticity_error());
        let dense: Vec<c64> = m.entries.iter().map(|e| e.unwrap_or_default()).collect();
        frames.push(dense);
    }

    let apply = |m: &[c64], c: &[c64]| -> Vec<c64> {
        (0..l)
            .map(|j| {
                let s: c64 = (0..l).map(|k| m[j * l + k] * c[k]).sum();
                c64::new(s.im, -s.re) // −i·s
            })
            .collect()
    };
    let axpy = |c: &[c64], k: &[c64], h: f64| -> Vec<c64> { c.iter().zip(k).map(|(a, b)| a + b * h).collect() };

    let mut c = snaps[0].c.clone();
    let mut worst = 0.0f64;
    let h = 2.0 * delta;
    for step in 0..half_steps / 2 {
        let (m0, m1, m2) = (&frames[2 * step], &frames[2 * step + 1], &frames[2 * step + 2]);
        let k1 = apply(m0, &c);
        let k2 = apply(m1, &axpy(&c, &k1, delta));
        let k3 = apply(m1, &axpy(&c, &k2, delta));
        let k4 = apply(m2, &axpy(&c, &k3, h));
        for j in 0..l {
            c[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
        }
        let exact = &snaps[2 * step + 2].c;
        for j in 0..l {
            worst = worst.max((c[j].norm_sqr() - exact[j].norm_sqr()).abs());
        }
    }
    Ok(EquivalenceReport {
        max_deviation: worst,
        delta,
        steps: half_steps / 2,
        max_hermiticity_error: herm,
    })
}

/// Occupation of one site interpolated in log time, for sparse diagnostics.
pub fn occupation_at(times: &[f64], occupation: &[Vec<f64>], site: usize, t: f64) -> Result<f64> {
    let col: Vec<f64> = occupation.iter().map(|r| r[site]).collect();
    interpolate_log(times, &col, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(l: usize, h: f64) -> SingleQuasiparticleSystem {
        let spec = HamiltonianSpec::single_quasiparticle(l, 1.0, 1.0, h).unwrap();
        SingleQuasiparticleSystem::with_default_cap(&spec).unwrap()
    }

    #[test]
    fn localized_initial_state_decomposes() {
        let basis = SingleQuasiparticleBasis::new(6, DEFAULT_DIM_CAP).unwrap();
        let psi: Vec<c64> = localized_state(&basis, 3).unwrap().iter().map(|&x| c64::new(x, 0.0)).collect();
        let p = decompose(&basis, &psi).unwrap();
        assert_eq!(p.weights[3], 1.0);
        assert_eq!(p.phi.iter().filter(|x| x.is_some()).count(), 1);
    }

    #[test]
    fn initial_potential_closed_form() {
        // all vacuum sites |0⟩: −g per bond away from the quasiparticle,
        // −g·Z + g·Z on the two bonds touching it
        let s = system(9, 0.1);
        let psi: Vec<c64> = localized_state(&s.basis, 4).unwrap().iter().map(|&x| c64::new(x, 0.0)).collect();
        let d = diagonal_potential(&s.basis, &s.h0, &psi).unwrap();
        assert!((d[4].unwrap() - (-6.0)).abs() < 1e-12);
        assert!(d.iter().enumerate().all(|(j, v)| v.is_some() == (j == 4)));
    }

    #[test]
    fn constant_phase_rotation() {
        let basis = Arc::new(SingleQuasiparticleBasis::new(3, DEFAULT_DIM_CAP).unwrap());
        let psi: Vec<c64> = delocalized_state(&basis).iter().map(|&x| c64::new(x, 0.0)).collect();
        let mut tr = PhaseTracker::new(basis.clone(), &psi, 0.0).unwrap();
        let omega = 0.7;
        for step in 1..=100 {
            let t = step as f64 * 0.01;
            let rotated: Vec<c64> = psi.iter().map(|a| a * c64::from_polar(1.0, omega * t)).collect();
            tr.accumulate_phase(&rotated, t).unwrap();
        }
        let snap = tr.snapshot();
        for r in &snap.phases {
            assert!((r + omega).abs() < 1e-12);
        }
        let back = snap.reconstruct(&basis);
        let want = c64::from_polar(1.0 / 3f64.sqrt(), omega);
        assert!((back[basis.index(1, 0)] - want).norm() < 1e-12);
    }

    #[test]
    fn large_jump_is_rejected() {
        let basis = Arc::new(SingleQuasiparticleBasis::new(2, DEFAULT_DIM_CAP).unwrap());
        let mut a = vec![c64::new(0.0, 0.0); 4];
        a[basis.index(0, 0)] = c64::new(1.0, 0.0);
        let mut b = vec![c64::new(0.0, 0.0); 4];
        b[basis.index(0, 1)] = c64::new(1.0, 0.0);
        let mut tr = PhaseTracker::new(basis, &a, 0.0).unwrap();
        assert!(matches!(tr.accumulate_phase(&b, 1.0), Err(Error::StepSize { site: 1, .. })));
    }

    #[test]
    fn zero_hopping_has_no_off_diagonal() {
        let s = system(4, 0.0);
        let psi: Vec<c64> = delocalized_state(&s.basis).iter().map(|&x| c64::new(x, 0.0)).collect();
        let tr = PhaseTracker::new(s.basis.clone(), &psi, 0.0).unwrap();
        let m = effective_hamiltonian(&tr.snapshot(), &s.basis, &s.h0, &s.h1);
        for j in 0..4 {
            for k in 0..4 {
                if j != k {
                    assert_eq!(m.get(j, k).map_or(0.0, |z| z.norm()), 0.0);
                }
            }
        }
    }
}
