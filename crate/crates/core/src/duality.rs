//! Spectral check of the ladder ↔ chain duality.
//!
//! The ladder is diagonalized on its full 2^L space, the chain on every
//! magnetization sector, and the two spectra are compared as multisets.

use serde::{Deserialize, Serialize};

use faer::Mat;

use crate::error::{param, Result};
use crate::hamiltonians::{build_chain, build_ladder, Boundary, HamiltonianSpec};
use crate::hilbert::{Parity, SpinBasis, SymmetrySector, MAX_SITES};
use crate::spectra::eigenvalues;

/// Largest size accepted: both sides are diagonalized in full.
pub const MAX_DUALITY_SITES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityRow {
    pub energy: f64,
    pub ladder: usize,
    pub chain: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub sites: usize,
    pub spectrum_ladder: Vec<f64>,
    pub spectrum_chain: Vec<f64>,
    /// Largest difference after sorting; `None` when the dimensions differ.
    pub max_mismatch: Option<f64>,
    /// Set when the dimensions or the multiplicity tables disagree.
    pub structural_mismatch: bool,
    pub multiplicity_table: Vec<MultiplicityRow>,
    /// `(Tr H_ladder^k, Tr H_chain^k)` for k = 1..4.
    pub trace_moments: Vec<(f64, f64)>,
}

impl DualityReport {
    /// Largest relative disagreement among the trace moments.
    pub fn max_moment_deviation(&self) -> f64 {
        self.trace_moments
            .iter()
            .map(|&(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}

fn power_traces(m: &Mat<f64>, out: &mut [f64; 4]) {
    let m2 = m * m;
    let n = m.nrows();
    for i in 0..n {
        out[0] += m[(i, i)];
        out[1] += m2[(i, i)];
    }
    // Tr M³ = Σ_ij (M²)_ij M_ji, Tr M⁴ = Σ_ij (M²)_ij (M²)_ji
    for j in 0..n {
        for i in 0..n {
            out[2] += m2[(i, j)] * m[(j, i)];
            out[3] += m2[(i, j)] * m2[(j, i)];
        }
    }
}

fn multiplicities(ladder: &[f64], chain: &[f64], tol: f64) -> Vec<MultiplicityRow> {
    let mut all: Vec<(f64, bool)> = ladder.iter().map(|&e| (e, true)).chain(chain.iter().map(|&e| (e, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rows: Vec<MultiplicityRow> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for (e, from_ladder) in all {
        if rows.is_empty() || e - anchor > tol {
            anchor = e;
            rows.push(MultiplicityRow {
                energy: e,
                ladder: 0,
                chain: 0,
            });
        }
        let row = rows.last_mut().expect("row pushed above");
        if from_ladder {
            row.ladder += 1;
        } else {
            row.chain += 1;
        }
    }
    rows
}

/// Compares the open ladder and the open chain with the same fields.
pub fn verify_duality(sites: usize, j: f64, g: f64, fields: &[f64]) -> Result<DualityReport> {
    if sites > MAX_DUALITY_SITES.min(MAX_SITES) {
        return param(format!("duality check limited to {MAX_DUALITY_SITES} sites"));
    }
    let ladder = build_ladder(&HamiltonianSpec::ladder(sites, j, g, fields.to_vec())?)?;
    let chain_spec = HamiltonianSpec::chain(sites, j, g, fields.to_vec(), Boundary::Open)?;

    let mut moments_ladder = [0.0; 4];
    power_traces(&ladder.matrix, &mut moments_ladder);
    let mut spectrum_ladder = eigenvalues(&ladder.matrix, "ladder")?;

    let mut moments_chain = [0.0; 4];
    let mut spectrum_chain = Vec::with_capacity(1 << sites);
    for m in (-(sites as i32)..=sites as i32).step_by(2) {
        let basis = std::sync::Arc::new(SpinBasis::enumerate(sites, SymmetrySector::new(m, Parity::Unresolved)?)?);
        let h = build_chain(&chain_spec, &basis)?;
        power_traces(&h.matrix, &mut moments_chain);
        spectrum_chain.extend(eigenvalues(&h.matrix, &format!("sz={m}"))?);
    }
    spectrum_ladder.sort_by(f64::total_cmp);
    spectrum_chain.sort_by(f64::total_cmp);

    let scale = spectrum_ladder
        .iter()
        .chain(&spectrum_chain)
        .fold(1.0f64, |a, e| a.max(e.abs()));
    let table = multiplicities(&spectrum_ladder, &spectrum_chain, 1e-8 * scale);
    let same_dim = spectrum_ladder.len() == spectrum_chain.len();
    let max_mismatch = same_dim.then(|| {
        spectrum_ladder
            .iter()
            .zip(&spectrum_chain)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    let structural_mismatch = !same_dim || table.iter().any(|r| r.ladder != r.chain);
    if structural_mismatch {
        log::warn!("duality check at L={sites}: spectra differ structurally");
    }
    Ok(DualityReport {
        sites,
        spectrum_ladder,
        spectrum_chain,
        max_mismatch,
        structural_mismatch,
        multiplicity_table: table,
        trace_moments: moments_ladder.into_iter().zip(moments_chain).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sites_zero_field() {
        let g = 0.8;
        let r = verify_duality(2, 1.0, g, &[0.0]).unwrap();
        let want = [-g, -g, g, g];
        for (a, b) in r.spectrum_ladder.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in r.spectrum_chain.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(!r.structural_mismatch);
        assert_eq!(r.multiplicity_table.len(), 2);
    }

    #[test]
    fn two_site_ladder_analytic() {
        let (g, h) = (1.0, 0.35);
        let r = verify_duality(2, 1.0, g, &[h]).unwrap();
        let mut want = vec![-g - 2.0 * h, -g + 2.0 * h, g, g];
        want.sort_by(f64::total_cmp);
        for (a, b) in r.spectrum_ladder.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn classical_ladder_ground_state() {
        let ladder = build_ladder(&HamiltonianSpec::ladder(8, 1.0, 0.0, vec![0.0; 4]).unwrap()).unwrap();
        let e = eigenvalues(&ladder.matrix, "x").unwrap();
        assert!((e[0] - (-(8.0 - 2.0))).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_systems() {
        assert!(verify_duality(12, 1.0, 1.0, &[0.0; 6]).is_err());
    }
}
