//! Dense Hamiltonians for the ladder, its dual chain, the quasiparticle-number
//! conserving vacuum Hamiltonian and the single-quasiparticle three-level model.
//!
//! Matrix element convention: `σ^xσ^x + σ^yσ^y` has element 2 between `|↑↓⟩`
//! and `|↓↑⟩` and vanishes elsewhere, so every variant is real.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::hilbert::{pair_bits, pair_content, SpinBasis, SpinConfig};

/// Default upper bound on the dimension of any dense matrix we agree to build.
pub const DEFAULT_DIM_CAP: usize = 16_384;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => param(format!("unknown boundary '{other}' (expected open|periodic)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Two transverse-field Ising legs coupled by `σ^xσ^x` rungs.
    Ladder,
    /// The dual XX + ZZ chain, the model behind every dynamics experiment.
    Chain,
    /// The chain at zero field written in quasiparticle operators.
    QuasiparticleVacuum,
    /// Three-level sites carrying exactly one quasiparticle.
    SingleQuasiparticle,
}

/// Parameters of one Hamiltonian instance. Energies are in units of `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub sites: usize,
    pub coupling_j: f64,
    pub coupling_g: f64,
    /// One field per rung (ladder) or odd bond (chain); a single hopping
    /// amplitude for the single-quasiparticle model; empty for the vacuum model.
    pub fields: Vec<f64>,
    pub boundary: Boundary,
    pub variant: Variant,
}

impl HamiltonianSpec {
    pub fn chain(sites: usize, j: f64, g: f64, fields: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let spec = HamiltonianSpec {
            sites,
            coupling_j: j,
            coupling_g: g,
            fields,
            boundary,
            variant: Variant::Chain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ladder(sites: usize, j: f64, g: f64, fields: Vec<f64>) -> Result<Self> {
        let spec = HamiltonianSpec {
            sites,
            coupling_j: j,
            coupling_g: g,
            fields,
            boundary: Boundary::Open,
            variant: Variant::Ladder,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn vacuum(sites: usize, j: f64, g: f64, boundary: Boundary) -> Result<Self> {
        let spec = HamiltonianSpec {
            sites,
            coupling_j: j,
            coupling_g: g,
            fields: Vec::new(),
            boundary,
            variant: Variant::QuasiparticleVacuum,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn single_quasiparticle(sites: usize, j: f64, g: f64, hopping: f64) -> Result<Self> {
        let spec = HamiltonianSpec {
            sites,
            coupling_j: j,
            coupling_g: g,
            fields: vec![hopping],
            boundary: Boundary::Open,
            variant: Variant::SingleQuasiparticle,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.coupling_j.is_finite()
            && self.coupling_g.is_finite()
            && self.fields.iter().all(|h| h.is_finite());
        if !finite {
            return param("couplings and fields must be finite");
        }
        match self.variant {
            Variant::Ladder | Variant::Chain => {
                if self.sites < 2 || self.sites % 2 != 0 {
                    return param(format!("{:?} needs an even site count, got {}", self.variant, self.sites));
                }
                if self.fields.len() != self.sites / 2 {
                    return param(format!(
                        "expected {} fields (one per pair), got {}",
                        self.sites / 2,
                        self.fields.len()
                    ));
                }
                if self.variant == Variant::Ladder && self.boundary == Boundary::Periodic {
                    return Err(Error::Unsupported(
                        "the periodic ladder is not dual to the chain; only open boundary is built".into(),
                    ));
                }
            }
            Variant::QuasiparticleVacuum => {
                if self.sites < 2 || self.sites % 2 != 0 {
                    return param("the vacuum model needs an even site count");
                }
            }
            Variant::SingleQuasiparticle => {
                if self.sites < 2 {
                    return param("the single-quasiparticle model needs at least two sites");
                }
                if self.fields.len() != 1 {
                    return param("the single-quasiparticle model takes one scalar hopping amplitude");
                }
            }
        }
        Ok(())
    }

    pub fn hopping(&self) -> f64 {
        self.fields.first().copied().unwrap_or(0.0)
    }

    /// Same spec with the fields replaced.
    pub fn with_fields(&self, fields: Vec<f64>) -> Result<Self> {
        let spec = HamiltonianSpec {
            fields,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Basis a dense matrix is expressed in.
#[derive(Clone, Debug)]
pub enum HamiltonianBasis {
    Spin(Arc<SpinBasis>),
    SingleQuasiparticle(Arc<SingleQuasiparticleBasis>),
}

impl HamiltonianBasis {
    pub fn dim(&self) -> usize {
        match self {
            HamiltonianBasis::Spin(b) => b.dim(),
            HamiltonianBasis::SingleQuasiparticle(b) => b.dim(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DenseHamiltonian {
    pub basis: HamiltonianBasis,
    pub matrix: Mat<f64>,
}

impl DenseHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                m = m.max(self.matrix[(i, j)].abs());
            }
        }
        m
    }

    /// max |H_ij − H_ji| relative to max |H_ij|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Debug dump: little-endian u64 dimension followed by the row-major
    /// entries as f64.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let n = self.dim();
        let mut bytes = Vec::with_capacity(8 + 8 * n * n);
        bytes.extend_from_slice(&(n as u64).to_le_bytes());
        for i in 0..n {
            for j in 0..n {
                bytes.extend_from_slice(&self.matrix[(i, j)].to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

/// Assembles `⟨b_i|H|b_k⟩` from the action of `H` on product states.
///
/// `apply(c, out)` must push every `(c', amp)` with `H|c⟩ = Σ amp |c'⟩`.
fn assemble(basis: &SpinBasis, mut apply: impl FnMut(SpinConfig, &mut Vec<(u32, f64)>)) -> Result<Mat<f64>> {
    let n = basis.dim();
    let sites = basis.sites();
    let norm = if basis.is_parity_resolved() {
        std::f64::consts::FRAC_1_SQRT_2
    } else {
        1.0
    };
    let mut m = Mat::<f64>::zeros(n, n);
    let mut terms = Vec::with_capacity(2 * sites + 1);
    for k in 0..n {
        for (bits, weight) in basis.components(k) {
            terms.clear();
            apply(SpinConfig::new(bits, sites)?, &mut terms);
            for &(target, amp) in &terms {
                if amp == 0.0 {
                    continue;
                }
                let loc = basis.locate(target).ok_or_else(|| {
                    Error::Parameter(format!("operator maps {bits:#b} outside the basis sector"))
                })?;
                m[(loc.index, k)] += weight * amp * loc.coefficient * norm;
            }
        }
    }
    Ok(m)
}

fn spin_z(c: u32, bit: usize) -> f64 {
    if (c >> bit) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn check_basis(spec: &HamiltonianSpec, basis: &SpinBasis, variant: Variant) -> Result<()> {
    if spec.variant != variant {
        return param(format!("spec is {:?}, builder expects {variant:?}", spec.variant));
    }
    spec.validate()?;
    if basis.sites() != spec.sites {
        return param(format!(
            "basis has {} sites, spec has {}",
            basis.sites(),
            spec.sites
        ));
    }
    Ok(())
}

/// Dual chain: `Σ_i h_i(σ^xσ^x + σ^yσ^y)_{2i-1,2i} + g σ^zσ^z_{2i-1,2i}
/// − J(σ^xσ^x + σ^yσ^y)_{2i,2i+1}`; the last even bond exists only for a
/// periodic chain.
pub fn build_chain(spec: &HamiltonianSpec, basis: &Arc<SpinBasis>) -> Result<DenseHamiltonian> {
    check_basis(spec, basis, Variant::Chain)?;
    let sites = spec.sites;
    let pairs = sites / 2;
    let (j, g) = (spec.coupling_j, spec.coupling_g);
    let matrix = assemble(basis, |c, out| {
        let c = c.bits();
        let mut diag = 0.0;
        for i in 0..pairs {
            let (a, b) = (2 * i, 2 * i + 1);
            diag += g * spin_z(c, a) * spin_z(c, b);
            if spin_z(c, a) != spin_z(c, b) {
                out.push((c ^ (1 << a) ^ (1 << b), 2.0 * spec.fields[i]));
            }
            if i + 1 < pairs || spec.boundary == Boundary::Periodic {
                let (a, b) = (2 * i + 1, (2 * i + 2) % sites);
                if spin_z(c, a) != spin_z(c, b) {
                    out.push((c ^ (1 << a) ^ (1 << b), -2.0 * j));
                }
            }
        }
        out.push((c, diag));
    })?;
    Ok(DenseHamiltonian {
        basis: HamiltonianBasis::Spin(basis.clone()),
        matrix,
    })
}

/// Ladder in the full 2^L product basis. Leg `α` (0 or 1) rung `i` is bit
/// `α·L/2 + i`.
pub fn build_ladder(spec: &HamiltonianSpec) -> Result<DenseHamiltonian> {
    let basis = Arc::new(SpinBasis::full(spec.sites)?);
    check_basis(spec, &basis, Variant::Ladder)?;
    let rungs = spec.sites / 2;
    let (j, g) = (spec.coupling_j, spec.coupling_g);
    let matrix = assemble(&basis, |c, out| {
        let c = c.bits();
        let mut diag = 0.0;
        for i in 0..rungs {
            for leg in 0..2 {
                let bit = leg * rungs + i;
                out.push((c ^ (1 << bit), spec.fields[i]));
                if i + 1 < rungs {
                    diag -= j * spin_z(c, bit) * spin_z(c, bit + 1);
                }
            }
            out.push((c ^ (1 << i) ^ (1 << (rungs + i)), -g));
        }
        out.push((c, diag));
    })?;
    Ok(DenseHamiltonian {
        basis: HamiltonianBasis::Spin(basis),
        matrix,
    })
}

/// Zero-field chain in quasiparticle operators:
/// `Σ_i −2J X_i + Σ_i (−g Z_i Z_{i+1} − g Z_i Z̄_{i+1} + g Z̄_i Z_{i+1} + g Z̄_i Z̄_{i+1})`.
///
/// The bond between pair L/2 and pair 1 is always present (it is the chain's
/// odd bond (1, 2)); `X_{L/2}` only for a periodic chain.
pub fn build_vacuum(spec: &HamiltonianSpec, basis: &Arc<SpinBasis>) -> Result<DenseHamiltonian> {
    check_basis(spec, basis, Variant::QuasiparticleVacuum)?;
    let sites = spec.sites;
    let pairs = sites / 2;
    let (j, g) = (spec.coupling_j, spec.coupling_g);
    let matrix = assemble(basis, |c, out| {
        let contents: Vec<_> = (0..pairs).map(|p| pair_content(c, p)).collect();
        let mut diag = 0.0;
        for p in 0..pairs {
            let q = (p + 1) % pairs;
            let (zp, zq) = (contents[p].vacuum_z(), contents[q].vacuum_z());
            let (bp, bq) = (contents[p].quasi_z(), contents[q].quasi_z());
            diag += g * (-zp * zq - zp * bq + bp * zq + bp * bq);
            let has_flip = p + 1 < pairs || spec.boundary == Boundary::Periodic;
            if has_flip && !contents[p].is_quasiparticle() {
                let (a, b) = pair_bits(sites, p);
                out.push((c.bits() ^ (1 << a) ^ (1 << b), -2.0 * j));
            }
        }
        out.push((c.bits(), diag));
    })?;
    Ok(DenseHamiltonian {
        basis: HamiltonianBasis::Spin(basis.clone()),
        matrix,
    })
}

/// Basis of the three-level model with exactly one quasiparticle: state
/// `(j, v)` has the quasiparticle on site `j` and vacuum bits `v` on the other
/// `L − 1` sites, packed in ascending site order (bit set = `|1⟩`).
/// Index is `j·2^{L−1} + v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SingleQuasiparticleBasis {
    sites: usize,
}

impl SingleQuasiparticleBasis {
    pub fn new(sites: usize, dim_cap: usize) -> Result<Self> {
        if !(2..=24).contains(&sites) {
            return param(format!("site count {sites} out of range for the three-level model"));
        }
        let dim = sites << (sites - 1);
        if dim > dim_cap {
            return Err(Error::Resource {
                what: format!("single-quasiparticle basis with {sites} sites"),
                dim,
                cap: dim_cap,
            });
        }
        Ok(SingleQuasiparticleBasis { sites })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn vacuum_dim(&self) -> usize {
        1 << (self.sites - 1)
    }

    pub fn dim(&self) -> usize {
        self.sites * self.vacuum_dim()
    }

    pub fn index(&self, site: usize, vacuum: u32) -> usize {
        site * self.vacuum_dim() + vacuum as usize
    }

    pub fn state(&self, index: usize) -> (usize, u32) {
        (index / self.vacuum_dim(), (index % self.vacuum_dim()) as u32)
    }

    /// Vacuum bit on `site`, or `None` where the quasiparticle sits.
    pub fn vacuum_bit(&self, quasiparticle: usize, vacuum: u32, site: usize) -> Option<bool> {
        use std::cmp::Ordering::*;
        match site.cmp(&quasiparticle) {
            Equal => None,
            Less => Some((vacuum >> site) & 1 == 1),
            Greater => Some((vacuum >> (site - 1)) & 1 == 1),
        }
    }

    fn slot(quasiparticle: usize, site: usize) -> usize {
        if site < quasiparticle {
            site
        } else {
            site - 1
        }
    }
}

/// The two parts `H_0` (position conserving) and `H_1` (hopping) of the
/// single-quasiparticle model.
pub fn build_single_quasiparticle_parts(
    spec: &HamiltonianSpec,
    basis: &Arc<SingleQuasiparticleBasis>,
) -> Result<(DenseHamiltonian, DenseHamiltonian)> {
    if spec.variant != Variant::SingleQuasiparticle {
        return param("spec is not the single-quasiparticle model");
    }
    spec.validate()?;
    if basis.sites() != spec.sites {
        return param("basis and spec disagree on the site count");
    }
    let sites = spec.sites;
    let (j, g, h) = (spec.coupling_j, spec.coupling_g, spec.hopping());
    let n = basis.dim();
    let mut h0 = Mat::<f64>::zeros(n, n);
    let mut h1 = Mat::<f64>::zeros(n, n);
    let z = |bit: bool| if bit { -1.0 } else { 1.0 };
    for k in 0..n {
        let (q, v) = basis.state(k);
        let mut diag = 0.0;
        for i in 0..sites - 1 {
            let left = basis.vacuum_bit(q, v, i);
            let right = basis.vacuum_bit(q, v, i + 1);
            if left.is_some() {
                let flipped = v ^ (1 << SingleQuasiparticleBasis::slot(q, i));
                h0[(basis.index(q, flipped), k)] += -2.0 * j;
            }
            diag += match (left, right) {
                (Some(a), Some(b)) => -g * z(a) * z(b),
                (Some(a), None) => -g * z(a),
                (None, Some(b)) => g * z(b),
                (None, None) => unreachable!("one quasiparticle cannot occupy two sites"),
            };
        }
        h0[(k, k)] += diag;
        // hop to the right: the entered site's bit reappears, toggled, on the
        // vacated site, which occupies the same packed slot
        if q + 1 < sites {
            let target = basis.index(q + 1, v ^ (1 << q));
            h1[(target, k)] += -h;
            h1[(k, target)] += -h;
        }
    }
    let wrap = |matrix| DenseHamiltonian {
        basis: HamiltonianBasis::SingleQuasiparticle(basis.clone()),
        matrix,
    };
    Ok((wrap(h0), wrap(h1)))
}

pub fn build_single_quasiparticle(
    spec: &HamiltonianSpec,
    basis: &Arc<SingleQuasiparticleBasis>,
) -> Result<DenseHamiltonian> {
    let (mut h0, h1) = build_single_quasiparticle_parts(spec, basis)?;
    h0.matrix += &h1.matrix;
    Ok(h0)
}
