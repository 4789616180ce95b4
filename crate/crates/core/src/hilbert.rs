//! Computational bases, symmetry sectors and the quasiparticle pair structure.
//!
//! Site `s` (1-based, as in the chain Hamiltonian) is stored in bit `s - 1` of
//! a `u32`; a set bit is spin up. Bases are always enumerated in ascending
//! integer order of their (representative) bit strings so every matrix built
//! on top of them is reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Largest chain handled by the dense lookup tables.
pub const MAX_SITES: usize = 16;

const ABSENT: u32 = u32::MAX;
const PARTNER: u32 = 1 << 31;

fn check_sites(sites: usize) -> Result<()> {
    if !(2..=MAX_SITES).contains(&sites) || sites % 2 != 0 {
        return param(format!(
            "site count must be even and in 2..={MAX_SITES}, got {sites}"
        ));
    }
    Ok(())
}

/// One product state of `sites` spins-1/2 in the σ^z basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfig {
    bits: u32,
    sites: u8,
}

impl SpinConfig {
    pub fn new(bits: u32, sites: usize) -> Result<Self> {
        if sites == 0 || sites > MAX_SITES {
            return param(format!("site count {sites} out of range"));
        }
        if bits >> sites != 0 {
            return param(format!("bit string {bits:#b} has bits beyond site {sites}"));
        }
        Ok(SpinConfig {
            bits,
            sites: sites as u8,
        })
    }

    /// Builds a configuration from spins listed site 1 first (`true` = up).
    pub fn from_spins(up: &[bool]) -> Result<Self> {
        let bits = up
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &u)| acc | (u32::from(u) << i));
        Self::new(bits, up.len())
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn sites(self) -> usize {
        self.sites as usize
    }

    /// Spin at 0-based position `index`.
    pub fn is_up(self, index: usize) -> bool {
        (self.bits >> index) & 1 == 1
    }

    /// Eigenvalue of Σ σ^z.
    pub fn magnetization(self) -> i32 {
        2 * self.bits.count_ones() as i32 - self.sites as i32
    }

    /// All spins flipped (action of Π σ^x).
    pub fn flipped(self) -> Self {
        SpinConfig {
            bits: !self.bits & mask(self.sites()),
            sites: self.sites,
        }
    }
}

fn mask(sites: usize) -> u32 {
    if sites == 32 {
        u32::MAX
    } else {
        (1u32 << sites) - 1
    }
}

/// Eigenvalue of Π σ^x inside the Σ σ^z = 0 block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Unresolved,
}

impl Parity {
    pub fn sign(self) -> Option<f64> {
        match self {
            Parity::Even => Some(1.0),
            Parity::Odd => Some(-1.0),
            Parity::Unresolved => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetrySector {
    magnetization: i32,
    parity: Parity,
}

impl SymmetrySector {
    pub fn new(magnetization: i32, parity: Parity) -> Result<Self> {
        if parity != Parity::Unresolved && magnetization != 0 {
            return param("spin-flip parity is only a symmetry of the Σσ^z = 0 block");
        }
        Ok(SymmetrySector {
            magnetization,
            parity,
        })
    }

    /// Σσ^z = 0 without parity resolution.
    pub fn zero_magnetization() -> Self {
        SymmetrySector {
            magnetization: 0,
            parity: Parity::Unresolved,
        }
    }

    pub fn magnetization(self) -> i32 {
        self.magnetization
    }

    pub fn parity(self) -> Parity {
        self.parity
    }
}

/// Where a product configuration lives in a [`SpinBasis`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Located {
    pub index: usize,
    /// Overlap factor: `|c⟩` appears in basis vector `index` with amplitude
    /// `coefficient`, up to the common 1/√2 of parity-resolved bases.
    pub coefficient: f64,
}

/// Ordered basis of one symmetry sector (or of the full 2^L space).
///
/// For a parity-resolved sector each basis vector is `(|c⟩ ± |flip c⟩)/√2`
/// and is labelled by its representative `c < flip c`.
#[derive(Clone, Debug)]
pub struct SpinBasis {
    sites: usize,
    sector: Option<SymmetrySector>,
    states: Vec<u32>,
    slots: Vec<u32>,
}

impl SpinBasis {
    /// Enumerates the sector; `sector.magnetization` must be reachable with
    /// `sites` spins.
    pub fn enumerate(sites: usize, sector: SymmetrySector) -> Result<Self> {
        check_sites(sites)?;
        let sz = sector.magnetization();
        if sz.unsigned_abs() as usize > sites || (sz + sites as i32) % 2 != 0 {
            return param(format!("Σσ^z = {sz} is unreachable with {sites} sites"));
        }
        let ups = ((sz + sites as i32) / 2) as u32;
        let full = mask(sites);
        let resolved = sector.parity() != Parity::Unresolved;
        let states: Vec<u32> = (0..=full)
            .filter(|c| c.count_ones() == ups)
            .filter(|&c| !resolved || c < (!c & full))
            .collect();
        let mut slots = vec![ABSENT; 1usize << sites];
        for (k, &c) in states.iter().enumerate() {
            slots[c as usize] = k as u32;
            if resolved {
                slots[(!c & full) as usize] = k as u32 | PARTNER;
            }
        }
        Ok(SpinBasis {
            sites,
            sector: Some(sector),
            states,
            slots,
        })
    }

    /// The complete 2^L product basis, no symmetry imposed.
    pub fn full(sites: usize) -> Result<Self> {
        check_sites(sites)?;
        let states: Vec<u32> = (0..=mask(sites)).collect();
        let slots = states.clone();
        Ok(SpinBasis {
            sites,
            sector: None,
            states,
            slots,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn sector(&self) -> Option<SymmetrySector> {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn parity_sign(&self) -> Option<f64> {
        self.sector.and_then(|s| s.parity().sign())
    }

    /// Representative configuration of basis vector `index`.
    pub fn config(&self, index: usize) -> SpinConfig {
        SpinConfig {
            bits: self.states[index],
            sites: self.sites as u8,
        }
    }

    pub fn representatives(&self) -> &[u32] {
        &self.states
    }

    pub fn locate(&self, bits: u32) -> Option<Located> {
        let slot = *self.slots.get(bits as usize)?;
        if slot == ABSENT {
            return None;
        }
        let coefficient = if slot & PARTNER != 0 {
            self.parity_sign().unwrap_or(1.0)
        } else {
            1.0
        };
        Some(Located {
            index: (slot & !PARTNER) as usize,
            coefficient,
        })
    }

    /// Product-state components `(bits, amplitude)` of basis vector `index`.
    pub fn components(&self, index: usize) -> Vec<(u32, f64)> {
        let c = self.states[index];
        match self.parity_sign() {
            None => vec![(c, 1.0)],
            Some(p) => {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                vec![(c, r), (!c & mask(self.sites), p * r)]
            }
        }
    }

    pub fn is_parity_resolved(&self) -> bool {
        self.parity_sign().is_some()
    }
}

/// Binomial coefficient, exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Content of one even-bond pair `(2i, 2i+1)` of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairContent {
    /// `|↑↓⟩`, the vacuum state `|0⟩`.
    Vacuum0,
    /// `|↓↑⟩`, the vacuum state `|1⟩`.
    Vacuum1,
    /// `|↑↑⟩`, quasiparticle `|0̄⟩`.
    Quasi0,
    /// `|↓↓⟩`, quasiparticle `|1̄⟩`.
    Quasi1,
}

impl PairContent {
    pub fn is_quasiparticle(self) -> bool {
        matches!(self, PairContent::Quasi0 | PairContent::Quasi1)
    }

    /// Vacuum Pauli Z: +1 on `|0⟩`, −1 on `|1⟩`, 0 on quasiparticles.
    pub fn vacuum_z(self) -> f64 {
        match self {
            PairContent::Vacuum0 => 1.0,
            PairContent::Vacuum1 => -1.0,
            _ => 0.0,
        }
    }

    /// Quasiparticle Z̄: +1 on `|0̄⟩`, −1 on `|1̄⟩`, 0 on the vacuum.
    pub fn quasi_z(self) -> f64 {
        match self {
            PairContent::Quasi0 => 1.0,
            PairContent::Quasi1 => -1.0,
            _ => 0.0,
        }
    }
}

/// 0-based bit positions of pair `pair` (0-based); the last pair wraps onto
/// site 1 regardless of boundary condition.
pub fn pair_bits(sites: usize, pair: usize) -> (usize, usize) {
    (2 * pair + 1, (2 * pair + 2) % sites)
}

pub fn pair_content(config: SpinConfig, pair: usize) -> PairContent {
    let (a, b) = pair_bits(config.sites(), pair);
    match (config.is_up(a), config.is_up(b)) {
        (true, false) => PairContent::Vacuum0,
        (false, true) => PairContent::Vacuum1,
        (true, true) => PairContent::Quasi0,
        (false, false) => PairContent::Quasi1,
    }
}

/// N̄: number of pairs holding a quasiparticle.
pub fn quasiparticle_count(config: SpinConfig) -> usize {
    (0..config.sites() / 2)
        .filter(|&p| pair_content(config, p).is_quasiparticle())
        .count()
}

/// The Néel configuration `|↓↑⋯↓↑⟩`, i.e. the quasiparticle vacuum `⊗|0⟩`.
pub fn neel_config(sites: usize) -> Result<SpinConfig> {
    check_sites(sites)?;
    let bits = (0..sites).filter(|s| s % 2 == 1).fold(0, |acc, s| acc | 1 << s);
    SpinConfig::new(bits, sites)
}

/// Néel state as a unit vector in an unresolved basis containing it.
pub fn neel_state(basis: &SpinBasis) -> Result<Vec<f64>> {
    if basis.is_parity_resolved() {
        return param("the Néel state is not a parity eigenstate");
    }
    let neel = neel_config(basis.sites())?;
    let loc = basis
        .locate(neel.bits())
        .ok_or_else(|| crate::Error::Parameter("basis does not contain the Néel state".into()))?;
    let mut psi = vec![0.0; basis.dim()];
    psi[loc.index] = 1.0;
    Ok(psi)
}

/// Per-state quasiparticle contents of an unresolved Σσ^z = 0 basis.
#[derive(Clone, Debug)]
pub struct QuasiparticleTable {
    pairs: usize,
    contents: Vec<PairContent>,
    counts: Vec<u8>,
}

impl QuasiparticleTable {
    pub fn new(basis: &SpinBasis) -> Result<Self> {
        if basis.is_parity_resolved() {
            return param("quasiparticle tables need a product-state basis");
        }
        let pairs = basis.sites() / 2;
        let mut contents = Vec::with_capacity(basis.dim() * pairs);
        let mut counts = Vec::with_capacity(basis.dim());
        for k in 0..basis.dim() {
            let c = basis.config(k);
            let start = contents.len();
            contents.extend((0..pairs).map(|p| pair_content(c, p)));
            counts.push(contents[start..].iter().filter(|x| x.is_quasiparticle()).count() as u8);
        }
        Ok(QuasiparticleTable {
            pairs,
            contents,
            counts,
        })
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn contents(&self, index: usize) -> &[PairContent] {
        &self.contents[index * self.pairs..(index + 1) * self.pairs]
    }

    pub fn count(&self, index: usize) -> usize {
        self.counts[index] as usize
    }

    /// Number of population classes ℋ_{2n}, n = 0..=pairs/2.
    pub fn sectors(&self) -> usize {
        self.pairs / 2 + 1
    }

    /// dim ℋ_{2n} for n = 0..sectors().
    pub fn sector_dimensions(&self) -> Vec<usize> {
        let mut dims = vec![0; self.sectors()];
        for &n in &self.counts {
            dims[n as usize / 2] += 1;
        }
        dims
    }
}
