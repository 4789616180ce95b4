//! Independent reference constructions checked against the library.

use std::sync::Arc;

use faer::{c64, Mat};
use ladder_ed::dynamics::{
    evolve_expectations, Correlators, CorrelatorNormalization, Cut, Energy, HalfChainEntropy, LogBase, Norm, Observable,
    OrderParameter, Populations, Propagator, SiteOccupation, TimeGrid,
};
use ladder_ed::hamiltonians::{
    build_chain, build_single_quasiparticle, build_single_quasiparticle_parts, build_vacuum, Boundary, HamiltonianSpec,
    SingleQuasiparticleBasis, DEFAULT_DIM_CAP,
};
use ladder_ed::hilbert::{neel_state, pair_content, Parity, PairContent, QuasiparticleTable, SpinBasis, SymmetrySector};
use ladder_ed::rotframe::{localized_state, SingleQuasiparticleSystem};
use ladder_ed::spectra::{diagonalize, diagonalize_matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zero_sector(sites: usize) -> Arc<SpinBasis> {
    Arc::new(SpinBasis::enumerate(sites, SymmetrySector::zero_magnetization()).unwrap())
}

fn random_fields(rng: &mut ChaCha8Rng, n: usize, d: f64) -> Vec<f64> {
    (0..n).map(|_| d * (rng.random::<f64>() - 0.5)).collect()
}

#[test]
fn chain_commutes_with_total_magnetization() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for boundary in [Boundary::Open, Boundary::Periodic] {
        let spec = HamiltonianSpec::chain(6, 1.0, 0.7, random_fields(&mut rng, 3, 2.0), boundary).unwrap();
        let full = Arc::new(SpinBasis::full(6).unwrap());
        let h = build_chain(&spec, &full).unwrap();
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                if full.config(i).magnetization() != full.config(j).magnetization() {
                    assert!(h.matrix[(i, j)].abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn vacuum_hamiltonian_equals_zero_field_chain() {
    for sites in [4, 6, 8] {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            let basis = zero_sector(sites);
            let chain = HamiltonianSpec::chain(sites, 1.3, 0.6, vec![0.0; sites / 2], boundary).unwrap();
            let vac = HamiltonianSpec::vacuum(sites, 1.3, 0.6, boundary).unwrap();
            let a = build_chain(&chain, &basis).unwrap().matrix;
            let b = build_vacuum(&vac, &basis).unwrap().matrix;
            for i in 0..basis.dim() {
                for j in 0..basis.dim() {
                    assert!((a[(i, j)] - b[(i, j)]).abs() < 1e-12, "L={sites} {boundary:?} ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn zero_field_conserves_quasiparticle_number() {
    let basis = zero_sector(8);
    let table = QuasiparticleTable::new(&basis).unwrap();
    for boundary in [Boundary::Open, Boundary::Periodic] {
        let spec = HamiltonianSpec::chain(8, 1.0, 1.0, vec![0.0; 4], boundary).unwrap();
        let h = build_chain(&spec, &basis).unwrap().matrix;
        for i in 0..basis.dim() {
            for j in 0..basis.dim() {
                if table.count(i) != table.count(j) {
                    assert_eq!(h[(i, j)], 0.0);
                }
            }
        }
    }
}

#[test]
fn vacuum_sector_is_transverse_field_ising() {
    // −2J X_i − g Z_i Z_{i+1} on L/2 pseudo-spins, periodic in Z
    let (j, g) = (1.0, 0.4);
    let basis = zero_sector(8);
    let table = QuasiparticleTable::new(&basis).unwrap();
    let h = build_vacuum(&HamiltonianSpec::vacuum(8, j, g, Boundary::Periodic).unwrap(), &basis).unwrap();
    let z = |c: PairContent| c.vacuum_z();
    for a in (0..basis.dim()).filter(|&k| table.count(k) == 0) {
        let ca = table.contents(a);
        let diag: f64 = (0..4).map(|p| -g * z(ca[p]) * z(ca[(p + 1) % 4])).sum();
        assert!((h.matrix[(a, a)] - diag).abs() < 1e-12);
        for b in (0..basis.dim()).filter(|&k| table.count(k) == 0 && k != a) {
            let flips = (0..4).filter(|&p| table.contents(b)[p] != ca[p]).count();
            let want = if flips == 1 { -2.0 * j } else { 0.0 };
            assert_eq!(h.matrix[(b, a)], want);
        }
    }
}

#[test]
fn field_terms_follow_the_pair_transition_rules() {
    use PairContent::*;
    let allowed = [
        ((Vacuum0, Vacuum0), (Quasi0, Quasi1)),
        ((Vacuum1, Vacuum1), (Quasi1, Quasi0)),
        ((Vacuum0, Quasi0), (Quasi0, Vacuum1)),
        ((Vacuum1, Quasi1), (Quasi1, Vacuum0)),
    ];
    let ok = |before: (PairContent, PairContent), after: (PairContent, PairContent)| {
        allowed.iter().any(|&(x, y)| (x == before && y == after) || (y == before && x == after))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let basis = zero_sector(8);
    let table = QuasiparticleTable::new(&basis).unwrap();
    let fields = random_fields(&mut rng, 4, 2.0);
    let with = build_chain(&HamiltonianSpec::chain(8, 1.0, 1.0, fields, Boundary::Open).unwrap(), &basis).unwrap();
    let without = build_chain(&HamiltonianSpec::chain(8, 1.0, 1.0, vec![0.0; 4], Boundary::Open).unwrap(), &basis).unwrap();
    let mut seen = 0;
    for a in 0..basis.dim() {
        for b in 0..basis.dim() {
            let v = with.matrix[(b, a)] - without.matrix[(b, a)];
            if a == b || v == 0.0 {
                continue;
            }
            seen += 1;
            let (na, nb) = (table.count(a) as i32, table.count(b) as i32);
            assert!((na - nb).abs() <= 2);
            let changed: Vec<usize> = (0..4).filter(|&p| table.contents(a)[p] != table.contents(b)[p]).collect();
            assert_eq!(changed.len(), 2);
            let (p, q) = if changed[1] == changed[0] + 1 { (changed[0], changed[1]) } else { (changed[1], changed[0]) };
            assert_eq!((p + 1) % 4, q, "changed pairs must be neighbours");
            let before = (pair_content(basis.config(a), p), pair_content(basis.config(a), q));
            let after = (pair_content(basis.config(b), p), pair_content(basis.config(b), q));
            assert!(ok(before, after), "{before:?} -> {after:?}");
        }
    }
    assert!(seen > 0);
}

#[test]
fn parity_blocks_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sites in [4, 6, 8] {
        for boundary in [Boundary::Open, Boundary::Periodic] {
            let spec = HamiltonianSpec::chain(sites, 1.0, 0.9, random_fields(&mut rng, sites / 2, 3.0), boundary).unwrap();
            let full = zero_sector(sites);
            let h = build_chain(&spec, &full).unwrap().matrix;
            let even = SpinBasis::enumerate(sites, SymmetrySector::new(0, Parity::Even).unwrap()).unwrap();
            let odd = SpinBasis::enumerate(sites, SymmetrySector::new(0, Parity::Odd).unwrap()).unwrap();
            assert_eq!(even.dim() + odd.dim(), full.dim());
            // columns: parity basis vectors written in the product basis
            let mut u = Mat::<f64>::zeros(full.dim(), full.dim());
            let mut col = 0;
            for b in [&even, &odd] {
                for k in 0..b.dim() {
                    for (bits, w) in b.components(k) {
                        u[(full.locate(bits).unwrap().index, col)] = w;
                    }
                    col += 1;
                }
            }
            let rotated = u.transpose() * &h * &u;
            let split = even.dim();
            for i in 0..full.dim() {
                for j in 0..full.dim() {
                    if (i < split) != (j < split) {
                        assert!(rotated[(i, j)].abs() < 1e-12);
                    }
                }
            }
            // the blocks built directly agree with the rotated matrix
            let he = build_chain(&spec, &Arc::new(even.clone())).unwrap().matrix;
            for i in 0..split {
                for j in 0..split {
                    assert!((he[(i, j)] - rotated[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }
}

/// Dense operator on three-level sites: 0 = |0⟩, 1 = |1⟩, 2 = |q̄⟩.
fn three_level_oracle(sites: usize, j: f64, g: f64, h: f64) -> Mat<f64> {
    let dim = 3usize.pow(sites as u32);
    let digit = |s: usize, i: usize| (s / 3usize.pow(i as u32)) % 3;
    let with = |s: usize, i: usize, d: usize| s - digit(s, i) * 3usize.pow(i as u32) + d * 3usize.pow(i as u32);
    let z = |d: usize| [1.0, -1.0, 0.0][d];
    let nbar = |d: usize| if d == 2 { 1.0 } else { 0.0 };
    let mut m = Mat::<f64>::zeros(dim, dim);
    for s in 0..dim {
        for i in 0..sites - 1 {
            let (a, b) = (digit(s, i), digit(s, i + 1));
            if a < 2 {
                m[(with(s, i, 1 - a), s)] += -2.0 * j;
            }
            m[(s, s)] += -g * z(a) * z(b) - g * z(a) * nbar(b) + g * nbar(a) * z(b);
            // |0⟩⟨q̄| ⊗ |q̄⟩⟨1| + |1⟩⟨q̄| ⊗ |q̄⟩⟨0| and their adjoints
            let moves = [((2, 1), (0, 2)), ((2, 0), (1, 2)), ((0, 2), (2, 1)), ((1, 2), (2, 0))];
            for ((fa, fb), (ta, tb)) in moves {
                if (a, b) == (fa, fb) {
                    m[(with(with(s, i, ta), i + 1, tb), s)] += -h;
                }
            }
        }
    }
    m
}

#[test]
fn three_level_model_matches_tensor_oracle() {
    let (sites, j, g, h) = (4, 0.9, 1.1, 0.37);
    let oracle = three_level_oracle(sites, j, g, h);
    let basis = Arc::new(SingleQuasiparticleBasis::new(sites, DEFAULT_DIM_CAP).unwrap());
    let spec = HamiltonianSpec::single_quasiparticle(sites, j, g, h).unwrap();
    let mine = build_single_quasiparticle(&spec, &basis).unwrap().matrix;
    let embed = |k: usize| {
        let (q, v) = basis.state(k);
        (0..sites)
            .map(|i| match basis.vacuum_bit(q, v, i) {
                None => 2,
                Some(true) => 1,
                Some(false) => 0,
            })
            .enumerate()
            .map(|(i, d)| d * 3usize.pow(i as u32))
            .sum::<usize>()
    };
    let mut norm_oracle = 0.0;
    for a in 0..basis.dim() {
        for b in 0..basis.dim() {
            let want = oracle[(embed(a), embed(b))];
            assert!((mine[(a, b)] - want).abs() < 1e-12, "({a},{b}) {} vs {want}", mine[(a, b)]);
            norm_oracle += want * want;
        }
    }
    // the oracle keeps the single-quasiparticle subspace invariant
    let total: f64 = (0..basis.dim())
        .flat_map(|b| (0..oracle.nrows()).map(move |r| (r, b)))
        .map(|(r, b)| oracle[(r, embed(b))].powi(2))
        .sum();
    assert!((total - norm_oracle).abs() < 1e-9);
}

#[test]
fn three_level_parts_split_cleanly() {
    let basis = Arc::new(SingleQuasiparticleBasis::new(5, DEFAULT_DIM_CAP).unwrap());
    let spec = HamiltonianSpec::single_quasiparticle(5, 1.0, 1.0, 0.2).unwrap();
    let (h0, h1) = build_single_quasiparticle_parts(&spec, &basis).unwrap();
    for a in 0..basis.dim() {
        for b in 0..basis.dim() {
            let same = basis.state(a).0 == basis.state(b).0;
            if !same {
                assert_eq!(h0.matrix[(a, b)], 0.0);
            } else {
                assert_eq!(h1.matrix[(a, b)], 0.0);
            }
        }
    }
    assert!(h0.asymmetry() < 1e-12 && h1.asymmetry() < 1e-12);
}

/// exp(−iHt)ψ by scaling and squaring of a Taylor series.
fn expm_apply(h: &Mat<f64>, psi: &[f64], t: f64) -> Vec<c64> {
    let n = h.nrows();
    let norm: f64 = (0..n).map(|j| (0..n).map(|i| h[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let s = ((norm * t).log2().ceil().max(0.0) as i32) + 1;
    let dt = t / 2f64.powi(s);
    let a = Mat::<c64>::from_fn(n, n, |i, j| c64::new(0.0, -dt * h[(i, j)]));
    let mut u = Mat::<c64>::identity(n, n);
    let mut term = Mat::<c64>::identity(n, n);
    for k in 1..30 {
        let next = &term * &a;
        term = Mat::from_fn(n, n, |i, j| next[(i, j)] / k as f64);
        u = &u + &term;
    }
    for _ in 0..s {
        u = &u * &u;
    }
    (0..n).map(|i| (0..n).map(|j| u[(i, j)] * psi[j]).sum()).collect()
}

#[test]
fn spectral_evolution_matches_matrix_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let basis = zero_sector(4);
    let spec = HamiltonianSpec::chain(4, 1.0, 1.0, random_fields(&mut rng, 2, 4.0), Boundary::Open).unwrap();
    let h = build_chain(&spec, &basis).unwrap();
    let prop = Propagator::from_decomposition(&diagonalize(&h, "L4").unwrap());
    let mut psi: Vec<f64> = (0..basis.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
    let nrm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|x| *x /= nrm);
    for t in [0.0, 0.3, 2.0, 17.5, 140.0] {
        let a = prop.state(&psi, t).unwrap();
        let b = expm_apply(&h.matrix, &psi, t);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-8, "t = {t}");
        }
    }
}

#[test]
fn block_propagator_matches_unresolved_propagator() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let target = zero_sector(8);
    let spec = HamiltonianSpec::chain(8, 1.0, 1.0, random_fields(&mut rng, 4, 2.0), Boundary::Periodic).unwrap();
    let whole = Propagator::from_decomposition(&diagonalize(&build_chain(&spec, &target).unwrap(), "all").unwrap());
    let blocks: Vec<SpinBasis> = [Parity::Even, Parity::Odd]
        .iter()
        .map(|&p| SpinBasis::enumerate(8, SymmetrySector::new(0, p).unwrap()).unwrap())
        .collect();
    let decs: Vec<_> = blocks
        .iter()
        .map(|b| diagonalize(&build_chain(&spec, &Arc::new(b.clone())).unwrap(), "b").unwrap())
        .collect();
    let parts: Vec<_> = blocks.iter().zip(decs.iter()).collect();
    let split = Propagator::from_blocks(&target, &parts).unwrap();
    let psi = neel_state(&target).unwrap();
    for t in [0.0, 1.0, 1e3, 1e6] {
        let a = whole.state(&psi, t).unwrap();
        let b = split.state(&psi, t).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-8, "t = {t}");
        }
    }
}

#[test]
fn unitarity_and_energy_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let basis = zero_sector(10);
    let spec = HamiltonianSpec::chain(10, 1.0, 1.0, random_fields(&mut rng, 5, 3.0), Boundary::Open).unwrap();
    let h = build_chain(&spec, &basis).unwrap();
    let prop = Propagator::from_decomposition(&diagonalize(&h, "L10").unwrap());
    let psi = neel_state(&basis).unwrap();
    let grid = TimeGrid::log(0.01, 1e8, 10).unwrap();
    let energy = Energy { matrix: h.matrix.clone() };
    let out = evolve_expectations(&prop, &psi, &grid, &[&Norm, &energy]).unwrap();
    let e0 = out[1].values[0][0];
    for k in 0..grid.len() {
        assert!((out[0].values[k][0] - 1.0).abs() < 1e-10);
        assert!((out[1].values[k][0] - e0).abs() < 1e-9 * e0.abs().max(1.0));
    }
}

#[test]
fn vacuum_dynamics_stays_in_the_vacuum() {
    let basis = zero_sector(8);
    let table = Arc::new(QuasiparticleTable::new(&basis).unwrap());
    let spec = HamiltonianSpec::chain(8, 1.0, 1.0, vec![0.0; 4], Boundary::Open).unwrap();
    let prop = Propagator::from_decomposition(&diagonalize(&build_chain(&spec, &basis).unwrap(), "h0").unwrap());
    let pops = Populations::new(table);
    let out = evolve_expectations(&prop, &neel_state(&basis).unwrap(), &TimeGrid::log(0.1, 1e6, 5).unwrap(), &[&pops]).unwrap();
    for row in &out[0].values {
        assert!((row[0] - 1.0).abs() < 1e-10);
    }
}

fn amplitudes(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (v.to_vec(), vec![0.0; v.len()])
}

#[test]
fn entropy_oracles() {
    let basis = zero_sector(6);
    let ent = HalfChainEntropy::new(&basis, Cut::Left, LogBase::Nats).unwrap();
    let (re, im) = amplitudes(&neel_state(&basis).unwrap());
    assert!(ent.entropy(&re, &im).abs() < 1e-12);

    // Bell pair on sites 3 and 4 across the cut, Néel elsewhere (site 1 = bit 0)
    let mut psi = vec![0.0; basis.dim()];
    let neel = 0b101010u32; // sites 1..6 = ↓ ↑ ↓ ↑ ↓ ↑
    let a = 0b100110u32; // sites 3 and 4 exchanged
    for (bits, amp) in [(neel, 1.0), (a, 1.0)] {
        psi[basis.locate(bits).unwrap().index] = amp / 2f64.sqrt();
    }
    let (re, im) = amplitudes(&psi);
    assert!((ent.entropy(&re, &im) - std::f64::consts::LN_2).abs() < 1e-12);
    let bits = HalfChainEntropy::new(&basis, Cut::Left, LogBase::Bits).unwrap();
    assert!((bits.entropy(&re, &im) - 1.0).abs() < 1e-12);
}

#[test]
fn entropy_of_random_states_is_cut_symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let basis = zero_sector(6);
    let left = HalfChainEntropy::new(&basis, Cut::Left, LogBase::Nats).unwrap();
    let right = HalfChainEntropy::new(&basis, Cut::Right, LogBase::Nats).unwrap();
    for _ in 0..20 {
        let mut re: Vec<f64> = (0..basis.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut im: Vec<f64> = (0..basis.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let n = re.iter().chain(&im).map(|x| x * x).sum::<f64>().sqrt();
        re.iter_mut().chain(im.iter_mut()).for_each(|x| *x /= n);
        let s = left.entropy(&re, &im);
        assert!((s - right.entropy(&re, &im)).abs() < 1e-10);
        assert!((0.0..=3.0 * std::f64::consts::LN_2 + 1e-12).contains(&s));
    }
}

#[test]
fn populations_of_the_uniform_state_count_sector_dimensions() {
    let basis = zero_sector(8);
    let table = Arc::new(QuasiparticleTable::new(&basis).unwrap());
    let dims = table.sector_dimensions();
    let pops = Populations::new(table);
    let a = 1.0 / (basis.dim() as f64).sqrt();
    let (re, im) = amplitudes(&vec![a; basis.dim()]);
    let p = pops.evaluate(&re, &im);
    for (pn, d) in p.iter().zip(&dims) {
        assert!((pn - *d as f64 / basis.dim() as f64).abs() < 1e-12);
    }
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

/// Configuration with the given pair contents (pair p on bits 2p+1, 2p+2 mod L).
fn config_from_pairs(contents: &[PairContent]) -> u32 {
    let sites = 2 * contents.len();
    let mut bits = 0u32;
    for (p, c) in contents.iter().enumerate() {
        let (a, b) = (2 * p + 1, (2 * p + 2) % sites);
        let (ua, ub) = match c {
            PairContent::Vacuum0 => (true, false),
            PairContent::Vacuum1 => (false, true),
            PairContent::Quasi0 => (true, true),
            PairContent::Quasi1 => (false, false),
        };
        bits |= (ua as u32) << a | (ub as u32) << b;
    }
    bits
}

#[test]
fn correlators_of_a_single_configuration() {
    use PairContent::*;
    let basis = zero_sector(8);
    let table = QuasiparticleTable::new(&basis).unwrap();
    let corr = Correlators::new(&table, CorrelatorNormalization::SectorInverse);
    let order = OrderParameter::new(&table, CorrelatorNormalization::SectorInverse).unwrap();
    let bits = config_from_pairs(&[Quasi0, Quasi1, Vacuum0, Vacuum0]);
    let mut probs = vec![0.0; basis.dim()];
    probs[basis.locate(bits).unwrap().index] = 1.0;
    // 0̄ on pair 1, 1̄ on pair 2: distance 1 one way, 3 the other way round
    assert_eq!(corr.value(&probs, 0, 1, 1), 1.0);
    assert_eq!(corr.value(&probs, 1, 0, 3), 1.0);
    assert_eq!(corr.value(&probs, 1, 0, 1), 0.0);
    assert_eq!(corr.value(&probs, 0, 1, 2), 0.0);
    assert_eq!(order.value(&probs), 1.0);

    let mut vac = vec![0.0; basis.dim()];
    vac[basis.locate(config_from_pairs(&[Vacuum0, Vacuum1, Vacuum0, Vacuum1])).unwrap().index] = 1.0;
    for (x, y, d) in [(0, 1, 1), (1, 0, 2), (0, 0, 3), (1, 1, 1)] {
        assert_eq!(corr.value(&vac, x, y, d), 0.0);
    }
    assert_eq!(order.value(&vac), 0.0);
}

#[test]
fn inversion_symmetric_states_have_no_order() {
    use PairContent::*;
    let basis = zero_sector(8);
    let table = QuasiparticleTable::new(&basis).unwrap();
    let order = OrderParameter::new(&table, CorrelatorNormalization::SectorInverse).unwrap();
    let mut probs = vec![0.0; basis.dim()];
    for c in [[Quasi0, Quasi1, Vacuum0, Vacuum0], [Quasi1, Quasi0, Vacuum0, Vacuum0]] {
        probs[basis.locate(config_from_pairs(&c)).unwrap().index] = 0.5;
    }
    assert!(order.value(&probs).abs() < 1e-15);
}

#[test]
fn occupation_of_the_localized_state() {
    let spec = HamiltonianSpec::single_quasiparticle(11, 1.0, 1.0, 0.1).unwrap();
    let basis = Arc::new(SingleQuasiparticleBasis::new(11, DEFAULT_DIM_CAP).unwrap());
    assert_eq!(spec.sites, basis.sites());
    let psi = localized_state(&basis, 5).unwrap();
    let occ = SiteOccupation::new(basis.clone());
    let (re, im) = amplitudes(&psi);
    let n = occ.evaluate(&re, &im);
    assert_eq!(n[5], 1.0);
    assert_eq!(n.iter().sum::<f64>(), 1.0);
}

#[test]
fn occupation_is_frozen_without_hopping_and_normalized_with_it() {
    for h in [0.0, 0.4] {
        let spec = HamiltonianSpec::single_quasiparticle(5, 1.0, 1.0, h).unwrap();
        let system = SingleQuasiparticleSystem::with_default_cap(&spec).unwrap();
        let occ = SiteOccupation::new(system.basis.clone());
        let psi = localized_state(&system.basis, 2).unwrap();
        let out = evolve_expectations(&system.propagator, &psi, &TimeGrid::log(0.1, 1e4, 5).unwrap(), &[&occ]).unwrap();
        for row in &out[0].values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            if h == 0.0 {
                assert!((row[2] - 1.0).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn decomposition_residuals_and_orthogonality() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let basis = zero_sector(8);
    let spec = HamiltonianSpec::chain(8, 1.0, 1.0, random_fields(&mut rng, 4, 3.0), Boundary::Periodic).unwrap();
    let h = build_chain(&spec, &basis).unwrap();
    let d = diagonalize_matrix(&h.matrix, "L8").unwrap();
    assert!(d.max_residual(&h.matrix) < 1e-10 * d.spectral_range());
    assert!(d.orthogonality_error() < 1e-10);
    let trace: f64 = (0..h.dim()).map(|i| h.matrix[(i, i)]).sum();
    let sum: f64 = d.eigenvalues.iter().sum();
    assert!((trace - sum).abs() < 1e-10 * trace.abs().max(1.0));
}
