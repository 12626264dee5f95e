use num_complex::Complex64;
use quasitip::dynamics::{initial_adjacent_pair, propagate, to_complex, uniform_samples};
use quasitip::fockspace::{
    bound_pair_filter, build_sorted_sp_basis, fock_hamiltonian, fock_propagate, fock_state_matrix,
    miniband_distances, overlap_statistics, resonance_estimate, to_fock_basis, to_site_basis, SortedSpBasis,
};
use quasitip::linalg::Columns;
use quasitip::model::build_tp_hamiltonian;
use quasitip::spectral::{tp_minibands, Miniband, Sites};
use quasitip::{Error, ModelParams, PairBasis};

/// Dense `Vᵀ H V` with `H` the site-basis pair Hamiltonian.
fn rotated(v: &Columns, params: &ModelParams) -> Vec<f64> {
    let basis = PairBasis::new(params.n);
    let h = build_tp_hamiltonian(params, &basis).unwrap();
    let d = basis.dim();
    let mut hv = Columns::new(d);
    let mut col = vec![0.0; d];
    for q in 0..d {
        h.matvec(v.col(q), &mut col);
        hv.push(&col);
    }
    let mut out = vec![0.0; d * d];
    for p in 0..d {
        for q in 0..d {
            out[p * d + q] = v.col(p).iter().zip(hv.col(q)).map(|(a, b)| a * b).sum();
        }
    }
    out
}

fn basis(n: usize) -> SortedSpBasis {
    build_sorted_sp_basis(&ModelParams::new(n, 2.5, 0.0)).unwrap()
}

#[test]
fn fock_states_are_orthonormal() {
    let b = basis(14);
    let v = fock_state_matrix(&b);
    let d = v.len();
    for p in 0..d {
        for q in 0..d {
            let s: f64 = v.col(p).iter().zip(v.col(q)).map(|(a, b)| a * b).sum();
            let expected = if p == q { 1.0 } else { 0.0 };
            assert!((s - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn rotated_hamiltonian_matches_fock_matrix() {
    let b = basis(30);
    let v = fock_state_matrix(&b);
    for u in [2.0, 4.5, 7.9] {
        let fock = fock_hamiltonian(&b, u, None);
        let oracle = rotated(&v, &ModelParams::new(30, 2.5, u));
        let worst = fock.data.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "U={u}: {worst:e}");
    }
}

#[test]
fn diagonal_holds_renormalized_energies() {
    let b = basis(12);
    let fock = fock_hamiltonian(&b, 3.0, None);
    let pairs: Vec<(usize, usize)> = PairBasis::new(12).pairs().collect();
    for (k, &(mu, nu)) in pairs.iter().enumerate() {
        let e = b.renormalized_energy(mu, nu, 3.0).unwrap();
        assert!((fock.data[k * fock.n + k] - e).abs() < 1e-12);
    }
    let states = b.pair_states(3.0);
    assert_eq!(states.len(), pairs.len());
}

#[test]
fn fock_evolution_matches_site_evolution() {
    let n = 30;
    let b = basis(n);
    let v = fock_state_matrix(&b);
    let pairs = PairBasis::new(n);
    let psi0 = to_complex(&initial_adjacent_pair(14, &pairs).unwrap());
    let phi0 = to_fock_basis(&v, &psi0);
    let times = uniform_samples(200.0, 10);
    for u in [2.0, 4.5, 7.9] {
        let h = build_tp_hamiltonian(&ModelParams::new(n, 2.5, u), &pairs).unwrap();
        let (direct, psi) = propagate(&h, &psi0, 200.0, &times, Sites::Pair(&pairs), 14.5).unwrap();
        let fock = fock_propagate(&b, u, &phi0, 200.0, &times, None).unwrap();
        let worst = fock.pdfs.iter().zip(&direct.pdfs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "U={u}: {worst:e}");
        let back = to_site_basis(&v, &fock.phi);
        let amp = back.iter().zip(&psi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(amp < 1e-8);
    }
}

#[test]
fn cutoff_only_removes_couplings() {
    let b = basis(20);
    let full = fock_hamiltonian(&b, 4.0, None);
    let cut = fock_hamiltonian(&b, 4.0, Some(3.0));
    let huge = fock_hamiltonian(&b, 4.0, Some(1e9));
    assert_eq!(full, huge);
    let mut dropped = 0;
    for (k, (a, c)) in full.data.iter().zip(&cut.data).enumerate() {
        if k % (full.n + 1) == 0 {
            assert_eq!(a, c);
        } else if c != a {
            assert_eq!(*c, 0.0);
            dropped += 1;
        }
    }
    assert!(dropped > 0);
}

#[test]
fn fock_propagate_rejects_bad_input() {
    let b = basis(8);
    let d = PairBasis::new(8).dim();
    let zero = vec![Complex64::new(0.0, 0.0); d];
    assert!(matches!(fock_propagate(&b, 1.0, &zero, 1.0, &[], None), Err(Error::Precondition(_))));
    assert!(matches!(fock_propagate(&b, 1.0, &zero[1..], 1.0, &[], None), Err(Error::Config(_))));
    let mut phi = zero.clone();
    phi[0] = Complex64::new(1.0, 0.0);
    assert!(matches!(fock_propagate(&b, 1.0, &phi, 1.0, &[3.0], None), Err(Error::Config(_))));
}

#[test]
fn bound_pairs_respect_localization_length() {
    let b = basis(60);
    let xi = 1.0 / (1.25f64).ln();
    let bound = bound_pair_filter(&b, 2.5).unwrap();
    assert!(bound.iter().all(|&(mu, nu)| mu <= nu && (b.centers[nu] - b.centers[mu]).abs() < xi));
    let total = (0..60).flat_map(|mu| (mu..60).map(move |nu| (mu, nu))).filter(|&(mu, nu)| (b.centers[nu] - b.centers[mu]).abs() < xi).count();
    assert_eq!(bound.len(), total);
    assert_eq!(b.bound_pairs().unwrap(), bound);
}

#[test]
fn overlap_statistics_cover_all_compositions() {
    let b = basis(60);
    let stats = overlap_statistics(&b).unwrap();
    assert_eq!(stats.len(), 6);
    let bound = b.bound_pairs().unwrap().len();
    assert_eq!(stats.iter().map(|s| s.pairs).sum::<usize>(), bound);
    for s in &stats {
        if s.pairs > 0 {
            assert!(s.mean_self > 0.0 && s.mean_self <= 1.0);
        }
    }
    let primary: Vec<Miniband> = stats.iter().filter(|s| s.is_primary()).map(|s| s.miniband).collect();
    assert_eq!(primary, Miniband::PAIR.to_vec());

    let windows = tp_minibands(b.windows.as_ref().unwrap());
    let gaps = miniband_distances(&windows);
    assert_eq!(gaps.len(), 4);
    assert!(gaps.iter().all(|&g| g > 0.0));
    let res = resonance_estimate(&stats, &gaps, (0.0, 100.0)).unwrap();
    assert_eq!(res.len(), 4);
    assert_eq!((res[0].lower, res[0].upper), (Miniband::TP1, Miniband::TP2));
    assert!(resonance_estimate(&stats, &gaps[..3], (0.0, 100.0)).is_err());
}

#[test]
fn extended_spectrum_has_no_statistics() {
    let b = build_sorted_sp_basis(&ModelParams::new(40, 1.0, 0.0)).unwrap();
    assert!(b.extended_warning);
    assert!(overlap_statistics(&b).is_err());
}
