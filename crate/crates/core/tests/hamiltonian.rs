use proptest::prelude::*;
use quasitip::linalg::dense;
use quasitip::model::{build_sp_hamiltonian, build_tp_hamiltonian, potential};
use quasitip::{Boundary, Error, ModelParams, PairBasis};

/// First-quantized `H₁⊗1 + 1⊗H₁ + U Σ_j |jj⟩⟨jj|` on the N² product space,
/// projected onto symmetric states with an explicit isometry.
fn first_quantized_projection(p: &ModelParams) -> Vec<f64> {
    let n = p.n;
    let eps = potential(p);
    let mut h1 = vec![0.0; n * n];
    for j in 0..n {
        h1[j * n + j] = eps[j];
        if j + 1 < n {
            h1[j * n + j + 1] = 1.0;
            h1[(j + 1) * n + j] = 1.0;
        }
    }
    if p.boundary == Boundary::Periodic {
        h1[n - 1] += 1.0;
        h1[(n - 1) * n] += 1.0;
    }
    let nn = n * n;
    let mut h2 = vec![0.0; nn * nn];
    for a in 0..n {
        for b in 0..n {
            let row = a * n + b;
            for c in 0..n {
                h2[row * nn + c * n + b] += h1[a * n + c];
                h2[row * nn + a * n + c] += h1[b * n + c];
            }
            if a == b {
                h2[row * nn + row] += p.u;
            }
        }
    }
    let basis = PairBasis::new(n);
    let d = basis.dim();
    let mut s = vec![0.0; nn * d];
    for (k, (l, m)) in basis.pairs().enumerate() {
        if l == m {
            s[(l * n + l) * d + k] = 1.0;
        } else {
            let w = std::f64::consts::FRAC_1_SQRT_2;
            s[(l * n + m) * d + k] = w;
            s[(m * n + l) * d + k] = w;
        }
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for x in 0..nn {
                let si = s[x * d + i];
                if si == 0.0 {
                    continue;
                }
                for y in 0..nn {
                    acc += si * h2[x * nn + y] * s[y * d + j];
                }
            }
            out[i * d + j] = acc;
        }
    }
    out
}

#[test]
fn pair_hamiltonian_matches_projected_product_space() {
    for (n, u, boundary) in [
        (5, 0.0, Boundary::Open),
        (7, 3.3, Boundary::Open),
        (9, -1.5, Boundary::Periodic),
        (12, 7.9, Boundary::Open),
    ] {
        let p = ModelParams::new(n, 2.5, u).with_beta(0.4).with_boundary(boundary);
        let basis = PairBasis::new(n);
        let h = build_tp_hamiltonian(&p, &basis).unwrap().to_dense();
        let oracle = first_quantized_projection(&p);
        let worst = h.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "N={n} U={u}: {worst:e}");
    }
}

#[test]
fn doubly_occupied_hopping_carries_sqrt2() {
    let p = ModelParams::new(4, 0.0, 1.0);
    let basis = PairBasis::new(4);
    let h = build_tp_hamiltonian(&p, &basis).unwrap();
    let i = basis.index(1, 1).unwrap();
    let j = basis.index(1, 2).unwrap();
    let k = basis.index(0, 2).unwrap();
    assert!((h.get(i, j) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(h.get(j, k), 1.0);
    assert_eq!(h.get(i, i), 1.0);
}

#[test]
fn separable_spectrum_without_interaction() {
    let p = ModelParams::new(14, 2.5, 0.0).with_beta(1.1);
    let sp = dense::eigvalsh(14, &build_sp_hamiltonian(&p).unwrap().to_dense()).unwrap();
    let mut sums: Vec<f64> = (0..14).flat_map(|i| (i..14).map(move |j| (i, j))).map(|(i, j)| sp[i] + sp[j]).collect();
    sums.sort_by(f64::total_cmp);
    let basis = PairBasis::new(14);
    let tp = dense::eigvalsh(basis.dim(), &build_tp_hamiltonian(&p, &basis).unwrap().to_dense()).unwrap();
    for (a, b) in tp.iter().zip(&sums) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let bad = [
        ModelParams::new(1, 2.5, 0.0),
        ModelParams::new(10, -0.1, 0.0),
        ModelParams::new(10, f64::NAN, 0.0),
        ModelParams::new(10, 2.5, f64::INFINITY),
        ModelParams::new(10, 2.5, 0.0).with_alpha(1.0),
        ModelParams::new(10, 2.5, 0.0).with_beta(7.0),
        ModelParams::new(2, 2.5, 0.0).with_boundary(Boundary::Periodic),
    ];
    for p in bad {
        assert!(matches!(build_sp_hamiltonian(&p), Err(Error::Config(_))), "{p:?}");
    }
    let basis = PairBasis::new(6);
    assert!(matches!(
        build_tp_hamiltonian(&ModelParams::new(7, 2.5, 0.0), &basis),
        Err(Error::Config(_))
    ));
}

#[test]
fn pair_index_round_trip() {
    let basis = PairBasis::new(9);
    assert_eq!(basis.dim(), 45);
    for (k, (l, m)) in basis.pairs().enumerate() {
        assert_eq!(basis.index(l, m).unwrap(), k);
        assert_eq!(basis.index(m, l).unwrap(), k);
        assert_eq!(basis.pair(k).unwrap(), (l, m));
    }
    assert!(matches!(basis.index(2, 9), Err(Error::Index { .. })));
    assert!(basis.pair(45).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_symmetric(
        n in 3usize..16,
        lambda in 0.0f64..5.0,
        u in -10.0f64..10.0,
        beta in 0.0f64..std::f64::consts::TAU,
        periodic in any::<bool>(),
    ) {
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
        let p = ModelParams::new(n, lambda, u).with_beta(beta).with_boundary(boundary);
        let basis = PairBasis::new(n);
        let h = build_tp_hamiltonian(&p, &basis).unwrap();
        let d = h.dim();
        let dense = h.to_dense();
        for i in 0..d {
            for j in 0..d {
                prop_assert_eq!(dense[i * d + j], dense[j * d + i]);
            }
        }
        // Trace: Σ_{l<=m} (ε_l + ε_m) + N U.
        let eps = potential(&p);
        let expected: f64 = basis.pairs().map(|(l, m)| eps[l] + eps[m]).sum::<f64>() + n as f64 * u;
        let trace: f64 = h.diagonal().iter().sum();
        prop_assert!((trace - expected).abs() < 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn gershgorin_bounds_enclose_spectrum(n in 3usize..12, u in -8.0f64..8.0) {
        let p = ModelParams::new(n, 2.5, u);
        let basis = PairBasis::new(n);
        let h = build_tp_hamiltonian(&p, &basis).unwrap();
        let (lo, hi) = h.gershgorin_bounds();
        let ev = dense::eigvalsh(h.dim(), &h.to_dense()).unwrap();
        prop_assert!(ev[0] >= lo - 1e-12 && ev[ev.len() - 1] <= hi + 1e-12);
    }
}
