use catmap::classical::{apply_map, HyperbolicMap};
use catmap::hilbert::{translation_matrix, HilbertSpec};
use catmap::linalg::{hermiticity_residual, identity, max_abs, op_norm, unitarity_residual};
use catmap::propagator::{build_cat_matrix, egorov_defect_power};
use catmap::quantize::{compose_with_map, op_matrix, PartitionPair, TorusSymbol};
use catmap::C64;
use proptest::prelude::*;

fn spec(n: usize) -> HilbertSpec {
    HilbertSpec::new(n).unwrap()
}

fn small_symbol() -> impl Strategy<Value = TorusSymbol> {
    proptest::collection::vec(((-5i64..=5, -5i64..=5), (-1.0f64..1.0, -1.0f64..1.0)), 1..6)
        .prop_map(|v| TorusSymbol::from_modes(v.into_iter().map(|((a, b), (re, im))| ([a, b], C64::new(re, im)))))
}

/// Real symbol: each mode paired with its conjugate partner.
fn real_symbol() -> impl Strategy<Value = TorusSymbol> {
    small_symbol().prop_map(|a| {
        let conj = TorusSymbol::from_modes(a.coeffs.iter().map(|(l, c)| ([-l[0], -l[1]], c.conj())));
        a.add(&conj)
    })
}

/// Unimodular scalar `z` with `a = z b`, if one exists.
fn common_phase(a: &catmap::CMat, b: &catmap::CMat) -> Option<C64> {
    let n = a.nrows();
    let (i, j) = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).max_by(|x, y| b[*x].norm().partial_cmp(&b[*y].norm()).unwrap())?;
    let z = a[(i, j)] / b[(i, j)];
    let d = a - b * faer::Scale(z);
    (max_abs(d.as_ref()) < 1e-12).then_some(z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn translations_are_unitary(n in 1usize..2048, l1 in -5000i64..5000, l2 in -5000i64..5000) {
        let t = translation_matrix([l1, l2], spec(n));
        // unitarity of a phased permutation: one unimodular entry per column
        let mut seen = vec![false; n];
        for j in 0..n {
            let mut count = 0;
            for i in 0..n {
                let v = t[(i, j)];
                if v.norm() > 0.0 {
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                    count += 1;
                }
            }
            prop_assert_eq!(count, 1);
        }
        if n <= 200 {
            prop_assert!(unitarity_residual(t.as_ref()) <= 1e-12);
        }
    }

    #[test]
    fn translations_are_periodic_up_to_phase(n in 1usize..64, l1 in -50i64..50, l2 in -50i64..50) {
        let a = translation_matrix([l1 + n as i64, l2], spec(n));
        let b = translation_matrix([l1, l2], spec(n));
        let z = common_phase(&a, &b);
        prop_assert!(z.is_some());
        prop_assert!((z.unwrap().norm() - 1.0).abs() < 1e-12);
        let c = translation_matrix([l1, l2 + n as i64], spec(n));
        prop_assert!(common_phase(&c, &b).is_some());
    }

    #[test]
    fn translation_group_law(n in 1usize..64, l in (-30i64..30, -30i64..30), m in (-30i64..30, -30i64..30)) {
        let s = spec(n);
        let prod = translation_matrix([l.0, l.1], s) * translation_matrix([m.0, m.1], s);
        let sum = translation_matrix([l.0 + m.0, l.1 + m.1], s);
        let z = common_phase(&prod, &sum);
        prop_assert!(z.is_some());
        prop_assert!((z.unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_symbols_give_hermitian_operators(a in real_symbol(), n in 1usize..90) {
        prop_assert!(hermiticity_residual(op_matrix(&a, spec(n)).as_ref()) <= 1e-11);
    }

    #[test]
    fn quantization_is_linear(a in small_symbol(), b in small_symbol(), al in -2.0f64..2.0, be in -2.0f64..2.0, n in 1usize..60) {
        let s = spec(n);
        let lhs = op_matrix(&a.scaled(C64::new(al, 0.0)).add(&b.scaled(C64::new(be, 0.0))), s);
        let rhs = op_matrix(&a, s) * faer::Scale(C64::new(al, 0.0)) + op_matrix(&b, s) * faer::Scale(C64::new(be, 0.0));
        prop_assert!(max_abs((lhs - rhs).as_ref()) <= 1e-13);
    }

    #[test]
    fn position_symbols_quantize_to_diagonals(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..8), n in 1usize..512) {
        let a = TorusSymbol::from_modes(coeffs.iter().enumerate().map(|(j, c)| ([0, j as i64 - 3], C64::new(*c, 0.5 * c))));
        prop_assert!(a.is_position_only());
        let op = op_matrix(&a, spec(n));
        let mut res: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { a.eval_complex(i as f64 / n as f64, 0.0) } else { C64::new(0.0, 0.0) };
                res = res.max((op[(i, j)] - want).norm());
            }
        }
        prop_assert!(res <= 1e-12);
    }

    #[test]
    fn composition_matches_pointwise_pullback(a in small_symbol(), p in -2i64..=2, y in 0.0f64..1.0, eta in 0.0f64..1.0) {
        let de = HyperbolicMap::degli_esposti();
        let b = compose_with_map(&a, &de, p).unwrap();
        let q = apply_map(&de, [y, eta], p);
        prop_assert!((b.eval_complex(y, eta) - a.eval_complex(q[0], q[1])).norm() <= 1e-12);
    }
}

#[test]
fn partition_sums_to_identity() {
    let part = PartitionPair::standard();
    for n in [31usize, 64, 101] {
        let s = spec(n);
        let d = op_matrix(&part.a1, s) + op_matrix(&part.a2, s) - identity(n);
        assert!(max_abs(d.as_ref()) <= 1e-10);
    }
}

#[test]
fn iterated_egorov_within_cutoff() {
    let de = HyperbolicMap::degli_esposti();
    for n in [25usize, 51, 101] {
        let q = build_cat_matrix(&de, spec(n)).unwrap();
        for power in 1..=8u32 {
            let d = egorov_defect_power(&q, &TorusSymbol::cosine(1, 1), power).unwrap();
            assert!(d <= power as f64 * 1e-8, "N={n} n={power} defect {d}");
        }
    }
}

#[test]
fn powers_stay_unitary() {
    let de = HyperbolicMap::degli_esposti();
    for n in [33usize, 99] {
        let q = build_cat_matrix(&de, spec(n)).unwrap();
        for p in 1..=8i64 {
            assert!(unitarity_residual(q.power(p).as_ref()) <= p as f64 * 1e-10);
        }
    }
}

#[test]
fn egorov_for_every_low_mode_and_odd_n() {
    let de = HyperbolicMap::degli_esposti();
    for n in (3..=61usize).step_by(2) {
        let q = build_cat_matrix(&de, spec(n)).unwrap();
        for l1 in -8i64..=8 {
            for l2 in -8i64..=8 {
                let d = egorov_defect_power(&q, &TorusSymbol::mode([l1, l2]), 1).unwrap();
                assert!(d <= 1e-8, "N={n} l=({l1},{l2}) {d}");
            }
        }
    }
    // conjugation moves a non-invariant symbol
    let q = build_cat_matrix(&de, spec(31)).unwrap();
    let a = op_matrix(&TorusSymbol::cosine(1, 0), spec(31));
    let d = q.adjoint() * &a * &q.matrix - &a;
    assert!(op_norm(d.as_ref()) > 0.1);
}
