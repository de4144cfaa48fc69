mod common;

use common::*;
use padic_dulac::{FormalMap, MultiIndex, PrimeContext, Series};
use proptest::prelude::*;

fn to_poly_pair(f: &FormalMap) -> (Poly, Poly) {
    let c = f.components();
    (Poly::from_series(&c[0]), Poly::from_series(&c[1]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inverse_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_unit_conjugator(&mut r, 6, 0.5);
        let g = f.inverse().unwrap();
        prop_assert_eq!(f.compose(&g).unwrap(), FormalMap::identity(2, 6));
        prop_assert_eq!(g.compose(&f).unwrap(), FormalMap::identity(2, 6));
    }

    #[test]
    fn scaling_round_trip(seed in any::<u64>(), num in 1i64..20, den in 1i64..20) {
        let f = random_map(&mut rng(seed), &[s(3), q(1, 2)], 6, 0.5);
        let c = q(num, den);
        let back = f.conjugate_by_scaling(&c).unwrap().conjugate_by_scaling(&c.recip().unwrap()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn composition_matches_dense_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_map(&mut r, &[s(2), s(-1)], 6, 0.4);
        let g = random_map(&mut r, &[q(1, 3), s(5)], 6, 0.4);
        let fg = f.compose(&g).unwrap();
        let (f1, f2) = to_poly_pair(&f);
        let (g1, g2) = to_poly_pair(&g);
        let (h1, h2) = to_poly_pair(&fg);
        prop_assert_eq!(f1.compose(&g1, &g2), h1);
        prop_assert_eq!(f2.compose(&g1, &g2), h2);
    }

    #[test]
    fn composition_is_associative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, c) = (
            random_unit_conjugator(&mut r, 5, 0.4),
            random_unit_conjugator(&mut r, 5, 0.4),
            random_unit_conjugator(&mut r, 5, 0.4),
        );
        prop_assert_eq!(
            a.compose(&b).unwrap().compose(&c).unwrap(),
            a.compose(&b.compose(&c).unwrap()).unwrap()
        );
    }

    #[test]
    fn right_distribution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_tail(&mut r, 2, 5, 1, 0.5, 3);
        let g = random_tail(&mut r, 2, 5, 1, 0.5, 3);
        let h = random_unit_conjugator(&mut r, 5, 0.4).components();
        let lhs = f.add(&g).unwrap().compose(&h).unwrap();
        let rhs = f.compose(&h).unwrap().add(&g.compose(&h).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let f = random_map(&mut rng(seed), &[q(1, 2), q(-3, 4)], 5, 0.5);
        let text = serde_json::to_string(&f).unwrap();
        prop_assert_eq!(serde_json::from_str::<FormalMap>(&text).unwrap(), f);
    }

    #[test]
    fn growth_certificate_bounds_every_term(seed in any::<u64>(), p in prop::sample::select(vec![2u64, 3, 5])) {
        let ctx = PrimeContext::new(p).unwrap();
        let mut r = rng(seed);
        let f = random_map(&mut r, &[s(1), s(1)], 6, 0.5).conjugate_by_scaling(&q(1, p as i64)).unwrap();
        let cert = f.growth_certificate(&ctx).unwrap();
        let e = cert.bound.exponent.unwrap();
        prop_assert_eq!(cert.radius.exponent, Some(-e));
        for (_, idx, c) in f.nonlinear_terms() {
            // |c| ≤ p^(e|a|) ⇔ v(c) ≥ -e|a|
            prop_assert!(ctx.val(c).unwrap() >= -e * i64::from(idx.total()));
        }
        let tight = f.nonlinear_terms().any(|(_, idx, c)| ctx.val(c).unwrap() < -(e - 1) * i64::from(idx.total()));
        prop_assert!(tight, "bound exponent {} is not minimal", e);
    }
}

#[test]
fn left_distribution_fails() {
    // F = x², G = x, H = y at N = 3: (G+H)² ≠ G² + H²
    let f = Series::monomial(2, 3, MultiIndex::new(2, 0), s(1));
    let g = vec![Series::var(2, 3, 0), Series::var(2, 3, 1)];
    let h = vec![Series::var(2, 3, 1), Series::var(2, 3, 0)];
    let sum: Vec<Series> = g.iter().zip(&h).map(|(a, b)| a.add(b).unwrap()).collect();
    let lhs = f.compose(&sum).unwrap();
    let rhs = f.compose(&g).unwrap().add(&f.compose(&h).unwrap()).unwrap();
    let diff = lhs.sub(&rhs).unwrap();
    assert_eq!(diff.coeff(MultiIndex::new(1, 1)), s(2));
    assert_eq!(diff.len(), 1);
}

#[test]
fn random_inverse_batch() {
    for seed in 0..100 {
        let f = random_map(&mut rng(seed), &[s(3), q(-1, 5)], 6, 0.5);
        let g = f.inverse().unwrap();
        assert_eq!(f.compose(&g).unwrap(), FormalMap::identity(2, 6), "seed {seed}");
        assert_eq!(g.compose(&f).unwrap(), FormalMap::identity(2, 6), "seed {seed}");
    }
}
