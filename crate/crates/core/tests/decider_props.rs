mod common;

use common::*;
use padic_dulac::dyngroup::{check_dynamic, coefficient_margins, membership, Strength, TauSpec};
use padic_dulac::pdj::{decide_equiv_repelling, decide_equiv_semihyperbolic, pdj_pipeline, pdj_reduce};
use padic_dulac::pdulac::semihyperbolic_normalize;
use padic_dulac::{verify_conjugacy, FormalMap, MultiIndex, PrimeContext, Scalar, Series};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::Rng;

fn conjugate(k: &FormalMap, f: &FormalMap) -> FormalMap {
    k.compose(f).unwrap().compose(&k.inverse().unwrap()).unwrap()
}

/// A map with eigenvalues `(1, 1/2)` whose PDJ invariants are drawn from a small set,
/// so random pairs are equivalent with fair probability.
fn small_semihyperbolic(r: &mut StdRng, n: u32) -> FormalMap {
    let mut t1 = Series::zero(2, n);
    t1.set(MultiIndex::new(2, 0), s(1));
    t1.set(MultiIndex::new(3, 0), s(r.gen_range(0..2)));
    let mut t2 = Series::zero(2, n);
    t2.set(MultiIndex::new(1, 1), q(r.gen_range(0..2), 2));
    FormalMap::new(vec![s(1), q(1, 2)], vec![t1, t2]).unwrap()
}

fn small_repelling(r: &mut StdRng, n: u32) -> FormalMap {
    let mut t2 = Series::zero(2, n);
    t2.set(MultiIndex::new(2, 0), s(r.gen_range(0..2)));
    FormalMap::new(vec![q(1, 2), q(1, 4)], vec![Series::zero(2, n), t2]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn semihyperbolic_decider_laws(seed in any::<u64>()) {
        let ctx = PrimeContext::new(2).unwrap();
        let n = 6;
        let mut r = rng(seed);
        let f = conjugate(&random_unit_conjugator(&mut r, n, 0.3), &small_semihyperbolic(&mut r, n));
        let g = conjugate(&random_unit_conjugator(&mut r, n, 0.3), &small_semihyperbolic(&mut r, n));
        let k = random_unit_conjugator(&mut r, n, 0.3);
        prop_assert!(decide_equiv_semihyperbolic(&f, &f, n, &ctx).unwrap().equivalent);
        let fg = decide_equiv_semihyperbolic(&f, &g, n, &ctx).unwrap().equivalent;
        prop_assert_eq!(fg, decide_equiv_semihyperbolic(&g, &f, n, &ctx).unwrap().equivalent);
        prop_assert_eq!(fg, decide_equiv_semihyperbolic(&conjugate(&k, &f), &g, n, &ctx).unwrap().equivalent);
    }

    #[test]
    fn repelling_decider_laws(seed in any::<u64>()) {
        let ctx = PrimeContext::new(2).unwrap();
        let n = 6;
        let mut r = rng(seed);
        let f = conjugate(&random_unit_conjugator(&mut r, n, 0.3), &small_repelling(&mut r, n));
        let g = conjugate(&random_unit_conjugator(&mut r, n, 0.3), &small_repelling(&mut r, n));
        let k = random_unit_conjugator(&mut r, n, 0.3);
        prop_assert!(decide_equiv_repelling(&f, &f, 2, n, &ctx).unwrap().equivalent);
        let fg = decide_equiv_repelling(&f, &g, 2, n, &ctx).unwrap().equivalent;
        prop_assert_eq!(fg, decide_equiv_repelling(&g, &f, 2, n, &ctx).unwrap().equivalent);
        prop_assert_eq!(fg, decide_equiv_repelling(&conjugate(&k, &f), &g, 2, n, &ctx).unwrap().equivalent);
    }

    #[test]
    fn ladder_identity_and_margins(seed in any::<u64>(), p in prop::sample::select(vec![2u64, 3])) {
        let ctx = PrimeContext::new(p).unwrap();
        let lambda = q(1, p as i64);
        let f0 = random_pd_form(&mut rng(seed), &lambda, 8);
        let red = pdj_reduce(&f0, &ctx).unwrap();
        prop_assert_eq!(red.ladder.recompute_product(), red.ladder.assembled.clone());
        prop_assert!(red.ladder.all_margins_nonnegative());
        prop_assert!(red.ladder.growth_holds(&ctx));
        prop_assert!(red.residual.is_empty());
    }

    #[test]
    fn pipeline_form_conjugates_to_input(seed in any::<u64>()) {
        let ctx = PrimeContext::new(2).unwrap();
        let n = 7;
        let f = random_semihyperbolic(&mut rng(seed), &q(1, 2), n, 0.4);
        let form = pdj_pipeline(&f, n, &ctx).unwrap();
        let direct = form.to_map(n).unwrap();
        // the PDJ form is itself a semihyperbolic input with the same invariants
        prop_assert!(decide_equiv_semihyperbolic(&f, &direct, n, &ctx).unwrap().equivalent);
        let pd = semihyperbolic_normalize(&f, n, &ctx).unwrap();
        prop_assert!(verify_conjugacy(&f, &pd.normal_form, &pd.conjugator).unwrap().is_empty());
    }
}

fn random_member(r: &mut StdRng, spec: &TauSpec, n: u32) -> FormalMap {
    let units = [s(1), s(-1), s(3), q(1, 3)];
    let eigs: Vec<Scalar> = (0..2).map(|_| units[r.gen_range(0..units.len())].clone()).collect();
    let raw = random_map(r, &[s(1), s(1)], n, 0.4);
    let tails = (0..2)
        .map(|k| {
            let mut t = Series::zero(2, n);
            for (idx, c) in raw.tail(k).terms() {
                t.set(idx, c * &spec.eval(idx, k).unwrap().recip().unwrap());
            }
            t
        })
        .collect();
    FormalMap::new(eigs, tails).unwrap()
}

fn dynamic_specs() -> impl Strategy<Value = TauSpec> {
    prop::sample::select(vec![
        TauSpec::Maxes { lambda: q(1, 2) },
        TauSpec::Mixed { lambda: q(1, 2), n: 2 },
        TauSpec::Mixed { lambda: q(1, 2), n: 3 },
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn group_closure(seed in any::<u64>(), spec in dynamic_specs()) {
        let ctx = PrimeContext::new(2).unwrap();
        let mut r = rng(seed);
        let (g, h) = (random_member(&mut r, &spec, 8), random_member(&mut r, &spec, 8));
        prop_assert!(membership(&g, &spec, &ctx).unwrap().passes());
        prop_assert!(membership(&g.compose(&h).unwrap(), &spec, &ctx).unwrap().passes());
        prop_assert!(membership(&g.inverse().unwrap(), &spec, &ctx).unwrap().passes());
    }

    #[test]
    fn dynamic_lemma(seed in any::<u64>(), spec in dynamic_specs()) {
        // F has tail in F(τ) but non-unit eigenvalues; H ∈ G(τ)
        let ctx = PrimeContext::new(2).unwrap();
        let mut r = rng(seed);
        let member = random_member(&mut r, &spec, 7);
        let f = FormalMap::new(vec![s(2), s(6)], member.tails().to_vec()).unwrap();
        let h = random_member(&mut r, &spec, 7);
        prop_assert!(coefficient_margins(&f, &spec, &ctx).unwrap().iter().all(|c| c.margin >= 0));
        let fh = f.compose(&h).unwrap();
        prop_assert!(coefficient_margins(&fh, &spec, &ctx).unwrap().iter().all(|c| c.margin >= 0));
    }

    #[test]
    fn witnesses_recheck_and_strong_implies_weak(
        p in prop::sample::select(vec![2u64, 3]),
        e in prop::sample::select(vec![1i64, 2]),
        bump in 0i64..3,
    ) {
        // τ(n) = λ^(e·n + bump·[n even]): dynamic or not depending on the parameters
        let ctx = PrimeContext::new(p).unwrap();
        let spec = TauSpec::table_from(q(1, p as i64), 1, 1, 4, |_, a| {
            let n = i64::from(a.total());
            e * n + if n % 2 == 0 { bump } else { 0 }
        });
        let strong = check_dynamic(&spec, 4, Strength::Strong, &ctx).unwrap();
        let weak = check_dynamic(&spec, 4, Strength::Weak, &ctx).unwrap();
        if strong.is_none() {
            prop_assert!(weak.is_none());
        }
        for w in strong.iter().chain(weak.iter()) {
            prop_assert!(w.recheck(&spec, &ctx).unwrap());
        }
    }
}

#[test]
fn factorial_weak_and_sigma_runs() {
    for p in [2u64, 3, 5] {
        let ctx = PrimeContext::new(p).unwrap();
        assert!(check_dynamic(&TauSpec::Factorial, 5, Strength::Weak, &ctx)
            .unwrap()
            .is_none());
        let sigma = TauSpec::Sigma { q: s(p as i64), m: 3 };
        if let Some(w) = check_dynamic(&sigma, 6, Strength::Weak, &ctx).unwrap() {
            assert!(w.recheck(&sigma, &ctx).unwrap());
        }
    }
}

#[test]
fn random_pairs_hit_both_verdicts() {
    let ctx = PrimeContext::new(2).unwrap();
    let n = 6;
    let (mut semi, mut rep) = ([0; 2], [0; 2]);
    for seed in 0..30 {
        let mut r = rng(seed);
        let f = conjugate(
            &random_unit_conjugator(&mut r, n, 0.3),
            &small_semihyperbolic(&mut r, n),
        );
        let g = conjugate(
            &random_unit_conjugator(&mut r, n, 0.3),
            &small_semihyperbolic(&mut r, n),
        );
        semi[usize::from(decide_equiv_semihyperbolic(&f, &g, n, &ctx).unwrap().equivalent)] += 1;
        let f = conjugate(&random_unit_conjugator(&mut r, n, 0.3), &small_repelling(&mut r, n));
        let g = conjugate(&random_unit_conjugator(&mut r, n, 0.3), &small_repelling(&mut r, n));
        rep[usize::from(decide_equiv_repelling(&f, &g, 2, n, &ctx).unwrap().equivalent)] += 1;
    }
    assert!(semi.iter().all(|&c| c > 0), "{semi:?}");
    assert!(rep.iter().all(|&c| c > 0), "{rep:?}");
}
