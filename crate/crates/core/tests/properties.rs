use num_bigint::BigInt;
use num_traits::Zero;
use proptest::prelude::*;
use undulation_core::curve::{
    act_linear, compose_curve, cross, random_curve, random_undulation_curve, tangency_oracle, CurveFile,
    DecompositionWitness, LinearForm, TernaryForm,
};
use undulation_core::exactnum::{ExactRational, PrimeField, Rationals, Ring, MERSENNE_31, MERSENNE_61};
use undulation_core::idealgen::{component_dim, ComponentSpec};
use undulation_core::undulation::{invariant_quartic, invariant_value, InvariantReportFile, Verdict};

fn q(v: i64) -> ExactRational {
    Rationals.from_i64(v)
}

fn arb_form(d: u32, bound: i64) -> impl Strategy<Value = TernaryForm<Rationals>> {
    let k = ((d + 1) * (d + 2) / 2) as usize;
    prop::collection::vec(-bound..=bound, k)
        .prop_map(move |c| TernaryForm::from_coeffs(Rationals, d, c.into_iter().map(q).collect()).unwrap())
}

fn arb_line() -> impl Strategy<Value = LinearForm<Rationals>> {
    [-9i64..=9, -9i64..=9, -9i64..=9]
        .prop_filter("nonzero line", |v| v.iter().any(|&x| x != 0))
        .prop_map(|v| LinearForm(v.map(q)))
}

fn arb_witness() -> impl Strategy<Value = DecompositionWitness<Rationals>> {
    (arb_line(), arb_line(), -9i64..=9, arb_form(3, 20))
        .prop_filter("u and v independent", |(u, v, h, _)| {
            *h != 0 && cross(&Rationals, &u.0, &v.0).iter().any(|c| !c.is_zero())
        })
        .prop_map(|(u, v, h, w)| DecompositionWitness {
            u,
            h: TernaryForm::from_coeffs(Rationals, 0, vec![q(h)]).unwrap(),
            v,
            w,
        })
}

/// Products of elementary shears; determinant 1 by construction.
fn arb_unimodular() -> impl Strategy<Value = [[ExactRational; 3]; 3]> {
    prop::collection::vec((0usize..3, 1usize..3, -3i64..=3), 1..=12).prop_map(|ops| {
        let mut g: [[ExactRational; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| q((i == j) as i64)));
        for (i, off, t) in ops {
            let j = (i + off) % 3;
            for c in 0..3 {
                g[i][c] = &g[i][c] + q(t) * &g[j][c];
            }
        }
        g
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decomposed_quartics_have_zero_invariant(wit in arb_witness()) {
        let p = compose_curve(&wit).unwrap();
        let rep = invariant_quartic(&p).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::Zero);
        prop_assert!(rep.lines.iter().any(|l| cross(&Rationals, &l.0, &wit.v.0).iter().all(|c| c.is_zero())));
        prop_assert!(tangency_oracle(&wit).unwrap().passed());
    }

    #[test]
    fn invariant_is_homogeneous_of_degree_60(form in arb_form(4, 30), num in 1i64..=7, den in 1i64..=7, neg in any::<bool>()) {
        let p = undulation_core::curve::PlaneCurve::new(form).unwrap();
        let lambda = ExactRational::new(BigInt::from(if neg { -num } else { num }), BigInt::from(den));
        let v = invariant_value(&p).unwrap();
        prop_assert_eq!(invariant_value(&p.scale(&lambda)).unwrap(), num_traits::pow(lambda, 60) * v);
    }

    #[test]
    fn invariant_is_sl3_invariant(form in arb_form(4, 10), g in arb_unimodular()) {
        let p = undulation_core::curve::PlaneCurve::new(form).unwrap();
        prop_assert_eq!(invariant_value(&act_linear(&g, &p).unwrap()).unwrap(), invariant_value(&p).unwrap());
    }

    #[test]
    fn undulation_is_preserved_by_linear_changes(seed in any::<u64>(), g in arb_unimodular()) {
        let (p, _) = random_undulation_curve(4, &Rationals, seed, 20).unwrap();
        let gp = act_linear(&g, &p).unwrap();
        prop_assert!(invariant_value(&gp).unwrap().is_zero());
    }

    #[test]
    fn report_json_round_trips(seed in 0u64..1000, undulating in any::<bool>()) {
        let p = if undulating {
            random_undulation_curve(4, &Rationals, seed, 10).unwrap().0
        } else {
            random_curve(4, &Rationals, seed, 10).unwrap()
        };
        let file = invariant_quartic(&p).unwrap().to_file();
        let text = serde_json::to_string(&file).unwrap();
        prop_assert_eq!(serde_json::from_str::<InvariantReportFile>(&text).unwrap(), file);
        let back = CurveFile::parse(&serde_json::to_string(&CurveFile::from_curve(&p)).unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn component_dims_do_not_depend_on_seed_or_prime(seed in any::<u64>(), n in 0u32..=2, m in 0u32..=5) {
        let d61 = component_dim(&ComponentSpec::total(4, n, m, MERSENNE_61, seed).unwrap()).unwrap();
        let d31 = component_dim(&ComponentSpec::total(4, n, m, MERSENNE_31, seed ^ 1).unwrap()).unwrap();
        let want = [[0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, 3]][n as usize][m as usize];
        prop_assert_eq!(d61, want);
        prop_assert_eq!(d31, want);
    }
}

#[test]
fn invariant_is_consistent_with_reduction_mod_p() {
    // value(P) mod p equals the determinant of the shipped matrix over GF(p)
    let app = undulation_core::undulation::load_appendix().unwrap();
    for seed in 0..5 {
        let p = random_curve(4, &Rationals, seed, 40).unwrap();
        let v = invariant_value(&p).unwrap();
        for prime in [MERSENNE_61, MERSENNE_31] {
            let f = PrimeField::new(prime).unwrap();
            let pm = p.map_ring(f, |c| f.reduce_rational(c)).unwrap();
            let m = app.matrix.reduce_mod(f).unwrap();
            let d = undulation_core::undulation::det_at_mod(&m, &pm).unwrap();
            assert_eq!(d, f.reduce_rational(&v).unwrap());
        }
    }
}
