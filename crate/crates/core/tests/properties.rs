use proptest::prelude::*;
use rug::Rational;

use occupancy::exact::{enumerate_pmf, exact_pmf, pmf_moments};
use occupancy::scheme::{derive, SchemeParams};

fn scheme(max_cells: usize, max_sets: usize) -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2..=max_cells).prop_flat_map(move |n| (Just(n), prop::collection::vec(1..n, 1..=max_sets)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn set_order_does_not_matter((n, sets) in scheme(30, 4), rot in 0usize..4) {
        let mut rotated = sets.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let a = exact_pmf(&SchemeParams::new(n, sets).unwrap()).unwrap();
        let b = exact_pmf(&SchemeParams::new(n, rotated).unwrap()).unwrap();
        prop_assert!(a.iter().eq(b.iter()));
    }

    #[test]
    fn oracles_agree((n, sets) in scheme(9, 3)) {
        let p = SchemeParams::new(n, sets).unwrap();
        let a = exact_pmf(&p).unwrap();
        let b = enumerate_pmf(&p).unwrap();
        prop_assert!(a.iter().eq(b.iter()));
    }

    #[test]
    fn variance_identity((n, sets) in scheme(40, 5)) {
        let p = SchemeParams::new(n, sets).unwrap();
        let d = derive(&p);
        let m = pmf_moments(&exact_pmf(&p).unwrap());
        prop_assert_eq!(&m.mean, &Rational::from(&d.q_s * n as u64));
        prop_assert_eq!(&m.variance, &d.var_mu0);
        if let Ok(b) = d.b_n() {
            prop_assert_eq!(m.variance, Rational::from(&d.sigma2 * n as u64) * (Rational::from(1) + b));
        }
    }

    #[test]
    fn support_is_tight((n, sets) in scheme(25, 4)) {
        let p = SchemeParams::new(n, sets).unwrap();
        let pmf = exact_pmf(&p).unwrap();
        prop_assert!(pmf.prob(p.support_min()) > 0);
        prop_assert!(pmf.prob(p.support_max()) > 0);
        prop_assert_eq!(pmf.total(), Rational::from(1));
    }
}
