//! Randomized algebraic properties.

use incomplete_ustat::bounds::{censor, explicit_complete_bound, k_nmd, thm_bound, BoundRegime};
use incomplete_ustat::combinatorics::{binom, rank, unrank};
use incomplete_ustat::estimators::incomplete_u;
use incomplete_ustat::montecarlo::ks_to_normal;
use incomplete_ustat::rng::{domain, stream};
use incomplete_ustat::stein::stein_f;
use incomplete_ustat::{exact_moments, sample_design, BernoulliDesign, Dataset, Kernel, SourceLaw};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rank_unrank_round_trip(n in 2usize..120, frac in 0.0f64..1.0, pick in any::<u128>()) {
        let m = 1 + ((n / 2) as f64 * frac) as usize;
        let m = m.min(n);
        let total = binom(n as u64, m as u64).unwrap();
        let r = pick % total;
        let s = unrank(r, n, m).unwrap();
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*s.last().unwrap() < n);
        prop_assert_eq!(rank(&s, n).unwrap(), r);
    }

    #[test]
    fn unrank_preserves_order(n in 4usize..60, a in any::<u64>(), b in any::<u64>()) {
        let m = n / 3 + 1;
        let total = binom(n as u64, m as u64).unwrap();
        let (ra, rb) = ((a as u128) % total, (b as u128) % total);
        let (sa, sb) = (unrank(ra, n, m).unwrap(), unrank(rb, n, m).unwrap());
        // colex: compare from the largest element down
        let colex = sa.iter().rev().cmp(sb.iter().rev());
        prop_assert_eq!(colex, ra.cmp(&rb));
    }

    #[test]
    fn censor_is_a_contraction(a in -5.0f64..5.0, w in 0.0f64..5.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
        let b = a + w;
        let d = (censor(y, a, b).unwrap() - censor(z, a, b).unwrap()).abs();
        prop_assert!(d <= (y - z).abs());
        prop_assert!(censor(y.abs(), f64::NEG_INFINITY, b.abs()).unwrap() <= y.abs());
    }

    #[test]
    fn stein_solution_symmetry_and_bounds(z in -10.0f64..10.0, w in -10.0f64..10.0) {
        let s = stein_f(z, w);
        let t = stein_f(-z, -w);
        prop_assert!((s.f - t.f).abs() <= 1e-12);
        prop_assert!(s.f > 0.0 && s.f <= 0.63);
        prop_assert!((z * s.f).abs() <= 1.0);
        prop_assert!(s.fprime.abs() <= 1.0);
    }

    #[test]
    fn ks_is_a_probability_distance(xs in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let d = ks_to_normal(&xs).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-15);
    }

    #[test]
    fn k_nmd_decreases_in_d_and_n(n in 8usize..200, m in 2usize..4) {
        prop_assume!(m < n / 2);
        for d in 1..m {
            prop_assert!(k_nmd(n, m, d + 1).unwrap() < k_nmd(n, m, d).unwrap());
        }
        for d in 1..=m {
            prop_assert!(k_nmd(n + 1, m, d).unwrap() < k_nmd(n, m, d).unwrap());
        }
        let total = binom(n as u64, m as u64).unwrap() as f64;
        prop_assert!((k_nmd(n, m, m).unwrap() * total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_totals_are_sums_of_nonnegative_terms(n in 20usize..2000, frac in 0.001f64..0.9, use_4th in any::<bool>()) {
        let profile = exact_moments(&Kernel::sample_variance(), &SourceLaw::uniform3()).unwrap();
        let total = binom(n as u64, 2).unwrap() as f64;
        let budget = ((total * frac) as u64).max(1);
        let mut reports = vec![explicit_complete_bound(&profile, n, 2).unwrap()];
        for regime in [BoundRegime::NggN, BoundRegime::NllNd, BoundRegime::NasympN] {
            if let Ok(r) = thm_bound(regime, &profile, n, 2, budget, use_4th) {
                reports.push(r);
            }
        }
        for r in &reports {
            prop_assert!(r.terms.iter().all(|t| t.1 >= 0.0));
            prop_assert_eq!(r.total, r.terms.iter().map(|t| t.1).sum::<f64>());
        }
    }

    #[test]
    fn bundles_are_reproducible(data_seed in any::<u64>(), design_seed in any::<u64>(), n in 8usize..30) {
        let law = SourceLaw::uniform3();
        let k = Kernel::sample_variance();
        let run = || {
            let data = Dataset::generate(&law, n, 1, data_seed);
            let design = BernoulliDesign::new(n, 2, 7, design_seed).unwrap();
            let sd = sample_design(&design, &mut stream(design_seed, domain::DESIGN, 0));
            incomplete_u(&data, &k, &sd, 0.5).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
