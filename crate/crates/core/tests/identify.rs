mod common;

use common::*;
use crossed_glmm::identify::*;
use crossed_glmm::likelihood::m_function;
use crossed_glmm::model::{logistic, SubsetKind, Theta};
use proptest::prelude::*;

#[test]
fn diagonal_kl_matches_two_outcome_oracle() {
    let th = Theta::new(0.5, 1.0, 1.0).unwrap();
    let th0 = Theta::new(0.0, 1.0, 1.0).unwrap();
    let r = kl_subset(&th, &th0, SubsetKind::Diagonal, 30).unwrap();
    let (p, q) = (p0_oracle(0.5, 2.0), p0_oracle(0.0, 2.0));
    let oracle = q * (p / q).ln() + (1.0 - q) * ((1.0 - p) / (1.0 - q)).ln();
    assert!(r.kl < 0.0);
    assert!((r.kl - oracle).abs() < 1e-10, "{} vs {oracle}", r.kl);
    assert!((r.kl - -0.016_450_660_2).abs() < 1e-10, "{}", r.kl);
}

#[test]
fn separation_grid_passes() {
    let th0 = Theta::new(0.2, 1.0, 0.8).unwrap();
    let r = check_b2_grid(&th0, 0.2, 3.0, 7, 30).unwrap();
    assert!(r.passed);
    assert!(!r.points.is_empty() && !r.skipped.is_empty());
    assert!(r.points.iter().all(|p| p.kl_pair <= 0.0 && p.kl_offdiag <= 0.0));
    assert!((r.delta - 3.018_713_8e-3).abs() < 1e-8, "{}", r.delta);
}

#[test]
fn injectivity_and_monotonicity_grids() {
    let two = check_m_injective((0.0, 0.5), (1.0, 1.0), 2, 30).unwrap();
    assert_eq!(two.values.len(), 2);
    assert!(two.values[1][2] > two.values[0][2]);
    let grid = check_m_injective((-2.0, 2.0), (0.25, 4.0), 15, 30).unwrap();
    assert!(grid.passed && grid.warning.is_none());
    assert!((grid.min_ratio - 1.355_988e-2).abs() < 1e-7, "{}", grid.min_ratio);

    let gammas: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let s = check_slepian_monotone(0.0, 2.0, &gammas, 30).unwrap();
    assert!(s.passed);
    let (m1, m2) = m_function(0.0, 2.0, 30).unwrap();
    assert!((s.values[0].1 - m1 * m1).abs() < 1e-10);
    assert!((s.values[10].1 - m2).abs() < 1e-10);
    assert!(m2 > m1 * m1);
    // P(1,1) at gamma = 0.5 from nested Simpson
    assert!((s.values[5].1 - p11_oracle(0.5, 0.0, 2.0)).abs() < 1e-8);
    assert!((s.min_increment - 6.596_524e-3).abs() < 1e-8, "{}", s.min_increment);
    // endpoint identity via the logistic directly
    let direct = normal_expectation(&|x| logistic(x).powi(2), 0.0, 2.0, 1e-13);
    assert!((m2 - direct).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kl_is_nonpositive_and_one_pair_subset_separates(
        mu in -2.0f64..2.0, s in 0.05f64..3.0, t in 0.05f64..3.0,
        mu0 in -2.0f64..2.0, s0 in 0.05f64..3.0, t0 in 0.05f64..3.0,
    ) {
        let th = Theta::new(mu, s, t).unwrap();
        let th0 = Theta::new(mu0, s0, t0).unwrap();
        let mut kls = Vec::new();
        for kind in [SubsetKind::Diagonal, SubsetKind::ReplicatePairDiagonal, SubsetKind::OffDiagonalPair] {
            let r = kl_subset(&th, &th0, kind, 30).unwrap();
            prop_assert!(r.kl <= 0.0);
            kls.push(r.kl);
        }
        prop_assert!(kls[1] < 0.0 || kls[2] < 0.0);
    }
}
