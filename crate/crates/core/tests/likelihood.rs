mod common;

use common::*;
use crossed_glmm::likelihood::*;
use crossed_glmm::model::{logistic, CrossedDesign, ResponseTable, SubsetKind, SubsetSpec, Theta};
use crossed_glmm::quadrature::{expect_1d, rule};
use crossed_glmm::Error;
use proptest::prelude::*;

fn exact(data: &ResponseTable, th: &Theta, order: usize) -> f64 {
    marginal_loglik_exact(data, th, order).unwrap().loglik
}

fn table(m: usize, n: usize, c: usize, bits: u64) -> ResponseTable {
    ResponseTable::from_bits(CrossedDesign::full_crossing(m, n, c).unwrap(), bits)
}

#[test]
fn structured_quadrature_equals_naive_tensor_with_same_rule() {
    let th = Theta::new(0.3, 0.8, 1.4).unwrap();
    for (m, n, c) in [(1, 2, 1), (2, 2, 1), (2, 3, 1), (2, 2, 2), (3, 2, 1)] {
        let d = CrossedDesign::full_crossing(m, n, c).unwrap();
        for bits in [0u64, 1, 0b1011, (1 << d.total()) - 1, 0b100110] {
            let bits = bits & ((1 << d.total()) - 1);
            let data = ResponseTable::from_bits(d.clone(), bits);
            let naive = naive_tensor_prob(&data, th.mu, th.sigma2, th.tau2, 10).ln();
            let fast = exact(&data, &th, 10);
            assert!((naive - fast).abs() < 1e-12, "{m}x{n}x{c} bits {bits:b}: {naive} vs {fast}");
        }
    }
}

#[test]
fn salamander_design_against_naive_tensor() {
    let d = CrossedDesign::salamander_style(2, 2).unwrap();
    let th = Theta::new(-0.4, 1.2, 0.6).unwrap();
    for bits in [0u64, 0b101101, 0b111111, 0b010010] {
        let data = ResponseTable::from_bits(d.clone(), bits);
        let naive = naive_tensor_prob(&data, th.mu, th.sigma2, th.tau2, 10).ln();
        assert!((naive - exact(&data, &th, 10)).abs() < 1e-12);
    }
}

#[test]
fn all_ones_two_by_two_against_high_order_oracle() {
    let data = table(2, 2, 1, 0b1111);
    let th = Theta::new(0.0, 1.0, 1.0).unwrap();
    let oracle = naive_tensor_prob(&data, 0.0, 1.0, 1.0, 60).ln();
    let q = exact(&data, &th, 30);
    assert!((q - oracle).abs() < 1e-6, "{q} vs {oracle}");
    let mc = marginal_loglik_mc(&data, &th, 20_000, 11, 30).unwrap();
    let se = mc.mc_std_error.unwrap();
    assert!((mc.loglik - oracle).abs() < 4.0 * se, "{} vs {oracle} (se {se})", mc.loglik);
}

#[test]
fn single_cell_is_p0() {
    let th = Theta::new(0.7, 0.6, 1.1).unwrap();
    let oracle = p0_oracle(0.7, 1.7);
    assert!((exact(&table(1, 1, 1, 1), &th, 30).exp() - oracle).abs() < 1e-9);
    assert!((exact(&table(1, 1, 1, 0), &th, 30).exp() - (1.0 - oracle)).abs() < 1e-9);
}

#[test]
fn degenerate_variances_give_bernoulli_likelihood() {
    let th = Theta::new(0.4, 0.0, 0.0).unwrap();
    let data = table(2, 3, 1, 0b101100);
    let h = logistic(0.4);
    let ones = data.values().iter().filter(|&&y| y == 1).count() as f64;
    let expected = ones * h.ln() + (6.0 - ones) * (1.0 - h).ln();
    assert!((exact(&data, &th, 30) - expected).abs() < 1e-12);
}

#[test]
fn outcome_probabilities_sum_to_one_on_parameter_grid() {
    let d = CrossedDesign::full_crossing(2, 2, 1).unwrap();
    for mu in [-1.0, 0.0, 1.0] {
        for s2 in [0.5, 1.0, 2.0] {
            for t2 in [0.5, 1.0, 2.0] {
                let th = Theta::new(mu, s2, t2).unwrap();
                let total: f64 = all_outcomes(&d).iter().map(|y| exact(y, &th, 30).exp()).sum();
                assert!((total - 1.0).abs() < 1e-8, "{th}: {total}");
            }
        }
    }
}

#[test]
fn sign_symmetry_at_zero_mean() {
    let th = Theta::new(0.0, 1.0, 1.0).unwrap();
    let ones = exact(&table(2, 2, 1, 0b1111), &th, 30);
    let zeros = exact(&table(2, 2, 1, 0), &th, 30);
    assert!((ones - zeros).abs() < 1e-13);
}

/// log of the full-data mass summed over completions of a subset pattern.
fn marginal_of(design: &CrossedDesign, spec: &SubsetSpec, pattern: u64, th: &Theta) -> f64 {
    let mask = spec.mask();
    all_outcomes(design)
        .iter()
        .enumerate()
        .filter(|(bits, _)| (*bits as u64) & mask == pattern)
        .map(|(_, y)| exact(y, th, 30).exp())
        .sum::<f64>()
        .ln()
}

#[test]
fn subset_likelihoods_match_summed_full_likelihood() {
    let th = Theta::new(0.3, 1.2, 0.7).unwrap();
    let d = CrossedDesign::full_crossing(2, 2, 1).unwrap();
    let diag = SubsetSpec::resolve(&d, SubsetKind::Diagonal);
    let off = SubsetSpec::resolve(&d, SubsetKind::OffDiagonalPair);
    for bits in 0..16u64 {
        let y = ResponseTable::from_bits(d.clone(), bits);
        let a = subset_diag_loglik(&y, &th, 30).unwrap().loglik;
        assert!((a - marginal_of(&d, &diag, bits & diag.mask(), &th)).abs() < 1e-8);
        let b = offdiag_pair_loglik(&y, &th, 30).unwrap().loglik;
        assert!((b - marginal_of(&d, &off, bits & off.mask(), &th)).abs() < 1e-7);
    }
    let d = CrossedDesign::salamander_style(2, 2).unwrap();
    let pairs = SubsetSpec::resolve(&d, SubsetKind::ReplicatePairDiagonal);
    for bits in [0u64, 0b000011, 0b110001, 0b111111, 0b100100] {
        let y = ResponseTable::from_bits(d.clone(), bits);
        let a = subset_pair_loglik(&y, &th, 30).unwrap().loglik;
        assert!((a - marginal_of(&d, &pairs, bits & pairs.mask(), &th)).abs() < 1e-8);
    }
}

#[test]
fn monte_carlo_within_three_standard_errors() {
    let th = Theta::new(0.2, 1.0, 0.8).unwrap();
    for (m, n, bits) in [(2, 2, 0b0110u64), (3, 3, 0b101100111)] {
        let data = table(m, n, 1, bits);
        let truth = exact(&data, &th, 30);
        let mc = marginal_loglik_mc(&data, &th, 4000, 5, 30).unwrap();
        assert_eq!(mc.method, Method::MonteCarlo);
        let se = mc.mc_std_error.unwrap();
        assert!((mc.loglik - truth).abs() < 3.0 * se, "{m}x{n}: {} vs {truth}, se {se}", mc.loglik);
    }
}

#[test]
fn monte_carlo_error_shrinks_like_root_draws() {
    let data = table(3, 3, 1, 0b110100111);
    let th = Theta::new(0.0, 1.0, 1.0).unwrap();
    let se = |draws| marginal_loglik_mc(&data, &th, draws, 9, 20).unwrap().mc_std_error.unwrap();
    let ratio = se(8000) / se(4000);
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn monte_carlo_is_deterministic_given_seed() {
    let data = table(3, 3, 1, 0b010011101);
    let th = Theta::new(0.1, 1.0, 1.0).unwrap();
    let a = marginal_loglik_mc(&data, &th, 500, 42, 20).unwrap();
    let b = marginal_loglik_mc(&data, &th, 500, 42, 20).unwrap();
    let c = marginal_loglik_mc(&data, &th, 500, 43, 20).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.loglik, c.loglik);
    assert!(matches!(marginal_loglik_mc(&data, &th, 10, 1, 20), Err(Error::InvalidParameter(_))));
}

#[test]
fn exact_quadrature_refuses_oversized_designs() {
    let data = table(6, 6, 1, 0);
    let th = Theta::new(0.0, 1.0, 1.0).unwrap();
    assert!(matches!(marginal_loglik_exact(&data, &th, 30), Err(Error::TooLarge { .. })));
}

#[test]
fn subset_functions_against_simpson() {
    assert!((p0(1.0, 2.0, 30).unwrap() - p0_oracle(1.0, 2.0)).abs() < 1e-10);
    assert!((p0(0.0, 2.0, 30).unwrap() - 0.5).abs() < 1e-12);
    let q = pair_masses(0.3, 2.0, 30).unwrap();
    let fine = pair_masses(0.3, 2.0, 80).unwrap();
    for (s, (mass, fine)) in q.iter().zip(fine).enumerate() {
        let oracle = normal_expectation(
            &|x| logistic(x).powi(s as i32) * logistic(-x).powi(2 - s as i32),
            0.3,
            2.0,
            1e-13,
        );
        // order 30 carries ~1e-9 rule error here; order 80 resolves it
        assert!((mass - oracle).abs() < 1e-8, "s={s}: {mass} vs {oracle}");
        assert!((fine - oracle).abs() < 1e-11, "s={s}: {fine} vs {oracle}");
    }
    for gamma in [0.0, 0.3, 0.8] {
        let v = p_gamma_11(gamma, 0.2, 1.5, 30).unwrap();
        let oracle = p11_oracle(gamma, 0.2, 1.5);
        assert!((v - oracle).abs() < 1e-8, "gamma {gamma}: {v} vs {oracle}");
    }
    let quad = expect_1d(logistic, 1.0, 2.0, rule(40).unwrap());
    assert!((quad - normal_expectation(&logistic, 1.0, 2.0, 1e-13)).abs() < 1e-9);
}

#[test]
fn p0_tail_bounds() {
    for k in 0..=100 {
        let lambda = -8.0 + 16.0 * k as f64 / 100.0;
        let p = p0(lambda, 2.0, 30).unwrap();
        assert!(1.0 - p <= (1.0 - lambda).exp() && p <= (1.0 + lambda).exp(), "lambda {lambda}");
    }
}

#[test]
fn degenerate_score_is_analytic() {
    let data = table(2, 3, 1, 0b110010);
    let th = Theta::mu_only(-0.3, 0.0, 0.0).unwrap();
    let g = loglik_gradient_fd(&data, &th, DEFAULT_STEP, 30).unwrap();
    let score: f64 = data.values().iter().map(|&y| y as f64 - logistic(-0.3)).sum();
    assert!((g[0] - score).abs() < 1e-7);
}

#[test]
fn gradient_rejects_boundary_points() {
    let data = table(2, 2, 1, 0b0101);
    let th = Theta::new(0.0, 1e-6, 1.0).unwrap();
    assert!(matches!(loglik_gradient_fd(&data, &th, DEFAULT_STEP, 20), Err(Error::Boundary(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn mu_score_bounded_by_observation_count(
        mu in -3.0f64..3.0, s2 in 0.1f64..3.0, t2 in 0.1f64..3.0, bits in 0u64..512,
    ) {
        let data = table(3, 3, 1, bits);
        let th = Theta::mu_only(mu, s2, t2).unwrap();
        let g = loglik_gradient_fd(&data, &th, DEFAULT_STEP, 30).unwrap();
        prop_assert!(g[0].abs() <= 9.0);
    }

    #[test]
    fn p0_strictly_increasing_and_bounded(a in -8.0f64..8.0, gap in 1e-3f64..2.0, psi2 in 0.0f64..6.0) {
        let lo = p0(a, psi2, 30).unwrap();
        let hi = p0(a + gap, psi2, 30).unwrap();
        prop_assert!(lo > 0.0 && hi < 1.0 && hi > lo);
    }

    #[test]
    fn exact_likelihood_is_a_probability(
        mu in -2.0f64..2.0, s2 in 0.0f64..3.0, t2 in 0.0f64..3.0, bits in 0u64..64,
    ) {
        let data = table(2, 3, 1, bits);
        let ll = exact(&data, &Theta::new(mu, s2, t2).unwrap(), 20);
        prop_assert!(ll < 0.0 && ll.is_finite());
    }

    #[test]
    fn transposition_swaps_variances(mu in -2.0f64..2.0, s2 in 0.1f64..3.0, t2 in 0.1f64..3.0, bits in 0u64..64) {
        let data = table(2, 3, 1, bits);
        let a = exact(&data, &Theta::new(mu, s2, t2).unwrap(), 16);
        let b = exact(&data.transpose(), &Theta::new(mu, t2, s2).unwrap(), 16);
        prop_assert!((a - b).abs() < 1e-10);
    }
}
