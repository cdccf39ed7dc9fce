use proptest::prelude::*;

use udmdi::channel::{
    equivalent_channel, excess_noise_at_optimal_gain, excess_noise_for_gain, fiber_transmittance,
    optimal_gain_sq, physicality_check, EquivalentChannel, GainChoice, LinkParams, Physicality,
    PhysicalityMode,
};
use udmdi::finite_size::{finite_size_key_rate, FiniteSizeConfig};
use udmdi::gaussian::{
    condition_on_homodyne_x, shared_covariance, source_covariance, symplectic_eigenvalues,
    symplectic_eigenvalues_eigensolver,
};
use udmdi::keyrate::{
    key_rate_symmetric_gm, key_rate_ud, mutual_information_homodyne, mutual_information_ud,
    plob_bound_for, LinkModel, ProtocolConfig,
};

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

#[test]
fn source_purity_grid() {
    for i in 0..100 {
        let v = 1.0 + 49.0 * i as f64 / 99.0;
        let s = symplectic_eigenvalues(&source_covariance(v).unwrap());
        assert!((s.nu1 - 1.0).abs() < 1e-9 && (s.nu2 - 1.0).abs() < 1e-9, "V={v}: {s:?}");
    }
}

#[test]
fn optimal_gain_minimizes_excess_noise() {
    let links = [(0.9, 0.002, 0.7, 0.01), (0.3, 0.05, 0.95, 0.0), (0.6, 0.0, 0.6, 0.1)];
    for (eta_a, eps_a, eta_b, eps_b) in links {
        for vm in [2.0, 20.0, 100.0, 500.0] {
            let g_num = golden_section_min(
                |g| excess_noise_for_gain(eta_a, eps_a, eta_b, eps_b, vm, g * g),
                0.05,
                20.0,
                1e-12,
            );
            let g2 = optimal_gain_sq(vm, eta_b).unwrap();
            assert!(((g_num * g_num) - g2).abs() / g2 < 1e-6, "g2 {g2} vs numeric {}", g_num * g_num);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reduction_identity(
        eta_a in 0.01f64..=1.0,
        eta_b in 0.01f64..=1.0,
        eps_a in 0.0f64..0.2,
        eps_b in 0.0f64..0.2,
        vm in 0.5f64..1000.0,
    ) {
        let g2 = optimal_gain_sq(vm, eta_b).unwrap();
        let general = excess_noise_for_gain(eta_a, eps_a, eta_b, eps_b, vm, g2);
        let closed = excess_noise_at_optimal_gain(eta_a, eps_a, eta_b, eps_b);
        prop_assert!((general - closed).abs() <= 1e-12 * closed.abs().max(1.0),
            "{general} vs {closed}");
    }
}

proptest! {
    #[test]
    fn source_is_pure(v in 1.0f64..50.0) {
        let s = symplectic_eigenvalues(&source_covariance(v).unwrap());
        prop_assert!((s.nu1 - 1.0).abs() < 1e-9);
        prop_assert!((s.nu2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectrum_routes_agree(
        v in 1.0f64..30.0,
        t_x in 0.0f64..1.0,
        t_p in 0.0f64..1.0,
        eps_x in 0.0f64..2.0,
        eps_p in 0.0f64..2.0,
    ) {
        let ch = EquivalentChannel { t_x, eps_prime_x: eps_x, t_p, eps_prime_p: eps_p, gain_sq: 2.0 };
        let cov = shared_covariance(v, &ch).unwrap();
        let a = symplectic_eigenvalues(&cov);
        let b = symplectic_eigenvalues_eigensolver(&cov);
        prop_assert!((a.nu1 - b.nu1).abs() < 1e-9 * a.nu1.max(1.0), "{a:?} vs {b:?}");
        prop_assert!((a.nu2 - b.nu2).abs() < 1e-9 * a.nu1.max(1.0), "{a:?} vs {b:?}");
    }

    #[test]
    fn phase_insensitive_channels_give_physical_states(
        v in 1.0f64..30.0,
        t in 0.0f64..1.0,
        eps in 0.0f64..2.0,
    ) {
        let ch = EquivalentChannel { t_x: t, eps_prime_x: eps, t_p: t, eps_prime_p: eps, gain_sq: 2.0 };
        prop_assert!(symplectic_eigenvalues(&shared_covariance(v, &ch).unwrap()).is_physical());
    }

    #[test]
    fn conditioning_reduces_x_variance(
        v in 1.0f64..30.0,
        t in 0.0f64..1.0,
        eps in 0.0f64..2.0,
    ) {
        let ch = EquivalentChannel { t_x: t, eps_prime_x: eps, t_p: t, eps_prime_p: eps, gain_sq: 2.0 };
        let cov = shared_covariance(v, &ch).unwrap();
        let cond = condition_on_homodyne_x(&cov);
        prop_assert!(cond[(0, 0)] <= cov.get(0, 0));
    }

    #[test]
    fn mutual_information_routes_agree(
        vm in 0.5f64..500.0,
        t in 0.001f64..1.0,
        eps in 0.0f64..3.0,
    ) {
        let v = (vm + 1.0).sqrt();
        let ch = EquivalentChannel { t_x: t, eps_prime_x: eps, t_p: t, eps_prime_p: eps, gain_sq: 2.0 };
        let a = mutual_information_ud(v, t, eps).unwrap();
        let b = mutual_information_homodyne(&shared_covariance(v, &ch).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn fiber_multiplicative(l1 in 0.0f64..100.0, l2 in 0.0f64..100.0) {
        let joint = fiber_transmittance(l1 + l2, 0.2).unwrap();
        let split = fiber_transmittance(l1, 0.2).unwrap() * fiber_transmittance(l2, 0.2).unwrap();
        prop_assert!((joint - split).abs() < 1e-12);
    }

    #[test]
    fn rates_never_exceed_plob(l in 0.0f64..60.0, asym in any::<bool>(), beta in 0.9f64..=1.0) {
        let cfg = if asym { ProtocolConfig::asymmetric(l) } else { ProtocolConfig::symmetric(l) }
            .with_beta(beta);
        let bound = plob_bound_for(&cfg.topology).unwrap();
        let ud = key_rate_ud(&cfg).unwrap();
        let gm = key_rate_symmetric_gm(&cfg).unwrap();
        prop_assert!(ud.key_rate >= 0.0 && gm.key_rate >= 0.0);
        prop_assert!(ud.key_rate <= bound && gm.key_rate <= bound);
    }
}

#[test]
fn symmetric_links_are_physical() {
    for i in 0..100 {
        let eta = 0.01 + 0.99 * i as f64 / 99.0;
        for j in 0..100 {
            let eps = 0.001 + 0.099 * j as f64 / 99.0;
            let r = physicality_check(eta, eps, eta, eps, PhysicalityMode::Corrected).unwrap();
            assert_eq!(r.verdict, Physicality::Physical, "eta={eta} eps={eps}");
        }
    }
}

#[test]
fn key_rate_decays_with_distance() {
    for asym in [false, true] {
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let l = 0.5 * i as f64;
            let cfg = if asym { ProtocolConfig::asymmetric(l) } else { ProtocolConfig::symmetric(l) };
            let k = key_rate_ud(&cfg).unwrap().key_rate;
            assert!(k <= prev, "asym={asym} L={l}: {k} > {prev}");
            prev = k;
        }
    }
}

#[test]
fn key_rate_monotone_in_beta_and_noise() {
    for l in [0.0, 2.0, 4.0, 6.0] {
        let base = ProtocolConfig::symmetric(l);
        let mut prev = -1.0;
        for b in [0.90, 0.92, 0.94, 0.96, 0.98, 1.0] {
            let k = key_rate_ud(&base.with_beta(b)).unwrap().key_rate;
            assert!(k >= prev);
            prev = k;
        }
        let mut prev = f64::INFINITY;
        for eps in [0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05] {
            let cfg = ProtocolConfig {
                links: LinkModel::Fiber { eps_a: eps, eps_b: eps },
                ..base
            };
            let k = key_rate_ud(&cfg).unwrap().key_rate;
            assert!(k <= prev);
            prev = k;
        }
    }
}

#[test]
fn finite_rate_grows_with_block_length() {
    for l in [0.5, 2.0, 4.0, 6.0] {
        let cfg = ProtocolConfig::symmetric(l);
        let rates: Vec<f64> = [1e6, 1e7, 1e8, 1e9]
            .iter()
            .map(|&n| {
                finite_size_key_rate(&cfg, &FiniteSizeConfig::half_split(n).unwrap(), None)
                    .unwrap()
                    .key_rate
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[0] <= w[1]), "L={l}: {rates:?}");
    }
}

#[test]
fn finite_size_worst_case_at_4km() {
    // The 1e6 block still yields key at 4 km symmetric, but well below 1e9.
    let cfg = ProtocolConfig::symmetric(4.0);
    let small = finite_size_key_rate(&cfg, &FiniteSizeConfig::half_split(1e6).unwrap(), None).unwrap();
    let large = finite_size_key_rate(&cfg, &FiniteSizeConfig::half_split(1e9).unwrap(), None).unwrap();
    assert!(small.key_rate < 0.7 * large.key_rate);
}

#[test]
fn explicit_links_match_fiber_model() {
    let cfg = ProtocolConfig::asymmetric(7.0);
    let links = cfg.link_params().unwrap();
    let explicit = ProtocolConfig {
        links: LinkModel::Explicit(LinkParams { ..links }),
        ..cfg
    };
    assert_eq!(key_rate_ud(&cfg).unwrap(), key_rate_ud(&explicit).unwrap());
    let ch = equivalent_channel(&links, 100.0, GainChoice::Optimal).unwrap();
    assert_eq!(ch, key_rate_ud(&cfg).unwrap().equivalent_channel);
}
