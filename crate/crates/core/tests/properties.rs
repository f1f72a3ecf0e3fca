use std::f64::consts::TAU;
use std::sync::Arc;

use learnsep::cuberoot::{self, BitConcept, RsaInstance};
use learnsep::decomposition::{CubeRootDecomposition, Decomposition, DlpDecomposition};
use learnsep::dlp::{self, DlpConcept, DlpInstance};
use learnsep::heuristic::{heuristic_success_rate, wrap_err_to_dont_know, Algorithm, DistributionalProblem, Verdict};
use learnsep::numtheory::{discrete_log, gcd, generate_dlp_instance, is_prime, mod_inverse, mod_pow};
use learnsep::power_of_data::{fit_cosine, random_circuit, simulate_expectation, CosineModel, PeriodicModel};
use learnsep::seeds::rng_from;
use proptest::prelude::*;

fn trial_division(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn primality_agrees_with_trial_division(n in 0u64..2_000_000) {
        prop_assert_eq!(is_prime(n), trial_division(n));
    }

    #[test]
    fn inverse_is_inverse(m in 2u64..(1 << 40), a in 1u64..(1 << 40)) {
        let a = a % m;
        match mod_inverse(a, m) {
            Ok(inv) => prop_assert_eq!((a as u128 * inv as u128 % m as u128) as u64, 1 % m),
            Err(_) => prop_assert_ne!(gcd(a, m), 1),
        }
    }

    #[test]
    fn pow_adds_exponents(b in 1u64..1_000_000_007, e in 0u64..(1 << 32), f in 0u64..(1 << 32)) {
        let p = 1_000_000_007;
        let lhs = mod_pow(b, e + f, p).unwrap();
        let rhs = (mod_pow(b, e, p).unwrap() as u128 * mod_pow(b, f, p).unwrap() as u128 % p as u128) as u64;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn generated_instances_are_safe_primes_with_generators(bits in 4u32..40, seed in any::<u64>()) {
        let (m, a) = generate_dlp_instance(bits, seed).unwrap();
        let p = m.p();
        prop_assert_eq!(64 - p.leading_zeros(), bits);
        prop_assert!(is_prime(p) && is_prime((p - 1) / 2));
        prop_assert!(m.is_generator(a));
    }

    #[test]
    fn discrete_log_inverts_power(seed in any::<u64>(), y in any::<u64>()) {
        let (m, a) = generate_dlp_instance(28, seed).unwrap();
        let y = y % m.order();
        prop_assert_eq!(discrete_log(&m, a, mod_pow(a, y, m.p()).unwrap()).unwrap(), y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dlp_concepts_factor_through_logs(seed in 0u64..1000, i in any::<u64>(), x in any::<u64>()) {
        let inst = DlpInstance::generate(24, seed).unwrap();
        let c = DlpConcept::new(&inst, 1 + i % inst.order()).unwrap();
        let x = 1 + x % (inst.p() - 1);
        let y = discrete_log(inst.modulus(), inst.generator(), x).unwrap();
        let labeler = dlp::IntervalLabeler::new(&inst, c.index());
        prop_assert_eq!(dlp::concept_eval(&inst, c, x).unwrap(), dlp::f_interval(&labeler, y).unwrap());
    }

    #[test]
    fn dlp_reconstruction_within_budget(seed in 0u64..1000, x in any::<u64>()) {
        let inst = DlpInstance::generate(30, seed).unwrap();
        let x = 1 + x % (inst.p() - 1);
        let r = dlp::reconstruct_log_via_concepts(&inst, x, |i| dlp::concept_eval(&inst, DlpConcept::new(&inst, i)?, x)).unwrap();
        prop_assert_eq!(r.value, discrete_log(inst.modulus(), inst.generator(), x).unwrap());
        prop_assert!(r.queries <= dlp::reconstruction_query_budget(&inst));
    }

    #[test]
    fn cube_root_trapdoor_round_trip(seed in 0u64..1000, x in any::<u64>()) {
        let inst = RsaInstance::generate(40, seed).unwrap();
        let public = inst.public();
        let x = x % inst.n();
        prop_assume!(gcd(x, inst.n()) == 1);
        let y = cuberoot::g_forward(&public, x).unwrap();
        prop_assert_eq!(cuberoot::g_inverse_trapdoor(&inst, y).unwrap(), x);
    }

    #[test]
    fn cube_root_reconstruction_uses_n_queries(seed in 0u64..1000, x in any::<u64>()) {
        let inst = RsaInstance::generate(36, seed).unwrap();
        let public = inst.public();
        let x = x % inst.n();
        prop_assume!(gcd(x, inst.n()) == 1);
        let r = cuberoot::reconstruct_x_via_concepts(&public, x, |i| {
            cuberoot::concept_eval(&inst, BitConcept::new(&public, i)?, x)
        }).unwrap();
        prop_assert_eq!(r.value, cuberoot::g_inverse_trapdoor(&inst, x).unwrap());
        prop_assert_eq!(r.queries, inst.bits() as usize);
    }

    #[test]
    fn blinding_round_trips(seed in 0u64..200, x in any::<u64>(), r_seed in any::<u64>()) {
        let ds: Vec<Arc<dyn Decomposition>> = vec![
            Arc::new(DlpDecomposition::new(DlpInstance::generate(20, seed).unwrap())),
            Arc::new(CubeRootDecomposition::new(RsaInstance::generate(24, seed).unwrap())),
        ];
        for d in ds {
            let y = d.sample_preimage(&mut rng_from(x));
            let target = d.g_forward(y).unwrap();
            let (blinded, r) = d.blind(target, &mut rng_from(r_seed)).unwrap();
            let pre = d.g_inverse_surrogate(blinded).unwrap();
            prop_assert_eq!(d.unblind(pre, r), y);
        }
    }

    #[test]
    fn wrapper_never_errs(fault_per_mille in 0u64..1000, seed in any::<u64>()) {
        // g(y) = k*y mod p, so the preimage of x is x * k^{-1}
        let (p, k) = (1_000_003u64, 48_271u64);
        let k_inv = mod_inverse(k, p).unwrap();
        let preimage = move |x: u64| (x as u128 * k_inv as u128 % p as u128) as u64;
        let problem = DistributionalProblem::new(preimage, move |rng| rand::Rng::gen_range(rng, 0..p));
        let faulty = Algorithm::randomized(move |x, rng| {
            if rand::Rng::gen_range(rng, 0..1000) < fault_per_mille {
                Ok(Verdict::Answer(preimage(x) ^ 1))
            } else {
                Ok(Verdict::Answer(preimage(x)))
            }
        });
        let wrapped = wrap_err_to_dont_know(faulty, move |y| Some((y as u128 * k as u128 % p as u128) as u64));
        let r = heuristic_success_rate(&wrapped, &problem, 500, seed).unwrap();
        prop_assert_eq!(r.errors, 0);
        prop_assert_eq!(r.correct + r.dont_know, 500);
    }

    #[test]
    fn cosine_fit_recovers_parameters(alpha in 1e-6f64..2.0, beta in 0.0f64..TAU, gamma in -1.0f64..1.0) {
        let truth = CosineModel::new(alpha, beta, gamma);
        let pts = [0.2, 2.3, 4.4].map(|t| (t, truth.predict(t)));
        let m = fit_cosine(&pts).unwrap();
        prop_assert!((m.alpha - alpha).abs() < 1e-9);
        prop_assert!((m.gamma - gamma).abs() < 1e-9);
        let dbeta = (m.beta - beta).rem_euclid(TAU);
        prop_assert!(dbeta.min(TAU - dbeta) * alpha < 1e-9);
    }

    #[test]
    fn circuits_have_cosine_form(qubits in 1usize..=6, depth in 0usize..10, seed in any::<u64>()) {
        let c = random_circuit(qubits, depth, &mut rng_from(seed)).unwrap();
        let pts = [0.5, 2.6, 4.7].map(|t| (t, simulate_expectation(&c, t).unwrap()));
        let m = fit_cosine(&pts).unwrap();
        for j in 0..50 {
            let t = TAU * j as f64 / 50.0;
            let v = simulate_expectation(&c, t).unwrap();
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
            prop_assert!((v - m.predict(t)).abs() <= 1e-8);
        }
    }
}
