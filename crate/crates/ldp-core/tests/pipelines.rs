//! Cross-module integration: user-side encoders feeding curator-side tests,
//! and the privacy audit over every mechanism the testers rely on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ldp_core::dist::{sample, Distribution, JointDistribution};
use ldp_core::independence::hr_independence_test;
use ldp_core::mechanisms::{
    audit_ldp, channel_matrix, hr_encode, rappor_encode, MechanismKind, PrivatizedBatch,
};
use ldp_core::uniformity::{
    hr_uniformity_test, rappor_uniformity_test, raptor_uniformity_test, RapporCounts,
    RaptorUniformityConfig,
};
use ldp_core::{Decision, HadamardCode, PrivacyBudget, PublicCoin};

#[test]
fn every_tester_mechanism_passes_its_audit() {
    for epsilon in [0.1, 0.5, 1.0, 2.0] {
        let budget = PrivacyBudget::new(epsilon).unwrap();
        let e = epsilon.exp();
        for k in [2usize, 4, 8] {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let coin = PublicCoin::random(k, &mut rng).unwrap();
            for kind in [
                MechanismKind::RandomizedResponse,
                MechanismKind::Rappor,
                MechanismKind::HadamardResponse,
                MechanismKind::Raptor,
                MechanismKind::BivariateRaptor,
            ] {
                let coin_arg = (kind == MechanismKind::Raptor).then_some(&coin);
                let w = channel_matrix(kind, k, &budget, coin_arg).unwrap();
                let audit = audit_ldp(&w, &budget);
                assert!(audit.passes, "{kind} k={k} eps={epsilon}");
                assert!(audit.max_ratio <= e * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn rappor_pipeline_detects_far_instance() {
    let k = 8;
    let budget = PrivacyBudget::new(1.0).unwrap();
    let gamma = 0.5;
    let alpha = budget.alpha_rappor();
    let n = (23.0 * (k as f64).powf(1.5) / (alpha * alpha * gamma * gamma)) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let far = Distribution::paninski(k, gamma, &[1, -1, 1, -1]).unwrap();
    let sampler = far.sampler();
    let mut counts = vec![0u64; k];
    for _ in 0..n {
        let x = sampler.draw(&mut rng);
        for (i, bit) in rappor_encode(k, &budget, x, &mut rng).into_iter().enumerate() {
            counts[i] += u64::from(bit);
        }
    }
    let counts = RapporCounts::new(counts, n as u64).unwrap();
    let verdict = rappor_uniformity_test(&counts, &budget, gamma).unwrap();
    assert_eq!(verdict.decision, Decision::NotUniform);
}

#[test]
fn hr_pipeline_distinguishes_at_moderate_size() {
    let k = 16;
    let budget = PrivacyBudget::new(1.0).unwrap();
    let gamma = 0.5;
    let code = HadamardCode::new(k).unwrap();
    let n = 12_000;
    let mut rng = ChaCha8Rng::seed_from_u64(13);

    let mut run = |p: &Distribution| {
        let sampler = p.sampler();
        let reports: Vec<usize> = (0..n)
            .map(|_| {
                let x = sampler.draw(&mut rng);
                hr_encode(&code, &budget, x, &mut rng)
            })
            .collect();
        hr_uniformity_test(&reports, k, &budget, gamma, &mut rng).unwrap()
    };

    let mut uniform_ok = 0;
    let mut far_ok = 0;
    let trials = 20;
    for t in 0..trials {
        let u = Distribution::uniform(k);
        if run(&u).decision == Decision::Uniform {
            uniform_ok += 1;
        }
        let theta: Vec<i8> = (0..k / 2).map(|i| if (i + t) % 2 == 0 { 1 } else { -1 }).collect();
        let far = Distribution::paninski(k, gamma, &theta).unwrap();
        if run(&far).decision == Decision::NotUniform {
            far_ok += 1;
        }
    }
    assert!(uniform_ok >= 15, "uniform accepted {uniform_ok}/{trials}");
    assert!(far_ok >= 15, "far rejected {far_ok}/{trials}");
}

#[test]
fn raptor_pipeline_detects_far_instance() {
    let k = 16;
    let budget = PrivacyBudget::new(1.0).unwrap();
    let gamma = 0.5;
    let cfg = RaptorUniformityConfig::default();
    let n = 48 * 12_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    let far = Distribution::paninski(k, gamma, &[1, 1, -1, -1, 1, -1, 1, -1]).unwrap();
    let xs = sample(&far, n, &mut rng);
    let verdict = raptor_uniformity_test(&xs, k, &budget, gamma, &cfg, &mut rng).unwrap();
    assert_eq!(verdict.decision, Decision::NotUniform);

    let xs = sample(&Distribution::uniform(k), n, &mut rng);
    let verdict = raptor_uniformity_test(&xs, k, &budget, gamma, &cfg, &mut rng).unwrap();
    assert_eq!(verdict.decision, Decision::Uniform);
}

#[test]
fn hr_independence_pipeline_rejects_correlated_joint() {
    let k = 4;
    let budget = PrivacyBudget::new(1.0).unwrap();
    let gamma = 0.45;
    let code = HadamardCode::new(k).unwrap();
    let joint = JointDistribution::balanced_paninski(k, gamma).unwrap();
    let n = 150_000;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let sampler = joint.sampler();
    let pairs: Vec<(usize, usize)> = (0..n)
        .map(|_| {
            let (x1, x2) = joint.unflatten(sampler.draw(&mut rng));
            (
                hr_encode(&code, &budget, x1, &mut rng),
                hr_encode(&code, &budget, x2, &mut rng),
            )
        })
        .collect();
    let verdict = hr_independence_test(&pairs, k, &budget, gamma, None, &mut rng).unwrap();
    assert_eq!(verdict.decision, Decision::NotIndependent);
}

#[test]
fn batch_json_is_the_curator_interchange_format() {
    let k = 4;
    let budget = PrivacyBudget::new(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let p = Distribution::uniform(k);
    let sampler = p.sampler();
    let messages: Vec<Vec<u32>> = (0..50)
        .map(|_| {
            let x = sampler.draw(&mut rng);
            rappor_encode(k, &budget, x, &mut rng)
                .into_iter()
                .map(u32::from)
                .collect()
        })
        .collect();
    let batch = PrivatizedBatch {
        mechanism: MechanismKind::Rappor,
        k,
        epsilon: 1.0,
        coin: None,
        coin2: None,
        messages,
    };
    let json = serde_json::to_string_pretty(&batch).unwrap();
    assert!(json.contains("\"mechanism\": \"rappor\""));
    let back: PrivatizedBatch = serde_json::from_str(&json).unwrap();
    let counts = RapporCounts::from_messages(&back.bit_vectors().unwrap(), k).unwrap();
    assert_eq!(counts.n(), 50);
    assert!(rappor_uniformity_test(&counts, &budget, 0.5).is_ok());
}
