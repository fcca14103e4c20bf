mod common;

use proptest::prelude::*;

use subqc_core::adversary::{run_with_adversary, HarnessConfig, ProtocolId};
use subqc_core::keys::combine_keys;
use subqc_core::params::{PipelineConfig, ProtocolParams};
use subqc_core::server::HonestServer;
use subqc_core::{Bits, KeyPair, Oracle};

proptest! {
    #![proptest_config(common::config(64))]

    #[test]
    fn state_stays_normalized(seed in any::<u64>(), ops in prop::collection::vec(any::<u8>(), 1..24)) {
        common::normalization_after_ops(seed, &ops)?;
    }

    #[test]
    fn basis_test_does_not_collapse(seed in any::<u64>(), width in 1usize..=8, kappa_out in 4usize..=16) {
        common::basis_test_non_collapsing(seed, width, kappa_out)?;
    }

    #[test]
    fn tables_round_trip(seed in any::<u64>(), width in 2usize..=10, payload in 1usize..=24, rows in 1usize..=8) {
        common::table_round_trips(seed, width, payload, rows)?;
    }

    #[test]
    fn hadamard_parity_holds(seed in any::<u64>(), width in 1usize..=8, out_len in 1usize..=20) {
        common::hadamard_parity(seed, width, out_len)?;
    }

    #[test]
    fn seeds_replay(seed in any::<u64>(), protocol in 0usize..13) {
        common::seed_replay(seed, protocol)?;
    }

    #[test]
    fn bits_codec_round_trips(bools in prop::collection::vec(any::<bool>(), 0..200)) {
        let b = Bits::from_bools(&bools);
        let (back, used) = Bits::decode(&b.to_bytes()).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(used, b.to_bytes().len());
        prop_assert_eq!(b.to_string().parse::<Bits>().unwrap(), b);
    }

    #[test]
    fn blinding_layers(seed in any::<u64>(), xs in prop::collection::vec(any::<u16>(), 3..12)) {
        let oracle = Oracle::new(seed, 16);
        let inputs: Vec<Bits> = xs.iter().map(|&x| Bits::from_u64(x as u64, 16)).collect();
        let (inner, outer) = (inputs[0].clone(), inputs[1].clone());
        let once = oracle.blind([inner.clone()]);
        let twice = once.blind([inner.clone(), outer.clone()]);
        prop_assert!(once.is_blinded_at(&inner) && !once.is_blinded_at(&outer));
        prop_assert!(twice.is_blinded_at(&outer));
        prop_assert_ne!(once.eval(&inner, 64), oracle.eval(&inner, 64));
        prop_assert_ne!(twice.eval(&inner, 64), once.eval(&inner, 64));
        prop_assert_ne!(twice.eval(&outer, 64), oracle.eval(&outer, 64));
        for x in &inputs[2..] {
            if *x != inner && *x != outer {
                prop_assert_eq!(twice.eval(x, 64), oracle.eval(x, 64));
            }
        }
        prop_assert!(!oracle.is_blinded_at(&inner));
    }

    #[test]
    fn combined_keys_concatenate(seed in any::<u64>(), wa in 1usize..8, wb in 1usize..8, outcome in any::<bool>()) {
        let mut r = common::rng(seed);
        let a = KeyPair::sample(&mut r, wa).unwrap();
        let b = KeyPair::sample(&mut r, wb).unwrap();
        let k = combine_keys(&a, &b, outcome, (&Bits::empty(), &Bits::empty())).unwrap();
        for s in [false, true] {
            prop_assert_eq!(k.get(s), &a.get(s).concat(b.get(s ^ outcome)));
        }
    }
}

fn small(t: usize) -> HarnessConfig {
    HarnessConfig {
        params: ProtocolParams {
            pad_len: 16,
            kappa_out: 16,
            test_rounds: t,
        },
        width: 4,
        ..HarnessConfig::default()
    }
}

/// Server queries of an honest `1 + n` expansion: `T + 1` basis-test
/// rounds per `K3` at two table evaluations of three queries each, one
/// robust table pair of eighteen, and the padded Hadamard test.
fn cost_1pn(n: u64, t: u64) -> u64 {
    n * (6 * t + 6) + 18 * n + 1
}

fn cost_logk(r: usize, t: u64) -> u64 {
    (0..r).map(|i| cost_1pn(1 << i, t)).sum()
}

proptest! {
    #![proptest_config(common::config(24))]

    #[test]
    fn server_queries_match_closed_form(seed in any::<u64>(), t in 0usize..3, n in 1usize..4, r in 0usize..3, m in 1usize..3, j in 0usize..3) {
        let mut cfg = small(t);
        cfg.n = n;
        cfg.blocks = m;
        cfg.pipeline.doublings = r;
        cfg.pipeline.refresh_rounds = j;
        let (t64, n64) = (t as u64, n as u64);
        let expected = [
            (ProtocolId::PadHadamard, 1),
            (ProtocolId::BasisTest, 6 * t64),
            (ProtocolId::Combine, 2),
            (ProtocolId::CombineImproved, 6),
            (ProtocolId::Basic, 19),
            (ProtocolId::OnePlusOne, cost_1pn(1, t64)),
            (ProtocolId::OnePlusN, cost_1pn(n64, t64)),
            (ProtocolId::LogExpansion, cost_logk(r, t64)),
            (ProtocolId::Repeat, m as u64 * cost_logk(r, t64)),
            (ProtocolId::Refresh, j as u64 * (5 * n64 + 1)),
            (ProtocolId::Qfac8, 6 * cfg.qfac_test_rounds as u64 + 8),
        ];
        for (id, cost) in expected {
            let rec = run_with_adversary(id, &mut HonestServer::new(seed), &cfg, seed);
            prop_assert!(rec.verdict.is_pass(), "{}: {}", id.name(), rec.verdict);
            prop_assert_eq!(rec.server_queries, cost, "{}", id.name());
        }
    }

    #[test]
    fn stage_reports_count_gadgets(seed in any::<u64>(), n in 1usize..5, r in 0usize..4, m in 1usize..4, j in 0usize..3) {
        let mut cfg = small(1);
        cfg.n = n;
        cfg.blocks = m;
        cfg.pipeline.doublings = r;
        cfg.pipeline.refresh_rounds = j;
        let cases = [
            (ProtocolId::OnePlusN, "1pn", 1 + n, 2 * n),
            (ProtocolId::LogExpansion, "logk", r + 1, 1 << r),
            (ProtocolId::Repeat, "repeat", m * (r + 1), m << r),
            (ProtocolId::Refresh, "refresh", n + j, n),
        ];
        for (id, stage, gin, gout) in cases {
            let rec = run_with_adversary(id, &mut HonestServer::new(seed), &cfg, seed);
            prop_assert!(rec.verdict.is_pass());
            let rep = rec.reports.last().unwrap();
            prop_assert_eq!(&rep.stage, stage);
            prop_assert_eq!((rep.gadgets_in, rep.gadgets_out), (gin, gout));
            prop_assert_eq!(rec.secrets.len(), gin);
            prop_assert_eq!(rec.outputs.len(), gout);
            prop_assert!((rec.fidelity.unwrap() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn pipeline_plan_matches_reports() {
    for (n, l) in [(2, 4), (2, 8), (4, 16)] {
        let cfg = PipelineConfig {
            n_initial: n,
            l_target: l,
            pad_base: 16,
            ..PipelineConfig::default()
        };
        let hc = HarnessConfig {
            pipeline: cfg.clone(),
            ..HarnessConfig::default()
        };
        let rec = run_with_adversary(ProtocolId::Full, &mut HonestServer::new(9), &hc, 9);
        assert!(rec.verdict.is_pass(), "{}", rec.verdict);
        let full = rec.reports.last().unwrap();
        assert_eq!(full.stage, "full");
        assert_eq!(full.gadgets_out, l);
        assert_eq!(full.helpers, cfg.total_helpers().unwrap());
        assert_eq!(rec.outputs.len(), l);
        let rounds: Vec<_> = rec.reports.iter().filter(|r| r.stage.ends_with("/oneround")).collect();
        assert_eq!(rounds.len(), cfg.plan().unwrap().len());
    }
}
