use proptest::prelude::*;

use phbf::eval::SeededRng;
use phbf::state;
use phbf::{
    fp_match_probability, generate_population, BloomFilter, ChainConfig, Chip, DayRange, HbfParams,
    HierarchicalFilter, PersistentFilter, Signature, SupplyChain, TimeTree,
};

fn corrupt_blocks(s: &Signature, blocks: &[usize], block_bits: usize, seed: u64) -> Signature {
    let mut rng = SeededRng::new(seed);
    let mut out = s.clone();
    for &j in blocks {
        // At least the first bit of every chosen block flips.
        out.flip(j * block_bits);
        for b in 1..block_bits {
            if rng.below(2) == 1 {
                out.flip(j * block_bits + b);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bloom_has_no_false_negatives_and_is_monotone(
        items in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..24), 1..60),
        m in 8u64..2048,
        k in 1u32..6,
    ) {
        let mut f = BloomFilter::new(m, k).unwrap();
        for (i, item) in items.iter().enumerate() {
            let before = f.as_bytes().to_vec();
            f.insert(item).unwrap();
            for (old, new) in before.iter().zip(f.as_bytes()) {
                prop_assert_eq!(old & new, *old);
            }
            for earlier in &items[..=i] {
                prop_assert!(f.contains(earlier));
            }
        }
        prop_assert!(f.popcount() <= m.min(u64::from(k) * f.count()));
    }

    #[test]
    fn bloom_payload_round_trip(m in 1u64..300, k in 1u32..4, seed in any::<u64>()) {
        let mut f = BloomFilter::new(m, k).unwrap();
        for i in 0..seed % 40 {
            f.insert(&i.to_be_bytes()).unwrap();
        }
        let back = BloomFilter::from_bytes(m, k, f.as_bytes()).unwrap();
        prop_assert_eq!(back.as_bytes(), f.as_bytes());
        prop_assert!(back.popcount() <= m.min(u64::from(k) * back.count()));
    }

    #[test]
    fn hbf_tolerates_noise_within_budget(
        seed in any::<u64>(),
        threshold in 0usize..=16,
        picks in proptest::collection::vec(0usize..16, 0..16),
    ) {
        let params = HbfParams::reference(100).unwrap().with_threshold(threshold).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        let pop = generate_population(10, 256, seed).unwrap();
        for s in &pop {
            hbf.enroll(s).unwrap();
        }
        let mut blocks: Vec<usize> = picks;
        blocks.sort_unstable();
        blocks.dedup();
        blocks.truncate(16 - threshold);
        let noisy = corrupt_blocks(&pop[0], &blocks, 16, seed);
        prop_assert!(hbf.match_count(&noisy).unwrap() >= 16 - blocks.len());
        prop_assert!(hbf.query(&noisy).unwrap());
    }

    #[test]
    fn match_count_grows_with_enrollment(seed in any::<u64>()) {
        let params = HbfParams::reference(20).unwrap();
        let mut hbf = HierarchicalFilter::new(params).unwrap();
        let probe = &generate_population(1, 256, seed ^ 0x5555).unwrap()[0];
        let mut last = hbf.match_count(probe).unwrap();
        for s in generate_population(30, 256, seed).unwrap() {
            hbf.enroll(&s).unwrap();
            let now = hbf.match_count(probe).unwrap();
            prop_assert!(now >= last);
            last = now;
        }
    }

    #[test]
    fn fp_match_is_a_monotone_probability(blocks in 1usize..24, k in 1u32..8, p in 0.0f64..=1.0) {
        let mut prev = 0.0;
        for n_t in 0..=blocks {
            let v = fp_match_probability(blocks, n_t, k, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= prev - 1e-15, "N_t={} dropped from {} to {}", n_t, prev, v);
            prev = v;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn cover_partitions_aligned_ranges(exp in 0u32..7, g in 1u64..6, a in any::<u64>(), b in any::<u64>()) {
        let tree = TimeTree::new((1 << exp) * g, g).unwrap();
        let leaves = tree.leaves();
        let (x, y) = (a % leaves, b % leaves);
        let (first, last) = (x.min(y), x.max(y));
        let range = DayRange::new(first * g + 1, (last + 1) * g).unwrap();
        let cover = tree.canonical_cover(range).unwrap();
        prop_assert!(cover.len() <= 2 * tree.levels() as usize);
        let mut day = range.start;
        for i in cover {
            let r = tree.interval_of(i).unwrap().range;
            prop_assert_eq!(r.start, day);
            day = r.end + 1;
        }
        prop_assert_eq!(day, range.end + 1);
    }

    #[test]
    fn expanded_cover_contains_original(exp in 0u32..7, g in 1u64..6, a in any::<u64>(), b in any::<u64>()) {
        let tree = TimeTree::new((1 << exp) * g, g).unwrap();
        let (x, y) = (a % tree.days() + 1, b % tree.days() + 1);
        let range = DayRange::new(x.min(y), x.max(y)).unwrap();
        let wide = tree.expand(range).unwrap();
        prop_assert!(wide.covers(&range));
        prop_assert!(tree.is_aligned(wide));
        prop_assert!(wide.start + g > range.start && wide.end < range.end + g);
    }
}

// Every enrolled (s, t) is found over every aligned range containing t.
#[test]
fn temporal_no_false_negatives_exhaustive() {
    let params = HbfParams::reference(200).unwrap();
    for (leaves, g) in [(1u64, 1u64), (2, 3), (4, 1), (8, 2), (16, 1)] {
        let mut filter = PersistentFilter::new(leaves * g, g, params).unwrap();
        let pop = generate_population(200, 256, leaves).unwrap();
        let mut rng = SeededRng::new(leaves * 31 + g);
        let days: Vec<u64> = pop.iter().map(|_| 1 + rng.below(leaves * g)).collect();
        for (s, &d) in pop.iter().zip(&days) {
            filter.enroll(s, d).unwrap();
        }
        let digests: Vec<_> = pop
            .iter()
            .map(|s| params.digest(s, None).unwrap())
            .collect();
        for first in 0..leaves {
            for last in first..leaves {
                let range = DayRange::new(first * g + 1, (last + 1) * g).unwrap();
                for (digest, &d) in digests.iter().zip(&days) {
                    if range.contains(d) {
                        let report = filter.match_report_digest(digest, range).unwrap();
                        assert!(report.iter().any(|m| m.count == 16), "{range} lost day {d}");
                    }
                }
            }
        }
    }
}

#[test]
fn ancestors_contain_leaf_members() {
    let params = HbfParams::reference(100).unwrap();
    let mut filter = PersistentFilter::new(64, 4, params).unwrap();
    let pop = generate_population(100, 256, 9).unwrap();
    for (i, s) in pop.iter().enumerate() {
        filter.enroll(s, 1 + (i as u64 * 7) % 64).unwrap();
    }
    let tree = *filter.tree();
    for s in &pop {
        let digest = params.digest(s, None).unwrap();
        for leaf in (tree.node_count() / 2 + 1)..=tree.node_count() {
            if filter.node(leaf).unwrap().match_count_digest(&digest) == 16 {
                let mut node = leaf / 2;
                while node >= 1 {
                    assert_eq!(filter.node(node).unwrap().match_count_digest(&digest), 16);
                    node /= 2;
                }
            }
        }
    }
}

#[test]
fn report_agrees_with_query() {
    let params = HbfParams::reference(50).unwrap();
    let mut filter = PersistentFilter::new(32, 4, params).unwrap();
    let pop = generate_population(50, 256, 12).unwrap();
    let mut rng = SeededRng::new(3);
    for s in &pop {
        filter.enroll(s, 1 + rng.below(32)).unwrap();
    }
    let strangers = generate_population(50, 256, 13).unwrap();
    for case in 0..1000 {
        let s = if case % 2 == 0 {
            &pop[case % 50]
        } else {
            &strangers[case % 50]
        };
        let a = rng.below(8);
        let b = a + rng.below(8 - a);
        let range = DayRange::new(a * 4 + 1, (b + 1) * 4).unwrap();
        let report = filter.match_report(s, range).unwrap();
        let derived = report.iter().any(|m| m.count >= params.threshold);
        assert_eq!(derived, filter.query(s, range).unwrap());
    }
}

#[test]
fn genuine_verdicts_survive_more_observations() {
    let cfg = ChainConfig {
        capacity: 1000,
        locations: vec!["oem".into(), "hub".into()],
        days: 64,
        granularity: 8,
        fp: 0.1,
        blocks: 16,
        block_bits: 16,
        threshold: 5,
    };
    let mut chain = SupplyChain::new(&cfg).unwrap();
    let pop = generate_population(300, 256, 21).unwrap();
    let target = Chip::new("TARGET", pop[0].clone()).unwrap();
    chain.observe(&target, "oem", 2).unwrap();
    chain.observe(&target, "hub", 20).unwrap();
    let legs = vec![
        chain.leg("oem", DayRange::new(1, 8).unwrap()).unwrap(),
        chain.leg("hub", DayRange::new(17, 24).unwrap()).unwrap(),
    ];
    let before = chain.classify(&target, &legs).unwrap();
    for (i, s) in pop[1..].iter().enumerate() {
        let c = Chip::new(format!("OTHER-{i}"), s.clone()).unwrap();
        chain.observe(&c, "oem", 1 + (i as u64 % 64)).unwrap();
        chain.observe(&c, "hub", 1 + (i as u64 * 5 % 64)).unwrap();
        assert_eq!(chain.classify(&target, &legs).unwrap(), before);
    }
}

#[test]
fn state_rejects_corruption() {
    let cfg = ChainConfig {
        capacity: 50,
        locations: vec!["oem".into(), "dist".into()],
        days: 16,
        granularity: 4,
        fp: 0.1,
        blocks: 4,
        block_bits: 8,
        threshold: 2,
    };
    let chain = SupplyChain::new(&cfg).unwrap();
    let bytes = state::encode(&chain);
    assert_eq!(&bytes[..4], b"PHBF");
    assert_eq!(bytes[4], 1);
    assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 16);
    assert_eq!(state::decode(&bytes).unwrap(), chain);

    assert!(state::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(state::decode(&extra).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(state::decode(&magic).is_err());
    let mut huge = bytes.clone();
    huge[21..29].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(state::decode(&huge).is_err());
}
