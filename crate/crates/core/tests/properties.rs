use lift_watchdog::mechanism::build_uniform_channel;
use lift_watchdog::partition::ORACLE_MAX_SYMBOLS;
use lift_watchdog::*;
use proptest::prelude::*;

/// Groups `symbols` by `labels` (cycled), dropping empty groups.
fn partition_from_labels(symbols: &[usize], labels: &[usize]) -> Vec<Vec<usize>> {
    let groups = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut blocks = vec![Vec::new(); groups];
    for (i, &x) in symbols.iter().enumerate() {
        blocks[labels[i % labels.len()]].push(x);
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

/// Coarsens `blocks` by merging groups of blocks according to `labels`.
fn aggregate_blocks(blocks: &[Vec<usize>], labels: &[usize]) -> Vec<Vec<usize>> {
    let groups = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut out = vec![Vec::new(); groups];
    for (i, b) in blocks.iter().enumerate() {
        out[labels[i % labels.len()]].extend_from_slice(b);
    }
    out.retain(|b: &Vec<usize>| !b.is_empty());
    out
}

fn joint() -> impl Strategy<Value = JointDistribution> {
    (1usize..6, 1usize..9, any::<u64>())
        .prop_map(|(s, x, seed)| sample_random_joint(s, x, seed).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn marginals_and_entropy_bounds(j in joint()) {
        let sx: f64 = j.px().iter().sum();
        let ss: f64 = j.ps().iter().sum();
        prop_assert!((sx - 1.0).abs() <= 1e-9);
        prop_assert!((ss - 1.0).abs() <= 1e-9);
        let h = j.entropy_x();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (j.num_symbols() as f64).ln() + 1e-12);
    }

    #[test]
    fn sampler_is_pure(s in 1usize..5, x in 1usize..7, seed in any::<u64>()) {
        prop_assert_eq!(sample_random_joint(s, x, seed).unwrap(), sample_random_joint(s, x, seed).unwrap());
    }

    #[test]
    fn posterior_normalization(j in joint()) {
        let profile = compute_lift_profile(&j);
        for x in 0..j.num_symbols() {
            let total: f64 = (0..j.num_secrets())
                .map(|s| j.ps()[s] * profile.log_lift(s, x).exp())
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(profile.omega()[x] >= 0.0);
        }
    }

    #[test]
    fn subset_omega_consistency(j in joint(), perm_seed in any::<u64>()) {
        let profile = compute_lift_profile(&j);
        for x in 0..j.num_symbols() {
            let w = subset_omega(&j, &[x]).unwrap();
            prop_assert!((w - profile.omega()[x]).abs() <= 1e-12);
        }
        let all: Vec<usize> = (0..j.num_symbols()).collect();
        prop_assert!(subset_omega(&j, &all).unwrap() <= 1e-12);

        let mut shuffled = all.clone();
        let mut state = perm_seed | 1;
        for i in (1..shuffled.len()).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let half = &shuffled[..shuffled.len().div_ceil(2)];
        let mut sorted = half.to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(subset_omega(&j, half).unwrap(), subset_omega(&j, &sorted).unwrap());
    }

    #[test]
    fn split_is_a_bipartition(j in joint(), eps in 0.0f64..3.0) {
        let profile = compute_lift_profile(&j);
        let split = risk_split(&profile, eps).unwrap();
        let mut all = split.low_risk().to_vec();
        all.extend_from_slice(split.high_risk());
        all.sort_unstable();
        prop_assert_eq!(all, (0..j.num_symbols()).collect::<Vec<_>>());
        for &x in split.low_risk() {
            prop_assert!(profile.omega()[x] <= eps);
        }
        for &x in split.high_risk() {
            prop_assert!(profile.omega()[x] > eps);
        }
    }

    #[test]
    fn channel_matches_closed_forms(
        j in joint(),
        eps in 0.0f64..1.5,
        labels in prop::collection::vec(0usize..4, 1..9),
    ) {
        let profile = compute_lift_profile(&j);
        let split = risk_split(&profile, eps).unwrap();
        let part = HighRiskPartition::new(&split, partition_from_labels(split.high_risk(), &labels)).unwrap();
        let channel = build_channel(&j, &part).unwrap();

        for x in 0..j.num_symbols() {
            prop_assert!((channel.transition_row(x).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        prop_assert!((channel.output_px().iter().sum::<f64>() - 1.0).abs() <= 1e-9);

        let closed = mutual_information(&j, &part);
        prop_assert!((closed - channel.mutual_information()).abs() <= 1e-10);

        let bound = split
            .low_risk()
            .iter()
            .map(|&x| profile.omega()[x])
            .chain(part.blocks().iter().map(|b| subset_omega(&j, b).unwrap()))
            .fold(0.0, f64::max);
        let post = channel.post_leakage();
        prop_assert!(post == bound || (post - bound).abs() <= 1e-10);

        if j.entropy_x() > 0.0 {
            let loss = nmil(&j, &part).unwrap();
            prop_assert!((0.0..=1.0).contains(&loss));
        }

        let uniform = build_uniform_channel(&j, &part).unwrap();
        prop_assert!((uniform.mutual_information() - closed).abs() <= 1e-10);
        let (a, b) = (uniform.post_leakage(), post);
        prop_assert!(a == b || (a - b).abs() <= 1e-10);
    }

    #[test]
    fn refinement_never_loses_utility(
        j in joint(),
        eps in 0.0f64..1.0,
        fine in prop::collection::vec(0usize..5, 1..9),
        coarse in prop::collection::vec(0usize..3, 1..6),
    ) {
        prop_assume!(j.entropy_x() > 0.0);
        let split = risk_split(&compute_lift_profile(&j), eps).unwrap();
        let finer_blocks = partition_from_labels(split.high_risk(), &fine);
        let coarser_blocks = aggregate_blocks(&finer_blocks, &coarse);
        let finer = HighRiskPartition::new(&split, finer_blocks).unwrap();
        let coarser = HighRiskPartition::new(&split, coarser_blocks).unwrap();
        prop_assert!(is_refinement(&j, &finer, &coarser).unwrap());
        prop_assert!(nmil(&j, &finer).unwrap() <= nmil(&j, &coarser).unwrap() + 1e-12);
        let complete = HighRiskPartition::complete_merging(&split);
        prop_assert!(is_refinement(&j, &coarser, &complete).unwrap());
    }

    #[test]
    fn greedy_guarantees(j in joint(), eps in 0.0f64..2.0) {
        let split = risk_split(&compute_lift_profile(&j), eps).unwrap();
        let trace = greedy_refine(&j, &split);
        prop_assert_eq!(&trace, &greedy_refine(&j, &split));

        let mut covered = trace.partition.blocks().concat();
        covered.sort_unstable();
        prop_assert_eq!(&covered[..], split.high_risk());

        let channel = build_channel(&j, &trace.partition).unwrap();
        let complete = HighRiskPartition::complete_merging(&split);
        if trace.feasible {
            prop_assert!(channel.post_leakage() <= eps);
        } else {
            prop_assert_eq!(trace.partition.blocks(), complete.blocks());
        }
        prop_assert!(is_refinement(&j, &trace.partition, &complete).unwrap());
        prop_assert!(
            mutual_information(&j, &trace.partition) >= mutual_information(&j, &complete) - 1e-12
        );
    }

    #[test]
    fn oracle_sandwich(seed in any::<u64>(), eps in 0.0f64..1.2) {
        let j = sample_random_joint(3, 7, seed).unwrap();
        let split = risk_split(&compute_lift_profile(&j), eps).unwrap();
        prop_assume!(split.high_risk().len() <= ORACLE_MAX_SYMBOLS);
        let trace = greedy_refine(&j, &split);
        let oracle = brute_force_optimal(&j, &split).unwrap();
        prop_assert_eq!(trace.feasible, oracle != OracleOutcome::Infeasible);
        if let OracleOutcome::Optimal { partition, utility } = oracle {
            let complete = mutual_information(&j, &HighRiskPartition::complete_merging(&split));
            let greedy = mutual_information(&j, &trace.partition);
            prop_assert!(complete <= greedy + 1e-12);
            prop_assert!(greedy <= utility + 1e-12);
            prop_assert!((mutual_information(&j, &partition) - utility).abs() <= 1e-12);
            for block in partition.blocks() {
                prop_assert!(subset_omega(&j, block).unwrap() <= eps);
            }
        }
    }
}
