use proptest::prelude::*;
use statrs::statistics::Statistics;
use udld::metrics::*;
use udld::simulation::{simulate, Model};
use udld::SimConfig;

fn record() -> impl Strategy<Value = EpisodeMetrics> {
    (
        0u32..100_000,
        0.0..=1.0f64,
        -1e4..1e4f64,
        -1e3..1e3f64,
        0usize..200,
        0usize..200,
        0usize..1000,
        0.0..=1.0f64,
    )
        .prop_map(|(episode, coverage, total, mean, l1, l2, links, eps)| EpisodeMetrics {
            episode,
            coverage,
            total_reward: total,
            mean_reward_per_agent: mean,
            layer1_count: l1,
            layer2_count: l2,
            link_count: links,
            epsilon: eps,
        })
}

fn close6(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-6 * a.abs().max(b.abs()) + 1e-300
}

proptest! {
    #[test]
    fn csv_round_trips_through_a_generic_reader(records in prop::collection::vec(record(), 0..30)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.csv");
        write_csv(&records, &path).unwrap();

        let mut reader = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        prop_assert_eq!(header.join(","), EPISODE_CSV_HEADER);
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        prop_assert_eq!(rows.len(), records.len());
        for (row, r) in rows.iter().zip(&records) {
            let f = |i: usize| row[i].parse::<f64>().unwrap();
            prop_assert_eq!(row[0].parse::<u32>().unwrap(), r.episode);
            prop_assert!(close6(f(1), r.coverage));
            prop_assert!(close6(f(2), r.total_reward));
            prop_assert!(close6(f(3), r.mean_reward_per_agent));
            prop_assert_eq!(row[4].parse::<usize>().unwrap(), r.layer1_count);
            prop_assert_eq!(row[5].parse::<usize>().unwrap(), r.layer2_count);
            prop_assert_eq!(row[6].parse::<usize>().unwrap(), r.link_count);
            prop_assert!(close6(f(7), r.epsilon));
        }
        prop_assert_eq!(read_csv(&path).unwrap().len(), records.len());
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert!(!text.contains('\r'));
    }

    #[test]
    fn aggregation_ignores_seed_order(
        runs in prop::collection::vec(prop::collection::vec(record(), 1..10), 1..6),
        window in 1usize..12,
        rotate in 0usize..6,
    ) {
        let keyed: Vec<(u64, Vec<EpisodeMetrics>)> = runs.into_iter().enumerate().map(|(i, r)| (i as u64, r)).collect();
        let mut shuffled = keyed.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(aggregate(&keyed, window).unwrap(), aggregate(&shuffled, window).unwrap());
    }
}

/// Write 20 seeds to disk, read them back with the csv crate, and recompute
/// the pooled window statistics with statrs.
#[test]
fn pooled_statistics_match_an_external_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let window = 8;
    let mut runs = Vec::new();
    let mut from_files = Vec::new();
    for seed in 1..=20u64 {
        let mut cfg = SimConfig::default();
        cfg.simulation.model = Model::Central;
        cfg.simulation.episodes = 20;
        cfg.simulation.seed = seed;
        let m = simulate(&cfg).unwrap();
        let path = dir.path().join(format!("seed{seed}.csv"));
        write_csv(&m, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let cov: Vec<f64> = reader.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
        from_files.extend_from_slice(&cov[cov.len() - window..]);
        runs.push((seed, m));
    }
    let summary = aggregate(&runs, window).unwrap();
    let mean = from_files.iter().mean();
    let std = from_files.iter().std_dev();
    assert_eq!(summary.pooled.samples, 160);
    assert!(
        (summary.pooled.mean_coverage - mean).abs() < 1e-5,
        "{} vs {mean}",
        summary.pooled.mean_coverage
    );
    assert!(
        (summary.pooled.std_coverage - std).abs() < 1e-5,
        "{} vs {std}",
        summary.pooled.std_coverage
    );
}

#[test]
fn aggregate_rejects_empty_streams() {
    assert!(aggregate(&[], 5).is_err());
    assert!(aggregate(&[(1, vec![])], 5).is_err());
}

#[test]
fn checked_in_base_config_is_the_default() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/base.json");
    assert_eq!(SimConfig::load(&path, &[]).unwrap(), SimConfig::default());
}
