use klid_svm::data::{generate_synthetic, stratified_split, SplitSpec, SyntheticKind};
use klid_svm::dsvm::{comm_report, partition, train_distributed, DsvmConfig};
use klid_svm::svm::{error_rate, train_svm, SvmConfig};

fn split(seed: u64, n: usize) -> (klid_svm::Dataset, klid_svm::Dataset) {
    split_noisy(seed, n, 0.7)
}

fn split_noisy(seed: u64, n: usize, noise: f64) -> (klid_svm::Dataset, klid_svm::Dataset) {
    let ds = generate_synthetic(SyntheticKind::TwoGaussians, n, noise, seed).unwrap();
    stratified_split(
        &ds,
        &SplitSpec {
            train_fraction: 0.5,
            folds: 5,
            seed,
        },
    )
    .unwrap()
}

#[test]
fn single_node_with_large_penalty_matches_centralized() {
    let (train, test) = split(1, 300);
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let central = error_rate(&train_svm(&train, &svm).unwrap(), &test).unwrap();
    let cfg = DsvmConfig {
        nodes: 1,
        z: 1e3,
        ..Default::default()
    };
    let (models, trace) = train_distributed(&train, &vec![1.0; train.len()], &cfg, &svm, &test, 1).unwrap();
    assert!((error_rate(&models[0], &test).unwrap() - central).abs() <= 0.02);
    assert_eq!(comm_report(&trace).total_down, 0);
}

#[test]
fn five_nodes_agree_and_save_traffic() {
    let (train, test) = split_noisy(2, 1000, 0.5);
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let central = error_rate(&train_svm(&train, &svm).unwrap(), &test).unwrap();
    let (models, trace) =
        train_distributed(&train, &vec![1.0; train.len()], &DsvmConfig::default(), &svm, &test, 2).unwrap();
    assert_eq!(models.len(), 5);
    let preds: Vec<_> = models
        .iter()
        .map(|m| (0..test.len()).map(|i| m.predict(test.row(i))).collect::<Vec<_>>())
        .collect();
    for p in &preds[1..] {
        let agree = p.iter().zip(&preds[0]).filter(|(a, b)| a == b).count();
        assert!(agree as f64 >= 0.95 * test.len() as f64);
    }
    assert!((error_rate(&models[0], &test).unwrap() - central).abs() <= 0.05);
    let report = comm_report(&trace);
    assert!(report.reduction >= 0.2, "{report:?}");
    for w in trace.rounds.windows(2) {
        assert!(w[1].objective >= w[0].objective - 1e-12);
    }
}

#[test]
fn tallies_are_reproducible_per_seed() {
    let (train, test) = split(3, 200);
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let beta: Vec<f64> = (0..train.len()).map(|i| if i % 7 == 0 { 0.2 } else { 1.0 }).collect();
    let run = || {
        train_distributed(&train, &beta, &DsvmConfig::default(), &svm, &test, 11)
            .unwrap()
            .1
    };
    assert_eq!(run(), run());
    let (models, _) = train_distributed(&train, &beta, &DsvmConfig::default(), &svm, &test, 11).unwrap();
    for m in &models {
        for (a, b) in m.alpha.iter().zip(&m.beta) {
            assert!(*a >= 0.0 && *a <= svm.c * b + 1e-12);
        }
    }
}

#[test]
fn partition_covers_and_rejects_impossible_splits() {
    let (train, _) = split(4, 100);
    let shards = partition(&train, 3, 0).unwrap();
    let mut ids: Vec<usize> = shards.iter().flat_map(|s| s.ids().to_vec()).collect();
    ids.sort_unstable();
    let mut want = train.ids().to_vec();
    want.sort_unstable();
    assert_eq!(ids, want);
    let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    // one negative sample cannot reach two shards
    let few = train
        .subset(&{
            let mut rows = train.class_indices(klid_svm::Label::Positive);
            rows.push(train.class_indices(klid_svm::Label::Negative)[0]);
            rows
        })
        .unwrap();
    assert!(partition(&few, 2, 0).is_err());
}
