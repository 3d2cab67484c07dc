use mvdec::clustering::{hard_predict, AssignmentMatrix};
use mvdec::dataio::{export_embeddings, generate_synthetic, read_matrix_csv, read_report, write_report, MultiViewDataset, SyntheticSpec};
use mvdec::metrics::acc;
use mvdec::parallel::Parallelism;
use mvdec::target::{inertia, kmeans_with};
use mvdec::trainer::{
    init_models, init_view_centroids, pretrain, train, train_baseline, train_sdmvc, Mode, StopReason, TrainingConfig,
    ViewModel, ViewTrainer,
};
use mvdec::Matrix;

const SEQ: Parallelism = Parallelism::Sequential;

fn small_config(k: usize) -> TrainingConfig {
    TrainingConfig {
        k,
        hidden: vec![16],
        embed_dim: 4,
        batch_size: 32,
        pretrain_epochs: 10,
        finetune_batches_per_round: 5,
        max_rounds: 3,
        kmeans_restarts: 3,
        seed: 11,
        ..Default::default()
    }
}

fn blobs(noise: f64) -> MultiViewDataset {
    generate_synthetic(&SyntheticSpec {
        n: 120,
        k: 3,
        views: 2,
        dims: vec![6, 5],
        noise_per_view: vec![noise, noise],
        separation: 1.0,
        seed: 4,
    })
    .unwrap()
}

#[test]
fn zero_epochs_keeps_initialization() {
    let d = blobs(0.1);
    let cfg = TrainingConfig {
        pretrain_epochs: 0,
        ..small_config(3)
    };
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    assert_eq!(p.models, init_models(&d, &cfg).unwrap());
    assert!(p.epoch_losses.iter().all(Vec::is_empty));
}

#[test]
fn pretraining_is_deterministic_and_policy_independent() {
    let d = blobs(0.1);
    let cfg = small_config(3);
    let a = pretrain(&d, &cfg, SEQ).unwrap();
    let b = pretrain(&d, &cfg, SEQ).unwrap();
    let c = pretrain(&d, &cfg, Parallelism::Threads(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn pretraining_loss_decreases() {
    let d = blobs(0.05);
    let cfg = TrainingConfig {
        pretrain_epochs: 80,
        hidden: vec![12],
        ..small_config(3)
    };
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    for losses in &p.epoch_losses {
        let pairs = losses.len() - 1;
        let down = losses.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(down as f64 >= 0.95 * pairs as f64, "{down}/{pairs} decreasing: {losses:?}");
        assert!(losses.last().unwrap() < &losses[0]);
    }
}

#[test]
fn view_centroids_sit_on_point_masses() {
    let d = blobs(0.0);
    let cfg = small_config(3);
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    let layers = init_view_centroids(&p.models, &d, 3, 5, 3, SEQ).unwrap();
    for (v, layer) in layers.iter().enumerate() {
        let z = p.models[v].encode(d.view(v)).unwrap();
        // three distinct embeddings, each matched exactly by some centroid
        assert!(inertia(&z, layer.centroids()) < 1e-20);
    }
    assert_eq!(layers, init_view_centroids(&p.models, &d, 3, 5, 3, SEQ).unwrap());
    assert!(init_view_centroids(&p.models, &d.select_views(&[0]).unwrap(), 3, 5, 3, SEQ).is_err());
}

#[test]
fn view_centroid_inertia_matches_kmeans_on_exported_embeddings() {
    let d = blobs(0.2);
    let cfg = small_config(3);
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    let layers = init_view_centroids(&p.models, &d, 3, 9, 4, SEQ).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_embeddings(&p.models, &d, dir.path()).unwrap();
    for (v, layer) in layers.iter().enumerate() {
        let (z, header) = read_matrix_csv(&files.view_files[v]).unwrap();
        assert_eq!(header.len(), cfg.embed_dim);
        assert_eq!(z, p.models[v].encode(d.view(v)).unwrap());
        let direct = kmeans_with(&z, 3, mvdec::rng::derive_seed(9, &[3, v as u64]), 4, SEQ).unwrap();
        assert_eq!(inertia(&z, layer.centroids()), direct.centroids.inertia);
    }
    let (g, _) = read_matrix_csv(&files.global_file).unwrap();
    assert_eq!(g.cols(), 2 * cfg.embed_dim);
}

#[test]
fn too_few_examples_for_k() {
    let d = blobs(0.1);
    let p = pretrain(&d, &small_config(3), SEQ).unwrap();
    assert!(init_view_centroids(&p.models, &d, 121, 0, 1, SEQ).is_err());
}

#[test]
fn noiseless_blobs_are_recovered_in_one_round() {
    let d = blobs(0.0);
    let cfg = TrainingConfig {
        max_rounds: 1,
        ..small_config(3)
    };
    let out = train(&d, &cfg, None, SEQ).unwrap();
    assert_eq!(acc(&out.labels, d.labels().unwrap()).unwrap(), 1.0);
    assert!(out.report.rounds_executed() <= 1);
}

#[test]
fn zero_threshold_stops_at_first_check() {
    let d = blobs(0.3);
    let cfg = TrainingConfig {
        aligned_stop: 0.0,
        ..small_config(3)
    };
    let out = train(&d, &cfg, None, SEQ).unwrap();
    let r = &out.report;
    assert_eq!(r.stop_reason, Some(StopReason::AlignedThreshold));
    assert!(r.rounds.is_empty());
    assert_eq!(r.checkpoints.len(), 1);
    assert!(!r.incomplete);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    write_report(r, &path).unwrap();
    let back = read_report(&path).unwrap();
    assert_eq!(&back, r);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["stop_reason"], "aligned_threshold");
}

#[test]
fn stop_fires_iff_aligned_rate_exceeds_threshold() {
    let d = blobs(0.4);
    let base = small_config(3);
    let p = pretrain(&d, &base, SEQ).unwrap();
    for delta in [0.0, 0.3, 0.6, 0.9, 1.0] {
        let cfg = TrainingConfig {
            aligned_stop: delta,
            max_rounds: 4,
            ..base.clone()
        };
        let r = train(&d, &cfg, Some(&p), SEQ).unwrap().report;
        let (last, earlier) = r.checkpoints.split_last().unwrap();
        assert!(earlier.iter().all(|c| c.aligned_rate <= delta));
        match r.stop_reason.unwrap() {
            StopReason::AlignedThreshold => assert!(last.aligned_rate > delta),
            StopReason::MaxRounds => {
                assert!(last.aligned_rate <= delta);
                assert_eq!(r.rounds_executed(), cfg.max_rounds);
            }
        }
        assert_eq!(r.aligned_rates().len(), r.rounds_executed());
        assert!(r.checkpoints.iter().enumerate().all(|(i, c)| c.round == i));
        assert!(r.checkpoints.iter().all(|c| (0.0..=1.0).contains(&c.aligned_rate)));
    }
}

#[test]
fn identical_reports_for_identical_runs() {
    let d = blobs(0.3);
    let cfg = small_config(3);
    let a = train(&d, &cfg, None, SEQ).unwrap();
    let b = train(&d, &cfg, None, SEQ).unwrap();
    let c = train(&d, &cfg, None, Parallelism::Threads(2)).unwrap();
    let ja = a.report.to_json_without_timing().unwrap();
    assert_eq!(ja, b.report.to_json_without_timing().unwrap());
    assert_eq!(ja, c.report.to_json_without_timing().unwrap());
    assert_eq!(a.models, c.models);
}

#[test]
fn target_is_untouched_by_a_round() {
    let d = blobs(0.2);
    let cfg = small_config(3);
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    let layers = init_view_centroids(&p.models, &d, 3, 0, 2, SEQ).unwrap();
    let model = ViewModel {
        autoencoder: p.models[0].clone(),
        clustering: layers[0].clone(),
    };
    let mut trainer = ViewTrainer::new(model.clone(), cfg.learning_rate);
    let z = model.autoencoder.encode(d.view(0)).unwrap();
    let target = mvdec::target::sharpen(&model.clustering.soft_assign(&z).unwrap());
    let snapshot = target.clone();
    let stats = trainer.finetune_round(d.view(0), &target, &cfg, 0).unwrap();
    assert_eq!(target, snapshot);
    assert_eq!(stats.batches, cfg.finetune_batches_per_round);
    assert_ne!(trainer.model, model);
}

#[test]
fn updating_one_view_leaves_the_other_alone() {
    let d = blobs(0.2);
    let cfg = small_config(3);
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    let layers = init_view_centroids(&p.models, &d, 3, 0, 2, SEQ).unwrap();
    let mut trainers: Vec<ViewTrainer> = p
        .models
        .iter()
        .zip(&layers)
        .map(|(a, c)| {
            ViewTrainer::new(
                ViewModel {
                    autoencoder: a.clone(),
                    clustering: c.clone(),
                },
                cfg.learning_rate,
            )
        })
        .collect();
    let before = trainers[1].model.clone();
    let z = trainers[0].model.autoencoder.encode(d.view(0)).unwrap();
    let target = mvdec::target::sharpen(&trainers[0].model.clustering.soft_assign(&z).unwrap());
    trainers[0].finetune_round(d.view(0), &target, &cfg, 0).unwrap();
    assert_eq!(trainers[1].model, before);
}

#[test]
fn per_view_baseline_ignores_other_views() {
    // view 0 trained alone must not depend on what the other view contains
    let d = blobs(0.2);
    let other = blobs(0.5);
    let swapped = MultiViewDataset::new("swap", vec![d.view(0).clone(), other.view(1).clone()], d.labels().map(<[usize]>::to_vec)).unwrap();
    let cfg = TrainingConfig {
        mode: Mode::IdecPerView,
        ..small_config(3)
    };
    let a = train_baseline(&d, &cfg).unwrap();
    let b = train_baseline(&swapped, &cfg).unwrap();
    assert_eq!(a.models[0], b.models[0]);
    assert_eq!(a.view_labels[0], b.view_labels[0]);
    assert_ne!(a.models[1], b.models[1]);
}

#[test]
fn single_view_sdmvc_reduces_to_untrained_per_view_clustering() {
    let d = blobs(0.3).select_views(&[0]).unwrap();
    let cfg = small_config(3);
    let p = pretrain(&d, &cfg, SEQ).unwrap();
    let sdmvc = train(&d, &cfg, Some(&p), SEQ).unwrap();
    assert_eq!(sdmvc.report.stop_reason, Some(StopReason::AlignedThreshold));
    assert_eq!(sdmvc.report.checkpoints[0].aligned_rate, 1.0);
    let idec_cfg = TrainingConfig {
        mode: Mode::IdecPerView,
        max_rounds: 0,
        ..cfg
    };
    let idec = train(&d, &idec_cfg, Some(&p), SEQ).unwrap();
    // identical partitions, possibly numbered differently
    assert_eq!(acc(&sdmvc.labels, &idec.labels).unwrap(), 1.0);
    assert_eq!(sdmvc.labels, sdmvc.view_labels[0]);
}

#[test]
fn no_utd_consensus_on_one_view_is_the_view_prediction() {
    let d = blobs(0.3).select_views(&[1]).unwrap();
    let cfg = TrainingConfig {
        mode: Mode::NoUtd,
        ..small_config(3)
    };
    let out = train_baseline(&d, &cfg).unwrap();
    assert_eq!(out.labels, out.view_labels[0]);
    assert_eq!(out.labels, hard_predict(&out.assignments[0]));
    let q: Vec<AssignmentMatrix> = vec![out.assignments[0].clone(); 3];
    assert_eq!(mvdec::trainer::consensus_predict(&q).unwrap(), out.labels);
}

#[test]
fn fixed_raw_target_never_changes() {
    let d = blobs(0.4);
    let cfg = TrainingConfig {
        mode: Mode::NoSsm,
        aligned_stop: 1.0,
        ..small_config(3)
    };
    let r = train_baseline(&d, &cfg).unwrap().report;
    let inertias: Vec<f64> = r.checkpoints.iter().map(|c| c.target_inertia.unwrap()).collect();
    assert!(inertias.windows(2).all(|w| w[0] == w[1]));
    assert!(r.checkpoints.iter().all(|c| c.centroid_drift.is_none()));
    assert!(r.interpretation.is_some());
}

#[test]
fn baselines_run_their_full_budget() {
    let d = blobs(0.0);
    for mode in [Mode::IdecPerView, Mode::NoUtd] {
        let cfg = TrainingConfig {
            mode,
            ..small_config(3)
        };
        let r = train_baseline(&d, &cfg).unwrap().report;
        assert_eq!(r.stop_reason, Some(StopReason::MaxRounds));
        assert_eq!(r.rounds_executed(), cfg.max_rounds);
    }
}

#[test]
fn entry_points_check_the_mode() {
    let d = blobs(0.1);
    let sd = small_config(3);
    let err = train_baseline(&d, &sd).unwrap_err();
    assert!(err.partial.incomplete);
    let base = TrainingConfig {
        mode: Mode::NoSsm,
        ..sd
    };
    assert!(train_sdmvc(&d, &base).is_err());
}

#[test]
fn failures_carry_a_partial_report() {
    let d = blobs(0.1);
    let cfg = TrainingConfig {
        batch_size: 1000,
        ..small_config(3)
    };
    let err = train(&d, &cfg, None, SEQ).unwrap_err();
    assert!(err.partial.incomplete);
    assert!(err.partial.final_result.is_none());

    // pretrained models for a different dataset
    let p = pretrain(&d, &small_config(3), SEQ).unwrap();
    let narrow = MultiViewDataset::new("n", vec![Matrix::filled(120, 2, 0.5), Matrix::filled(120, 2, 0.5)], None).unwrap();
    let err = train(&narrow, &small_config(3), Some(&p), SEQ).unwrap_err();
    assert!(err.partial.incomplete);
    assert!(err.to_string().contains("pretrained"));
}

#[test]
fn unlabeled_runs_skip_metrics() {
    let d = blobs(0.2);
    let unlabeled = MultiViewDataset::new("u", d.views().to_vec(), None).unwrap();
    let r = train(&unlabeled, &small_config(3), None, SEQ).unwrap().report;
    assert!(r.checkpoints.iter().all(|c| c.per_view_scores.is_none() && c.consensus_scores.is_none()));
    let f = r.final_result.unwrap();
    assert!(f.consensus_scores.is_none());
    assert!(!r.dataset.has_labels);
}
