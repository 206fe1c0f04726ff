use super::*;
use crate::model::{NetworkSpec, Variant};
use crate::volume::phantom::{synth_phantom, LabelMode};
use crate::volume::{label_names, LabelVolume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_labels(rng: &mut ChaCha8Rng, n: usize, n_labels: u8) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..n_labels)).collect()
}

#[test]
fn dice_matches_brute_force_counter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a = random_labels(&mut rng, 8 * 8 * 4, 3);
        let b = random_labels(&mut rng, 8 * 8 * 4, 3);
        for label in 0..3u8 {
            let mut inter = 0usize;
            let mut na = 0usize;
            let mut nb = 0usize;
            for i in 0..a.len() {
                if a[i] == label {
                    na += 1;
                }
                if b[i] == label {
                    nb += 1;
                }
                if a[i] == label && b[i] == label {
                    inter += 1;
                }
            }
            let expect =
                if na + nb == 0 { 1.0 } else { 2.0 * inter as f64 / (na + nb) as f64 };
            assert_eq!(dice_coefficient(&a, &b, label).unwrap(), expect);
        }
    }
}

#[test]
fn dice_of_two_empty_masks_is_one() {
    let a = vec![0u8; 64];
    let b = vec![0u8; 64];
    assert_eq!(dice_coefficient(&a, &b, 2).unwrap(), 1.0);
}

#[test]
fn dice_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_labels(&mut rng, 100, 3);
    let b = random_labels(&mut rng, 100, 3);
    for l in 0..3 {
        assert_eq!(dice_coefficient(&a, &b, l).unwrap(), dice_coefficient(&b, &a, l).unwrap());
    }
}

#[test]
fn soft_dice_of_hard_probabilities_matches_hard_dice() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pred = random_labels(&mut rng, 200, 3);
    let truth = random_labels(&mut rng, 200, 3);
    for l in 0..3u8 {
        let probs: Vec<f32> = pred.iter().map(|&p| (p == l) as u8 as f32).collect();
        let soft = soft_dice(&probs, &truth, l).unwrap();
        let hard = dice_coefficient(&pred, &truth, l).unwrap();
        assert!((soft - hard).abs() < 1e-9);
    }
}

#[test]
fn kfold_sizes_and_coverage() {
    let folds = kfold_split(7, 5, 11).unwrap();
    let mut sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
    let mut all: Vec<usize> = folds.into_iter().flatten().collect();
    all.sort_unstable();
    assert_eq!(all, (0..7).collect::<Vec<_>>());
}

#[test]
fn kfold_is_seed_deterministic_and_seed_sensitive() {
    assert_eq!(kfold_split(10, 3, 5).unwrap(), kfold_split(10, 3, 5).unwrap());
    assert_ne!(kfold_split(10, 3, 5).unwrap(), kfold_split(10, 3, 6).unwrap());
}

#[test]
fn kfold_rejects_degenerate_requests() {
    assert!(kfold_split(10, 1, 0).is_err());
    assert!(kfold_split(3, 5, 0).is_err());
}

#[test]
fn slab_sizes_examples() {
    assert_eq!(slab_sizes(10), (2, 6, 2));
    assert_eq!(slab_sizes(5), (1, 3, 1));
    assert_eq!(slab_sizes(12), (3, 6, 3));
    let (b, m, a) = slab_sizes(1);
    assert_eq!(b + m + a, 1);
}

#[test]
fn regional_dice_slabs_cover_the_extent() {
    let (_, truth) =
        synth_phantom(5, (32, 32, 16), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.3).unwrap();
    let slabs = regional_dice(&truth, &truth).unwrap();
    // perfect prediction scores 1.0 everywhere
    for s in &slabs {
        for &(_, d) in &s.dice {
            assert_eq!(d, 1.0);
        }
    }
    // slabs tile the extent: apex bottom, base top, contiguous in between
    let apex = slabs.iter().find(|s| s.slab == Slab::Apex).unwrap();
    let base = slabs.iter().find(|s| s.slab == Slab::Base).unwrap();
    assert!(apex.z_range.0 <= apex.z_range.1);
    assert!(apex.z_range.1 < base.z_range.0);
}

#[test]
fn regional_dice_without_prostate_is_a_data_error() {
    let empty =
        LabelVolume::new((16, 16, 4), (1.0, 1.0, 1.0), label_names(3), vec![0; 16 * 16 * 4])
            .unwrap();
    assert!(matches!(regional_dice(&empty, &empty), Err(crate::Error::Data(_))));
}

#[test]
fn summary_matches_hand_arithmetic() {
    let r = summarize("TZ", &[0.8, 0.9, 1.0]);
    assert!((r.mean - 0.9).abs() < 1e-12);
    assert!((r.sd - 0.1).abs() < 1e-12);
    assert!((r.stderr - 0.1 / 3.0f64.sqrt()).abs() < 1e-12);
    assert_eq!(summarize("x", &[0.5]).sd, 0.0);
}

#[test]
fn class_weight_scaling_is_linear_in_the_loss() {
    let tape = Tape::<f64>::new();
    let probs = Tensor::volume(3, 1, 2, 2, vec![
        0.5, 0.25, 0.2, 0.7, //
        0.3, 0.25, 0.5, 0.2, //
        0.2, 0.5, 0.3, 0.1,
    ])
    .unwrap();
    let labels = [0u8, 2, 1, 0];
    let w1 = [1.0, 2.0, 6.0];
    let w2 = [2.0, 4.0, 12.0];
    let l1 = weighted_cross_entropy(&tape, &probs, &labels, &w1, None).unwrap().item();
    let l2 = weighted_cross_entropy(&tape, &probs, &labels, &w2, None).unwrap().item();
    assert!((l2 - 2.0 * l1).abs() < 1e-12);
}

#[test]
fn default_weights_upweight_the_zones() {
    assert_eq!(default_class_weights(3), vec![1.0, 2.0, 6.0]);
    assert_eq!(default_class_weights(6), vec![1.0, 2.0, 6.0, 1.0, 1.0, 1.0]);
}

#[test]
fn padding_rounds_up_and_masks_the_border() {
    let (image, labels) =
        synth_phantom(7, (20, 20, 5), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.2).unwrap();
    // anisotropic multiple is (2, 8, 8) in (z, y, x)
    let pad = Padding::for_dims(image.header.dims, (2, 8, 8));
    assert_eq!(pad.padded, (6, 24, 24));
    let input = pad_image(&image, &pad);
    assert_eq!(input.shape(), &[1, 6, 24, 24]);
    let (lbl, valid) = pad_labels(&labels, &pad);
    assert_eq!(valid.iter().filter(|&&v| v).count(), 20 * 20 * 5);
    // padding voxels are all background
    for (i, &v) in valid.iter().enumerate() {
        if !v {
            assert_eq!(lbl[i], 0);
        }
    }
    // cropping the padded labels restores the original buffer
    assert_eq!(crop_plane(&lbl, &pad), labels.voxels);
}

#[test]
fn padding_is_a_noop_on_aligned_dims() {
    let pad = Padding::for_dims((16, 16, 8), (2, 8, 8));
    assert!(pad.is_noop());
}

fn tiny_spec() -> NetworkSpec {
    let mut spec = NetworkSpec::new(Variant::Aniso, 3);
    spec.width_scale = 1.0 / 16.0;
    spec
}

#[test]
fn a_few_steps_reduce_the_training_loss() {
    let spec = tiny_spec();
    let (image, labels) =
        synth_phantom(1, (16, 16, 8), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.2).unwrap();
    let cfg = TrainingConfig { learning_rate: 1e-3, ..TrainingConfig::default() };
    let mut trainer = Trainer::new(build_network(&spec, 0).unwrap(), &cfg).unwrap();
    let input = image.to_tensor::<f32>();
    let weights = cfg.resolve_weights(3).unwrap();
    let first = trainer.step(&input, &labels.voxels, None, &weights).unwrap();
    let mut last = first;
    for _ in 0..39 {
        last = trainer.step(&input, &labels.voxels, None, &weights).unwrap();
    }
    assert!(last < first * 0.8, "loss {first} -> {last}");
}

#[test]
fn crossval_bookkeeping_and_summary_recomputation() {
    let spec = tiny_spec();
    let dataset: Vec<LabeledVolume> = (0..4)
        .map(|s| {
            let (image, labels) =
                synth_phantom(s, (16, 16, 4), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.2).unwrap();
            LabeledVolume { id: format!("v{s}"), image, labels }
        })
        .collect();
    let cfg = TrainingConfig { epochs: 2, folds: 2, ..TrainingConfig::default() };
    let out = run_crossval(&dataset, &spec, &cfg, None).unwrap();
    // epochs * folds * splits * non-background labels
    assert_eq!(out.curves.len(), 2 * 2 * 2 * 2);
    // each volume scored once per non-background label
    assert_eq!(out.per_volume.len(), 4 * 2);
    for name in ["TZ", "PZ"] {
        let vals: Vec<f64> =
            out.per_volume.iter().filter(|p| p.label == name).map(|p| p.dice).collect();
        let expect = summarize(name, &vals);
        let got = out.summary.iter().find(|r| r.label == name).unwrap();
        assert_eq!(got.n, 4);
        assert!((got.mean - expect.mean).abs() < 1e-12);
        assert!((got.sd - expect.sd).abs() < 1e-12);
        assert!((got.stderr - expect.stderr).abs() < 1e-12);
    }
}

#[test]
fn crossval_is_deterministic() {
    let spec = tiny_spec();
    let dataset: Vec<LabeledVolume> = (0..4)
        .map(|s| {
            let (image, labels) =
                synth_phantom(s, (16, 16, 4), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.2).unwrap();
            LabeledVolume { id: format!("v{s}"), image, labels }
        })
        .collect();
    let cfg = TrainingConfig { epochs: 1, folds: 2, ..TrainingConfig::default() };
    let aug = crate::augment::AugmentationConfig::default();
    let a = run_crossval(&dataset, &spec, &cfg, Some(&aug)).unwrap();
    let b = run_crossval(&dataset, &spec, &cfg, Some(&aug)).unwrap();
    for (x, y) in a.curves.iter().zip(&b.curves) {
        assert_eq!(x.dice.to_bits(), y.dice.to_bits());
    }
    for (x, y) in a.per_volume.iter().zip(&b.per_volume) {
        assert_eq!(x.dice.to_bits(), y.dice.to_bits());
        assert_eq!(x.soft_dice.to_bits(), y.soft_dice.to_bits());
    }
}

#[test]
fn final_test_rejects_overlap_and_empty_test() {
    let spec = tiny_spec();
    let mk = |s: u64| {
        let (image, labels) =
            synth_phantom(s, (16, 16, 4), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.2).unwrap();
        LabeledVolume { id: format!("v{s}"), image, labels }
    };
    let train = vec![mk(0), mk(1)];
    let cfg = TrainingConfig { epochs: 1, ..TrainingConfig::default() };
    assert!(matches!(
        run_final_test(&train, &[], &spec, &cfg, None),
        Err(crate::Error::Config(_))
    ));
    let overlapping = vec![mk(1)];
    assert!(matches!(
        run_final_test(&train, &overlapping, &spec, &cfg, None),
        Err(crate::Error::Config(_))
    ));
}

#[test]
fn csv_writers_emit_headers_and_roundtrip_values() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("curves.csv");
    let rows = vec![CurveRow {
        epoch: 3,
        fold: 1,
        split: "val".into(),
        label: "TZ".into(),
        dice: 0.123456789012345,
    }];
    write_curves_csv(&rows, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epoch,fold,split,label,dice");
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields[..4], ["3", "1", "val", "TZ"]);
    // shortest-roundtrip formatting parses back to the exact value
    assert_eq!(fields[4].parse::<f64>().unwrap().to_bits(), rows[0].dice.to_bits());
}
