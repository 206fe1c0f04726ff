use super::phantom::{synth_phantom, LabelMode};
use super::resample::{resample, ResampleMode};
use super::stats::label_balance_stats;
use super::*;

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn container_roundtrip_is_byte_identical() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let dims = (8, 8, 4);
    let voxels: Vec<f32> = (0..256).map(|_| rng.random_range(-10.0..10.0)).collect();
    let vol = Volume::Image(ImageVolume::new(dims, (0.5, 0.5, 3.6), voxels).unwrap());
    let dir = tmp();
    let p1 = dir.path().join("a.zvol");
    let p2 = dir.path().join("b.zvol");
    write_volume(&vol, &p1).unwrap();
    let back = read_volume(&p1).unwrap();
    assert_eq!(back, vol);
    write_volume(&back, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn truncated_payload_is_a_format_error() {
    let dir = tmp();
    let p = dir.path().join("a.zvol");
    let vol = Volume::Image(ImageVolume::new((4, 4, 2), (1.0, 1.0, 1.0), vec![0.0; 32]).unwrap());
    write_volume(&vol, &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(read_volume(&p), Err(crate::Error::Format { .. })));
}

#[test]
fn bad_magic_reports_offset_zero() {
    let dir = tmp();
    let p = dir.path().join("a.zvol");
    std::fs::write(&p, b"NOTAVOLUMEFILE__________________").unwrap();
    match read_volume(&p) {
        Err(crate::Error::Format { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn out_of_range_label_value_rejected() {
    let dir = tmp();
    let p = dir.path().join("l.zvol");
    // write a valid 6-name labels file, then corrupt one voxel to 7
    let vol = Volume::Labels(
        LabelVolume::new((4, 4, 2), (1.0, 1.0, 1.0), label_names(6), vec![0; 32]).unwrap(),
    );
    write_volume(&vol, &p).unwrap();
    let mut bytes = std::fs::read(&p).unwrap();
    let len = bytes.len();
    bytes[len - 1] = 7;
    std::fs::write(&p, bytes).unwrap();
    assert!(matches!(read_volume(&p), Err(crate::Error::Data(_))));
    // constructing one directly is rejected too
    assert!(LabelVolume::new((2, 2, 1), (1.0, 1.0, 1.0), label_names(6), vec![0, 1, 2, 7]).is_err());
}

#[test]
fn resample_constant_image_stays_constant() {
    let vol = ImageVolume::new((16, 16, 8), (0.5, 0.5, 3.6), vec![5.0; 16 * 16 * 8]).unwrap();
    let out = resample(&Volume::Image(vol), (1.0, 1.0, 3.6), ResampleMode::Trilinear).unwrap();
    let Volume::Image(out) = out else { panic!() };
    assert_eq!(out.header.dims, (8, 8, 8));
    assert!(out.voxels.iter().all(|&v| (v - 5.0).abs() < 1e-6));
}

#[test]
fn resample_dims_follow_spacing_ratio() {
    let vol = ImageVolume::new((128, 128, 24), (0.5, 0.5, 3.6), vec![0.0; 128 * 128 * 24]).unwrap();
    let out = resample(&Volume::Image(vol), (1.0, 1.0, 3.6), ResampleMode::Trilinear).unwrap();
    let Volume::Image(out) = out else { panic!() };
    assert_eq!(out.header.dims, (64, 64, 24));
}

#[test]
fn nearest_never_invents_labels_and_trilinear_on_labels_errors() {
    let (_, labels) =
        synth_phantom(3, (32, 32, 8), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.5).unwrap();
    let down = resample(&Volume::Labels(labels.clone()), (2.0, 2.0, 7.2), ResampleMode::Nearest)
        .unwrap();
    let Volume::Labels(down) = down else { panic!() };
    let input_set: std::collections::BTreeSet<u8> = labels.voxels.iter().copied().collect();
    assert!(down.voxels.iter().all(|v| input_set.contains(v)));

    assert!(matches!(
        resample(&Volume::Labels(labels), (2.0, 2.0, 7.2), ResampleMode::Trilinear),
        Err(crate::Error::Usage(_))
    ));
}

#[test]
fn resample_to_same_spacing_is_identity() {
    let (image, labels) =
        synth_phantom(9, (32, 32, 8), (1.0, 1.0, 3.6), LabelMode::SixLabel, 0.5).unwrap();
    let same_img =
        resample(&Volume::Image(image.clone()), (1.0, 1.0, 3.6), ResampleMode::Trilinear).unwrap();
    let Volume::Image(same_img) = same_img else { panic!() };
    for (a, b) in same_img.voxels.iter().zip(&image.voxels) {
        assert!((a - b).abs() < 1e-6);
    }
    let same_lbl =
        resample(&Volume::Labels(labels.clone()), (1.0, 1.0, 3.6), ResampleMode::Nearest).unwrap();
    let Volume::Labels(same_lbl) = same_lbl else { panic!() };
    assert_eq!(same_lbl.voxels, labels.voxels);
}

#[test]
fn balance_stats_arithmetic() {
    // 300 TZ, 100 PZ on a 20x20x1 grid
    let mut voxels = vec![0u8; 400];
    voxels[..300].fill(LABEL_TZ);
    voxels[300..].fill(LABEL_PZ);
    let vol = LabelVolume::new((20, 20, 1), (1.0, 1.0, 1.0), label_names(3), voxels).unwrap();
    let stats = label_balance_stats(&[("v0".into(), &vol)]);
    assert_eq!(stats.per_volume[0].tz_fraction, Some(0.75));
    assert_eq!(stats.per_volume[0].bg_tz_ratio, Some(0.0));
    assert!(!stats.per_volume[0].excluded);
}

#[test]
fn all_background_volume_flagged_excluded() {
    let vol = LabelVolume::new((8, 8, 2), (1.0, 1.0, 1.0), label_names(3), vec![0; 128]).unwrap();
    let stats = label_balance_stats(&[("empty".into(), &vol)]);
    assert!(stats.per_volume[0].excluded);
    assert_eq!(stats.per_volume[0].tz_fraction, None);
    assert_eq!(stats.mean_tz_fraction(), None);
}

#[test]
fn phantom_dataset_mean_tz_fraction_near_generator_target() {
    let vols: Vec<LabelVolume> = (0..20)
        .map(|s| {
            synth_phantom(s, (64, 64, 16), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.5).unwrap().1
        })
        .collect();
    let dataset: Vec<(String, &LabelVolume)> =
        vols.iter().enumerate().map(|(i, v)| (format!("v{i}"), v)).collect();
    let stats = label_balance_stats(&dataset);
    let mean = stats.mean_tz_fraction().unwrap();
    assert!((mean - 0.7).abs() < 0.05, "mean TZ fraction {mean}");
    let total: usize = stats.histogram.iter().map(|b| b.count).sum();
    assert_eq!(total, 20);
}

#[test]
fn phantom_determinism_and_label_sets() {
    let dims = (32, 32, 8);
    let a = synth_phantom(1, dims, (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.5).unwrap();
    let b = synth_phantom(1, dims, (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.5).unwrap();
    assert_eq!(a.0.voxels, b.0.voxels);
    assert_eq!(a.1.voxels, b.1.voxels);

    let set: std::collections::BTreeSet<u8> = a.1.voxels.iter().copied().collect();
    assert_eq!(set, [0u8, 1, 2].into_iter().collect());
    let six = synth_phantom(1, (64, 64, 16), (1.0, 1.0, 3.6), LabelMode::SixLabel, 0.5).unwrap();
    let set6: std::collections::BTreeSet<u8> = six.1.voxels.iter().copied().collect();
    assert_eq!(set6, (0u8..6).collect());
}

#[test]
fn phantom_pz_smaller_than_tz() {
    for seed in 0..5 {
        let (_, l) =
            synth_phantom(seed, (64, 64, 16), (1.0, 1.0, 3.6), LabelMode::TwoLabel, 0.5).unwrap();
        assert!(l.count(LABEL_PZ) < l.count(LABEL_TZ));
        assert!(l.count(LABEL_PZ) > 0);
    }
}

#[test]
fn phantom_rejects_tiny_dims() {
    assert!(matches!(
        synth_phantom(1, (8, 8, 2), (1.0, 1.0, 1.0), LabelMode::TwoLabel, 0.5),
        Err(crate::Error::Config(_))
    ));
}
