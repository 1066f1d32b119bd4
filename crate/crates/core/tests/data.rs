use std::collections::HashSet;
use std::path::Path;

use aegan::data::*;
use aegan::models::ImageShape;
use aegan::training::LatentPrior;
use aegan::AeganError;
use image::{Rgb, RgbImage};
use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn save(img: &RgbImage, dir: &Path, name: &str) {
    img.save(dir.join(name)).unwrap();
}

fn gradient(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| Rgb([(x * 37 % 256) as u8, (y * 53 % 256) as u8, ((x + y) * 11 % 256) as u8]))
}

#[test]
fn single_image_with_mirroring() {
    let dir = tempfile::tempdir().unwrap();
    save(&gradient(8, 8), dir.path(), "a.png");
    let ds = load_image_folder(dir.path(), (8, 8), true).unwrap();
    assert_eq!(ds.len(), 2);
    let image = ImageShape { height: 8, width: 8, channels: 3 };
    assert_eq!(mirror_horizontal(ds.sample(0), image), ds.sample(1).to_vec());
    assert_ne!(ds.sample(0), ds.sample(1));
}

#[test]
fn symmetric_image_mirrors_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let img = RgbImage::from_fn(6, 6, |x, y| {
        let d = x.min(5 - x) as u8;
        Rgb([d * 40, y as u8 * 30, 200])
    });
    save(&img, dir.path(), "s.png");
    let ds = load_image_folder(dir.path(), (6, 6), true).unwrap();
    assert_eq!(ds.sample(0), ds.sample(1));
}

#[test]
fn round_trip_is_within_one_level() {
    let dir = tempfile::tempdir().unwrap();
    let img = gradient(16, 16);
    save(&img, dir.path(), "g.png");
    let ds = load_image_folder(dir.path(), (16, 16), false).unwrap();
    let image = ImageShape { height: 16, width: 16, channels: 3 };
    for (a, b) in img.pixels().flat_map(|p| p.0).zip(ds.sample(0)) {
        assert!((pixel_to_unit(a) - b).abs() <= 1.0 / 127.5);
    }
    assert_eq!(row_to_image(ds.sample(0), image).unwrap(), img);
    assert!(ds.values().iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn non_square_images_are_center_cropped_and_resized() {
    let dir = tempfile::tempdir().unwrap();
    save(&gradient(40, 20), dir.path(), "wide.png");
    let ds = load_image_folder(dir.path(), (8, 8), false).unwrap();
    assert_eq!(ds.values().dim(), (1, 8 * 8 * 3));
}

#[test]
fn undecodable_files_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    save(&gradient(8, 8), dir.path(), "ok.png");
    std::fs::write(dir.path().join("notes.txt"), "not an image").unwrap();
    assert_eq!(load_image_folder(dir.path(), (8, 8), false).unwrap().len(), 1);
}

#[test]
fn empty_folder_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_image_folder(dir.path(), (8, 8), true).unwrap_err();
    assert!(matches!(err, AeganError::Data(_)));
    assert_eq!(err.exit_code(), 3);
    std::fs::write(dir.path().join("junk.bin"), [0u8, 1, 2]).unwrap();
    assert!(matches!(load_image_folder(dir.path(), (8, 8), true), Err(AeganError::Data(_))));
}

#[test]
fn prior_moments() {
    let prior = LatentPrior::new(4);
    let z = prior.sample(100_000, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mean = z.values().mean_axis(Axis(0)).unwrap();
    let var = z.values().var_axis(Axis(0), 1.0);
    assert!(mean.iter().all(|m| m.abs() < 0.015), "{mean}");
    assert!(var.iter().all(|v| (v - 1.0).abs() < 0.02), "{var}");
}

#[test]
fn mixture_moments_per_mode() {
    let spec = MixtureSpec { samples_per_mode: 4000, ..MixtureSpec::default() };
    let ds = make_gaussian_mixture(&spec, 11).unwrap();
    assert_eq!(ds.len(), 8 * 4000);
    for (k, center) in spec.centers().iter().enumerate() {
        let block = ds.values().slice(ndarray::s![k * 4000..(k + 1) * 4000, ..]).to_owned();
        let mean = block.mean_axis(Axis(0)).unwrap();
        let std = block.std_axis(Axis(0), 1.0);
        for d in 0..2 {
            assert!((mean[d] - center[d]).abs() < 0.002);
            assert!((std[d] - spec.mode_std).abs() < 0.002);
        }
        let r = (center[0].powi(2) + center[1].powi(2)).sqrt();
        assert!((r - spec.radius).abs() < 1e-12);
    }
    assert_eq!(make_gaussian_mixture(&spec, 11).unwrap().values(), ds.values());
    assert_ne!(make_gaussian_mixture(&spec, 12).unwrap().values(), ds.values());
}

#[test]
fn mixture_rejects_degenerate_specs() {
    for spec in [
        MixtureSpec { n_modes: 0, ..MixtureSpec::default() },
        MixtureSpec { samples_per_mode: 0, ..MixtureSpec::default() },
        MixtureSpec { radius: -1.0, ..MixtureSpec::default() },
    ] {
        assert_eq!(make_gaussian_mixture(&spec, 0).unwrap_err().exit_code(), 2);
    }
}

#[test]
fn batch_schedule_covers_each_epoch_once() {
    let mut schedule = BatchSchedule::new(103, 10, 4).unwrap();
    assert_eq!(schedule.batches_per_epoch(), 10);
    for epoch in 0..3u64 {
        let mut seen = HashSet::new();
        for k in 0..10 {
            let batch = schedule.indices(epoch * 10 + k).to_vec();
            assert_eq!(batch.len(), 10);
            seen.extend(batch);
        }
        assert_eq!(seen.len(), 100);
    }
    let a = schedule.indices(0).to_vec();
    assert_ne!(a, schedule.indices(10).to_vec());
    let mut fresh = BatchSchedule::new(103, 10, 4).unwrap();
    assert_eq!(fresh.indices(25).to_vec(), schedule.indices(25).to_vec());
    assert!(BatchSchedule::new(5, 10, 0).is_err());
}
