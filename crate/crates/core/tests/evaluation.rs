mod common;

use cmem::evaluation::{
    grid_image, psnr_from_distance, psnr_nearest, render_grid, PsnrFormula, PsnrOptions, GRID_GAP,
    PSNR_CAP_DB,
};
use cmem::imageio::load_png;
use cmem::nn::seeded_rng;
use cmem::Tensor;
use common::{nearest_disagreements, randn, uniform};
use proptest::prelude::*;

#[test]
fn nearest_selection_matches_exhaustive_scan() {
    assert_eq!(nearest_disagreements(50, 1), 0);
}

#[test]
fn reference_values() {
    let options = PsnrOptions::default();
    let pixels = 1568;
    assert_eq!(psnr_from_distance(0.0, pixels, &options), PSNR_CAP_DB);
    let d = 0.01 * pixels as f64;
    assert!((psnr_from_distance(d, pixels, &options) - 20.0).abs() < 1e-12);
    let literal = PsnrOptions {
        formula: PsnrFormula::LiteralNorm,
        ..options
    };
    assert!((psnr_from_distance(0.01, pixels, &literal) - 20.0).abs() < 1e-12);
}

#[test]
fn grid_round_trips_through_png() {
    let mut rng = seeded_rng(4);
    let images: Vec<Tensor> = (0..16)
        .map(|_| uniform(&[3, 28, 56], &mut rng, 0.0, 1.0))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.png");
    render_grid(&images, 4, &path).unwrap();
    let back = load_png(&path).unwrap();
    let expected = grid_image(&images, 4).unwrap();
    assert_eq!(
        back.shape(),
        &[
            3,
            4 * (28 + GRID_GAP) + GRID_GAP,
            4 * (56 + GRID_GAP) + GRID_GAP
        ]
    );
    let worst = back
        .data()
        .iter()
        .zip(expected.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.5 / 255.0 + 1e-12, "{worst}");

    let single = grid_image(&images[..1], 4).unwrap();
    assert_eq!(single.shape(), &[3, 28 + 2 * GRID_GAP, 56 + 2 * GRID_GAP]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn whole_pool_never_scores_below_a_class_subset(seed in 0u64..10_000, split in 1usize..12) {
        let mut rng = seeded_rng(seed);
        let all = uniform(&[12, 1, 3, 5], &mut rng, 0.0, 1.0);
        let pred = uniform(&[1, 3, 5], &mut rng, 0.0, 1.0);
        let subset = all.select(&(0..split).collect::<Vec<_>>());
        let options = PsnrOptions::default();
        let whole = psnr_nearest(&pred, &all, &options).unwrap().psnr_db;
        let class = psnr_nearest(&pred, &subset, &options).unwrap().psnr_db;
        prop_assert!(whole >= class);
    }

    #[test]
    fn added_noise_never_raises_psnr(seed in 0u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut rng = seeded_rng(seed);
        let target = uniform(&[1, 1, 3, 5], &mut rng, 0.0, 1.0);
        let noise = randn(&[1, 3, 5], &mut rng, 1.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let degrade = |s: f64| {
            let data = target.data().iter().zip(noise.data()).map(|(t, n)| t + s * n).collect();
            Tensor::new(vec![1, 3, 5], data).unwrap()
        };
        let options = PsnrOptions::default();
        let near = psnr_nearest(&degrade(lo), &target, &options).unwrap().psnr_db;
        let far = psnr_nearest(&degrade(hi), &target, &options).unwrap().psnr_db;
        prop_assert!(far <= near);
    }
}
