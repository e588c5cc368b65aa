mod common;

use cmem::datasets::{DatasetKind, ImageGeometry};
use cmem::image_models::{train_image_model, ImageAutoencoder, ImageModelKind, EMBEDDING_DIM};
use cmem::training::TrainConfig;
use common::shapes::expected_trace;
use common::small_dataset;

#[test]
fn shape_traces_match_the_architecture_tables() {
    for geometry in [ImageGeometry::GRAY, ImageGeometry::RGB] {
        for kind in ImageModelKind::ALL {
            let model = ImageAutoencoder::build(kind, geometry, 0).unwrap();
            assert_eq!(
                model.shape_trace().unwrap(),
                expected_trace(kind, geometry.channels),
                "{kind} with {} channels",
                geometry.channels
            );
        }
    }
}

#[test]
fn conv_vae_flattens_to_3136() {
    let model = ImageAutoencoder::build(ImageModelKind::ConvVae, ImageGeometry::GRAY, 0).unwrap();
    let (enc, _) = model.shape_trace().unwrap();
    assert_eq!(enc[3].iter().product::<usize>(), 3136);
}

#[test]
fn smoke_training_lowers_the_loss() {
    let data = small_dataset(DatasetKind::Double, 3, 1);
    let images = data.train.subset(&(0..200).collect::<Vec<_>>());
    let config = TrainConfig {
        epochs: 5,
        seed: 2,
        ..TrainConfig::default()
    };
    for kind in ImageModelKind::ALL {
        let mut model = ImageAutoencoder::build(kind, ImageGeometry::GRAY, 1).unwrap();
        let history = train_image_model(&mut model, &images, &config).unwrap();
        assert_eq!(history.len(), 5);
        assert!(history[4] < history[0], "{kind}: {history:?}");
    }
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let data = small_dataset(DatasetKind::Double, 1, 1);
    let mut model =
        ImageAutoencoder::build(ImageModelKind::ConvAe, ImageGeometry::GRAY, 4).unwrap();
    let before = model.clone();
    let config = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(train_image_model(&mut model, &data.train, &config)
        .unwrap()
        .is_empty());
    assert_eq!(model, before);
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = small_dataset(DatasetKind::Double, 1, 2);
    let config = TrainConfig {
        epochs: 2,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model =
            ImageAutoencoder::build(ImageModelKind::MlpVae, ImageGeometry::GRAY, 3).unwrap();
        let history = train_image_model(&mut model, &data.train, &config).unwrap();
        (history, model)
    };
    let (h1, m1) = run();
    let (h2, m2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
}

#[test]
fn trained_mlp_ae_halves_reconstruction_bce() {
    let data = small_dataset(DatasetKind::Double, 2, 3);
    let images = data.train.subset(&(0..100).collect::<Vec<_>>());
    let mut model = ImageAutoencoder::build(ImageModelKind::MlpAe, ImageGeometry::GRAY, 5).unwrap();
    let untrained = model.reconstruction_bce(&images.all()).unwrap();
    let config = TrainConfig {
        epochs: 60,
        batch_size: 20,
        seed: 6,
        ..TrainConfig::default()
    };
    train_image_model(&mut model, &images, &config).unwrap();
    let trained = model.reconstruction_bce(&images.all()).unwrap();
    assert!(
        trained <= 0.5 * untrained,
        "{trained} vs untrained {untrained}"
    );
}

#[test]
fn encoding_is_deterministic_and_decoding_in_range() {
    let data = small_dataset(DatasetKind::ColoredDouble, 1, 4);
    let x = data.test.tensor(&[0, 1, 2]);
    for kind in ImageModelKind::ALL {
        let model = ImageAutoencoder::build(kind, ImageGeometry::RGB, 7).unwrap();
        let z = model.encode(&x).unwrap();
        assert_eq!(z.shape(), &[3, EMBEDDING_DIM]);
        assert_eq!(z, model.encode(&x).unwrap());
        let rec = model.decode(&z).unwrap();
        assert_eq!(rec.shape(), x.shape());
        assert!(rec.data().iter().all(|&v| v > 0.0 && v < 1.0), "{kind}");
    }
}
