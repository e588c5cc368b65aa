//! MNIST loading and the double-digit corpora.

mod combo;
mod idx;
mod store;
mod synth;

pub use combo::{digit_from_word, Color, ComboClass, DIGIT_WORDS};
pub use idx::{
    bundled_digits, encode_mnist_idx, find_mnist_train, load_mnist_idx, parse_mnist_idx,
    LabeledImage, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use store::{
    export_sample_png, load_dataset, manifest_json, save_dataset, SplitCounts, IMAGES_FILE,
    MANIFEST_FILE,
};
pub use synth::{
    build_manifest, colorize, synth_colored_double, synth_double, synthesize, Dataset, DatasetKind,
    DigitPool, ImageGeometry, ImageSet, Manifest, SampleRecord, SplitSpec, DIGIT_SIDE,
    HELD_OUT_DEFAULT,
};
