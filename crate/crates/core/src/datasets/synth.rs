//! Double-digit and colored double-digit corpora with held-out combinations.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::combo::{Color, ComboClass};
use super::idx::LabeledImage;
use crate::error::{Error, Result};
use crate::nn::{derive_seed, seeded_rng};
use crate::tensor::Tensor;

pub const DIGIT_SIDE: usize = 28;
pub const HELD_OUT_DEFAULT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Double,
    ColoredDouble,
}

impl DatasetKind {
    /// Images per digit combination at full scale.
    pub fn full_per_class_count(self) -> usize {
        match self {
            DatasetKind::Double => 1000,
            DatasetKind::ColoredDouble => 4000,
        }
    }

    pub fn geometry(self) -> ImageGeometry {
        match self {
            DatasetKind::Double => ImageGeometry::GRAY,
            DatasetKind::ColoredDouble => ImageGeometry::RGB,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DatasetKind::Double => "two digit",
            DatasetKind::ColoredDouble => "colored two digit",
        }
    }
}

/// Channel-first image geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageGeometry {
    pub const GRAY: ImageGeometry = ImageGeometry {
        channels: 1,
        height: DIGIT_SIDE,
        width: 2 * DIGIT_SIDE,
    };
    pub const RGB: ImageGeometry = ImageGeometry {
        channels: 3,
        height: DIGIT_SIDE,
        width: 2 * DIGIT_SIDE,
    };

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn batch_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.channels, self.height, self.width]
    }
}

/// Split protocol: which digit pairs are held out, and how many images each
/// digit pair gets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: DatasetKind,
    pub seed: u64,
    pub per_class_count: usize,
    /// Held-out digit pairs (uncolored); sorted.
    pub held_out: Vec<ComboClass>,
}

impl SplitSpec {
    /// Draws `held_out_count` digit pairs uniformly without replacement.
    pub fn random(
        kind: DatasetKind,
        per_class_count: usize,
        held_out_count: usize,
        seed: u64,
    ) -> Result<Self> {
        if held_out_count == 0 || held_out_count >= 100 {
            return Err(Error::InvalidInput(format!(
                "held-out count must be in 1..100, got {held_out_count}"
            )));
        }
        let mut rng = seeded_rng(derive_seed(seed, "held-out"));
        let mut held_out: Vec<ComboClass> = ComboClass::all_plain()
            .choose_multiple(&mut rng, held_out_count)
            .copied()
            .collect();
        held_out.sort();
        Self::with_held_out(kind, per_class_count, held_out, seed)
    }

    pub fn with_held_out(
        kind: DatasetKind,
        per_class_count: usize,
        mut held_out: Vec<ComboClass>,
        seed: u64,
    ) -> Result<Self> {
        if per_class_count == 0 {
            return Err(Error::InvalidInput(
                "per_class_count must be positive".into(),
            ));
        }
        held_out = held_out.iter().map(ComboClass::digit_pair).collect();
        held_out.sort();
        held_out.dedup();
        if held_out.is_empty() || held_out.len() >= 100 {
            return Err(Error::InvalidInput(
                "held-out set must be non-empty and leave training pairs".into(),
            ));
        }
        Ok(Self {
            kind,
            seed,
            per_class_count,
            held_out,
        })
    }

    pub fn is_held_out(&self, class: &ComboClass) -> bool {
        self.held_out.binary_search(&class.digit_pair()).is_ok()
    }

    /// Training digit pairs in digit order.
    pub fn train_pairs(&self) -> Vec<ComboClass> {
        ComboClass::all_plain()
            .into_iter()
            .filter(|c| !self.is_held_out(c))
            .collect()
    }

    /// Classes generated at test time: the held-out pairs, with all nine
    /// colorings for the colored corpus.
    pub fn test_classes(&self) -> Vec<ComboClass> {
        match self.kind {
            DatasetKind::Double => self.held_out.clone(),
            DatasetKind::ColoredDouble => self
                .held_out
                .iter()
                .flat_map(ComboClass::color_variants)
                .collect(),
        }
    }

    pub fn expected_sizes(&self) -> (usize, usize) {
        let test = self.held_out.len() * self.per_class_count;
        (100 * self.per_class_count - test, test)
    }
}

/// Provenance of one synthesized image: pool indices of the left and right
/// exemplars and the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub class: ComboClass,
    pub exemplars: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: SplitSpec,
    pub pool_size: usize,
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

/// Single-digit exemplars grouped by label.
#[derive(Debug, Clone)]
pub struct DigitPool {
    images: Vec<LabeledImage>,
    by_digit: [Vec<u32>; 10],
}

impl DigitPool {
    pub fn new(images: Vec<LabeledImage>) -> Result<Self> {
        let mut by_digit: [Vec<u32>; 10] = Default::default();
        for (i, img) in images.iter().enumerate() {
            if img.rows != DIGIT_SIDE || img.cols != DIGIT_SIDE {
                return Err(Error::InvalidInput(format!(
                    "pool image {i} is {}x{}, expected 28x28",
                    img.rows, img.cols
                )));
            }
            by_digit[img.label as usize].push(i as u32);
        }
        if let Some(d) = by_digit.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("digit pool has no `{d}`")));
        }
        Ok(Self { images, by_digit })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: u32) -> &LabeledImage {
        &self.images[index as usize]
    }
}

/// Pure function of `(pool, spec)`.
pub fn build_manifest(pool: &DigitPool, spec: &SplitSpec) -> Manifest {
    let mut rng = seeded_rng(derive_seed(spec.seed, "manifest"));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pair in ComboClass::all_plain() {
        let [a, b] = pair.digits;
        let colorings = match spec.kind {
            DatasetKind::Double => vec![None; spec.per_class_count],
            DatasetKind::ColoredDouble => balanced_colorings(spec.per_class_count, &mut rng),
        };
        let dst = if spec.is_held_out(&pair) {
            &mut test
        } else {
            &mut train
        };
        for colors in colorings {
            let left = *pool.by_digit[a as usize]
                .choose(&mut rng)
                .expect("non-empty");
            let right = *pool.by_digit[b as usize]
                .choose(&mut rng)
                .expect("non-empty");
            dst.push(SampleRecord {
                class: ComboClass {
                    digits: pair.digits,
                    colors,
                },
                exemplars: [left, right],
            });
        }
    }
    let train_classes: BTreeSet<_> = train.iter().map(|r| r.class.digit_pair()).collect();
    assert!(
        test.iter()
            .all(|r| !train_classes.contains(&r.class.digit_pair())),
        "held-out pair leaked into training split"
    );
    Manifest {
        split: spec.clone(),
        pool_size: pool.len(),
        train,
        test,
    }
}

/// Random color pairs that cycle through all nine combinations before
/// repeating, shuffled.
fn balanced_colorings(count: usize, rng: &mut impl Rng) -> Vec<Option<[Color; 2]>> {
    let pairs: Vec<[Color; 2]> = Color::ALL
        .iter()
        .flat_map(|&a| Color::ALL.iter().map(move |&b| [a, b]))
        .collect();
    let mut out: Vec<_> = (0..count).map(|i| Some(pairs[i % pairs.len()])).collect();
    out.shuffle(rng);
    out
}

/// Places grayscale intensities in the named channel of a `[3, h, w]` tensor.
pub fn colorize(gray: &Tensor, color: Color) -> Result<Tensor> {
    let (h, w) = match gray.shape() {
        [h, w] => (*h, *w),
        [1, h, w] => (*h, *w),
        other => {
            return Err(Error::InvalidInput(format!(
                "colorize expects a grayscale image, got {other:?}"
            )))
        }
    };
    if let Some(v) = gray.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("intensity {v} outside [0, 1]")));
    }
    let mut data = vec![0.0; 3 * h * w];
    let c = color.channel();
    data[c * h * w..(c + 1) * h * w].copy_from_slice(gray.data());
    Tensor::new(vec![3, h, w], data)
}

/// Images stored as raw bytes, decoded to [0, 1] tensors on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub geometry: ImageGeometry,
    pixels: Vec<u8>,
    classes: Vec<ComboClass>,
}

impl ImageSet {
    pub fn from_parts(
        geometry: ImageGeometry,
        pixels: Vec<u8>,
        classes: Vec<ComboClass>,
    ) -> Result<Self> {
        if pixels.len() != classes.len() * geometry.len() {
            return Err(Error::InvalidInput(format!(
                "{} bytes do not hold {} images of {:?}",
                pixels.len(),
                classes.len(),
                geometry.shape()
            )));
        }
        Ok(Self {
            geometry,
            pixels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[ComboClass] {
        &self.classes
    }

    pub fn raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn raw_image(&self, index: usize) -> &[u8] {
        let n = self.geometry.len();
        &self.pixels[index * n..(index + 1) * n]
    }

    /// `[indices.len(), c, h, w]` tensor in [0, 1].
    pub fn tensor(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.geometry.len());
        for &i in indices {
            data.extend(self.raw_image(i).iter().map(|&p| p as f64 / 255.0));
        }
        Tensor::new(self.geometry.batch_shape(indices.len()).to_vec(), data)
            .expect("consistent geometry")
    }

    pub fn image(&self, index: usize) -> Tensor {
        let t = self.tensor(&[index]);
        t.reshape(&self.geometry.shape()).expect("same size")
    }

    pub fn all(&self) -> Tensor {
        self.tensor(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Indices of the images whose class satisfies `pred`.
    pub fn indices_where(&self, pred: impl Fn(&ComboClass) -> bool) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| pred(c))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> ImageSet {
        let mut pixels = Vec::with_capacity(indices.len() * self.geometry.len());
        for &i in indices {
            pixels.extend_from_slice(self.raw_image(i));
        }
        ImageSet {
            geometry: self.geometry,
            pixels,
            classes: indices.iter().map(|&i| self.classes[i]).collect(),
        }
    }
}

fn render(pool: &DigitPool, records: &[SampleRecord], geometry: ImageGeometry) -> ImageSet {
    let (h, w) = (geometry.height, geometry.width);
    let plane = h * w;
    let mut pixels = vec![0u8; records.len() * geometry.len()];
    for (rec, dst) in records.iter().zip(pixels.chunks_exact_mut(geometry.len())) {
        for (half, &ex) in rec.exemplars.iter().enumerate() {
            let channel = match rec.class.colors {
                None => 0,
                Some(colors) => colors[half].channel(),
            };
            let digit = &pool.image(ex).pixels;
            for y in 0..DIGIT_SIDE {
                let start = channel * plane + y * w + half * DIGIT_SIDE;
                dst[start..start + DIGIT_SIDE]
                    .copy_from_slice(&digit[y * DIGIT_SIDE..(y + 1) * DIGIT_SIDE]);
            }
        }
    }
    ImageSet {
        geometry,
        pixels,
        classes: records.iter().map(|r| r.class).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: ImageSet,
    pub test: ImageSet,
}

impl Dataset {
    pub fn from_manifest(pool: &DigitPool, manifest: Manifest) -> Result<Self> {
        let max = manifest
            .train
            .iter()
            .chain(&manifest.test)
            .flat_map(|r| r.exemplars)
            .max()
            .unwrap_or(0);
        if max as usize >= pool.len() {
            return Err(Error::InvalidInput(format!(
                "manifest references exemplar {max} but the pool has {}",
                pool.len()
            )));
        }
        let geometry = manifest.split.kind.geometry();
        Ok(Self {
            train: render(pool, &manifest.train, geometry),
            test: render(pool, &manifest.test, geometry),
            manifest,
        })
    }

    pub fn spec(&self) -> &SplitSpec {
        &self.manifest.split
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.train.geometry
    }
}

/// Horizontally concatenated digit pairs.
pub fn synth_double(pool: &DigitPool, spec: &SplitSpec) -> Result<Dataset> {
    if spec.kind != DatasetKind::Double {
        return Err(Error::InvalidInput(
            "synth_double needs a Double split".into(),
        ));
    }
    Dataset::from_manifest(pool, build_manifest(pool, spec))
}

/// Digit pairs with one of red/green/blue per digit.
pub fn synth_colored_double(pool: &DigitPool, spec: &SplitSpec) -> Result<Dataset> {
    if spec.kind != DatasetKind::ColoredDouble {
        return Err(Error::InvalidInput(
            "synth_colored_double needs a ColoredDouble split".into(),
        ));
    }
    Dataset::from_manifest(pool, build_manifest(pool, spec))
}

pub fn synthesize(pool: &DigitPool, spec: &SplitSpec) -> Result<Dataset> {
    match spec.kind {
        DatasetKind::Double => synth_double(pool, spec),
        DatasetKind::ColoredDouble => synth_colored_double(pool, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::idx::bundled_digits;

    fn pool() -> DigitPool {
        DigitPool::new(bundled_digits()).unwrap()
    }

    #[test]
    fn held_out_draw_is_seeded_and_sized() {
        let a = SplitSpec::random(DatasetKind::Double, 3, 16, 1).unwrap();
        let b = SplitSpec::random(DatasetKind::Double, 3, 16, 1).unwrap();
        let c = SplitSpec::random(DatasetKind::Double, 3, 16, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.held_out, c.held_out);
        assert_eq!(a.held_out.len(), 16);
        assert_eq!(a.train_pairs().len(), 84);
        assert!(SplitSpec::random(DatasetKind::Double, 3, 0, 1).is_err());
    }

    #[test]
    fn small_double_split() {
        let spec = SplitSpec::random(DatasetKind::Double, 5, 16, 9).unwrap();
        let ds = synth_double(&pool(), &spec).unwrap();
        assert_eq!(ds.train.len(), 420);
        assert_eq!(ds.test.len(), 80);
        assert_eq!(ds.geometry().width, 56);
        let img = ds.train.image(0);
        assert_eq!(img.shape(), &[1, 28, 56]);
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        for pair in spec.train_pairs() {
            assert_eq!(ds.train.indices_where(|c| *c == pair).len(), 5);
        }
    }

    #[test]
    fn halves_match_exemplars() {
        let p = pool();
        let spec = SplitSpec::random(DatasetKind::Double, 2, 16, 4).unwrap();
        let ds = synth_double(&p, &spec).unwrap();
        let rec = ds.manifest.train[17];
        let raw = ds.train.raw_image(17);
        let left = &p.image(rec.exemplars[0]).pixels;
        let right = &p.image(rec.exemplars[1]).pixels;
        assert_eq!(p.image(rec.exemplars[0]).label, rec.class.digits[0]);
        for y in 0..28 {
            assert_eq!(&raw[y * 56..y * 56 + 28], &left[y * 28..(y + 1) * 28]);
            assert_eq!(
                &raw[y * 56 + 28..(y + 1) * 56],
                &right[y * 28..(y + 1) * 28]
            );
        }
    }

    #[test]
    fn colored_halves_use_their_channels() {
        let spec = SplitSpec::random(DatasetKind::ColoredDouble, 18, 16, 5).unwrap();
        let ds = synth_colored_double(&pool(), &spec).unwrap();
        assert_eq!(ds.test.len(), 16 * 18);
        let test_classes: BTreeSet<_> = ds.test.classes().iter().copied().collect();
        assert_eq!(test_classes.len(), 16 * 9);
        for i in 0..ds.train.len() {
            let [c1, c2] = ds.train.classes()[i].colors.unwrap();
            let raw = ds.train.raw_image(i);
            for ch in 0..3 {
                for y in 0..28 {
                    for x in 0..56 {
                        let v = raw[ch * 28 * 56 + y * 56 + x];
                        let owner = if x < 28 { c1 } else { c2 };
                        if v > 0 {
                            assert_eq!(owner.channel(), ch);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn colorize_examples() {
        let g = Tensor::new(vec![1, 2], vec![0.8, 0.0]).unwrap();
        let c = colorize(&g, Color::Red).unwrap();
        assert_eq!(c.shape(), &[3, 1, 2]);
        assert_eq!(c.data(), &[0.8, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = colorize(&g, Color::Blue).unwrap();
        assert_eq!(b.data()[4], 0.8);
        let max = |t: &Tensor| t.data().iter().cloned().fold(0.0, f64::max);
        assert_eq!(max(&g), max(&b));
    }
}
