use std::collections::{BTreeMap, BTreeSet};

use cmem::datasets::{
    build_manifest, bundled_digits, ComboClass, DatasetKind, DigitPool, Manifest, SplitSpec,
};
use proptest::prelude::*;

fn manifest(kind: DatasetKind, per_class_count: usize, seed: u64) -> Manifest {
    let pool = DigitPool::new(bundled_digits()).unwrap();
    build_manifest(
        &pool,
        &SplitSpec::random(kind, per_class_count, 16, seed).unwrap(),
    )
}

fn pairs(records: &[cmem::datasets::SampleRecord]) -> BTreeSet<ComboClass> {
    records.iter().map(|r| r.class.digit_pair()).collect()
}

#[test]
fn full_scale_counts() {
    let m = manifest(
        DatasetKind::Double,
        DatasetKind::Double.full_per_class_count(),
        0,
    );
    assert_eq!((m.train.len(), m.test.len()), (84_000, 16_000));
    let m = manifest(
        DatasetKind::ColoredDouble,
        DatasetKind::ColoredDouble.full_per_class_count(),
        0,
    );
    assert_eq!((m.train.len(), m.test.len()), (336_000, 64_000));
    assert!(pairs(&m.train).is_disjoint(&pairs(&m.test)));
    let mut colorings: BTreeMap<ComboClass, BTreeSet<ComboClass>> = BTreeMap::new();
    for r in &m.test {
        colorings
            .entry(r.class.digit_pair())
            .or_default()
            .insert(r.class);
    }
    assert_eq!(colorings.len(), 16);
    assert!(colorings.values().all(|c| c.len() == 9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splits_are_disjoint_balanced_and_reproducible(
        seed in 0u64..10_000,
        per_class_count in 1usize..6,
        colored in any::<bool>(),
    ) {
        let kind = if colored { DatasetKind::ColoredDouble } else { DatasetKind::Double };
        let m = manifest(kind, per_class_count, seed);
        let (train, test) = (pairs(&m.train), pairs(&m.test));
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len(), 84);
        prop_assert_eq!(test.len(), 16);
        let mut counts: BTreeMap<ComboClass, usize> = BTreeMap::new();
        for r in &m.train {
            *counts.entry(r.class.digit_pair()).or_default() += 1;
        }
        prop_assert!(counts.values().all(|&c| c == per_class_count));
        prop_assert_eq!(m, manifest(kind, per_class_count, seed));
    }
}
