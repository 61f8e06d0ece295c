use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;

/// Splits per label: `round(fraction * count)` records of each label go to
/// the test side, chosen by a seeded shuffle. Both outputs keep the input
/// order. `fraction` is clamped to `[0, 1]`.
pub fn stratified_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let fraction = if test_fraction.is_nan() {
        0.0
    } else {
        test_fraction.clamp(0.0, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_labels()];
    for (i, r) in dataset.records.iter().enumerate() {
        by_label[r.label].push(i);
    }
    let mut is_test = vec![false; dataset.len()];
    for indices in by_label.iter_mut() {
        let n_test = (fraction * indices.len() as f64).round() as usize;
        indices.shuffle(&mut rng);
        for &i in indices.iter().take(n_test) {
            is_test[i] = true;
        }
    }
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| is_test[i]);
    (dataset.subset(&train_idx), dataset.subset(&test_idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientRecord, SensorSchema};

    fn toy(n: usize, labels: usize) -> Dataset {
        let schema = SensorSchema::new(
            vec!["a".into(), "b".into()],
            (0..labels).map(|l| format!("l{l}")).collect(),
        )
        .unwrap();
        let records = (0..n)
            .map(|i| PatientRecord::new(vec![i as f64, (i * 7 % 13) as f64], i % labels))
            .collect();
        Dataset::new(schema, records).unwrap()
    }

    #[test]
    fn zero_fraction_keeps_everything_in_train() {
        let ds = toy(50, 3);
        let (train, test) = stratified_split(&ds, 0.0, 1);
        assert_eq!(train, ds);
        assert!(test.is_empty());
    }

    #[test]
    fn eighty_twenty_preserves_label_proportions() {
        let ds = toy(100, 3);
        let (train, test) = stratified_split(&ds, 0.2, 5);
        assert_eq!(train.len() + test.len(), 100);
        assert!((test.len() as i64 - 20).abs() <= 1);
        let totals = ds.label_counts();
        for (l, &c) in test.label_counts().iter().enumerate() {
            let expect = 0.2 * totals[l] as f64;
            assert!((c as f64 - expect).abs() <= 1.0, "label {l}: {c} vs {expect}");
        }
    }

    #[test]
    fn multiset_union_equals_input() {
        // Records are unique by their first measurement, so the check is exhaustive.
        for &frac in &[0.0, 0.1, 0.33, 0.5, 0.9, 1.0] {
            let ds = toy(97, 4);
            let (train, test) = stratified_split(&ds, frac, 11);
            let mut ids: Vec<i64> = train
                .records
                .iter()
                .chain(&test.records)
                .map(|r| r.measurements[0] as i64)
                .collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..97).collect::<Vec<_>>());
        }
    }
}
