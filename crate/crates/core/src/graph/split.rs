//! Stratified k-fold splits with an optional holdout test set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GrdlError, Result};

/// Index lists for one fold. `test` is the shared holdout (possibly empty).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `labels.len()` samples into `folds` folds after carving out a
/// `holdout` fraction as a test set.
///
/// Splits are stratified by label unless some class has fewer samples than
/// `folds`, in which case a warning is logged and plain shuffling is used.
pub fn kfold_splits(
    labels: &[usize],
    folds: usize,
    holdout: f64,
    seed: u64,
) -> Result<Vec<DatasetSplit>> {
    if folds < 2 {
        return Err(GrdlError::Config(format!("need at least 2 folds, got {folds}")));
    }
    if !(0.0..0.5).contains(&holdout) {
        return Err(GrdlError::Config(format!(
            "holdout fraction must lie in [0, 0.5), got {holdout}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_classes = labels.iter().map(|&y| y + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let stratify = by_class.iter().all(|c| c.is_empty() || c.len() >= folds);
    if !stratify {
        log::warn!("a class has fewer than {folds} samples; falling back to unstratified folds");
        by_class = vec![(0..labels.len()).collect()];
    }

    let mut test = Vec::new();
    let mut fold_of: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut deal = 0;
    for group in by_class.iter_mut() {
        group.shuffle(&mut rng);
        let held = (holdout * group.len() as f64).round() as usize;
        test.extend_from_slice(&group[..held]);
        for &i in &group[held..] {
            fold_of[deal % folds].push(i);
            deal += 1;
        }
    }
    if deal < folds {
        return Err(GrdlError::Config(format!(
            "{deal} samples outside the holdout cannot fill {folds} folds"
        )));
    }
    test.sort_unstable();

    Ok((0..folds)
        .map(|f| {
            let mut validation = fold_of[f].clone();
            validation.sort_unstable();
            let mut train: Vec<usize> = fold_of
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            DatasetSplit {
                fold: f,
                train,
                validation,
                test: test.clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ten_by_ten_gives_singletons() {
        let labels = vec![0; 10];
        let splits = kfold_splits(&labels, 10, 0.0, 3).unwrap();
        assert_eq!(splits.len(), 10);
        for s in &splits {
            assert_eq!(s.validation.len(), 1);
            assert_eq!(s.train.len(), 9);
            assert!(s.test.is_empty());
        }
    }

    #[test]
    fn folds_partition_the_non_holdout_universe() {
        let labels: Vec<usize> = (0..57).map(|i| i % 3).collect();
        let splits = kfold_splits(&labels, 5, 0.2, 11).unwrap();
        let test = &splits[0].test;
        let mut seen: Vec<usize> = splits.iter().flat_map(|s| s.validation.clone()).collect();
        seen.extend(test);
        seen.sort_unstable();
        assert_eq!(seen, (0..57).collect::<Vec<_>>());
        for s in &splits {
            assert_eq!(&s.test, test);
            assert_eq!(s.train.len() + s.validation.len() + test.len(), 57);
            assert!(s.train.iter().all(|i| !s.validation.contains(i) && !test.contains(i)));
        }
    }

    #[test]
    fn stratified_histograms_are_proportional() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
        let folds = 7;
        let splits = kfold_splits(&labels, folds, 0.0, 5).unwrap();
        for c in 0..3 {
            let total = labels.iter().filter(|&&y| y == c).count() as f64;
            for s in &splits {
                let got = s.validation.iter().filter(|&&i| labels[i] == c).count() as f64;
                assert!((got - total / folds as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn tiny_class_falls_back() {
        let mut labels = vec![0; 20];
        labels[3] = 1;
        let splits = kfold_splits(&labels, 4, 0.0, 1).unwrap();
        let sizes: Vec<usize> = splits.iter().map(|s| s.validation.len()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 5]);
    }

    #[test]
    fn deterministic_under_seed() {
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        assert_eq!(
            kfold_splits(&labels, 3, 0.1, 8).unwrap(),
            kfold_splits(&labels, 3, 0.1, 8).unwrap()
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(kfold_splits(&[0, 1], 1, 0.0, 0).is_err());
        assert!(kfold_splits(&[0, 1], 2, 0.5, 0).is_err());
        assert!(kfold_splits(&[0], 2, 0.0, 0).is_err());
    }
}
