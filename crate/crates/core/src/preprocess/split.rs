use super::{DatasetIndex, Split, Warning};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Stratified train/test split.
///
/// Each identity's images (in index order) are shuffled with one SplitMix64
/// stream seeded by `seed`, visiting identities in id order, and the first
/// `round(ratio * n)` go to train. Identities with two or more images always
/// keep at least one image on each side; a lone image goes to train with a
/// warning.
pub fn split_dataset(
    index: &DatasetIndex,
    ratio: f64,
    seed: u64,
) -> Result<(DatasetIndex, Vec<Warning>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("split ratio", format!("{ratio} is not in (0, 1)")));
    }
    let mut out = index.clone();
    let mut warnings = Vec::new();
    let mut rng = SplitMix64::new(seed);
    for label in &index.labels {
        let mut members: Vec<usize> = index
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label.id)
            .map(|(i, _)| i)
            .collect();
        let n = members.len();
        if n == 0 {
            continue;
        }
        rng.shuffle(&mut members);
        let n_train = if n == 1 {
            warnings.push(Warning::new(
                index.absolute_path(&index.entries[members[0]]),
                format!("identity {} has a single image; assigned to train", label.name),
            ));
            1
        } else {
            ((ratio * n as f64).round() as usize).clamp(1, n - 1)
        };
        for (rank, &i) in members.iter().enumerate() {
            out.entries[i].split = if rank < n_train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    out.split = Some((seed, ratio));
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::IndexEntry;
    use crate::types::IdentityLabel;
    use std::path::PathBuf;

    fn synthetic_index(per_identity: &[usize]) -> DatasetIndex {
        let names: Vec<String> = (0..per_identity.len()).map(|i| format!("p{i}")).collect();
        let labels = IdentityLabel::dense(&names).unwrap();
        let mut entries = Vec::new();
        for (id, &n) in per_identity.iter().enumerate() {
            for j in 0..n {
                entries.push(IndexEntry {
                    path: PathBuf::from(format!("p{id}/{j:03}.png")),
                    label: id,
                    split: Split::Train,
                });
            }
        }
        DatasetIndex {
            root: PathBuf::from("/data"),
            labels,
            entries,
            split: None,
        }
    }

    fn tags(index: &DatasetIndex) -> Vec<Split> {
        index.entries.iter().map(|e| e.split).collect()
    }

    #[test]
    fn eighty_twenty_per_identity() {
        let index = synthetic_index(&[30; 10]);
        let (split, warnings) = split_dataset(&index, 0.8, 42).unwrap();
        assert!(warnings.is_empty());
        assert!(split.split_counts().iter().all(|&c| c == (24, 6)));
        assert_eq!(split.count(Split::Train), 240);
        assert_eq!(split.split, Some((42, 0.8)));
    }

    #[test]
    fn two_images_half_split() {
        let (split, _) = split_dataset(&synthetic_index(&[2]), 0.5, 1).unwrap();
        assert_eq!(split.split_counts(), vec![(1, 1)]);
    }

    #[test]
    fn both_splits_non_empty_for_small_identities() {
        let (split, _) = split_dataset(&synthetic_index(&[2, 3, 4]), 0.8, 3).unwrap();
        assert!(split.split_counts().iter().all(|&(tr, te)| tr >= 1 && te >= 1));
    }

    #[test]
    fn single_image_goes_to_train_with_warning() {
        let (split, warnings) = split_dataset(&synthetic_index(&[1, 5]), 0.8, 0).unwrap();
        assert_eq!(split.split_counts()[0], (1, 0));
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn same_seed_same_tags() {
        let index = synthetic_index(&[30; 10]);
        let a = split_dataset(&index, 0.8, 7).unwrap().0;
        let b = split_dataset(&index, 0.8, 7).unwrap().0;
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn frozen_assignment_for_seed_42() {
        // Pins the cross-platform stream: test positions for one identity.
        let (split, _) = split_dataset(&synthetic_index(&[10]), 0.8, 42).unwrap();
        let test: Vec<usize> = split
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == Split::Test)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(test.len(), 2);
        assert_eq!(test, FROZEN_TEST_POSITIONS);
    }

    const FROZEN_TEST_POSITIONS: [usize; 2] = [1, 3];

    #[test]
    fn different_seeds_differ() {
        let index = synthetic_index(&[30; 10]);
        for seed in 0..100u64 {
            let a = split_dataset(&index, 0.8, seed).unwrap().0;
            let b = split_dataset(&index, 0.8, seed + 1).unwrap().0;
            assert_ne!(tags(&a), tags(&b), "seeds {seed} and {}", seed + 1);
        }
    }

    #[test]
    fn split_is_a_partition() {
        let index = synthetic_index(&[7, 12, 30]);
        let (split, _) = split_dataset(&index, 0.8, 11).unwrap();
        assert_eq!(split.entries.len(), index.entries.len());
        for (a, b) in split.entries.iter().zip(&index.entries) {
            assert_eq!((&a.path, a.label), (&b.path, b.label));
        }
    }

    #[test]
    fn ratio_bounds() {
        let index = synthetic_index(&[4]);
        assert!(split_dataset(&index, 0.0, 1).is_err());
        assert!(split_dataset(&index, 1.0, 1).is_err());
    }
}
