use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::samples::Sample;

pub const DEFAULT_TRAIN_RATIO: f64 = 0.7;

/// Seeded train/test partition, returned as sorted index lists into
/// `samples`.
///
/// With `group_by_segment`, whole segments are assigned to one side and the
/// ratio applies to the segment count.
pub fn split(samples: &[Sample], ratio: f64, seed: u64, group_by_segment: bool) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if group_by_segment {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            groups.entry(s.segment_id.as_str()).or_default().push(i);
        }
        let mut keys: Vec<&str> = groups.keys().copied().collect();
        keys.shuffle(&mut rng);
        let n_train = (ratio * keys.len() as f64).round() as usize;
        let train_keys: BTreeSet<&str> = keys[..n_train].iter().copied().collect();
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (k, idx) in groups {
            if train_keys.contains(k) {
                train.extend(idx);
            } else {
                test.extend(idx);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    } else {
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.shuffle(&mut rng);
        let n_train = (ratio * samples.len() as f64).round() as usize;
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }
}
