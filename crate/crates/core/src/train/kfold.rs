use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Stratified k-fold split over sample labels.
///
/// Each class is shuffled and the concatenated class lists are dealt
/// round-robin, so fold sizes and per-class counts differ by at most one.
/// Returns `(train, validation)` index sets per fold, each sorted.
pub fn kfold_split(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::config(format!("folds must be at least 2, got {folds}")));
    }
    if folds > labels.len() {
        return Err(Error::config(format!(
            "cannot split {} samples into {folds} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut dealt: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut slot = 0;
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            dealt[slot % folds].push(i);
            slot += 1;
        }
    }
    Ok(dealt
        .into_iter()
        .map(|mut val| {
            val.sort_unstable();
            let train = (0..labels.len()).filter(|i| val.binary_search(i).is_err()).collect();
            (train, val)
        })
        .collect())
}
