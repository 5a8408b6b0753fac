use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::patches::{PatchSet, Split};
use crate::error::{Error, Result};

/// Training samples drawn from a class of `n`: `round(fraction·n)`, at
/// least one and at most `n`.
pub fn train_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Assigns each sample to train or test, class by class.
///
/// Within each class (ascending), samples in row-major order are shuffled
/// by a generator seeded with `seed` and the first [`train_count`] become
/// training samples.
pub fn stratified_split(mut set: PatchSet, fraction: f64, seed: u64) -> Result<PatchSet> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let classes = set.classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, s) in set.samples().iter().enumerate() {
        members[s.class()].push(i);
    }
    if let Some(k) = members.iter().position(Vec::is_empty) {
        return Err(Error::Data(format!("class {} has no labeled samples", k + 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = set.samples_mut();
    for idx in &mut members {
        idx.shuffle(&mut rng);
        let n_train = train_count(fraction, idx.len());
        for (rank, &i) in idx.iter().enumerate() {
            samples[i].split = Some(if rank < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::cube::{HsiCube, LabelRaster};
    use crate::data::patches::extract_patches;

    fn set(labels: Vec<u16>) -> PatchSet {
        let n = labels.len();
        let cube = HsiCube::new(1, n, 1, vec![0.0; n]).unwrap();
        extract_patches(cube, &LabelRaster::new(1, n, labels).unwrap(), 3).unwrap()
    }

    #[test]
    fn half_of_ten() {
        let s = stratified_split(set(vec![1; 10]), 0.5, 7).unwrap();
        assert_eq!(s.indices(Split::Train).len(), 5);
        assert_eq!(s.indices(Split::Test).len(), 5);
    }

    #[test]
    fn salinas_class_two() {
        let n = 19 + 3707;
        assert_eq!(train_count(0.005, n), 19);
        assert_eq!(n - train_count(0.005, n), 3707);
    }

    #[test]
    fn minimum_one_training_sample() {
        assert_eq!(train_count(0.001, 10), 1);
        assert_eq!(train_count(0.9, 1), 1);
    }

    #[test]
    fn missing_class_is_data_error() {
        let err = stratified_split(set(vec![1, 3, 3]), 0.5, 0).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn fraction_bounds() {
        assert!(stratified_split(set(vec![1; 4]), 0.0, 0).is_err());
        assert!(stratified_split(set(vec![1; 4]), 1.0, 0).is_err());
    }
}
