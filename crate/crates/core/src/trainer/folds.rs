use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Per-sample fold ids. Image ids are shuffled and dealt round-robin, so
/// every question about one image lands in the same fold.
pub fn make_folds(m: &DatasetManifest, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut images: Vec<&str> = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for s in &m.samples {
        if seen.insert(s.image_id.as_str(), ()).is_none() {
            images.push(&s.image_id);
        }
    }
    if images.len() < k {
        return Err(Error::config(format!(
            "{} distinct images cannot fill {k} folds",
            images.len()
        )));
    }
    images.shuffle(&mut stream(seed, Stream::Folds));
    let fold_of: HashMap<&str, usize> = images.iter().enumerate().map(|(i, id)| (*id, i % k)).collect();
    Ok(m.samples.iter().map(|s| fold_of[s.image_id.as_str()]).collect())
}

/// The manifest's own folds when present, otherwise [`make_folds`].
pub fn resolve_folds(m: &DatasetManifest, k: usize, seed: u64) -> Result<Vec<usize>> {
    match &m.folds {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&x| x >= k) {
                return Err(Error::schema(format!("manifest fold {bad} out of range for {k} folds")));
            }
            Ok(f.clone())
        }
        None => make_folds(m, k, seed),
    }
}

/// `(train, validation)` sample indices for `fold`.
pub fn fold_split(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}
