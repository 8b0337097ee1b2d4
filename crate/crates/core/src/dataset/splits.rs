use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One train/test partition, as indices into the video list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Leave-one-user-out: one fold per distinct user, in user order.
pub fn louo_splits<T, K, F>(items: &[T], user: F) -> Result<Vec<Fold>>
where
    K: Ord + ToString,
    F: Fn(&T) -> K,
{
    let mut by_user: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_user.entry(user(item)).or_default().push(i);
    }
    if by_user.len() < 2 {
        return Err(Error::Split(format!(
            "leave-one-user-out needs at least two users, found {}",
            by_user.len()
        )));
    }
    Ok(by_user
        .iter()
        .map(|(u, test)| Fold {
            name: format!("louo-{}", u.to_string()),
            train: (0..items.len()).filter(|i| !test.contains(i)).collect(),
            test: test.clone(),
        })
        .collect())
}

/// Seeded choice of `n_test` held-out videos out of `n`.
pub fn seeded_holdout(n: usize, n_test: usize, seed: u64) -> Result<Fold> {
    if n_test == 0 || n_test >= n {
        return Err(Error::Split(format!("cannot hold out {n_test} of {n} videos")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    test.sort_unstable();
    Ok(explicit_holdout(n, &test, "holdout"))
}

/// Hold out exactly the listed indices.
pub fn explicit_holdout(n: usize, test: &[usize], name: &str) -> Fold {
    Fold {
        name: name.to_string(),
        train: (0..n).filter(|i| !test.contains(i)).collect(),
        test: test.to_vec(),
    }
}
