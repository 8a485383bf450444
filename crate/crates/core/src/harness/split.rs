use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::numerics::RandomStream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitScheme {
    /// Train on the first `train_groups` groups (in ascending group id),
    /// test on the rest.
    Ratio { train_groups: usize },
    /// Label-stratified k-fold over shuffled samples.
    Kfold { k: usize },
    /// `k` contiguous blocks of groups (ascending id).
    GroupKfold { k: usize },
    LeaveOneGroupOut,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn distinct_groups(groups: &[usize]) -> Vec<usize> {
    groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

fn fold_from_test(n: usize, mut test: Vec<usize>) -> Fold {
    test.sort_unstable();
    let mut is_test = vec![false; n];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..n).filter(|&i| !is_test[i]).collect();
    Fold { train, test }
}

fn by_groups(groups: &[usize], chosen: &BTreeSet<usize>) -> Vec<usize> {
    (0..groups.len()).filter(|i| chosen.contains(&groups[*i])).collect()
}

/// Disjoint train/test index sets; every sample is tested exactly once
/// except under `Ratio`, which yields a single fold.
pub fn split(labels: &[usize], groups: &[usize], scheme: &SplitScheme, stream: &mut RandomStream) -> Result<Vec<Fold>> {
    let n = labels.len();
    if groups.len() != n {
        return dim_err(format!("{n} labels vs {} groups", groups.len()));
    }
    if n == 0 {
        return param_err("cannot split an empty dataset");
    }
    let ids = distinct_groups(groups);
    match *scheme {
        SplitScheme::Ratio { train_groups } => {
            if train_groups == 0 || train_groups >= ids.len() {
                return param_err(format!("ratio split needs 0 < train groups < {}, got {train_groups}", ids.len()));
            }
            let test: BTreeSet<usize> = ids[train_groups..].iter().copied().collect();
            Ok(vec![fold_from_test(n, by_groups(groups, &test))])
        }
        SplitScheme::Kfold { k } => {
            if k < 2 || k > n {
                return param_err(format!("k-fold needs 2 <= k <= {n}, got {k}"));
            }
            let classes = labels.iter().max().map_or(0, |&m| m + 1);
            let mut order = Vec::with_capacity(n);
            for c in 0..classes {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                stream.shuffle(&mut members);
                order.extend(members);
            }
            let mut tests = vec![Vec::new(); k];
            for (pos, i) in order.into_iter().enumerate() {
                tests[pos % k].push(i);
            }
            Ok(tests.into_iter().map(|t| fold_from_test(n, t)).collect())
        }
        SplitScheme::GroupKfold { k } => {
            if k < 2 || k > ids.len() {
                return param_err(format!("group k-fold needs 2 <= k <= {} groups, got {k}", ids.len()));
            }
            Ok((0..k)
                .map(|f| {
                    let lo = f * ids.len() / k;
                    let hi = (f + 1) * ids.len() / k;
                    let test: BTreeSet<usize> = ids[lo..hi].iter().copied().collect();
                    fold_from_test(n, by_groups(groups, &test))
                })
                .collect())
        }
        SplitScheme::LeaveOneGroupOut => {
            if ids.len() < 2 {
                return param_err("leave-one-group-out needs at least two groups");
            }
            Ok(ids
                .iter()
                .map(|&g| fold_from_test(n, (0..n).filter(|&i| groups[i] == g).collect()))
                .collect())
        }
    }
}
