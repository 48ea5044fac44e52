use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, McqItem};

/// Disjoint development / test / train partitions of one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub dev: Vec<McqItem>,
    pub test: Vec<McqItem>,
    pub train: Vec<McqItem>,
    pub seed: u64,
}

/// Split sizes as recorded in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub dev: usize,
    pub test: usize,
    pub train: usize,
}

impl CorpusSplit {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            dev: self.dev.len(),
            test: self.test.len(),
            train: self.train.len(),
        }
    }
}

/// Randomly samples dev, test and train subsets of the requested sizes.
///
/// Sampling is a ChaCha8 shuffle of item positions keyed by `seed`; each
/// split keeps the corpus order of its members.
pub fn split_corpus(
    items: &[McqItem],
    dev_n: usize,
    test_n: usize,
    train_n: usize,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    let needed = dev_n + test_n + train_n;
    if needed > items.len() {
        return Err(CorpusError::InsufficientItems {
            needed,
            available: items.len(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let take = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| items[i].clone()).collect::<Vec<_>>()
    };
    Ok(CorpusSplit {
        dev: take(0..dev_n),
        test: take(dev_n..dev_n + test_n),
        train: take(dev_n + test_n..needed),
        seed,
    })
}
