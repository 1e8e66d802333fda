use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Documents up to this many words count as short.
pub const DEFAULT_LENGTH_THRESHOLD: usize = 2048;
pub const DEFAULT_BUCKET_WIDTH: usize = 256;

/// Word-count distribution split into short (`<= threshold`) and long.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthStats {
    /// bucket lower bound (multiple of `bucket_width`) → count
    pub histogram: BTreeMap<usize, usize>,
    pub bucket_width: usize,
    pub short_count: usize,
    pub long_count: usize,
    pub threshold: usize,
}

impl LengthStats {
    pub fn total(&self) -> usize {
        self.short_count + self.long_count
    }
}

/// Builds a [`LengthStats`] over any collection of word counts.
pub fn length_stats(
    word_counts: impl IntoIterator<Item = usize>,
    threshold: usize,
    bucket_width: usize,
) -> LengthStats {
    let width = bucket_width.max(1);
    let mut stats = LengthStats {
        histogram: BTreeMap::new(),
        bucket_width: width,
        short_count: 0,
        long_count: 0,
        threshold,
    };
    for wc in word_counts {
        *stats.histogram.entry(wc / width * width).or_default() += 1;
        if wc <= threshold {
            stats.short_count += 1;
        } else {
            stats.long_count += 1;
        }
    }
    stats
}
