use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Anything that can be ranked by identity similarity.
pub trait Scored {
    fn pair_id(&self) -> u64;
    fn similarity(&self) -> f64;
}

impl Scored for super::SwapPair {
    fn pair_id(&self) -> u64 {
        self.pair_id
    }
    fn similarity(&self) -> f64 {
        self.similarity_score
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortDirection {
    #[default]
    Ascending,
    Descending,
}

impl FromStr for SortDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascending" | "asc" => Ok(Self::Ascending),
            "descending" | "desc" => Ok(Self::Descending),
            _ => Err(Error::Config(format!("unknown sort direction `{s}`"))),
        }
    }
}

/// The first and last `⌈fraction·n⌉` items after sorting. The two sets
/// overlap once `fraction > 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<'a, T> {
    pub lower: Vec<&'a T>,
    pub upper: Vec<&'a T>,
}

/// Sorts by similarity (ties by pair id) and takes both ends.
pub fn split_by_similarity<T: Scored>(items: &[T], fraction: f64, direction: SortDirection) -> Result<Split<'_, T>> {
    ensure!(!items.is_empty(), InvalidArgument, "cannot split an empty set");
    ensure!(
        fraction > 0.0 && fraction < 1.0,
        InvalidArgument,
        "split fraction {fraction} outside (0, 1)"
    );
    for it in items {
        ensure!(
            !it.similarity().is_nan(),
            NonFinite,
            "pair {} has a NaN similarity",
            it.pair_id()
        );
    }
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort_by(|a, b| {
        let ord = a.similarity().total_cmp(&b.similarity());
        let ord = match direction {
            SortDirection::Ascending => ord,
            SortDirection::Descending => ord.reverse(),
        };
        ord.then(a.pair_id().cmp(&b.pair_id()))
    });
    let n = sorted.len();
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    Ok(Split {
        lower: sorted[..k].to_vec(),
        upper: sorted[n - k..].to_vec(),
    })
}
