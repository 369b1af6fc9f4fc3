//! Counting, ranking and unranking of change-point configurations.
//!
//! A configuration for an `N`-point grid with `m` change points is a strictly
//! increasing `m`-tuple drawn from the interior indices `1..=N-2`. Configurations
//! are addressed by their rank in lexicographic order, so the full set never
//! has to be materialized: a worker unranks its first configuration and then
//! walks forward with [`successor`].

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing interior grid indices of the change points.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CpConfiguration(Vec<usize>);

impl CpConfiguration {
    /// Validates the tuple against an `n_points` grid.
    pub fn new(indices: Vec<usize>, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid of {n_points} points has no interior"
            )));
        }
        if indices.iter().any(|&i| i < 1 || i > n_points - 2) {
            return Err(Error::InvalidParameter(format!(
                "change points {indices:?} must lie in [1, {}]",
                n_points - 2
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "change points {indices:?} are not strictly increasing"
            )));
        }
        Ok(CpConfiguration(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl fmt::Display for CpConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{idx}")?;
        }
        write!(f, ")")
    }
}

/// Exact number of configurations, `binomial(N - 2, m)`.
pub fn count_configurations(n_points: usize, m: usize) -> Result<BigUint> {
    if n_points < 2 || m > n_points - 2 {
        return Err(Error::InvalidParameter(format!(
            "{m} change points do not fit into a grid of {n_points} points"
        )));
    }
    let n = n_points - 2;
    let k = m.min(n - m);
    let mut acc = BigUint::from(1u32);
    for i in 1..=k {
        acc *= BigUint::from(n - k + i);
        acc /= BigUint::from(i);
    }
    Ok(acc)
}

/// Configuration count as `u64`, or `None` when it does not fit.
pub fn count_configurations_u64(n_points: usize, m: usize) -> Result<Option<u64>> {
    if n_points < 2 || m > n_points - 2 {
        return Err(Error::InvalidParameter(format!(
            "{m} change points do not fit into a grid of {n_points} points"
        )));
    }
    Ok(binomial_u64(n_points - 2, m))
}

/// `binomial(n, k)` when it fits into a `u64`.
pub fn binomial_u64(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        // acc holds binomial(n - k + i - 1, i - 1) here, so the division is exact.
        acc = acc.checked_mul(n as u128 - k as u128 + i)? / i;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// The `rank`-th configuration in lexicographic order.
pub fn unrank(rank: u64, n_points: usize, m: usize) -> Result<CpConfiguration> {
    let total = count_configurations_u64(n_points, m)?.ok_or_else(|| {
        Error::InvalidParameter(format!(
            "binomial({}, {m}) does not fit into 64-bit ranks",
            n_points - 2
        ))
    })?;
    if rank >= total {
        return Err(Error::RankOutOfRange {
            rank,
            count: total.to_string(),
        });
    }
    let mut out = vec![0; m];
    unrank_into(rank, n_points, &mut out);
    Ok(CpConfiguration(out))
}

/// Unranks into a caller-provided buffer of length `m`; `rank` must be valid.
pub(crate) fn unrank_into(mut rank: u64, n_points: usize, out: &mut [usize]) {
    let n = n_points - 2;
    let m = out.len();
    let mut next = 1;
    for pos in 0..m {
        let remaining = m - pos - 1;
        let mut c = next;
        loop {
            // Completions that keep `c` at this position choose the rest from (c, n].
            let with_c = binomial_u64(n - c, remaining).expect("count fits in u64");
            if rank < with_c {
                break;
            }
            rank -= with_c;
            c += 1;
        }
        out[pos] = c;
        next = c + 1;
    }
}

/// Lexicographic rank of a configuration; inverse of [`unrank`].
pub fn rank(config: &CpConfiguration, n_points: usize) -> Result<u64> {
    let m = config.len();
    count_configurations_u64(n_points, m)?
        .ok_or_else(|| Error::InvalidParameter("configuration count exceeds u64".into()))?;
    let n = n_points - 2;
    let mut r = 0u64;
    let mut next = 1;
    for (pos, &c) in config.indices().iter().enumerate() {
        let remaining = m - pos - 1;
        for skipped in next..c {
            r += binomial_u64(n - skipped, remaining).expect("count fits in u64");
        }
        next = c + 1;
    }
    Ok(r)
}

/// Next configuration in lexicographic order, or `None` after the last one.
pub fn successor(config: &CpConfiguration, n_points: usize) -> Option<CpConfiguration> {
    let mut next = config.0.clone();
    advance(&mut next, n_points).then_some(CpConfiguration(next))
}

/// Advances `indices` in place. Returns the leftmost position that changed
/// plus one (so `0` means exhausted and the buffer is left untouched).
pub(crate) fn advance_from(indices: &mut [usize], n_points: usize) -> usize {
    let m = indices.len();
    let n = n_points - 2;
    for pos in (0..m).rev() {
        let max_here = n - (m - 1 - pos);
        if indices[pos] < max_here {
            indices[pos] += 1;
            for later in pos + 1..m {
                indices[later] = indices[later - 1] + 1;
            }
            return pos + 1;
        }
    }
    0
}

pub(crate) fn advance(indices: &mut [usize], n_points: usize) -> bool {
    advance_from(indices, n_points) != 0
}

/// Iterator over all configurations starting at a given rank.
pub struct Configurations {
    current: Option<Vec<usize>>,
    n_points: usize,
}

impl Configurations {
    pub fn from_rank(rank: u64, n_points: usize, m: usize) -> Result<Self> {
        let first = unrank(rank, n_points, m)?;
        Ok(Configurations {
            current: Some(first.into_inner()),
            n_points,
        })
    }

    pub fn all(n_points: usize, m: usize) -> Result<Self> {
        Self::from_rank(0, n_points, m)
    }
}

impl Iterator for Configurations {
    type Item = CpConfiguration;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.current.take()?;
        let mut next = current.clone();
        if advance(&mut next, self.n_points) {
            self.current = Some(next);
        }
        Some(CpConfiguration(current))
    }
}
