use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Canonical set of generators (1-based ids) whose measurements are absent.
/// Always stored sorted and deduplicated, so it can key model banks.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MissingMask(Vec<usize>);

impl MissingMask {
    pub fn none() -> Self {
        MissingMask(Vec::new())
    }

    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        MissingMask(v)
    }

    /// Complement of `observed` within generators `1..=generator_count`.
    pub fn from_observed(observed: impl IntoIterator<Item = usize>, generator_count: usize) -> Self {
        let mut present = vec![false; generator_count + 1];
        for g in observed {
            if g <= generator_count {
                present[g] = true;
            }
        }
        MissingMask((1..=generator_count).filter(|&g| !present[g]).collect())
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, generator: usize) -> bool {
        self.0.binary_search(&generator).is_ok()
    }

    /// Ids must name real generators and leave at least one observed.
    pub fn validate(&self, generator_count: usize) -> Result<()> {
        if let Some(&g) = self.0.iter().find(|&&g| g == 0 || g > generator_count) {
            return Err(Error::Input(format!("mask names unknown generator {g}")));
        }
        if self.0.len() >= generator_count {
            return Err(Error::Input("mask excludes every generator".into()));
        }
        Ok(())
    }

    /// Observed generator positions (0-based), ascending.
    pub fn observed_positions(&self, generator_count: usize) -> Vec<usize> {
        (0..generator_count).filter(|&p| !self.contains(p + 1)).collect()
    }

    pub fn observed_count(&self, generator_count: usize) -> usize {
        generator_count - self.0.len()
    }

    /// Every mask with at most `k_max` of `generator_count` generators, ordered by
    /// size then lexicographically.
    pub fn enumerate(generator_count: usize, k_max: usize) -> Vec<MissingMask> {
        let mut out = Vec::new();
        for size in 0..=k_max.min(generator_count) {
            let mut combo: Vec<usize> = (1..=size).collect();
            loop {
                out.push(MissingMask(combo.clone()));
                // next combination in lexicographic order
                let mut i = size;
                while i > 0 && combo[i - 1] == generator_count - size + i {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                combo[i - 1] += 1;
                for j in i..size {
                    combo[j] = combo[j - 1] + 1;
                }
            }
        }
        out
    }
}

impl fmt::Display for MissingMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.0.iter().map(|g| g.to_string()).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for MissingMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" || s.is_empty() {
            return Ok(MissingMask::none());
        }
        s.split(['-', ','])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Input(format!("bad generator id {p:?} in mask {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(MissingMask::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order() {
        assert_eq!(MissingMask::new([7, 3]), MissingMask::new([3, 7, 3]));
        assert_eq!(MissingMask::new([7, 3]).to_string(), "3-7");
        assert_eq!("7,3".parse::<MissingMask>().unwrap(), MissingMask::new([3, 7]));
        assert_eq!("none".parse::<MissingMask>().unwrap(), MissingMask::none());
    }

    #[test]
    fn enumeration_counts_match_binomial_sums() {
        assert_eq!(MissingMask::enumerate(10, 0).len(), 1);
        assert_eq!(MissingMask::enumerate(10, 1).len(), 11);
        assert_eq!(MissingMask::enumerate(10, 2).len(), 56);
        let all = MissingMask::enumerate(5, 5);
        assert_eq!(all.len(), 32);
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 32);
    }

    #[test]
    fn complement_of_observed() {
        let m = MissingMask::from_observed([1, 2, 4], 5);
        assert_eq!(m.ids(), &[3, 5]);
        assert_eq!(m.observed_positions(5), vec![0, 1, 3]);
    }

    #[test]
    fn validation() {
        assert!(MissingMask::new([11]).validate(10).is_err());
        assert!(MissingMask::new(1..=10).validate(10).is_err());
        assert!(MissingMask::new([3]).validate(10).is_ok());
    }
}
