use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Trajectory;
use crate::{Error, Result};

/// Fold index for every trajectory of a dataset, in dataset order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Folds {
    pub k: usize,
    pub assignment: Vec<usize>,
}

/// Shuffles the indices and deals them round-robin, so fold sizes differ by
/// at most one.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<Folds> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("{k} folds for {n} trajectories")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (j, &i) in order.iter().enumerate() {
        assignment[i] = j % k;
    }
    Ok(Folds { k, assignment })
}

impl Folds {
    pub fn test(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }

    /// Lines `<id> <fold>`.
    pub fn write(&self, w: &mut impl Write, trajectories: &[Trajectory]) -> Result<()> {
        for (t, f) in trajectories.iter().zip(&self.assignment) {
            writeln!(w, "{} {f}", t.id)?;
        }
        Ok(())
    }

    /// Reads a fold file and orders it by `trajectories`; every trajectory
    /// must be listed.
    pub fn read(r: impl BufRead, trajectories: &[Trajectory]) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let bad = || Error::Parse {
                line: i + 1,
                msg: format!("expected `<id> <fold>`, got {text:?}"),
            };
            let (id, f) = text.split_once(char::is_whitespace).ok_or_else(bad)?;
            let f: usize = f.trim().parse().map_err(|_| bad())?;
            by_id.insert(id.to_string(), f);
        }
        let assignment = trajectories
            .iter()
            .map(|t| {
                by_id
                    .get(&t.id)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("trajectory {:?} missing from fold file", t.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(Error::Config("fold file defines fewer than 2 folds".into()));
        }
        Ok(Self { k, assignment })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;

    #[test]
    fn partition_sizes_and_determinism() {
        let f = split_folds(15697, 5, 1).unwrap();
        let mut sizes = f.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![3139, 3139, 3139, 3140, 3140]);
        assert_eq!(f, split_folds(15697, 5, 1).unwrap());
        assert_ne!(f, split_folds(15697, 5, 2).unwrap());
    }

    #[test]
    fn test_sets_partition_the_data() {
        let f = split_folds(23, 4, 9).unwrap();
        let mut all: Vec<usize> = (0..4).flat_map(|k| f.test(k)).collect();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(f.train(1).len() + f.test(1).len(), 23);
    }

    #[test]
    fn errors() {
        assert!(split_folds(3, 4, 0).is_err());
        assert!(split_folds(3, 1, 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let trajs: Vec<_> = (0..7).map(|i| Trajectory::new(format!("t{i}"), vec![Point::new(0, 0)])).collect();
        let f = split_folds(7, 3, 5).unwrap();
        let mut buf = Vec::new();
        f.write(&mut buf, &trajs).unwrap();
        assert_eq!(Folds::read(buf.as_slice(), &trajs).unwrap(), f);
    }
}
