//! Partial-matching schedules: 0/1 matrices whose row and column sums are at
//! most one, with no two active crosspoints sharing a row or a column.

use crate::error::{Error, Result};

/// An `n x n` 0/1 schedule with row/column sums <= 1, stored as the pair of
/// partner maps. The representation makes the matching invariants impossible
/// to violate from outside this module.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Schedule {
    row: Vec<Option<usize>>,
    col: Vec<Option<usize>>,
}

impl Schedule {
    pub fn empty(n: usize) -> Self {
        Self {
            row: vec![None; n],
            col: vec![None; n],
        }
    }

    /// Builds a schedule from explicit crosspoints, rejecting row or column
    /// conflicts.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &(i, j) in pairs {
            s.activate(i, j)?;
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.row.len()
    }

    pub fn is_active(&self, input: usize, output: usize) -> bool {
        self.row[input] == Some(output)
    }

    /// Output held by `input`, if any.
    pub fn partner_of_input(&self, input: usize) -> Option<usize> {
        self.row[input]
    }

    /// Input held by `output`, if any.
    pub fn partner_of_output(&self, output: usize) -> Option<usize> {
        self.col[output]
    }

    pub fn input_free(&self, input: usize) -> bool {
        self.row[input].is_none()
    }

    pub fn output_free(&self, output: usize) -> bool {
        self.col[output].is_none()
    }

    /// True when some active crosspoint shares the row or the column of
    /// `(input, output)` without being `(input, output)` itself.
    pub fn has_active_neighbor(&self, input: usize, output: usize) -> bool {
        match (self.row[input], self.col[output]) {
            (Some(j), _) if j != output => true,
            (_, Some(i)) if i != input => true,
            _ => false,
        }
    }

    pub fn activate(&mut self, input: usize, output: usize) -> Result<()> {
        if let Some(j) = self.row[input] {
            if j != output {
                return Err(Error::InvalidSchedule(format!(
                    "input {input} already paired with output {j}"
                )));
            }
            return Ok(());
        }
        if let Some(i) = self.col[output] {
            return Err(Error::InvalidSchedule(format!(
                "output {output} already paired with input {i}"
            )));
        }
        self.row[input] = Some(output);
        self.col[output] = Some(input);
        Ok(())
    }

    pub fn deactivate(&mut self, input: usize, output: usize) {
        if self.row[input] == Some(output) {
            self.row[input] = None;
            self.col[output] = None;
        }
    }

    /// Number of active crosspoints.
    pub fn len(&self) -> usize {
        self.row.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.row.iter().all(|r| r.is_none())
    }

    /// Active `(input, output)` pairs in ascending input order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|j| (i, j)))
    }

    /// Sorted pair list, the canonical representation used for ordering and
    /// reporting.
    pub fn canonical_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs().collect()
    }

    /// Cross-consistency of the two partner maps. The public API cannot break
    /// it; this guards internal mutation paths.
    pub fn assert_valid(&self) {
        for (i, r) in self.row.iter().enumerate() {
            if let Some(j) = r {
                assert_eq!(self.col[*j], Some(i), "partner maps out of sync");
            }
        }
        for (j, c) in self.col.iter().enumerate() {
            if let Some(i) = c {
                assert_eq!(self.row[*i], Some(j), "partner maps out of sync");
            }
        }
    }

    /// Key ordering schedules by size first, then lexicographically by the
    /// sorted pair list.
    pub fn canonical_key(&self) -> (usize, Vec<(usize, usize)>) {
        (self.len(), self.canonical_pairs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_row_and_column_conflicts() {
        assert!(Schedule::from_pairs(2, &[(0, 0), (0, 1)]).is_err());
        assert!(Schedule::from_pairs(2, &[(0, 0), (1, 0)]).is_err());
        assert!(Schedule::from_pairs(2, &[(0, 0), (1, 1)]).is_ok());
    }

    #[test]
    fn neighbor_detection() {
        let s = Schedule::from_pairs(3, &[(1, 0)]).unwrap();
        assert!(s.has_active_neighbor(1, 2)); // same row
        assert!(s.has_active_neighbor(2, 0)); // same column
        assert!(!s.has_active_neighbor(1, 0)); // itself
        assert!(!s.has_active_neighbor(2, 2));
    }

    #[test]
    fn activate_deactivate_roundtrip() {
        let mut s = Schedule::empty(3);
        s.activate(2, 1).unwrap();
        assert!(s.is_active(2, 1));
        assert_eq!(s.partner_of_output(1), Some(2));
        s.deactivate(2, 1);
        assert!(s.is_empty());
        s.assert_valid();
    }
}
