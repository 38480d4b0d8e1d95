//! Input/output permutations: full matchings pairing every input with exactly
//! one output.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;

/// A permutation of `n` ports, stored as the map `input -> output` together
/// with its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    fwd: Vec<usize>,
    inv: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from the `input -> output` map, rejecting
    /// anything that is not a bijection on `0..n`.
    pub fn new(fwd: Vec<usize>) -> Result<Self> {
        let n = fwd.len();
        if n == 0 {
            return Err(Error::InvalidDimension("empty permutation".into()));
        }
        let mut inv = vec![usize::MAX; n];
        for (i, &j) in fwd.iter().enumerate() {
            if j >= n {
                return Err(Error::InvalidParameter(format!(
                    "permutation entry {j} out of range for n = {n}"
                )));
            }
            if inv[j] != usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "output {j} appears twice in permutation"
                )));
            }
            inv[j] = i;
        }
        Ok(Self { fwd, inv })
    }

    pub fn identity(n: usize) -> Self {
        let fwd: Vec<usize> = (0..n).collect();
        Self {
            inv: fwd.clone(),
            fwd,
        }
    }

    /// Uniformly random permutation drawn with a Fisher-Yates shuffle.
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut fwd: Vec<usize> = (0..n).collect();
        fwd.shuffle(rng);
        Self::new(fwd).expect("shuffle preserves bijectivity")
    }

    pub fn n(&self) -> usize {
        self.fwd.len()
    }

    /// Output paired with `input`.
    pub fn output_of(&self, input: usize) -> usize {
        self.fwd[input]
    }

    /// Input paired with `output`.
    pub fn input_of(&self, output: usize) -> usize {
        self.inv[output]
    }

    pub fn contains(&self, input: usize, output: usize) -> bool {
        self.fwd[input] == output
    }

    /// Pairs `(input, output)` in ascending input order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.fwd.iter().copied().enumerate()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.fwd
    }
}

/// All `n!` permutations of `0..n`, in lexicographic order of the forward map.
pub fn all_permutations(n: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut buf = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, buf: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Permutation>) {
        if buf.len() == n {
            out.push(Permutation::new(buf.clone()).unwrap());
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                buf.push(j);
                rec(n, buf, used, out);
                buf.pop();
                used[j] = false;
            }
        }
    }
    rec(n, &mut buf, &mut used, &mut out);
    out
}
