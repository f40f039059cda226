//! The (timestep x covered-constraint-token) arrangement of beams.

use std::ops::RangeInclusive;

use crate::hypothesis::Beam;

/// Rows of covered tokens that can still reach full coverage at step `t`.
///
/// Empty when `t` is past `max_len`.
pub fn row_bounds(t: usize, num_c: usize, max_len: usize) -> RangeInclusive<usize> {
    let lo = (num_c + t).saturating_sub(max_len);
    let hi = t.min(num_c);
    if t > max_len {
        // empty range
        #[allow(clippy::reversed_empty_ranges)]
        return 1..=0;
    }
    lo..=hi
}

/// `(max_len + 1) x (num_c + 1)` beams indexed `[t][c]`.
#[derive(Debug)]
pub struct Grid<S> {
    cells: Vec<Vec<Beam<S>>>,
    max_len: usize,
    num_c: usize,
    k: usize,
}

impl<S> Grid<S> {
    pub fn new(max_len: usize, num_c: usize, k: usize) -> Self {
        let cells = (0..=max_len)
            .map(|_| (0..=num_c).map(|_| Beam::new(k)).collect())
            .collect();
        Self {
            cells,
            max_len,
            num_c,
            k,
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn num_c(&self) -> usize {
        self.num_c
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cell(&self, t: usize, c: usize) -> &Beam<S> {
        &self.cells[t][c]
    }

    pub fn set_cell(&mut self, t: usize, c: usize, beam: Beam<S>) {
        self.cells[t][c] = beam;
    }

    pub fn row(&self, t: usize) -> &[Beam<S>] {
        &self.cells[t]
    }

    /// Whether cell `(t, c)` lies inside the searchable band.
    pub fn in_bounds(&self, t: usize, c: usize) -> bool {
        row_bounds(t, self.num_c, self.max_len).contains(&c)
    }

    /// Iterates `(t, c, beam)` over every cell.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Beam<S>)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(t, row)| row.iter().enumerate().map(move |(c, b)| (t, c, b)))
    }

    /// Checks the band invariant and that every hypothesis sits at its own
    /// `(t, c)`. Returns the first offending cell.
    pub fn check_invariants(&self) -> Result<(), (usize, usize)> {
        for (t, c, beam) in self.iter() {
            if beam.is_empty() {
                continue;
            }
            if !self.in_bounds(t, c) || beam.len() > self.k {
                return Err((t, c));
            }
            if beam.hyps().iter().any(|h| h.t() != t || h.c() != c) {
                return Err((t, c));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_match_loop_limits() {
        // numC = 2, maxLen = 4
        assert_eq!(row_bounds(0, 2, 4), 0..=0);
        assert_eq!(row_bounds(1, 2, 4), 0..=1);
        assert_eq!(row_bounds(2, 2, 4), 0..=2);
        assert_eq!(row_bounds(3, 2, 4), 1..=2);
        assert_eq!(row_bounds(4, 2, 4), 2..=2);
        assert!(row_bounds(5, 2, 4).is_empty());
    }

    #[test]
    fn no_constraints_single_row() {
        for t in 0..=5 {
            assert_eq!(row_bounds(t, 0, 5), 0..=0);
        }
    }
}
