use crate::error::{Error, Result};

/// Row-compressed stochastic matrix over state ordinals.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTransitionMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

impl SparseTransitionMatrix {
    /// Builds from per-row `(column, probability)` lists. Duplicate columns
    /// are summed, zero entries dropped and each row sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, p) in row {
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += p;
                } else {
                    cols.push(c);
                    vals.push(p);
                }
            }
            // drop exact zeros left after merging
            let mut keep = start;
            for k in start..cols.len() {
                if vals[k] != 0.0 {
                    cols[keep] = cols[k];
                    vals[keep] = vals[k];
                    keep += 1;
                }
            }
            cols.truncate(keep);
            vals.truncate(keep);
            row_ptr.push(cols.len());
        }
        SparseTransitionMatrix { row_ptr, cols, vals }
    }

    /// Takes raw row-compressed arrays; rows must be sorted without duplicates.
    pub(crate) fn from_csr(row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(cols.len(), vals.len());
        debug_assert_eq!(*row_ptr.last().unwrap(), cols.len());
        SparseTransitionMatrix { row_ptr, cols, vals }
    }

    /// Builds from `(row, column, probability)` triplets.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(r, c, p) in triplets {
            rows[r].push((c, p));
        }
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_range(r);
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |r| self.row(r).map(move |(c, p)| (r, c, p)))
    }

    /// `P v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|r| self.row(r).map(|(c, p)| p * v[c]).sum())
            .collect()
    }

    /// `pi P` for a row vector `pi`.
    pub fn left_mul(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for r in 0..self.n() {
            for (c, p) in self.row(r) {
                out[c] += pi[r] * p;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut d = vec![vec![0.0; n]; n];
        for (r, c, p) in self.triplets() {
            d[r][c] = p;
        }
        d
    }

    /// Checks entries lie in `[0, 1]` and every row sums to one within
    /// `tolerance`; `label` names the offending row.
    pub fn check_stochastic(&self, tolerance: f64, label: impl Fn(usize) -> String) -> Result<()> {
        for r in 0..self.n() {
            let mut total = 0.0;
            for (_, p) in self.row(r) {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Construction {
                        state: label(r),
                        message: format!("entry {p} outside [0,1]"),
                    });
                }
                total += p;
            }
            if (total - 1.0).abs() > tolerance {
                return Err(Error::Construction {
                    state: label(r),
                    message: format!("row sums to {total}"),
                });
            }
        }
        Ok(())
    }

    /// Adjacency lists of the support graph.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        (0..self.n()).map(|r| self.row(r).map(|(c, _)| c).collect()).collect()
    }

    /// Matrix whose row `s` is row `s` of `choices[pick[s]]`.
    pub fn select_rows(choices: &[&SparseTransitionMatrix], pick: &[usize]) -> Self {
        let n = pick.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (s, &a) in pick.iter().enumerate() {
            let m = choices[a];
            let span = m.row_range(s);
            cols.extend_from_slice(&m.cols[span.clone()]);
            vals.extend_from_slice(&m.vals[span]);
            row_ptr.push(cols.len());
        }
        SparseTransitionMatrix { row_ptr, cols, vals }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_duplicates_and_drops_zeros() {
        let m = SparseTransitionMatrix::from_rows(vec![
            vec![(1, 0.25), (0, 0.5), (1, 0.25), (2, 0.0)],
            vec![(0, 1.0)],
            vec![(2, 1.0)],
        ]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(0, 2), 0.0);
        assert!(m.check_stochastic(1e-12, |r| r.to_string()).is_ok());
    }

    #[test]
    fn vector_products() {
        let m = SparseTransitionMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 0.5), (1, 1, 0.5)]);
        assert_eq!(m.mul_vec(&[1.0, 3.0]), vec![3.0, 2.0]);
        assert_eq!(m.left_mul(&[1.0, 0.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn reports_bad_row() {
        let m = SparseTransitionMatrix::from_triplets(2, &[(0, 1, 1.0), (1, 0, 0.7)]);
        let err = m.check_stochastic(1e-9, |r| format!("s{r}")).unwrap_err();
        assert!(err.to_string().contains("s1"));
    }
}
