//! Row-compressed adjacency for the propagation step.

use ndarray::Array2;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdj {
    n: usize,
    /// `rows[i]` holds `(j, value)` pairs sorted by `j`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseAdj {
    pub fn new(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n, "row count must equal n");
        for r in &mut rows {
            r.sort_by_key(|&(j, _)| j);
        }
        SparseAdj { n, rows }
    }

    pub fn from_dense(a: &Array2<f64>) -> Self {
        let rows = a
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        SparseAdj::new(a.nrows(), rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                a[[i, j]] = v;
            }
        }
        a
    }

    /// `self * b`.
    pub fn mul(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, b.ncols()));
        for (i, r) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, v) in r {
                o.scaled_add(v, &b.row(j));
            }
        }
        out
    }

    /// `self^T * b`.
    pub fn mul_transpose(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, b.ncols()));
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                let mut o = out.row_mut(j);
                o.scaled_add(v, &b.row(i));
            }
        }
        out
    }
}
