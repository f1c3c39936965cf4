//! Principal axes via eigendecomposition of the sample covariance.
//!
//! Components are ordered by decreasing eigenvalue. Each component's sign is
//! fixed so that its largest-magnitude entry is positive (first such entry on
//! ties), which makes projections reproducible.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxes {
    pub mean: Vec<f64>,
    /// One unit-length component per row, all `d` of them.
    pub components: Matrix,
    pub eigenvalues: Vec<f64>,
}

impl PrincipalAxes {
    pub fn fit(data: &Matrix) -> Result<Self> {
        let (n, d) = (data.rows(), data.cols());
        if n < 2 || d == 0 {
            return Err(Error::Degenerate(format!("cannot fit PCA on {n}×{d} data")));
        }
        let mut mean = vec![0.0; d];
        for row in data.iter_rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut cov = DMatrix::<f64>::zeros(d, d);
        let mut centered = vec![0.0; d];
        for row in data.iter_rows() {
            for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = x - m;
            }
            for i in 0..d {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[(i, j)] += ci * centered[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[(i, j)] / (n as f64 - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components = Matrix::zeros(d, d);
        let mut eigenvalues = Vec::with_capacity(d);
        for (r, &c) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(c);
            let row = components.row_mut(r);
            for (dst, src) in row.iter_mut().zip(col.iter()) {
                *dst = *src;
            }
            fix_sign(row);
            eigenvalues.push(eig.eigenvalues[c].max(0.0));
        }
        Ok(PrincipalAxes {
            mean,
            components,
            eigenvalues,
        })
    }

    /// Coordinates of `x` on components `[from, to)`.
    pub fn project(&self, x: &[f64], from: usize, to: usize, out: &mut Vec<f64>) {
        out.clear();
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for c in from..to {
            out.push(dot(self.components.row(c), &centered));
        }
    }
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_variance() {
        let data = Matrix::from_rows(&[[0.0, 0.0], [4.0, 1.0], [-4.0, -1.0], [0.0, 2.0], [0.0, -2.0]]);
        let axes = PrincipalAxes::fit(&data).unwrap();
        assert!(axes.eigenvalues[0] >= axes.eigenvalues[1]);
        for r in 0..2 {
            let row = axes.components.row(r);
            assert!((dot(row, row) - 1.0).abs() < 1e-12);
        }
        // sign convention
        let c0 = axes.components.row(0);
        let big = c0.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        assert!(big > 0.0);
    }

    #[test]
    fn too_few_rows() {
        assert!(PrincipalAxes::fit(&Matrix::from_rows(&[[1.0, 2.0]])).is_err());
    }
}
