#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sivism::family::SemiImplicitFamily;

/// Reverse conditional of a linear family, `z | x ~ N(m(x), P^-1)` with
/// `P = I + A^T D^-1 A` and `m(x) = P^-1 A^T D^-1 (x - b)`.
pub struct Conjugate {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub inv_var: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

impl Conjugate {
    pub fn new(a: DMatrix<f64>, b: &[f64], sigma: &[f64]) -> Self {
        let inv_var = DVector::from_iterator(sigma.len(), sigma.iter().map(|s| 1.0 / (s * s)));
        let k = a.ncols();
        let precision = DMatrix::identity(k, k) + a.transpose() * DMatrix::from_diagonal(&inv_var) * &a;
        let cov = precision.clone().try_inverse().unwrap();
        Conjugate {
            b: DVector::from_column_slice(b),
            a,
            inv_var,
            cov,
            precision,
        }
    }

    pub fn family(&self) -> SemiImplicitFamily {
        let ls: Vec<f64> = self.inv_var.iter().map(|v| -0.5 * v.ln()).collect();
        SemiImplicitFamily::linear(&self.a, self.b.as_slice(), ls).unwrap()
    }

    pub fn mean(&self, x: &[f64]) -> DVector<f64> {
        let r = DVector::from_column_slice(x) - &self.b;
        &self.cov * self.a.transpose() * r.component_mul(&self.inv_var)
    }

    /// An exact draw given standard normal noise `e`.
    pub fn draw(&self, x: &[f64], e: &[f64]) -> Vec<f64> {
        let l = self.cov.clone().cholesky().unwrap().l();
        (self.mean(x) + l * DVector::from_column_slice(e)).as_slice().to_vec()
    }

    /// `L^T (z - m(x))` with `P = L L^T`; standard normal under the exact
    /// reverse conditional.
    pub fn whiten(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        let l = self.precision.clone().cholesky().unwrap().l();
        (l.transpose() * (DVector::from_column_slice(z) - self.mean(x))).as_slice().to_vec()
    }
}

/// Mean and standard error of a sample.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn column(rows: &[f64], d: usize, j: usize) -> Vec<f64> {
    rows.chunks_exact(d).map(|r| r[j]).collect()
}
