use crate::error::{Error, Result};
use crate::scalar::{fro_sq, CMatrix, Scalar};

/// Fully digital precoder `B` (N_t x K), one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoder<T: Scalar> {
    b: CMatrix<T>,
}

impl<T: Scalar> DigitalPrecoder<T> {
    pub fn new(b: CMatrix<T>) -> Result<Self> {
        if b.ncols() == 0 || b.nrows() == 0 {
            return Err(Error::Dimension("precoder must be non-empty".into()));
        }
        if b.ncols() > b.nrows() {
            return Err(Error::Dimension(format!(
                "precoder has K = {} columns but only N_t = {} rows",
                b.ncols(),
                b.nrows()
            )));
        }
        Ok(Self { b })
    }

    pub fn zeros(nt: usize, k: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(nt, k))
    }

    pub fn nt(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.b
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.b
    }

    /// Per-antenna input power `p_n = sum_k |b_{n,k}|^2`, i.e. `diag(B B^H)`.
    pub fn antenna_powers(&self) -> Vec<T> {
        self.b
            .row_iter()
            .map(|row| row.iter().fold(T::zero(), |a, z| a + z.norm_sqr()))
            .collect()
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            b: self.b.map(|z| z * alpha),
        }
    }

    pub fn fro_norm_sq(&self) -> T {
        fro_sq(&self.b)
    }
}
