use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;

pub const DIM: usize = 4;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense 4x4 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMatrix4(pub [[Complex64; DIM]; DIM]);

impl CMatrix4 {
    pub fn zeros() -> Self {
        Self([[ZERO; DIM]; DIM])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            m.0[i][i] = ONE;
        }
        m
    }

    pub fn from_diagonal(d: [Complex64; DIM]) -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn from_real_diagonal(d: [f64; DIM]) -> Self {
        Self::from_diagonal(d.map(|x| Complex64::new(x, 0.0)))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                m.0[j][i] = self.0[i][j].conj();
            }
        }
        m
    }

    pub fn column(&self, j: usize) -> [Complex64; DIM] {
        std::array::from_fn(|i| self.0[i][j])
    }

    pub fn set_column(&mut self, j: usize, col: [Complex64; DIM]) {
        for (i, c) in col.into_iter().enumerate() {
            self.0[i][j] = c;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64; DIM]) -> [Complex64; DIM] {
        std::array::from_fn(|i| (0..DIM).map(|j| self.0[i][j] * x[j]).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..DIM {
            for j in 0..DIM {
                m.0[i][j] -= other.0[i][j];
            }
        }
        m
    }

    /// `||A^H A - I||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).sub(&Self::identity()).frobenius_norm()
    }
}

impl Default for CMatrix4 {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Index<(usize, usize)> for CMatrix4 {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix4 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.0[i][j]
    }
}

impl Mul for CMatrix4 {
    type Output = CMatrix4;

    fn mul(self, rhs: CMatrix4) -> CMatrix4 {
        let mut m = CMatrix4::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                m.0[i][j] = (0..DIM).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        m
    }
}

pub fn vec_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
