//! Dense bivariate polynomials of total degree at most 7, used to build and
//! differentiate the reference basis exactly.

use std::ops::{Add, Mul, Sub};

pub const MAX_DEGREE: usize = 7;
const N: usize = MAX_DEGREE + 1;

/// `coeffs[i][j]` multiplies `x^i y^j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly2 {
    coeffs: [[f64; N]; N],
}

impl Default for Poly2 {
    fn default() -> Self {
        Self::zero()
    }
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2 { coeffs: [[0.0; N]; N] }
    }

    pub fn monomial(i: usize, j: usize) -> Self {
        assert!(i + j <= MAX_DEGREE, "monomial degree exceeds {MAX_DEGREE}");
        let mut p = Self::zero();
        p.coeffs[i][j] = 1.0;
        p
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.coeffs[0][0] = c;
        p
    }

    /// `a + b x + c y`
    pub fn linear(a: f64, b: f64, c: f64) -> Self {
        let mut p = Self::constant(a);
        p.coeffs[1][0] = b;
        p.coeffs[0][1] = c;
        p
    }

    pub fn degree(&self) -> Option<usize> {
        let mut deg = None;
        for i in 0..N {
            for j in 0..N - i {
                if self.coeffs[i][j] != 0.0 {
                    deg = Some(deg.map_or(i + j, |d: usize| d.max(i + j)));
                }
            }
        }
        deg
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.coeffs.iter_mut() {
            for c in row.iter_mut() {
                *c *= s;
            }
        }
        out
    }

    pub fn dx(&self) -> Self {
        let mut out = Self::zero();
        for i in 1..N {
            for j in 0..N - i {
                out.coeffs[i - 1][j] = self.coeffs[i][j] * i as f64;
            }
        }
        out
    }

    pub fn dy(&self) -> Self {
        let mut out = Self::zero();
        for i in 0..N {
            for j in 1..N - i {
                out.coeffs[i][j - 1] = self.coeffs[i][j] * j as f64;
            }
        }
        out
    }

    /// Mixed partial derivative `d^(a+b) / dx^a dy^b`.
    pub fn derivative(&self, a: usize, b: usize) -> Self {
        let mut out = *self;
        for _ in 0..a {
            out = out.dx();
        }
        for _ in 0..b {
            out = out.dy();
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..N).rev() {
            let mut row = 0.0;
            for j in (0..N - i).rev() {
                row = row * y + self.coeffs[i][j];
            }
            acc = acc * x + row;
        }
        acc
    }
}

impl Add for Poly2 {
    type Output = Poly2;
    fn add(mut self, rhs: Poly2) -> Poly2 {
        for i in 0..N {
            for j in 0..N - i {
                self.coeffs[i][j] += rhs.coeffs[i][j];
            }
        }
        self
    }
}

impl Sub for Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: Poly2) -> Poly2 {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: Poly2) -> Poly2 {
        let mut out = Poly2::zero();
        for i in 0..N {
            for j in 0..N - i {
                let a = self.coeffs[i][j];
                if a == 0.0 {
                    continue;
                }
                for k in 0..N {
                    for l in 0..N - k {
                        let b = rhs.coeffs[k][l];
                        if b == 0.0 {
                            continue;
                        }
                        assert!(i + j + k + l <= MAX_DEGREE, "product degree exceeds {MAX_DEGREE}");
                        out.coeffs[i + k][j + l] += a * b;
                    }
                }
            }
        }
        out
    }
}
