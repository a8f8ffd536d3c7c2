//! Fixed-size dense complex matrices for the 2- and 4-level problems.
//!
//! Hamiltonians are stored as H/ħ, so entries carry units of rad/s.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

pub type State<const N: usize> = [Complex64; N];

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexMatrix<const N: usize>(pub [[Complex64; N]; N]);

pub type Matrix2 = ComplexMatrix<2>;
pub type Matrix4 = ComplexMatrix<4>;

impl<const N: usize> Default for ComplexMatrix<N> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<const N: usize> ComplexMatrix<N> {
    pub fn zeros() -> Self {
        ComplexMatrix([[ZERO; N]; N])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real_diagonal(d: [f64; N]) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            m.0[i][i] = Complex64::new(d[i], 0.0);
        }
        m
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &State<N>, b: &State<N>) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = a[i] * b[j].conj();
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        N
    }

    #[inline]
    pub fn mul_vec(&self, v: &State<N>) -> State<N> {
        let mut out = [ZERO; N];
        for (i, row) in self.0.iter().enumerate() {
            let mut acc = ZERO;
            for j in 0..N {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for j in 0..N {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..N).map(|i| self.0[i][i]).sum()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hermitian part (H + H†)/2.
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(Complex64::new(0.5, 0.0))
    }

    /// Anti-Hermitian part (H − H†)/2.
    pub fn anti_hermitian_part(&self) -> Self {
        (*self - self.adjoint()).scale(Complex64::new(0.5, 0.0))
    }

    /// True when ‖H − H†‖_max ≤ rel · max(‖H‖_max, tiny).
    pub fn is_hermitian(&self, rel: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (*self - self.adjoint()).max_abs() <= rel * scale
    }

    pub fn commutator(&self, other: &Self) -> Self {
        *self * *other - *other * *self
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        *self * *other + *other * *self
    }

    /// Maximum absolute column sum, with |z| bounded by |re| + |im|.
    pub fn one_norm_bound(&self) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..N {
            let mut col = 0.0;
            for i in 0..N {
                col += self.0[i][j].re.abs() + self.0[i][j].im.abs();
            }
            best = best.max(col);
        }
        best
    }

    /// Matrix exponential by scaling and squaring of a degree-18 Taylor
    /// polynomial; the scaled matrix has 1-norm at most 1, so the
    /// truncation error is below 1/19! relative.
    pub fn expm(&self) -> Self {
        let norm = self.one_norm_bound();
        if !norm.is_finite() {
            return self.scale(Complex64::new(f64::NAN, 0.0));
        }
        let squarings = if norm > 1.0 { norm.log2().ceil() as i32 } else { 0 };
        let a = self.scale(Complex64::new(0.5f64.powi(squarings), 0.0));
        let id = Self::identity();
        let mut acc = id;
        for k in (1..=18).rev() {
            acc = id + (a * acc).scale(Complex64::new(1.0 / k as f64, 0.0));
        }
        for _ in 0..squarings {
            acc = acc * acc;
        }
        acc
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let (vals, _) = self.hermitian_eigen();
        vals
    }

    /// Eigen-decomposition of the Hermitian part: ascending eigenvalues and
    /// the matching normalized eigenvectors.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, Vec<State<N>>) {
        let h = self.hermitian_part();
        let m = nalgebra::DMatrix::from_fn(N, N, |i, j| h.0[i][j]);
        let eig = nalgebra::SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..N).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vecs = order
            .iter()
            .map(|&k| {
                let mut v = [ZERO; N];
                for (i, x) in v.iter_mut().enumerate() {
                    *x = eig.eigenvectors[(i, k)];
                }
                v
            })
            .collect();
        (vals, vecs)
    }
}

impl<const N: usize> Index<(usize, usize)> for ComplexMatrix<N> {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.0[i][j]
    }
}

impl<const N: usize> IndexMut<(usize, usize)> for ComplexMatrix<N> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.0[i][j]
    }
}

impl<const N: usize> Add for ComplexMatrix<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] += rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for ComplexMatrix<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for i in 0..N {
            for j in 0..N {
                self.0[i][j] -= rhs.0[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Mul for ComplexMatrix<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zeros();
        for i in 0..N {
            for k in 0..N {
                let a = self.0[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..N {
                    m.0[i][j] += a * rhs.0[k][j];
                }
            }
        }
        m
    }
}

pub fn norm_sqr<const N: usize>(v: &State<N>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn basis<const N: usize>(k: usize) -> State<N> {
    let mut v = [ZERO; N];
    v[k] = Complex64::new(1.0, 0.0);
    v
}
