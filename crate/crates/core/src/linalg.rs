//! Complex matrix helpers shared across modules.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

/// Matrix of i.i.d. CN(0, var) entries: independent real and imaginary
/// parts of variance var/2.
pub fn complex_gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    let sd = (var / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(sd * re, sd * im)
    })
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| C64::new(v, 0.0))
}

/// `[Re vec(X); Im vec(X)]` with column-major `vec`.
pub fn stack(x: &CMat) -> DVector<f64> {
    let n = x.len();
    let mut z = DVector::zeros(2 * n);
    for (i, v) in x.iter().enumerate() {
        z[i] = v.re;
        z[n + i] = v.im;
    }
    z
}

/// Inverse of [`stack`].
pub fn unstack(z: &DVector<f64>, rows: usize, cols: usize) -> CMat {
    let n = rows * cols;
    CMat::from_fn(rows, cols, |i, j| C64::new(z[i + rows * j], z[n + i + rows * j]))
}

/// `tr((rho I + M)⁻¹)` for Hermitian PSD `M`, via Cholesky.
pub fn trace_inverse_shifted(m: &CMat, rho: f64) -> Option<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] += C64::new(rho, 0.0);
    }
    let l = a.cholesky()?.l();
    let linv = l.solve_lower_triangular(&CMat::identity(n, n))?;
    Some(linv.iter().map(|v| v.norm_sqr()).sum())
}

/// `Re tr(Aᴴ B)`.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// `X M` for complex `X` and real `M`.
pub fn mul_cr(x: &CMat, m: &RMat) -> CMat {
    let re = x.map(|v| v.re) * m;
    let im = x.map(|v| v.im) * m;
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}
