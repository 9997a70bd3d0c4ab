//! Cone products, Nesterov-Todd scalings and step-length computations.
//!
//! A cone vector is laid out as `[nonneg | soc_0 | soc_1 | ... | psd_0 | ...]`.
//! Semidefinite blocks of order `n` occupy `n*n` entries in column-major full
//! storage; all operations keep them symmetric.

use nalgebra::{DMatrix, DVector};

use crate::ConicError;

/// Shape of a product cone.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cones {
    pub nonneg: usize,
    pub soc: Vec<usize>,
    pub psd: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Block {
    Nonneg { off: usize, len: usize },
    Soc { off: usize, len: usize },
    Psd { off: usize, n: usize },
}

impl Cones {
    pub fn new(nonneg: usize, soc: Vec<usize>, psd: Vec<usize>) -> Self {
        Self { nonneg, soc, psd }
    }

    /// Length of a vector in the cone.
    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>() + self.psd.iter().map(|n| n * n).sum::<usize>()
    }

    /// Barrier degree (number of "scalar" constraints).
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len() + self.psd.iter().sum::<usize>()
    }

    fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::with_capacity(1 + self.soc.len() + self.psd.len());
        let mut off = 0;
        if self.nonneg > 0 {
            out.push(Block::Nonneg { off, len: self.nonneg });
            off += self.nonneg;
        }
        for &len in &self.soc {
            out.push(Block::Soc { off, len });
            off += len;
        }
        for &n in &self.psd {
            out.push(Block::Psd { off, n });
            off += n * n;
        }
        out
    }

    /// Identity element `e`.
    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        for blk in self.blocks() {
            match blk {
                Block::Nonneg { off, len } => e.rows_mut(off, len).fill(1.0),
                Block::Soc { off, .. } => e[off] = 1.0,
                Block::Psd { off, n } => {
                    for i in 0..n {
                        e[off + i * n + i] = 1.0;
                    }
                }
            }
        }
        e
    }

    /// Jordan product `u ∘ v`.
    pub fn jordan_prod(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for blk in self.blocks() {
            match blk {
                Block::Nonneg { off, len } => {
                    for i in off..off + len {
                        out[i] = u[i] * v[i];
                    }
                }
                Block::Soc { off, len } => {
                    let u0 = u[off];
                    let v0 = v[off];
                    out[off] = u.rows(off, len).dot(&v.rows(off, len));
                    for i in off + 1..off + len {
                        out[i] = u0 * v[i] + v0 * u[i];
                    }
                }
                Block::Psd { off, n } => {
                    let um = mat(u, off, n);
                    let vm = mat(v, off, n);
                    let p = &um * &vm;
                    let sym = (&p + p.transpose()) * 0.5;
                    out.rows_mut(off, n * n).copy_from_slice(sym.as_slice());
                }
            }
        }
        out
    }

    /// Solves `lambda ∘ x = v` for `x`. PSD blocks of `lambda` must be diagonal,
    /// which holds for the scaled point produced by [`Scaling::nt`].
    pub fn jordan_div(&self, lambda: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for blk in self.blocks() {
            match blk {
                Block::Nonneg { off, len } => {
                    for i in off..off + len {
                        out[i] = v[i] / lambda[i];
                    }
                }
                Block::Soc { off, len } => {
                    let l0 = lambda[off];
                    let l1 = lambda.rows(off + 1, len - 1);
                    let v1 = v.rows(off + 1, len - 1);
                    let det = l0 * l0 - l1.norm_squared();
                    let x0 = (l0 * v[off] - l1.dot(&v1)) / det;
                    out[off] = x0;
                    for i in 1..len {
                        out[off + i] = (v[off + i] - x0 * lambda[off + i]) / l0;
                    }
                }
                Block::Psd { off, n } => {
                    for j in 0..n {
                        let lj = lambda[off + j * n + j];
                        for i in 0..n {
                            let li = lambda[off + i * n + i];
                            out[off + j * n + i] = 2.0 * v[off + j * n + i] / (li + lj);
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest `alpha` with `x + alpha*d` in the cone (`f64::INFINITY` if
    /// unbounded). `x` must be interior.
    pub fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>) -> Result<f64, ConicError> {
        let mut alpha = f64::INFINITY;
        for blk in self.blocks() {
            let a = match blk {
                Block::Nonneg { off, len } => {
                    let mut a = f64::INFINITY;
                    for i in off..off + len {
                        if d[i] < 0.0 {
                            a = a.min(-x[i] / d[i]);
                        }
                    }
                    a
                }
                Block::Soc { off, len } => soc_step(&x.rows(off, len).into_owned(), &d.rows(off, len).into_owned()),
                Block::Psd { off, n } => {
                    let xm = mat(x, off, n);
                    let dm = mat(d, off, n);
                    let chol = xm
                        .cholesky()
                        .ok_or_else(|| ConicError::Numerical("iterate left the PSD cone".into()))?;
                    let l = chol.l();
                    let t = l
                        .solve_lower_triangular(&dm)
                        .and_then(|t| l.solve_lower_triangular(&t.transpose()))
                        .ok_or_else(|| ConicError::Numerical("singular PSD factor".into()))?;
                    let t = (&t + t.transpose()) * 0.5;
                    let lmin = t.symmetric_eigenvalues().min();
                    if lmin < 0.0 {
                        -1.0 / lmin
                    } else {
                        f64::INFINITY
                    }
                }
            };
            alpha = alpha.min(a);
        }
        Ok(alpha)
    }

    /// Smallest `t` such that `x + t*e` lies in the closed cone.
    pub fn interior_margin(&self, x: &DVector<f64>) -> f64 {
        let mut t = f64::NEG_INFINITY;
        for blk in self.blocks() {
            let tb = match blk {
                Block::Nonneg { off, len } => -x.rows(off, len).min(),
                Block::Soc { off, len } => x.rows(off + 1, len - 1).norm() - x[off],
                Block::Psd { off, n } => {
                    let xm = mat(x, off, n);
                    -((&xm + xm.transpose()) * 0.5).symmetric_eigenvalues().min()
                }
            };
            t = t.max(tb);
        }
        t
    }
}

fn soc_step(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let a = d[0] * d[0] - d.rows(1, d.len() - 1).norm_squared();
    let b = x[0] * d[0] - x.rows(1, x.len() - 1).dot(&d.rows(1, d.len() - 1));
    let c = x[0] * x[0] - x.rows(1, x.len() - 1).norm_squared();
    let disc = b * b - a * c;
    let mut alpha = f64::INFINITY;
    if disc >= 0.0 {
        let denom = -b + disc.sqrt();
        if denom > 0.0 {
            alpha = c / denom;
        }
    }
    if d[0] < 0.0 {
        alpha = alpha.min(-x[0] / d[0]);
    }
    alpha
}

pub(crate) fn mat(v: &DVector<f64>, off: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, &v.as_slice()[off..off + n * n])
}

#[derive(Debug, Clone)]
enum BlockScale {
    Nonneg { off: usize, d: DVector<f64> },
    Soc { off: usize, eta: f64, w: DVector<f64> },
    Psd { off: usize, r: DMatrix<f64>, rinv: DMatrix<f64> },
}

/// Nesterov-Todd scaling `W` with `W z = W⁻ᵀ s = lambda`.
#[derive(Debug, Clone)]
pub struct Scaling {
    dim: usize,
    blocks: Vec<BlockScale>,
    lambda: DVector<f64>,
}

impl Scaling {
    /// `W = I`, used for the initial point.
    pub fn identity(cones: &Cones) -> Self {
        let blocks = cones
            .blocks()
            .into_iter()
            .map(|b| match b {
                Block::Nonneg { off, len } => BlockScale::Nonneg { off, d: DVector::from_element(len, 1.0) },
                Block::Soc { off, len } => {
                    let mut w = DVector::zeros(len);
                    w[0] = 1.0;
                    // 2wwᵀ - J = I for w = e_0
                    BlockScale::Soc { off, eta: 1.0, w }
                }
                Block::Psd { off, n } => BlockScale::Psd { off, r: DMatrix::identity(n, n), rinv: DMatrix::identity(n, n) },
            })
            .collect();
        Self { dim: cones.dim(), blocks, lambda: cones.identity() }
    }

    /// Nesterov-Todd scaling at interior points `s`, `z`.
    pub fn nt(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Result<Self, ConicError> {
        let mut lambda = DVector::zeros(cones.dim());
        let mut blocks = Vec::new();
        for b in cones.blocks() {
            match b {
                Block::Nonneg { off, len } => {
                    let mut d = DVector::zeros(len);
                    for i in 0..len {
                        let (si, zi) = (s[off + i], z[off + i]);
                        if si <= 0.0 || zi <= 0.0 {
                            return Err(ConicError::Numerical("nonnegative iterate on the boundary".into()));
                        }
                        d[i] = (si / zi).sqrt();
                        lambda[off + i] = (si * zi).sqrt();
                    }
                    blocks.push(BlockScale::Nonneg { off, d });
                }
                Block::Soc { off, len } => {
                    let sb = s.rows(off, len).into_owned();
                    let zb = z.rows(off, len).into_owned();
                    let sjs = sb[0] * sb[0] - sb.rows(1, len - 1).norm_squared();
                    let zjz = zb[0] * zb[0] - zb.rows(1, len - 1).norm_squared();
                    if sjs <= 0.0 || zjz <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                        return Err(ConicError::Numerical("second-order cone iterate on the boundary".into()));
                    }
                    let sn = &sb / sjs.sqrt();
                    let zn = &zb / zjz.sqrt();
                    let gamma = ((1.0 + sn.dot(&zn)) / 2.0).sqrt();
                    let mut w = sn.clone();
                    w[0] += zn[0];
                    for i in 1..len {
                        w[i] -= zn[i];
                    }
                    w /= 2.0 * gamma;
                    // W = eta (2 v vᵀ - J) with v = (w + e) / sqrt(2 (w_0 + 1))
                    let f = (2.0 * (w[0] + 1.0)).sqrt();
                    w[0] += 1.0;
                    w /= f;
                    let eta = (sjs / zjz).powf(0.25);
                    let bs = BlockScale::Soc { off, eta, w };
                    let lz = soc_apply_w(&bs, &zb);
                    lambda.rows_mut(off, len).copy_from(&lz);
                    blocks.push(bs);
                }
                Block::Psd { off, n } => {
                    let sm = mat(s, off, n);
                    let zm = mat(z, off, n);
                    let l1 = sm
                        .cholesky()
                        .ok_or_else(|| ConicError::Numerical("PSD iterate s not positive definite".into()))?
                        .l();
                    let l2 = zm
                        .cholesky()
                        .ok_or_else(|| ConicError::Numerical("PSD iterate z not positive definite".into()))?
                        .l();
                    let svd = (l2.transpose() * &l1).svd(true, true);
                    let v = svd.v_t.as_ref().ok_or_else(|| ConicError::Numerical("svd failed".into()))?.transpose();
                    let u = svd.u.as_ref().ok_or_else(|| ConicError::Numerical("svd failed".into()))?;
                    let sv = &svd.singular_values;
                    let mut r = &l1 * &v;
                    let mut rinv_t = l2 * u; // R⁻ᵀ = L2 U diag(sv)^{-1/2}
                    for j in 0..n {
                        let f = sv[j].sqrt();
                        if f <= 0.0 {
                            return Err(ConicError::Numerical("degenerate PSD scaling".into()));
                        }
                        r.column_mut(j).scale_mut(1.0 / f);
                        rinv_t.column_mut(j).scale_mut(1.0 / f);
                        lambda[off + j * n + j] = sv[j];
                    }
                    blocks.push(BlockScale::Psd { off, r, rinv: rinv_t.transpose() });
                }
            }
        }
        Ok(Self { dim: cones.dim(), blocks, lambda })
    }

    /// Scaled point `lambda = W z`.
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }

    fn apply(&self, v: &DVector<f64>, op: Op) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            match b {
                BlockScale::Nonneg { off, d } => {
                    for i in 0..d.len() {
                        let f = match op {
                            Op::W | Op::Wt => d[i],
                            Op::Winv | Op::Winvt => 1.0 / d[i],
                            Op::WtW => d[i] * d[i],
                            Op::WtWinv => 1.0 / (d[i] * d[i]),
                        };
                        out[off + i] = f * v[off + i];
                    }
                }
                BlockScale::Soc { off, w, .. } => {
                    let vb = v.rows(*off, w.len()).into_owned();
                    let r = match op {
                        Op::W | Op::Wt => soc_apply_w(b, &vb),
                        Op::Winv | Op::Winvt => soc_apply_winv(b, &vb),
                        Op::WtW => soc_apply_w(b, &soc_apply_w(b, &vb)),
                        Op::WtWinv => soc_apply_winv(b, &soc_apply_winv(b, &vb)),
                    };
                    out.rows_mut(*off, w.len()).copy_from(&r);
                }
                BlockScale::Psd { off, r, rinv } => {
                    let n = r.nrows();
                    let m = mat(v, *off, n);
                    let res = match op {
                        Op::W => r.transpose() * m * r,
                        Op::Wt => r * m * r.transpose(),
                        Op::Winv => rinv.transpose() * m * rinv,
                        Op::Winvt => rinv * m * rinv.transpose(),
                        Op::WtW => {
                            let t = r * (r.transpose() * m * r) * r.transpose();
                            (&t + t.transpose()) * 0.5
                        }
                        Op::WtWinv => {
                            let t = rinv.transpose() * (rinv * m * rinv.transpose()) * rinv;
                            (&t + t.transpose()) * 0.5
                        }
                    };
                    out.rows_mut(*off, n * n).copy_from_slice(res.as_slice());
                }
            }
        }
        out
    }

    pub fn apply_w(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, Op::W)
    }
    pub fn apply_wt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, Op::Wt)
    }
    pub fn apply_winv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, Op::Winv)
    }
    pub fn apply_winvt(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, Op::Winvt)
    }
    /// `WᵀW v`.
    pub fn apply_wtw(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, Op::WtW)
    }
    /// `(WᵀW)⁻¹ v`.
    pub fn apply_wtw_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, Op::WtWinv)
    }

    /// Per-PSD-block matrix `V = R Rᵀ` so that `WᵀW(U) = V U V`.
    pub fn psd_quad_factors(&self) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                BlockScale::Psd { r, .. } => Some(r * r.transpose()),
                _ => None,
            })
            .collect()
    }

    /// Diagonal of `WᵀW` on the nonnegative block.
    pub fn nonneg_quad(&self) -> Option<DVector<f64>> {
        self.blocks.iter().find_map(|b| match b {
            BlockScale::Nonneg { d, .. } => Some(d.map(|x| x * x)),
            _ => None,
        })
    }
}

#[derive(Clone, Copy)]
enum Op {
    W,
    Wt,
    Winv,
    Winvt,
    WtW,
    WtWinv,
}

fn soc_apply_w(b: &BlockScale, v: &DVector<f64>) -> DVector<f64> {
    let BlockScale::Soc { eta, w, .. } = b else { unreachable!() };
    // eta * (2 w wᵀ v - J v)
    let wv = w.dot(v);
    let mut out = w * (2.0 * wv);
    out[0] -= v[0];
    for i in 1..v.len() {
        out[i] += v[i];
    }
    out * *eta
}

fn soc_apply_winv(b: &BlockScale, v: &DVector<f64>) -> DVector<f64> {
    let BlockScale::Soc { eta, w, .. } = b else { unreachable!() };
    // (2 J w wᵀ J v - J v) / eta
    let mut jv = v.clone();
    for i in 1..v.len() {
        jv[i] = -jv[i];
    }
    let mut jw = w.clone();
    for i in 1..w.len() {
        jw[i] = -jw[i];
    }
    let out = jw * (2.0 * w.dot(&jv)) - jv;
    out / *eta
}
