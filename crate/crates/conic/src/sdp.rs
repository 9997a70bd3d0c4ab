//! Standard-form semidefinite programs
//!
//! ```text
//! minimize  Σ ⟨C_b, X_b⟩ + cᵀu
//! s.t.      Σ ⟨A_ib, X_b⟩ + a_iᵀu = b_i,   X_b ⪰ 0,  u ≥ 0
//! ```
//!
//! solved through the generic interior-point engine with `G = -I`, `h = 0`.
//! The Newton system reduces to the Schur complement `A WᵀW Aᵀ`, assembled
//! block by block from sparse, low-rank or dense coefficient matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::cone::{mat, Cones, Scaling};
use crate::ipm::{self, ConeProgram, IpmSettings, Status};
use crate::ConicError;

/// Coefficient matrix of one PSD block inside a linear functional.
#[derive(Debug, Clone)]
pub enum Coef {
    /// Full-storage entries `(i, j, a_ij)`; must describe a symmetric matrix.
    Sparse(Vec<(usize, usize, f64)>),
    /// `Σ w_r u_r u_rᵀ`.
    LowRank(Vec<(f64, DVector<f64>)>),
    Dense(DMatrix<f64>),
}

impl Coef {
    fn inner(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            Coef::Sparse(e) => e.iter().map(|&(i, j, v)| v * x[(i, j)]).sum(),
            Coef::LowRank(t) => t.iter().map(|(w, u)| w * u.dot(&(x * u))).sum(),
            Coef::Dense(a) => a.dot(x),
        }
    }

    fn add_to(&self, scale: f64, out: &mut DMatrix<f64>) {
        match self {
            Coef::Sparse(e) => {
                for &(i, j, v) in e {
                    out[(i, j)] += scale * v;
                }
            }
            Coef::LowRank(t) => {
                for (w, u) in t {
                    out.ger(scale * w, u, u, 1.0);
                }
            }
            Coef::Dense(a) => *out += a * scale,
        }
    }

    /// `V A V` for symmetric `V`.
    fn congruence(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let n = v.nrows();
        match self {
            Coef::Sparse(e) => {
                let mut t = DMatrix::zeros(n, n);
                for &(i, j, a) in e {
                    t.ger(a, &v.column(i), &v.column(j), 1.0);
                }
                t
            }
            Coef::LowRank(terms) => {
                let mut t = DMatrix::zeros(n, n);
                for (w, u) in terms {
                    let vu = v * u;
                    t.ger(*w, &vu, &vu, 1.0);
                }
                t
            }
            Coef::Dense(a) => v * a * v,
        }
    }
}

/// One linear functional over the SDP variables.
#[derive(Debug, Clone, Default)]
pub struct Row {
    nonneg: Vec<(usize, f64)>,
    psd: Vec<(usize, Coef)>,
}

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `v * u_i`.
    pub fn nonneg(mut self, i: usize, v: f64) -> Self {
        self.nonneg.push((i, v));
        self
    }

    /// Adds `v * X_b[i][j]` (for symmetric `X_b`).
    pub fn entry(mut self, block: usize, i: usize, j: usize, v: f64) -> Self {
        let entries = if i == j { vec![(i, i, v)] } else { vec![(i, j, 0.5 * v), (j, i, 0.5 * v)] };
        match self.psd.iter_mut().find(|(b, c)| *b == block && matches!(c, Coef::Sparse(_))) {
            Some((_, Coef::Sparse(e))) => e.extend(entries),
            _ => self.psd.push((block, Coef::Sparse(entries))),
        }
        self
    }

    /// Adds `⟨coef, X_b⟩`.
    pub fn coef(mut self, block: usize, coef: Coef) -> Self {
        self.psd.push((block, coef));
        self
    }
}

/// A standard-form SDP with an optional nonnegative block.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    nonneg: usize,
    blocks: Vec<usize>,
    cost: Row,
    rows: Vec<Row>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: Status,
    pub nonneg: DVector<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    /// Equality multipliers.
    pub y: DVector<f64>,
    /// Dual slack blocks `C - Σ y_i A_i`.
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub dual_nonneg: DVector<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub gap: f64,
    pub pres: f64,
    pub dres: f64,
    pub iterations: usize,
}

impl SdpProblem {
    pub fn new(nonneg: usize, blocks: Vec<usize>) -> Self {
        Self { nonneg, blocks, cost: Row::new(), rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn set_cost(&mut self, cost: Row) {
        self.cost = cost;
    }

    pub fn add_constraint(&mut self, row: Row, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = self.nonneg;
        self.blocks
            .iter()
            .map(|n| {
                let o = off;
                off += n * n;
                o
            })
            .collect()
    }

    fn check(&self) -> Result<(), ConicError> {
        for row in self.rows.iter().chain(std::iter::once(&self.cost)) {
            for &(i, _) in &row.nonneg {
                if i >= self.nonneg {
                    return Err(ConicError::Dimension(format!("nonnegative index {i} out of range")));
                }
            }
            for (b, c) in &row.psd {
                let n = *self.blocks.get(*b).ok_or_else(|| ConicError::Dimension(format!("block {b} out of range")))?;
                let ok = match c {
                    Coef::Sparse(e) => e.iter().all(|&(i, j, _)| i < n && j < n),
                    Coef::LowRank(t) => t.iter().all(|(_, u)| u.len() == n),
                    Coef::Dense(a) => a.nrows() == n && a.ncols() == n,
                };
                if !ok {
                    return Err(ConicError::Dimension(format!("coefficient does not fit block {b} of order {n}")));
                }
            }
        }
        Ok(())
    }

    fn row_to_vec(&self, row: &Row, offs: &[usize], dim: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        for &(i, a) in &row.nonneg {
            v[i] += a;
        }
        for (b, c) in &row.psd {
            let n = self.blocks[*b];
            let mut m = DMatrix::zeros(n, n);
            c.add_to(1.0, &mut m);
            let mut seg = v.rows_mut(offs[*b], n * n);
            seg += DVector::from_column_slice(m.as_slice());
        }
        v
    }
}

struct SdpProgram<'a> {
    prob: &'a SdpProblem,
    cones: Cones,
    offs: Vec<usize>,
    c: DVector<f64>,
    h: DVector<f64>,
    b: DVector<f64>,
    /// Per block: (row index, coefficient).
    touching: Vec<Vec<(usize, &'a Coef)>>,
    nonneg_rows: DMatrix<f64>,
    schur: Option<Cholesky<f64, Dyn>>,
}

impl<'a> SdpProgram<'a> {
    fn new(prob: &'a SdpProblem) -> Self {
        let cones = Cones::new(prob.nonneg, vec![], prob.blocks.clone());
        let dim = cones.dim();
        let offs = prob.offsets();
        let c = prob.row_to_vec(&prob.cost, &offs, dim);
        let mut touching = vec![Vec::new(); prob.blocks.len()];
        let mut nonneg_rows = DMatrix::zeros(prob.rows.len(), prob.nonneg);
        for (i, row) in prob.rows.iter().enumerate() {
            for (b, coef) in &row.psd {
                touching[*b].push((i, coef));
            }
            for &(k, a) in &row.nonneg {
                nonneg_rows[(i, k)] += a;
            }
        }
        Self {
            prob,
            cones,
            offs,
            c,
            h: DVector::zeros(dim),
            b: DVector::from_column_slice(&prob.rhs),
            touching,
            nonneg_rows,
            schur: None,
        }
    }
}

impl ConeProgram for SdpProgram<'_> {
    fn cones(&self) -> &Cones {
        &self.cones
    }
    fn n(&self) -> usize {
        self.cones.dim()
    }
    fn p(&self) -> usize {
        self.prob.rows.len()
    }
    fn c(&self) -> &DVector<f64> {
        &self.c
    }
    fn h(&self) -> &DVector<f64> {
        &self.h
    }
    fn b(&self) -> &DVector<f64> {
        &self.b
    }
    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        -x
    }
    fn g_tmul(&self, z: &DVector<f64>) -> DVector<f64> {
        -z
    }

    fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.nonneg_rows * x.rows(0, self.prob.nonneg);
        let mats: Vec<DMatrix<f64>> = self.prob.blocks.iter().zip(&self.offs).map(|(&n, &o)| mat(x, o, n)).collect();
        for (b, list) in self.touching.iter().enumerate() {
            for (i, coef) in list {
                out[*i] += coef.inner(&mats[b]);
            }
        }
        out
    }

    fn a_tmul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cones.dim());
        out.rows_mut(0, self.prob.nonneg).copy_from(&self.nonneg_rows.tr_mul(y));
        for (b, list) in self.touching.iter().enumerate() {
            let n = self.prob.blocks[b];
            let mut m = DMatrix::zeros(n, n);
            for (i, coef) in list {
                coef.add_to(y[*i], &mut m);
            }
            out.rows_mut(self.offs[b], n * n).copy_from_slice(m.as_slice());
        }
        out
    }

    fn factor(&mut self, w: &Scaling) -> Result<(), ConicError> {
        let p = self.p();
        let mut s = DMatrix::zeros(p, p);
        if self.prob.nonneg > 0 {
            let d2 = w.nonneg_quad().expect("nonnegative block present");
            let mut scaled = self.nonneg_rows.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= d2[k];
            }
            s += &scaled * self.nonneg_rows.transpose();
        }
        let quads = w.psd_quad_factors();
        for (b, list) in self.touching.iter().enumerate() {
            let v = &quads[b];
            for (jpos, (j, cj)) in list.iter().enumerate() {
                let t = cj.congruence(v);
                for (i, ci) in &list[..=jpos] {
                    let val = ci.inner(&t);
                    s[(*i, *j)] += val;
                    if i != j {
                        s[(*j, *i)] += val;
                    }
                }
            }
        }
        let scale = s.diagonal().amax().max(1e-300);
        let mut reg = 0.0;
        for _ in 0..6 {
            let mut t = s.clone();
            for i in 0..p {
                t[(i, i)] += reg;
            }
            if let Some(ch) = t.cholesky() {
                self.schur = Some(ch);
                return Ok(());
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        }
        Err(ConicError::Singular("Schur complement is not positive definite; constraints may be dependent".into()))
    }

    fn kkt_solve(
        &self,
        w: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let sch = self.schur.as_ref().expect("factor must precede kkt_solve");
        let r = bx - w.apply_wtw_inv(bz);
        let wr = w.apply_wtw(&r);
        let y = sch.solve(&(self.a_mul(&wr) - by));
        let x = w.apply_wtw(&(r - self.a_tmul(&y)));
        let z = -w.apply_wtw_inv(&(&x + bz));
        (x, y, z)
    }
}

/// Solves a standard-form SDP.
pub fn solve_sdp(prob: &SdpProblem, settings: &IpmSettings) -> Result<SdpSolution, ConicError> {
    prob.check()?;
    let mut prog = SdpProgram::new(prob);
    let sol = ipm::solve(&mut prog, settings)?;
    let offs = prog.offs.clone();
    let split = |v: &DVector<f64>| -> Vec<DMatrix<f64>> {
        prob.blocks
            .iter()
            .zip(&offs)
            .map(|(&n, &o)| {
                let m = mat(v, o, n);
                (&m + m.transpose()) * 0.5
            })
            .collect()
    };
    Ok(SdpSolution {
        status: sol.status,
        nonneg: sol.x.rows(0, prob.nonneg).into_owned(),
        blocks: split(&sol.x),
        y: -&sol.y,
        dual_blocks: split(&sol.z),
        dual_nonneg: sol.z.rows(0, prob.nonneg).into_owned(),
        primal_obj: sol.primal_obj,
        dual_obj: sol.dual_obj,
        gap: sol.gap,
        pres: sol.pres,
        dres: sol.dres,
        iterations: sol.iterations,
    })
}
