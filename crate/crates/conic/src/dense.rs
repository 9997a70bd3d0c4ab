//! Cone programs with dense `G` and `A`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::cone::{Cones, Scaling};
use crate::ipm::ConeProgram;
use crate::ConicError;

pub struct DenseProgram {
    cones: Cones,
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    hchol: Option<Cholesky<f64, Dyn>>,
    schur: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
}

impl DenseProgram {
    pub fn new(
        c: DVector<f64>,
        g: DMatrix<f64>,
        h: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        cones: Cones,
    ) -> Result<Self, ConicError> {
        let n = c.len();
        if g.ncols() != n || a.ncols() != n {
            return Err(ConicError::Dimension(format!(
                "G has {} columns and A has {}, expected {n}",
                g.ncols(),
                a.ncols()
            )));
        }
        if g.nrows() != cones.dim() || h.len() != cones.dim() {
            return Err(ConicError::Dimension(format!(
                "G has {} rows and h {} entries, cone dimension is {}",
                g.nrows(),
                h.len(),
                cones.dim()
            )));
        }
        if a.nrows() != b.len() {
            return Err(ConicError::Dimension(format!("A has {} rows but b has {}", a.nrows(), b.len())));
        }
        Ok(Self { cones, c, g, h, a, b, hchol: None, schur: None })
    }
}

fn cholesky_regularized(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, ConicError> {
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..6 {
        let mut t = m.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += reg;
        }
        if let Some(ch) = t.cholesky() {
            return Ok(ch);
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    Err(ConicError::Singular("Newton system is not positive definite".into()))
}

impl ConeProgram for DenseProgram {
    fn cones(&self) -> &Cones {
        &self.cones
    }
    fn n(&self) -> usize {
        self.c.len()
    }
    fn p(&self) -> usize {
        self.b.len()
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
        &self.g * x
    }
    fn g_tmul(&self, z: &DVector<f64>) -> DVector<f64> {
        self.g.tr_mul(z)
    }
    fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }
    fn a_tmul(&self, y: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(y)
    }

    fn factor(&mut self, w: &Scaling) -> Result<(), ConicError> {
        let mut m = DMatrix::zeros(self.g.nrows(), self.g.ncols());
        for j in 0..self.g.ncols() {
            let col = w.apply_winvt(&self.g.column(j).into_owned());
            m.set_column(j, &col);
        }
        let hm = m.tr_mul(&m);
        let ch = cholesky_regularized(hm)?;
        self.schur = if self.a.nrows() > 0 {
            let hinv_at = ch.solve(&self.a.transpose());
            let s = &self.a * &hinv_at;
            Some((hinv_at, cholesky_regularized(s)?))
        } else {
            None
        };
        self.hchol = Some(ch);
        Ok(())
    }

    fn kkt_solve(
        &self,
        w: &Scaling,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let ch = self.hchol.as_ref().expect("factor must precede kkt_solve");
        let r = bx + self.g.tr_mul(&w.apply_wtw_inv(bz));
        let hr = ch.solve(&r);
        let (x, y) = match &self.schur {
            Some((hinv_at, sch)) => {
                let y = sch.solve(&(&self.a * &hr - by));
                let x = hr - hinv_at * &y;
                (x, y)
            }
            None => (hr, DVector::zeros(0)),
        };
        let z = w.apply_wtw_inv(&(&self.g * &x - bz));
        (x, y, z)
    }
}
