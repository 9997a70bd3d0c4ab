//! The convex subproblem of each SCA step: a linear objective over the CI
//! polyhedron intersected with the energy ball `‖XCᵀ‖_F ≤ √E`.
//!
//! Two solvers share one contract. [`solve_socp`] hands the real-stacked
//! problem to the interior-point method in `ftn_conic`. [`CiBallSolver`]
//! exploits the structure: every CI sector is an affine cone in the
//! whitened receive domain, so the problem reduces to a nonnegative
//! quadratic program over the sector coordinates plus a closed-form
//! null-space component, solved by a primal active-set method.

use std::io::Write;

use ftn_conic::{Cones, DenseProgram, IpmSettings, Status};
use nalgebra::{Cholesky, DVector, Dyn};

use crate::channel::SymbolFrame;
use crate::error::{Error, Result};
use crate::linalg::{mul_cr, re_inner, stack, unstack, CMat, RMat, C64};
use crate::precoder::{build_ci_system, ci_residuals, CiSystem};
use crate::waveform::FtnWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub z_star: DVector<f64>,
    pub x: CMat,
    /// `Re tr(∇ᴴ(X* - X_i))`.
    pub objective_value: f64,
    pub status: ConicStatus,
    pub duality_gap: f64,
    pub max_ineq_violation: f64,
    /// `‖X*Cᵀ‖_F²`.
    pub energy: f64,
}

/// Real matrix `D` with `‖D z‖² = ‖XCᵀ‖_F²` for `z = stack(X)`.
pub fn energy_map(waveform: &FtnWaveform, n_tx: usize) -> RMat {
    let l = waveform.frame_len();
    // vec(X F) = (Fᵀ ⊗ I) vec(X) with F Fᵀ = Ψ
    let f = match waveform.psi().clone().cholesky() {
        Some(ch) => ch.l(),
        None => waveform.conv().transpose(),
    };
    let rows = f.ncols() * n_tx;
    let n = n_tx * l;
    let mut d = RMat::zeros(2 * rows, 2 * n);
    for a in 0..f.ncols() {
        for j in 0..l {
            let v = f[(j, a)];
            if v == 0.0 {
                continue;
            }
            for t in 0..n_tx {
                d[(a * n_tx + t, j * n_tx + t)] = v;
                d[(rows + a * n_tx + t, n + j * n_tx + t)] = v;
            }
        }
    }
    d
}

pub fn frame_energy(x: &CMat, waveform: &FtnWaveform) -> f64 {
    re_inner(&mul_cr(x, waveform.psi()), x)
}

#[derive(Debug, Clone)]
pub struct ConicSubproblem<'a> {
    /// `g` with `gᵀ stack(X) = Re tr(∇ᴴ X)`.
    pub objective: DVector<f64>,
    /// `-Re tr(∇ᴴ X_i)`.
    pub offset: f64,
    pub ineq: &'a CiSystem,
    pub energy_map: RMat,
    pub energy_budget: f64,
}

impl ConicSubproblem<'_> {
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.objective.dot(z) + self.offset
    }
}

pub fn assemble_subproblem<'a>(
    grad: &CMat,
    x_i: &CMat,
    ci: &'a CiSystem,
    waveform: &FtnWaveform,
    energy: f64,
) -> Result<ConicSubproblem<'a>> {
    if grad.shape() != x_i.shape() || grad.shape() != (ci.n_tx, ci.frame_len) || waveform.frame_len() != ci.frame_len
    {
        return Err(Error::Dimension(format!(
            "gradient {:?}, iterate {:?}, constraints for {}x{}",
            grad.shape(),
            x_i.shape(),
            ci.n_tx,
            ci.frame_len
        )));
    }
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("energy budget must be positive".into()));
    }
    Ok(ConicSubproblem {
        objective: stack(grad),
        offset: -re_inner(grad, x_i),
        ineq: ci,
        energy_map: energy_map(waveform, ci.n_tx),
        energy_budget: energy,
    })
}

/// Solves the subproblem with the interior-point method.
pub fn solve_socp(prob: &ConicSubproblem, tol: f64) -> Result<ConicSolution> {
    let n = prob.objective.len();
    let m = prob.ineq.a_mat.nrows();
    let nd = prob.energy_map.nrows();
    let mut g = RMat::zeros(m + 1 + nd, n);
    g.rows_mut(0, m).copy_from(&prob.ineq.a_mat);
    g.rows_mut(m + 1, nd).copy_from(&(-&prob.energy_map));
    let mut h = DVector::zeros(m + 1 + nd);
    h.rows_mut(0, m).copy_from(&prob.ineq.b_vec);
    h[m] = prob.energy_budget.sqrt();

    // scale the objective so the stopping rule is insensitive to ‖∇‖
    let scale = prob.objective.amax();
    let c = if scale > 0.0 { &prob.objective / scale } else { prob.objective.clone() };
    let mut program =
        DenseProgram::new(c, g, h, RMat::zeros(0, n), DVector::zeros(0), Cones::new(m, vec![nd + 1], vec![]))?;
    let sol = ftn_conic::solve(&mut program, &IpmSettings::with_tol(tol))?;
    let z = sol.x;
    let x = unstack(&z, prob.ineq.n_tx, prob.ineq.frame_len);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let max_ineq_violation = ci_residuals(&x, prob.ineq).max().max(0.0);
    let energy = (&prob.energy_map * &z).norm_squared();
    let status = match sol.status {
        Status::Optimal => ConicStatus::Optimal,
        // accept a stalled solve only if it passes our own feasibility checks
        Status::Inaccurate
            if max_ineq_violation <= 1e-6 && energy <= prob.energy_budget * (1.0 + 1e-6) =>
        {
            ConicStatus::Optimal
        }
        Status::PrimalInfeasible => ConicStatus::Infeasible,
        Status::DualInfeasible | Status::MaxIter | Status::Inaccurate => ConicStatus::MaxIter,
    };
    Ok(ConicSolution {
        objective_value: prob.value(&z),
        duality_gap: (sol.primal_obj - sol.dual_obj) * scale,
        max_ineq_violation,
        energy,
        z_star: z,
        x,
        status,
    })
}

/// Plain-text dump: one `# name rows cols` header per block followed by
/// its rows, whitespace separated.
pub fn dump_subproblem<W: Write>(prob: &ConicSubproblem, mut out: W) -> Result<()> {
    let mut block = |name: &str, m: &RMat| -> std::io::Result<()> {
        writeln!(out, "# {name} {} {}", m.nrows(), m.ncols())?;
        for r in 0..m.nrows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    };
    let col = |v: &DVector<f64>| RMat::from_column_slice(v.len(), 1, v.as_slice());
    block("objective", &col(&prob.objective))?;
    block("offset", &RMat::from_element(1, 1, prob.offset))?;
    block("a_mat", &prob.ineq.a_mat)?;
    block("b_vec", &col(&prob.ineq.b_vec))?;
    block("energy_map", &prob.energy_map)?;
    block("energy_budget", &RMat::from_element(1, 1, prob.energy_budget))?;
    Ok(())
}

/// Cholesky factor of a principal submatrix `Q_FF`, updated as indices
/// enter and leave `F`.
struct ActiveFactor {
    cap: usize,
    /// row-major lower triangle, stride `cap`
    l: Vec<f64>,
    members: Vec<usize>,
}

impl ActiveFactor {
    fn new(cap: usize) -> Self {
        Self { cap, l: vec![0.0; cap * cap], members: Vec::new() }
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.cap + j]
    }

    fn forward(&self, rhs: &mut [f64]) {
        for i in 0..rhs.len() {
            let row = &self.l[i * self.cap..i * self.cap + i];
            let s: f64 = row.iter().zip(&rhs[..i]).map(|(a, b)| a * b).sum();
            rhs[i] = (rhs[i] - s) / self.at(i, i);
        }
    }

    fn backward(&self, rhs: &mut [f64]) {
        for i in (0..rhs.len()).rev() {
            let mut s = rhs[i];
            for j in i + 1..rhs.len() {
                s -= self.at(j, i) * rhs[j];
            }
            rhs[i] = s / self.at(i, i);
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        self.forward(rhs);
        self.backward(rhs);
    }

    fn push(&mut self, q: &RMat, j: usize) -> bool {
        let m = self.len();
        let mut y: Vec<f64> = self.members.iter().map(|&i| q[(i, j)]).collect();
        self.forward(&mut y);
        let d = q[(j, j)] - y.iter().map(|v| v * v).sum::<f64>();
        if !(d > 1e-13 * q[(j, j)]) {
            return false;
        }
        self.l[m * self.cap..m * self.cap + m].copy_from_slice(&y);
        self.l[m * self.cap + m] = d.sqrt();
        self.members.push(j);
        true
    }

    fn remove(&mut self, pos: usize) {
        let m = self.len();
        let cap = self.cap;
        // drop row `pos`, leaving rows below with one superdiagonal entry
        for i in pos..m - 1 {
            let (dst, src) = self.l.split_at_mut((i + 1) * cap);
            dst[i * cap..i * cap + i + 2].copy_from_slice(&src[..i + 2]);
        }
        for j in pos..m - 1 {
            let a = self.at(j, j);
            let b = self.at(j, j + 1);
            let r = a.hypot(b);
            let (c, s) = (a / r, b / r);
            for i in j..m - 1 {
                let u = self.at(i, j);
                let v = self.at(i, j + 1);
                self.l[i * cap + j] = c * u + s * v;
                self.l[i * cap + j + 1] = -s * u + c * v;
            }
            self.l[j * cap + j + 1] = 0.0;
            if self.at(j, j) < 0.0 {
                for i in j..m - 1 {
                    self.l[i * cap + j] = -self.l[i * cap + j];
                }
            }
        }
        self.members.remove(pos);
    }
}

/// One coordinate of the sector parameterization: entry `(k, l)` of the
/// whitened receive matrix moves along `dir`.
#[derive(Debug, Clone, Copy)]
struct SectorCoord {
    k: usize,
    l: usize,
    dir: C64,
    bounded: bool,
}

/// Structured solver for the CI-ball subproblem of one frame.
///
/// With `Y = XU`, `A = H_C Y` collects the noiseless whitened samples
/// divided by `Λ`. Each CI sector reads `A_kl = s_kl (c_kl + r₊e^{jθ} + r₋e^{-jθ})`
/// with `r ≥ 0`, and `Y = B A + P_N Y` splits into a part fixed by `A` and a
/// null-space part that only costs energy.
pub struct CiBallSolver {
    n_tx: usize,
    frame_len: usize,
    energy: f64,
    coords: Vec<SectorCoord>,
    u: RMat,
    psi_t_inv: RMat,
    b: CMat,
    p_null: CMat,
    a0: CMat,
    q: RMat,
    q_chol: Cholesky<f64, Dyn>,
    p: DVector<f64>,
    q0: f64,
    r_min: DVector<f64>,
    min_energy: f64,
    r_warm: Option<DVector<f64>>,
    ci: CiSystem,
    psi: RMat,
    waveform: FtnWaveform,
    pub tol: f64,
    pub max_faces: usize,
}

struct LmoResult {
    r: DVector<f64>,
    beta: f64,
    gap: f64,
}

impl CiBallSolver {
    pub fn new(
        h_c: &CMat,
        frame: &SymbolFrame,
        waveform: &FtnWaveform,
        sigma2_c: f64,
        gamma: &[f64],
        energy: f64,
    ) -> Result<Self> {
        let ci = build_ci_system(h_c, frame, waveform, sigma2_c, gamma)?;
        let (k_users, n_tx) = h_c.shape();
        let l = waveform.frame_len();
        if !(energy > 0.0) {
            return Err(Error::InvalidParameter("energy budget must be positive".into()));
        }
        let u = waveform.u().clone();
        let lam = waveform.lambda();
        let psi_t = u.transpose() * waveform.psi() * &u;
        let psi_t_inv = psi_t
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("pulse Gram matrix is singular".into()))?
            .inverse();
        let g = h_c * h_c.adjoint();
        let ginv = g
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("H_C H_Cᴴ is singular; user channels are dependent".into()))?
            .inverse();
        let b = h_c.adjoint() * &ginv;
        let p_null = CMat::identity(n_tx, n_tx) - &b * h_c;

        let lam_floor = 1e-12 * lam.max();
        let bpsk = frame.mod_order == 2;
        let theta = frame.theta();
        let mut a0 = CMat::zeros(k_users, l);
        let mut coords = Vec::with_capacity(2 * k_users * l);
        for k in 0..k_users {
            for ls in 0..l {
                let s = frame.s[(k, ls)];
                if lam[ls] <= lam_floor {
                    coords.push(SectorCoord { k, l: ls, dir: s, bounded: false });
                    coords.push(SectorCoord { k, l: ls, dir: s * C64::i(), bounded: false });
                    continue;
                }
                a0[(k, ls)] = s * (gamma[k].sqrt() * sigma2_c.sqrt() / lam[ls].sqrt());
                if bpsk {
                    coords.push(SectorCoord { k, l: ls, dir: s, bounded: true });
                    coords.push(SectorCoord { k, l: ls, dir: s * C64::i(), bounded: false });
                } else {
                    coords.push(SectorCoord { k, l: ls, dir: s * C64::from_polar(1.0, theta), bounded: true });
                    coords.push(SectorCoord { k, l: ls, dir: s * C64::from_polar(1.0, -theta), bounded: true });
                }
            }
        }
        let n = coords.len();
        let mut q = RMat::zeros(n, n);
        for i in 0..n {
            let ci_ = coords[i];
            for j in i..n {
                let cj = coords[j];
                let v = (ci_.dir.conj() * cj.dir * ginv[(ci_.k, cj.k)]).re * psi_t[(ci_.l, cj.l)];
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        let ga0 = &ginv * mul_cr(&a0, &psi_t);
        let p = DVector::from_fn(n, |i, _| (coords[i].dir.conj() * ga0[(coords[i].k, coords[i].l)]).re);
        let q0 = re_inner(&a0, &ga0);
        let q_chol = q
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("sector Gram matrix is not positive definite".into()))?;

        let mut solver = Self {
            n_tx,
            frame_len: l,
            energy,
            coords,
            u,
            psi_t_inv,
            b,
            p_null,
            a0,
            q,
            q_chol,
            p,
            q0,
            r_min: DVector::zeros(n),
            min_energy: 0.0,
            r_warm: None,
            ci,
            psi: waveform.psi().clone(),
            waveform: waveform.clone(),
            tol: 1e-8,
            max_faces: 0,
        };
        solver.max_faces = 20 * n + 100;
        let r = solver.min_energy_point()?;
        solver.min_energy = solver.quad(&r);
        solver.r_min = r;
        Ok(solver)
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn ci_system(&self) -> &CiSystem {
        &self.ci
    }

    /// Smallest frame energy that satisfies every CI constraint.
    pub fn min_energy(&self) -> f64 {
        self.min_energy
    }

    pub fn is_feasible(&self) -> bool {
        self.min_energy <= self.energy
    }

    /// The minimum-energy CI-feasible frame.
    pub fn min_energy_frame(&self) -> CMat {
        let a = self.sector_matrix(&self.r_min);
        mul_cr(&(&self.b * a), &self.u.transpose())
    }

    fn quad(&self, r: &DVector<f64>) -> f64 {
        let qr = &self.q * r;
        r.dot(&qr) + 2.0 * self.p.dot(r) + self.q0
    }

    fn sector_matrix(&self, r: &DVector<f64>) -> CMat {
        let mut a = self.a0.clone();
        for (c, &v) in self.coords.iter().zip(r.iter()) {
            if v != 0.0 {
                a[(c.k, c.l)] += c.dir * v;
            }
        }
        a
    }

    /// Minimizes `q(r)` over `r ≥ 0` on the bounded coordinates.
    fn min_energy_point(&self) -> Result<DVector<f64>> {
        let n = self.coords.len();
        let zero = DVector::zeros(n);
        let r0 = DVector::zeros(n);
        self.active_set(r0, &zero, 0.0, false).map(|res| res.r)
    }

    /// Primal active-set method shared by the minimum-energy QP
    /// (`ball = false`) and the linear minimization over the CI ball
    /// (`ball = true`): minimize `gᵀr - β√(E - q(r))` over `r ≥ 0`.
    fn active_set(&self, mut r: DVector<f64>, g: &DVector<f64>, beta: f64, ball: bool) -> Result<LmoResult> {
        let n = self.coords.len();
        let mut factor = ActiveFactor::new(n);
        let mut free: Vec<bool> = (0..n).map(|i| !self.coords[i].bounded || r[i] > 0.0).collect();
        for i in 0..n {
            if free[i] && !factor.push(&self.q, i) {
                return Err(Error::Numerical("sector Gram matrix lost definiteness".into()));
            }
        }
        let mut s_val = 0.0;
        for _ in 0..self.max_faces {
            let m = factor.len();
            let mut alpha: Vec<f64> = factor.members.iter().map(|&i| -self.p[i]).collect();
            factor.solve(&mut alpha);
            let mut rs = DVector::zeros(n);
            if ball {
                let mut delta: Vec<f64> = factor.members.iter().map(|&i| -g[i]).collect();
                factor.solve(&mut delta);
                let qa = self.q0 + (0..m).map(|t| self.p[factor.members[t]] * alpha[t]).sum::<f64>();
                let qc = -(0..m).map(|t| g[factor.members[t]] * delta[t]).sum::<f64>();
                let den = qc + beta * beta;
                if !(den > 0.0) {
                    return Err(Error::Numerical("degenerate linear objective on the CI ball".into()));
                }
                s_val = ((self.energy - qa).max(0.0) / den).sqrt();
                for t in 0..m {
                    rs[factor.members[t]] = alpha[t] + s_val * delta[t];
                }
            } else {
                for t in 0..m {
                    rs[factor.members[t]] = alpha[t];
                }
            }

            let blocked = factor.members.iter().any(|&i| self.coords[i].bounded && rs[i] < 0.0);
            if !blocked {
                r = rs;
                let mut w = &self.q * &r + &self.p;
                if ball {
                    w = g + w / s_val;
                }
                let scale = w.amax().max(1e-300);
                let mut best = None;
                let mut best_w = -self.tol * scale;
                for i in 0..n {
                    if !free[i] && w[i] < best_w {
                        best_w = w[i];
                        best = Some(i);
                    }
                }
                match best {
                    None => {
                        let gap = if ball { self.lmo_gap(&r, g, beta, s_val) } else { 0.0 };
                        return Ok(LmoResult { r, beta, gap });
                    }
                    Some(j) => {
                        if !factor.push(&self.q, j) {
                            return Err(Error::Numerical("sector Gram matrix lost definiteness".into()));
                        }
                        free[j] = true;
                    }
                }
            } else {
                let mut t = 1.0f64;
                for &i in &factor.members {
                    let d = rs[i] - r[i];
                    if self.coords[i].bounded && d < 0.0 {
                        t = t.min(-r[i] / d);
                    }
                }
                let step = &rs - &r;
                r += step * t;
                let rmax = r.amax().max(1.0);
                let mut pos = 0;
                while pos < factor.len() {
                    let i = factor.members[pos];
                    if self.coords[i].bounded && r[i] <= 1e-14 * rmax {
                        r[i] = 0.0;
                        free[i] = false;
                        factor.remove(pos);
                    } else {
                        pos += 1;
                    }
                }
            }
        }
        Err(Error::SolverFailure("active-set face limit reached".into()))
    }

    /// Primal value minus the Lagrange dual bound at `ν = 1/(2s)`.
    fn lmo_gap(&self, r: &DVector<f64>, g: &DVector<f64>, beta: f64, s: f64) -> f64 {
        let nu = 1.0 / (2.0 * s);
        let grad_q = &self.q * r + &self.p;
        let mut v = g + &self.p * (2.0 * nu);
        for i in 0..v.len() {
            if self.coords[i].bounded {
                let w = (g[i] + 2.0 * nu * grad_q[i]).max(0.0);
                v[i] -= w;
            }
        }
        let qinv_v = self.q_chol.solve(&v);
        let dual = nu * (self.q0 - self.energy) - v.dot(&qinv_v) / (4.0 * nu) - beta * beta / (4.0 * nu);
        let primal = g.dot(r) - beta * (self.energy - self.quad(r)).max(0.0).sqrt();
        primal - dual
    }

    /// Solves `min Re tr(∇ᴴ(X - X_i))` over the CI ball.
    pub fn solve(&mut self, grad: &CMat, x_i: &CMat) -> Result<ConicSolution> {
        if grad.shape() != (self.n_tx, self.frame_len) || x_i.shape() != grad.shape() {
            return Err(Error::Dimension(format!(
                "gradient {:?} and iterate {:?}, expected {}x{}",
                grad.shape(),
                x_i.shape(),
                self.n_tx,
                self.frame_len
            )));
        }
        if !self.is_feasible() {
            return Ok(self.infeasible_solution());
        }
        let gnorm = grad.norm();
        if gnorm == 0.0 {
            return Ok(self.finish(self.min_energy_frame(), grad, x_i, 0.0));
        }
        let gs = grad / C64::new(gnorm, 0.0);
        let gu = mul_cr(&gs, &self.u);
        let ga = self.b.adjoint() * &gu;
        let g = DVector::from_fn(self.coords.len(), |i, _| {
            let c = self.coords[i];
            (ga[(c.k, c.l)].conj() * c.dir).re
        });
        let pg = &self.p_null * &gu;
        let pg_psi = mul_cr(&pg, &self.psi_t_inv);
        let beta = re_inner(&pg_psi, &pg).max(0.0).sqrt();
        if beta <= 1e-12 {
            return self.solve_generic(grad, x_i);
        }
        let start = self.r_warm.clone().unwrap_or_else(|| self.r_min.clone());
        let res = match self.active_set(start, &g, beta, true) {
            Ok(res) => res,
            Err(Error::SolverFailure(_)) | Err(Error::Numerical(_)) => return self.solve_generic(grad, x_i),
            Err(e) => return Err(e),
        };
        let e_a = self.quad(&res.r);
        let e_b = (self.energy - e_a).max(0.0);
        let a = self.sector_matrix(&res.r);
        let null = pg_psi * C64::new(-e_b.sqrt() / res.beta, 0.0);
        let y = &self.b * a + null;
        let x = mul_cr(&y, &self.u.transpose());
        self.r_warm = Some(res.r);
        Ok(self.finish(x, grad, x_i, res.gap * gnorm))
    }

    fn solve_generic(&mut self, grad: &CMat, x_i: &CMat) -> Result<ConicSolution> {
        log::debug!("structured subproblem solve fell back to the interior-point path");
        let prob = assemble_subproblem(grad, x_i, &self.ci, &self.waveform, self.energy)?;
        let sol = solve_socp(&prob, self.tol)?;
        self.r_warm = None;
        Ok(sol)
    }

    fn finish(&self, x: CMat, grad: &CMat, x_i: &CMat, gap: f64) -> ConicSolution {
        let diff = &x - x_i;
        ConicSolution {
            z_star: stack(&x),
            objective_value: re_inner(grad, &diff),
            status: ConicStatus::Optimal,
            duality_gap: gap,
            max_ineq_violation: ci_residuals(&x, &self.ci).max().max(0.0),
            energy: re_inner(&mul_cr(&x, &self.psi), &x),
            x,
        }
    }

    fn infeasible_solution(&self) -> ConicSolution {
        let x = self.min_energy_frame();
        ConicSolution {
            z_star: stack(&x),
            objective_value: f64::NAN,
            status: ConicStatus::Infeasible,
            duality_gap: f64::NAN,
            max_ineq_violation: ci_residuals(&x, &self.ci).max().max(0.0),
            energy: self.min_energy,
            x,
        }
    }
}
