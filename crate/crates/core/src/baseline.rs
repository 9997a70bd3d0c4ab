//! Block-level linear precoding benchmark: per-user SINR constraints,
//! transmit-covariance MMSE objective, solved by semidefinite relaxation.

use std::io::Write;

use ftn_conic::{solve_sdp, Coef, IpmSettings, Row, SdpProblem, Status};
use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{psk_point, Scenario, SymbolFrame};
use crate::error::{Error, Result};
use crate::linalg::{trace_inverse_shifted, CMat, RMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankInfo {
    /// `k` for user covariances, `None` for the auxiliary covariance.
    pub user: Option<usize>,
    pub rank: usize,
    /// Second-largest over largest eigenvalue.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BlpSolution {
    /// `N_t × K`, one beamformer per user.
    pub w: CMat,
    pub r_extra: CMat,
    pub sinr: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `(σ_R² N_r / L) tr((ρI + R)⁻¹)` with the per-symbol covariance `R`.
    pub mmse: f64,
    /// The same normalization with the frame Gram `L·R`, i.e. the radar
    /// integrating the whole frame as the symbol-level design does.
    pub mmse_frame: f64,
    /// Relaxation optimum in the units of `mmse`.
    pub sdr_value: f64,
    pub rank_report: Vec<RankInfo>,
    /// Some extracted SINR fell short of its target by more than 10⁻⁶ relative.
    pub flagged: bool,
    pub frame_len: usize,
    pub energy: f64,
    pub rho: f64,
    /// `σ_R² N_r / L`.
    pub mmse_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlpOptions {
    /// Include the auxiliary (radar-only) covariance `R_d`.
    pub aux: bool,
    pub tol: f64,
}

impl Default for BlpOptions {
    fn default() -> Self {
        Self { aux: true, tol: 1e-8 }
    }
}

/// Real embedding `[[Re, -Im], [Im, Re]]` of Hermitian blocks of order `m`.
fn re_part(row: Row, block: usize, m: usize, a: usize, b: usize, v: f64) -> Row {
    row.entry(block, a, b, 0.5 * v).entry(block, m + a, m + b, 0.5 * v)
}

fn im_part(row: Row, block: usize, m: usize, a: usize, b: usize, v: f64) -> Row {
    row.entry(block, m + a, b, 0.5 * v).entry(block, a, m + b, -0.5 * v)
}

fn trace_part(row: Row, block: usize, m: usize, v: f64) -> Row {
    (0..2 * m).fold(row, |r, i| r.entry(block, i, i, 0.5 * v))
}

fn from_embedding(y: &RMat, m: usize) -> CMat {
    CMat::from_fn(m, m, |a, b| {
        C64::new(0.5 * (y[(a, b)] + y[(m + a, m + b)]), 0.5 * (y[(m + a, b)] - y[(a, m + b)]))
    })
}

/// `Re tr(h hᴴ X)` as `½⟨uuᵀ + vvᵀ, Y⟩` on the embedding.
fn rank_one_coef(h: &[C64], weight: f64) -> Coef {
    let m = h.len();
    let u = DVector::from_fn(2 * m, |i, _| if i < m { h[i].re } else { h[i - m].im });
    let v = DVector::from_fn(2 * m, |i, _| if i < m { -h[i].im } else { h[i - m].re });
    Coef::LowRank(vec![(0.5 * weight, u), (0.5 * weight, v)])
}

fn hermitian_psd_part(m: &CMat) -> CMat {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| C64::new(v.max(0.0), 0.0));
    &eig.eigenvectors * CMat::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

fn rank_of(m: &CMat) -> (usize, f64) {
    let mut ev: Vec<f64> = SymmetricEigen::new((m + m.adjoint()) * C64::new(0.5, 0.0)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let top = ev.first().copied().unwrap_or(0.0).max(0.0);
    if top <= 0.0 {
        return (0, 0.0);
    }
    let rank = ev.iter().filter(|&&v| v > 1e-6 * top).count();
    (rank, ev.get(1).copied().unwrap_or(0.0).max(0.0) / top)
}

/// SINR of user `k`: `|h_kᵀw_k|² / (Σ_{j≠k} |h_kᵀw_j|² + h_kᵀ R_d h_k* + σ²)`.
pub fn blp_sinr(h_c: &CMat, w: &CMat, r_extra: &CMat, sigma2: f64) -> Vec<f64> {
    let hw = h_c * w;
    (0..h_c.nrows())
        .map(|k| {
            let h = h_c.row(k);
            let aux = (h * r_extra * h.adjoint())[(0, 0)].re;
            let interference: f64 = (0..w.ncols()).filter(|&j| j != k).map(|j| hw[(k, j)].norm_sqr()).sum();
            hw[(k, k)].norm_sqr() / (interference + aux + sigma2)
        })
        .collect()
}

/// Minimum per-symbol transmit power `Σ‖w_k‖²` meeting the SINR targets
/// without auxiliary streams, from the dual uplink fixed point
/// `λ_k = 1 / ((1 + 1/Γ_k) h_kᴴ (I + Σ_j λ_j h_j h_jᴴ)⁻¹ h_k)`, `P = σ² Σ λ_k`.
/// The iteration increases monotonically from zero; `None` once `P` exceeds
/// `cap` or the iteration fails to settle.
pub fn blp_min_power(h_c: &CMat, gamma: &[f64], sigma2: f64, cap: f64) -> Option<f64> {
    let (k_users, n_t) = h_c.shape();
    let hs: Vec<DVector<C64>> = (0..k_users).map(|k| h_c.row(k).adjoint()).collect();
    let mut lam = vec![0.0; k_users];
    let mut prev = 0.0;
    for _ in 0..10_000 {
        let mut m = CMat::identity(n_t, n_t);
        for (h, l) in hs.iter().zip(&lam) {
            m += h * h.adjoint() * C64::new(*l, 0.0);
        }
        let chol = m.cholesky()?;
        for k in 0..k_users {
            let q = (hs[k].adjoint() * chol.solve(&hs[k]))[(0, 0)].re;
            lam[k] = 1.0 / ((1.0 + 1.0 / gamma[k]) * q);
        }
        let p = sigma2 * lam.iter().sum::<f64>();
        if !p.is_finite() || p > cap {
            return None;
        }
        if (p - prev).abs() <= 1e-12 * p {
            return Some(p);
        }
        prev = p;
    }
    None
}

/// `(σ_R² N_r / L) tr((ρI + R)⁻¹)`.
pub fn blp_mmse_of(r: &CMat, rho: f64, sigma2_r: f64, n_rx: usize, frame_len: usize) -> f64 {
    let tr = trace_inverse_shifted(r, rho).unwrap_or(f64::INFINITY);
    sigma2_r * n_rx as f64 / frame_len as f64 * tr
}

pub fn blp_mmse(sol: &BlpSolution) -> f64 {
    sol.mmse_scale * trace_inverse_shifted(&sol.covariance(), sol.rho).unwrap_or(f64::INFINITY)
}

impl BlpSolution {
    /// `R = WWᴴ + R_extra`.
    pub fn covariance(&self) -> CMat {
        &self.w * self.w.adjoint() + &self.r_extra
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "row", "col", "re", "im"])?;
        for j in 0..self.w.ncols() {
            for i in 0..self.w.nrows() {
                let v = self.w[(i, j)];
                w.write_record(["w", &i.to_string(), &j.to_string(), &format!("{:e}", v.re), &format!("{:e}", v.im)])?;
            }
        }
        for (k, s) in self.sinr.iter().enumerate() {
            w.write_record(["sinr", &k.to_string(), "0", &format!("{s:e}"), "0"])?;
        }
        w.write_record(["mmse", "0", "0", &format!("{:e}", self.mmse), "0"])?;
        w.flush()?;
        Ok(())
    }
}

/// Solves the relaxation and extracts one beamformer per user.
pub fn blp_solve(scenario: &Scenario, frame_len: usize, opts: &BlpOptions) -> Result<BlpSolution> {
    let (k_users, n_t) = scenario.h_c.shape();
    if k_users >= n_t {
        return Err(Error::Dimension(format!("need K < N_t, got K = {k_users}, N_t = {n_t}")));
    }
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame length must be at least 1".into()));
    }
    let rho = scenario.rho();
    let sigma2 = scenario.sigma2_c;
    let l = frame_len as f64;
    let energy = scenario.energy;

    let n_cov = k_users + usize::from(opts.aux);
    let z_block = n_cov;
    let mut blocks = vec![2 * n_t; n_cov];
    blocks.push(4 * n_t);
    let mz = 2 * n_t;
    let mut sdp = SdpProblem::new(k_users + 1, blocks);

    let mut cost = Row::new();
    for p in 0..n_t {
        cost = re_part(cost, z_block, mz, p, p, 1.0);
    }
    sdp.set_cost(cost);
    // upper-right block of the epigraph matrix is the identity
    for a in 0..n_t {
        for b in 0..n_t {
            sdp.add_constraint(re_part(Row::new(), z_block, mz, a, n_t + b, 1.0), if a == b { 1.0 } else { 0.0 });
            sdp.add_constraint(im_part(Row::new(), z_block, mz, a, n_t + b, 1.0), 0.0);
        }
    }
    // lower-right block equals ρI + Σ R
    for a in 0..n_t {
        for b in a..n_t {
            let mut re = re_part(Row::new(), z_block, mz, n_t + a, n_t + b, 1.0);
            for c in 0..n_cov {
                re = re_part(re, c, n_t, a, b, -1.0);
            }
            sdp.add_constraint(re, if a == b { rho } else { 0.0 });
            if a != b {
                let mut im = im_part(Row::new(), z_block, mz, n_t + a, n_t + b, 1.0);
                for c in 0..n_cov {
                    im = im_part(im, c, n_t, a, b, -1.0);
                }
                sdp.add_constraint(im, 0.0);
            }
        }
    }
    // SINR rows, divided by σ²: tr(C R_k)/Γ - Σ_{j≠k} tr(C R_j) - tr(C R_d) - t_k = σ²
    for k in 0..k_users {
        let h: Vec<C64> = scenario.h_c.row(k).iter().map(|v| v.conj()).collect();
        let mut row = Row::new().nonneg(k, -1.0);
        for c in 0..n_cov {
            let weight = if c == k { 1.0 / (scenario.gamma[k] * sigma2) } else { -1.0 / sigma2 };
            row = row.coef(c, rank_one_coef(&h, weight));
        }
        sdp.add_constraint(row, 1.0);
    }
    // (L/E) tr R + t_p = 1
    let mut power = Row::new().nonneg(k_users, 1.0);
    for c in 0..n_cov {
        power = trace_part(power, c, n_t, l / energy);
    }
    sdp.add_constraint(power, 1.0);

    if blp_min_power(&scenario.h_c, &scenario.gamma, sigma2, energy / l).is_none() {
        return Err(Error::Infeasible("SINR targets cannot be met within the power budget".into()));
    }
    let sol = solve_sdp(&sdp, &IpmSettings::with_tol(opts.tol))?;
    match sol.status {
        Status::Optimal | Status::Inaccurate => {}
        Status::PrimalInfeasible => {
            return Err(Error::Infeasible("SINR targets cannot be met within the power budget".into()))
        }
        Status::DualInfeasible | Status::MaxIter => {
            return Err(Error::SolverFailure(format!("relaxation solver stopped with {:?}", sol.status)))
        }
    }
    if sol.status == Status::Inaccurate {
        log::debug!("relaxation solved to reduced accuracy (pres {:.1e}, dres {:.1e})", sol.pres, sol.dres);
    }

    let covs: Vec<CMat> = (0..n_cov).map(|c| hermitian_psd_part(&from_embedding(&sol.blocks[c], n_t))).collect();
    let mut w = CMat::zeros(n_t, k_users);
    for k in 0..k_users {
        let h = scenario.h_c.row(k).adjoint();
        let rh = &covs[k] * &h;
        let gain = (h.adjoint() * &rh)[(0, 0)].re;
        if gain > 0.0 {
            w.set_column(k, &(rh / C64::new(gain.sqrt(), 0.0)));
        }
    }
    let r_total = covs.iter().fold(CMat::zeros(n_t, n_t), |acc, c| acc + c);
    let mut r_extra =
        if opts.aux { hermitian_psd_part(&(&r_total - &w * w.adjoint())) } else { CMat::zeros(n_t, n_t) };
    let used = l * ((&w * w.adjoint()).trace().re + r_extra.trace().re);
    if used > energy {
        let f = energy / used;
        w *= C64::new(f.sqrt(), 0.0);
        r_extra *= C64::new(f, 0.0);
    }

    let sinr = blp_sinr(&scenario.h_c, &w, &r_extra, sigma2);
    let flagged = sinr.iter().zip(&scenario.gamma).any(|(s, g)| *s < g * (1.0 - 1e-6));
    if flagged {
        log::warn!("extracted beamformers miss an SINR target");
    }
    let mut rank_report: Vec<RankInfo> = (0..k_users)
        .map(|k| {
            let (rank, ratio) = rank_of(&covs[k]);
            RankInfo { user: Some(k), rank, ratio }
        })
        .collect();
    if opts.aux {
        let (rank, ratio) = rank_of(&covs[k_users]);
        rank_report.push(RankInfo { user: None, rank, ratio });
    }
    let r = &w * w.adjoint() + &r_extra;
    let scale = scenario.sigma2_r * scenario.n_rx as f64 / l;
    Ok(BlpSolution {
        mmse: blp_mmse_of(&r, rho, scenario.sigma2_r, scenario.n_rx, frame_len),
        mmse_frame: blp_mmse_of(&(&r * C64::new(l, 0.0)), rho, scenario.sigma2_r, scenario.n_rx, frame_len),
        sdr_value: scale * sol.primal_obj,
        w,
        r_extra,
        sinr,
        gamma: scenario.gamma.clone(),
        rank_report,
        flagged,
        frame_len,
        energy,
        rho,
        mmse_scale: scale,
    })
}

/// Frame `X = W S + G S_d` with `G Gᴴ = R_extra` and pseudo-random QPSK `S_d`.
pub fn blp_transmit(sol: &BlpSolution, frame: &SymbolFrame, seed: u64) -> Result<CMat> {
    if frame.s.nrows() != sol.w.ncols() {
        return Err(Error::Dimension(format!("{} symbol streams for {} beamformers", frame.s.nrows(), sol.w.ncols())));
    }
    let mut x = &sol.w * &frame.s;
    if sol.r_extra.iter().any(|v| *v != C64::new(0.0, 0.0)) {
        let eig = sol.r_extra.clone().symmetric_eigen();
        let n_t = sol.r_extra.nrows();
        let g = CMat::from_fn(n_t, n_t, |i, j| eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s_d = CMat::from_fn(n_t, frame.s.ncols(), |_, _| psk_point(rng.random_range(0..4), 4));
        x += g * s_d;
    }
    Ok(x)
}
