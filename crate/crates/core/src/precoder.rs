//! Constructive-interference constraints, the sensing objective and its
//! lower bound.

use nalgebra::DVector;

use crate::channel::SymbolFrame;
use crate::error::{Error, Result};
use crate::linalg::{mul_cr, stack, trace_inverse_shifted, CMat, RMat, C64};
use crate::waveform::FtnWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CiRow {
    pub user: usize,
    pub sample: usize,
    pub branch: Branch,
}

/// Linear system `A z ≤ b` over `z = [Re vec(X); Im vec(X)]`.
#[derive(Debug, Clone)]
pub struct CiSystem {
    pub a_mat: RMat,
    pub b_vec: DVector<f64>,
    pub rows: Vec<CiRow>,
    pub n_tx: usize,
    pub frame_len: usize,
}

/// Builds the sector constraints
/// `|Im v| - Re v · tanθ ≤ -√Γ_k tanθ σ_l` for `v = (H_C X U Λ)_kl s*_kl`,
/// with `σ_l = σ_C √Λ_l`. For BPSK both rows read `-Re v ≤ -√Γ_k σ_l`.
pub fn build_ci_system(
    h_c: &CMat,
    frame: &SymbolFrame,
    waveform: &FtnWaveform,
    sigma2_c: f64,
    gamma: &[f64],
) -> Result<CiSystem> {
    let (k_users, n_tx) = h_c.shape();
    let l = waveform.frame_len();
    if frame.s.nrows() != k_users || frame.s.ncols() != l || gamma.len() != k_users {
        return Err(Error::Dimension(format!(
            "channel has {k_users} users, symbols are {}x{}, {} targets, frame length {l}",
            frame.s.nrows(),
            frame.s.ncols(),
            gamma.len()
        )));
    }
    let bpsk = frame.mod_order == 2;
    let tan = frame.theta().tan();
    let u = waveform.u();
    let lam = waveform.lambda();
    let nz = n_tx * l;
    let mut a_mat = RMat::zeros(2 * k_users * l, 2 * nz);
    let mut b_vec = DVector::zeros(2 * k_users * l);
    let mut rows = Vec::with_capacity(2 * k_users * l);
    for k in 0..k_users {
        for ls in 0..l {
            let sigma_l = (sigma2_c * lam[ls]).sqrt();
            let margin = gamma[k].sqrt() * sigma_l;
            let sc = frame.s[(k, ls)].conj() * lam[ls];
            for (bi, branch) in [Branch::Plus, Branch::Minus].into_iter().enumerate() {
                let r = rows.len();
                let sign = if bi == 0 { 1.0 } else { -1.0 };
                for j in 0..l {
                    for n in 0..n_tx {
                        // coefficient of X[n][j] in v
                        let al = h_c[(k, n)] * sc * u[(j, ls)];
                        let col = n + n_tx * j;
                        let (cr, ci) = if bpsk {
                            (-al.re, al.im)
                        } else {
                            (sign * al.im - tan * al.re, sign * al.re + tan * al.im)
                        };
                        a_mat[(r, col)] = cr;
                        a_mat[(r, nz + col)] = ci;
                    }
                }
                b_vec[r] = if bpsk { -margin } else { -tan * margin };
                rows.push(CiRow { user: k, sample: ls, branch });
            }
        }
    }
    Ok(CiSystem { a_mat, b_vec, rows, n_tx, frame_len: l })
}

/// `A z - b`; feasible iff every entry is ≤ 0.
pub fn ci_residuals(x: &CMat, ci: &CiSystem) -> DVector<f64> {
    &ci.a_mat * stack(x) - &ci.b_vec
}

#[derive(Debug, Clone)]
pub struct SensingParams {
    pub psi: RMat,
    pub rho: f64,
    pub n_rx: usize,
    pub sigma2_r: f64,
}

impl SensingParams {
    pub fn new(psi: RMat, sigma2_r: f64, sigma2_h: f64, n_rx: usize) -> Result<Self> {
        if !(sigma2_r > 0.0 && sigma2_h > 0.0) {
            return Err(Error::InvalidParameter("sensing variances must be positive".into()));
        }
        Ok(Self { psi, rho: sigma2_r / sigma2_h, n_rx, sigma2_r })
    }

    /// Converts `f` to the physical MMSE `σ_R² N_r f`.
    pub fn mmse_scale(&self) -> f64 {
        self.sigma2_r * self.n_rx as f64
    }
}

fn gram(x: &CMat, psi: &RMat) -> CMat {
    mul_cr(x, psi) * x.adjoint()
}

/// `f(X) = tr((ρI + XΨXᴴ)⁻¹)`.
pub fn mmse_objective(x: &CMat, params: &SensingParams) -> Result<f64> {
    trace_inverse_shifted(&gram(x, &params.psi), params.rho)
        .ok_or_else(|| Error::Numerical("ρI + XΨXᴴ is not positive definite".into()))
}

/// `∇f(X) = -2 A⁻² X Ψ` with `A = ρI + XΨXᴴ`, under the convention
/// `df = Re tr(∇fᴴ dX)`.
pub fn mmse_gradient(x: &CMat, params: &SensingParams) -> Result<CMat> {
    let xp = mul_cr(x, &params.psi);
    let mut a = &xp * x.adjoint();
    for i in 0..a.nrows() {
        a[(i, i)] += C64::new(params.rho, 0.0);
    }
    let chol = a.cholesky().ok_or_else(|| Error::Numerical("ρI + XΨXᴴ is not positive definite".into()))?;
    let t = chol.solve(&chol.solve(&xp));
    Ok(t * C64::new(-2.0, 0.0))
}

/// Water-filling: levels `(κ - floor_i)⁺` summing to `total`.
pub fn water_fill(floors: &[f64], total: f64) -> Vec<f64> {
    let mut sorted: Vec<f64> = floors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut kappa = sorted[0] + total;
    for m in 1..=sorted.len() {
        let k = (total + sorted[..m].iter().sum::<f64>()) / m as f64;
        if m == sorted.len() || k <= sorted[m] {
            kappa = k;
            break;
        }
    }
    floors.iter().map(|f| (kappa - f).max(0.0)).collect()
}

/// `f_min = Σ 1/(λ_i² + ρ)` over the water-filled diagonal design with
/// `Σ λ_i² = E`.
pub fn mmse_lower_bound(energy: f64, params: &SensingParams, n_tx: usize) -> (f64, Vec<f64>) {
    let lambda_sq = water_fill(&vec![params.rho; n_tx], energy);
    let f = lambda_sq.iter().map(|l| 1.0 / (l + params.rho)).sum();
    (f, lambda_sq)
}
