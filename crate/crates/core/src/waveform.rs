//! FTN pulse and the deterministic signal-model matrices.
//!
//! Times are in seconds; internally everything is evaluated on the
//! normalized axis `t / T0`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RMat;

/// How the symbol-rate taps `c` are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TapEnergy {
    /// `Σ c_p² = τ`: the frame energy `‖XCᵀ‖²` of a fixed symbol matrix
    /// shrinks with τ, as the sampled energy of a pulse train does.
    #[default]
    Proportional,
    /// `τ Σ c_p² = 1`.
    RateScaled,
    /// `Σ c_p² = 1`.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub alpha: f64,
    pub tau: f64,
    pub t0: f64,
    pub span: usize,
    pub oversample: usize,
    pub tap_energy: TapEnergy,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self { alpha: 0.3, tau: 1.0, t0: 1e-3, span: 8, oversample: 16, tap_energy: TapEnergy::Proportional }
    }
}

impl PulseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParameter("tau must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("alpha must be in [0, 1]".into()));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidParameter("t0 must be positive".into()));
        }
        if self.span < 1 {
            return Err(Error::InvalidParameter("span must be at least 1".into()));
        }
        if self.oversample < 8 {
            return Err(Error::InvalidParameter("oversample must be at least 8".into()));
        }
        Ok(())
    }

    /// Number of symbol-rate taps `P = 2 ceil(span / τ) + 1`.
    pub fn n_taps(&self) -> usize {
        2 * (self.span as f64 / self.tau - 1e-12).ceil() as usize + 1
    }
}

/// Unit-energy RRC on the normalized axis `x = t / T0`, untruncated.
fn rrc_normalized(x: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    }
    if x == 0.0 {
        return 1.0 - alpha + 4.0 * alpha / PI;
    }
    let q = 4.0 * alpha * x;
    if (q.abs() - 1.0).abs() < 1e-7 {
        let a = PI / (4.0 * alpha);
        return alpha / SQRT_2 * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * x * (1.0 - alpha)).sin() + q * (PI * x * (1.0 + alpha)).cos()) / (PI * x * (1.0 - q * q))
}

/// RRC impulse response at time `t` (seconds), truncated to `|t| ≤ span·T0`.
pub fn rrc_value(t: f64, cfg: &PulseConfig) -> f64 {
    let x = t / cfg.t0;
    if x.abs() > cfg.span as f64 {
        return 0.0;
    }
    rrc_normalized(x, cfg.alpha) / cfg.t0.sqrt()
}

/// Unnormalized autocorrelation of the truncated pulse at normalized lag `d ≥ 0`.
fn autocorr_raw(d: f64, cfg: &PulseConfig) -> f64 {
    let s = cfg.span as f64;
    let width = 2.0 * s - d;
    if width <= 0.0 {
        return 0.0;
    }
    let steps = (width * cfg.oversample as f64).ceil().max(1.0) as usize;
    let h = width / steps as f64;
    let lo = -s + d;
    let f = |t: f64| rrc_normalized(t, cfg.alpha) * rrc_normalized(t - d, cfg.alpha);
    let mut acc = 0.5 * (f(lo) + f(s));
    for i in 1..steps {
        acc += f(lo + i as f64 * h);
    }
    acc * h
}

/// Autocorrelation `φ(kT)` of the truncated pulse, normalized to 1 at lag 0.
pub fn pulse_autocorr(k: i64, cfg: &PulseConfig) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let d = k.unsigned_abs() as f64 * cfg.tau;
    autocorr_raw(d, cfg) / autocorr_raw(0.0, cfg)
}

/// Pulse-derived matrices for a frame of `L` symbols.
#[derive(Debug, Clone)]
pub struct FtnWaveform {
    config: PulseConfig,
    frame_len: usize,
    taps: DVector<f64>,
    lags: Vec<f64>,
    phi: RMat,
    conv: RMat,
    psi: RMat,
    u: RMat,
    lambda: DVector<f64>,
}

impl FtnWaveform {
    pub fn config(&self) -> &PulseConfig {
        &self.config
    }
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }
    /// Symbol-rate taps `c` (length `P`).
    pub fn taps(&self) -> &DVector<f64> {
        &self.taps
    }
    /// `φ(kT)` for `k = 0..L`.
    pub fn lags(&self) -> &[f64] {
        &self.lags
    }
    pub fn phi(&self) -> &RMat {
        &self.phi
    }
    /// Convolution matrix `C`, `(L + P - 1) × L`.
    pub fn conv(&self) -> &RMat {
        &self.conv
    }
    /// `Ψ = CᵀC`.
    pub fn psi(&self) -> &RMat {
        &self.psi
    }
    /// Eigenvectors of `Φ`, columns ordered by descending eigenvalue.
    pub fn u(&self) -> &RMat {
        &self.u
    }
    pub fn lambda(&self) -> &DVector<f64> {
        &self.lambda
    }
}

/// Builds `Φ`, its eigendecomposition, `C` and `Ψ`.
pub fn build_waveform(cfg: &PulseConfig, frame_len: usize) -> Result<FtnWaveform> {
    cfg.validate()?;
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame length must be at least 1".into()));
    }
    let l = frame_len;
    let lags: Vec<f64> = (0..l as i64).map(|k| pulse_autocorr(k, cfg)).collect();
    let phi = DMatrix::from_fn(l, l, |i, j| lags[i.abs_diff(j)]);

    let eig = SymmetricEigen::new(phi.clone());
    let lmax = eig.eigenvalues.max().max(1.0);
    let lmin = eig.eigenvalues.min();
    if lmin < -1e-8 * lmax {
        return Err(Error::Numerical(format!(
            "autocorrelation matrix has eigenvalue {lmin:.3e}; the pulse autocorrelation is broken"
        )));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = DMatrix::zeros(l, l);
    let mut lambda = DVector::zeros(l);
    for (dst, &src) in order.iter().enumerate() {
        lambda[dst] = eig.eigenvalues[src].max(0.0);
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        u.set_column(dst, &col);
    }

    let p = cfg.n_taps();
    let center = (p - 1) as f64 / 2.0;
    let t = cfg.tau * cfg.t0;
    let mut taps = DVector::from_fn(p, |i, _| rrc_value((i as f64 - center) * t, cfg));
    let target = match cfg.tap_energy {
        TapEnergy::Proportional => cfg.tau,
        TapEnergy::RateScaled => 1.0 / cfg.tau,
        TapEnergy::Unit => 1.0,
    };
    taps *= (target / taps.norm_squared()).sqrt();

    let mut conv = DMatrix::zeros(l + p - 1, l);
    for i in 0..l {
        for q in 0..p {
            conv[(i + q, i)] = taps[q];
        }
    }
    let psi = conv.tr_mul(&conv);

    Ok(FtnWaveform { config: *cfg, frame_len, taps, lags, phi, conv, psi, u, lambda })
}
