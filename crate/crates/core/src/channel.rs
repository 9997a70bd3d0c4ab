//! Random scenarios, receive chains, PSK detection and TRM estimation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, mul_cr, to_complex, trace_inverse_shifted, CMat, C64};
use crate::waveform::FtnWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_users: usize,
    pub frame_len: usize,
}

/// Linear-scale variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variances {
    /// Communication noise σ_C².
    pub sigma2_c: f64,
    /// Radar noise σ_R².
    pub sigma2_r: f64,
    /// TRM prior σ_H².
    pub sigma2_h: f64,
    /// Per-entry variance of the communication channel.
    pub channel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_users: usize,
    pub frame_len: usize,
    #[serde(with = "cmat_serde")]
    pub h_c: CMat,
    pub sigma2_c: f64,
    pub sigma2_r: f64,
    pub sigma2_h: f64,
    pub gamma: Vec<f64>,
    pub energy: f64,
    pub seed: u64,
}

impl Scenario {
    /// `ρ = σ_R² / σ_H²`.
    pub fn rho(&self) -> f64 {
        self.sigma2_r / self.sigma2_h
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn gen_scenario(dims: Dims, vars: Variances, gamma: Vec<f64>, energy: f64, seed: u64) -> Result<Scenario> {
    if dims.n_users == 0 || dims.n_users >= dims.n_tx {
        return Err(Error::Dimension(format!(
            "need 1 <= K < N_t, got K = {} and N_t = {}",
            dims.n_users, dims.n_tx
        )));
    }
    if dims.n_rx == 0 || dims.frame_len == 0 {
        return Err(Error::Dimension("N_r and L must be at least 1".into()));
    }
    if gamma.len() != dims.n_users {
        return Err(Error::Dimension(format!("{} SINR targets for {} users", gamma.len(), dims.n_users)));
    }
    check_positive("sigma2_c", vars.sigma2_c)?;
    check_positive("sigma2_r", vars.sigma2_r)?;
    check_positive("sigma2_h", vars.sigma2_h)?;
    check_positive("channel variance", vars.channel)?;
    check_positive("energy", energy)?;
    for &g in &gamma {
        check_positive("gamma", g)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_c = complex_gaussian(&mut rng, dims.n_users, dims.n_tx, vars.channel);
    Ok(Scenario {
        n_tx: dims.n_tx,
        n_rx: dims.n_rx,
        n_users: dims.n_users,
        frame_len: dims.frame_len,
        h_c,
        sigma2_c: vars.sigma2_c,
        sigma2_r: vars.sigma2_r,
        sigma2_h: vars.sigma2_h,
        gamma,
        energy,
        seed,
    })
}

/// Target response matrix with i.i.d. CN(0, σ_H²) entries.
pub fn gen_trm(scenario: &Scenario, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    complex_gaussian(&mut rng, scenario.n_rx, scenario.n_tx, scenario.sigma2_h)
}

#[derive(Debug, Clone)]
pub struct SymbolFrame {
    pub s: CMat,
    pub index: DMatrix<usize>,
    pub mod_order: usize,
}

impl SymbolFrame {
    /// Half decision angle `π / M`.
    pub fn theta(&self) -> f64 {
        PI / self.mod_order as f64
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.mod_order.trailing_zeros()
    }
}

/// Constellation point of index `m`: phase `π/M + 2πm/M`.
pub fn psk_point(m: usize, order: usize) -> C64 {
    C64::from_polar(1.0, PI / order as f64 + 2.0 * PI * m as f64 / order as f64)
}

pub fn gen_symbols(n_users: usize, frame_len: usize, mod_order: usize, seed: u64) -> Result<SymbolFrame> {
    if ![2, 4, 8, 16].contains(&mod_order) {
        return Err(Error::UnsupportedModulation(mod_order));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index = DMatrix::from_fn(n_users, frame_len, |_, _| rng.random_range(0..mod_order));
    let s = index.map(|m| psk_point(m, mod_order));
    Ok(SymbolFrame { s, index, mod_order })
}

fn check_shape(name: &str, m: &CMat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Whitened communication samples `H_C X U Λ + N`, with row-noise entry `l`
/// of variance `σ_C² Λ_l`. `noise_seed = None` disables the noise.
pub fn comm_receive(scenario: &Scenario, waveform: &FtnWaveform, x: &CMat, noise_seed: Option<u64>) -> Result<CMat> {
    let l = waveform.frame_len();
    check_shape("X", x, scenario.n_tx, l)?;
    check_shape("H_C", &scenario.h_c, scenario.n_users, scenario.n_tx)?;
    let lam = waveform.lambda();
    let mut y = mul_cr(&(&scenario.h_c * x), waveform.u());
    for j in 0..l {
        y.column_mut(j).scale_mut(lam[j]);
    }
    if let Some(seed) = noise_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = complex_gaussian(&mut rng, scenario.n_users, l, scenario.sigma2_c);
        for j in 0..l {
            let sd = lam[j].sqrt();
            for k in 0..scenario.n_users {
                y[(k, j)] += n[(k, j)] * sd;
            }
        }
    }
    Ok(y)
}

/// Undoes the whitening rotation: `Y Uᵀ = H X Φ + noise`, the matched-filter samples.
pub fn matched_samples(y_c: &CMat, waveform: &FtnWaveform) -> CMat {
    mul_cr(y_c, &waveform.u().transpose())
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub index: DMatrix<usize>,
    pub bit_errors: usize,
    pub symbol_errors: usize,
}

fn gray(m: usize) -> usize {
    m ^ (m >> 1)
}

/// Index of the PSK sector containing `y`.
pub fn psk_decide(y: C64, order: usize) -> usize {
    let a = y.im.atan2(y.re).rem_euclid(2.0 * PI);
    ((a / (2.0 * PI / order as f64)).floor() as usize).min(order - 1)
}

pub fn detect_psk(y_c: &CMat, frame: &SymbolFrame) -> Result<Detection> {
    check_shape("received samples", y_c, frame.s.nrows(), frame.s.ncols())?;
    let m = frame.mod_order;
    let index = y_c.map(|v| psk_decide(v, m));
    let mut bit_errors = 0;
    let mut symbol_errors = 0;
    for (d, t) in index.iter().zip(frame.index.iter()) {
        if d != t {
            symbol_errors += 1;
            bit_errors += (gray(*d) ^ gray(*t)).count_ones() as usize;
        }
    }
    Ok(Detection { index, bit_errors, symbol_errors })
}

/// Radar echo `H_R X Cᵀ + N_R`.
pub fn radar_receive(
    h_r: &CMat,
    x: &CMat,
    waveform: &FtnWaveform,
    sigma2_r: f64,
    noise_seed: Option<u64>,
) -> Result<CMat> {
    if h_r.ncols() != x.nrows() || x.ncols() != waveform.frame_len() {
        return Err(Error::Dimension(format!(
            "H_R is {}x{}, X is {}x{}, frame length {}",
            h_r.nrows(),
            h_r.ncols(),
            x.nrows(),
            x.ncols(),
            waveform.frame_len()
        )));
    }
    let mut y = mul_cr(&(h_r * x), &waveform.conv().transpose());
    if let Some(seed) = noise_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        y += complex_gaussian(&mut rng, y.nrows(), y.ncols(), sigma2_r);
    }
    Ok(y)
}

/// Linear MMSE estimate of `H_R` from `Y_R` (zero prior mean) and the
/// theoretical MMSE `σ_R² N_r tr((ρI + XΨXᴴ)⁻¹)`.
pub fn mmse_estimate_trm(
    y_r: &CMat,
    x: &CMat,
    waveform: &FtnWaveform,
    sigma2_r: f64,
    sigma2_h: f64,
) -> Result<(CMat, f64)> {
    let n_t = x.nrows();
    let rows = waveform.conv().nrows();
    if x.ncols() != waveform.frame_len() || y_r.ncols() != rows {
        return Err(Error::Dimension(format!(
            "Y_R has {} columns and X {}, expected {rows} and {}",
            y_r.ncols(),
            x.ncols(),
            waveform.frame_len()
        )));
    }
    if !(sigma2_r > 0.0 && sigma2_h > 0.0) {
        return Err(Error::InvalidParameter("variances must be positive".into()));
    }
    let gram = mul_cr(x, waveform.psi()) * x.adjoint();
    let mut m = &gram / C64::new(sigma2_r, 0.0);
    for i in 0..n_t {
        m[(i, i)] += C64::new(1.0 / sigma2_h, 0.0);
    }
    // Ĥ M = σ_R⁻² Y_R C Xᴴ with M Hermitian
    let rhs = (y_r * to_complex(waveform.conv()) * x.adjoint()) / C64::new(sigma2_r, 0.0);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("posterior precision is not positive definite".into()))?;
    let est = chol.solve(&rhs.adjoint()).adjoint();
    let tr = trace_inverse_shifted(&gram, sigma2_r / sigma2_h)
        .ok_or_else(|| Error::SingularSystem("posterior covariance".into()))?;
    Ok((est, sigma2_r * y_r.nrows() as f64 * tr))
}

/// Writes a complex matrix as CSV with columns `row,col,re,im`.
pub fn export_matrix_csv<W: std::io::Write>(m: &CMat, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "re", "im"])?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            w.write_record([i.to_string(), j.to_string(), format!("{:e}", v.re), format!("{:e}", v.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) mod cmat_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::{CMat, C64};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        rows: usize,
        cols: usize,
        re: Vec<f64>,
        im: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.iter().map(|v| v.re).collect(),
            im: m.iter().map(|v| v.im).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.re.len() != r.rows * r.cols || r.im.len() != r.re.len() {
            return Err(serde::de::Error::custom("matrix entry count does not match its shape"));
        }
        Ok(CMat::from_iterator(r.rows, r.cols, r.re.iter().zip(&r.im).map(|(a, b)| C64::new(*a, *b))))
    }
}
