//! Monte-Carlo harness for the convergence, constellation, throughput and
//! sensing-tradeoff experiments.
//!
//! Every trial draws its channel and symbols from a seed that depends on the
//! base seed, the experiment, `K`, `E` and the trial index, so all `(Γ, τ)`
//! points and both methods see the same channels within a trial.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{blp_solve, blp_transmit, BlpSolution};
use crate::channel::{
    comm_receive, detect_psk, gen_scenario, gen_symbols, gen_trm, matched_samples, mmse_estimate_trm, radar_receive,
    Scenario, SymbolFrame,
};
use crate::config::{ExperimentConfig, SweepConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat, C64};
use crate::precoder::{mmse_lower_bound, SensingParams};
use crate::sca::{sca_solve, PrecodeSolution, ScaConfig, Termination};
use crate::units::db_to_linear;
use crate::waveform::{build_waveform, FtnWaveform, PulseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Fig2, Experiment::Fig3, Experiment::Fig4, Experiment::Fig5];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
        }
    }

    pub fn sweep(self, cfg: &ExperimentConfig) -> &SweepConfig {
        cfg.sweep(self.as_str()).expect("every experiment has a sweep")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'; valid names are fig2, fig3, fig4, fig5")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FtnSlp,
    IsacBlp,
    LowerBound,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FtnSlp => "FTN-SLP",
            Method::IsacBlp => "ISAC-BLP",
            Method::LowerBound => "LowerBound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub tau: f64,
    pub gamma_db: f64,
    pub energy_dbm: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

/// `first 8 bytes of SHA-256(base ‖ tag ‖ 0 ‖ parts)` as little-endian.
pub fn derive_seed(base: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0u8]);
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed of trial `trial` of `exp` at `(K, E)`.
pub fn trial_seed(base: u64, exp: Experiment, n_users: usize, energy_dbm: f64, trial: usize) -> u64 {
    derive_seed(base, exp.as_str(), &[n_users as u64, energy_dbm.to_bits(), trial as u64])
}

fn stream(seed: u64, name: &str) -> u64 {
    derive_seed(seed, name, &[])
}

/// Everything drawn once per trial.
struct Trial {
    index: usize,
    seed: u64,
    frame: SymbolFrame,
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    exp: Experiment,
    sweep: &'a SweepConfig,
    energy: f64,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig, exp: Experiment) -> Result<Self> {
        cfg.validate()?;
        let sweep = exp.sweep(cfg);
        Ok(Self { cfg, exp, sweep, energy: db_to_linear(sweep.energy_dbm) })
    }

    fn trial(&self, index: usize) -> Result<Trial> {
        let seed = trial_seed(self.cfg.base_seed, self.exp, self.sweep.n_users, self.sweep.energy_dbm, index);
        let frame = gen_symbols(
            self.sweep.n_users,
            self.cfg.system.frame_len,
            self.cfg.system.mod_order,
            stream(seed, "symbols"),
        )?;
        Ok(Trial { index, seed, frame })
    }

    fn scenario(&self, trial: &Trial, gamma_db: f64) -> Result<Scenario> {
        gen_scenario(
            self.cfg.dims(self.sweep.n_users),
            self.cfg.variances(),
            vec![db_to_linear(gamma_db); self.sweep.n_users],
            self.energy,
            stream(trial.seed, "channel"),
        )
    }

    fn waveform(&self, tau: f64) -> Result<FtnWaveform> {
        build_waveform(&PulseConfig { tau, ..self.cfg.pulse }, self.cfg.system.frame_len)
    }

    fn sca_config(&self, trial: &Trial) -> ScaConfig {
        ScaConfig { init_seed: derive_seed(trial.seed, "init", &[self.cfg.sca.init_seed]), ..self.cfg.sca }
    }

    fn row(&self, method: Method, tau: f64, gamma_db: f64, trial: &Trial, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.exp.as_str().into(),
            method: method.as_str().into(),
            tau,
            gamma_db,
            energy_dbm: self.sweep.energy_dbm,
            k: self.sweep.n_users,
            trial: trial.index,
            metric: metric.into(),
            value,
            seed: trial.seed,
        }
    }

    fn comm_noise(&self, trial: &Trial) -> Option<u64> {
        (!self.sweep.noiseless).then(|| stream(trial.seed, "comm_noise"))
    }

    /// `σ_R² N_r f_min(E)` for this sweep.
    fn lower_bound(&self) -> Result<f64> {
        let params = self.sensing_identity()?;
        Ok(params.mmse_scale() * mmse_lower_bound(self.energy, &params, self.cfg.system.n_tx).0)
    }

    fn sensing_identity(&self) -> Result<SensingParams> {
        let v = self.cfg.variances();
        let l = self.cfg.system.frame_len;
        SensingParams::new(RMat::identity(l, l), v.sigma2_r, v.sigma2_h, self.cfg.system.n_rx)
    }

    fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

fn infeasible_in(trial: &Trial, e: Error) -> Error {
    match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("trial {} (seed {}): {msg}", trial.index, trial.seed)),
        other => other,
    }
}

/// Collects per-job results in job order; the first error wins.
fn ordered<T>(results: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn slp_rows(r: &Runner, tau: f64, gamma_db: f64, trial: &Trial, sol: &PrecodeSolution) -> Vec<ResultRow> {
    let l = r.cfg.system.frame_len as f64;
    let m = |name: &str, v: f64| r.row(Method::FtnSlp, tau, gamma_db, trial, name, v);
    vec![
        m("mmse", sol.final_mmse()),
        m("mmse_per_symbol", sol.final_mmse() / l),
        m("iterations", sol.iterations as f64),
        m("converged", (sol.termination == Termination::Converged) as u8 as f64),
        m("max_ci_residual", sol.feasibility.max_ci_residual),
    ]
}

fn blp_rows(r: &Runner, gamma_db: f64, trial: &Trial, sol: &BlpSolution) -> Vec<ResultRow> {
    let m = |name: &str, v: f64| r.row(Method::IsacBlp, 1.0, gamma_db, trial, name, v);
    let min_ratio = sol.sinr.iter().zip(&sol.gamma).map(|(s, g)| s / g).fold(f64::INFINITY, f64::min);
    vec![
        m("mmse_per_symbol", sol.mmse),
        m("mmse_frame", sol.mmse_frame),
        m("sdr_value", sol.sdr_value),
        m("min_sinr_ratio", min_ratio),
        m("flagged", sol.flagged as u8 as f64),
    ]
}

fn lower_bound_rows(r: &Runner, tau: f64, gamma_db: f64, trial: &Trial, lb: f64) -> Vec<ResultRow> {
    let l = r.cfg.system.frame_len as f64;
    vec![
        r.row(Method::LowerBound, tau, gamma_db, trial, "mmse", lb),
        r.row(Method::LowerBound, tau, gamma_db, trial, "mmse_per_symbol", lb / l),
    ]
}

/// Convergence traces at one `(Γ, τ)`: the SCA MMSE per iteration (padded
/// with the final value to the longest trace), the baseline and the bound.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let r = Runner::new(cfg, Experiment::Fig2)?;
    let gamma_db = r.sweep.gamma_db[0];
    let tau = r.sweep.tau[0];
    let wf = r.waveform(tau)?;
    let lb = r.lower_bound()?;
    let results: Vec<Result<(Vec<f64>, Vec<ResultRow>)>> = r.with_pool(|| {
        (0..r.sweep.trials)
            .into_par_iter()
            .map(|i| {
                let trial = r.trial(i)?;
                let sc = r.scenario(&trial, gamma_db)?;
                let sol = sca_solve(&sc, &trial.frame, &wf, &r.sca_config(&trial)).map_err(|e| infeasible_in(&trial, e))?;
                log::debug!("fig2 trial {i}: {} iterations, MMSE {:.6e}", sol.iterations, sol.final_mmse());
                let mut rows = slp_rows(&r, tau, gamma_db, &trial, &sol);
                if r.sweep.blp {
                    let b = blp_solve(&sc, cfg.system.frame_len, &cfg.baseline).map_err(|e| infeasible_in(&trial, e))?;
                    rows.extend(blp_rows(&r, gamma_db, &trial, &b));
                }
                rows.extend(lower_bound_rows(&r, tau, gamma_db, &trial, lb));
                Ok((sol.mmse_trace, rows))
            })
            .collect()
    })?;
    let mut done = Vec::with_capacity(results.len());
    for res in results {
        done.push(res?);
    }
    let len = done.iter().map(|(t, _)| t.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for (i, (trace, rows)) in done.into_iter().enumerate() {
        let trial = r.trial(i)?;
        for it in 0..len {
            let v = trace.get(it).or(trace.last()).copied().unwrap_or(f64::NAN);
            out.push(r.row(Method::FtnSlp, tau, gamma_db, &trial, &format!("mmse_iter_{it:03}"), v));
        }
        out.extend(rows);
    }
    Ok(out)
}

/// One received sample rotated into the first decision sector and scaled by
/// its noise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationPoint {
    pub method: String,
    pub trial: usize,
    pub user: usize,
    pub sample: usize,
    pub re: f64,
    pub im: f64,
    pub noiseless_re: f64,
    pub noiseless_im: f64,
}

/// `conj(s)·y / σ` elementwise.
pub fn align(y: &CMat, frame: &SymbolFrame, sigma: &[f64]) -> CMat {
    CMat::from_fn(y.nrows(), y.ncols(), |k, l| y[(k, l)] * frame.s[(k, l)].conj() / C64::new(sigma[l], 0.0))
}

/// `(Re z - √Γ) tanθ - |Im z|` for an aligned point; nonnegative inside the
/// constructive region. BPSK has no angular limit.
pub fn ci_margin(z: C64, gamma: f64, mod_order: usize) -> f64 {
    if mod_order == 2 {
        z.re - gamma.sqrt()
    } else {
        let tan = (std::f64::consts::PI / mod_order as f64).tan();
        (z.re - gamma.sqrt()) * tan - z.im.abs()
    }
}

fn points(method: Method, trial: usize, noisy: &CMat, clean: &CMat) -> Vec<ConstellationPoint> {
    let mut out = Vec::with_capacity(noisy.len());
    for k in 0..noisy.nrows() {
        for l in 0..noisy.ncols() {
            out.push(ConstellationPoint {
                method: method.as_str().into(),
                trial,
                user: k,
                sample: l,
                re: noisy[(k, l)].re,
                im: noisy[(k, l)].im,
                noiseless_re: clean[(k, l)].re,
                noiseless_im: clean[(k, l)].im,
            });
        }
    }
    out
}

fn mean_re(z: &CMat) -> f64 {
    z.iter().map(|v| v.re).sum::<f64>() / z.len() as f64
}

pub struct Constellation {
    pub rows: Vec<ResultRow>,
    pub points: Vec<ConstellationPoint>,
}

/// Received constellations of both precoders. SLP samples are the whitened
/// outputs at τ; the baseline runs at τ = 1 and is read from the matched
/// filter samples.
pub fn run_constellation(cfg: &ExperimentConfig) -> Result<Constellation> {
    let r = Runner::new(cfg, Experiment::Fig3)?;
    let gamma_db = r.sweep.gamma_db[0];
    let gamma = db_to_linear(gamma_db);
    let tau = r.sweep.tau[0];
    let wf = r.waveform(tau)?;
    let wf1 = r.waveform(1.0)?;
    let sigma2_c = cfg.variances().sigma2_c;
    let sigma_slp: Vec<f64> = wf.lambda().iter().map(|lam| (sigma2_c * lam).sqrt()).collect();
    let sigma_blp: Vec<f64> = (0..cfg.system.frame_len).map(|l| (sigma2_c * wf1.phi()[(l, l)]).sqrt()).collect();
    let results: Vec<Result<(Vec<ResultRow>, Vec<ConstellationPoint>)>> = r.with_pool(|| {
        (0..r.sweep.trials)
            .into_par_iter()
            .map(|i| {
                let trial = r.trial(i)?;
                let sc = r.scenario(&trial, gamma_db)?;
                let noise = r.comm_noise(&trial);
                let sol = sca_solve(&sc, &trial.frame, &wf, &r.sca_config(&trial)).map_err(|e| infeasible_in(&trial, e))?;
                let clean = align(&comm_receive(&sc, &wf, &sol.x, None)?, &trial.frame, &sigma_slp);
                let noisy = align(&comm_receive(&sc, &wf, &sol.x, noise)?, &trial.frame, &sigma_slp);
                let margins: Vec<f64> = clean.iter().map(|z| ci_margin(*z, gamma, cfg.system.mod_order)).collect();
                let tol = 1e-6 * (1.0 + gamma.sqrt());
                let m = |name: &str, v: f64| r.row(Method::FtnSlp, tau, gamma_db, &trial, name, v);
                let mut rows = vec![
                    m("mean_aligned_re", mean_re(&noisy)),
                    m("mean_aligned_re_noiseless", mean_re(&clean)),
                    m("ci_violations_noiseless", margins.iter().filter(|&&v| v < -tol).count() as f64),
                    m("min_ci_margin_noiseless", margins.iter().copied().fold(f64::INFINITY, f64::min)),
                ];
                let mut pts = points(Method::FtnSlp, i, &noisy, &clean);
                if r.sweep.blp {
                    let b = blp_solve(&sc, cfg.system.frame_len, &cfg.baseline).map_err(|e| infeasible_in(&trial, e))?;
                    let x = blp_transmit(&b, &trial.frame, stream(trial.seed, "aux"))?;
                    let rx = |n| -> Result<CMat> {
                        Ok(align(&matched_samples(&comm_receive(&sc, &wf1, &x, n)?, &wf1), &trial.frame, &sigma_blp))
                    };
                    let (clean, noisy) = (rx(None)?, rx(noise)?);
                    let m = |name: &str, v: f64| r.row(Method::IsacBlp, 1.0, gamma_db, &trial, name, v);
                    rows.push(m("mean_aligned_re", mean_re(&noisy)));
                    rows.push(m("mean_aligned_re_noiseless", mean_re(&clean)));
                    pts.extend(points(Method::IsacBlp, i, &noisy, &clean));
                }
                Ok((rows, pts))
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for res in results {
        let (r, p) = res?;
        rows.extend(r);
        points.extend(p);
    }
    Ok(Constellation { rows, points })
}

/// Correctly detected bits, per bit or per whole user frame.
fn recovered_bits(y: &CMat, frame: &SymbolFrame, frame_success: bool) -> Result<usize> {
    let det = detect_psk(y, frame)?;
    let b = frame.bits_per_symbol() as usize;
    let total = frame.s.len() * b;
    if !frame_success {
        return Ok(total - det.bit_errors);
    }
    let l = frame.s.ncols();
    Ok((0..frame.s.nrows())
        .filter(|&k| (0..l).all(|j| det.index[(k, j)] == frame.index[(k, j)]))
        .count()
        * l
        * b)
}

/// Bits per `T₀`: `N_b / (τ L)`.
pub fn throughput(bits: usize, tau: f64, frame_len: usize) -> f64 {
    bits as f64 / (tau * frame_len as f64)
}

enum Job {
    Slp { trial: usize, gamma_db: f64, tau: f64 },
    Blp { trial: usize, gamma_db: f64 },
}

fn jobs(sweep: &SweepConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for trial in 0..sweep.trials {
        for &gamma_db in &sweep.gamma_db {
            for &tau in &sweep.tau {
                out.push(Job::Slp { trial, gamma_db, tau });
            }
            if sweep.blp {
                out.push(Job::Blp { trial, gamma_db });
            }
        }
    }
    out
}

fn infeasible_row(r: &Runner, method: Method, tau: f64, gamma_db: f64, trial: &Trial) -> Vec<ResultRow> {
    vec![r.row(method, tau, gamma_db, trial, "infeasible", 1.0)]
}

fn sweep_waveforms(r: &Runner) -> Result<HashMap<u64, FtnWaveform>> {
    let mut wfs = HashMap::new();
    for &tau in r.sweep.tau.iter().chain([1.0].iter()) {
        wfs.insert(tau.to_bits(), r.waveform(tau)?);
    }
    Ok(wfs)
}

fn run_jobs(
    r: &Runner,
    slp: impl Fn(&Trial, &Scenario, f64, f64, &FtnWaveform) -> Result<Vec<ResultRow>> + Sync,
    blp: impl Fn(&Trial, &Scenario, f64, &FtnWaveform) -> Result<Vec<ResultRow>> + Sync,
) -> Result<Vec<ResultRow>> {
    let wfs = sweep_waveforms(r)?;
    let all = jobs(r.sweep);
    let results: Vec<Result<Vec<ResultRow>>> = r.with_pool(|| {
        all.par_iter()
            .map(|job| {
                let (i, gamma_db, method, tau) = match *job {
                    Job::Slp { trial, gamma_db, tau } => (trial, gamma_db, Method::FtnSlp, tau),
                    Job::Blp { trial, gamma_db } => (trial, gamma_db, Method::IsacBlp, 1.0),
                };
                let trial = r.trial(i)?;
                let sc = r.scenario(&trial, gamma_db)?;
                let wf = &wfs[&tau.to_bits()];
                let res = match method {
                    Method::FtnSlp => slp(&trial, &sc, gamma_db, tau, wf),
                    _ => blp(&trial, &sc, gamma_db, wf),
                };
                match res {
                    Err(Error::Infeasible(msg)) => {
                        log::info!(
                            "{} {} trial {i} (seed {}) at gamma {gamma_db} dB, tau {tau}: infeasible: {msg}",
                            r.exp,
                            method.as_str(),
                            trial.seed
                        );
                        Ok(infeasible_row(r, method, tau, gamma_db, &trial))
                    }
                    Err(e @ (Error::SolverFailure(_) | Error::Numerical(_))) => {
                        log::warn!(
                            "{} {} trial {i} (seed {}) at gamma {gamma_db} dB, tau {tau}: {e}",
                            r.exp,
                            method.as_str(),
                            trial.seed
                        );
                        Ok(vec![r.row(method, tau, gamma_db, &trial, "solver_failure", 1.0)])
                    }
                    other => other,
                }
            })
            .collect()
    })?;
    ordered(results)
}

/// Throughput against Γ for each τ and for the baseline at τ = 1.
pub fn run_throughput(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let r = Runner::new(cfg, Experiment::Fig4)?;
    let l = cfg.system.frame_len;
    let fs = r.sweep.frame_success;
    run_jobs(
        &r,
        |trial, sc, g, tau, wf| {
            let sol = sca_solve(sc, &trial.frame, wf, &r.sca_config(trial))?;
            let y = comm_receive(sc, wf, &sol.x, r.comm_noise(trial))?;
            let bits = recovered_bits(&y, &trial.frame, fs)?;
            let m = |name: &str, v: f64| r.row(Method::FtnSlp, tau, g, trial, name, v);
            Ok(vec![
                m("throughput", throughput(bits, tau, l)),
                m("recovered_bits", bits as f64),
                m("mmse", sol.final_mmse()),
                m("iterations", sol.iterations as f64),
            ])
        },
        |trial, sc, g, wf| {
            let b = blp_solve(sc, l, &cfg.baseline)?;
            let x = blp_transmit(&b, &trial.frame, stream(trial.seed, "aux"))?;
            let y = matched_samples(&comm_receive(sc, wf, &x, r.comm_noise(trial))?, wf);
            let bits = recovered_bits(&y, &trial.frame, fs)?;
            let m = |name: &str, v: f64| r.row(Method::IsacBlp, 1.0, g, trial, name, v);
            Ok(vec![
                m("throughput", throughput(bits, 1.0, l)),
                m("recovered_bits", bits as f64),
                m("flagged", b.flagged as u8 as f64),
            ])
        },
    )
}

/// Sensing MMSE against Γ for each τ, the baseline and the bound.
pub fn run_mmse_tradeoff(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let r = Runner::new(cfg, Experiment::Fig5)?;
    let lb = r.lower_bound()?;
    let l = cfg.system.frame_len;
    let mut rows = run_jobs(
        &r,
        |trial, sc, g, tau, wf| {
            let sol = sca_solve(sc, &trial.frame, wf, &r.sca_config(trial))?;
            let mut rows = slp_rows(&r, tau, g, trial, &sol);
            if r.sweep.empirical_trials > 0 {
                let emp = empirical_mmse(sc, &sol.x, wf, r.sweep.empirical_trials, stream(trial.seed, "radar"))?;
                rows.push(r.row(Method::FtnSlp, tau, g, trial, "mmse_empirical", emp));
            }
            Ok(rows)
        },
        |trial, sc, g, _| {
            let b = blp_solve(sc, l, &cfg.baseline)?;
            Ok(blp_rows(&r, g, trial, &b))
        },
    )?;
    let first = r.trial(0)?;
    for &gamma_db in &r.sweep.gamma_db {
        for &tau in &r.sweep.tau {
            rows.extend(lower_bound_rows(&r, tau, gamma_db, &first, lb));
        }
    }
    Ok(rows)
}

/// Mean `‖H_R - Ĥ_R‖²` over `draws` target and noise realizations.
pub fn empirical_mmse(sc: &Scenario, x: &CMat, wf: &FtnWaveform, draws: usize, seed: u64) -> Result<f64> {
    let mut acc = 0.0;
    for d in 0..draws {
        let h_r = gen_trm(sc, derive_seed(seed, "trm", &[d as u64]));
        let y = radar_receive(&h_r, x, wf, sc.sigma2_r, Some(derive_seed(seed, "noise", &[d as u64])))?;
        let (est, _) = mmse_estimate_trm(&y, x, wf, sc.sigma2_r, sc.sigma2_h)?;
        acc += (est - h_r).norm_squared();
    }
    Ok(acc / draws as f64)
}

/// Aggregate over trials of one metric at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub experiment: String,
    pub method: String,
    pub tau: f64,
    pub gamma_db: f64,
    pub energy_dbm: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Groups rows by everything but trial and seed, in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryEntry> {
    type Key = (String, String, u64, u64, u64, usize, String);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut groups: Vec<(&ResultRow, Vec<f64>)> = Vec::new();
    for row in rows {
        let key = (
            row.experiment.clone(),
            row.method.clone(),
            row.tau.to_bits(),
            row.gamma_db.to_bits(),
            row.energy_dbm.to_bits(),
            row.k,
            row.metric.clone(),
        );
        let i = *index.entry(key).or_insert_with(|| {
            groups.push((row, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(row.value);
    }
    groups
        .into_iter()
        .map(|(row, mut vals)| {
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = if n > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            vals.sort_by(f64::total_cmp);
            SummaryEntry {
                experiment: row.experiment.clone(),
                method: row.method.clone(),
                tau: row.tau,
                gamma_db: row.gamma_db,
                energy_dbm: row.energy_dbm,
                k: row.k,
                metric: row.metric.clone(),
                count: n,
                mean,
                std: var.sqrt(),
                p05: percentile(&vals, 0.05),
                p25: percentile(&vals, 0.25),
                p50: percentile(&vals, 0.5),
                p75: percentile(&vals, 0.75),
                p95: percentile(&vals, 0.95),
            }
        })
        .collect()
}

/// Mean of `metric` for `method` at `(τ, Γ)` over trials; `None` if absent.
pub fn point_mean(rows: &[ResultRow], method: Method, tau: f64, gamma_db: f64, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method.as_str() && r.tau == tau && r.gamma_db == gamma_db && r.metric == metric)
        .map(|r| r.value)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_points<W: Write>(points: &[ConstellationPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Output of one experiment run.
pub struct RunOutput {
    pub experiment: Experiment,
    pub rows: Vec<ResultRow>,
    pub points: Vec<ConstellationPoint>,
}

impl RunOutput {
    /// File names written by [`RunOutput::write`].
    pub fn file_names(exp: Experiment) -> Vec<String> {
        let mut names = vec![format!("{exp}.csv")];
        if exp == Experiment::Fig3 {
            names.push("fig3_points.csv".into());
        }
        names.push("summary.json".into());
        names
    }

    pub fn summary(&self) -> Vec<SummaryEntry> {
        summarize(&self.rows)
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let names = Self::file_names(self.experiment);
        write_rows(&self.rows, std::fs::File::create(dir.join(&names[0]))?)?;
        if self.experiment == Experiment::Fig3 {
            write_points(&self.points, std::fs::File::create(dir.join("fig3_points.csv"))?)?;
        }
        let f = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(f, &self.summary())?;
        Ok(names)
    }
}

pub fn run(exp: Experiment, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (rows, points) = match exp {
        Experiment::Fig2 => (run_convergence(cfg)?, Vec::new()),
        Experiment::Fig3 => {
            let c = run_constellation(cfg)?;
            (c.rows, c.points)
        }
        Experiment::Fig4 => (run_throughput(cfg)?, Vec::new()),
        Experiment::Fig5 => (run_mmse_tradeoff(cfg)?, Vec::new()),
    };
    Ok(RunOutput { experiment: exp, rows, points })
}

/// Trial seeds of `exp` under `cfg`, in trial order.
pub fn seed_table(exp: Experiment, cfg: &ExperimentConfig) -> Vec<u64> {
    let sw = exp.sweep(cfg);
    (0..sw.trials).map(|i| trial_seed(cfg.base_seed, exp, sw.n_users, sw.energy_dbm, i)).collect()
}

/// Inputs of the single `solve` point.
pub struct SolveSetup {
    pub seed: u64,
    pub scenario: Scenario,
    pub frame: SymbolFrame,
    pub waveform: FtnWaveform,
    pub sca: ScaConfig,
    /// `σ_R² N_r f_min(E)`.
    pub lower_bound: f64,
}

/// Draws the `solve` point: τ from `pulse.tau`, the rest from `solve`.
pub fn solve_setup(cfg: &ExperimentConfig) -> Result<SolveSetup> {
    cfg.validate()?;
    let s = &cfg.solve;
    let seed = derive_seed(cfg.base_seed, "solve", &[s.n_users as u64, s.energy_dbm.to_bits(), s.trial as u64]);
    let energy = db_to_linear(s.energy_dbm);
    let scenario = gen_scenario(
        cfg.dims(s.n_users),
        cfg.variances(),
        vec![db_to_linear(s.gamma_db); s.n_users],
        energy,
        stream(seed, "channel"),
    )?;
    let frame = gen_symbols(s.n_users, cfg.system.frame_len, cfg.system.mod_order, stream(seed, "symbols"))?;
    let waveform = build_waveform(&cfg.pulse, cfg.system.frame_len)?;
    let sca = ScaConfig { init_seed: derive_seed(seed, "init", &[cfg.sca.init_seed]), ..cfg.sca };
    let v = cfg.variances();
    let l = cfg.system.frame_len;
    let params = SensingParams::new(RMat::identity(l, l), v.sigma2_r, v.sigma2_h, cfg.system.n_rx)?;
    let lower_bound = params.mmse_scale() * mmse_lower_bound(energy, &params, cfg.system.n_tx).0;
    Ok(SolveSetup { seed, scenario, frame, waveform, sca, lower_bound })
}
