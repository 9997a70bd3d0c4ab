//! Successive convex approximation for the MMSE-minimizing CI precoder.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Scenario, SymbolFrame};
use crate::conic::{assemble_subproblem, solve_socp, CiBallSolver, ConicSolution, ConicStatus};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, mul_cr, trace_inverse_shifted, CMat, C64};
use crate::precoder::{ci_residuals, mmse_gradient, mmse_objective, SensingParams};
use crate::waveform::FtnWaveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineSearch {
    #[default]
    GoldenSection,
    FixedGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemSolver {
    /// Active-set method over the sector coordinates.
    #[default]
    Structured,
    /// Generic interior-point SOCP.
    InteriorPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaConfig {
    pub epsilon: f64,
    pub i_max: usize,
    pub line_search: LineSearch,
    pub ls_tol: f64,
    pub subproblem_tol: f64,
    pub solver: SubproblemSolver,
    /// Seed of the random point `X₋₁` that defines the first linearization.
    pub init_seed: u64,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            i_max: 100,
            line_search: LineSearch::GoldenSection,
            ls_tol: 1e-6,
            subproblem_tol: 1e-8,
            solver: SubproblemSolver::Structured,
            init_seed: 0,
        }
    }
}

impl ScaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.i_max < 1 {
            return Err(Error::InvalidParameter("i_max must be at least 1".into()));
        }
        if !(self.ls_tol > 0.0 && self.ls_tol < 0.1) {
            return Err(Error::InvalidParameter("ls_tol must be in (0, 0.1)".into()));
        }
        if !(self.subproblem_tol > 0.0) {
            return Err(Error::InvalidParameter("subproblem_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// Largest CI row residual (≤ 0 when feasible).
    pub max_ci_residual: f64,
    /// `E - ‖XCᵀ‖_F²`.
    pub energy_slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub f: f64,
    pub mmse: f64,
    pub t: f64,
    /// `g(X*) = Re tr(∇fᴴ(X* - X_i))`.
    pub subproblem_value: f64,
    pub max_ci_residual: f64,
    pub energy_slack: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone)]
pub struct PrecodeSolution {
    pub x: CMat,
    /// `f` at `X₀, X₁, …`.
    pub f_trace: Vec<f64>,
    pub mmse_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub feasibility: Feasibility,
    pub trace: Vec<TraceRow>,
}

impl PrecodeSolution {
    pub fn final_f(&self) -> f64 {
        *self.f_trace.last().expect("trace holds X₀")
    }

    pub fn final_mmse(&self) -> f64 {
        *self.mmse_trace.last().expect("trace holds X₀")
    }

    /// Writes the per-iteration trace as CSV.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves the linearized problem with the configured solver.
pub struct Subproblem<'a> {
    structured: CiBallSolver,
    waveform: &'a FtnWaveform,
    cfg: ScaConfig,
}

impl<'a> Subproblem<'a> {
    pub fn new(scenario: &Scenario, frame: &SymbolFrame, waveform: &'a FtnWaveform, cfg: &ScaConfig) -> Result<Self> {
        let mut structured = CiBallSolver::new(
            &scenario.h_c,
            frame,
            waveform,
            scenario.sigma2_c,
            &scenario.gamma,
            scenario.energy,
        )?;
        structured.tol = cfg.subproblem_tol;
        if !structured.is_feasible() {
            return Err(Error::Infeasible(format!(
                "the CI constraints need frame energy {:.6e} but the budget is {:.6e}",
                structured.min_energy(),
                scenario.energy
            )));
        }
        Ok(Self { structured, waveform, cfg: *cfg })
    }

    pub fn solve(&mut self, grad: &CMat, x_i: &CMat) -> Result<ConicSolution> {
        let sol = match self.cfg.solver {
            SubproblemSolver::Structured => self.structured.solve(grad, x_i)?,
            SubproblemSolver::InteriorPoint => {
                let prob = assemble_subproblem(
                    grad,
                    x_i,
                    self.structured.ci_system(),
                    self.waveform,
                    self.structured.energy(),
                )?;
                solve_socp(&prob, self.cfg.subproblem_tol)?
            }
        };
        match sol.status {
            ConicStatus::Optimal => Ok(sol),
            ConicStatus::Infeasible => Err(Error::Infeasible("subproblem has no CI-feasible point".into())),
            ConicStatus::MaxIter => Err(Error::SolverFailure("subproblem solver hit its iteration cap".into())),
        }
    }
}

/// Draws `X₋₁` and solves the subproblem linearized there.
pub fn initialize(
    scenario: &Scenario,
    sub: &mut Subproblem,
    params: &SensingParams,
    cfg: &ScaConfig,
) -> Result<(CMat, ConicSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let var = scenario.energy / (scenario.n_tx * scenario.frame_len) as f64;
    let x_prev = complex_gaussian(&mut rng, scenario.n_tx, scenario.frame_len, var);
    let grad = mmse_gradient(&x_prev, params)?;
    let sol = sub.solve(&grad, &x_prev)?;
    Ok((sol.x.clone(), sol))
}

/// `h(t) = f((1 - t)X_i + tX*)` through the quadratic `M(t) = M₀ + tM₁ + t²M₂`.
struct Segment {
    m0: CMat,
    m1: CMat,
    m2: CMat,
    rho: f64,
}

impl Segment {
    fn new(x_i: &CMat, x_star: &CMat, params: &SensingParams) -> Self {
        let d = x_star - x_i;
        let xp = mul_cr(x_i, &params.psi);
        let dp = mul_cr(&d, &params.psi);
        let cross = &xp * d.adjoint();
        Self {
            m0: &xp * x_i.adjoint(),
            m1: &cross + cross.adjoint(),
            m2: &dp * d.adjoint(),
            rho: params.rho,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let m = &self.m0 + &self.m1 * C64::new(t, 0.0) + &self.m2 * C64::new(t * t, 0.0);
        trace_inverse_shifted(&m, self.rho).unwrap_or(f64::INFINITY)
    }
}

fn golden(h: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut hc = h(c);
    let mut hd = h(d);
    while b - a > tol {
        if hc <= hd {
            b = d;
            d = c;
            hd = hc;
            c = b - r * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + r * (b - a);
            hd = h(d);
        }
    }
    if hc <= hd {
        (c, hc)
    } else {
        (d, hd)
    }
}

/// Step `t ∈ [0, 1]` minimizing `f((1 - t)X_i + tX*)`; returns `(t, h(t))`.
pub fn line_search(x_i: &CMat, x_star: &CMat, params: &SensingParams, kind: LineSearch, ls_tol: f64) -> (f64, f64) {
    let seg = Segment::new(x_i, x_star, params);
    let h = |t: f64| seg.eval(t);
    let n_grid = match kind {
        LineSearch::GoldenSection => 33,
        LineSearch::FixedGrid => 101,
    };
    let grid: Vec<(f64, f64)> = (0..n_grid)
        .map(|i| {
            let t = i as f64 / (n_grid - 1) as f64;
            (t, h(t))
        })
        .collect();
    let (gi, &(mut best_t, mut best_h)) =
        grid.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).expect("grid is not empty");
    if kind == LineSearch::FixedGrid {
        return (best_t, best_h);
    }
    let (t, v) = golden(&h, 0.0, 1.0, ls_tol);
    if v < best_h {
        return (t, v);
    }
    // the grid found a better basin: refine inside its bracket
    let lo = grid[gi.saturating_sub(1)].0;
    let hi = grid[(gi + 1).min(n_grid - 1)].0;
    let (t, v) = golden(&h, lo, hi, ls_tol);
    if v < best_h {
        best_t = t;
        best_h = v;
    }
    (best_t, best_h)
}

pub fn sensing_params(scenario: &Scenario, waveform: &FtnWaveform) -> Result<SensingParams> {
    SensingParams::new(waveform.psi().clone(), scenario.sigma2_r, scenario.sigma2_h, scenario.n_rx)
}

fn feasibility(x: &CMat, sub: &Subproblem, scenario: &Scenario) -> Feasibility {
    let ci = sub.structured.ci_system();
    let energy = crate::conic::frame_energy(x, sub.waveform);
    Feasibility { max_ci_residual: ci_residuals(x, ci).max(), energy_slack: scenario.energy - energy }
}

/// Runs the SCA iteration from a random linearization point.
pub fn sca_solve(
    scenario: &Scenario,
    frame: &SymbolFrame,
    waveform: &FtnWaveform,
    cfg: &ScaConfig,
) -> Result<PrecodeSolution> {
    cfg.validate()?;
    if waveform.frame_len() != scenario.frame_len {
        return Err(Error::Dimension(format!(
            "waveform frame length {} but scenario frame length {}",
            waveform.frame_len(),
            scenario.frame_len
        )));
    }
    let params = sensing_params(scenario, waveform)?;
    let scale = params.mmse_scale();
    let mut sub = Subproblem::new(scenario, frame, waveform, cfg)?;
    let (mut x, init) = initialize(scenario, &mut sub, &params, cfg)?;

    let f0 = mmse_objective(&x, &params)?;
    let feas = feasibility(&x, &sub, scenario);
    let mut f_trace = vec![f0];
    let mut trace = vec![TraceRow {
        iteration: 0,
        f: f0,
        mmse: scale * f0,
        t: 1.0,
        subproblem_value: init.objective_value,
        max_ci_residual: feas.max_ci_residual,
        energy_slack: feas.energy_slack,
        duality_gap: init.duality_gap,
    }];
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;
    for i in 1..=cfg.i_max {
        let grad = mmse_gradient(&x, &params)?;
        let sol = sub.solve(&grad, &x)?;
        let (t, h_t) = line_search(&x, &sol.x, &params, cfg.line_search, cfg.ls_tol);
        let step = (&sol.x - &x) * C64::new(t, 0.0);
        let moved = step.norm_squared();
        x += step;
        iterations = i;
        let f = if t == 0.0 { *f_trace.last().expect("nonempty") } else { mmse_objective(&x, &params)? };
        log::trace!("sca iteration {i}: t = {t:.4}, f = {f:.10e} (h = {h_t:.10e}), step² = {moved:.3e}");
        f_trace.push(f);
        let feas = feasibility(&x, &sub, scenario);
        trace.push(TraceRow {
            iteration: i,
            f,
            mmse: scale * f,
            t,
            subproblem_value: sol.objective_value,
            max_ci_residual: feas.max_ci_residual,
            energy_slack: feas.energy_slack,
            duality_gap: sol.duality_gap,
        });
        if t == 0.0 || moved <= cfg.epsilon {
            termination = Termination::Converged;
            break;
        }
    }
    let feasibility = feasibility(&x, &sub, scenario);
    Ok(PrecodeSolution {
        x,
        mmse_trace: f_trace.iter().map(|f| scale * f).collect(),
        f_trace,
        iterations,
        termination,
        feasibility,
        trace,
    })
}
