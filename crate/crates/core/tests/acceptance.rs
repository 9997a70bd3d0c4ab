//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria that fail are reported, not hidden; the process exits 0 so the
//! report always completes. Set `ACCEPTANCE_TRIALS=n` to cap the Monte-Carlo
//! trial counts for a quick look (the report then says so).

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use ftn_conic::{solve_sdp, IpmSettings, Row, SdpProblem, Status};
use ftn_isac::channel::{gen_scenario, gen_trm, mmse_estimate_trm, radar_receive, Dims, Variances};
use ftn_isac::config::ExperimentConfig;
use ftn_isac::experiments::{point_mean, run, solve_setup, Experiment, Method, ResultRow, RunOutput};
use ftn_isac::linalg::{complex_gaussian, re_inner, RMat, C64};
use ftn_isac::precoder::{mmse_gradient, mmse_lower_bound, mmse_objective, SensingParams};
use ftn_isac::sca::sca_solve;
use ftn_isac::units::db_to_linear;
use ftn_isac::waveform::{build_waveform, PulseConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn line(&mut self, n: usize, name: &str, ok: bool, detail: String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} criterion {n:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn info(msg: String) {
    println!("     {msg}");
}

fn raised_cosine(x: f64, alpha: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let sinc = (PI * x).sin() / (PI * x);
    let d = 1.0 - (2.0 * alpha * x).powi(2);
    if d.abs() < 1e-10 {
        let y = 1.0 / (2.0 * alpha);
        return PI / 4.0 * (PI * y).sin() / (PI * y);
    }
    sinc * (PI * alpha * x).cos() / d
}

fn waveform_oracle(rep: &mut Report) {
    let t = Instant::now();
    let l = 30;
    let nyq = build_waveform(&PulseConfig { tau: 1.0, alpha: 0.3, span: 8, ..PulseConfig::default() }, l).unwrap();
    let dev = (nyq.phi() - RMat::identity(l, l)).amax();
    let ftn = build_waveform(&PulseConfig { tau: 0.8, alpha: 0.3, span: 8, ..PulseConfig::default() }, l).unwrap();
    let mut rc = 0.0f64;
    for i in 0..l {
        for j in 0..l {
            let x = (i as f64 - j as f64) * 0.8;
            rc = rc.max((ftn.phi()[(i, j)] - raised_cosine(x, 0.3)).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    rep.line(
        1,
        "waveform oracle",
        dev <= 1e-3 && rc <= 1e-3 && secs < 1.0,
        format!("tau=1 max|Phi-I| = {dev:.3e}, tau=0.8 max|Phi-RC| = {rc:.3e} (limit 1e-3), {secs:.2}s"),
    );
    let long = build_waveform(&PulseConfig { tau: 0.8, alpha: 0.3, span: 32, ..PulseConfig::default() }, l).unwrap();
    let mut rc32 = 0.0f64;
    for i in 0..l {
        for j in 0..l {
            rc32 = rc32.max((long.phi()[(i, j)] - raised_cosine((i as f64 - j as f64) * 0.8, 0.3)).abs());
        }
    }
    info(format!("span 8 truncates the pulse tails; with span 32 the tau=0.8 deviation is {rc32:.3e}"));
}

fn gradient_check(rep: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let n_t = rng.random_range(1..=8);
        let l = rng.random_range(2..=12);
        let tau = [0.7, 0.8, 0.9, 1.0][inst % 4];
        let wf = build_waveform(&PulseConfig { tau, ..PulseConfig::default() }, l).unwrap();
        let p = SensingParams::new(wf.psi().clone(), 1.0, 100.0, 20).unwrap();
        let var = rng.random_range(0.1..4.0);
        let x = complex_gaussian(&mut rng, n_t, l, var);
        let d = complex_gaussian(&mut rng, n_t, l, 1.0);
        let an = re_inner(&mmse_gradient(&x, &p).unwrap(), &d);
        // fourth-order central stencil: with N_t > L the objective carries a
        // large constant and a second-order difference drowns in rounding
        let h = 1e-3;
        let f = |s: f64| mmse_objective(&(&x + &d * C64::new(s, 0.0)), &p).unwrap();
        let fd = (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
        worst = worst.max((fd - an).abs() / an.abs().max(1e-12));
    }
    let secs = t.elapsed().as_secs_f64();
    rep.line(
        2,
        "gradient check",
        worst <= 1e-5 && secs < 10.0,
        format!("worst relative error {worst:.3e} over 20 instances (limit 1e-5), {secs:.2}s"),
    );
}

fn bound_of(cfg: &ExperimentConfig, energy_dbm: f64) -> f64 {
    let v = cfg.variances();
    let l = cfg.system.frame_len;
    let p = SensingParams::new(RMat::identity(l, l), v.sigma2_r, v.sigma2_h, cfg.system.n_rx).unwrap();
    p.mmse_scale() * mmse_lower_bound(db_to_linear(energy_dbm), &p, cfg.system.n_tx).0
}

fn lower_bound(rep: &mut Report, runs: &[(&ExperimentConfig, Experiment, &RunOutput)]) {
    let t = Instant::now();
    let p = SensingParams::new(RMat::identity(30, 30), 1.0, 100.0, 20).unwrap();
    let (f, _) = mmse_lower_bound(1e4, &p, 16);
    let closed = 16.0 / 625.01;
    let mut closed_ok = (f - closed).abs() <= 1e-9;
    for (e, n) in [(1.0, 4), (250.0, 7), (3e3, 16)] {
        let direct: f64 = (0..n).map(|_| 1.0 / (e / n as f64 + p.rho)).sum();
        closed_ok &= (mmse_lower_bound(e, &p, n).0 - direct).abs() <= 1e-12 * direct;
    }
    let secs = t.elapsed().as_secs_f64();
    let mut checked = 0;
    let mut below = 0;
    for (cfg, exp, out) in runs {
        let lb = bound_of(cfg, exp.sweep(cfg).energy_dbm);
        for r in &out.rows {
            // the baseline reports per-symbol values
            let bound = match (r.method.as_str(), r.metric.as_str()) {
                ("FTN-SLP", "mmse") => lb,
                ("ISAC-BLP", "mmse_frame") => lb / cfg.system.frame_len as f64,
                _ => continue,
            };
            checked += 1;
            if r.value < bound * (1.0 - 1e-9) {
                below += 1;
            }
        }
    }
    rep.line(
        3,
        "lower bound",
        closed_ok && below == 0 && checked > 0 && secs < 1.0,
        format!("f_min = {f:.12} vs 16/625.01 = {closed:.12}; {below} of {checked} solver outputs below the bound"),
    );
}

fn fig2_config(tau: f64, gamma_db: f64, trial: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.pulse.tau = tau;
    cfg.solve.n_users = cfg.fig2.n_users;
    cfg.solve.energy_dbm = cfg.fig2.energy_dbm;
    cfg.solve.gamma_db = gamma_db;
    cfg.solve.trial = trial;
    cfg
}

fn sca_properties(rep: &mut Report) {
    let t = Instant::now();
    let trials = 5;
    let (mut mono, mut feas, mut iters, mut gval) = (0.0f64, 0.0f64, 0usize, f64::NEG_INFINITY);
    let mut converged = true;
    for trial in 0..trials {
        let s = solve_setup(&fig2_config(0.8, 15.0, trial)).unwrap();
        let sol = sca_solve(&s.scenario, &s.frame, &s.waveform, &s.sca).unwrap();
        for w in sol.f_trace.windows(2) {
            mono = mono.max((w[1] - w[0]) / w[0].abs());
        }
        for row in &sol.trace {
            feas = feas.max(row.max_ci_residual);
            if row.iteration > 0 {
                gval = gval.max(row.subproblem_value);
            }
        }
        iters = iters.max(sol.iterations);
        converged &= sol.termination == ftn_isac::sca::Termination::Converged;
    }
    let secs = t.elapsed().as_secs_f64() / trials as f64;
    rep.line(
        4,
        "SCA properties",
        mono <= 1e-9 && feas <= 1e-6 && converged && iters <= 100 && gval <= 1e-8,
        format!(
            "{trials} trials: worst relative increase {mono:.2e}, max CI residual {feas:.2e}, \
             max iterations {iters}, max g(X*) {gval:.2e}, {secs:.1}s per trial"
        ),
    );
}

fn degenerate_targets(rep: &mut Report) {
    let t = Instant::now();
    let s = solve_setup(&fig2_config(1.0, -100.0, 0)).unwrap();
    let sol = sca_solve(&s.scenario, &s.frame, &s.waveform, &s.sca).unwrap();
    let gap = (sol.final_mmse() - s.lower_bound) / s.lower_bound;
    let secs = t.elapsed().as_secs_f64();
    rep.line(
        5,
        "vanishing targets",
        gap.abs() <= 0.01 && secs < 300.0,
        format!("final MMSE {:.6e} vs bound {:.6e}, relative gap {gap:.2e} (limit 1e-2), {secs:.1}s", sol.final_mmse(), s.lower_bound),
    );
}

fn estimator_risk(rep: &mut Report) {
    let t = Instant::now();
    let vars = Variances { sigma2_c: 1.0, sigma2_r: 1.0, sigma2_h: 100.0, channel: 1.0 };
    let sc = gen_scenario(Dims { n_tx: 4, n_rx: 4, n_users: 1, frame_len: 8 }, vars, vec![1.0], 8.0, 3).unwrap();
    let wf = build_waveform(&PulseConfig { tau: 0.8, ..PulseConfig::default() }, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = complex_gaussian(&mut rng, 4, 8, 0.25);
    let trials = 2000;
    let mut acc = 0.0;
    let mut theory = 0.0;
    for k in 0..trials {
        let h = gen_trm(&sc, 10_000 + k);
        let y = radar_receive(&h, &x, &wf, sc.sigma2_r, Some(20_000 + k)).unwrap();
        let (est, mmse) = mmse_estimate_trm(&y, &x, &wf, sc.sigma2_r, sc.sigma2_h).unwrap();
        acc += (est - h).norm_squared();
        theory = mmse;
    }
    let emp = acc / trials as f64;
    let rel = (emp - theory).abs() / theory;
    let secs = t.elapsed().as_secs_f64();
    rep.line(
        6,
        "estimator risk",
        rel <= 0.03 && secs < 60.0,
        format!("empirical {emp:.5e} vs closed form {theory:.5e} over {trials} trials, relative {rel:.2e} (limit 3e-2), {secs:.1}s"),
    );
}

fn values(rows: &[ResultRow], method: Method, metric: &str) -> Vec<(usize, f64)> {
    rows.iter().filter(|r| r.method == method.as_str() && r.metric == metric).map(|r| (r.trial, r.value)).collect()
}

fn fig2_trend(rep: &mut Report, cfg: &ExperimentConfig, out: &RunOutput) {
    let (g, tau) = (cfg.fig2.gamma_db[0], cfg.fig2.tau[0]);
    let slp = point_mean(&out.rows, Method::FtnSlp, tau, g, "mmse_per_symbol").unwrap_or(f64::NAN);
    let blp = point_mean(&out.rows, Method::IsacBlp, 1.0, g, "mmse_per_symbol").unwrap_or(f64::NAN);
    let blp_frame = point_mean(&out.rows, Method::IsacBlp, 1.0, g, "mmse_frame").unwrap_or(f64::NAN);
    let slp_frame = point_mean(&out.rows, Method::FtnSlp, tau, g, "mmse").unwrap_or(f64::NAN);
    let s = values(&out.rows, Method::FtnSlp, "mmse_per_symbol");
    let b = values(&out.rows, Method::IsacBlp, "mmse_per_symbol");
    let wins = s.iter().filter(|(t, v)| b.iter().any(|(u, w)| u == t && v <= w)).count();
    rep.line(
        7,
        "Fig. 2 trend",
        slp <= blp && cfg.fig2.trials >= 20,
        format!("{} trials: mean per-symbol MMSE SLP {slp:.4e} vs BLP {blp:.4e}; SLP wins {wins}/{} trials", cfg.fig2.trials, s.len()),
    );
    info(format!("frame-level MMSE: SLP {slp_frame:.4e}, BLP with covariance L*R {blp_frame:.4e}"));
}

fn fig3_property(rep: &mut Report, cfg: &ExperimentConfig, out: &RunOutput) {
    let (g, tau) = (cfg.fig3.gamma_db[0], cfg.fig3.tau[0]);
    let violations: f64 = values(&out.rows, Method::FtnSlp, "ci_violations_noiseless").iter().map(|v| v.1).sum();
    let slp = point_mean(&out.rows, Method::FtnSlp, tau, g, "mean_aligned_re").unwrap_or(f64::NAN);
    let blp = point_mean(&out.rows, Method::IsacBlp, 1.0, g, "mean_aligned_re").unwrap_or(f64::NAN);
    let margin = values(&out.rows, Method::FtnSlp, "min_ci_margin_noiseless").iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    rep.line(
        8,
        "Fig. 3 property",
        violations == 0.0 && slp > blp && cfg.fig3.trials >= 20,
        format!(
            "{} trials: {violations} noiseless CI violations (min margin {margin:.2e}); mean aligned Re SLP {slp:.3} vs BLP {blp:.3}",
            cfg.fig3.trials
        ),
    );
}

fn count(rows: &[ResultRow], method: Method, tau: f64, g: f64, metric: &str) -> usize {
    rows.iter().filter(|r| r.method == method.as_str() && r.tau == tau && r.gamma_db == g && r.metric == metric).count()
}

fn fig4_trends(rep: &mut Report, cfg: &ExperimentConfig, out: &RunOutput) {
    let sw = &cfg.fig4;
    let mean = |m: Method, tau: f64, g: f64| point_mean(&out.rows, m, tau, g, "throughput").unwrap_or(f64::NAN);
    let mut ok = sw.trials >= 50;
    let mut detail = Vec::new();
    for g in [10.0, 15.0] {
        let t: Vec<f64> = [0.8, 0.9, 1.0].iter().map(|&tau| mean(Method::FtnSlp, tau, g)).collect();
        let ordered = t[0] >= t[1] && t[1] >= t[2];
        ok &= ordered;
        detail.push(format!("G={g}: {:.3} >= {:.3} >= {:.3} {}", t[0], t[1], t[2], if ordered { "ok" } else { "violated" }));
    }
    for &g in &sw.gamma_db {
        let (s, b) = (mean(Method::FtnSlp, 1.0, g), mean(Method::IsacBlp, 1.0, g));
        let better = s >= b;
        ok &= better;
        detail.push(format!("G={g}: SLP(tau=1) {s:.3} vs BLP {b:.3} {}", if better { "ok" } else { "violated" }));
    }
    rep.line(9, "Fig. 4 trends", ok, format!("{} trials per point", sw.trials));
    for d in detail {
        info(d);
    }
    for &g in &sw.gamma_db {
        for &tau in &sw.tau {
            let n = count(&out.rows, Method::FtnSlp, tau, g, "infeasible");
            if n > 0 {
                info(format!("SLP tau={tau} G={g}: {n} infeasible trials excluded from the mean"));
            }
        }
        let n = count(&out.rows, Method::IsacBlp, 1.0, g, "infeasible");
        let f = count(&out.rows, Method::IsacBlp, 1.0, g, "solver_failure");
        if n + f > 0 {
            info(format!("BLP G={g}: {n} infeasible and {f} solver failures excluded from the mean"));
        }
    }
}

fn fig5_trends(rep: &mut Report, cfg: &ExperimentConfig, out: &RunOutput) {
    let sw = &cfg.fig5;
    let mean = |m: Method, tau: f64, g: f64, metric: &str| point_mean(&out.rows, m, tau, g, metric).unwrap_or(f64::NAN);
    let mut ok = sw.trials >= 50;
    let mut detail = Vec::new();
    for &tau in &sw.tau {
        for w in sw.gamma_db.windows(2) {
            let (a, b) = (mean(Method::FtnSlp, tau, w[0], "mmse"), mean(Method::FtnSlp, tau, w[1], "mmse"));
            if !(b >= a * (1.0 - 0.02)) {
                ok = false;
                detail.push(format!("tau={tau}: MMSE drops from {a:.5e} at G={} to {b:.5e} at G={}", w[0], w[1]));
            }
        }
    }
    for &g in &sw.gamma_db {
        let t: Vec<f64> = sw.tau.iter().map(|&tau| mean(Method::FtnSlp, tau, g, "mmse")).collect();
        let mono = t.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-6));
        ok &= mono;
        let listed: Vec<String> = t.iter().map(|v| format!("{v:.5e}")).collect();
        detail.push(format!("G={g}: SLP MMSE over tau {:?} = {} {}", sw.tau, listed.join(", "), if mono { "ok" } else { "violated" }));
        let blp = mean(Method::IsacBlp, 1.0, g, "mmse_per_symbol");
        let blp_frame = mean(Method::IsacBlp, 1.0, g, "mmse_frame");
        for &tau in &sw.tau {
            let s = mean(Method::FtnSlp, tau, g, "mmse_per_symbol");
            ok &= s <= blp;
            if !(s <= blp) {
                detail.push(format!("G={g} tau={tau}: SLP per-symbol {s:.4e} above BLP {blp:.4e}"));
            }
        }
        detail.push(format!(
            "G={g}: BLP per-symbol {blp:.4e} (frame with L*R: {blp_frame:.4e}), SLP per-symbol at tau=1 {:.4e}",
            mean(Method::FtnSlp, 1.0, g, "mmse_per_symbol")
        ));
    }
    rep.line(10, "Fig. 5 trends", ok, format!("{} trials per point; tau ties within 1e-6 relative count as equal", sw.trials));
    for d in detail {
        info(d);
    }
}

fn epigraph_oracle() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for n in [2, 3, 5] {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &b * b.transpose() + DMatrix::identity(n, n) * 0.3;
        // [[J, I], [I, M]] ⪰ 0 with tr J minimal gives tr M⁻¹
        let mut sdp = SdpProblem::new(0, vec![2 * n]);
        let mut cost = Row::new();
        for i in 0..n {
            cost = cost.entry(0, i, i, 1.0);
        }
        sdp.set_cost(cost);
        for i in 0..n {
            for j in 0..n {
                sdp.add_constraint(Row::new().entry(0, i, n + j, 1.0), if i == j { 1.0 } else { 0.0 });
            }
        }
        for i in 0..n {
            for j in i..n {
                sdp.add_constraint(Row::new().entry(0, n + i, n + j, 1.0), m[(i, j)]);
            }
        }
        let sol = solve_sdp(&sdp, &IpmSettings::default()).unwrap();
        let oracle = m.try_inverse().unwrap().trace();
        let err = if sol.status == Status::Optimal { (sol.primal_obj - oracle).abs() / oracle } else { f64::INFINITY };
        worst = worst.max(err);
    }
    worst
}

fn baseline_integrity(rep: &mut Report, runs: &[&RunOutput]) {
    let (mut runs_seen, mut sdr_bad, mut sinr_bad, mut flagged) = (0, 0, 0, 0);
    for out in runs {
        let rows = &out.rows;
        for r in rows.iter().filter(|r| r.method == Method::IsacBlp.as_str() && r.metric == "sdr_value") {
            runs_seen += 1;
            let same = |metric: &str| {
                rows.iter()
                    .find(|q| q.method == r.method && q.trial == r.trial && q.gamma_db == r.gamma_db && q.metric == metric)
                    .map(|q| q.value)
                    .unwrap_or(f64::NAN)
            };
            let extracted = same("mmse_per_symbol");
            if !(r.value <= extracted * (1.0 + 1e-6)) {
                sdr_bad += 1;
            }
            let flag = same("flagged") == 1.0;
            flagged += flag as usize;
            if !(same("min_sinr_ratio") >= 1.0 - 1e-6 || flag) {
                sinr_bad += 1;
            }
        }
    }
    let lmi = epigraph_oracle();
    rep.line(
        11,
        "baseline integrity",
        runs_seen > 0 && sdr_bad == 0 && sinr_bad == 0 && lmi <= 1e-6,
        format!(
            "{runs_seen} relaxations: {sdr_bad} with SDR value above the extracted objective, \
             {sinr_bad} unflagged SINR misses, {flagged} flagged; epigraph oracle error {lmi:.2e}"
        ),
    );
}

fn reproducibility(rep: &mut Report) {
    let mut cfg = ExperimentConfig::default();
    cfg.fig2.trials = 3;
    cfg.fig3.trials = 3;
    cfg.fig4.trials = 1;
    cfg.fig5.trials = 2;
    let root = std::env::temp_dir().join(format!("ftn-isac-acceptance-{}", std::process::id()));
    let mut files = 0;
    let mut differing = Vec::new();
    for exp in Experiment::ALL {
        let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|s| root.join(exp.as_str()).join(s)).collect();
        for d in &dirs {
            run(exp, &cfg).unwrap().write(d).unwrap();
        }
        for name in RunOutput::file_names(exp).iter().filter(|n| n.ends_with(".csv")) {
            files += 1;
            if std::fs::read(dirs[0].join(name)).unwrap() != std::fs::read(dirs[1].join(name)).unwrap() {
                differing.push(name.clone());
            }
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    rep.line(
        12,
        "reproducibility",
        differing.is_empty() && files > 0,
        format!("{files} CSV files compared across two runs, differing: {differing:?}"),
    );
}

fn main() {
    let cap: Option<usize> = std::env::var("ACCEPTANCE_TRIALS").ok().and_then(|v| v.parse().ok());
    let mut rep = Report { passed: 0, failed: 0 };
    let start = Instant::now();

    waveform_oracle(&mut rep);
    gradient_check(&mut rep);

    let mut cfg = ExperimentConfig::default();
    cfg.fig2.trials = 20;
    cfg.fig3.trials = 20;
    cfg.fig4.trials = 50;
    cfg.fig5.trials = 50;
    if let Some(n) = cap {
        for sw in cfg.sweeps_mut() {
            sw.trials = sw.trials.min(n);
        }
        println!("note: trial counts capped at {n} by ACCEPTANCE_TRIALS; the trend criteria then fail their count requirement");
    }
    let mut outs = Vec::new();
    for exp in Experiment::ALL {
        let t = Instant::now();
        match run(exp, &cfg) {
            Ok(out) => {
                info(format!("{exp}: {} trials in {:.0}s", exp.sweep(&cfg).trials, t.elapsed().as_secs_f64()));
                outs.push(Some(out));
            }
            Err(e) => {
                info(format!("{exp}: run aborted after {:.0}s: {e}", t.elapsed().as_secs_f64()));
                outs.push(None);
            }
        }
    }
    let aborted = |rep: &mut Report, n: usize, name: &str, exp: Experiment| {
        rep.line(n, name, false, format!("the {exp} run did not complete"));
    };
    let [f2, f3, f4, f5] = [outs[0].as_ref(), outs[1].as_ref(), outs[2].as_ref(), outs[3].as_ref()];

    let bounded: Vec<_> = [(Experiment::Fig2, f2), (Experiment::Fig4, f4), (Experiment::Fig5, f5)]
        .into_iter()
        .filter_map(|(exp, out)| out.map(|o| (&cfg, exp, o)))
        .collect();
    lower_bound(&mut rep, &bounded);
    sca_properties(&mut rep);
    degenerate_targets(&mut rep);
    estimator_risk(&mut rep);
    match f2 {
        Some(out) => fig2_trend(&mut rep, &cfg, out),
        None => aborted(&mut rep, 7, "Fig. 2 trend", Experiment::Fig2),
    }
    match f3 {
        Some(out) => fig3_property(&mut rep, &cfg, out),
        None => aborted(&mut rep, 8, "Fig. 3 property", Experiment::Fig3),
    }
    match f4 {
        Some(out) => fig4_trends(&mut rep, &cfg, out),
        None => aborted(&mut rep, 9, "Fig. 4 trends", Experiment::Fig4),
    }
    match f5 {
        Some(out) => fig5_trends(&mut rep, &cfg, out),
        None => aborted(&mut rep, 10, "Fig. 5 trends", Experiment::Fig5),
    }
    let integrity: Vec<_> = [f2, f4, f5].into_iter().flatten().collect();
    baseline_integrity(&mut rep, &integrity);
    reproducibility(&mut rep);

    println!(
        "acceptance: {} passed, {} failed, {:.0}s",
        rep.passed,
        rep.failed,
        start.elapsed().as_secs_f64()
    );
}
