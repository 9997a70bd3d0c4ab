use ftn_isac::channel::{
    comm_receive, detect_psk, export_matrix_csv, gen_scenario, gen_symbols, gen_trm, matched_samples,
    mmse_estimate_trm, psk_decide, psk_point, radar_receive, Dims, Scenario, Variances,
};
use ftn_isac::linalg::{complex_gaussian, mul_cr, CMat, RMat, C64};
use ftn_isac::waveform::{build_waveform, PulseConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vars() -> Variances {
    Variances { sigma2_c: 1.0, sigma2_r: 1.0, sigma2_h: 100.0, channel: 1.0 }
}

fn scenario(k: usize, n_tx: usize, l: usize, seed: u64) -> Scenario {
    gen_scenario(Dims { n_tx, n_rx: 4, n_users: k, frame_len: l }, vars(), vec![10.0; k], 100.0, seed).unwrap()
}

#[test]
fn scenarios_are_deterministic_and_seed_dependent() {
    let a = scenario(3, 8, 10, 5);
    let b = scenario(3, 8, 10, 5);
    let c = scenario(3, 8, 10, 6);
    assert_eq!(a.h_c, b.h_c);
    assert_ne!(a.h_c, c.h_c);
    assert_eq!(gen_trm(&a, 1), gen_trm(&b, 1));
}

#[test]
fn channel_entries_have_the_configured_variance() {
    let v = Variances { channel: 4.0, ..vars() };
    let sc = gen_scenario(Dims { n_tx: 200, n_rx: 1, n_users: 100, frame_len: 1 }, v, vec![1.0; 100], 1.0, 3).unwrap();
    let mean_power = sc.h_c.iter().map(|x| x.norm_sqr()).sum::<f64>() / sc.h_c.len() as f64;
    assert!((mean_power - 4.0).abs() < 0.1, "{mean_power}");
    let trm = gen_trm(&sc, 9);
    assert_eq!(trm.shape(), (1, 200));
}

#[test]
fn scenario_validation() {
    let d = Dims { n_tx: 4, n_rx: 2, n_users: 4, frame_len: 5 };
    assert!(gen_scenario(d, vars(), vec![1.0; 4], 1.0, 0).is_err());
    let d = Dims { n_users: 2, ..d };
    assert!(gen_scenario(d, vars(), vec![1.0; 3], 1.0, 0).is_err());
    assert!(gen_scenario(d, vars(), vec![1.0; 2], -1.0, 0).is_err());
    assert!(gen_scenario(d, Variances { sigma2_h: 0.0, ..vars() }, vec![1.0; 2], 1.0, 0).is_err());
}

#[test]
fn symbols_lie_on_the_constellation() {
    for m in [2, 4, 8, 16] {
        let f = gen_symbols(3, 20, m, 1).unwrap();
        for (s, &i) in f.s.iter().zip(f.index.iter()) {
            assert!(i < m);
            assert!((s.norm() - 1.0).abs() < 1e-12);
            assert!((s - psk_point(i, m)).norm() < 1e-12);
        }
        assert_eq!(f.bits_per_symbol(), m.trailing_zeros());
        assert!((f.theta() - std::f64::consts::PI / m as f64).abs() < 1e-15);
    }
    assert!(gen_symbols(2, 4, 3, 0).is_err());
}

#[test]
fn psk_decisions_and_gray_bit_errors() {
    for m in [2, 4, 8] {
        for i in 0..m {
            assert_eq!(psk_decide(psk_point(i, m) * 3.0, m), i);
        }
    }
    let mut f = gen_symbols(1, 2, 4, 0).unwrap();
    f.index[(0, 0)] = 0;
    f.index[(0, 1)] = 0;
    f.s[(0, 0)] = psk_point(0, 4);
    f.s[(0, 1)] = psk_point(0, 4);
    // neighbor (index 1) differs in one Gray bit, opposite (index 2) in two
    let y = CMat::from_row_slice(1, 2, &[psk_point(1, 4), psk_point(2, 4)]);
    let d = detect_psk(&y, &f).unwrap();
    assert_eq!(d.symbol_errors, 2);
    assert_eq!(d.bit_errors, 3);
}

#[test]
fn noiseless_reception_is_the_whitened_product() {
    let wf = build_waveform(&PulseConfig { tau: 0.8, ..PulseConfig::default() }, 12).unwrap();
    let sc = scenario(2, 6, 12, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = complex_gaussian(&mut rng, 6, 12, 1.0);
    let y = comm_receive(&sc, &wf, &x, None).unwrap();
    let expect = mul_cr(&(&sc.h_c * &x), &(wf.u() * RMat::from_diagonal(wf.lambda())));
    assert!((&y - expect).camax() < 1e-10);
    // matched samples undo the rotation: H X Φ
    let m = matched_samples(&y, &wf);
    assert!((m - mul_cr(&(&sc.h_c * &x), wf.phi())).camax() < 1e-10);
}

#[test]
fn whitened_noise_variance_follows_lambda() {
    let wf = build_waveform(&PulseConfig { tau: 0.7, ..PulseConfig::default() }, 8).unwrap();
    let sc = gen_scenario(Dims { n_tx: 4, n_rx: 1, n_users: 2, frame_len: 8 }, vars(), vec![1.0; 2], 1.0, 0).unwrap();
    let x = CMat::zeros(4, 8);
    let n = 4000;
    let mut acc = vec![0.0; 8];
    for s in 0..n {
        let y = comm_receive(&sc, &wf, &x, Some(s)).unwrap();
        for l in 0..8 {
            acc[l] += (y[(0, l)].norm_sqr() + y[(1, l)].norm_sqr()) / 2.0;
        }
    }
    for l in 0..8 {
        let got = acc[l] / n as f64;
        assert!((got - wf.lambda()[l]).abs() < 0.08 * wf.lambda()[l].max(0.05), "l={l}: {got} vs {}", wf.lambda()[l]);
    }
}

#[test]
fn radar_echo_shape_and_noiseless_value() {
    let wf = build_waveform(&PulseConfig::default(), 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = complex_gaussian(&mut rng, 3, 4, 1.0);
    let x = complex_gaussian(&mut rng, 4, 6, 1.0);
    let y = radar_receive(&h, &x, &wf, 1.0, None).unwrap();
    assert_eq!(y.ncols(), wf.conv().nrows());
    assert!((y - mul_cr(&(&h * &x), &wf.conv().transpose())).camax() < 1e-10);
    assert!(radar_receive(&h, &CMat::zeros(3, 6), &wf, 1.0, None).is_err());
}

#[test]
fn estimator_risk_matches_the_closed_form() {
    let wf = build_waveform(&PulseConfig { tau: 0.8, ..PulseConfig::default() }, 8).unwrap();
    let sc = gen_scenario(Dims { n_tx: 4, n_rx: 4, n_users: 1, frame_len: 8 }, vars(), vec![1.0], 8.0, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = complex_gaussian(&mut rng, 4, 8, 0.25);
    let trials = 2000;
    let mut acc = 0.0;
    let mut theory = 0.0;
    for t in 0..trials {
        let h = gen_trm(&sc, 1000 + t);
        let y = radar_receive(&h, &x, &wf, sc.sigma2_r, Some(5000 + t)).unwrap();
        let (est, mmse) = mmse_estimate_trm(&y, &x, &wf, sc.sigma2_r, sc.sigma2_h).unwrap();
        acc += (est - h).norm_squared();
        theory = mmse;
    }
    // σ_R² N_r tr((ρI + XΨXᴴ)⁻¹), recomputed by explicit inversion
    let g = mul_cr(&x, wf.psi()) * x.adjoint() + CMat::identity(4, 4) * C64::new(0.01, 0.0);
    let direct = 4.0 * g.try_inverse().unwrap().trace().re;
    assert!((theory - direct).abs() < 1e-9 * direct);
    let emp = acc / trials as f64;
    assert!((emp - theory).abs() < 0.03 * theory, "{emp} vs {theory}");
}

#[test]
fn matrix_export_has_one_row_per_entry() {
    let m = CMat::from_fn(2, 3, |i, j| C64::new(i as f64, j as f64));
    let mut buf = Vec::new();
    export_matrix_csv(&m, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("row,col,re,im"));
}
