use std::f64::consts::PI;

use ftn_isac::waveform::{build_waveform, pulse_autocorr, rrc_value, PulseConfig, TapEnergy};

fn raised_cosine(x: f64, alpha: f64) -> f64 {
    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let d = 1.0 - (2.0 * alpha * x).powi(2);
    if d.abs() < 1e-10 {
        return PI / 4.0 * sinc_of(1.0 / (2.0 * alpha));
    }
    sinc * (PI * alpha * x).cos() / d
}

fn sinc_of(x: f64) -> f64 {
    (PI * x).sin() / (PI * x)
}

fn cfg(tau: f64, span: usize) -> PulseConfig {
    PulseConfig { tau, span, ..PulseConfig::default() }
}

#[test]
fn rrc_peak_and_energy() {
    let c = PulseConfig { span: 40, ..PulseConfig::default() };
    let peak = (1.0 - c.alpha + 4.0 * c.alpha / PI) / c.t0.sqrt();
    assert!((rrc_value(0.0, &c) - peak).abs() < 1e-9 * peak);
    // Riemann sum of h² over the support
    let n = 200_000;
    let h = 2.0 * c.span as f64 * c.t0 / n as f64;
    let e: f64 = (0..n).map(|i| rrc_value(-(c.span as f64) * c.t0 + (i as f64 + 0.5) * h, &c).powi(2) * h).sum();
    assert!((e - 1.0).abs() < 2e-4, "energy {e}");
    assert_eq!(rrc_value(8.5 * c.t0, &cfg(1.0, 8)), 0.0);
}

#[test]
fn rrc_is_even_and_finite_at_the_singular_points() {
    let c = PulseConfig::default();
    let ts = c.t0 / (4.0 * c.alpha);
    for t in [ts, -ts, 0.37 * c.t0, 2.0 * c.t0] {
        assert!(rrc_value(t, &c).is_finite());
        assert!((rrc_value(t, &c) - rrc_value(-t, &c)).abs() < 1e-12);
    }
    let near = rrc_value(ts * (1.0 + 1e-6), &c);
    assert!((rrc_value(ts, &c) - near).abs() < 1e-3 * near.abs());
}

#[test]
fn autocorrelation_tracks_raised_cosine_and_improves_with_span() {
    let err = |span: usize| {
        let c = cfg(0.8, span);
        (1..30).map(|k| (pulse_autocorr(k, &c) - raised_cosine(k as f64 * 0.8, c.alpha)).abs()).fold(0.0, f64::max)
    };
    let (e8, e32) = (err(8), err(32));
    assert!(e8 < 5e-3, "span 8 error {e8}");
    assert!(e32 < 1e-3, "span 32 error {e32}");
    assert!(e32 < e8);
}

#[test]
fn nyquist_autocorrelation_is_near_identity() {
    let wf = build_waveform(&cfg(1.0, 32), 30).unwrap();
    let dev = (wf.phi() - ftn_isac::linalg::RMat::identity(30, 30)).amax();
    assert!(dev < 1e-3, "{dev}");
}

#[test]
fn eigendecomposition_reconstructs_phi() {
    for tau in [0.6, 0.8, 1.0] {
        let wf = build_waveform(&cfg(tau, 8), 20).unwrap();
        let u = wf.u();
        let recon = u * ftn_isac::linalg::RMat::from_diagonal(wf.lambda()) * u.transpose();
        assert!((recon - wf.phi()).amax() < 1e-10);
        assert!((u.transpose() * u - ftn_isac::linalg::RMat::identity(20, 20)).amax() < 1e-10);
        let lam = wf.lambda();
        assert!(lam.iter().zip(lam.iter().skip(1)).all(|(a, b)| a >= b));
        assert!(lam.min() >= 0.0);
    }
}

#[test]
fn convolution_shape_and_psi() {
    let c = cfg(0.8, 8);
    let wf = build_waveform(&c, 12).unwrap();
    let p = 2 * 10 + 1;
    assert_eq!(c.n_taps(), p);
    assert_eq!(wf.conv().shape(), (12 + p - 1, 12));
    assert!((wf.psi() - wf.conv().transpose() * wf.conv()).amax() < 1e-12);
    assert!((wf.psi() - wf.psi().transpose()).amax() < 1e-14);
    // Toeplitz: Ψ_ij depends on |i - j| only
    let psi = wf.psi();
    for i in 1..12 {
        for j in 1..12 {
            assert!((psi[(i, j)] - psi[(i - 1, j - 1)]).abs() < 1e-12);
        }
    }
}

#[test]
fn tap_energy_modes() {
    for (mode, want) in [(TapEnergy::Proportional, 0.8), (TapEnergy::RateScaled, 1.25), (TapEnergy::Unit, 1.0)] {
        let wf = build_waveform(&PulseConfig { tap_energy: mode, ..cfg(0.8, 8) }, 10).unwrap();
        assert!((wf.taps().norm_squared() - want).abs() < 1e-12, "{mode:?}");
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let e = build_waveform(&cfg(1.2, 8), 10).unwrap_err();
    assert!(e.to_string().contains("tau must be in (0, 1]"));
    assert!(build_waveform(&cfg(0.0, 8), 10).is_err());
    assert!(build_waveform(&PulseConfig { alpha: 1.5, ..PulseConfig::default() }, 10).is_err());
    assert!(build_waveform(&PulseConfig::default(), 0).is_err());
}
