use std::f64::consts::FRAC_PI_2;

use qstmz::analytics::gaussian::{GaussianState, Poly};
use qstmz::analytics::{
    scheme1_closed_form, scheme1_optimal_r, scheme1_sensitivity, scheme2_asymptote, scheme2_complete_at,
    scheme2_sensitivity, scheme3_sensitivity, two_mode_spin_moments, AnalyticInput, AtomCount, Gain, Scheme1Network,
};
use qstmz::dynamics::theta_for_q;
use qstmz::estimators::{spin_formula, SpinSymbols};
use qstmz::network::LocalOscillator;
use qstmz::oracle::{prepare_gaussian_fock, GaussianKind};
use qstmz::sampler::SqueezeSpec;
use qstmz::C64;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn scheme1_closed_form_cases() {
    for n in [10.0, 1e4, 1e6] {
        assert!(close(scheme1_closed_form(n, 0.0, 1.0).unwrap(), 1.0 / f64::sqrt(n), 1e-12));
    }
    let d = scheme1_closed_form(1e6, 3.8, 1.0).unwrap();
    assert!((d * 1e3 - 1.0 / 31.6).abs() < 1e-3, "{d}");
    let opt = scheme1_optimal_r(1e6).unwrap();
    assert!((opt.r_opt - 3.80).abs() < 0.01);
    assert!(close(opt.delta_phi_min, 3.16e-5, 0.01));
    let opt = scheme1_optimal_r(1e4).unwrap();
    assert!(close(opt.r_opt, (4e4f64).ln() / 4.0, 0.05));
}

#[test]
fn scheme1_network_matches_closed_form_without_recycling() {
    // The Gaussian network keeps finite N_LO and a real condensate amplitude;
    // without recycling it must agree with the closed form.
    for q in [0.1, 0.5, 0.9, 1.0] {
        let inp = AnalyticInput::new(1e6, 3.0, q, false);
        let net = Scheme1Network::from_input(&inp).unwrap();
        let s = net.sensitivity(FRAC_PI_2).unwrap();
        let closed = scheme1_closed_form(1e6, 3.0, q).unwrap();
        assert!(close(s.delta_phi, closed, 1e-6), "Q={q}: {} vs {closed}", s.delta_phi);
    }
}

#[test]
fn recycling_gain_is_near_optimal() {
    let inp = AnalyticInput::new(1e6, 3.8, 0.5, true);
    let mut net = Scheme1Network::from_input(&inp).unwrap();
    let n_a1 = net.condensate_after_transfer().unwrap();
    let auto = net.gain_value(n_a1).unwrap();
    let at = |g: f64, net: &mut Scheme1Network| {
        net.gain = Gain::Explicit(g);
        net.sensitivity(FRAC_PI_2).unwrap().delta_phi
    };
    let best = at(auto, &mut net);
    for f in [0.9, 0.97, 1.03, 1.1] {
        assert!(at(auto * f, &mut net) >= best * 0.999, "gain factor {f}");
    }
    assert!(close(scheme1_sensitivity(&inp).unwrap().delta_phi * 1e3, 0.035, 0.02));
}

#[test]
fn initial_and_detected_atom_counts_agree_without_loss() {
    let spec = SqueezeSpec::new(3.0, FRAC_PI_2).unwrap();
    let theta = theta_for_q(0.3).unwrap();
    let lo = LocalOscillator::default();
    let det = Scheme1Network { atoms: AtomCount::Detected(1e6), squeeze: spec, theta_qst: theta, losses: vec![], lo, gain: Gain::None };
    let init = Scheme1Network { atoms: AtomCount::Initial(1e6), ..det.clone() };
    assert!(close(init.detected_atoms().unwrap(), 1e6, 1e-12));
    assert!(close(det.detected_atoms().unwrap(), 1e6, 1e-12));
}

#[test]
fn scheme2_cases() {
    let n = |r: f64, q: f64| 2.0 * q * r.sinh().powi(2);
    // N_t = 2 at Q = 1.
    let r = 1f64.asinh();
    let s = scheme2_sensitivity(&AnalyticInput::two_mode(r, 1.0, false)).unwrap();
    assert!(close(s.sensitivity.delta_phi, 1.0 / 8f64.sqrt(), 1e-12));
    // Heisenberg scaling.
    let r = 6.0;
    let s = scheme2_sensitivity(&AnalyticInput::two_mode(r, 1.0, false)).unwrap();
    assert!((s.sensitivity.delta_phi * n(r, 1.0) - 1.0).abs() < 1e-4);
    // Recycled at the Table I operating point.
    let r = (6.2e5f64 / 0.4).sqrt().asinh();
    let s = scheme2_sensitivity(&AnalyticInput::two_mode(r, 0.2, true)).unwrap();
    assert!(close(s.sensitivity.delta_phi, 1.61e-6, 0.005), "{}", s.sensitivity.delta_phi);
    // Large-N asymptote of the incomplete form.
    let r = 9.0;
    let s = scheme2_sensitivity(&AnalyticInput::two_mode(r, 0.5, false)).unwrap();
    assert!(close(s.sensitivity.delta_phi, scheme2_asymptote(n(r, 0.5), 0.5), 1e-3));
    // Complete transfer away from the optimal phase is worse.
    assert!(scheme2_complete_at(1.0, 0.1) > scheme2_complete_at(1.0, 1e-4));
}

#[test]
fn stable_spin_moments_match_wick_expansion() {
    for (r, q) in [(0.3, 1.0), (0.8, 0.4), (1.5, 0.7), (2.0, 0.05)] {
        let spec = SqueezeSpec::new(r, FRAC_PI_2).unwrap();
        let mut g = GaussianState::vacuum(4);
        g.squeeze_pair(2, 3, &spec);
        let (s, c) = (0.5 * theta_for_q(q).unwrap()).sin_cos();
        let mi = C64::new(0.0, -s);
        let u = [[C64::new(c, 0.0), mi], [mi, C64::new(c, 0.0)]];
        g.mix(0, 2, u);
        g.mix(1, 3, u);
        let jx2 = Poly::spin_x(0, 1).pow(2);
        let jz2 = Poly::spin_z(0, 1).pow(2);
        let e = |p: &Poly| g.expect(p).re;
        let wick = SpinSymbols {
            x2: e(&jx2),
            z2: e(&jz2),
            x4: e(&jx2.pow(2)),
            z4: e(&jz2.pow(2)),
            x2z2: e(&jx2.mul(&jz2)),
            pm: e(&Poly::number(0).mul(&Poly::number(1))),
            nsum: e(&Poly::number(0).add(&Poly::number(1))),
        }
        .corrected();
        let stable = two_mode_spin_moments(r, q).unwrap();
        let scale = stable[2].abs().max(1.0);
        for (k, (a, b)) in stable.iter().zip(wick.iter()).enumerate() {
            assert!((a - b).abs() <= 1e-10 * scale, "r={r} Q={q} moment {k}: {a} vs {b}");
        }
    }
}

#[test]
fn spin_moments_match_fock_expectations() {
    // Complete transfer maps the pair state onto the atoms up to a phase that
    // the spin operators do not see.
    let r = 0.5;
    let spec = SqueezeSpec::new(r, FRAC_PI_2).unwrap();
    let psi = prepare_gaussian_fock(GaussianKind::TwoModeSqueezed(spec), 40).unwrap();
    let jx = |s: &qstmz::oracle::FockState| s.apply_jx(0, 1).unwrap();
    let jz = |s: &qstmz::oracle::FockState| s.apply_jz(0, 1);
    let ev = |s: &qstmz::oracle::FockState| psi.inner(s).re;
    let x1 = jx(&psi);
    let z1 = jz(&psi);
    let x2 = jx(&x1);
    let z2 = jz(&z1);
    let exact = [
        ev(&x2),
        ev(&z2),
        ev(&jx(&jx(&x2))),
        ev(&jz(&jz(&z2))),
        ev(&jx(&jx(&z2))) + ev(&jz(&jz(&x2))),
        {
            let a = jx(&z1);
            let b = jz(&x1);
            let mut sum = 0.0;
            for (u, v) in [(&a, &a), (&a, &b), (&b, &a), (&b, &b)] {
                sum += u.inner(v).re;
            }
            sum
        },
        psi.expect_nn(0, 1),
    ];
    let m = two_mode_spin_moments(r, 1.0).unwrap();
    for (k, (a, b)) in m.iter().zip(exact.iter()).enumerate() {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "moment {k}: {a} vs {b}");
    }
    let (d, ..) = spin_formula(&m, false);
    let n = 2.0 * r.sinh().powi(2);
    assert!(close(d, 1.0 / (n * (n + 2.0)).sqrt(), 1e-12));
}

#[test]
fn scheme3_cases() {
    let sql = |n: f64| 1.0 / n.sqrt();
    let s = scheme3_sensitivity(&AnalyticInput::new(1e4, 0.0, 0.5, true)).unwrap();
    for d in [s.atomic, s.partial, s.full] {
        assert!(d.delta_phi >= sql(1e4) * (1.0 - 1e-9));
    }
    for r in [0.5, 2.0, 3.8] {
        let s = scheme3_sensitivity(&AnalyticInput::new(1e6, r, 1.0, true)).unwrap();
        assert!(s.atomic.delta_phi > sql(1e6), "r={r}");
    }
    let s = scheme3_sensitivity(&AnalyticInput::new(1e6, 3.8, 1.0, true)).unwrap();
    assert!(s.full.delta_phi > 1e6f64.powf(-0.75) && s.full.delta_phi < sql(1e6));
}
