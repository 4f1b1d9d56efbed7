//! Undepleted-reservoir sensitivities for the three schemes.
//!
//! Closed forms where they exist; otherwise exact Gaussian moment algebra on
//! the linear network (condensate as a coherent amplitude, finite N_LO kept).

pub mod gaussian;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{theta_for_q, undepleted_q};
use crate::error::{ensure, Error, Result};
use crate::estimators::{spin_formula, Method, SensitivityResult};
use crate::network::{LocalOscillator, LossSite, LossSpec, DEFAULT_N_LO};
use crate::sampler::SqueezeSpec;
use crate::C64;
use gaussian::GaussianState;

/// Central-difference step for noise-free slopes.
const FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    SingleMode,
    TwoModeDoubleInput,
    TwoModeSingleInput,
}

impl SchemeId {
    pub fn name(self) -> &'static str {
        match self {
            SchemeId::SingleMode => "single_mode",
            SchemeId::TwoModeDoubleInput => "two_mode_double_input",
            SchemeId::TwoModeSingleInput => "two_mode_single_input",
        }
    }
}

impl std::str::FromStr for SchemeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_mode" | "1" => Ok(SchemeId::SingleMode),
            "two_mode_double_input" | "2" => Ok(SchemeId::TwoModeDoubleInput),
            "two_mode_single_input" | "3" => Ok(SchemeId::TwoModeSingleInput),
            _ => Err(Error::Validation(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticInput {
    /// Detected atom number.
    pub n_t: f64,
    pub r: f64,
    pub q: f64,
    pub recycled: bool,
    pub n_lo: f64,
}

impl AnalyticInput {
    pub fn new(n_t: f64, r: f64, q: f64, recycled: bool) -> Self {
        Self { n_t, r, q, recycled, n_lo: DEFAULT_N_LO }
    }

    /// Double-input input with N_t = 2Q sinh²r implied.
    pub fn two_mode(r: f64, q: f64, recycled: bool) -> Self {
        Self::new(2.0 * q * r.sinh().powi(2), r, q, recycled)
    }

    fn validate(&self) -> Result<()> {
        ensure(self.n_t.is_finite() && self.n_t > 0.0, || format!("N_t must be positive, got {}", self.n_t))?;
        ensure(self.r.is_finite() && self.r >= 0.0, || format!("r must be >= 0, got {}", self.r))?;
        ensure((0.0..=1.0).contains(&self.q), || format!("Q must lie in [0, 1], got {}", self.q))?;
        ensure(self.n_lo.is_finite() && self.n_lo > 0.0, || "N_LO must be positive".into())
    }
}

fn analytic(delta_phi: f64, phi_opt: f64, slope: f64, variance: f64) -> SensitivityResult {
    SensitivityResult { delta_phi, phi_opt, slope, variance, stderr: 0.0, method: Method::Analytic }
}

/// Δφ from a noise-free (mean, variance) curve at `phi`.
pub fn sensitivity_at(phi: f64, signal: impl Fn(f64) -> (f64, f64)) -> Result<SensitivityResult> {
    let (up, _) = signal(phi + FD_STEP);
    let (down, _) = signal(phi - FD_STEP);
    let (_, var) = signal(phi);
    let slope = (up - down) / (2.0 * FD_STEP);
    if slope == 0.0 || !(var > 0.0) {
        return Err(Error::Indeterminate(format!("slope {slope:.3e}, variance {var:.3e}")));
    }
    Ok(analytic(var.sqrt() / slope.abs(), phi, slope, var))
}

/// Single-mode variance and slope of the atomic signal at φ = π/2.
fn scheme1_closed(n_t: f64, r: f64, q: f64) -> Result<(f64, f64)> {
    let sh = r.sinh();
    let slope = n_t - 2.0 * q * sh * sh;
    if !(slope > 0.0) {
        return Err(Error::Depleted(format!("2Q sinh²r = {:.3e} reaches N_t = {n_t:.3e}", 2.0 * q * sh * sh)));
    }
    let e = (-r).exp();
    let var = n_t * (1.0 - 2.0 * q * e * sh) + 2.0 * q * q * e * sh.powi(3);
    Ok((var, slope))
}

pub fn scheme1_closed_form(n_t: f64, r: f64, q: f64) -> Result<f64> {
    let (v, s) = scheme1_closed(n_t, r, q)?;
    Ok(v.sqrt() / s)
}

/// Recycling gain for the single-mode scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    None,
    /// √(N_a1(t1)/N_LO)·cot(θ_QST/2)
    Auto,
    Explicit(f64),
}

/// How a linear network fixes the condensate size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomCount {
    /// Mean detected atom number; the condensate is sized to reproduce it.
    Detected(f64),
    /// Condensate number before the transfer.
    Initial(f64),
}

/// Linear single-mode network: condensate, outcoupled atoms, probe, LO.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheme1Network {
    pub atoms: AtomCount,
    pub squeeze: SqueezeSpec,
    pub theta_qst: f64,
    pub losses: Vec<LossSpec>,
    pub lo: LocalOscillator,
    pub gain: Gain,
}

const A1: usize = 0;
const A2: usize = 1;
const B: usize = 2;
const LO: usize = 3;

fn eta_at(losses: &[LossSpec], site: LossSite) -> f64 {
    losses.iter().filter(|l| l.site == site).map(|l| l.eta).product()
}

impl Scheme1Network {
    pub fn from_input(inp: &AnalyticInput) -> Result<Self> {
        inp.validate()?;
        Ok(Self {
            atoms: AtomCount::Detected(inp.n_t),
            squeeze: SqueezeSpec::new(inp.r, FRAC_PI_2)?,
            theta_qst: theta_for_q(inp.q)?,
            losses: Vec::new(),
            lo: LocalOscillator::new(inp.n_lo, FRAC_PI_2)?,
            gain: if inp.recycled { Gain::Auto } else { Gain::None },
        })
    }

    /// State after transfer and pre-interferometer losses, plus N_a1(t1).
    fn transferred(&self) -> Result<(GaussianState, f64)> {
        let mut g = GaussianState::vacuum(4);
        g.squeeze(B, &self.squeeze);
        g.loss(B, eta_at(&self.losses, LossSite::PreQstOptical));
        let (s, c) = (0.5 * self.theta_qst).sin_cos();
        let mi = C64::new(0.0, -s);
        g.mix(A2, B, [[C64::new(c, 0.0), mi], [mi, C64::new(c, 0.0)]]);
        let outcoupled = g.number(A2);
        g.loss(A2, eta_at(&self.losses, LossSite::PostQstAtomic));
        g.loss(B, eta_at(&self.losses, LossSite::TransmittedOptical));
        let eta_int = eta_at(&self.losses, LossSite::SymmetricInterferometer);
        ensure(eta_int > 0.0, || "interferometer transmission must be positive".into())?;
        let n_a1 = match self.atoms {
            AtomCount::Detected(n_t) => n_t / eta_int - g.number(A2),
            AtomCount::Initial(n0) => n0 - outcoupled,
        };
        if !(n_a1 > 0.0) {
            return Err(Error::Depleted("outcoupled atoms exceed the detected total".into()));
        }
        g.set_mean(A1, C64::new(n_a1.sqrt(), 0.0));
        g.set_mean(LO, self.lo.amplitude());
        Ok((g, n_a1))
    }

    /// Mean condensate number N_a1(t1) after the transfer.
    pub fn condensate_after_transfer(&self) -> Result<f64> {
        Ok(self.transferred()?.1)
    }

    /// Mean number of atoms reaching the detectors.
    pub fn detected_atoms(&self) -> Result<f64> {
        let (g, n_a1) = self.transferred()?;
        Ok(eta_at(&self.losses, LossSite::SymmetricInterferometer) * (n_a1 + g.number(A2)))
    }

    pub fn gain_value(&self, n_a1: f64) -> Result<f64> {
        Ok(match self.gain {
            Gain::None => 0.0,
            Gain::Explicit(g) => g,
            Gain::Auto => {
                ensure(self.theta_qst > 0.0, || "recycling gain diverges at Q = 0".into())?;
                (n_a1 / self.lo.mean_number).sqrt() / (0.5 * self.theta_qst).tan()
            }
        })
    }

    /// Corrected (mean, variance) of S = N_1 − N_2 − G(N_LO − N_b) at φ.
    pub fn signal(&self, phi: f64) -> Result<(f64, f64)> {
        let (mut g, n_a1) = self.transferred()?;
        let gain = self.gain_value(n_a1)?;
        g.beamsplitter(B, LO, FRAC_PI_2);
        g.beamsplitter(A1, A2, FRAC_PI_2);
        let eta_int = eta_at(&self.losses, LossSite::SymmetricInterferometer);
        g.loss(A1, eta_int);
        g.loss(A2, eta_int);
        g.phase(A2, phi);
        g.beamsplitter(A1, A2, FRAC_PI_2);
        Ok(g.combination(&[(A1, 1.0), (A2, -1.0), (LO, -gain), (B, gain)]))
    }

    pub fn sensitivity(&self, phi: f64) -> Result<SensitivityResult> {
        self.signal(phi)?;
        sensitivity_at(phi, |p| self.signal(p).expect("validated above"))
    }
}

pub fn scheme1_sensitivity(inp: &AnalyticInput) -> Result<SensitivityResult> {
    inp.validate()?;
    if !inp.recycled || inp.q == 1.0 {
        let (var, slope) = scheme1_closed(inp.n_t, inp.r, inp.q)?;
        return Ok(analytic(var.sqrt() / slope, FRAC_PI_2, slope, var));
    }
    ensure(inp.q > 0.0, || "recycling gain diverges at Q = 0".into())?;
    scheme1_closed(inp.n_t, inp.r, inp.q)?;
    Scheme1Network::from_input(inp)?.sensitivity(FRAC_PI_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalSqueezing {
    pub r_opt: f64,
    pub delta_phi_min: f64,
    /// ln(4N_t)/4
    pub r_asymptotic: f64,
    /// N_t^{−3/4}
    pub delta_phi_asymptotic: f64,
}

/// Golden-section minimization of the complete-transfer closed form over r.
pub fn scheme1_optimal_r(n_t: f64) -> Result<OptimalSqueezing> {
    ensure(n_t.is_finite() && n_t > 2.0, || format!("N_t must exceed 2, got {n_t}"))?;
    if n_t < 100.0 {
        log::warn!("N_t = {n_t} is far from the large-N regime of the asymptotic optimum");
    }
    let f = |r: f64| scheme1_closed_form(n_t, r, 1.0).unwrap_or(f64::INFINITY);
    let r_max = (0.5 * n_t).sqrt().asinh() * (1.0 - 1e-9);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, r_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    while b - a > 1e-10 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    let r_opt = 0.5 * (a + b);
    Ok(OptimalSqueezing {
        r_opt,
        delta_phi_min: f(r_opt),
        r_asymptotic: (4.0 * n_t).ln() / 4.0,
        delta_phi_asymptotic: n_t.powf(-0.75),
    })
}

/// Corrected spin moments of the two outcoupled modes after transfer of a
/// two-mode squeezed vacuum.
///
/// In the modes (a+ ± a−*)/√2 the Wigner distribution factorizes into two
/// isotropic Gaussians with per-quadrature variances `wide` and `narrow`, so
/// every symbol moment is a short polynomial in those two numbers. The Jz
/// moments are written in terms of the excess `d = wide·narrow − 1/16`,
/// which vanishes at complete transfer, to avoid cancellation.
pub fn two_mode_spin_moments(r: f64, q: f64) -> Result<[f64; 7]> {
    SqueezeSpec::new(r, FRAC_PI_2)?;
    ensure((0.0..=1.0).contains(&q), || format!("Q must lie in [0, 1], got {q}"))?;
    let wide = 0.25 * (q * (2.0 * r).exp() + 1.0 - q);
    let narrow = 0.25 * (q * (-2.0 * r).exp() + 1.0 - q);
    let d = 0.25 * q * (1.0 - q) * r.sinh().powi(2);
    let (a2, b2, ab) = (wide * wide, narrow * narrow, wide * narrow);
    let sym = crate::estimators::SpinSymbols {
        x2: a2 + b2,
        z2: 2.0 * ab,
        x4: 9.0 * a2 * a2 + 6.0 * a2 * b2 + 9.0 * b2 * b2,
        z4: 24.0 * ab * ab,
        x2z2: 6.0 * ab * (a2 + b2) - 4.0 * ab * ab,
        pm: 2.0 * (a2 + b2),
        nsum: 2.0 * (wide + narrow),
    };
    let mut m = sym.corrected();
    m[1] = 2.0 * d;
    m[3] = 24.0 * d * d + 0.5 * d;
    Ok(m)
}

/// The printed incomplete-transfer closed form for the double-input scheme.
pub fn scheme2_incomplete_closed_form(n_t: f64, q: f64) -> f64 {
    let p = 1.0 - q;
    let s = n_t + 2.0 * q;
    let a = p
        * (1.0 + 5.0 * p * n_t)
        * (4.0 + 2.0 * (n_t - 2.0 * q)
            + (n_t * (9.0 - q * (42.0 - 37.0 * q)) - 64.0 * q * q * p + 7.0 * q + 1.0) / (4.0 * s * s));
    let t1 = a.sqrt() / (n_t * s);
    let t2 = ((1.0 + p / (2.0 * s)) + n_t * p * (3.0 + (2.0 * n_t + 5.0 - q) / (2.0 * s))) / (n_t * s);
    (t1 + t2).sqrt()
}

pub fn scheme2_asymptote(n_t: f64, q: f64) -> f64 {
    ((1.0 - q) * (4.0 + 10f64.sqrt()) / n_t).sqrt()
}

/// Q above which the non-recycled double-input scheme beats the SQL, for
/// large N_t.
pub fn scheme2_sql_crossing_limit() -> f64 {
    (2.0 + 10f64.sqrt()) / 6.0
}

/// Q at which the closed form crosses 1/√N_t, by bisection.
pub fn scheme2_sql_crossing(n_t: f64) -> f64 {
    let excess = |q: f64| scheme2_incomplete_closed_form(n_t, q) * n_t.sqrt() - 1.0;
    let (mut lo, mut hi) = (0.5, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheme2Sensitivity {
    pub sensitivity: SensitivityResult,
    /// Large-N_t asymptote of the non-recycled incomplete form.
    pub asymptote: Option<f64>,
}

pub fn scheme2_sensitivity(inp: &AnalyticInput) -> Result<Scheme2Sensitivity> {
    inp.validate()?;
    ensure(inp.q > 0.0, || "Q = 0 outcouples no atoms".into())?;
    let implied = 2.0 * inp.q * inp.r.sinh().powi(2);
    ensure((implied - inp.n_t).abs() <= 1e-9 * inp.n_t, || {
        format!("N_t = {} inconsistent with 2Q sinh²r = {implied}", inp.n_t)
    })?;
    let n = inp.n_t;
    let m = two_mode_spin_moments(inp.r, inp.q)?;
    if inp.recycled || inp.q == 1.0 {
        let d = 1.0 / (n * (n + 1.0 + inp.q)).sqrt();
        let (_, phi, slope, var) = spin_formula(&m, true);
        return Ok(Scheme2Sensitivity { sensitivity: analytic(d, phi, slope, var), asymptote: None });
    }
    let d = scheme2_incomplete_closed_form(n, inp.q);
    let (_, phi, slope, _) = spin_formula(&m, false);
    Ok(Scheme2Sensitivity {
        sensitivity: analytic(d, phi, slope, d * d * slope * slope),
        asymptote: Some(scheme2_asymptote(n, inp.q)),
    })
}

/// Which single-input signal to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme3Signal {
    Atomic,
    Partial,
    Full,
}

/// Linear single-input network: condensate, a2, b+, b−, LO+, LO−.
#[derive(Clone, Debug, PartialEq)]
pub struct Scheme3Network {
    pub atoms: AtomCount,
    pub squeeze: SqueezeSpec,
    pub theta_qst: f64,
    pub lo: LocalOscillator,
}

impl Scheme3Network {
    pub fn from_input(inp: &AnalyticInput) -> Result<Self> {
        inp.validate()?;
        ensure(inp.q > 0.0, || "Q = 0 outcouples no atoms".into())?;
        Ok(Self {
            atoms: AtomCount::Detected(inp.n_t),
            squeeze: SqueezeSpec::new(inp.r, FRAC_PI_2)?,
            theta_qst: theta_for_q(inp.q)?,
            lo: LocalOscillator::new(inp.n_lo, FRAC_PI_2)?,
        })
    }

    /// Coefficients on (a1, a2, LO+, b+, LO−, b−) output numbers.
    pub fn coefficients(&self, which: Scheme3Signal, n_a1: f64) -> [f64; 6] {
        let g = (n_a1 / self.lo.mean_number).sqrt();
        let q = undepleted_q(self.theta_qst);
        let (wa, wp, wm) = match which {
            Scheme3Signal::Atomic => (1.0, 0.0, 0.0),
            Scheme3Signal::Partial => (1.0, 0.0, g),
            Scheme3Signal::Full => (q.sqrt(), g * (1.0 - q).sqrt(), g),
        };
        // S_b = N_LO − N_b for each homodyne; every recycled term enters with −.
        [wa, -wa, -wp, wp, -wm, wm]
    }

    fn transferred(&self) -> Result<(GaussianState, f64)> {
        let (a2, bp, bm) = (1, 2, 3);
        let mut g = GaussianState::vacuum(6);
        g.squeeze_pair(bp, bm, &self.squeeze);
        let (s, c) = (0.5 * self.theta_qst).sin_cos();
        let mi = C64::new(0.0, -s);
        g.mix(a2, bp, [[C64::new(c, 0.0), mi], [mi, C64::new(c, 0.0)]]);
        let n_a1 = match self.atoms {
            AtomCount::Detected(n_t) => n_t - g.number(a2),
            AtomCount::Initial(n0) => n0 - g.number(a2),
        };
        if !(n_a1 > 0.0) {
            return Err(Error::Depleted("outcoupled atoms exceed the available total".into()));
        }
        Ok((g, n_a1))
    }

    pub fn condensate_after_transfer(&self) -> Result<f64> {
        Ok(self.transferred()?.1)
    }

    pub fn detected_atoms(&self) -> Result<f64> {
        let (g, n_a1) = self.transferred()?;
        Ok(n_a1 + g.number(1))
    }

    pub fn signal(&self, which: Scheme3Signal, phi: f64) -> Result<(f64, f64)> {
        let (a1, a2, bp, bm, lp, lm) = (0, 1, 2, 3, 4, 5);
        let (mut g, n_a1) = self.transferred()?;
        g.set_mean(a1, C64::new(n_a1.sqrt(), 0.0));
        g.set_mean(lp, self.lo.amplitude());
        g.set_mean(lm, self.lo.amplitude());
        g.beamsplitter(bp, lp, FRAC_PI_2);
        g.beamsplitter(bm, lm, FRAC_PI_2);
        g.beamsplitter(a1, a2, FRAC_PI_2);
        g.phase(a2, phi);
        g.beamsplitter(a1, a2, FRAC_PI_2);
        let w = self.coefficients(which, n_a1);
        Ok(g.combination(&[(a1, w[0]), (a2, w[1]), (lp, w[2]), (bp, w[3]), (lm, w[4]), (bm, w[5])]))
    }

    pub fn sensitivity(&self, which: Scheme3Signal, phi: f64) -> Result<SensitivityResult> {
        self.signal(which, phi)?;
        sensitivity_at(phi, |p| self.signal(which, p).expect("validated above"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheme3Sensitivity {
    pub atomic: SensitivityResult,
    pub partial: SensitivityResult,
    pub full: SensitivityResult,
}

pub fn scheme3_sensitivity(inp: &AnalyticInput) -> Result<Scheme3Sensitivity> {
    let net = Scheme3Network::from_input(inp)?;
    Ok(Scheme3Sensitivity {
        atomic: net.sensitivity(Scheme3Signal::Atomic, FRAC_PI_2)?,
        partial: net.sensitivity(Scheme3Signal::Partial, FRAC_PI_2)?,
        full: net.sensitivity(Scheme3Signal::Full, FRAC_PI_2)?,
    })
}

/// Complete-transfer double-input Δφ at phase φ (minimum 1/√(N_t(N_t+2))
/// as φ → 0).
pub fn scheme2_complete_at(r: f64, phi: f64) -> f64 {
    (1.0 + (4.0 * r).cosh() * phi.tan().powi(2)).sqrt() / (2.0 * r).sinh()
}
