//! Linear optics after the transfer: beamsplitters, the Mach-Zehnder
//! sequence, virtual-beamsplitter loss and homodyne mixing. All maps act on
//! single-trajectory amplitudes.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::Channel;
use crate::C64;

pub const DEFAULT_N_LO: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSite {
    /// Squeezed light before it reaches the atoms.
    PreQstOptical,
    /// Outcoupled atoms before the interferometer.
    PostQstAtomic,
    /// Light transmitted through the transfer, before homodyne detection.
    TransmittedOptical,
    /// Both interferometer arms, after the first beamsplitter.
    SymmetricInterferometer,
}

impl LossSite {
    pub const ALL: [LossSite; 4] = [
        LossSite::PreQstOptical,
        LossSite::PostQstAtomic,
        LossSite::TransmittedOptical,
        LossSite::SymmetricInterferometer,
    ];

    /// Noise channel of the vacuum entering at this site on mode `k`.
    pub fn channel(self, k: u16) -> Channel {
        Channel(32 + 4 * self as u16 + k)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossSite::PreQstOptical => "pre_qst_optical",
            LossSite::PostQstAtomic => "post_qst_atomic",
            LossSite::TransmittedOptical => "transmitted_optical",
            LossSite::SymmetricInterferometer => "symmetric_interferometer",
        }
    }
}

impl fmt::Display for LossSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossSite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossSite::ALL
            .into_iter()
            .find(|site| site.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown loss site '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub site: LossSite,
    pub eta: f64,
}

impl LossSpec {
    pub fn new(site: LossSite, eta: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&eta), || format!("transmission must lie in [0, 1], got {eta}"))?;
        Ok(Self { site, eta })
    }
}

/// `site=eta`, as accepted on the command line.
impl FromStr for LossSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (site, eta) = s
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected <site>=<eta>, got '{s}'")))?;
        let eta: f64 = eta
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("bad transmission '{eta}'")))?;
        LossSpec::new(site.trim().parse()?, eta).map_err(|e| Error::Validation(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOscillator {
    pub mean_number: f64,
    pub theta_lo: f64,
}

impl Default for LocalOscillator {
    fn default() -> Self {
        Self { mean_number: DEFAULT_N_LO, theta_lo: FRAC_PI_2 }
    }
}

impl LocalOscillator {
    pub fn new(mean_number: f64, theta_lo: f64) -> Result<Self> {
        ensure(mean_number.is_finite() && mean_number > 0.0, || {
            format!("local oscillator number must be positive, got {mean_number}")
        })?;
        ensure(theta_lo.is_finite(), || "local oscillator phase must be finite".into())?;
        Ok(Self { mean_number, theta_lo })
    }

    /// Coherent amplitude √N·(−i)·e^{−iθ}: with the homodyne mix below this
    /// makes S_b/√N the quadrature e^{iθ}b + e^{−iθ}b*.
    pub fn amplitude(&self) -> C64 {
        C64::from_polar(self.mean_number.sqrt(), -self.theta_lo - FRAC_PI_2)
    }

    pub fn is_bright_for(&self, signal_photons: f64) -> bool {
        self.mean_number >= 1e3 * signal_photons
    }
}

#[inline]
pub fn beamsplitter(a: C64, b: C64, theta_bs: f64) -> (C64, C64) {
    debug_assert!(theta_bs.is_finite());
    let (s, c) = (0.5 * theta_bs).sin_cos();
    let mi = C64::new(0.0, -s);
    (a * c + mi * b, b * c + mi * a)
}

#[inline]
pub fn phase_shift(a: C64, phi: f64) -> C64 {
    a * C64::from_polar(1.0, phi)
}

#[inline]
pub fn mach_zehnder(a1: C64, a2: C64, phi: f64) -> (C64, C64) {
    let (u, v) = beamsplitter(a1, a2, FRAC_PI_2);
    beamsplitter(u, phase_shift(v, phi), FRAC_PI_2)
}

/// Mach-Zehnder with equal loss on both arms, applied before the phase.
#[inline]
pub fn mach_zehnder_lossy(a1: C64, a2: C64, phi: f64, eta: f64, noise: (C64, C64)) -> (C64, C64) {
    let (u, v) = beamsplitter(a1, a2, FRAC_PI_2);
    let (u, v) = (loss_channel(u, eta, noise.0), loss_channel(v, eta, noise.1));
    beamsplitter(u, phase_shift(v, phi), FRAC_PI_2)
}

#[inline]
pub fn loss_channel(c: C64, eta: f64, vacuum_noise: C64) -> C64 {
    c * eta.sqrt() + vacuum_noise * (1.0 - eta).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomodyneOutput {
    pub b_out: C64,
    pub lo_out: C64,
    /// Phase-space symbol of N_LO,out − N_b,out. The ordering correction
    /// cancels in the mean; in variances it contributes −1/2 per unit gain².
    pub signal: f64,
}

#[inline]
pub fn homodyne_mix(b: C64, lo: C64) -> HomodyneOutput {
    let mi = C64::new(0.0, -1.0);
    let b_out = (b + mi * lo) * FRAC_1_SQRT_2;
    let lo_out = (lo + mi * b) * FRAC_1_SQRT_2;
    HomodyneOutput { b_out, lo_out, signal: lo_out.norm_sqr() - b_out.norm_sqr() }
}
