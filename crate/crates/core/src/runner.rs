//! Experiment orchestration: builds ensembles for a [`SchemeConfig`], runs
//! them through transfer, optics and estimators, and produces sweeps,
//! Table I and the oracle cross-checks.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    self, AnalyticInput, AtomCount, Gain, Scheme1Network, Scheme3Network, Scheme3Signal, SchemeId,
};
use crate::dynamics::{
    self, max_transfer_pulse, pulse_area_for_theta, pulse_for_target_q, theta_for_q, undepleted_q,
    CouplingSchedule, QstModel, DEFAULT_STEPS,
};
use crate::error::{Error, Result};
use crate::estimators::{
    combination_stats, corrected_j_moments, corrected_number_moments, scheme2_sensitivity_from_moments,
    sensitivity_from_sweep, Estimate, Method, MomentSet, SensitivityResult, SweepPoint, DEFAULT_BATCHES,
    DEFAULT_FD_STEP,
};
use crate::network::{homodyne_mix, loss_channel, mach_zehnder_lossy, LocalOscillator, LossSite, LossSpec};
use crate::rng::NoiseKey;
use crate::sampler::{coherent_amplitude, squeeze_map, two_mode_map, ModeLabel, SqueezeSpec, TrajectoryEnsemble};
use crate::C64;

/// Photon-to-condensate ratio below which the transfer is treated as
/// undepleted and Q is inverted analytically.
pub const UNDEPLETED_RATIO: f64 = 1e-3;
pub const DEFAULT_TRAJECTORIES: usize = 10_000;
pub const TABLE1_TRAJECTORIES: usize = 100_000;
const PILOT_TRAJECTORIES: usize = 4_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    Tw,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Tw => "tw",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "tw" => Ok(Engine::Tw),
            _ => Err(Error::Validation(format!("unknown engine '{s}'"))),
        }
    }
}

/// How the phase-space engine applies the transfer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// RK4 integration of the mode equations (includes depletion).
    #[default]
    Integrate,
    /// Undepleted beamsplitter map applied trajectory-wise.
    Analytic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gains {
    #[default]
    Auto,
    Explicit {
        #[serde(default)]
        g: f64,
        #[serde(default)]
        g_plus: f64,
        #[serde(default)]
        g_minus: f64,
    },
}

fn default_theta() -> f64 {
    FRAC_PI_2
}
fn default_phi() -> Vec<f64> {
    vec![FRAC_PI_2]
}
fn default_steps() -> usize {
    DEFAULT_STEPS
}
fn default_n_lo() -> f64 {
    crate::network::DEFAULT_N_LO
}
fn default_trajectories() -> usize {
    DEFAULT_TRAJECTORIES
}
fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

/// Full experiment description. Field names match the CLI flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: SchemeId,
    /// Initial condensate number N_a1(t0).
    pub n_atoms: f64,
    pub r: f64,
    #[serde(default = "default_theta")]
    pub theta_sq: f64,
    /// Target transfer efficiency; Q = 1 when neither this nor a pulse area is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_area: Option<f64>,
    #[serde(default)]
    pub transfer: TransferMode,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Transmission per loss site.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub eta: BTreeMap<LossSite, f64>,
    /// Phases at which the swept signal is evaluated; the best is reported.
    #[serde(default = "default_phi")]
    pub phi: Vec<f64>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_n_lo")]
    pub n_lo: f64,
    #[serde(default = "default_theta")]
    pub theta_lo: f64,
    #[serde(default)]
    pub recycled: bool,
    #[serde(default)]
    pub gains: Gains,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    pub engine: Engine,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeId, n_atoms: f64, r: f64, engine: Engine) -> Self {
        Self {
            scheme,
            n_atoms,
            r,
            theta_sq: FRAC_PI_2,
            q: None,
            pulse_area: None,
            transfer: TransferMode::Integrate,
            steps: DEFAULT_STEPS,
            eta: BTreeMap::new(),
            phi: default_phi(),
            fd_step: DEFAULT_FD_STEP,
            n_lo: default_n_lo(),
            theta_lo: FRAC_PI_2,
            recycled: false,
            gains: Gains::Auto,
            trajectories: DEFAULT_TRAJECTORIES,
            seed: 0,
            engine,
        }
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = Some(q);
        self.pulse_area = None;
        self
    }

    pub fn recycled(mut self, on: bool) -> Self {
        self.recycled = on;
        self
    }

    pub fn trajectories(mut self, m: usize) -> Self {
        self.trajectories = m;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn squeeze(&self) -> Result<SqueezeSpec> {
        SqueezeSpec::new(self.r, self.theta_sq)
    }

    pub fn lo(&self) -> Result<LocalOscillator> {
        LocalOscillator::new(self.n_lo, self.theta_lo)
    }

    pub fn losses(&self) -> Vec<LossSpec> {
        self.eta.iter().map(|(&site, &eta)| LossSpec { site, eta }).collect()
    }

    fn eta_at(&self, site: LossSite) -> f64 {
        self.eta.get(&site).copied().unwrap_or(1.0)
    }

    /// Mean photon number entering the transfer, summed over probe modes.
    pub fn probe_photons(&self) -> f64 {
        let per_mode = self.r.sinh().powi(2);
        match self.scheme {
            SchemeId::SingleMode => self.eta_at(LossSite::PreQstOptical) * per_mode,
            SchemeId::TwoModeDoubleInput => 2.0 * per_mode,
            SchemeId::TwoModeSingleInput => per_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.n_atoms.is_finite() && self.n_atoms > 0.0) {
            return bad(format!("n-atoms must be positive, got {}", self.n_atoms));
        }
        self.squeeze().map_err(|e| Error::Validation(e.to_string()))?;
        self.lo().map_err(|e| Error::Validation(e.to_string()))?;
        if self.q.is_some() && self.pulse_area.is_some() {
            return bad("give either q or pulse-area, not both".into());
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q <= 1.0) {
                return bad(format!("q must lie in (0, 1], got {q}"));
            }
        }
        if let Some(a) = self.pulse_area {
            if !(a.is_finite() && a > 0.0) {
                return bad(format!("pulse-area must be positive, got {a}"));
            }
            if self.engine == Engine::Analytic {
                return bad("the analytic engine takes q, not a pulse area".into());
            }
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        for (site, eta) in &self.eta {
            LossSpec::new(*site, *eta).map_err(|e| Error::Validation(e.to_string()))?;
        }
        if !self.eta.is_empty() && self.scheme != SchemeId::SingleMode {
            return bad("loss sites are modeled for the single-mode scheme only".into());
        }
        if self.engine == Engine::Tw && self.trajectories < 100 {
            return bad(format!("tw engine needs at least 100 trajectories, got {}", self.trajectories));
        }
        if self.scheme != SchemeId::TwoModeDoubleInput {
            if self.phi.is_empty() {
                return bad("phi grid must be nonempty".into());
            }
            if !(self.fd_step > 0.0) {
                return bad("fd-step must be positive".into());
            }
        }
        if self.scheme == SchemeId::TwoModeDoubleInput && self.gains != Gains::Auto {
            return bad("the double-input scheme recycles without gains".into());
        }
        if self.recycled && self.scheme == SchemeId::SingleMode && self.eta_at(LossSite::TransmittedOptical) == 0.0 {
            return bad("recycling requested but the transmitted light is fully lost".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub signal: String,
    pub sensitivity: SensitivityResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: SchemeConfig,
    pub variants: Vec<VariantResult>,
    pub q_achieved: f64,
    /// Detected atom number (measured for tw).
    pub n_t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse_area: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub max_drift: f64,
    /// Recycling gains actually used, by name.
    pub gains: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSet>,
    pub wall_time_s: f64,
}

impl RunResult {
    pub fn variant(&self, name: &str) -> Option<&SensitivityResult> {
        self.variants.iter().find(|v| v.signal == name).map(|v| &v.sensitivity)
    }
}

pub fn run_scheme(config: &SchemeConfig) -> Result<RunResult> {
    config.validate()?;
    let start = Instant::now();
    let mut result = match config.engine {
        Engine::Analytic => run_analytic(config)?,
        Engine::Tw => match config.scheme {
            SchemeId::SingleMode => run_tw_single(config)?,
            SchemeId::TwoModeDoubleInput => run_tw_double(config)?,
            SchemeId::TwoModeSingleInput => run_tw_single_input(config)?,
        },
    };
    result.wall_time_s = start.elapsed().as_secs_f64();
    Ok(result)
}

fn blank_result(config: &SchemeConfig) -> RunResult {
    RunResult {
        config: config.clone(),
        variants: Vec::new(),
        q_achieved: 0.0,
        n_t: 0.0,
        pulse_area: None,
        steps: None,
        max_drift: 0.0,
        gains: BTreeMap::new(),
        moments: None,
        wall_time_s: 0.0,
    }
}

fn push(res: &mut RunResult, name: &str, s: SensitivityResult) {
    res.variants.push(VariantResult { signal: name.into(), sensitivity: s });
}

/// Best (smallest Δφ) over the configured phases.
fn best_over_phases(phis: &[f64], f: impl Fn(f64) -> Result<SensitivityResult>) -> Result<SensitivityResult> {
    let mut best: Option<SensitivityResult> = None;
    let mut last_err = None;
    for &phi in phis {
        match f(phi) {
            Ok(s) if best.is_none_or(|b| s.delta_phi < b.delta_phi) => best = Some(s),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Indeterminate("no phase evaluated".into())))
}

fn run_analytic(config: &SchemeConfig) -> Result<RunResult> {
    let q = config.q.unwrap_or(1.0);
    let theta = theta_for_q(q)?;
    let mut res = blank_result(config);
    res.q_achieved = q;
    let squeeze = config.squeeze()?;
    let lo = config.lo()?;
    match config.scheme {
        SchemeId::SingleMode => {
            let mut net = Scheme1Network {
                atoms: AtomCount::Initial(config.n_atoms),
                squeeze,
                theta_qst: theta,
                losses: config.losses(),
                lo,
                gain: Gain::None,
            };
            res.n_t = net.detected_atoms()?;
            push(&mut res, "S_a", best_over_phases(&config.phi, |p| net.sensitivity(p))?);
            if config.recycled {
                net.gain = match config.gains {
                    Gains::Auto => Gain::Auto,
                    Gains::Explicit { g, .. } => Gain::Explicit(g),
                };
                res.gains.insert("g".into(), net.gain_value(net.condensate_after_transfer()?)?);
                push(&mut res, "S", best_over_phases(&config.phi, |p| net.sensitivity(p))?);
            }
        }
        SchemeId::TwoModeDoubleInput => {
            let inp = AnalyticInput::two_mode(config.r, q, false);
            res.n_t = inp.n_t;
            push(&mut res, "S_a", analytics::scheme2_sensitivity(&inp)?.sensitivity);
            if config.recycled {
                let inp = AnalyticInput { recycled: true, ..inp };
                push(&mut res, "S", analytics::scheme2_sensitivity(&inp)?.sensitivity);
            }
        }
        SchemeId::TwoModeSingleInput => {
            let net = Scheme3Network { atoms: AtomCount::Initial(config.n_atoms), squeeze, theta_qst: theta, lo };
            res.n_t = net.detected_atoms()?;
            push(&mut res, "S_a", best_over_phases(&config.phi, |p| net.sensitivity(Scheme3Signal::Atomic, p))?);
            if config.recycled {
                let n_a1 = net.condensate_after_transfer()?;
                let g = (n_a1 / lo.mean_number).sqrt();
                res.gains.insert("g_plus".into(), g);
                res.gains.insert("g_minus".into(), g);
                push(&mut res, "S_partial", best_over_phases(&config.phi, |p| net.sensitivity(Scheme3Signal::Partial, p))?);
                push(&mut res, "S", best_over_phases(&config.phi, |p| net.sensitivity(Scheme3Signal::Full, p))?);
            }
        }
    }
    Ok(res)
}

/// Chooses the transfer schedule for a tw run from a pilot ensemble.
fn choose_schedule(
    config: &SchemeConfig,
    ens: &TrajectoryEnsemble,
    model: QstModel,
) -> Result<(CouplingSchedule, f64)> {
    let n0 = config.n_atoms;
    if config.transfer == TransferMode::Analytic {
        let theta = match (config.q, config.pulse_area) {
            (_, Some(a)) => (2.0 * a * n0.sqrt()).min(std::f64::consts::PI),
            (q, None) => theta_for_q(q.unwrap_or(1.0))?,
        };
        return Ok((CouplingSchedule::Analytic { theta_qst: theta }, theta));
    }
    let area = match (config.q, config.pulse_area) {
        (_, Some(a)) => a,
        (q, None) => {
            let q = q.unwrap_or(1.0);
            if config.probe_photons() / n0 <= UNDEPLETED_RATIO {
                pulse_area_for_theta(theta_for_q(q)?, n0)
            } else {
                let pilot = ens.truncated(PILOT_TRAJECTORIES)?;
                let choice = if q >= 1.0 {
                    max_transfer_pulse(&pilot, model, n0)?
                } else {
                    pulse_for_target_q(&pilot, model, n0, q)?
                };
                choice.pulse_area
            }
        }
    };
    let schedule = CouplingSchedule::Integrate { pulse_area: area, steps: config.steps };
    Ok((schedule, schedule.nominal_theta(n0)))
}

fn idx(ens: &TrajectoryEnsemble, l: ModeLabel) -> usize {
    ens.index(l).expect("layout fixed by the runner")
}

fn corrected_mean(ens: &TrajectoryEnsemble, labels: &[ModeLabel]) -> f64 {
    let ix: Vec<usize> = labels.iter().map(|&l| idx(ens, l)).collect();
    ens.rows().map(|r| ix.iter().map(|&i| r[i].norm_sqr() - 0.5).sum::<f64>()).sum::<f64>() / ens.count() as f64
}

/// Sweep-based sensitivity of a per-trajectory symbol S(t, φ).
fn tw_sweep<F>(config: &SchemeConfig, count: usize, ordering: f64, symbol: F) -> Result<SensitivityResult>
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    let h = config.fd_step;
    best_over_phases(&config.phi, |phi| {
        let points: Vec<SweepPoint> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|k| {
                let p = phi + k * h;
                let (mean, variance) = combination_stats(count, DEFAULT_BATCHES, ordering, |t| symbol(t, p))?;
                Ok(SweepPoint { phi: p, mean, variance })
            })
            .collect::<Result<_>>()?;
        sensitivity_from_sweep(&points, phi, Method::TwSweep)
    })
}

fn run_tw_single(config: &SchemeConfig) -> Result<RunResult> {
    use ModeLabel::*;
    let squeeze = config.squeeze()?;
    let lo = config.lo()?;
    let (n0, m) = (config.n_atoms, config.trajectories);
    let eta_pre = config.eta_at(LossSite::PreQstOptical);
    let mut ens = TrajectoryEnsemble::generate(vec![A1, A2, B, Lo], m, config.seed, |t, k: &NoiseKey, row| {
        row[0] = coherent_amplitude(n0, k.noise(t, A1.channel()));
        row[1] = k.noise(t, A2.channel());
        let b = squeeze_map(&squeeze, k.noise(t, B.channel()));
        row[2] = loss_channel(b, eta_pre, k.noise(t, LossSite::PreQstOptical.channel(0)));
        row[3] = lo.amplitude() + k.noise(t, Lo.channel());
    })?;
    let input = ens.clone();
    let model = QstModel::single();
    let (schedule, theta) = choose_schedule(config, &ens, model)?;
    let (drift, steps) = dynamics::evolve_ensemble_refined(&mut ens, model, &schedule)?;
    let q_achieved = dynamics::qst_efficiency(&ens, &input, model)?;

    let key = NoiseKey::new(config.seed);
    let (eta_at, eta_tr) = (config.eta_at(LossSite::PostQstAtomic), config.eta_at(LossSite::TransmittedOptical));
    ens.par_rows_mut().enumerate().for_each(|(t, row)| {
        let t = t as u64;
        row[1] = loss_channel(row[1], eta_at, key.noise(t, LossSite::PostQstAtomic.channel(0)));
        row[2] = loss_channel(row[2], eta_tr, key.noise(t, LossSite::TransmittedOptical.channel(0)));
    });

    let mut res = blank_result(config);
    res.q_achieved = q_achieved;
    res.max_drift = drift;
    record_schedule(&mut res, &schedule, steps);
    res.moments = Some(corrected_number_moments(&ens)?);
    let n_a1 = corrected_mean(&ens, &[A1]);
    let eta_int = config.eta_at(LossSite::SymmetricInterferometer);
    res.n_t = eta_int * corrected_mean(&ens, &[A1, A2]);
    if !lo.is_bright_for(corrected_mean(&ens, &[B])) {
        log::warn!("local oscillator is less than 10³× brighter than the probe");
    }

    let (ia1, ia2, ib, ilo) = (idx(&ens, A1), idx(&ens, A2), idx(&ens, B), idx(&ens, Lo));
    let homodyne: Vec<f64> = ens.rows().map(|r| homodyne_mix(r[ib], r[ilo]).signal).collect();
    let ens_ref = &ens;
    let atomic = |t: usize, phi: f64| {
        let r = ens_ref.row(t);
        let noise = (
            key.noise(t as u64, LossSite::SymmetricInterferometer.channel(0)),
            key.noise(t as u64, LossSite::SymmetricInterferometer.channel(1)),
        );
        let (o1, o2) = mach_zehnder_lossy(r[ia1], r[ia2], phi, eta_int, noise);
        o1.norm_sqr() - o2.norm_sqr()
    };
    push(&mut res, "S_a", tw_sweep(config, m, 0.5, atomic)?);
    if config.recycled {
        let gain = match config.gains {
            Gains::Explicit { g, .. } => g,
            Gains::Auto => {
                if !(theta > 0.0) {
                    return Err(Error::Validation("recycling gain diverges at zero transfer".into()));
                }
                (n_a1 / lo.mean_number).sqrt() / (0.5 * theta).tan()
            }
        };
        res.gains.insert("g".into(), gain);
        let ordering = 0.5 * (1.0 + gain * gain);
        push(&mut res, "S", tw_sweep(config, m, ordering, |t, phi| atomic(t, phi) - gain * homodyne[t])?);
    }
    Ok(res)
}

fn record_schedule(res: &mut RunResult, schedule: &CouplingSchedule, steps: usize) {
    if let CouplingSchedule::Integrate { pulse_area, .. } = *schedule {
        res.pulse_area = Some(pulse_area);
        res.steps = Some(steps);
    }
}

fn run_tw_double(config: &SchemeConfig) -> Result<RunResult> {
    use ModeLabel::*;
    let squeeze = config.squeeze()?;
    let (n0, m) = (config.n_atoms, config.trajectories);
    let mut ens = TrajectoryEnsemble::generate(
        vec![A1, APlus, AMinus, BPlus, BMinus],
        m,
        config.seed,
        |t, k: &NoiseKey, row| {
            row[0] = coherent_amplitude(n0, k.noise(t, A1.channel()));
            row[1] = k.noise(t, APlus.channel());
            row[2] = k.noise(t, AMinus.channel());
            let (p, q) = two_mode_map(&squeeze, k.noise(t, BPlus.channel()), k.noise(t, BMinus.channel()));
            row[3] = p;
            row[4] = q;
        },
    )?;
    let input = ens.clone();
    let model = QstModel::FiveMode;
    let (schedule, _) = choose_schedule(config, &ens, model)?;
    let (drift, steps) = dynamics::evolve_ensemble_refined(&mut ens, model, &schedule)?;
    let mut res = blank_result(config);
    res.q_achieved = dynamics::qst_efficiency(&ens, &input, model)?;
    res.max_drift = drift;
    record_schedule(&mut res, &schedule, steps);
    res.n_t = corrected_mean(&ens, &[APlus, AMinus]);
    let moments = corrected_j_moments(&ens)?;
    push(&mut res, "S_a", scheme2_sensitivity_from_moments(&moments, false)?);
    if config.recycled {
        push(&mut res, "S", scheme2_sensitivity_from_moments(&moments, true)?);
    }
    res.moments = Some(moments);
    Ok(res)
}

fn run_tw_single_input(config: &SchemeConfig) -> Result<RunResult> {
    use ModeLabel::*;
    let squeeze = config.squeeze()?;
    let lo = config.lo()?;
    let (n0, m) = (config.n_atoms, config.trajectories);
    let mut ens = TrajectoryEnsemble::generate(
        vec![A1, A2, BPlus, BMinus, LoPlus, LoMinus],
        m,
        config.seed,
        |t, k: &NoiseKey, row| {
            row[0] = coherent_amplitude(n0, k.noise(t, A1.channel()));
            row[1] = k.noise(t, A2.channel());
            let (p, q) = two_mode_map(&squeeze, k.noise(t, BPlus.channel()), k.noise(t, BMinus.channel()));
            row[2] = p;
            row[3] = q;
            row[4] = lo.amplitude() + k.noise(t, LoPlus.channel());
            row[5] = lo.amplitude() + k.noise(t, LoMinus.channel());
        },
    )?;
    let input = ens.clone();
    let model = QstModel::ThreeMode([A1, A2, BPlus]);
    let (schedule, theta) = choose_schedule(config, &ens, model)?;
    let (drift, steps) = dynamics::evolve_ensemble_refined(&mut ens, model, &schedule)?;
    let mut res = blank_result(config);
    res.q_achieved = dynamics::qst_efficiency(&ens, &input, model)?;
    res.max_drift = drift;
    record_schedule(&mut res, &schedule, steps);
    res.moments = Some(corrected_number_moments(&ens)?);
    let n_a1 = corrected_mean(&ens, &[A1]);
    res.n_t = corrected_mean(&ens, &[A1, A2]);

    let (ia1, ia2) = (idx(&ens, A1), idx(&ens, A2));
    let (ibp, ibm, ilp, ilm) = (idx(&ens, BPlus), idx(&ens, BMinus), idx(&ens, LoPlus), idx(&ens, LoMinus));
    let sb: Vec<(f64, f64)> = ens
        .rows()
        .map(|r| (homodyne_mix(r[ibp], r[ilp]).signal, homodyne_mix(r[ibm], r[ilm]).signal))
        .collect();
    let ens_ref = &ens;
    let atomic = |t: usize, phi: f64| {
        let r = ens_ref.row(t);
        let (o1, o2) = mach_zehnder_lossy(r[ia1], r[ia2], phi, 1.0, (C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        o1.norm_sqr() - o2.norm_sqr()
    };
    push(&mut res, "S_a", tw_sweep(config, m, 0.5, atomic)?);
    if config.recycled {
        let (gp, gm) = match config.gains {
            Gains::Explicit { g_plus, g_minus, .. } => (g_plus, g_minus),
            Gains::Auto => {
                let g = (n_a1 / lo.mean_number).sqrt();
                (g, g)
            }
        };
        res.gains.insert("g_plus".into(), gp);
        res.gains.insert("g_minus".into(), gm);
        let q = undepleted_q(theta);
        let partial = |t: usize, phi: f64| atomic(t, phi) - gm * sb[t].1;
        push(&mut res, "S_partial", tw_sweep(config, m, 0.5 * (1.0 + gm * gm), partial)?);
        let (wa, wp) = (q.sqrt(), gp * (1.0 - q).sqrt());
        let full = |t: usize, phi: f64| wa * atomic(t, phi) - wp * sb[t].0 - gm * sb[t].1;
        push(&mut res, "S", tw_sweep(config, m, 0.5 * (wa * wa + wp * wp + gm * gm), full)?);
    }
    Ok(res)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    R,
    Q,
    Phi,
    Eta,
    #[serde(rename = "n_t")]
    NT,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Ok(SweepAxis::R),
            "q" => Ok(SweepAxis::Q),
            "phi" => Ok(SweepAxis::Phi),
            "eta" => Ok(SweepAxis::Eta),
            "n_t" | "nt" => Ok(SweepAxis::NT),
            _ => Err(Error::Validation(format!("unknown sweep axis '{s}'"))),
        }
    }
}

/// One output row; column order is fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub axis_value: Option<f64>,
    pub signal_variant: String,
    pub delta_phi: f64,
    pub stderr: f64,
    pub phi_opt: f64,
    pub q_achieved: f64,
    pub n_t: f64,
    pub engine: String,
}

pub fn rows_from(res: &RunResult, axis_value: Option<f64>, suffix: &str) -> Vec<CsvRow> {
    res.variants
        .iter()
        .map(|v| CsvRow {
            axis_value,
            signal_variant: format!("{}{suffix}", v.signal),
            delta_phi: v.sensitivity.delta_phi,
            stderr: v.sensitivity.stderr,
            phi_opt: v.sensitivity.phi_opt,
            q_achieved: res.q_achieved,
            n_t: res.n_t,
            engine: res.config.engine.name().into(),
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Initial condensate that yields `n_t` detected atoms on average under the
/// configured losses (transfer treated as undepleted).
pub fn initial_atoms_for_detected(config: &SchemeConfig, n_t: f64) -> f64 {
    let q = config.q.unwrap_or(1.0);
    let photons = config.probe_photons();
    let eta_int = config.eta_at(LossSite::SymmetricInterferometer);
    n_t / eta_int + (1.0 - config.eta_at(LossSite::PostQstAtomic)) * q * photons
}

/// Runs `config` at each axis value for each engine and returns CSV rows.
///
/// For the `eta` axis, each value is applied at every configured loss site
/// (all four when none are configured), one site at a time, and
/// `n-atoms` is read as the detected atom number to hold fixed.
pub fn sweep(config: &SchemeConfig, axis: SweepAxis, values: &[f64], engines: &[Engine]) -> Result<Vec<CsvRow>> {
    if values.is_empty() {
        return Err(Error::Validation("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Validation("sweep values must be sorted ascending".into()));
    }
    match (axis, config.scheme) {
        (SweepAxis::Phi, SchemeId::TwoModeDoubleInput) => {
            return Err(Error::Validation("the double-input scheme reports its optimal phase; phi cannot be swept".into()))
        }
        (SweepAxis::Eta, s) if s != SchemeId::SingleMode => {
            return Err(Error::Validation("loss sweeps apply to the single-mode scheme only".into()))
        }
        _ => {}
    }
    let mut rows = Vec::new();
    for &engine in engines {
        for &v in values {
            let mut c = config.clone();
            c.engine = engine;
            match axis {
                SweepAxis::R => c.r = v,
                SweepAxis::Q => {
                    c.q = Some(v);
                    c.pulse_area = None;
                }
                SweepAxis::Phi => c.phi = vec![v],
                SweepAxis::NT => match c.scheme {
                    SchemeId::TwoModeDoubleInput => {
                        let q = c.q.unwrap_or(1.0);
                        c.r = (v / (2.0 * q)).sqrt().asinh();
                    }
                    _ => c.n_atoms = v,
                },
                SweepAxis::Eta => {
                    let sites: Vec<LossSite> =
                        if config.eta.is_empty() { LossSite::ALL.to_vec() } else { config.eta.keys().copied().collect() };
                    for site in sites {
                        let mut cs = c.clone();
                        cs.eta = BTreeMap::from([(site, v)]);
                        cs.n_atoms = initial_atoms_for_detected(&cs, config.n_atoms);
                        let res = run_scheme(&cs)?;
                        rows.extend(rows_from(&res, Some(v), &format!("@{site}")));
                    }
                    continue;
                }
            }
            let res = run_scheme(&c)?;
            rows.extend(rows_from(&res, Some(v), ""));
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Entry {
    pub scheme: SchemeId,
    pub column: String,
    pub reference: f64,
    pub delta_phi: f64,
    pub stderr: f64,
    pub q_achieved: f64,
    pub n_t: f64,
    pub relative_deviation: f64,
}

/// Table I configurations: (scheme, column label, reference value, config, variant).
pub fn table1_configs(trajectories: usize, seed: u64) -> Vec<(String, f64, SchemeConfig, &'static str)> {
    let base = |scheme, r| SchemeConfig::new(scheme, 1e6, r, Engine::Tw).trajectories(trajectories).seed(seed);
    let row2_complete_r = (6.2e5f64 / 2.0).sqrt().asinh();
    vec![
        ("S_a, Q=1".into(), 1e-5, base(SchemeId::SingleMode, 4.8).with_q(1.0), "S_a"),
        ("S_a, Q=0.2".into(), 9e-4, base(SchemeId::SingleMode, 4.8).with_q(0.2), "S_a"),
        ("S, Q=0.2".into(), 1.9e-5, base(SchemeId::SingleMode, 4.8).with_q(0.2).recycled(true), "S"),
        ("S_a, Q=1".into(), 1.6e-6, base(SchemeId::TwoModeDoubleInput, row2_complete_r).with_q(1.0), "S_a"),
        ("S_a, Q=0.2".into(), 2.1e-3, base(SchemeId::TwoModeDoubleInput, 7.8).with_q(0.2), "S_a"),
        ("S, Q=0.2".into(), 2e-6, base(SchemeId::TwoModeDoubleInput, 7.8).with_q(0.2).recycled(true), "S"),
        ("S_a, Q=1".into(), 3.2e-2, base(SchemeId::TwoModeSingleInput, 3.8).with_q(1.0), "S_a"),
        ("S_a, Q=0.2".into(), 1.4e-2, base(SchemeId::TwoModeSingleInput, 3.8).with_q(0.2), "S_a"),
        ("S, Q=0.2".into(), 1.6e-4, base(SchemeId::TwoModeSingleInput, 3.8).with_q(0.2).recycled(true), "S"),
    ]
}

pub fn reproduce_table1(trajectories: usize, seed: u64) -> Result<Vec<Table1Entry>> {
    table1_configs(trajectories, seed)
        .into_iter()
        .map(|(column, reference, config, variant)| {
            let res = run_scheme(&config)?;
            let s = res
                .variant(variant)
                .ok_or_else(|| Error::Indeterminate(format!("missing variant {variant}")))?;
            Ok(Table1Entry {
                scheme: config.scheme,
                column,
                reference,
                delta_phi: s.delta_phi,
                stderr: s.stderr,
                q_achieved: res.q_achieved,
                n_t: res.n_t,
                relative_deviation: s.delta_phi / reference - 1.0,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Oracle and estimator cross-checks run by the `validate` subcommand.
pub fn validate_suite(trajectories: usize, seed: u64) -> Result<Vec<ValidationCheck>> {
    use crate::oracle::{exact_evolve, prepare_gaussian_fock, FockState, GaussianKind, TrilinearModel};
    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(ValidationCheck { name: name.into(), passed, detail });
    };

    // Transfer against exact evolution: 50 atoms, one squeezed photon on average.
    let r = 1f64.asinh();
    let n0 = 50.0;
    let spec = SqueezeSpec::new(r, FRAC_PI_2)?;
    let area = pulse_area_for_theta(std::f64::consts::FRAC_PI_2, n0);
    let coh = prepare_gaussian_fock(GaussianKind::Coherent { alpha: C64::new(n0.sqrt(), 0.0) }, 110)?;
    let sq = prepare_gaussian_fock(GaussianKind::Squeezed(spec), 72)?;
    let exact = exact_evolve(&coh.tensor(&FockState::vacuum(72)).tensor(&sq), TrilinearModel::ThreeMode, area)?;
    let exact_n2 = exact.expect_number(1);
    let mut ens = TrajectoryEnsemble::generate(dynamics::THREE_MODE.to_vec(), trajectories, seed, |t, k, row| {
        row[0] = coherent_amplitude(n0, k.noise(t, ModeLabel::A1.channel()));
        row[1] = k.noise(t, ModeLabel::A2.channel());
        row[2] = squeeze_map(&spec, k.noise(t, ModeLabel::B.channel()));
    })?;
    dynamics::evolve_ensemble(&mut ens, QstModel::single(), &CouplingSchedule::Integrate { pulse_area: area, steps: 400 })?;
    let tw = corrected_number_moments(&ens)?;
    let n2 = tw.mode(ModeLabel::A2).expect("present").n;
    let z = (n2.value - exact_n2) / n2.stderr;
    check("transfer_vs_fock_50_atoms", z.abs() <= 5.0, format!("tw {:.5} ± {:.5}, exact {exact_n2:.5} ({z:+.2} s.e.)", n2.value, n2.stderr));

    // Coherent number variance.
    let c = crate::sampler::sample_coherent(100.0, trajectories.max(100_000), seed)?;
    let ce = TrajectoryEnsemble::from_columns(vec![ModeLabel::A1], &[c], seed)?;
    let v = corrected_number_moments(&ce)?.modes[0].variance;
    check("coherent_number_variance", v.within(100.0, 5.0), format!("{:.3} ± {:.3} (exact 100)", v.value, v.stderr));

    // Pair correlation of the transferred two-mode squeezed vacuum.
    let spec = SqueezeSpec::new(1.0, FRAC_PI_2)?;
    let pairs = crate::sampler::sample_two_mode_squeezed(&spec, trajectories, seed)?;
    let (p, mm): (Vec<C64>, Vec<C64>) = pairs
        .into_iter()
        .map(|(p, m)| (C64::new(0.0, -1.0) * p, C64::new(0.0, -1.0) * m))
        .unzip();
    let te = TrajectoryEnsemble::from_columns(vec![ModeLabel::APlus, ModeLabel::AMinus], &[p, mm], seed)?;
    let spin = corrected_j_moments(&te)?.spin.expect("computed");
    let nt = 2.0 * 1f64.sinh().powi(2);
    check("pair_jz2_zero", spin.jz2.within(0.0, 5.0), format!("⟨Jz²⟩ = {:.4} ± {:.4}", spin.jz2.value, spin.jz2.stderr));
    check(
        "pair_jx2_heisenberg",
        Estimate { value: 4.0 * spin.jx2.value, stderr: 4.0 * spin.jx2.stderr }.within(nt * (nt + 2.0), 5.0),
        format!("4⟨Jx²⟩ = {:.4} ± {:.4}, N_t(N_t+2) = {:.4}", 4.0 * spin.jx2.value, 4.0 * spin.jx2.stderr, nt * (nt + 2.0)),
    );
    Ok(checks)
}
