//! Atom-light state transfer: the undepleted beamsplitter solution and RK4
//! integration of the trilinear mode equations with a uniform pulse.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::sampler::{ModeLabel, ModeVector, TrajectoryEnsemble};
use crate::C64;

/// Relative drift allowed on every per-trajectory conserved sum.
pub const DRIFT_TOL: f64 = 1e-8;
pub const DEFAULT_STEPS: usize = 400;

const HBAR: f64 = 1.054_571_817e-34;
const EPS0: f64 = 8.854_187_812_8e-12;
const C_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CouplingSchedule {
    /// Undepleted solution with a fixed mixing angle θ_QST ∈ [0, π].
    Analytic { theta_qst: f64 },
    /// Uniform pulse of total area g∫f dt integrated over `steps` RK4 steps.
    Integrate { pulse_area: f64, steps: usize },
}

impl CouplingSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CouplingSchedule::Analytic { theta_qst } => check_theta(theta_qst),
            CouplingSchedule::Integrate { pulse_area, steps } => {
                ensure(pulse_area.is_finite() && pulse_area >= 0.0, || {
                    format!("pulse area must be finite and >= 0, got {pulse_area}")
                })?;
                ensure(steps >= 1, || "integrator needs at least one step".into())
            }
        }
    }

    /// Nominal mixing angle 2·area·√N_a1 (exact in the undepleted limit).
    pub fn nominal_theta(&self, n_a1: f64) -> f64 {
        match *self {
            CouplingSchedule::Analytic { theta_qst } => theta_qst,
            CouplingSchedule::Integrate { pulse_area, .. } => 2.0 * pulse_area * n_a1.sqrt(),
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    ensure((0.0..=PI).contains(&theta), || format!("θ_QST must lie in [0, π], got {theta}"))
}

pub fn pulse_area_for_theta(theta_qst: f64, n_a1: f64) -> f64 {
    theta_qst / (2.0 * n_a1.sqrt())
}

/// Undepleted Q(θ) = sin²(θ/2) and its inverse on [0, π].
pub fn undepleted_q(theta_qst: f64) -> f64 {
    (0.5 * theta_qst).sin().powi(2)
}

pub fn theta_for_q(q: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&q), || format!("Q must lie in [0, 1], got {q}"))?;
    Ok(2.0 * q.sqrt().asin())
}

/// Beamsplitter-like transfer between outcoupled atoms and probe light.
pub fn analytic_qst(a2: C64, b: C64, theta_qst: f64) -> Result<(C64, C64)> {
    check_theta(theta_qst)?;
    Ok(qst_mix(a2, b, theta_qst))
}

#[inline]
pub(crate) fn qst_mix(a2: C64, b: C64, theta: f64) -> (C64, C64) {
    let (s, c) = (0.5 * theta).sin_cos();
    let mi = C64::new(0.0, -s);
    (a2 * c + mi * b, b * c + mi * a2)
}

#[inline]
fn rk4<const N: usize>(y: &mut [C64; N], h: f64, steps: usize, f: impl Fn(&[C64; N]) -> [C64; N]) {
    for _ in 0..steps {
        rk4_step(y, h, &f);
    }
}

#[inline]
fn rk4_step<const N: usize>(y: &mut [C64; N], h: f64, f: &impl Fn(&[C64; N]) -> [C64; N]) {
    let shift = |y: &[C64; N], k: &[C64; N], s: f64| -> [C64; N] {
        let mut out = *y;
        for i in 0..N {
            out[i] += k[i] * s;
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&shift(y, &k1, 0.5 * h));
    let k3 = f(&shift(y, &k2, 0.5 * h));
    let k4 = f(&shift(y, &k3, h));
    for i in 0..N {
        y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
    }
}

/// Right-hand side of the three-mode equations [a1, a2, b] for coupling `p`.
#[inline]
fn three_rhs(p: f64) -> impl Fn(&[C64; 3]) -> [C64; 3] {
    let mip = C64::new(0.0, -p);
    move |y| [mip * y[1] * y[2].conj(), mip * y[0] * y[2], mip * y[1] * y[0].conj()]
}

/// Right-hand side of the five-mode equations [a1, a+, a−, b+, b−].
#[inline]
fn five_rhs(p: f64) -> impl Fn(&[C64; 5]) -> [C64; 5] {
    let mip = C64::new(0.0, -p);
    move |y| {
        [
            mip * (y[1] * y[3].conj() + y[2] * y[4].conj()),
            mip * y[0] * y[3],
            mip * y[0] * y[4],
            mip * y[0].conj() * y[1],
            mip * y[0].conj() * y[2],
        ]
    }
}

fn three_invariants(y: &[C64; 3]) -> [f64; 2] {
    [y[0].norm_sqr() + y[1].norm_sqr(), y[1].norm_sqr() + y[2].norm_sqr()]
}

fn five_invariants(y: &[C64; 5]) -> [f64; 3] {
    [
        y[0].norm_sqr() + y[1].norm_sqr() + y[2].norm_sqr(),
        y[1].norm_sqr() + y[3].norm_sqr(),
        y[2].norm_sqr() + y[4].norm_sqr(),
    ]
}

fn relative_drift<const K: usize>(before: &[f64; K], after: &[f64; K]) -> f64 {
    before
        .iter()
        .zip(after)
        .map(|(b, a)| if *b > 0.0 { (a - b).abs() / b } else { a.abs() })
        .fold(0.0, f64::max)
}

/// Integrates one three-mode trajectory in place and returns its drift.
pub fn integrate_three(y: &mut [C64; 3], pulse_area: f64, steps: usize) -> f64 {
    let before = three_invariants(y);
    rk4(y, 1.0 / steps as f64, steps, three_rhs(pulse_area));
    relative_drift(&before, &three_invariants(y))
}

pub fn integrate_five(y: &mut [C64; 5], pulse_area: f64, steps: usize) -> f64 {
    let before = five_invariants(y);
    rk4(y, 1.0 / steps as f64, steps, five_rhs(pulse_area));
    relative_drift(&before, &five_invariants(y))
}

fn check_drift(drift: f64, steps: usize) -> Result<()> {
    if drift.is_finite() && drift < DRIFT_TOL {
        Ok(())
    } else {
        Err(Error::Drift { drift, steps })
    }
}

fn gather<const N: usize>(v: &ModeVector, labels: [ModeLabel; N]) -> Result<[usize; N]> {
    let mut idx = [0; N];
    for (k, l) in labels.iter().enumerate() {
        idx[k] = v
            .index(*l)
            .ok_or_else(|| Error::InvalidParameter(format!("state lacks mode {l:?}")))?;
    }
    Ok(idx)
}

pub const THREE_MODE: [ModeLabel; 3] = [ModeLabel::A1, ModeLabel::A2, ModeLabel::B];
pub const FIVE_MODE: [ModeLabel; 5] =
    [ModeLabel::A1, ModeLabel::APlus, ModeLabel::AMinus, ModeLabel::BPlus, ModeLabel::BMinus];

pub fn evolve_three_mode(state: &ModeVector, schedule: &CouplingSchedule) -> Result<ModeVector> {
    schedule.validate()?;
    let idx = gather(state, THREE_MODE)?;
    let mut out = state.clone();
    match *schedule {
        CouplingSchedule::Integrate { pulse_area, steps } => {
            let mut y = idx.map(|i| state.amps[i]);
            check_drift(integrate_three(&mut y, pulse_area, steps), steps)?;
            for (k, &i) in idx.iter().enumerate() {
                out.amps[i] = y[k];
            }
        }
        CouplingSchedule::Analytic { theta_qst } => {
            let (a2, b) = qst_mix(state.amps[idx[1]], state.amps[idx[2]], theta_qst);
            out.amps[idx[1]] = a2;
            out.amps[idx[2]] = b;
        }
    }
    Ok(out)
}

pub fn evolve_five_mode(state: &ModeVector, schedule: &CouplingSchedule) -> Result<ModeVector> {
    schedule.validate()?;
    let idx = gather(state, FIVE_MODE)?;
    let mut out = state.clone();
    match *schedule {
        CouplingSchedule::Integrate { pulse_area, steps } => {
            let mut y = idx.map(|i| state.amps[i]);
            check_drift(integrate_five(&mut y, pulse_area, steps), steps)?;
            for (k, &i) in idx.iter().enumerate() {
                out.amps[i] = y[k];
            }
        }
        CouplingSchedule::Analytic { theta_qst } => {
            for (a, b) in [(idx[1], idx[3]), (idx[2], idx[4])] {
                let (na, nb) = qst_mix(state.amps[a], state.amps[b], theta_qst);
                out.amps[a] = na;
                out.amps[b] = nb;
            }
        }
    }
    Ok(out)
}

/// Which trilinear model a set of modes follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QstModel {
    /// (a1, a2, b): single outcoupled mode.
    ThreeMode([ModeLabel; 3]),
    /// (a1, a+, a−, b+, b−): two sidebands sharing one condensate.
    FiveMode,
}

impl QstModel {
    pub fn single() -> Self {
        QstModel::ThreeMode(THREE_MODE)
    }

    fn labels(&self) -> Vec<ModeLabel> {
        match self {
            QstModel::ThreeMode(l) => l.to_vec(),
            QstModel::FiveMode => FIVE_MODE.to_vec(),
        }
    }

    /// Labels counted as outcoupled atoms and as input photons for Q.
    pub fn transfer_labels(&self) -> (Vec<ModeLabel>, Vec<ModeLabel>) {
        match self {
            QstModel::ThreeMode(l) => (vec![l[1]], vec![l[2]]),
            QstModel::FiveMode => (
                vec![ModeLabel::APlus, ModeLabel::AMinus],
                vec![ModeLabel::BPlus, ModeLabel::BMinus],
            ),
        }
    }
}

fn ensemble_indices(ens: &TrajectoryEnsemble, labels: &[ModeLabel]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| ens.index(*l).ok_or_else(|| Error::InvalidParameter(format!("ensemble lacks mode {l:?}"))))
        .collect()
}

/// Applies the schedule to every trajectory in place. Returns the largest
/// relative drift seen (0 for the analytic map).
pub fn evolve_ensemble(ens: &mut TrajectoryEnsemble, model: QstModel, schedule: &CouplingSchedule) -> Result<f64> {
    schedule.validate()?;
    let idx = ensemble_indices(ens, &model.labels())?;
    let drift = match (*schedule, model) {
        (CouplingSchedule::Analytic { theta_qst }, QstModel::ThreeMode(_)) => {
            ens.par_rows_mut().for_each(|row| {
                let (a, b) = qst_mix(row[idx[1]], row[idx[2]], theta_qst);
                row[idx[1]] = a;
                row[idx[2]] = b;
            });
            0.0
        }
        (CouplingSchedule::Analytic { theta_qst }, QstModel::FiveMode) => {
            ens.par_rows_mut().for_each(|row| {
                for (a, b) in [(idx[1], idx[3]), (idx[2], idx[4])] {
                    let (na, nb) = qst_mix(row[a], row[b], theta_qst);
                    row[a] = na;
                    row[b] = nb;
                }
            });
            0.0
        }
        (CouplingSchedule::Integrate { pulse_area, steps }, QstModel::ThreeMode(_)) => ens
            .par_rows_mut()
            .map(|row| {
                let mut y = [row[idx[0]], row[idx[1]], row[idx[2]]];
                let d = integrate_three(&mut y, pulse_area, steps);
                for k in 0..3 {
                    row[idx[k]] = y[k];
                }
                d
            })
            .reduce(|| 0.0, f64::max),
        (CouplingSchedule::Integrate { pulse_area, steps }, QstModel::FiveMode) => ens
            .par_rows_mut()
            .map(|row| {
                let mut y = [row[idx[0]], row[idx[1]], row[idx[2]], row[idx[3]], row[idx[4]]];
                let d = integrate_five(&mut y, pulse_area, steps);
                for k in 0..5 {
                    row[idx[k]] = y[k];
                }
                d
            })
            .reduce(|| 0.0, f64::max),
    };
    if let CouplingSchedule::Integrate { steps, .. } = *schedule {
        check_drift(drift, steps)?;
    }
    Ok(drift)
}

/// Like [`evolve_ensemble`] but doubles the step count (up to 16×) until the
/// drift bound holds. Returns the steps actually used.
pub fn evolve_ensemble_refined(
    ens: &mut TrajectoryEnsemble,
    model: QstModel,
    schedule: &CouplingSchedule,
) -> Result<(f64, usize)> {
    let CouplingSchedule::Integrate { pulse_area, steps } = *schedule else {
        return Ok((evolve_ensemble(ens, model, schedule)?, 0));
    };
    let limit = 16 * steps;
    let mut steps = steps;
    loop {
        let mut trial = ens.clone();
        match evolve_ensemble(&mut trial, model, &CouplingSchedule::Integrate { pulse_area, steps }) {
            Ok(d) => {
                *ens = trial;
                return Ok((d, steps));
            }
            Err(Error::Drift { .. }) if steps < limit => steps *= 2,
            Err(e) => return Err(e),
        }
    }
}

fn corrected_sum(ens: &TrajectoryEnsemble, labels: &[ModeLabel]) -> Result<(f64, f64)> {
    let idx = ensemble_indices(ens, labels)?;
    let vals: Vec<f64> = ens
        .rows()
        .map(|r| idx.iter().map(|&i| r[i].norm_sqr() - 0.5).sum())
        .collect();
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((m, (v / n).sqrt()))
}

/// Q = ⟨outcoupled atoms⟩ / ⟨input photons⟩ from corrected ensemble means.
pub fn qst_efficiency(out: &TrajectoryEnsemble, inp: &TrajectoryEnsemble, model: QstModel) -> Result<f64> {
    let (atoms, photons) = model.transfer_labels();
    let (n_in, se_in) = corrected_sum(inp, &photons)?;
    if !(n_in > 0.0 && n_in > 5.0 * se_in) {
        return Err(Error::InvalidParameter("zero-photon input: Q undefined".into()));
    }
    Ok(corrected_sum(out, &atoms)?.0 / n_in)
}

/// Integrates to `area_max` and records the corrected mean outcoupled-atom
/// number after every step (index 0 is the input).
pub fn transfer_trace(ens: &TrajectoryEnsemble, model: QstModel, area_max: f64, steps: usize) -> Result<Vec<f64>> {
    ensure(steps >= 1 && area_max >= 0.0, || "trace needs steps >= 1 and area >= 0".into())?;
    let idx = ensemble_indices(ens, &model.labels())?;
    let h = 1.0 / steps as f64;
    let per_traj: Vec<Vec<f64>> = ens
        .par_rows()
        .map(|row| {
            let mut rec = Vec::with_capacity(steps + 1);
            match model {
                QstModel::ThreeMode(_) => {
                    let f = three_rhs(area_max);
                    let mut y = [row[idx[0]], row[idx[1]], row[idx[2]]];
                    rec.push(y[1].norm_sqr() - 0.5);
                    for _ in 0..steps {
                        rk4_step(&mut y, h, &f);
                        rec.push(y[1].norm_sqr() - 0.5);
                    }
                }
                QstModel::FiveMode => {
                    let f = five_rhs(area_max);
                    let mut y = [row[idx[0]], row[idx[1]], row[idx[2]], row[idx[3]], row[idx[4]]];
                    rec.push(y[1].norm_sqr() + y[2].norm_sqr() - 1.0);
                    for _ in 0..steps {
                        rk4_step(&mut y, h, &f);
                        rec.push(y[1].norm_sqr() + y[2].norm_sqr() - 1.0);
                    }
                }
            }
            rec
        })
        .collect();
    let n = per_traj.len() as f64;
    let mut mean = vec![0.0; steps + 1];
    for rec in &per_traj {
        for (m, v) in mean.iter_mut().zip(rec) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Result of a pulse-area search on the integrator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseChoice {
    pub pulse_area: f64,
    pub q: f64,
}

const SCAN_STEPS: usize = 800;

/// Pulse area at the first maximum of Q(area), searched over nominal angles
/// up to 2π. Parabolic refinement around the best scan point.
pub fn max_transfer_pulse(pilot: &TrajectoryEnsemble, model: QstModel, n_a1: f64) -> Result<PulseChoice> {
    let photons = photons_in(pilot, model)?;
    let area_max = 2.0 * PI / (2.0 * n_a1.sqrt());
    let trace = transfer_trace(pilot, model, area_max, SCAN_STEPS)?;
    let mut k = trace.len() - 1;
    for i in 1..trace.len() - 1 {
        if trace[i] >= trace[i - 1] && trace[i] > trace[i + 1] {
            k = i;
            break;
        }
    }
    let da = area_max / SCAN_STEPS as f64;
    let mut area = k as f64 * da;
    if k > 0 && k + 1 < trace.len() {
        let (ym, y0, yp) = (trace[k - 1], trace[k], trace[k + 1]);
        let denom = ym - 2.0 * y0 + yp;
        if denom < 0.0 {
            area += 0.5 * da * (ym - yp) / denom;
        }
    }
    let q = q_at(pilot, model, area, photons)?;
    Ok(PulseChoice { pulse_area: area, q })
}

fn photons_in(pilot: &TrajectoryEnsemble, model: QstModel) -> Result<f64> {
    let (_, photons) = model.transfer_labels();
    let (n, se) = corrected_sum(pilot, &photons)?;
    if !(n > 0.0 && n > 5.0 * se) {
        return Err(Error::InvalidParameter("zero-photon input: Q undefined".into()));
    }
    Ok(n)
}

fn q_at(pilot: &TrajectoryEnsemble, model: QstModel, area: f64, photons: f64) -> Result<f64> {
    let mut e = pilot.clone();
    evolve_ensemble_refined(&mut e, model, &CouplingSchedule::Integrate { pulse_area: area, steps: DEFAULT_STEPS })?;
    let (atoms, _) = model.transfer_labels();
    Ok(corrected_sum(&e, &atoms)?.0 / photons)
}

/// Bisects the pulse area on the integrator so that Q(area) = `target`,
/// staying below the first maximum. Fails when the target exceeds max Q.
pub fn pulse_for_target_q(pilot: &TrajectoryEnsemble, model: QstModel, n_a1: f64, target: f64) -> Result<PulseChoice> {
    ensure(target > 0.0 && target <= 1.0, || format!("target Q must lie in (0, 1], got {target}"))?;
    let photons = photons_in(pilot, model)?;
    let best = max_transfer_pulse(pilot, model, n_a1)?;
    if target >= best.q {
        return Err(Error::Depleted(format!(
            "target Q = {target} exceeds the largest reachable Q = {:.4}",
            best.q
        )));
    }
    let (mut lo, mut hi) = (0.0, best.pulse_area);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if q_at(pilot, model, mid, photons)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-7 * best.pulse_area {
            break;
        }
    }
    let area = 0.5 * (lo + hi);
    Ok(PulseChoice { pulse_area: area, q: q_at(pilot, model, area, photons)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Transition dipole moment (C·m).
    pub d12: f64,
    /// Probe angular frequency (rad/s).
    pub omega_p: f64,
    /// Control Rabi frequency (rad/s).
    pub rabi: f64,
    /// One-photon detuning (rad/s).
    pub delta_p: f64,
    /// Natural linewidth (rad/s).
    pub gamma: f64,
    pub n_atoms: f64,
    /// Pulse duration (s).
    pub duration: f64,
    /// Transverse radius of the probe and condensate (m).
    pub r_perp: f64,
    /// Mean probe photon number entering the transfer.
    pub probe_photons: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalCoupling {
    /// Effective coupling (m^{3/2}/s).
    pub g: f64,
    pub theta_qst: f64,
    /// Fraction of atoms lost to spontaneous emission.
    pub loss_fraction: f64,
}

pub fn coupling_from_physical(p: &PhysicalParams) -> Result<PhysicalCoupling> {
    let vals = [p.d12, p.omega_p, p.rabi, p.delta_p, p.gamma, p.n_atoms, p.duration, p.r_perp, p.probe_photons];
    ensure(vals.iter().all(|v| v.is_finite() && *v > 0.0), || "physical parameters must be positive".into())?;
    let g = p.d12 * (p.omega_p / (2.0 * HBAR * EPS0)).sqrt() * p.rabi / p.delta_p;
    let area = PI * p.r_perp * p.r_perp;
    let theta_qst = 4.0 / 3.0 * (2.0 * PI).powf(0.25) * g * (p.n_atoms * p.duration / (C_LIGHT * area)).sqrt();
    let arg = 1.0 - p.probe_photons / p.n_atoms * (0.5 * theta_qst).sin().powi(2);
    if !(0.0..=1.0).contains(&arg) {
        return Err(Error::Depleted(format!("spontaneous-emission estimate undefined (argument {arg})")));
    }
    let loss_fraction = p.gamma / p.delta_p * arg.sqrt().acos();
    Ok(PhysicalCoupling { g, theta_qst, loss_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseKey;
    use crate::sampler::{coherent_amplitude, squeeze_map, SqueezeSpec};
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn analytic_limits() {
        let (a, b) = analytic_qst(c(0.3, 0.1), c(-1.0, 2.0), 0.0).unwrap();
        assert_eq!((a, b), (c(0.3, 0.1), c(-1.0, 2.0)));
        let (a, _) = analytic_qst(c(0.3, 0.1), c(-1.0, 2.0), PI).unwrap();
        assert!((a - c(0.0, -1.0) * c(-1.0, 2.0)).norm() < 1e-15);
        assert!(analytic_qst(c(0.0, 0.0), c(1.0, 0.0), 3.5).is_err());
        assert!((undepleted_q(FRAC_PI_2) - 0.5).abs() < 1e-15);
        assert!((undepleted_q(0.3 * PI) - (0.15 * PI).sin().powi(2)).abs() < 1e-15);
        assert!((undepleted_q(0.3 * PI) - 0.2).abs() < 0.01);
        assert!((theta_for_q(0.5).unwrap() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn dark_state_is_fixed() {
        let v = ModeVector::new(THREE_MODE.to_vec(), vec![c(1000.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let out = evolve_three_mode(&v, &CouplingSchedule::Integrate { pulse_area: 0.1, steps: 100 }).unwrap();
        assert_eq!(out, v);
        let v5 = ModeVector::new(FIVE_MODE.to_vec(), vec![c(30.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let out5 = evolve_five_mode(&v5, &CouplingSchedule::Integrate { pulse_area: 0.1, steps: 100 }).unwrap();
        assert_eq!(out5, v5);
    }

    #[test]
    fn integrator_matches_undepleted_solution() {
        // Strong condensate, weak probe: the integrated map approaches the
        // analytic beamsplitter with θ = 2·area·√N.
        let n: f64 = 1e8;
        let theta = 0.7 * PI;
        let y0 = [c(n.sqrt(), 0.0), c(0.2, -0.4), c(1.5, 0.3)];
        let mut y = y0;
        let drift = integrate_three(&mut y, pulse_area_for_theta(theta, n), 400);
        assert!(drift < DRIFT_TOL);
        let (a2, b) = qst_mix(y0[1], y0[2], theta);
        assert!((y[1] - a2).norm() < 1e-3 && (y[2] - b).norm() < 1e-3);
    }

    #[test]
    fn missing_labels_rejected() {
        let v = ModeVector::new(vec![ModeLabel::A1, ModeLabel::B], vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(evolve_three_mode(&v, &CouplingSchedule::Analytic { theta_qst: 1.0 }).is_err());
    }

    fn scheme1_pilot(n_a1: f64, r: f64, count: usize) -> TrajectoryEnsemble {
        let spec = SqueezeSpec::new(r, FRAC_PI_2).unwrap();
        TrajectoryEnsemble::generate(THREE_MODE.to_vec(), count, 5, |t, k: &NoiseKey, row| {
            row[0] = coherent_amplitude(n_a1, k.noise(t, ModeLabel::A1.channel()));
            row[1] = k.noise(t, ModeLabel::A2.channel());
            row[2] = squeeze_map(&spec, k.noise(t, ModeLabel::B.channel()));
        })
        .unwrap()
    }

    #[test]
    fn complete_transfer_in_undepleted_regime() {
        let pilot = scheme1_pilot(1e6, 1.5, 4000);
        let area = pulse_area_for_theta(PI, 1e6);
        let mut out = pilot.clone();
        evolve_ensemble(&mut out, QstModel::single(), &CouplingSchedule::Integrate { pulse_area: area, steps: 400 })
            .unwrap();
        let q = qst_efficiency(&out, &pilot, QstModel::single()).unwrap();
        assert!((q - 1.0).abs() < 1e-3, "{q}");
        let best = max_transfer_pulse(&pilot, QstModel::single(), 1e6).unwrap();
        assert!((best.pulse_area / area - 1.0).abs() < 1e-2);
        let half = pulse_for_target_q(&pilot, QstModel::single(), 1e6, 0.5).unwrap();
        assert!((half.q - 0.5).abs() < 1e-6);
        assert!((half.pulse_area / pulse_area_for_theta(FRAC_PI_2, 1e6) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn physical_coupling_numbers() {
        let two_pi = 2.0 * PI;
        let p = PhysicalParams {
            d12: 2e-29,
            omega_p: two_pi * C_LIGHT / 780e-9,
            rabi: two_pi * 20e6,
            delta_p: two_pi * 70e9,
            gamma: two_pi * 6.07e6,
            n_atoms: 1e6,
            duration: 1e-3,
            r_perp: 15e-6,
            probe_photons: 3.5f64.sinh().powi(2),
        };
        let out = coupling_from_physical(&p).unwrap();
        assert!((out.g - 6.5e-3).abs() < 0.1e-3, "g = {}", out.g);
        assert!((out.theta_qst - 0.3 * PI).abs() < 0.01, "θ = {}", out.theta_qst);
        assert!((out.loss_fraction - 6.5e-7).abs() < 0.1e-7, "l = {}", out.loss_fraction);
        let lost_over_outcoupled = out.loss_fraction * p.n_atoms / (undepleted_q(out.theta_qst) * p.probe_photons);
        assert!((lost_over_outcoupled - 0.01).abs() < 0.003);
        let mut bad = p;
        bad.probe_photons = 1e8;
        assert!(coupling_from_physical(&bad).is_err());
    }
}
