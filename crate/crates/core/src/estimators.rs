//! Ensemble reductions: symmetric-ordering-corrected moments, signal
//! statistics and phase sensitivities with batch-mean standard errors.
//!
//! Trajectories are split into contiguous batches (100 by default). Linear
//! statistics get the usual batch-means error; nonlinear ones (variances,
//! sensitivities) use a delete-one-batch jackknife over the same batches,
//! which reduces to batch means for linear functions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::sampler::{ModeLabel, TrajectoryEnsemble};
use crate::C64;

pub const DEFAULT_BATCHES: usize = 100;
pub const DEFAULT_FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// |value − target| ≤ k·stderr.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Per-batch means of `k` per-trajectory features.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMeans {
    k: usize,
    means: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl BatchMeans {
    /// Evaluates `feature(t, out)` for t in 0..count. Batches run in
    /// parallel; each is summed sequentially, so results do not depend on
    /// the thread count.
    pub fn collect<F>(count: usize, k: usize, batches: usize, feature: F) -> Result<Self>
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        ensure(count >= 2, || "need at least 2 trajectories".into())?;
        let nb = batches.min(count / 2).max(2).min(count);
        let bounds: Vec<(usize, usize)> = (0..nb).map(|b| (b * count / nb, (b + 1) * count / nb)).collect();
        let means: Vec<Vec<f64>> = bounds
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = vec![0.0; k];
                let mut buf = vec![0.0; k];
                for t in lo..hi {
                    feature(t, &mut buf);
                    for (a, b) in acc.iter_mut().zip(&buf) {
                        *a += b;
                    }
                }
                let n = (hi - lo) as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                acc
            })
            .collect();
        Ok(Self { k, means, sizes: bounds.iter().map(|(lo, hi)| hi - lo).collect() })
    }

    pub fn batches(&self) -> usize {
        self.means.len()
    }

    pub fn count(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn pooled(&self, skip: Option<usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.k];
        let mut n = 0.0;
        for (b, (m, &s)) in self.means.iter().zip(&self.sizes).enumerate() {
            if Some(b) == skip {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v * s as f64;
            }
            n += s as f64;
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Grand means of all features.
    pub fn means(&self) -> Vec<f64> {
        self.pooled(None)
    }

    /// f(grand means) with a delete-one-batch jackknife standard error.
    pub fn jackknife(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let value = f(&self.pooled(None));
        let nb = self.batches();
        let reps: Vec<f64> = (0..nb).map(|b| f(&self.pooled(Some(b)))).collect();
        let bar = reps.iter().sum::<f64>() / nb as f64;
        let ss = reps.iter().map(|x| (x - bar).powi(2)).sum::<f64>();
        Estimate { value, stderr: ((nb as f64 - 1.0) / nb as f64 * ss).sqrt() }
    }

    pub fn mean_of(&self, j: usize) -> Estimate {
        self.jackknife(|m| m[j])
    }
}

/// Mean and corrected variance of a linear number combination Σ c_k N_k
/// given its per-trajectory Wigner symbol. `ordering` is ¼Σc_k².
pub fn combination_stats<F>(count: usize, batches: usize, ordering: f64, symbol: F) -> Result<(Estimate, Estimate)>
where
    F: Fn(usize) -> f64 + Sync,
{
    let bm = BatchMeans::collect(count, 2, batches, |t, out| {
        let s = symbol(t);
        out[0] = s;
        out[1] = s * s;
    })?;
    let n = count as f64;
    let mean = bm.mean_of(0);
    let var = bm.jackknife(|m| (m[1] - m[0] * m[0]) * n / (n - 1.0) - ordering);
    Ok((mean, var))
}

/// ¼Σc_k² for a list of coefficients.
pub fn ordering_correction(coeffs: &[f64]) -> f64 {
    0.25 * coeffs.iter().map(|c| c * c).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumberMoments {
    pub label: ModeLabel,
    pub n: Estimate,
    pub n2: Estimate,
    pub variance: Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossMoment {
    pub labels: (ModeLabel, ModeLabel),
    pub nn: Estimate,
}

/// Corrected pseudo-spin moments of a mode pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinMoments {
    pub jx2: Estimate,
    pub jz2: Estimate,
    pub jx4: Estimate,
    pub jz4: Estimate,
    /// ⟨Jx²Jz² + Jz²Jx²⟩
    pub jx2jz2: Estimate,
    /// ⟨(JxJz + JzJx)²⟩
    pub anti_sq: Estimate,
    /// ⟨N+ N−⟩
    pub n_pm: Estimate,
}

/// Raw Wigner-symbol means from which every corrected spin moment follows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinSymbols {
    pub x2: f64,
    pub z2: f64,
    pub x4: f64,
    pub z4: f64,
    pub x2z2: f64,
    /// mean of |α+|²|α−|²
    pub pm: f64,
    /// mean of |α+|² + |α−|²
    pub nsum: f64,
}

impl SpinSymbols {
    const LEN: usize = 7;

    fn from_slice(m: &[f64]) -> Self {
        Self { x2: m[0], z2: m[1], x4: m[2], z4: m[3], x2z2: m[4], pm: m[5], nsum: m[6] }
    }

    fn features(ap: C64, am: C64, out: &mut [f64]) {
        let jx = (ap.conj() * am).re;
        let jz = 0.5 * (ap.norm_sqr() - am.norm_sqr());
        let (x2, z2) = (jx * jx, jz * jz);
        out[0] = x2;
        out[1] = z2;
        out[2] = x2 * x2;
        out[3] = z2 * z2;
        out[4] = x2 * z2;
        out[5] = ap.norm_sqr() * am.norm_sqr();
        out[6] = ap.norm_sqr() + am.norm_sqr();
    }

    /// Corrected [⟨Jx²⟩, ⟨Jz²⟩, ⟨Jx⁴⟩, ⟨Jz⁴⟩, ⟨Jx²Jz²+Jz²Jx²⟩,
    /// ⟨(JxJz+JzJx)²⟩, ⟨N+N−⟩].
    pub fn corrected(&self) -> [f64; 7] {
        [
            self.x2 - 0.125,
            self.z2 - 0.125,
            self.x4 - 1.25 * self.x2 + 0.0625,
            self.z4 - 1.25 * self.z2 + 0.0625,
            2.0 * self.x2z2 + 1.25 * self.x2 + 0.25 * self.z2 - self.pm,
            4.0 * self.x2z2 - 2.5 * self.x2 - 1.5 * self.z2 + self.pm + 0.125,
            self.pm - 0.5 * self.nsum + 0.25,
        ]
    }
}

/// Moments of an ensemble, with the batch data kept for derived quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub count: usize,
    pub modes: Vec<NumberMoments>,
    pub cross: Vec<CrossMoment>,
    pub spin: Option<SpinMoments>,
    #[serde(skip)]
    spin_batches: Option<BatchMeans>,
}

impl MomentSet {
    pub fn mode(&self, label: ModeLabel) -> Option<&NumberMoments> {
        self.modes.iter().find(|m| m.label == label)
    }

    pub fn cross(&self, a: ModeLabel, b: ModeLabel) -> Option<Estimate> {
        self.cross
            .iter()
            .find(|c| c.labels == (a, b) || c.labels == (b, a))
            .map(|c| c.nn)
    }

    /// Spin moments computed from exact values (no Monte Carlo error).
    pub fn from_spin(spin: SpinMoments) -> Self {
        Self { count: 0, modes: Vec::new(), cross: Vec::new(), spin: Some(spin), spin_batches: None }
    }
}

pub fn corrected_number_moments(ens: &TrajectoryEnsemble) -> Result<MomentSet> {
    corrected_number_moments_batched(ens, DEFAULT_BATCHES)
}

pub fn corrected_number_moments_batched(ens: &TrajectoryEnsemble, batches: usize) -> Result<MomentSet> {
    let w = ens.width();
    let pairs: Vec<(usize, usize)> = (0..w).flat_map(|i| (i + 1..w).map(move |j| (i, j))).collect();
    let k = 2 * w + pairs.len();
    let bm = BatchMeans::collect(ens.count(), k, batches, |t, out| {
        let row = ens.row(t);
        for (i, a) in row.iter().enumerate() {
            let p = a.norm_sqr();
            out[2 * i] = p;
            out[2 * i + 1] = p * p;
        }
        for (c, &(i, j)) in pairs.iter().enumerate() {
            out[2 * w + c] = (row[i].norm_sqr() - 0.5) * (row[j].norm_sqr() - 0.5);
        }
    })?;
    let modes = ens
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &label)| NumberMoments {
            label,
            n: bm.jackknife(|m| m[2 * i] - 0.5),
            n2: bm.jackknife(|m| m[2 * i + 1] - m[2 * i]),
            variance: bm.jackknife(|m| m[2 * i + 1] - m[2 * i] - (m[2 * i] - 0.5).powi(2)),
        })
        .collect();
    let cross = pairs
        .iter()
        .enumerate()
        .map(|(c, &(i, j))| CrossMoment { labels: (ens.labels()[i], ens.labels()[j]), nn: bm.mean_of(2 * w + c) })
        .collect();
    Ok(MomentSet { count: ens.count(), modes, cross, spin: None, spin_batches: None })
}

pub fn corrected_j_moments(ens: &TrajectoryEnsemble) -> Result<MomentSet> {
    corrected_j_moments_for(ens, ModeLabel::APlus, ModeLabel::AMinus, DEFAULT_BATCHES)
}

pub fn corrected_j_moments_for(
    ens: &TrajectoryEnsemble,
    plus: ModeLabel,
    minus: ModeLabel,
    batches: usize,
) -> Result<MomentSet> {
    let missing = |l: ModeLabel| Error::InvalidParameter(format!("ensemble lacks mode {l:?}"));
    let ip = ens.index(plus).ok_or_else(|| missing(plus))?;
    let im = ens.index(minus).ok_or_else(|| missing(minus))?;
    let bm = BatchMeans::collect(ens.count(), SpinSymbols::LEN, batches, |t, out| {
        let row = ens.row(t);
        SpinSymbols::features(row[ip], row[im], out);
    })?;
    let pick = |k: usize| bm.jackknife(|m| SpinSymbols::from_slice(m).corrected()[k]);
    let spin = SpinMoments {
        jx2: pick(0),
        jz2: pick(1),
        jx4: pick(2),
        jz4: pick(3),
        jx2jz2: pick(4),
        anti_sq: pick(5),
        n_pm: pick(6),
    };
    let mut set = corrected_number_moments_batched(ens, batches)?;
    set.spin = Some(spin);
    set.spin_batches = Some(bm);
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    TwSweep,
    TwMoments,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub delta_phi: f64,
    pub phi_opt: f64,
    pub slope: f64,
    pub variance: f64,
    pub stderr: f64,
    pub method: Method,
}

/// Signal statistics at one phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub phi: f64,
    pub mean: Estimate,
    pub variance: Estimate,
}

/// Δφ = √V / |d⟨S⟩/dφ| at a grid point, slope by central difference of
/// the neighbouring grid points.
pub fn sensitivity_from_sweep(points: &[SweepPoint], phi_eval: f64, method: Method) -> Result<SensitivityResult> {
    ensure(points.len() >= 3, || "sweep needs at least 3 phases".into())?;
    let h = points[1].phi - points[0].phi;
    ensure(h > 0.0, || "phase grid must be increasing".into())?;
    let uniform = points.windows(2).all(|w| ((w[1].phi - w[0].phi) - h).abs() <= 1e-9 * h.max(1.0));
    ensure(uniform, || "phase grid must be uniform".into())?;
    let i = points
        .iter()
        .position(|p| (p.phi - phi_eval).abs() <= 1e-6 * h)
        .ok_or_else(|| Error::InvalidParameter(format!("φ = {phi_eval} is not a grid point")))?;
    ensure(i > 0 && i + 1 < points.len(), || "evaluation phase must be bracketed by the grid".into())?;
    let (lo, mid, hi) = (&points[i - 1], &points[i], &points[i + 1]);
    let slope = (hi.mean.value - lo.mean.value) / (2.0 * h);
    let slope_se = (hi.mean.stderr.powi(2) + lo.mean.stderr.powi(2)).sqrt() / (2.0 * h);
    if slope == 0.0 || slope.abs() <= 3.0 * slope_se {
        return Err(Error::Indeterminate(format!("slope {slope:.3e} ± {slope_se:.3e} at φ = {phi_eval}")));
    }
    let v = mid.variance;
    if !(v.value > 0.0) {
        return Err(Error::Indeterminate(format!("non-positive signal variance {:.3e}", v.value)));
    }
    let delta_phi = v.value.sqrt() / slope.abs();
    let rel = ((0.5 * v.stderr / v.value).powi(2) + (slope_se / slope).powi(2)).sqrt();
    Ok(SensitivityResult { delta_phi, phi_opt: phi_eval, slope, variance: v.value, stderr: delta_phi * rel, method })
}

/// Evaluates the moment formula on corrected spin moments.
/// Returns (Δφ, φ_opt, slope, variance). The recycled optimum sits at φ → 0,
/// where slope and variance both vanish like sin φ cos φ; they are reported
/// per unit of that factor.
pub fn spin_formula(m: &[f64; 7], recycled: bool) -> (f64, f64, f64, f64) {
    let [x2, z2, x4, z4, xz, anti, _] = *m;
    if recycled {
        return (1.0 / (4.0 * x2).sqrt(), 0.0, 4.0 * x2, 4.0 * x2);
    }
    let vx = x4 - x2 * x2;
    let vz = (z4 - z2 * z2).max(0.0);
    let c = xz - 2.0 * x2 * z2;
    let num = 2.0 * (vz * vx.max(0.0)).sqrt() + c + anti;
    let den = 4.0 * (z2 - x2).powi(2);
    let d2 = num / den;
    let phi = (vz / vx).powf(0.25).atan();
    let slope = 4.0 * (2.0 * phi).sin() * (x2 - z2);
    (d2.max(0.0).sqrt(), phi, slope, d2 * slope * slope)
}

/// Scheme-2 sensitivity from spin moments: the variance-of-square moment
/// formula, or 1/√(4⟨Jx²⟩) for the recycled signal.
pub fn scheme2_sensitivity_from_moments(m: &MomentSet, recycled: bool) -> Result<SensitivityResult> {
    let s = m
        .spin
        .ok_or_else(|| Error::InvalidParameter("moment set has no pseudo-spin moments".into()))?;
    let vals = [s.jx2, s.jz2, s.jx4, s.jz4, s.jx2jz2, s.anti_sq, s.n_pm].map(|e| e.value);
    if recycled {
        if !(s.jx2.value > 5.0 * s.jx2.stderr && s.jx2.value > 0.0) {
            return Err(Error::Indeterminate("⟨Jx²⟩ not resolved from zero".into()));
        }
    } else {
        let gap = s.jx2.value - s.jz2.value;
        let gap_se = (s.jx2.stderr.powi(2) + s.jz2.stderr.powi(2)).sqrt();
        if gap == 0.0 || gap.abs() <= 5.0 * gap_se {
            return Err(Error::Indeterminate("⟨Jz²⟩ − ⟨Jx²⟩ not resolved from zero".into()));
        }
    }
    let (d, phi, slope, var) = spin_formula(&vals, recycled);
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Indeterminate(format!("degenerate spin moments give Δφ = {d}")));
    }
    let (stderr, method) = match &m.spin_batches {
        Some(bm) => {
            let e = bm.jackknife(|raw| spin_formula(&SpinSymbols::from_slice(raw).corrected(), recycled).0);
            (e.stderr, Method::TwMoments)
        }
        None => (0.0, Method::Analytic),
    };
    Ok(SensitivityResult { delta_phi: d, phi_opt: phi, slope, variance: var, stderr, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn jackknife_of_linear_is_batch_means() {
        let bm = BatchMeans::collect(1000, 1, 10, |t, out| out[0] = (t % 7) as f64).unwrap();
        let e = bm.mean_of(0);
        let means: Vec<f64> = bm.means.iter().map(|m| m[0]).collect();
        let bar = means.iter().sum::<f64>() / 10.0;
        let sd = (means.iter().map(|x| (x - bar).powi(2)).sum::<f64>() / 9.0).sqrt();
        assert!((e.stderr - sd / 10f64.sqrt()).abs() < 1e-12);
        assert!((e.value - (0..1000).map(|t| (t % 7) as f64).sum::<f64>() / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_reproduces_shot_noise() {
        let n = 1e6;
        let pts: Vec<SweepPoint> = (-1..=1)
            .map(|k| {
                let phi = PI / 2.0 + k as f64 * DEFAULT_FD_STEP;
                SweepPoint { phi, mean: Estimate::exact(n * phi.cos()), variance: Estimate::exact(n) }
            })
            .collect();
        let r = sensitivity_from_sweep(&pts, PI / 2.0, Method::Analytic).unwrap();
        assert!((r.delta_phi * n.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_signal_is_indeterminate() {
        let pts: Vec<SweepPoint> = (0..3)
            .map(|k| SweepPoint { phi: k as f64 * 0.1, mean: Estimate::exact(4.0), variance: Estimate::exact(1.0) })
            .collect();
        assert!(matches!(sensitivity_from_sweep(&pts, 0.1, Method::Analytic), Err(Error::Indeterminate(_))));
        assert!(sensitivity_from_sweep(&pts[..2], 0.1, Method::Analytic).is_err());
        assert!(sensitivity_from_sweep(&pts, 0.0, Method::Analytic).is_err());
    }
}
