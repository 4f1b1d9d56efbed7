//! Wigner-distribution initial conditions for coherent, vacuum, single-mode
//! squeezed and two-mode squeezed states, plus the ensemble container.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::rng::{Channel, NoiseKey};
use crate::C64;

/// Mode names shared by every scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    A1,
    A2,
    APlus,
    AMinus,
    B,
    BPlus,
    BMinus,
    Lo,
    LoPlus,
    LoMinus,
}

impl ModeLabel {
    /// Noise channel of the mode's own initial-state fluctuations.
    pub fn channel(self) -> Channel {
        Channel(self as u16)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezeSpec {
    pub r: f64,
    pub theta_sq: f64,
}

impl SqueezeSpec {
    pub fn new(r: f64, theta_sq: f64) -> Result<Self> {
        ensure(r.is_finite() && r >= 0.0, || format!("squeezing r must be finite and >= 0, got {r}"))?;
        ensure(theta_sq.is_finite(), || "squeezing angle must be finite".into())?;
        Ok(Self { r, theta_sq: theta_sq.rem_euclid(TAU) })
    }

    /// Mean photon number of the squeezed vacuum (per mode for two-mode).
    pub fn mean_photons(&self) -> f64 {
        self.r.sinh().powi(2)
    }

    /// Coefficient multiplying the conjugate noise: −i e^{iθ} sinh r.
    fn conj_coeff(&self) -> C64 {
        C64::new(0.0, -1.0) * C64::from_polar(self.r.sinh(), self.theta_sq)
    }
}

pub fn coherent_amplitude(mean_number: f64, noise: C64) -> C64 {
    C64::new(mean_number.sqrt(), 0.0) + noise
}

pub fn squeeze_map(spec: &SqueezeSpec, noise: C64) -> C64 {
    noise * spec.r.cosh() + spec.conj_coeff() * noise.conj()
}

pub fn two_mode_map(spec: &SqueezeSpec, plus: C64, minus: C64) -> (C64, C64) {
    let ch = spec.r.cosh();
    let k = spec.conj_coeff();
    (plus * ch + k * minus.conj(), minus * ch + k * plus.conj())
}

/// Draws amplitudes from one noise stream per (trajectory, label).
#[derive(Clone, Copy, Debug)]
pub struct Sampler {
    pub key: NoiseKey,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self { key: NoiseKey::new(seed) }
    }

    pub fn coherent(&self, label: ModeLabel, mean_number: f64, count: usize) -> Result<Vec<C64>> {
        ensure(mean_number.is_finite() && mean_number >= 0.0, || {
            format!("mean number must be finite and >= 0, got {mean_number}")
        })?;
        check_count(count)?;
        Ok((0..count as u64)
            .into_par_iter()
            .map(|t| coherent_amplitude(mean_number, self.key.noise(t, label.channel())))
            .collect())
    }

    pub fn squeezed(&self, label: ModeLabel, spec: &SqueezeSpec, count: usize) -> Result<Vec<C64>> {
        let spec = SqueezeSpec::new(spec.r, spec.theta_sq)?;
        check_count(count)?;
        Ok((0..count as u64)
            .into_par_iter()
            .map(|t| squeeze_map(&spec, self.key.noise(t, label.channel())))
            .collect())
    }

    pub fn two_mode_squeezed(
        &self,
        labels: (ModeLabel, ModeLabel),
        spec: &SqueezeSpec,
        count: usize,
    ) -> Result<Vec<(C64, C64)>> {
        let spec = SqueezeSpec::new(spec.r, spec.theta_sq)?;
        check_count(count)?;
        Ok((0..count as u64)
            .into_par_iter()
            .map(|t| {
                let p = self.key.noise(t, labels.0.channel());
                let m = self.key.noise(t, labels.1.channel());
                two_mode_map(&spec, p, m)
            })
            .collect())
    }
}

fn check_count(count: usize) -> Result<()> {
    ensure(count >= 2, || format!("ensemble needs at least 2 trajectories, got {count}"))
}

pub fn sample_coherent(mean_number: f64, count: usize, seed: u64) -> Result<Vec<C64>> {
    Sampler::new(seed).coherent(ModeLabel::A1, mean_number, count)
}

pub fn sample_single_mode_squeezed(spec: &SqueezeSpec, count: usize, seed: u64) -> Result<Vec<C64>> {
    Sampler::new(seed).squeezed(ModeLabel::B, spec, count)
}

pub fn sample_two_mode_squeezed(spec: &SqueezeSpec, count: usize, seed: u64) -> Result<Vec<(C64, C64)>> {
    Sampler::new(seed).two_mode_squeezed((ModeLabel::BPlus, ModeLabel::BMinus), spec, count)
}

/// Labeled amplitudes of a single trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeVector {
    pub labels: Vec<ModeLabel>,
    pub amps: Vec<C64>,
}

impl ModeVector {
    pub fn new(labels: Vec<ModeLabel>, amps: Vec<C64>) -> Self {
        assert_eq!(labels.len(), amps.len());
        Self { labels, amps }
    }

    pub fn index(&self, label: ModeLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn get(&self, label: ModeLabel) -> Option<C64> {
        self.index(label).map(|i| self.amps[i])
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// Row-major block of trajectories sharing one label layout.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    labels: Vec<ModeLabel>,
    data: Vec<C64>,
    pub seed: u64,
}

impl TrajectoryEnsemble {
    pub fn from_rows(labels: Vec<ModeLabel>, data: Vec<C64>, seed: u64) -> Result<Self> {
        ensure(!labels.is_empty(), || "ensemble needs at least one mode".into())?;
        ensure(data.len().is_multiple_of(labels.len()), || "data length not a multiple of mode count".into())?;
        check_count(data.len() / labels.len())?;
        Ok(Self { labels, data, seed })
    }

    pub fn from_columns(labels: Vec<ModeLabel>, columns: &[Vec<C64>], seed: u64) -> Result<Self> {
        ensure(labels.len() == columns.len(), || "one column per label required".into())?;
        let m = columns.first().map_or(0, Vec::len);
        ensure(columns.iter().all(|c| c.len() == m), || "columns differ in length".into())?;
        let mut data = Vec::with_capacity(m * labels.len());
        for t in 0..m {
            data.extend(columns.iter().map(|c| c[t]));
        }
        Self::from_rows(labels, data, seed)
    }

    /// Builds `count` trajectories in parallel; `fill` writes one row.
    pub fn generate<F>(labels: Vec<ModeLabel>, count: usize, seed: u64, fill: F) -> Result<Self>
    where
        F: Fn(u64, &NoiseKey, &mut [C64]) + Sync,
    {
        check_count(count)?;
        let key = NoiseKey::new(seed);
        let width = labels.len();
        let mut data = vec![C64::new(0.0, 0.0); count * width];
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(t, row)| fill(t as u64, &key, row));
        Self::from_rows(labels, data, seed)
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.labels
    }

    pub fn width(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.labels.len()
    }

    pub fn index(&self, label: ModeLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn row(&self, t: usize) -> &[C64] {
        let w = self.width();
        &self.data[t * w..(t + 1) * w]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, C64> {
        self.data.chunks_exact(self.width())
    }

    pub fn par_rows(&self) -> rayon::slice::ChunksExact<'_, C64> {
        self.data.par_chunks_exact(self.width())
    }

    pub fn par_rows_mut(&mut self) -> rayon::slice::ChunksExactMut<'_, C64> {
        let w = self.width();
        self.data.par_chunks_exact_mut(w)
    }

    pub fn column(&self, label: ModeLabel) -> Option<Vec<C64>> {
        let i = self.index(label)?;
        Some(self.rows().map(|r| r[i]).collect())
    }

    pub fn trajectory(&self, t: usize) -> ModeVector {
        ModeVector::new(self.labels.clone(), self.row(t).to_vec())
    }

    /// First `count` trajectories (same noise, same seed).
    pub fn truncated(&self, count: usize) -> Result<Self> {
        let count = count.min(self.count());
        Self::from_rows(self.labels.clone(), self.data[..count * self.width()].to_vec(), self.seed)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }
}
