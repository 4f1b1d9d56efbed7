//! Exact Fock-basis evolution of the trilinear atom-light Hamiltonians at
//! small particle number. Reference data for the phase-space code.
//!
//! The Hamiltonian conserves particle-number combinations, so the
//! dynamics splits into small blocks. Each block reachable from the initial
//! state is enumerated by breadth-first search, diagonalized, and
//! exponentiated exactly.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure, Error, Result};
use crate::sampler::SqueezeSpec;
use crate::C64;

pub const NORM_TOL: f64 = 1e-12;
pub const TAIL_TOL: f64 = 1e-10;

type Occupation = Vec<usize>;

/// Dense amplitudes over occupation tuples with a per-mode cutoff
/// (occupations 0..cutoff). The last mode varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    cutoffs: Vec<usize>,
    amps: Vec<C64>,
}

impl FockState {
    pub fn zeros(cutoffs: Vec<usize>) -> Self {
        let size = cutoffs.iter().product();
        Self { cutoffs, amps: vec![C64::new(0.0, 0.0); size] }
    }

    pub fn basis(cutoffs: Vec<usize>, occ: &[usize]) -> Result<Self> {
        let mut s = Self::zeros(cutoffs);
        let i = s
            .index(occ)
            .ok_or_else(|| Error::InvalidParameter(format!("occupation {occ:?} outside cutoffs")))?;
        s.amps[i] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn vacuum(cutoff: usize) -> Self {
        Self::basis(vec![cutoff], &[0]).expect("cutoff >= 1")
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn index(&self, occ: &[usize]) -> Option<usize> {
        if occ.len() != self.modes() {
            return None;
        }
        let mut idx = 0;
        for (&n, &c) in occ.iter().zip(&self.cutoffs) {
            if n >= c {
                return None;
            }
            idx = idx * c + n;
        }
        Some(idx)
    }

    pub fn occupation(&self, mut idx: usize) -> Occupation {
        let mut occ = vec![0; self.modes()];
        for k in (0..self.modes()).rev() {
            occ[k] = idx % self.cutoffs[k];
            idx /= self.cutoffs[k];
        }
        occ
    }

    pub fn amplitude(&self, occ: &[usize]) -> C64 {
        self.index(occ).map_or(C64::new(0.0, 0.0), |i| self.amps[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn tensor(&self, other: &FockState) -> FockState {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs.extend_from_slice(&other.cutoffs);
        let amps = self
            .amps
            .iter()
            .flat_map(|a| other.amps.iter().map(move |b| a * b))
            .collect();
        FockState { cutoffs, amps }
    }

    pub fn inner(&self, other: &FockState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn weighted(&self, w: impl Fn(&[usize]) -> f64) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(i, a)| a.norm_sqr() * w(&self.occupation(i)))
            .sum()
    }

    pub fn expect_number(&self, k: usize) -> f64 {
        self.weighted(|o| o[k] as f64)
    }

    pub fn expect_number_sq(&self, k: usize) -> f64 {
        self.weighted(|o| (o[k] * o[k]) as f64)
    }

    pub fn expect_nn(&self, i: usize, j: usize) -> f64 {
        self.weighted(|o| (o[i] * o[j]) as f64)
    }

    /// Applies Σ coeff · (ladder product); `ops` lists (mode, +1 create / −1 annihilate).
    fn apply_term(&self, coeff: f64, ops: &[(usize, i32)]) -> Result<FockState> {
        let mut out = FockState::zeros(self.cutoffs.clone());
        let mut dropped = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            if let Some((occ, w)) = hop(&self.occupation(i), ops) {
                match out.index(&occ) {
                    Some(j) => out.amps[j] += a * (coeff * w),
                    None => dropped += (a * (coeff * w)).norm_sqr(),
                }
            }
        }
        if dropped > TAIL_TOL {
            return Err(Error::CutoffOverflow { tail: dropped });
        }
        Ok(out)
    }

    fn add_assign(&mut self, other: &FockState) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += b;
        }
    }

    fn scale(&mut self, s: C64) {
        self.amps.iter_mut().for_each(|a| *a *= s);
    }

    /// Jx = (a_p† a_m + a_m† a_p)/2 applied to the state.
    pub fn apply_jx(&self, p: usize, m: usize) -> Result<FockState> {
        let mut out = self.apply_term(0.5, &[(p, 1), (m, -1)])?;
        out.add_assign(&self.apply_term(0.5, &[(m, 1), (p, -1)])?);
        Ok(out)
    }

    /// Jz = (N_p − N_m)/2 applied to the state.
    pub fn apply_jz(&self, p: usize, m: usize) -> FockState {
        let mut out = self.clone();
        for (i, a) in out.amps.iter_mut().enumerate() {
            let o = self.occupation(i);
            *a *= 0.5 * (o[p] as f64 - o[m] as f64);
        }
        out
    }
}

/// Applies a ladder product to one occupation; None when annihilating 0.
fn hop(occ: &[usize], ops: &[(usize, i32)]) -> Option<(Occupation, f64)> {
    let mut o = occ.to_vec();
    let mut w = 1.0;
    // rightmost operator acts first
    for &(k, d) in ops.iter().rev() {
        if d > 0 {
            o[k] += 1;
            w *= (o[k] as f64).sqrt();
        } else {
            if o[k] == 0 {
                return None;
            }
            w *= (o[k] as f64).sqrt();
            o[k] -= 1;
        }
    }
    Some((o, w))
}

/// Mode orderings: three-mode (a1, a2, b); five-mode (a1, a+, a−, b+, b−).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrilinearModel {
    ThreeMode,
    FiveMode,
}

impl TrilinearModel {
    pub fn modes(self) -> usize {
        match self {
            TrilinearModel::ThreeMode => 3,
            TrilinearModel::FiveMode => 5,
        }
    }

    /// Hermitian-conjugate pairs T + T† making up the coupling.
    fn terms(self) -> Vec<Vec<(usize, i32)>> {
        match self {
            // a1 a2† b
            TrilinearModel::ThreeMode => vec![vec![(1, 1), (0, -1), (2, -1)]],
            // a1 a+† b+ and a1 a−† b−
            TrilinearModel::FiveMode => vec![vec![(1, 1), (0, -1), (3, -1)], vec![(2, 1), (0, -1), (4, -1)]],
        }
    }

    fn neighbours(self, occ: &[usize]) -> Vec<(Occupation, f64)> {
        let mut out = Vec::new();
        for t in self.terms() {
            if let Some(h) = hop(occ, &t) {
                out.push(h);
            }
            let dagger: Vec<(usize, i32)> = t.iter().rev().map(|&(k, d)| (k, -d)).collect();
            if let Some(h) = hop(occ, &dagger) {
                out.push(h);
            }
        }
        out
    }
}

/// Exact e^{−i·area·H} with H = a1 a2† b + h.c. (or its five-mode analogue).
pub fn exact_evolve(state: &FockState, model: TrilinearModel, pulse_area: f64) -> Result<FockState> {
    ensure(state.modes() == model.modes(), || "state does not match the model's mode count".into())?;
    ensure(pulse_area.is_finite(), || "pulse area must be finite".into())?;
    let norm0 = state.norm_sqr();
    ensure((norm0 - 1.0).abs() < NORM_TOL, || format!("input norm {norm0} differs from 1"))?;

    let mut out = FockState::zeros(state.cutoffs.clone());
    let mut seen: HashMap<Occupation, ()> = HashMap::new();
    let mut tail = 0.0;
    for (i, a) in state.amps.iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let start = state.occupation(i);
        if seen.contains_key(&start) {
            continue;
        }
        // Enumerate the block.
        let mut block: Vec<Occupation> = vec![start.clone()];
        let mut pos: HashMap<Occupation, usize> = HashMap::from([(start.clone(), 0)]);
        let mut queue = VecDeque::from([start]);
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        while let Some(occ) = queue.pop_front() {
            let from = pos[&occ];
            for (next, w) in model.neighbours(&occ) {
                let to = *pos.entry(next.clone()).or_insert_with(|| {
                    block.push(next.clone());
                    queue.push_back(next.clone());
                    block.len() - 1
                });
                edges.push((to, from, w));
            }
        }
        let d = block.len();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for (to, from, w) in edges {
            h[(to, from)] = w;
        }
        let psi = DVector::<C64>::from_iterator(d, block.iter().map(|o| state.amplitude(o)));
        for o in &block {
            seen.insert(o.clone(), ());
        }
        let eig = SymmetricEigen::new(h);
        let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let phases = DVector::<C64>::from_iterator(
            d,
            eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -pulse_area * l)),
        );
        let coeffs = v.adjoint() * psi;
        let evolved = &v * coeffs.component_mul(&phases);
        for (o, amp) in block.iter().zip(evolved.iter()) {
            match out.index(o) {
                Some(j) => out.amps[j] = *amp,
                None => tail += amp.norm_sqr(),
            }
        }
    }
    if tail > TAIL_TOL {
        return Err(Error::CutoffOverflow { tail });
    }
    let norm1 = out.norm_sqr();
    if (norm1 - norm0).abs() > NORM_TOL.max(2.0 * tail) {
        return Err(Error::Indeterminate(format!("oracle norm drifted from {norm0} to {norm1}")));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GaussianKind {
    Coherent { alpha: C64 },
    Squeezed(SqueezeSpec),
    TwoModeSqueezed(SqueezeSpec),
}

/// Largest squeezing the truncated expansions are trusted for.
pub const MAX_ORACLE_R: f64 = 1.5;

/// Exact truncated Fock expansion (one mode, or two for the pair state),
/// with the given cutoff per mode.
pub fn prepare_gaussian_fock(kind: GaussianKind, cutoff: usize) -> Result<FockState> {
    ensure(cutoff >= 1, || "cutoff must be at least 1".into())?;
    let mut state = match kind {
        GaussianKind::Coherent { alpha } => {
            let mut s = FockState::zeros(vec![cutoff]);
            let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
            for n in 0..cutoff {
                s.amps[n] = c;
                c *= alpha / ((n + 1) as f64).sqrt();
            }
            s
        }
        GaussianKind::Squeezed(spec) => {
            check_r(spec.r)?;
            let base = squeeze_base(&spec);
            let mut s = FockState::zeros(vec![cutoff]);
            let mut c = C64::new(spec.r.cosh().powf(-0.5), 0.0);
            let mut n = 0;
            while 2 * n < cutoff {
                s.amps[2 * n] = c;
                c *= base * ((2 * n + 1) as f64 / (2 * n + 2) as f64).sqrt();
                n += 1;
            }
            s
        }
        GaussianKind::TwoModeSqueezed(spec) => {
            check_r(spec.r)?;
            let base = squeeze_base(&spec);
            let mut s = FockState::zeros(vec![cutoff, cutoff]);
            let mut c = C64::new(1.0 / spec.r.cosh(), 0.0);
            for n in 0..cutoff {
                let i = s.index(&[n, n]).expect("in range");
                s.amps[i] = c;
                c *= base;
            }
            s
        }
    };
    let tail = 1.0 - state.norm_sqr();
    if tail > TAIL_TOL {
        return Err(Error::CutoffOverflow { tail });
    }
    // Renormalize away the sub-tolerance tail so evolutions start at norm 1.
    let n = state.norm_sqr().sqrt();
    state.scale(C64::new(1.0 / n, 0.0));
    Ok(state)
}

/// −i e^{iθ} tanh r: the pair-creation amplitude ratio matching the
/// phase-space map b → b cosh r − i e^{iθ} b† sinh r.
fn squeeze_base(spec: &SqueezeSpec) -> C64 {
    C64::new(0.0, -1.0) * C64::from_polar(spec.r.tanh(), spec.theta_sq)
}

fn check_r(r: f64) -> Result<()> {
    ensure(r <= MAX_ORACLE_R, || format!("r = {r} too large for the Fock oracle (max {MAX_ORACLE_R})"))
}

/// Smallest cutoff meeting the tail bound, for sizing tests.
pub fn cutoff_for(kind: GaussianKind, max_cutoff: usize) -> Option<usize> {
    (1..=max_cutoff).find(|&c| prepare_gaussian_fock(kind, c).is_ok())
}
