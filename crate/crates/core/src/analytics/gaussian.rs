//! Exact moment algebra for Gaussian Wigner distributions.
//!
//! A state is its complex mean μ together with Γ_kl = E[δ_k δ_l*] and
//! C_kl = E[δ_k δ_l] of the fluctuations δ = α − μ. Linear maps and loss act
//! on these directly; polynomial expectations follow from Isserlis' theorem.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::sampler::SqueezeSpec;
use crate::C64;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: Vec<C64>,
    gamma: DMatrix<C64>,
    pair: DMatrix<C64>,
}

impl GaussianState {
    pub fn vacuum(n: usize) -> Self {
        Self {
            mean: vec![zero(); n],
            gamma: DMatrix::from_diagonal_element(n, n, C64::new(0.5, 0.0)),
            pair: DMatrix::zeros(n, n),
        }
    }

    pub fn modes(&self) -> usize {
        self.mean.len()
    }

    pub fn set_mean(&mut self, k: usize, amp: C64) {
        self.mean[k] = amp;
    }

    pub fn mean(&self, k: usize) -> C64 {
        self.mean[k]
    }

    /// Replaces vacuum mode `k` by a squeezed vacuum.
    pub fn squeeze(&mut self, k: usize, spec: &SqueezeSpec) {
        let (ch, sh) = (spec.r.cosh(), spec.r.sinh());
        let z = C64::new(0.0, -1.0) * C64::from_polar(1.0, spec.theta_sq);
        self.gamma[(k, k)] = C64::new(0.5 * (ch * ch + sh * sh), 0.0);
        self.pair[(k, k)] = z * ch * sh;
    }

    /// Replaces vacuum modes `p`, `m` by a two-mode squeezed vacuum.
    pub fn squeeze_pair(&mut self, p: usize, m: usize, spec: &SqueezeSpec) {
        let (ch, sh) = (spec.r.cosh(), spec.r.sinh());
        let z = C64::new(0.0, -1.0) * C64::from_polar(1.0, spec.theta_sq);
        let diag = C64::new(0.5 * (ch * ch + sh * sh), 0.0);
        self.gamma[(p, p)] = diag;
        self.gamma[(m, m)] = diag;
        self.pair[(p, m)] = z * ch * sh;
        self.pair[(m, p)] = z * ch * sh;
    }

    /// Applies (a_i, a_j) → (u00 a_i + u01 a_j, u10 a_i + u11 a_j).
    pub fn mix(&mut self, i: usize, j: usize, u: [[C64; 2]; 2]) {
        let n = self.modes();
        let mut l = DMatrix::<C64>::identity(n, n);
        l[(i, i)] = u[0][0];
        l[(i, j)] = u[0][1];
        l[(j, i)] = u[1][0];
        l[(j, j)] = u[1][1];
        self.apply(&l);
    }

    pub fn apply(&mut self, l: &DMatrix<C64>) {
        let mu = nalgebra::DVector::from_vec(self.mean.clone());
        self.mean = (l * mu).iter().copied().collect();
        self.gamma = l * &self.gamma * l.adjoint();
        self.pair = l * &self.pair * l.transpose();
    }

    pub fn beamsplitter(&mut self, i: usize, j: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let (c, mi) = (C64::new(c, 0.0), C64::new(0.0, -s));
        self.mix(i, j, [[c, mi], [mi, c]]);
    }

    pub fn phase(&mut self, k: usize, phi: f64) {
        let n = self.modes();
        let mut l = DMatrix::<C64>::identity(n, n);
        l[(k, k)] = C64::from_polar(1.0, phi);
        self.apply(&l);
    }

    /// Mixes mode `k` with vacuum at transmission `eta`.
    pub fn loss(&mut self, k: usize, eta: f64) {
        let n = self.modes();
        let mut l = DMatrix::<C64>::identity(n, n);
        l[(k, k)] = C64::new(eta.sqrt(), 0.0);
        self.apply(&l);
        self.gamma[(k, k)] += C64::new(0.5 * (1.0 - eta), 0.0);
    }

    /// Wigner mean of |α_k|².
    pub fn symbol_number(&self, k: usize) -> f64 {
        self.mean[k].norm_sqr() + self.gamma[(k, k)].re
    }

    /// Corrected ⟨N_k⟩.
    pub fn number(&self, k: usize) -> f64 {
        self.symbol_number(k) - 0.5
    }

    /// Cov(|α_k|², |α_l|²) under the Wigner distribution.
    pub fn symbol_number_cov(&self, k: usize, l: usize) -> f64 {
        let (g, c) = (self.gamma[(k, l)], self.pair[(k, l)]);
        let (mk, ml) = (self.mean[k], self.mean[l]);
        g.norm_sqr() + c.norm_sqr() + 2.0 * (mk.conj() * ml * g).re + 2.0 * (mk.conj() * ml.conj() * c).re
    }

    /// Corrected mean and variance of Σ c_k N_k.
    pub fn combination(&self, coeffs: &[(usize, f64)]) -> (f64, f64) {
        let mean = coeffs.iter().map(|&(k, c)| c * self.number(k)).sum();
        let mut var = 0.0;
        for &(k, ck) in coeffs {
            for &(l, cl) in coeffs {
                var += ck * cl * self.symbol_number_cov(k, l);
            }
        }
        var -= 0.25 * coeffs.iter().map(|(_, c)| c * c).sum::<f64>();
        (mean, var)
    }

    fn contraction(&self, f: Factor, g: Factor) -> C64 {
        match (f.conj, g.conj) {
            (false, false) => self.pair[(f.mode, g.mode)],
            (true, true) => self.pair[(f.mode, g.mode)].conj(),
            (false, true) => self.gamma[(f.mode, g.mode)],
            (true, false) => self.gamma[(g.mode, f.mode)],
        }
    }

    fn factor_mean(&self, f: Factor) -> C64 {
        if f.conj {
            self.mean[f.mode].conj()
        } else {
            self.mean[f.mode]
        }
    }

    /// E[Π (μ_f + δ_f)] by peeling off the first factor.
    fn expect_monomial(&self, fs: &[Factor]) -> C64 {
        let Some((&first, rest)) = fs.split_first() else {
            return C64::new(1.0, 0.0);
        };
        let mut total = self.factor_mean(first) * self.expect_monomial(rest);
        for i in 0..rest.len() {
            let w = self.contraction(first, rest[i]);
            if w.norm_sqr() == 0.0 {
                continue;
            }
            let others: Vec<Factor> = rest.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &f)| f).collect();
            total += w * self.expect_monomial(&others);
        }
        total
    }

    pub fn expect(&self, p: &Poly) -> C64 {
        p.terms.iter().map(|(m, &c)| self.expect_monomial(m) * c).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub mode: usize,
    pub conj: bool,
}

/// Real-coefficient polynomial in amplitudes and their conjugates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<Vec<Factor>, f64>,
}

impl Poly {
    pub fn one() -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), 1.0);
        Self { terms }
    }

    pub fn monomial(coeff: f64, factors: &[(usize, bool)]) -> Self {
        let mut key: Vec<Factor> = factors.iter().map(|&(mode, conj)| Factor { mode, conj }).collect();
        key.sort();
        let mut terms = BTreeMap::new();
        terms.insert(key, coeff);
        Self { terms }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            *out.terms.entry(k.clone()).or_insert(0.0) += v;
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ka, va) in &self.terms {
            for (kb, vb) in &other.terms {
                let mut key = ka.clone();
                key.extend_from_slice(kb);
                key.sort();
                *out.terms.entry(key).or_insert(0.0) += va * vb;
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::one(), |acc, _| acc.mul(self))
    }

    /// |α_k|²
    pub fn number(k: usize) -> Poly {
        Poly::monomial(1.0, &[(k, true), (k, false)])
    }

    /// Symbol of Jx = Re(α_p* α_m).
    pub fn spin_x(p: usize, m: usize) -> Poly {
        Poly::monomial(0.5, &[(p, true), (m, false)]).add(&Poly::monomial(0.5, &[(m, true), (p, false)]))
    }

    /// Symbol of Jz = (|α_p|² − |α_m|²)/2.
    pub fn spin_z(p: usize, m: usize) -> Poly {
        Poly::monomial(0.5, &[(p, true), (p, false)]).add(&Poly::monomial(-0.5, &[(m, true), (m, false)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn squeezed_number_statistics() {
        let mut g = GaussianState::vacuum(1);
        let spec = SqueezeSpec::new(0.8, FRAC_PI_2).unwrap();
        g.squeeze(0, &spec);
        let sh2 = 0.8f64.sinh().powi(2);
        assert!((g.number(0) - sh2).abs() < 1e-12);
        // Squeezed vacuum: V(N) = 2 sinh²r cosh²r.
        let (_, v) = g.combination(&[(0, 1.0)]);
        assert!((v - 2.0 * sh2 * (1.0 + sh2)).abs() < 1e-10);
        // Wick route agrees with the closed covariance.
        let n2 = g.expect(&Poly::number(0).pow(2)).re;
        let n1 = g.expect(&Poly::number(0)).re;
        assert!((n2 - n1 * n1 - g.symbol_number_cov(0, 0)).abs() < 1e-10);
    }

    #[test]
    fn coherent_poisson_and_loss() {
        let mut g = GaussianState::vacuum(2);
        g.set_mean(0, C64::new(10.0, 0.0));
        let (m, v) = g.combination(&[(0, 1.0)]);
        assert!((m - 100.0).abs() < 1e-12 && (v - 100.0).abs() < 1e-10);
        g.loss(0, 0.9);
        let (m, v) = g.combination(&[(0, 1.0)]);
        assert!((m - 90.0).abs() < 1e-10 && (v - 90.0).abs() < 1e-9);
        g.beamsplitter(0, 1, FRAC_PI_2);
        let (m, v) = g.combination(&[(0, 1.0), (1, -1.0)]);
        assert!(m.abs() < 1e-9 && (v - 90.0).abs() < 1e-9);
    }

    #[test]
    fn mean_contributions_in_wick() {
        let mut g = GaussianState::vacuum(1);
        g.set_mean(0, C64::new(1.5, -0.5));
        g.squeeze(0, &SqueezeSpec::new(0.3, 0.4).unwrap());
        let via_wick = g.expect(&Poly::number(0).pow(2)).re - g.expect(&Poly::number(0)).re.powi(2);
        assert!((via_wick - g.symbol_number_cov(0, 0)).abs() < 1e-10);
    }
}
