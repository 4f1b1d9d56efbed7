//! Counter-keyed Gaussian noise: every draw is a pure function of
//! (seed, trajectory index, channel), so ensembles come out identical no
//! matter how trajectories are split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::C64;

/// Identifies an independent noise source within one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Channel(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseKey {
    pub seed: u64,
}

impl NoiseKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, trajectory: u64, channel: Channel) -> ChaCha8Rng {
        assert!(trajectory < 1 << 48, "trajectory index out of range");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((trajectory << 16) | u64::from(channel.0));
        rng
    }

    /// One complex Wigner vacuum noise: zero mean, E|η|² = 1/2.
    pub fn noise(&self, trajectory: u64, channel: Channel) -> C64 {
        wigner_noise(&mut self.rng(trajectory, channel))
    }
}

pub fn wigner_noise<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    C64::new(0.5 * x, 0.5 * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_keyed_not_sequenced() {
        let k = NoiseKey::new(7);
        let a = k.noise(3, Channel(1));
        let _ = k.noise(4, Channel(1));
        assert_eq!(a, k.noise(3, Channel(1)));
        assert_ne!(a, k.noise(3, Channel(2)));
        assert_ne!(a, NoiseKey::new(8).noise(3, Channel(1)));
    }

    #[test]
    fn noise_moments() {
        let k = NoiseKey::new(1);
        let n = 200_000;
        let (mut m, mut p, mut sq) = (C64::new(0.0, 0.0), 0.0, C64::new(0.0, 0.0));
        for t in 0..n {
            let e = k.noise(t, Channel(0));
            m += e;
            p += e.norm_sqr();
            sq += e * e;
        }
        let nf = n as f64;
        assert!((m / nf).norm() < 5.0 * (0.5 / nf).sqrt());
        assert!((p / nf - 0.5).abs() < 5.0 * (0.25 / nf).sqrt());
        assert!((sq / nf).norm() < 5.0 * (0.25 / nf).sqrt());
    }
}
