//! Seeded synthetic series: a sum of sinusoids plus Gaussian noise.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;
use crate::series::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// In samples.
    pub period: f64,
    /// In radians.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConfig {
    pub len: usize,
    pub components: Vec<Sinusoid>,
    /// Noise standard deviation as a fraction of the signal's standard
    /// deviation.
    pub noise: f64,
    pub offset: f64,
    pub seed: u64,
}

impl SmoothConfig {
    /// Three sinusoids with periods spread over the length, 1% noise.
    pub fn standard(len: usize, seed: u64) -> Self {
        let n = len.max(8) as f64;
        Self {
            len,
            components: vec![
                Sinusoid { amplitude: 1.0, period: n / 2.3, phase: 0.4 },
                Sinusoid { amplitude: 0.5, period: n / 7.1, phase: 1.9 },
                Sinusoid { amplitude: 0.25, period: n / 19.7, phase: 4.0 },
            ],
            noise: 0.01,
            offset: 0.0,
            seed,
        }
    }

    /// The same signal shifted in phase by `shift` radians in every component.
    pub fn phase_shifted(&self, shift: f64, seed: u64) -> Self {
        let mut out = self.clone();
        for c in &mut out.components {
            c.phase += shift;
        }
        out.seed = seed;
        out
    }

    pub fn signal_at(&self, i: usize) -> f64 {
        self.offset + self.components.iter().map(|c| c.amplitude * (TAU * i as f64 / c.period + c.phase).sin()).sum::<f64>()
    }

    pub fn values(&self) -> Vec<f64> {
        let rms = (self.components.iter().map(|c| c.amplitude * c.amplitude).sum::<f64>() / 2.0).sqrt();
        let sigma = self.noise * rms;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            (0..self.len).map(|i| self.signal_at(i) + normal.sample(&mut rng)).collect()
        } else {
            (0..self.len).map(|i| self.signal_at(i)).collect()
        }
    }

    pub fn series<S: Scalar>(&self, id: impl Into<String>) -> TimeSeries<S> {
        let values = self.values().into_iter().map(S::lit).collect();
        TimeSeries::from_values(id, values).expect("nonempty synthetic series")
    }
}

/// Two standard series sharing their signal up to a small phase shift, with
/// independent noise.
pub fn correlated_pair<S: Scalar>(len: usize, seed: u64) -> (TimeSeries<S>, TimeSeries<S>) {
    let a = SmoothConfig::standard(len, seed);
    let b = a.phase_shifted(0.3, seed.wrapping_add(1));
    (a.series("T1"), b.series("T2"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_noisy() {
        let c = SmoothConfig::standard(1000, 7);
        assert_eq!(c.values(), c.values());
        let v = c.values();
        let resid: f64 = v.iter().enumerate().map(|(i, x)| (x - c.signal_at(i)).powi(2)).sum::<f64>() / 1000.0;
        let sigma = resid.sqrt();
        assert!((sigma - 0.0081).abs() < 0.0015, "{sigma}");
        assert_ne!(SmoothConfig::standard(1000, 8).values(), v);
    }

    #[test]
    fn noise_free_matches_signal() {
        let mut c = SmoothConfig::standard(50, 1);
        c.noise = 0.0;
        let v = c.values();
        assert_eq!(v[10], c.signal_at(10));
    }
}
