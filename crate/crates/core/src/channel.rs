//! BPSK over AWGN and channel LLR formation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polar::PolarCode;

/// Which rate converts `Eb/N0` into a noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateConvention {
    /// `K / N`, CRC bits counted as information.
    #[default]
    KOverN,
    /// `(K - r) / N`, payload bits only.
    Payload,
}

impl RateConvention {
    pub fn rate(self, code: &PolarCode) -> f64 {
        match self {
            Self::KOverN => code.k() as f64 / code.len() as f64,
            Self::Payload => code.payload_len() as f64 / code.len() as f64,
        }
    }
}

impl fmt::Display for RateConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::KOverN => "k-over-n",
            Self::Payload => "payload",
        })
    }
}

impl FromStr for RateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k-over-n" | "kn" => Ok(Self::KOverN),
            "payload" => Ok(Self::Payload),
            _ => Err(Error::InvalidChannel(format!("unknown rate convention {s:?}"))),
        }
    }
}

/// `σ² = 1 / (2 R 10^(Eb/N0 / 10))`.
pub fn ebn0_to_sigma2(ebn0_db: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidChannel(format!("rate {rate} outside (0, 1]")));
    }
    if !ebn0_db.is_finite() {
        return Err(Error::InvalidChannel(format!("Eb/N0 {ebn0_db} dB is not finite")));
    }
    Ok(1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub ebn0_db: f64,
    pub rate: f64,
    pub sigma2: f64,
}

impl ChannelConfig {
    pub fn from_ebn0(ebn0_db: f64, rate: f64) -> Result<Self> {
        Ok(Self {
            ebn0_db,
            rate,
            sigma2: ebn0_to_sigma2(ebn0_db, rate)?,
        })
    }

    /// A channel with a fixed noise variance; `ebn0_db` is back-computed.
    pub fn from_sigma2(sigma2: f64, rate: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidChannel(format!("σ² = {sigma2} must be positive")));
        }
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidChannel(format!("rate {rate} outside (0, 1]")));
        }
        let ebn0_db = 10.0 * (1.0 / (2.0 * rate * sigma2)).log10();
        Ok(Self { ebn0_db, rate, sigma2 })
    }

    /// `y = (1 - 2x) + z`, `z ~ N(0, σ²)`, returned as `L = 2y / σ²`.
    pub fn transmit<R: Rng + ?Sized>(&self, x: &[u8], rng: &mut R) -> Vec<f64> {
        let unit_noise: Vec<f64> = x.iter().map(|_| rng.sample(StandardNormal)).collect();
        self.llrs_with_noise(x, &unit_noise)
    }

    /// Deterministic core of [`transmit`](Self::transmit): `unit_noise`
    /// holds standard-normal draws, scaled here by `σ`.
    pub fn llrs_with_noise(&self, x: &[u8], unit_noise: &[f64]) -> Vec<f64> {
        let sigma = self.sigma2.sqrt();
        let scale = 2.0 / self.sigma2;
        x.iter()
            .zip(unit_noise)
            .map(|(&bit, &z)| scale * (1.0 - 2.0 * f64::from(bit & 1) + sigma * z))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn sigma2_conversions() {
        assert!((ebn0_to_sigma2(0.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((ebn0_to_sigma2(3.0103, 0.5).unwrap() - 0.5).abs() < 1e-5);
        // 1 / 10^0.3, evaluated with mpmath at 30 digits.
        assert!((ebn0_to_sigma2(3.0, 0.5).unwrap() - 0.501_187_233_627_272_3).abs() < 1e-15);
        assert!(ebn0_to_sigma2(1.0, 0.0).is_err());
        assert!(ebn0_to_sigma2(1.0, 1.5).is_err());
    }

    #[test]
    fn noiseless_limit_is_strongly_positive() {
        let ch = ChannelConfig::from_sigma2(1e-9, 0.5).unwrap();
        let mut rng = stream_rng(3, Stream::Noise, 0, 0);
        let l = ch.transmit(&[0; 64], &mut rng);
        assert!(l.iter().all(|&v| v > 1e8));
    }

    #[test]
    fn llr_formula_without_noise() {
        let ch = ChannelConfig::from_sigma2(1.0, 0.5).unwrap();
        assert_eq!(ch.llrs_with_noise(&[1, 0], &[0.0, 0.0]), vec![-2.0, 2.0]);
    }

    #[test]
    fn same_seed_same_llrs() {
        let ch = ChannelConfig::from_ebn0(2.0, 0.5).unwrap();
        let x: Vec<u8> = (0..128).map(|i| (i % 3 == 0) as u8).collect();
        let a = ch.transmit(&x, &mut stream_rng(9, Stream::Noise, 1, 2));
        let b = ch.transmit(&x, &mut stream_rng(9, Stream::Noise, 1, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn llr_mean_and_sign_statistics() {
        let ch = ChannelConfig::from_ebn0(1.0, 0.5).unwrap();
        let draws = 100_000;
        let mut rng = stream_rng(17, Stream::Noise, 0, 0);
        let l = ch.transmit(&vec![0u8; draws], &mut rng);
        let mean = l.iter().sum::<f64>() / draws as f64;
        // L = 2y/σ² with y ~ N(1, σ²): mean 2/σ², std 2/σ.
        let expected = 2.0 / ch.sigma2;
        let stderr = 2.0 / ch.sigma2.sqrt() / (draws as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * stderr, "mean {mean} vs {expected}");

        // Pr(L < 0) = Q(1/σ).
        use statrs::distribution::{ContinuousCDF, Normal};
        let q = 1.0 - Normal::new(0.0, 1.0).unwrap().cdf(1.0 / ch.sigma2.sqrt());
        let neg = l.iter().filter(|&&v| v < 0.0).count() as f64 / draws as f64;
        let se = (q * (1.0 - q) / draws as f64).sqrt();
        assert!((neg - q).abs() < 4.0 * se, "Pr(L<0) {neg} vs Q {q}");
    }
}
