//! Block-fading WSSUS multipath channel and the per-subcarrier observation
//! model `y_n(k,l) = Σ_m h_nm(k) x_m(k,l) + w_n(k,l)`.
//!
//! Time-domain OFDM is not simulated: with every delay inside the cyclic
//! prefix the post-FFT model above is exact.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

/// Tapped-delay-line power profile with unit total power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub name: String,
    /// Tap delays in seconds, strictly increasing.
    pub delays_s: Vec<f64>,
    /// Linear tap powers summing to one.
    pub powers: Vec<f64>,
}

impl PowerDelayProfile {
    /// Builds a profile from delays in ns and relative powers in dB.
    pub fn from_ns_db(name: &str, delays_ns: &[f64], powers_db: &[f64]) -> Result<Self> {
        if delays_ns.is_empty() || delays_ns.len() != powers_db.len() {
            return Err(Error::InvalidConfig(format!(
                "profile {name}: {} delays vs {} powers",
                delays_ns.len(),
                powers_db.len()
            )));
        }
        if delays_ns[0] < 0.0 || delays_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(format!(
                "profile {name}: delays must be nonnegative and strictly increasing"
            )));
        }
        if powers_db.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("profile {name}: non-finite power")));
        }
        let lin: Vec<f64> = powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        Ok(Self {
            name: name.to_string(),
            delays_s: delays_ns.iter().map(|d| d * 1e-9).collect(),
            powers: lin.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn taps(&self) -> usize {
        self.delays_s.len()
    }

    pub fn max_delay_s(&self) -> f64 {
        *self.delays_s.last().expect("profile has taps")
    }

    /// Profile lookup by name (`etu`, `flat`).
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "etu" => Ok(etu_profile()),
            "flat" => Self::from_ns_db("flat", &[0.0], &[0.0]),
            other => Err(Error::InvalidConfig(format!("unknown channel profile {other}"))),
        }
    }
}

/// 3GPP extended typical urban profile, normalized to unit power.
pub fn etu_profile() -> PowerDelayProfile {
    PowerDelayProfile::from_ns_db(
        "etu",
        &[0.0, 50.0, 120.0, 200.0, 230.0, 500.0, 1600.0, 2300.0, 5000.0],
        &[-1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -3.0, -5.0, -7.0],
    )
    .expect("ETU table is valid")
}

/// `h(k) = Σ_i α_i exp(−j2π k Δf τ_i)` for subcarriers `k = 1..=K`.
pub fn freq_response(gains: &[Complex64], delays_s: &[f64], subcarriers: usize, spacing_hz: f64) -> Vec<Complex64> {
    (1..=subcarriers)
        .map(|k| {
            gains
                .iter()
                .zip(delays_s)
                .map(|(a, tau)| a * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * spacing_hz * tau))
                .sum()
        })
        .collect()
}

/// Frequency-domain channel covariance `[Σ]_{k,k'} = Σ_i P_i e^{−j2π(k−k')Δf τ_i}`
/// of one link.
pub fn prior_covariance(profile: &PowerDelayProfile, subcarriers: usize, spacing_hz: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(subcarriers, subcarriers, |a, b| {
        let dk = a as f64 - b as f64;
        profile
            .powers
            .iter()
            .zip(&profile.delays_s)
            .map(|(p, tau)| Complex64::from_polar(*p, -2.0 * PI * dk * spacing_hz * tau))
            .sum()
    })
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// One frame's channel: tap gains and subcarrier responses per link.
///
/// Links are indexed `n * tx + m`. The response is static across OFDM
/// symbols of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub tx: usize,
    pub rx: usize,
    pub delays_s: Vec<f64>,
    pub gains: Vec<Vec<Complex64>>,
    pub response: Vec<Vec<Complex64>>,
}

impl ChannelRealization {
    #[inline]
    pub fn link(&self, n: usize, m: usize) -> usize {
        n * self.tx + m
    }

    /// `h_nm(k)` with 0-based subcarrier index.
    #[inline]
    pub fn h(&self, n: usize, m: usize, k: usize) -> Complex64 {
        self.response[self.link(n, m)][k]
    }

    pub fn subcarriers(&self) -> usize {
        self.response.first().map_or(0, Vec::len)
    }

    /// Total response energy `Σ_{n,m,k} |h_nm(k)|²`.
    pub fn energy(&self) -> f64 {
        self.response.iter().flatten().map(|h| h.norm_sqr()).sum()
    }
}

/// Draws independent Rayleigh taps for every link.
pub fn draw_channel<R: Rng + ?Sized>(
    profile: &PowerDelayProfile,
    tx: usize,
    rx: usize,
    subcarriers: usize,
    spacing_hz: f64,
    rng: &mut R,
) -> ChannelRealization {
    let mut gains = Vec::with_capacity(tx * rx);
    let mut response = Vec::with_capacity(tx * rx);
    for _ in 0..tx * rx {
        let g: Vec<Complex64> = profile
            .powers
            .iter()
            .map(|&p| complex_gaussian(rng, p))
            .collect();
        response.push(freq_response(&g, &profile.delays_s, subcarriers, spacing_hz));
        gains.push(g);
    }
    ChannelRealization {
        tx,
        rx,
        delays_s: profile.delays_s.clone(),
        gains,
        response,
    }
}

/// Received frame, `y[n * n_re + re]` with `re = l·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Vec<Complex64>,
    pub rx: usize,
    pub n_re: usize,
    /// True noise variance `λ^{-1}`.
    pub noise_var: f64,
}

impl Observation {
    #[inline]
    pub fn at(&self, n: usize, re: usize) -> Complex64 {
        self.y[n * self.n_re + re]
    }
}

/// Passes per-antenna symbol grids (`x[m][re]`) through the channel and adds
/// AWGN of variance `noise_var` (zero disables the noise).
pub fn transmit<R: Rng + ?Sized>(
    x: &[Vec<Complex64>],
    ch: &ChannelRealization,
    noise_var: f64,
    rng: &mut R,
) -> Result<Observation> {
    if x.len() != ch.tx {
        return Err(Error::DimensionMismatch(format!(
            "{} symbol streams for {} transmit antennas",
            x.len(),
            ch.tx
        )));
    }
    let k_count = ch.subcarriers();
    let n_re = x.first().map_or(0, Vec::len);
    if k_count == 0 || n_re % k_count != 0 || x.iter().any(|v| v.len() != n_re) {
        return Err(Error::DimensionMismatch(format!(
            "symbol grid of {n_re} elements over {k_count} subcarriers"
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise variance {noise_var}")));
    }
    let mut y = Vec::with_capacity(ch.rx * n_re);
    for n in 0..ch.rx {
        for re in 0..n_re {
            let k = re % k_count;
            let mut acc: Complex64 = (0..ch.tx).map(|m| ch.h(n, m, k) * x[m][re]).sum();
            if noise_var > 0.0 {
                acc += complex_gaussian(rng, noise_var);
            }
            y.push(acc);
        }
    }
    Ok(Observation {
        y,
        rx: ch.rx,
        n_re,
        noise_var,
    })
}
