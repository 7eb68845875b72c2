//! Independent reference computations used by the self-test and the test
//! suites: exhaustive decoding, an explicit shift-register encoder, a
//! sampled-impulse-response DFT and Monte-Carlo estimates of the
//! variational expectations.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{complex_gaussian, etu_profile, freq_response, Observation};
use crate::error::{Error, Result};
use crate::fec::{bcjr_decode, conv_encode, Bit, ConvCodeSpec};
use crate::modem::{pmf_moments, Constellation, Modulation, SymbolBeliefGrid, SymbolPmf};
use crate::numerics::{psd_sqrt_factor, rel_frobenius, ComplexMatrix, ComplexVector, GaussianDensity, HermitianPsd};
use crate::vmp::{joint_channel_update, noise_precision_update, ChannelBelief, ChannelModel, ChannelPrior, NoisePrior};

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A-posteriori info and coded LLRs by enumerating every information word.
pub fn bcjr_enumeration(priors: &[f64], spec: &ConvCodeSpec, info_len: usize) -> (Vec<f64>, Vec<f64>) {
    let words = 1usize << info_len;
    let coded_len = spec.coded_len(info_len);
    assert_eq!(priors.len(), coded_len);
    let mut info_terms = vec![[Vec::new(), Vec::new()]; info_len];
    let mut coded_terms = vec![[Vec::new(), Vec::new()]; coded_len];
    for w in 0..words {
        let u: Vec<Bit> = (0..info_len).map(|j| ((w >> j) & 1) as Bit).collect();
        let c = conv_encode(&u, spec);
        let metric: f64 = c
            .iter()
            .zip(priors)
            .map(|(&b, &l)| if b == 0 { 0.5 * l } else { -0.5 * l })
            .sum();
        for (j, &b) in u.iter().enumerate() {
            info_terms[j][b as usize].push(metric);
        }
        for (j, &b) in c.iter().enumerate() {
            coded_terms[j][b as usize].push(metric);
        }
    }
    let llr = |t: &[Vec<f64>; 2]| log_sum_exp(&t[0]) - log_sum_exp(&t[1]);
    (
        info_terms.iter().map(llr).collect(),
        coded_terms.iter().map(llr).collect(),
    )
}

/// Rate-1/n feed-forward encoder written as an explicit register array,
/// newest bit first, flushed with `K − 1` zeros.
pub fn shift_register_encode(info: &[Bit], spec: &ConvCodeSpec) -> Vec<Bit> {
    let k = spec.constraint_length as usize;
    let mut reg = vec![0u8; k];
    let mut out = Vec::new();
    let tail = if spec.zero_tail { k - 1 } else { 0 };
    for &b in info.iter().chain(std::iter::repeat_n(&0, tail)) {
        reg.rotate_right(1);
        reg[0] = b;
        for &g in &spec.generators {
            // Generator bit (K−1−i) taps the register cell i.
            let mut p = 0u8;
            for (i, &r) in reg.iter().enumerate() {
                if (g >> (k - 1 - i)) & 1 == 1 {
                    p ^= r;
                }
            }
            out.push(p);
        }
    }
    out
}

/// DFT bins `k = 1..=K` of the impulse response sampled at `1/(Δf·n_fft)`.
/// Every delay has to fall on the sampling grid.
pub fn dft_response(
    gains: &[Complex64],
    delays_s: &[f64],
    subcarriers: usize,
    spacing_hz: f64,
    n_fft: usize,
) -> Result<Vec<Complex64>> {
    let ts = 1.0 / (spacing_hz * n_fft as f64);
    let mut impulse = vec![Complex64::new(0.0, 0.0); n_fft];
    for (g, tau) in gains.iter().zip(delays_s) {
        let pos = tau / ts;
        let n = pos.round();
        if (pos - n).abs() > 1e-9 || n < 0.0 || n as usize >= n_fft {
            return Err(Error::OutOfRange(format!("delay {tau} s is off the {ts} s grid")));
        }
        impulse[n as usize] += g;
    }
    Ok((1..=subcarriers)
        .map(|k| {
            // Empty samples contribute nothing to the sum.
            impulse
                .iter()
                .enumerate()
                .filter(|(_, h)| h.norm_sqr() > 0.0)
                .map(|(n, h)| {
                    let r = (k * n) % n_fft;
                    h * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * r as f64 / n_fft as f64)
                })
                .sum()
        })
        .collect())
}

/// Relative errors of the closed-form messages against sampling.
#[derive(Debug, Clone, Copy)]
pub struct VmpOracleReport {
    pub residual_rel_err: f64,
    pub mean_rel_err: f64,
    pub cov_rel_err: f64,
}

impl VmpOracleReport {
    pub fn max_err(&self) -> f64 {
        self.residual_rel_err.max(self.mean_rel_err).max(self.cov_rel_err)
    }
}

/// Single-antenna, two-subcarrier, one-symbol system with random symbol
/// pmfs and a random Gaussian channel belief. The closed forms of `A` and
/// of the joint channel update are compared with expectations estimated
/// from `samples` joint draws of the beliefs.
pub fn vmp_monte_carlo_oracle(seed: u64, samples: usize) -> Result<VmpOracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Constellation::new(Modulation::Qpsk);
    let kk = 2;
    let rand_c = |rng: &mut ChaCha8Rng| complex_gaussian(rng, 1.0);

    // Log-weights of spread 2, comparable to beliefs after a few iterations.
    let pmfs: Vec<SymbolPmf> = (0..kk)
        .map(|_| {
            SymbolPmf::from_log_weights(
                (0..c.size())
                    .map(|_| 2.0 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect(),
            )
        })
        .collect();
    let mut sym = SymbolBeliefGrid::zeros(1, kk);
    for (k, p) in pmfs.iter().enumerate() {
        let (m, v) = pmf_moments(p, &c);
        sym.set(0, k, m, v);
    }
    let random_hpd = |rng: &mut ChaCha8Rng, shift: f64| {
        let a = ComplexMatrix::from_fn(kk, kk, |_, _| rand_c(rng));
        HermitianPsd::new(&a * a.adjoint() * Complex64::new(0.5, 0.0) + ComplexMatrix::identity(kk, kk) * Complex64::new(shift, 0.0))
    };
    let h_cov = random_hpd(&mut rng, 0.1)?;
    let h_mean = ComplexVector::from_fn(kk, |_, _| rand_c(&mut rng));
    let ch = ChannelBelief {
        model: ChannelModel::Joint,
        tx: 1,
        rx: 1,
        subcarriers: kk,
        blocks: vec![GaussianDensity::new(h_mean.clone(), h_cov.clone())?],
    };
    let prior = ChannelPrior::new(random_hpd(&mut rng, 0.5)?.into_matrix())?;
    let y: Vec<Complex64> = (0..kk).map(|_| rand_c(&mut rng)).collect();
    let obs = Observation {
        y: y.clone(),
        rx: 1,
        n_re: kk,
        noise_var: 0.0,
    };
    let lambda = rng.random_range(0.5..4.0);

    let exact_a = noise_precision_update(&obs, &sym, &ch, NoisePrior::default())?.rate;
    let exact_h = joint_channel_update(&obs, lambda, &sym, &prior)?;

    // Sampling.
    let factor = psd_sqrt_factor(&h_cov);
    let cdfs: Vec<Vec<f64>> = pmfs
        .iter()
        .map(|p| {
            p.probs()
                .iter()
                .scan(0.0, |acc, &w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut a_sum = 0.0;
    let mut x_sum = vec![Complex64::new(0.0, 0.0); kk];
    let mut x2_sum = vec![0.0; kk];
    for _ in 0..samples {
        let x: Vec<Complex64> = cdfs
            .iter()
            .map(|cdf| {
                let u: f64 = rng.random();
                let idx = cdf.iter().position(|&v| u < v).unwrap_or(cdf.len() - 1);
                c.points()[idx]
            })
            .collect();
        let z = ComplexVector::from_fn(factor.ncols(), |_, _| rand_c(&mut rng));
        let h = &h_mean + &factor * z;
        for k in 0..kk {
            a_sum += (y[k] - x[k] * h[k]).norm_sqr();
            x_sum[k] += x[k];
            x2_sum[k] += x[k].norm_sqr();
        }
    }
    let n = samples as f64;
    let mc_a = a_sum / n;
    let mut precision = prior.precision.matrix().clone();
    for k in 0..kk {
        precision[(k, k)] += Complex64::new(lambda * x2_sum[k] / n, 0.0);
    }
    let mc_cov = precision
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("sampled precision".into()))?;
    let rhs = ComplexVector::from_fn(kk, |k, _| (x_sum[k] / n).conj() * y[k] * lambda);
    let mc_mean = &mc_cov * rhs;

    let blk = &exact_h.blocks[0];
    Ok(VmpOracleReport {
        residual_rel_err: (mc_a - exact_a).abs() / exact_a,
        mean_rel_err: (&mc_mean - &blk.mean).norm() / blk.mean.norm(),
        cov_rel_err: rel_frobenius(&mc_cov, blk.cov.matrix()),
    })
}

/// Outcome of one self-test check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Quick versions of the oracle checks, for the `selftest` subcommand.
pub fn run_selftest() -> Vec<CheckResult> {
    let spec = ConvCodeSpec::default();
    let mut out = Vec::new();

    out.push(check("bcjr-vs-enumeration", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for u in 6..=8 {
            let priors: Vec<f64> = (0..spec.coded_len(u)).map(|_| rng.random_range(-4.0..4.0)).collect();
            let bcjr = bcjr_decode(&priors, &spec)?;
            let (info, coded) = bcjr_enumeration(&priors, &spec, u);
            for (a, b) in bcjr.app_info.iter().zip(&info).chain(bcjr.app_coded.iter().zip(&coded)) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok((worst < 1e-9, format!("max |ΔLLR| = {worst:.2e}")))
    })()));

    out.push(check("encoder-vs-shift-register", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u: Vec<Bit> = (0..200).map(|_| rng.random_range(0..2u8)).collect();
        let same = conv_encode(&u, &spec) == shift_register_encode(&u, &spec);
        Ok((same, "200 random bits".to_string()))
    })()));

    out.push(check("freq-response-vs-dft", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = etu_profile();
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let g: Vec<Complex64> = p.powers.iter().map(|&w| complex_gaussian(&mut rng, w)).collect();
            let a = freq_response(&g, &p.delays_s, 75, 15e3);
            let b = dft_response(&g, &p.delays_s, 75, 15e3, 20_000)?;
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).norm());
            }
        }
        Ok((worst < 1e-10, format!("max |Δh| = {worst:.2e}")))
    })()));

    out.push(check("vmp-messages-vs-sampling", (|| {
        let r = vmp_monte_carlo_oracle(14, 200_000)?;
        Ok((r.max_err() < 0.02, format!("{r:?}")))
    })()));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn dft_rejects_off_grid_delay() {
        assert!(dft_response(&[Complex64::new(1.0, 0.0)], &[1e-9], 4, 15e3, 100).is_err());
    }
}
