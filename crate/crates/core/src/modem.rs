//! Gray-labelled constellations and the symbol-level messages exchanged
//! between the equalizer and the demapper/decoder.
//!
//! Points are indexed by their label read as an integer, first bit most
//! significant. QPSK is labelled counterclockwise starting from
//! `00 → (1+j)/√2`; 16QAM uses per-axis Gray labelling `00→3, 01→1,
//! 11→−1, 10→−3` (scaled by 1/√10) with the first bit pair on the real axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fec::{saturate, Bit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam16,
}

impl std::str::FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Self::Qpsk),
            "qam16" | "16qam" => Ok(Self::Qam16),
            other => Err(Error::InvalidConfig(format!("unknown modulation {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: Modulation,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl Constellation {
    pub fn new(kind: Modulation) -> Self {
        match kind {
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                // labels 00, 01, 10, 11
                let points = vec![
                    Complex64::new(a, a),
                    Complex64::new(-a, a),
                    Complex64::new(a, -a),
                    Complex64::new(-a, -a),
                ];
                Self {
                    kind,
                    points,
                    bits_per_symbol: 2,
                }
            }
            Modulation::Qam16 => {
                let axis = |hi: usize, lo: usize| -> f64 {
                    match (hi, lo) {
                        (0, 0) => 3.0,
                        (0, 1) => 1.0,
                        (1, 1) => -1.0,
                        _ => -3.0,
                    }
                };
                let scale = 1.0 / 10f64.sqrt();
                let points = (0..16)
                    .map(|label: usize| {
                        let b = |i: usize| (label >> (3 - i)) & 1;
                        Complex64::new(axis(b(0), b(1)) * scale, axis(b(2), b(3)) * scale)
                    })
                    .collect();
                Self {
                    kind,
                    points,
                    bits_per_symbol: 4,
                }
            }
        }
    }

    pub fn kind(&self) -> Modulation {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Bit `j` (0 = first/MSB) of the label of point `idx`.
    #[inline]
    pub fn label_bit(&self, idx: usize, j: usize) -> Bit {
        ((idx >> (self.bits_per_symbol - 1 - j)) & 1) as Bit
    }

    pub fn label_bits(&self, idx: usize) -> Vec<Bit> {
        (0..self.bits_per_symbol)
            .map(|j| self.label_bit(idx, j))
            .collect()
    }

    /// Index of the nearest point.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn max_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max)
    }
}

/// Maps coded bits onto constellation points.
pub fn map_bits(bits: &[Bit], c: &Constellation) -> Result<Vec<Complex64>> {
    let q = c.bits_per_symbol();
    if bits.len() % q != 0 {
        return Err(Error::LengthMismatch {
            expected: bits.len().div_ceil(q) * q,
            actual: bits.len(),
        });
    }
    Ok(bits
        .chunks(q)
        .map(|chunk| {
            let idx = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            c.points[idx]
        })
        .collect())
}

/// Hard-decision demapping to the nearest point's label.
pub fn hard_demap(symbols: &[Complex64], c: &Constellation) -> Vec<Bit> {
    symbols
        .iter()
        .flat_map(|&z| c.label_bits(c.nearest(z)))
        .collect()
}

/// Probability mass function over the points of a constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPmf(Vec<f64>);

impl SymbolPmf {
    pub fn uniform(size: usize) -> Self {
        Self(vec![1.0 / size as f64; size])
    }

    pub fn point_mass(size: usize, idx: usize) -> Self {
        let mut p = vec![0.0; size];
        p[idx] = 1.0;
        Self(p)
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidConfig("pmf weights must be nonnegative with positive sum".into()));
        }
        Ok(Self(w.into_iter().map(|x| x / total).collect()))
    }

    /// Normalizes log-weights with max subtraction.
    pub fn from_log_weights(mut lw: Vec<f64>) -> Self {
        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in lw.iter_mut() {
            *x = if m.is_finite() { (*x - m).exp() } else { 1.0 };
            total += *x;
        }
        for x in lw.iter_mut() {
            *x /= total;
        }
        Self(lw)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Symbol pmf implied by independent bit LLRs (the decoder's extrinsic
/// feedback seen by the modulation constraint).
pub fn extrinsic_symbol_pmf(bit_llrs: &[f64], c: &Constellation) -> SymbolPmf {
    assert_eq!(bit_llrs.len(), c.bits_per_symbol(), "one LLR per label bit");
    SymbolPmf::from_log_weights(symbol_log_priors(bit_llrs, c))
}

/// `Σ_j ±L_j/2` per point, the unnormalized log prior from bit LLRs.
fn symbol_log_priors(bit_llrs: &[f64], c: &Constellation) -> Vec<f64> {
    (0..c.size())
        .map(|s| {
            bit_llrs
                .iter()
                .enumerate()
                .map(|(j, &l)| if c.label_bit(s, j) == 0 { 0.5 * l } else { -0.5 * l })
                .sum()
        })
        .collect()
}

/// Product of the extrinsic pmf `beta` with the Gaussian equalizer message
/// `exp(−|s − x̂|²/σ²)`, normalized.
pub fn combine_symbol_belief(
    beta: &SymbolPmf,
    x_vmp: Complex64,
    var: f64,
    c: &Constellation,
) -> Result<SymbolPmf> {
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance(var));
    }
    let lw = beta
        .probs()
        .iter()
        .zip(c.points())
        .map(|(&b, s)| b.ln() - (s - x_vmp).norm_sqr() / var)
        .collect();
    Ok(SymbolPmf::from_log_weights(lw))
}

/// Mean and variance of a pmf over the constellation.
pub fn pmf_moments(p: &SymbolPmf, c: &Constellation) -> (Complex64, f64) {
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for (&w, s) in p.probs().iter().zip(c.points()) {
        mean += s * w;
        second += w * s.norm_sqr();
    }
    (mean, (second - mean.norm_sqr()).max(0.0))
}

/// Extrinsic bit LLRs from per-point log-likelihoods and bit priors.
///
/// For bit `j` the prior of `j` itself is excluded, which is the sum-product
/// rule at the modulation constraint.
pub fn demap_extrinsic(point_loglik: &[f64], priors: &[f64], c: &Constellation) -> Vec<f64> {
    let q = c.bits_per_symbol();
    debug_assert_eq!(point_loglik.len(), c.size());
    debug_assert_eq!(priors.len(), q);
    let log_prior = symbol_log_priors(priors, c);
    (0..q)
        .map(|j| {
            let mut acc = [f64::NEG_INFINITY; 2];
            for s in 0..c.size() {
                let b = c.label_bit(s, j);
                let own = if b == 0 { 0.5 * priors[j] } else { -0.5 * priors[j] };
                let v = point_loglik[s] + log_prior[s] - own;
                acc[b as usize] = crate::fec::max_star(acc[b as usize], v);
            }
            saturate(acc[0] - acc[1])
        })
        .collect()
}

/// Per-antenna, per-resource-element Gaussian summaries of the symbol
/// beliefs. Pilot entries are degenerate (known value, zero variance).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBeliefGrid {
    pub mean: Vec<Vec<Complex64>>,
    pub var: Vec<Vec<f64>>,
}

impl SymbolBeliefGrid {
    /// All-zero means and variances for `tx` antennas over `n_re` elements.
    pub fn zeros(tx: usize, n_re: usize) -> Self {
        Self {
            mean: vec![vec![Complex64::new(0.0, 0.0); n_re]; tx],
            var: vec![vec![0.0; n_re]; tx],
        }
    }

    /// Known symbols everywhere (zero variance).
    pub fn known(symbols: Vec<Vec<Complex64>>) -> Self {
        let var = symbols.iter().map(|v| vec![0.0; v.len()]).collect();
        Self { mean: symbols, var }
    }

    pub fn tx(&self) -> usize {
        self.mean.len()
    }

    pub fn n_re(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    pub fn set(&mut self, m: usize, re: usize, mean: Complex64, var: f64) {
        self.mean[m][re] = mean;
        self.var[m][re] = var.max(0.0);
    }

    /// Second moment `⟨|x|²⟩` at one entry.
    pub fn second_moment(&self, m: usize, re: usize) -> f64 {
        self.mean[m][re].norm_sqr() + self.var[m][re]
    }
}
