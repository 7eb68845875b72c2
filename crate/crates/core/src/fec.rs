//! Rate-1/3 convolutional code, channel interleaver and log-domain SISO
//! BCJR decoder.
//!
//! Bit LLRs follow the convention `LLR = ln P(b=0) − ln P(b=1)`, so a
//! positive value favours bit 0.

use std::ops::Deref;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Magnitude at which LLRs are clipped.
pub const LLR_SATURATION: f64 = 40.0;

pub type Bit = u8;

/// Feed-forward convolutional code description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvCodeSpec {
    /// Generator polynomials in octal notation, MSB tapping the current input.
    pub generators: [u32; 3],
    pub constraint_length: u32,
    /// Zero-tail termination (memory flushed with `constraint_length − 1` zeros).
    pub zero_tail: bool,
}

impl Default for ConvCodeSpec {
    fn default() -> Self {
        Self {
            generators: [0o133, 0o171, 0o165],
            constraint_length: 7,
            zero_tail: true,
        }
    }
}

impl ConvCodeSpec {
    pub fn memory(&self) -> usize {
        self.constraint_length as usize - 1
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory()
    }

    pub fn outputs_per_step(&self) -> usize {
        self.generators.len()
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.outputs_per_step() as f64
    }

    /// Number of coded bits for `info_len` information bits.
    pub fn coded_len(&self, info_len: usize) -> usize {
        self.outputs_per_step() * (info_len + if self.zero_tail { self.memory() } else { 0 })
    }

    /// Largest information block whose codeword fits in `coded_capacity` bits.
    pub fn info_len_for_capacity(&self, coded_capacity: usize) -> usize {
        let steps = coded_capacity / self.outputs_per_step();
        steps.saturating_sub(if self.zero_tail { self.memory() } else { 0 })
    }

    /// Output bits and next state for `input` entering at `state`.
    ///
    /// The state holds the previous `memory` inputs, most recent in the
    /// highest bit.
    #[inline]
    fn step(&self, state: usize, input: Bit) -> ([Bit; 3], usize) {
        let m = self.memory();
        let reg = ((input as u32) << m) | state as u32;
        let mut out = [0; 3];
        for (o, g) in out.iter_mut().zip(self.generators.iter()) {
            *o = ((reg & g).count_ones() & 1) as Bit;
        }
        (out, (reg >> 1) as usize)
    }
}

/// Per-bit log-likelihood ratios, clipped to `±LLR_SATURATION`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BitLlrs(Vec<f64>);

impl BitLlrs {
    pub fn new(mut v: Vec<f64>) -> Self {
        for x in v.iter_mut() {
            *x = saturate(*x);
        }
        Self(v)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Hard decisions (bit 1 for negative LLR).
    pub fn hard_decisions(&self) -> Vec<Bit> {
        self.0.iter().map(|&l| (l < 0.0) as Bit).collect()
    }
}

impl Deref for BitLlrs {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn saturate(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_SATURATION, LLR_SATURATION)
    }
}

/// Encodes `info` and appends the zero tail.
pub fn conv_encode(info: &[Bit], spec: &ConvCodeSpec) -> Vec<Bit> {
    let tail = if spec.zero_tail { spec.memory() } else { 0 };
    let mut out = Vec::with_capacity(spec.coded_len(info.len()));
    let mut state = 0;
    for &u in info.iter().chain(std::iter::repeat_n(&0, tail)) {
        let (bits, next) = spec.step(state, u & 1);
        out.extend_from_slice(&bits[..spec.outputs_per_step()]);
        state = next;
    }
    out
}

/// Seeded uniform random permutation of coded-bit positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn random(len: usize, seed: u64) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_permutation(perm).expect("shuffle yields a permutation")
    }

    pub fn identity(len: usize) -> Self {
        Self::from_permutation((0..len).collect()).expect("identity is a permutation")
    }

    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        let mut inverse = vec![usize::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            if p >= perm.len() || inverse[p] != usize::MAX {
                return Err(Error::InvalidConfig(format!(
                    "not a permutation: entry {p} at {i}"
                )));
            }
            inverse[p] = i;
        }
        Ok(Self { perm, inverse })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `out[i] = input[π(i)]`.
    pub fn interleave<T: Copy>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.perm.iter().map(|&p| input[p]).collect())
    }

    /// Inverse of [`Interleaver::interleave`].
    pub fn deinterleave<T: Copy>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.inverse.iter().map(|&q| input[q]).collect())
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::LengthMismatch {
                expected: self.perm.len(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Output of [`bcjr_decode`].
#[derive(Debug, Clone)]
pub struct BcjrOutput {
    /// Extrinsic coded-bit LLRs (APP minus the supplied prior).
    pub extrinsic_coded: BitLlrs,
    /// A-posteriori coded-bit LLRs.
    pub app_coded: BitLlrs,
    /// A-posteriori information-bit LLRs.
    pub app_info: BitLlrs,
}

/// Jacobian logarithm, `ln(e^a + e^b)`.
#[inline]
pub fn max_star(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    // Below this gap the correction is under 1e-16 and is dropped.
    if hi - lo > 37.0 {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log-MAP decoding of a zero-tail terminated codeword.
///
/// `coded_priors` holds one LLR per coded bit. Information bits are taken
/// as equiprobable.
pub fn bcjr_decode(coded_priors: &[f64], spec: &ConvCodeSpec) -> Result<BcjrOutput> {
    let n_out = spec.outputs_per_step();
    let tail = if spec.zero_tail { spec.memory() } else { 0 };
    if coded_priors.is_empty() || coded_priors.len() % n_out != 0 || coded_priors.len() / n_out <= tail
    {
        return Err(Error::LengthMismatch {
            expected: spec.coded_len((coded_priors.len() / n_out).saturating_sub(tail).max(1)),
            actual: coded_priors.len(),
        });
    }
    let steps = coded_priors.len() / n_out;
    let info_len = steps - tail;
    let ns = spec.num_states();

    // Trellis branches: (next_state, output bits) for every (state, input).
    let branches: Vec<[([Bit; 3], usize); 2]> = (0..ns)
        .map(|s| [spec.step(s, 0), spec.step(s, 1)])
        .collect();

    // Branch metrics per step for every output pattern.
    let gam: Vec<f64> = (0..steps)
        .flat_map(|t| {
            (0..8usize).map(move |pat| {
                (0..n_out)
                    .map(|j| {
                        let l = coded_priors[t * n_out + j];
                        if (pat >> (2 - j)) & 1 == 0 { 0.5 * l } else { -0.5 * l }
                    })
                    .sum::<f64>()
            })
        })
        .collect();
    let gamma = |t: usize, out: &[Bit; 3]| -> f64 {
        gam[t * 8 + (((out[0] as usize) << 2) | ((out[1] as usize) << 1) | out[2] as usize)]
    };
    let inputs = |t: usize| -> usize { if t < info_len { 2 } else { 1 } };

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; (steps + 1) * ns];
    alpha[0] = 0.0;
    for t in 0..steps {
        let (cur, next) = alpha.split_at_mut((t + 1) * ns);
        let cur = &cur[t * ns..];
        let next = &mut next[..ns];
        for s in 0..ns {
            let a = cur[s];
            if a == neg {
                continue;
            }
            for (out, ns_) in branches[s].iter().take(inputs(t)) {
                next[*ns_] = max_star(next[*ns_], a + gamma(t, out));
            }
        }
        normalize(next);
    }

    let mut beta = vec![neg; (steps + 1) * ns];
    if spec.zero_tail {
        beta[steps * ns] = 0.0;
    } else {
        beta[steps * ns..].fill(0.0);
    }
    for t in (0..steps).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * ns);
        let cur = &mut cur[t * ns..];
        for s in 0..ns {
            let mut acc = neg;
            for (out, ns_) in branches[s].iter().take(inputs(t)) {
                let b = next[*ns_];
                if b != neg {
                    acc = max_star(acc, b + gamma(t, out));
                }
            }
            cur[s] = acc;
        }
        normalize(cur);
    }

    let mut app_info = Vec::with_capacity(info_len);
    let mut app_coded = vec![0.0; steps * n_out];
    for t in 0..steps {
        let mut info_acc = [neg; 2];
        let mut coded_acc = [[neg; 2]; 3];
        for s in 0..ns {
            let a = alpha[t * ns + s];
            if a == neg {
                continue;
            }
            for (u, (out, ns_)) in branches[s].iter().take(inputs(t)).enumerate() {
                let b = beta[(t + 1) * ns + ns_];
                if b == neg {
                    continue;
                }
                let metric = a + gamma(t, out) + b;
                info_acc[u] = max_star(info_acc[u], metric);
                for j in 0..n_out {
                    let c = out[j] as usize;
                    coded_acc[j][c] = max_star(coded_acc[j][c], metric);
                }
            }
        }
        if t < info_len {
            app_info.push(info_acc[0] - info_acc[1]);
        }
        for j in 0..n_out {
            app_coded[t * n_out + j] = llr_from_logs(coded_acc[j][0], coded_acc[j][1]);
        }
    }

    let extrinsic = app_coded
        .iter()
        .zip(coded_priors)
        .map(|(a, p)| a - p)
        .collect();
    Ok(BcjrOutput {
        extrinsic_coded: BitLlrs::new(extrinsic),
        app_coded: BitLlrs::new(app_coded),
        app_info: BitLlrs::new(app_info.into_iter().map(|x| if x.is_nan() { 0.0 } else { x }).collect()),
    })
}

fn llr_from_logs(l0: f64, l1: f64) -> f64 {
    match (l0 == f64::NEG_INFINITY, l1 == f64::NEG_INFINITY) {
        (true, true) => 0.0,
        (true, false) => -f64::INFINITY,
        (false, true) => f64::INFINITY,
        _ => l0 - l1,
    }
}

fn normalize(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        for x in v.iter_mut() {
            *x -= m;
        }
    }
}
