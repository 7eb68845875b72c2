//! Closed-form variational messages at the observation factor.
//!
//! The observation factor `f_O ∝ λ^{KLN} exp(−λ‖y − Xh‖²)` is a VMP node, so
//! every message out of it is `exp⟨log f_O⟩` taken over the current beliefs
//! of the other neighbours. Because `X_m` and `H_m` are diagonal per resource
//! element, all messages decouple per element (symbols) or per receive
//! antenna (channel weights), and the implementation works on those small
//! blocks directly.
//!
//! Channel beliefs exploit block fading: a link's response is one value per
//! subcarrier, shared by all OFDM symbols of the frame. A belief over
//! `h_nm(k)` therefore has dimension `K` per link instead of `K·L`, which is
//! exact because the full-length vector is a fixed replication of it.
//!
//! Channel covariances are block-diagonal across receive antennas, since
//! both the prior and the Gram matrix `⟨XᴴX⟩ = I_N ⊗ (…)` are.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::Observation;
use crate::error::{Error, Result};
use crate::modem::SymbolBeliefGrid;
use crate::numerics::{hpd_inverse, hpd_inverse_cholesky, ComplexMatrix, ComplexVector, GaussianDensity, HermitianPsd};

/// Cap on the noise-precision estimate when the residual vanishes.
pub const LAMBDA_MAX: f64 = 1e12;
/// Ridge added to the prior covariance before inverting it.
pub const PRIOR_RIDGE: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Conjugate prior of the noise precision, `p(λ) ∝ λ^{a−1} e^{−λ A_prior}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePrior {
    pub a: f64,
    pub a_prior: f64,
}

impl Default for NoisePrior {
    /// Non-informative prior, `a = 0`, `A_prior = 0`.
    fn default() -> Self {
        Self { a: 0.0, a_prior: 0.0 }
    }
}

/// Gamma (one-dimensional complex Wishart) belief of the noise precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePrecisionBelief {
    /// `K·L·N + a` (or `N^{(p)} + a` for the pilot-restricted factor).
    pub degrees: f64,
    /// `A + A_prior`.
    pub rate: f64,
    /// First moment, clamped to [`LAMBDA_MAX`].
    pub lambda_hat: f64,
    /// True when `lambda_hat` hit the clamp.
    pub clamped: bool,
    /// True after an EM restriction (belief collapsed to `lambda_hat`).
    pub point_mass: bool,
}

impl NoisePrecisionBelief {
    pub fn new(degrees: f64, rate: f64) -> Self {
        let raw = degrees / rate;
        let clamped = !(rate > 0.0) || !(raw < LAMBDA_MAX);
        Self {
            degrees,
            rate,
            lambda_hat: if clamped { LAMBDA_MAX } else { raw },
            clamped,
            point_mass: false,
        }
    }

    /// Point estimate fixed at a known value.
    pub fn known(lambda: f64) -> Self {
        Self {
            degrees: f64::INFINITY,
            rate: f64::INFINITY,
            lambda_hat: lambda.min(LAMBDA_MAX),
            clamped: lambda >= LAMBDA_MAX,
            point_mass: true,
        }
    }

    pub fn noise_var(&self) -> f64 {
        1.0 / self.lambda_hat
    }

    /// Collapses the belief onto `lambda_hat`. Only the first moment of `λ`
    /// enters other messages, so downstream updates are unchanged.
    pub fn em_restrict(&self) -> Self {
        Self {
            point_mass: true,
            ..*self
        }
    }
}

/// Gaussian prior of the channel weights, identical and independent for
/// every link.
#[derive(Debug, Clone)]
pub struct ChannelPrior {
    /// `K × K` covariance of one link.
    pub cov: HermitianPsd,
    /// Inverse of `cov + PRIOR_RIDGE·I`.
    pub precision: HermitianPsd,
}

impl ChannelPrior {
    pub fn new(cov: ComplexMatrix) -> Result<Self> {
        let cov = HermitianPsd::new(cov)?;
        let k = cov.dim();
        let ridged = cov.add(&HermitianPsd::identity(k).scale(PRIOR_RIDGE))?;
        let precision = hpd_inverse(&ridged)?;
        Ok(Self { cov, precision })
    }

    pub fn subcarriers(&self) -> usize {
        self.cov.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    /// One Gaussian over all transmit antennas' weights.
    Joint,
    /// One Gaussian per transmit antenna, mean-field across antennas.
    Disjoint,
}

/// Gaussian belief over the channel weights.
///
/// Joint: `blocks[n]` covers `(m, k)` at index `m·K + k` for receive antenna
/// `n`. Disjoint: `blocks[n·M + m]` covers `k` for link `(n, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBelief {
    pub model: ChannelModel,
    pub tx: usize,
    pub rx: usize,
    pub subcarriers: usize,
    pub blocks: Vec<GaussianDensity>,
}

impl ChannelBelief {
    /// Zero-covariance belief at the given per-link means (`means[n·M + m][k]`).
    pub fn point_mass(model: ChannelModel, tx: usize, rx: usize, means: &[Vec<Complex64>]) -> Self {
        let k = means.first().map_or(0, Vec::len);
        assert_eq!(means.len(), tx * rx);
        let blocks = match model {
            ChannelModel::Joint => (0..rx)
                .map(|n| {
                    let v = ComplexVector::from_iterator(
                        tx * k,
                        (0..tx).flat_map(|m| means[n * tx + m].iter().copied()),
                    );
                    GaussianDensity::point_mass(v)
                })
                .collect(),
            ChannelModel::Disjoint => means
                .iter()
                .map(|v| GaussianDensity::point_mass(ComplexVector::from_vec(v.clone())))
                .collect(),
        };
        Self {
            model,
            tx,
            rx,
            subcarriers: k,
            blocks,
        }
    }

    /// Zero mean, zero covariance.
    pub fn zeros(model: ChannelModel, tx: usize, rx: usize, subcarriers: usize) -> Self {
        Self::point_mass(model, tx, rx, &vec![vec![ZERO; subcarriers]; tx * rx])
    }

    /// `ĥ_nm(k)`.
    #[inline]
    pub fn mean(&self, n: usize, m: usize, k: usize) -> Complex64 {
        match self.model {
            ChannelModel::Joint => self.blocks[n].mean[m * self.subcarriers + k],
            ChannelModel::Disjoint => self.blocks[n * self.tx + m].mean[k],
        }
    }

    /// `E[(h_nm(k) − ĥ)(h_nm'(k') − ĥ)^*]`; zero across antennas in the
    /// disjoint model.
    #[inline]
    pub fn cov(&self, n: usize, m: usize, k: usize, m2: usize, k2: usize) -> Complex64 {
        let kk = self.subcarriers;
        match self.model {
            ChannelModel::Joint => self.blocks[n].cov.matrix()[(m * kk + k, m2 * kk + k2)],
            ChannelModel::Disjoint => {
                if m == m2 {
                    self.blocks[n * self.tx + m].cov.matrix()[(k, k2)]
                } else {
                    ZERO
                }
            }
        }
    }

    /// Per-link means, `out[n·M + m][k]`.
    pub fn link_means(&self) -> Vec<Vec<Complex64>> {
        let mut out = Vec::with_capacity(self.tx * self.rx);
        for n in 0..self.rx {
            for m in 0..self.tx {
                out.push((0..self.subcarriers).map(|k| self.mean(n, m, k)).collect());
            }
        }
        out
    }

    /// Same means, covariances zeroed (EM restriction).
    pub fn em_restrict(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| GaussianDensity::point_mass(b.mean.clone()))
                .collect(),
            ..self.clone()
        }
    }

    /// Converts to the disjoint layout, dropping cross-antenna covariance.
    pub fn to_disjoint(&self) -> Self {
        if self.model == ChannelModel::Disjoint {
            return self.clone();
        }
        let kk = self.subcarriers;
        let mut blocks = Vec::with_capacity(self.tx * self.rx);
        for n in 0..self.rx {
            for m in 0..self.tx {
                let mean = self.blocks[n].mean.rows(m * kk, kk).into_owned();
                let cov = self.blocks[n].cov.matrix().view((m * kk, m * kk), (kk, kk)).into_owned();
                blocks.push(GaussianDensity {
                    mean,
                    cov: HermitianPsd::from_trusted(cov),
                });
            }
        }
        Self {
            model: ChannelModel::Disjoint,
            blocks,
            ..self.clone()
        }
    }

    /// Converts to the joint layout with zero cross-antenna covariance.
    pub fn to_joint(&self) -> Self {
        if self.model == ChannelModel::Joint {
            return self.clone();
        }
        let kk = self.subcarriers;
        let dim = self.tx * kk;
        let blocks = (0..self.rx)
            .map(|n| {
                let mut mean = ComplexVector::zeros(dim);
                let mut cov = ComplexMatrix::zeros(dim, dim);
                for m in 0..self.tx {
                    let b = &self.blocks[n * self.tx + m];
                    mean.rows_mut(m * kk, kk).copy_from(&b.mean);
                    cov.view_mut((m * kk, m * kk), (kk, kk)).copy_from(b.cov.matrix());
                }
                GaussianDensity {
                    mean,
                    cov: HermitianPsd::from_trusted(cov),
                }
            })
            .collect();
        Self {
            model: ChannelModel::Joint,
            blocks,
            ..self.clone()
        }
    }
}

/// Second-order statistics entering the observation-factor messages.
///
/// `C` is the per-element `M × M` block of `⟨HᴴH⟩ − ĤᴴĤ`; it only depends on
/// the subcarrier, so one block per subcarrier is stored. `Σ_x` is diagonal
/// (symbols are independent across elements and antennas), so its square
/// root factor `B` is diagonal as well and stored as such.
#[derive(Debug, Clone)]
pub struct ObservationStats {
    /// `D`: symbol variances `d[m][re]` (zero at pilots).
    pub d: Vec<Vec<f64>>,
    /// `c[k][(m, m')] = Σ_n ⟨h_nm(k)^* h_nm'(k)⟩ − ĥ_nm(k)^* ĥ_nm'(k)`.
    pub c: Vec<DMatrix<Complex64>>,
    /// Diagonal of `B`, `b[m][re] = √d[m][re]`.
    pub b: Vec<Vec<f64>>,
    /// `y − X̂ĥ`, laid out like the observation.
    pub residual: Vec<Complex64>,
}

/// Builds `D`, `C`, `B` and the residual from the current beliefs.
pub fn build_observation_stats(
    obs: &Observation,
    sym: &SymbolBeliefGrid,
    ch: &ChannelBelief,
) -> Result<ObservationStats> {
    check_dims(obs, sym, ch)?;
    let kk = ch.subcarriers;
    let c = (0..kk).map(|k| channel_uncertainty(ch, k)).collect();
    let d = sym.var.clone();
    let b = d
        .iter()
        .map(|v| v.iter().map(|x| x.max(0.0).sqrt()).collect())
        .collect();
    let mut residual = Vec::with_capacity(obs.y.len());
    for n in 0..obs.rx {
        for re in 0..obs.n_re {
            let k = re % kk;
            let pred: Complex64 = (0..ch.tx).map(|m| sym.mean[m][re] * ch.mean(n, m, k)).sum();
            residual.push(obs.at(n, re) - pred);
        }
    }
    Ok(ObservationStats { d, c, b, residual })
}

/// `C` block at subcarrier `k`.
fn channel_uncertainty(ch: &ChannelBelief, k: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(ch.tx, ch.tx, |m, m2| {
        (0..ch.rx).map(|n| ch.cov(n, m2, k, m, k)).sum()
    })
}

fn check_dims(obs: &Observation, sym: &SymbolBeliefGrid, ch: &ChannelBelief) -> Result<()> {
    if sym.tx() != ch.tx
        || obs.rx != ch.rx
        || sym.n_re() != obs.n_re
        || ch.subcarriers == 0
        || obs.n_re % ch.subcarriers != 0
        || obs.y.len() != obs.rx * obs.n_re
    {
        return Err(Error::DimensionMismatch(format!(
            "observation {}x{}, symbols {}x{}, channel {}x{}x{}",
            obs.rx,
            obs.n_re,
            sym.tx(),
            sym.n_re(),
            ch.rx,
            ch.tx,
            ch.subcarriers
        )));
    }
    Ok(())
}

/// `A` restricted to the given resource elements:
/// `‖y − X̂ĥ‖² + tr(Bᴴ C B + Bᴴ ĤᴴĤ B) + tr(X̂ Σ_h X̂ᴴ)`.
pub fn residual_energy(
    obs: &Observation,
    sym: &SymbolBeliefGrid,
    ch: &ChannelBelief,
    stats: &ObservationStats,
    res: &[usize],
) -> f64 {
    let kk = ch.subcarriers;
    let mut a = 0.0;
    for &re in res {
        let k = re % kk;
        for n in 0..obs.rx {
            a += stats.residual[n * obs.n_re + re].norm_sqr();
        }
        // tr(Bᴴ (C + ĤᴴĤ) B) with diagonal B
        for m in 0..ch.tx {
            let b2 = stats.b[m][re] * stats.b[m][re];
            if b2 > 0.0 {
                let hh: f64 = (0..obs.rx).map(|n| ch.mean(n, m, k).norm_sqr()).sum();
                a += b2 * (stats.c[k][(m, m)].re + hh);
            }
        }
        // tr(X̂ Σ_h X̂ᴴ)
        for n in 0..obs.rx {
            for m in 0..ch.tx {
                let xm = sym.mean[m][re];
                if xm == ZERO {
                    continue;
                }
                for m2 in 0..ch.tx {
                    let xm2 = sym.mean[m2][re];
                    if xm2 != ZERO {
                        a += (xm * ch.cov(n, m, k, m2, k) * xm2.conj()).re;
                    }
                }
            }
        }
    }
    a
}

/// Noise-precision belief from all resource elements.
pub fn noise_precision_update(
    obs: &Observation,
    sym: &SymbolBeliefGrid,
    ch: &ChannelBelief,
    prior: NoisePrior,
) -> Result<NoisePrecisionBelief> {
    let stats = build_observation_stats(obs, sym, ch)?;
    let all: Vec<usize> = (0..obs.n_re).collect();
    let a = residual_energy(obs, sym, ch, &stats, &all);
    let degrees = (obs.n_re * obs.rx) as f64 + prior.a;
    Ok(NoisePrecisionBelief::new(degrees, a + prior.a_prior))
}

/// Noise-precision belief from the pilot observations only.
pub fn noise_precision_update_pilot_only(
    obs: &Observation,
    pilot_res: &[usize],
    sym: &SymbolBeliefGrid,
    ch: &ChannelBelief,
    prior: NoisePrior,
) -> Result<NoisePrecisionBelief> {
    if pilot_res.is_empty() {
        return Err(Error::InvalidGrid("pilot set is empty".into()));
    }
    let stats = build_observation_stats(obs, sym, ch)?;
    let a = residual_energy(obs, sym, ch, &stats, pilot_res);
    let degrees = (pilot_res.len() * obs.rx) as f64 + prior.a;
    Ok(NoisePrecisionBelief::new(degrees, a + prior.a_prior))
}

/// Joint Gaussian update of all channel weights:
/// `Σ_h = (λ̂X̂ᴴX̂ + λ̂D + Σ_prior^{-1})^{-1}`, `ĥ = Σ_h λ̂ X̂ᴴ y` (zero prior mean).
pub fn joint_channel_update(
    obs: &Observation,
    lambda: f64,
    sym: &SymbolBeliefGrid,
    prior: &ChannelPrior,
) -> Result<ChannelBelief> {
    let tx = sym.tx();
    let kk = prior.subcarriers();
    check_grid(obs, sym, kk)?;
    let dim = tx * kk;
    let symbols = obs.n_re / kk;

    let mut precision = DMatrix::<Complex64>::zeros(dim, dim);
    for m in 0..tx {
        precision
            .view_mut((m * kk, m * kk), (kk, kk))
            .copy_from(prior.precision.matrix());
    }
    let lam = Complex64::new(lambda, 0.0);
    for k in 0..kk {
        for m in 0..tx {
            for m2 in 0..tx {
                let mut g = ZERO;
                for l in 0..symbols {
                    let re = l * kk + k;
                    g += sym.mean[m][re].conj() * sym.mean[m2][re];
                    if m == m2 {
                        g += sym.var[m][re];
                    }
                }
                precision[(m * kk + k, m2 * kk + k)] += lam * g;
            }
        }
    }
    let cov = hpd_inverse_cholesky(&HermitianPsd::from_trusted(precision))?;

    let blocks = (0..obs.rx)
        .map(|n| {
            let mut rhs = ComplexVector::zeros(dim);
            for m in 0..tx {
                for k in 0..kk {
                    let mut acc = ZERO;
                    for l in 0..symbols {
                        let re = l * kk + k;
                        acc += sym.mean[m][re].conj() * obs.at(n, re);
                    }
                    rhs[m * kk + k] = lam * acc;
                }
            }
            GaussianDensity {
                mean: cov.matrix() * rhs,
                cov: cov.clone(),
            }
        })
        .collect();
    Ok(ChannelBelief {
        model: ChannelModel::Joint,
        tx,
        rx: obs.rx,
        subcarriers: kk,
        blocks,
    })
}

/// Update of antenna `m`'s weights with the other antennas' contributions
/// cancelled using their current means. Returns the `N` per-link densities
/// for `(0..N, m)`.
pub fn disjoint_channel_update(
    m: usize,
    obs: &Observation,
    lambda: f64,
    sym: &SymbolBeliefGrid,
    ch: &ChannelBelief,
    prior: &ChannelPrior,
) -> Result<Vec<GaussianDensity>> {
    let tx = sym.tx();
    let kk = prior.subcarriers();
    check_grid(obs, sym, kk)?;
    if ch.tx != tx || ch.rx != obs.rx || ch.subcarriers != kk || m >= tx {
        return Err(Error::DimensionMismatch("channel belief does not match the system".into()));
    }
    let symbols = obs.n_re / kk;
    let lam = Complex64::new(lambda, 0.0);

    let mut precision = prior.precision.matrix().clone();
    for k in 0..kk {
        let g: f64 = (0..symbols)
            .map(|l| sym.second_moment(m, l * kk + k))
            .sum();
        precision[(k, k)] += lam * g;
    }
    let cov = hpd_inverse_cholesky(&HermitianPsd::from_trusted(precision))?;

    Ok((0..obs.rx)
        .map(|n| {
            let rhs = ComplexVector::from_iterator(
                kk,
                (0..kk).map(|k| {
                    let mut acc = ZERO;
                    for l in 0..symbols {
                        let re = l * kk + k;
                        let xm = sym.mean[m][re];
                        if xm == ZERO {
                            continue;
                        }
                        let interf: Complex64 = (0..tx)
                            .filter(|&m2| m2 != m)
                            .map(|m2| sym.mean[m2][re] * ch.mean(n, m2, k))
                            .sum();
                        acc += xm.conj() * (obs.at(n, re) - interf);
                    }
                    lam * acc
                }),
            );
            GaussianDensity {
                mean: cov.matrix() * rhs,
                cov: cov.clone(),
            }
        })
        .collect())
}

/// Writes the densities returned by [`disjoint_channel_update`] back into a
/// disjoint belief.
pub fn replace_antenna(ch: &mut ChannelBelief, m: usize, blocks: Vec<GaussianDensity>) {
    assert_eq!(ch.model, ChannelModel::Disjoint);
    for (n, b) in blocks.into_iter().enumerate() {
        ch.blocks[n * ch.tx + m] = b;
    }
}

fn check_grid(obs: &Observation, sym: &SymbolBeliefGrid, kk: usize) -> Result<()> {
    if kk == 0 || obs.n_re % kk != 0 || sym.n_re() != obs.n_re || obs.y.len() != obs.rx * obs.n_re {
        return Err(Error::DimensionMismatch(format!(
            "{} elements over {kk} subcarriers",
            obs.n_re
        )));
    }
    Ok(())
}

/// Equalizer message for antenna `m` at one resource element: the mean
/// and variance of `m_{f_O → x_m}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolMessage {
    pub mean: Complex64,
    pub var: f64,
}

/// VMP symbol messages of antenna `m` at the listed resource elements.
///
/// `x̂ = (Ĥ_mᴴĤ_m + C_m)^{-1}(Ĥ_mᴴ(y − Σ_{m'≠m} Ĥ_m' x̂_m') − Σ_{m'≠m} C_mm' x̂_m')`,
/// `σ² = λ̂^{-1}(Ĥ_mᴴĤ_m + C_m)^{-1}`, both scalar per element.
pub fn vmp_symbol_update(
    m: usize,
    obs: &Observation,
    lambda: f64,
    ch: &ChannelBelief,
    sym: &SymbolBeliefGrid,
    res: &[usize],
) -> Result<Vec<SymbolMessage>> {
    check_dims(obs, sym, ch)?;
    let kk = ch.subcarriers;
    let c: Vec<DMatrix<Complex64>> = (0..kk).map(|k| channel_uncertainty(ch, k)).collect();
    res.iter()
        .map(|&re| {
            let k = re % kk;
            let mut gain = c[k][(m, m)].re;
            let mut num = ZERO;
            for n in 0..obs.rx {
                let h = ch.mean(n, m, k);
                gain += h.norm_sqr();
                let mut r = obs.at(n, re);
                for m2 in (0..ch.tx).filter(|&m2| m2 != m) {
                    r -= ch.mean(n, m2, k) * sym.mean[m2][re];
                }
                num += h.conj() * r;
            }
            for m2 in (0..ch.tx).filter(|&m2| m2 != m) {
                num -= c[k][(m, m2)] * sym.mean[m2][re];
            }
            if !(gain > 0.0) {
                return Err(Error::DegenerateChannel(re));
            }
            Ok(SymbolMessage {
                mean: num / gain,
                var: 1.0 / (lambda * gain),
            })
        })
        .collect()
}
