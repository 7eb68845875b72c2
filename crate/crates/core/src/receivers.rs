//! Receiver schedules built from the VMP core, the modem and the decoder.
//!
//! Each receiver owns one [`ReceiverState`] per frame and records a
//! snapshot after initialization (iteration 0) and after every iteration,
//! so BER, channel MSE and noise estimates can be reported per iteration.
//! The sequence of belief updates is written to an update log which tests
//! compare against the expected schedule.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::{prior_covariance, Observation};
use crate::config::{FrameConfig, ResourceGrid};
use crate::error::{Error, Result};
use crate::fec::{bcjr_decode, Bit, BitLlrs, BcjrOutput, Interleaver, LLR_SATURATION};
use crate::modem::{
    combine_symbol_belief, demap_extrinsic, extrinsic_symbol_pmf, pmf_moments, Constellation,
    SymbolBeliefGrid, SymbolPmf,
};
use crate::numerics::{hpd_inverse, ComplexMatrix, HermitianPsd};
use crate::vmp::{
    disjoint_channel_update, joint_channel_update, noise_precision_update,
    noise_precision_update_pilot_only, replace_antenna, vmp_symbol_update, ChannelBelief,
    ChannelModel, ChannelPrior, NoisePrecisionBelief, NoisePrior, SymbolMessage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverKind {
    PscDd,
    DjcDd,
    DscDd,
    IDjcDd,
    IDscDd,
    IDjcDdEm,
    LmmseBaseline,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 7] = [
        ReceiverKind::PscDd,
        ReceiverKind::DjcDd,
        ReceiverKind::DscDd,
        ReceiverKind::IDjcDd,
        ReceiverKind::IDscDd,
        ReceiverKind::IDjcDdEm,
        ReceiverKind::LmmseBaseline,
    ];

    pub fn default_iterations(self) -> usize {
        match self {
            ReceiverKind::PscDd => 10,
            ReceiverKind::DjcDd | ReceiverKind::DscDd => 3,
            ReceiverKind::IDjcDd | ReceiverKind::IDscDd | ReceiverKind::IDjcDdEm => 5,
            ReceiverKind::LmmseBaseline => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::PscDd => "psc-dd",
            ReceiverKind::DjcDd => "djc-dd",
            ReceiverKind::DscDd => "dsc-dd",
            ReceiverKind::IDjcDd => "i-djc-dd",
            ReceiverKind::IDscDd => "i-dsc-dd",
            ReceiverKind::IDjcDdEm => "i-djc-dd-em",
            ReceiverKind::LmmseBaseline => "lmmse",
        }
    }

    /// Channel model used in the iterations (`None` for the baseline).
    pub fn channel_model(self) -> Option<ChannelModel> {
        match self {
            ReceiverKind::PscDd | ReceiverKind::DscDd | ReceiverKind::IDscDd => {
                Some(ChannelModel::Disjoint)
            }
            ReceiverKind::DjcDd | ReceiverKind::IDjcDd | ReceiverKind::IDjcDdEm => {
                Some(ChannelModel::Joint)
            }
            ReceiverKind::LmmseBaseline => None,
        }
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let norm = norm.replace("(em)", "-em");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .or(match norm.as_str() {
                "lmmse-baseline" => Some(ReceiverKind::LmmseBaseline),
                _ => None,
            })
            .ok_or_else(|| Error::Parse(format!("unknown receiver '{s}'")))
    }
}

/// One belief update, in the order it was performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateEvent {
    ChannelInitZero,
    ChannelInitLmmse,
    NoiseInitPilots,
    NoiseInitFull,
    Mld,
    SoftModulate,
    ChannelJoint,
    ChannelDisjoint(usize),
    EmRestrict,
    SymbolVmp(usize),
    Demap(usize),
    Bcjr(usize),
    Combine(usize),
    NoiseFull,
    NoisePilots,
    /// Decoding done only to report BER, not fed back.
    DiagnosticDecode,
    IterationDone(usize),
}

/// Frame-independent receiver inputs.
#[derive(Debug, Clone)]
pub struct ReceiverSetup {
    pub cfg: FrameConfig,
    pub grid: ResourceGrid,
    pub constellation: Constellation,
    pub interleavers: Vec<Interleaver>,
    pub prior: ChannelPrior,
}

impl ReceiverSetup {
    pub fn new(cfg: &FrameConfig) -> Result<Self> {
        let prior = ChannelPrior::new(prior_covariance(&cfg.profile, cfg.subcarriers, cfg.spacing_hz))?;
        Ok(Self {
            grid: cfg.grid(),
            constellation: cfg.constellation(),
            interleavers: (0..cfg.tx).map(|m| cfg.interleaver(m)).collect(),
            prior,
            cfg: cfg.clone(),
        })
    }

    fn bits_per_symbol(&self) -> usize {
        self.constellation.bits_per_symbol()
    }
}

/// Received frame together with the pilot values it carried.
#[derive(Debug, Clone, Copy)]
pub struct ReceivedFrame<'a> {
    pub obs: &'a Observation,
    /// `pilots[m][i]` for the `i`-th pilot position of antenna `m`.
    pub pilots: &'a [Vec<Complex64>],
}

/// Complete set of beliefs of one frame.
#[derive(Debug, Clone)]
pub struct ReceiverState {
    pub channel: ChannelBelief,
    pub noise: NoisePrecisionBelief,
    pub symbols: SymbolBeliefGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    /// Hard information bits per transmit antenna.
    pub bits: Vec<Vec<Bit>>,
    /// A-posteriori information-bit LLRs per transmit antenna.
    pub app_info: Vec<BitLlrs>,
}

impl DecodedFrame {
    fn from_outputs(outs: &[BcjrOutput]) -> Self {
        Self {
            bits: outs.iter().map(|o| o.app_info.hard_decisions()).collect(),
            app_info: outs.iter().map(|o| o.app_info.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationSnapshot {
    pub iteration: usize,
    /// Channel means per link, `channel[n·M + m][k]`.
    pub channel: Vec<Vec<Complex64>>,
    /// `1/λ̂` (the true variance for the known-noise baseline).
    pub noise_var: f64,
    pub decoded: DecodedFrame,
}

#[derive(Debug, Clone)]
pub struct ReceiverRun {
    pub kind: ReceiverKind,
    /// Iteration 0 is the initialization.
    pub snapshots: Vec<IterationSnapshot>,
    pub log: Vec<UpdateEvent>,
    pub state: ReceiverState,
}

impl ReceiverRun {
    pub fn decoded(&self) -> &DecodedFrame {
        &self.snapshots.last().expect("at least one snapshot").decoded
    }
}

/// Runs receiver `kind` for `iterations` iterations.
pub fn run_receiver(
    kind: ReceiverKind,
    iterations: usize,
    setup: &ReceiverSetup,
    frame: ReceivedFrame<'_>,
) -> Result<ReceiverRun> {
    if iterations == 0 && kind != ReceiverKind::LmmseBaseline {
        return Err(Error::InvalidConfig("iteration count must be ≥ 1".into()));
    }
    match kind {
        ReceiverKind::PscDd => run_psc_dd(setup, frame, iterations),
        ReceiverKind::DjcDd => run_dc_dd(setup, frame, iterations, ChannelModel::Joint),
        ReceiverKind::DscDd => run_dc_dd(setup, frame, iterations, ChannelModel::Disjoint),
        ReceiverKind::IDjcDd => run_i_dc_dd(setup, frame, iterations, ChannelModel::Joint, false),
        ReceiverKind::IDscDd => run_i_dc_dd(setup, frame, iterations, ChannelModel::Disjoint, false),
        ReceiverKind::IDjcDdEm => run_i_dc_dd(setup, frame, iterations, ChannelModel::Joint, true),
        ReceiverKind::LmmseBaseline => run_lmmse_baseline(setup, frame),
    }
}

/// Pilots at their positions, zero mean and variance at data elements.
pub fn pilot_symbol_grid(setup: &ReceiverSetup, pilots: &[Vec<Complex64>]) -> Result<SymbolBeliefGrid> {
    let pres = setup.grid.pilot_res();
    if pilots.len() != setup.cfg.tx || pilots.iter().any(|p| p.len() != pres.len()) {
        return Err(Error::DimensionMismatch("pilot values do not match the pattern".into()));
    }
    let mut g = SymbolBeliefGrid::zeros(setup.cfg.tx, setup.grid.n_re());
    for (m, vals) in pilots.iter().enumerate() {
        for (&re, &p) in pres.iter().zip(vals) {
            g.set(m, re, p, 0.0);
        }
    }
    Ok(g)
}

/// Pilot-based joint LMMSE estimate with known noise variance,
/// `ĥ_n = Σ X_pᴴ (X_p Σ X_pᴴ + σ²I)^{-1} y_{p,n}` per receive antenna.
///
/// `prior_cov` is the `K × K` covariance of one link; links are independent.
/// Returns per-link means `out[n·M + m][k]`.
pub fn lmmse_channel_estimate(
    obs: &Observation,
    pilot_res: &[usize],
    pilots: &[Vec<Complex64>],
    prior_cov: &ComplexMatrix,
    noise_var: f64,
) -> Result<Vec<Vec<Complex64>>> {
    if !(noise_var > 0.0) {
        return Err(Error::DegenerateVariance(noise_var));
    }
    let kk = prior_cov.nrows();
    let np = pilot_res.len();
    let tx = pilots.len();
    if kk == 0 || pilots.iter().any(|p| p.len() != np) || obs.n_re % kk != 0 {
        return Err(Error::DimensionMismatch("pilots, grid and prior disagree".into()));
    }
    let ks: Vec<usize> = pilot_res.iter().map(|&re| re % kk).collect();
    let gram = ComplexMatrix::from_fn(np, np, |i, i2| {
        let s: Complex64 = (0..tx)
            .map(|m| pilots[m][i] * prior_cov[(ks[i], ks[i2])] * pilots[m][i2].conj())
            .sum();
        if i == i2 {
            s + noise_var
        } else {
            s
        }
    });
    let inv = hpd_inverse(&HermitianPsd::new(gram)?)?;
    let mut out = Vec::with_capacity(tx * obs.rx);
    for n in 0..obs.rx {
        let yp = nalgebra::DVector::from_iterator(np, pilot_res.iter().map(|&re| obs.at(n, re)));
        let u = inv.matrix() * yp;
        for m in 0..tx {
            out.push(
                (0..kk)
                    .map(|k| {
                        (0..np)
                            .map(|i| prior_cov[(k, ks[i])] * pilots[m][i].conj() * u[i])
                            .sum()
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Exact MIMO detection at one resource element.
///
/// `h[n·M + m]` is the channel of link `(n, m)`. Returns the bit LLRs and the
/// marginal symbol pmf of every transmit antenna, both from exact sums over
/// the `|S|^M` joint hypotheses.
pub fn mld_re(
    y: &[Complex64],
    h: &[Complex64],
    tx: usize,
    lambda: f64,
    c: &Constellation,
) -> (Vec<Vec<f64>>, Vec<SymbolPmf>) {
    let rx = y.len();
    let s = c.size();
    let q = c.bits_per_symbol();
    let hyps = s.pow(tx as u32);
    let mut ll = Vec::with_capacity(hyps);
    let mut idx = vec![0usize; tx];
    for hyp in 0..hyps {
        let mut r = hyp;
        for slot in idx.iter_mut() {
            *slot = r % s;
            r /= s;
        }
        let mut d = 0.0;
        for n in 0..rx {
            let mut e = y[n];
            for m in 0..tx {
                e -= h[n * tx + m] * c.points()[idx[m]];
            }
            d += e.norm_sqr();
        }
        ll.push(-lambda * d);
    }
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut marg = vec![vec![0.0; s]; tx];
    for (hyp, &l) in ll.iter().enumerate() {
        let w = (l - max).exp();
        let mut r = hyp;
        for row in marg.iter_mut() {
            row[r % s] += w;
            r /= s;
        }
    }
    let llrs = marg
        .iter()
        .map(|p| {
            (0..q)
                .map(|j| {
                    let mut acc = [0.0; 2];
                    for (sym, &w) in p.iter().enumerate() {
                        acc[c.label_bit(sym, j) as usize] += w;
                    }
                    crate::fec::saturate(acc[0].ln() - acc[1].ln())
                })
                .collect()
        })
        .collect();
    let pmfs = marg
        .into_iter()
        .map(|w| SymbolPmf::from_weights(w).expect("the maximum hypothesis has weight 1"))
        .collect();
    (llrs, pmfs)
}

/// Output of [`mld_detect`] over the data elements of a frame.
#[derive(Debug, Clone)]
pub struct MldOutput {
    /// Bit LLRs per antenna, data elements in ascending order.
    pub llrs: Vec<Vec<f64>>,
    /// Marginal symbol pmfs per antenna and data element.
    pub marginals: Vec<Vec<SymbolPmf>>,
}

/// MLD at every listed element using the channel means.
pub fn mld_detect(
    obs: &Observation,
    ch: &ChannelBelief,
    lambda: f64,
    c: &Constellation,
    data_res: &[usize],
) -> MldOutput {
    let tx = ch.tx;
    let kk = ch.subcarriers;
    let mut llrs = vec![Vec::with_capacity(data_res.len() * c.bits_per_symbol()); tx];
    let mut marginals = vec![Vec::with_capacity(data_res.len()); tx];
    let mut y = vec![Complex64::new(0.0, 0.0); obs.rx];
    let mut h = vec![Complex64::new(0.0, 0.0); obs.rx * tx];
    for &re in data_res {
        let k = re % kk;
        for n in 0..obs.rx {
            y[n] = obs.at(n, re);
            for m in 0..tx {
                h[n * tx + m] = ch.mean(n, m, k);
            }
        }
        let (l, p) = mld_re(&y, &h, tx, lambda, c);
        for (m, (lm, pm)) in l.into_iter().zip(p).enumerate() {
            llrs[m].extend(lm);
            marginals[m].push(pm);
        }
    }
    MldOutput { llrs, marginals }
}

/// Mean and variance of the symbol implied by independent bit LLRs.
pub fn soft_modulate(llrs: &[f64], c: &Constellation) -> (Complex64, f64) {
    pmf_moments(&extrinsic_symbol_pmf(llrs, c), c)
}

/// Drops the filler bits, deinterleaves and decodes antenna `m`.
fn decode_antenna(setup: &ReceiverSetup, m: usize, channel_llrs: &[f64]) -> Result<BcjrOutput> {
    let coded = setup.cfg.coded_len();
    let llrs = setup.interleavers[m].deinterleave(&channel_llrs[..coded])?;
    bcjr_decode(&llrs, &setup.cfg.code)
}

/// Coded-order LLRs back to channel order, filler bits known to be zero.
fn to_channel_order(setup: &ReceiverSetup, m: usize, coded_llrs: &[f64]) -> Result<Vec<f64>> {
    let mut v = setup.interleavers[m].interleave(coded_llrs)?;
    v.resize(v.len() + setup.cfg.pad_len(), LLR_SATURATION);
    Ok(v)
}

fn point_logliks(msg: SymbolMessage, c: &Constellation) -> Vec<f64> {
    c.points()
        .iter()
        .map(|s| -(s - msg.mean).norm_sqr() / msg.var)
        .collect()
}

fn snapshot(iteration: usize, st: &ReceiverState, decoded: DecodedFrame) -> IterationSnapshot {
    IterationSnapshot {
        iteration,
        channel: st.channel.link_means(),
        noise_var: st.noise.noise_var(),
        decoded,
    }
}

/// MLD + BCJR on the current channel means, for reporting only.
fn diagnostic_mld_decode(
    setup: &ReceiverSetup,
    obs: &Observation,
    st: &ReceiverState,
) -> Result<DecodedFrame> {
    let mld = mld_detect(obs, &st.channel, st.noise.lambda_hat, &setup.constellation, setup.grid.data_res());
    let outs = mld
        .llrs
        .iter()
        .enumerate()
        .map(|(m, l)| decode_antenna(setup, m, l))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecodedFrame::from_outputs(&outs))
}

fn channel_step(
    setup: &ReceiverSetup,
    obs: &Observation,
    st: &mut ReceiverState,
    model: ChannelModel,
    log: &mut Vec<UpdateEvent>,
) -> Result<()> {
    let lambda = st.noise.lambda_hat;
    match model {
        ChannelModel::Joint => {
            st.channel = joint_channel_update(obs, lambda, &st.symbols, &setup.prior)?;
            log.push(UpdateEvent::ChannelJoint);
        }
        ChannelModel::Disjoint => {
            for m in 0..setup.cfg.tx {
                let blocks = disjoint_channel_update(m, obs, lambda, &st.symbols, &st.channel, &setup.prior)?;
                replace_antenna(&mut st.channel, m, blocks);
                log.push(UpdateEvent::ChannelDisjoint(m));
            }
        }
    }
    Ok(())
}

/// Pilot-aided sequential channel estimation, then MLD and decoding.
pub fn run_psc_dd(setup: &ReceiverSetup, frame: ReceivedFrame<'_>, iterations: usize) -> Result<ReceiverRun> {
    let cfg = &setup.cfg;
    let obs = frame.obs;
    let pres = setup.grid.pilot_res();
    let mut log = Vec::new();
    // Data symbols are pinned at zero: only pilots reach the estimator.
    let symbols = pilot_symbol_grid(setup, frame.pilots)?;
    let channel = ChannelBelief::zeros(ChannelModel::Disjoint, cfg.tx, cfg.rx, cfg.subcarriers);
    log.push(UpdateEvent::ChannelInitZero);
    let noise = noise_precision_update_pilot_only(obs, pres, &symbols, &channel, NoisePrior::default())?;
    log.push(UpdateEvent::NoiseInitPilots);
    let mut st = ReceiverState { channel, noise, symbols };

    let mut snapshots = vec![snapshot(0, &st, diagnostic_mld_decode(setup, obs, &st)?)];
    log.push(UpdateEvent::DiagnosticDecode);
    for it in 1..=iterations {
        channel_step(setup, obs, &mut st, ChannelModel::Disjoint, &mut log)?;
        st.noise = noise_precision_update_pilot_only(obs, pres, &st.symbols, &st.channel, NoisePrior::default())?;
        log.push(UpdateEvent::NoisePilots);
        snapshots.push(snapshot(it, &st, diagnostic_mld_decode(setup, obs, &st)?));
        log.push(UpdateEvent::DiagnosticDecode);
        log.push(UpdateEvent::IterationDone(it));
    }
    Ok(ReceiverRun {
        kind: ReceiverKind::PscDd,
        snapshots,
        log,
        state: st,
    })
}

/// LMMSE channel, then MLD with the true noise variance.
fn lmmse_mld_init(
    setup: &ReceiverSetup,
    frame: ReceivedFrame<'_>,
    model: ChannelModel,
    log: &mut Vec<UpdateEvent>,
) -> Result<(ChannelBelief, SymbolBeliefGrid, MldOutput)> {
    let cfg = &setup.cfg;
    let obs = frame.obs;
    let means = lmmse_channel_estimate(
        obs,
        setup.grid.pilot_res(),
        frame.pilots,
        setup.prior.cov.matrix(),
        obs.noise_var,
    )?;
    let channel = ChannelBelief::point_mass(model, cfg.tx, cfg.rx, &means);
    log.push(UpdateEvent::ChannelInitLmmse);
    let mld = mld_detect(obs, &channel, 1.0 / obs.noise_var, &setup.constellation, setup.grid.data_res());
    log.push(UpdateEvent::Mld);
    let symbols = pilot_symbol_grid(setup, frame.pilots)?;
    Ok((channel, symbols, mld))
}

/// Known-noise LMMSE channel estimate, MLD and one decoding pass.
pub fn run_lmmse_baseline(setup: &ReceiverSetup, frame: ReceivedFrame<'_>) -> Result<ReceiverRun> {
    let mut log = Vec::new();
    let (channel, symbols, mld) = lmmse_mld_init(setup, frame, ChannelModel::Joint, &mut log)?;
    let mut outs = Vec::with_capacity(setup.cfg.tx);
    for (m, l) in mld.llrs.iter().enumerate() {
        outs.push(decode_antenna(setup, m, l)?);
        log.push(UpdateEvent::Bcjr(m));
    }
    let st = ReceiverState {
        channel,
        noise: NoisePrecisionBelief::known(1.0 / frame.obs.noise_var),
        symbols,
    };
    Ok(ReceiverRun {
        kind: ReceiverKind::LmmseBaseline,
        snapshots: vec![snapshot(0, &st, DecodedFrame::from_outputs(&outs))],
        log,
        state: st,
    })
}

/// Data-aided channel estimation with demodulation only; decoding is
/// outside the loop.
pub fn run_dc_dd(
    setup: &ReceiverSetup,
    frame: ReceivedFrame<'_>,
    iterations: usize,
    model: ChannelModel,
) -> Result<ReceiverRun> {
    let c = &setup.constellation;
    let obs = frame.obs;
    let data = setup.grid.data_res();
    let mut log = Vec::new();
    let (channel, mut symbols, mld) = lmmse_mld_init(setup, frame, model, &mut log)?;
    for m in 0..setup.cfg.tx {
        for (&re, p) in data.iter().zip(&mld.marginals[m]) {
            let (mean, var) = pmf_moments(p, c);
            symbols.set(m, re, mean, var);
        }
    }
    let noise = noise_precision_update(obs, &symbols, &channel, NoisePrior::default())?;
    log.push(UpdateEvent::NoiseInitFull);
    let mut st = ReceiverState { channel, noise, symbols };

    let init_outs = mld
        .llrs
        .iter()
        .enumerate()
        .map(|(m, l)| decode_antenna(setup, m, l))
        .collect::<Result<Vec<_>>>()?;
    log.push(UpdateEvent::DiagnosticDecode);
    let mut snapshots = vec![snapshot(0, &st, DecodedFrame::from_outputs(&init_outs))];

    let uniform = SymbolPmf::uniform(c.size());
    let zero_priors = vec![0.0; setup.bits_per_symbol()];
    for it in 1..=iterations {
        channel_step(setup, obs, &mut st, model, &mut log)?;
        let mut messages = Vec::with_capacity(setup.cfg.tx);
        for m in 0..setup.cfg.tx {
            let msgs = vmp_symbol_update(m, obs, st.noise.lambda_hat, &st.channel, &st.symbols, data)?;
            log.push(UpdateEvent::SymbolVmp(m));
            for (&re, msg) in data.iter().zip(&msgs) {
                let b = combine_symbol_belief(&uniform, msg.mean, msg.var, c)?;
                let (mean, var) = pmf_moments(&b, c);
                st.symbols.set(m, re, mean, var);
            }
            log.push(UpdateEvent::Combine(m));
            messages.push(msgs);
        }
        st.noise = noise_precision_update(obs, &st.symbols, &st.channel, NoisePrior::default())?;
        log.push(UpdateEvent::NoiseFull);

        // Messages towards the modulation nodes, then one decoding round.
        let mut outs = Vec::with_capacity(setup.cfg.tx);
        for (m, msgs) in messages.iter().enumerate() {
            let llrs: Vec<f64> = msgs
                .iter()
                .flat_map(|&msg| demap_extrinsic(&point_logliks(msg, c), &zero_priors, c))
                .collect();
            outs.push(decode_antenna(setup, m, &llrs)?);
        }
        log.push(UpdateEvent::DiagnosticDecode);
        snapshots.push(snapshot(it, &st, DecodedFrame::from_outputs(&outs)));
        log.push(UpdateEvent::IterationDone(it));
    }
    Ok(ReceiverRun {
        kind: if model == ChannelModel::Joint {
            ReceiverKind::DjcDd
        } else {
            ReceiverKind::DscDd
        },
        snapshots,
        log,
        state: st,
    })
}

/// Fully iterative receiver with decoding inside the loop. With `em` the
/// channel and noise-precision beliefs are restricted to point estimates.
pub fn run_i_dc_dd(
    setup: &ReceiverSetup,
    frame: ReceivedFrame<'_>,
    iterations: usize,
    model: ChannelModel,
    em: bool,
) -> Result<ReceiverRun> {
    let c = &setup.constellation;
    let q = setup.bits_per_symbol();
    let obs = frame.obs;
    let data = setup.grid.data_res();
    let tx = setup.cfg.tx;
    let mut log = Vec::new();
    let (channel, mut symbols, mld) = lmmse_mld_init(setup, frame, model, &mut log)?;

    // Decoder extrinsics in channel order, the priors of the next demapping.
    let mut extrinsic = Vec::with_capacity(tx);
    let mut outs = Vec::with_capacity(tx);
    for (m, l) in mld.llrs.iter().enumerate() {
        let out = decode_antenna(setup, m, l)?;
        log.push(UpdateEvent::Bcjr(m));
        let app = to_channel_order(setup, m, &out.app_coded)?;
        for (d, &re) in data.iter().enumerate() {
            let (mean, var) = soft_modulate(&app[d * q..(d + 1) * q], c);
            symbols.set(m, re, mean, var);
        }
        extrinsic.push(to_channel_order(setup, m, &out.extrinsic_coded)?);
        outs.push(out);
    }
    log.push(UpdateEvent::SoftModulate);
    let mut noise = noise_precision_update(obs, &symbols, &channel, NoisePrior::default())?;
    log.push(UpdateEvent::NoiseInitFull);
    if em {
        noise = noise.em_restrict();
        log.push(UpdateEvent::EmRestrict);
    }
    let mut st = ReceiverState { channel, noise, symbols };
    let mut snapshots = vec![snapshot(0, &st, DecodedFrame::from_outputs(&outs))];

    for it in 1..=iterations {
        channel_step(setup, obs, &mut st, model, &mut log)?;
        if em {
            st.channel = st.channel.em_restrict();
            log.push(UpdateEvent::EmRestrict);
        }
        let mut outs = Vec::with_capacity(tx);
        for m in 0..tx {
            let msgs = vmp_symbol_update(m, obs, st.noise.lambda_hat, &st.channel, &st.symbols, data)?;
            log.push(UpdateEvent::SymbolVmp(m));
            let llrs: Vec<f64> = msgs
                .iter()
                .enumerate()
                .flat_map(|(d, &msg)| {
                    demap_extrinsic(&point_logliks(msg, c), &extrinsic[m][d * q..(d + 1) * q], c)
                })
                .collect();
            log.push(UpdateEvent::Demap(m));
            let out = decode_antenna(setup, m, &llrs)?;
            log.push(UpdateEvent::Bcjr(m));
            extrinsic[m] = to_channel_order(setup, m, &out.extrinsic_coded)?;
            for (d, (&re, msg)) in data.iter().zip(&msgs).enumerate() {
                let beta = extrinsic_symbol_pmf(&extrinsic[m][d * q..(d + 1) * q], c);
                let b = combine_symbol_belief(&beta, msg.mean, msg.var, c)?;
                let (mean, var) = pmf_moments(&b, c);
                st.symbols.set(m, re, mean, var);
            }
            log.push(UpdateEvent::Combine(m));
            outs.push(out);
        }
        st.noise = noise_precision_update(obs, &st.symbols, &st.channel, NoisePrior::default())?;
        log.push(UpdateEvent::NoiseFull);
        if em {
            st.noise = st.noise.em_restrict();
            log.push(UpdateEvent::EmRestrict);
        }
        snapshots.push(snapshot(it, &st, DecodedFrame::from_outputs(&outs)));
        log.push(UpdateEvent::IterationDone(it));
    }
    let kind = match (model, em) {
        (ChannelModel::Joint, false) => ReceiverKind::IDjcDd,
        (ChannelModel::Joint, true) => ReceiverKind::IDjcDdEm,
        (ChannelModel::Disjoint, _) => ReceiverKind::IDscDd,
    };
    Ok(ReceiverRun {
        kind,
        snapshots,
        log,
        state: st,
    })
}
