//! Monte-Carlo runner, metrics aggregation and CSV output.
//!
//! Every frame draws from its own ChaCha8 stream `(master_seed, frame_index)`,
//! so results do not depend on the worker count. All Eb/N0 points reuse the
//! same frames (bits, pilots, channel and normalized noise), only the noise
//! scale changes.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{draw_channel, transmit, ChannelRealization, Observation};
use crate::config::FrameConfig;
use crate::error::{Error, Result};
use crate::fec::{conv_encode, Bit};
use crate::modem::map_bits;
use crate::receivers::{run_receiver, ReceivedFrame, ReceiverKind, ReceiverRun, ReceiverSetup};

/// Fixed CSV header.
pub const CSV_HEADER: &str = "receiver,eb_n0_db,iteration,ber,ber_stderr,channel_mse,noise_var_est,frames";

/// Early exit thresholds (final-iteration bit errors and frames).
pub const EARLY_EXIT_ERRORS: u64 = 200;
pub const EARLY_EXIT_FRAMES: u64 = 50;
const CHUNK: u64 = 50;

/// `1 / (R · bits_per_symbol · 10^{Eb/N0/10})`.
pub fn eb_n0_to_noise_var(eb_n0_db: f64, code_rate: f64, bits_per_symbol: usize) -> Result<f64> {
    if !(code_rate > 0.0) || bits_per_symbol == 0 || !eb_n0_db.is_finite() {
        return Err(Error::OutOfRange(format!(
            "rate {code_rate}, {bits_per_symbol} bits/symbol, {eb_n0_db} dB"
        )));
    }
    Ok(1.0 / (code_rate * bits_per_symbol as f64 * 10f64.powf(eb_n0_db / 10.0)))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: FrameConfig,
    /// Receivers with their iteration counts.
    pub receivers: Vec<(ReceiverKind, usize)>,
    pub eb_n0_db: Vec<f64>,
    pub frames: u64,
    pub master_seed: u64,
    /// Stop a receiver's cell after enough errors; off for fixed-count runs.
    pub early_exit: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.receivers.is_empty() || self.eb_n0_db.is_empty() {
            return Err(Error::InvalidConfig("scenario needs frames, receivers and Eb/N0 points".into()));
        }
        if self
            .receivers
            .iter()
            .any(|&(k, it)| it == 0 && k != ReceiverKind::LmmseBaseline)
        {
            return Err(Error::InvalidConfig("iteration count must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Transmitted quantities of one frame.
#[derive(Debug, Clone)]
pub struct FrameTruth {
    pub info_bits: Vec<Vec<Bit>>,
    pub pilots: Vec<Vec<Complex64>>,
    pub symbols: Vec<Vec<Complex64>>,
    pub channel: ChannelRealization,
}

pub fn frame_rng(master_seed: u64, frame_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(frame_index);
    rng
}

/// Draws bits, encodes, maps and places the frame, then draws the channel.
/// The returned RNG continues with the noise draws.
pub fn draw_frame(setup: &ReceiverSetup, rng: &mut ChaCha8Rng) -> Result<FrameTruth> {
    let cfg = &setup.cfg;
    let frame_cfg = cfg.with_pilots_from(rng);
    let pilots = frame_cfg.pilots.values;
    let grid = &setup.grid;
    let mut info_bits = Vec::with_capacity(cfg.tx);
    let mut symbols = Vec::with_capacity(cfg.tx);
    for m in 0..cfg.tx {
        let u: Vec<Bit> = (0..cfg.info_len()).map(|_| rng.random_range(0..2u8)).collect();
        let mut coded = setup.interleavers[m].interleave(&conv_encode(&u, &cfg.code))?;
        coded.resize(cfg.coded_capacity(), 0);
        let data = map_bits(&coded, &setup.constellation)?;
        let mut x = vec![Complex64::new(0.0, 0.0); grid.n_re()];
        for (&re, &s) in grid.data_res().iter().zip(&data) {
            x[re] = s;
        }
        for (&re, &p) in grid.pilot_res().iter().zip(&pilots[m]) {
            x[re] = p;
        }
        info_bits.push(u);
        symbols.push(x);
    }
    let channel = draw_channel(&cfg.profile, cfg.tx, cfg.rx, cfg.subcarriers, cfg.spacing_hz, rng);
    Ok(FrameTruth {
        info_bits,
        pilots,
        symbols,
        channel,
    })
}

/// Per-iteration figures of one receiver on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub bit_errors: u64,
    pub bits: u64,
    /// `Σ|ĥ − h|²`.
    pub sq_error: f64,
    /// `Σ|h|²`.
    pub energy: f64,
    pub noise_var: f64,
}

impl IterationMetrics {
    pub fn mse(&self) -> f64 {
        self.sq_error / self.energy
    }
}

pub fn evaluate_run(run: &ReceiverRun, truth: &FrameTruth) -> Vec<IterationMetrics> {
    let energy = truth.channel.energy();
    run.snapshots
        .iter()
        .map(|s| {
            let mut bit_errors = 0;
            let mut bits = 0;
            for (hat, u) in s.decoded.bits.iter().zip(&truth.info_bits) {
                bit_errors += hat.iter().zip(u).filter(|(a, b)| a != b).count() as u64;
                bits += u.len() as u64;
            }
            let sq_error = s
                .channel
                .iter()
                .zip(&truth.channel.response)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()))
                .sum();
            IterationMetrics {
                bit_errors,
                bits,
                sq_error,
                energy,
                noise_var: s.noise_var,
            }
        })
        .collect()
}

/// Simulates frame `frame_index` at one Eb/N0 and runs the listed receivers.
pub fn run_frame(
    setup: &ReceiverSetup,
    receivers: &[(ReceiverKind, usize)],
    eb_n0_db: f64,
    master_seed: u64,
    frame_index: u64,
) -> Result<Vec<Vec<IterationMetrics>>> {
    let wrap = |e: Error| Error::Frame {
        frame: frame_index,
        source: Box::new(e),
    };
    let cfg = &setup.cfg;
    let noise_var = eb_n0_to_noise_var(eb_n0_db, cfg.code.rate(), setup.constellation.bits_per_symbol())
        .map_err(wrap)?;
    let mut rng = frame_rng(master_seed, frame_index);
    let truth = draw_frame(setup, &mut rng).map_err(wrap)?;
    let obs: Observation = transmit(&truth.symbols, &truth.channel, noise_var, &mut rng).map_err(wrap)?;
    let frame = ReceivedFrame {
        obs: &obs,
        pilots: &truth.pilots,
    };
    receivers
        .iter()
        .map(|&(kind, it)| {
            let run = run_receiver(kind, it, setup, frame).map_err(wrap)?;
            Ok(evaluate_run(&run, &truth))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub receiver: String,
    pub eb_n0_db: f64,
    pub iteration: usize,
    pub ber: f64,
    pub ber_stderr: f64,
    pub channel_mse: f64,
    pub noise_var_est: f64,
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn get(&self, receiver: ReceiverKind, eb_n0_db: f64, iteration: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| {
            r.receiver == receiver.name() && r.eb_n0_db == eb_n0_db && r.iteration == iteration
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    bit_errors: u64,
    bits: u64,
    sq_error: f64,
    energy: f64,
    noise_var: f64,
    frames: u64,
}

impl Cell {
    fn add(&mut self, m: &IterationMetrics) {
        self.bit_errors += m.bit_errors;
        self.bits += m.bits;
        self.sq_error += m.sq_error;
        self.energy += m.energy;
        self.noise_var += m.noise_var;
        self.frames += 1;
    }
}

/// BER and its standard error `√(p(1−p)/n)`.
pub fn ber_with_stderr(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (0.0, 0.0);
    }
    let p = errors as f64 / bits as f64;
    (p, (p * (1.0 - p) / bits as f64).sqrt())
}

/// Snapshots a receiver reports: initialization plus one per iteration.
pub fn snapshot_count(kind: ReceiverKind, iterations: usize) -> usize {
    if kind == ReceiverKind::LmmseBaseline {
        1
    } else {
        iterations + 1
    }
}

/// Runs the scenario on the current rayon pool.
pub fn run_monte_carlo(s: &Scenario) -> Result<MetricsTable> {
    s.validate()?;
    let setup = ReceiverSetup::new(&s.cfg)?;
    let mut rows = Vec::new();
    for &eb in &s.eb_n0_db {
        let mut cells: Vec<Vec<Cell>> = s
            .receivers
            .iter()
            .map(|&(k, it)| vec![Cell::default(); snapshot_count(k, it)])
            .collect();
        let mut active: Vec<bool> = vec![true; s.receivers.len()];
        let mut start = 0;
        while start < s.frames && active.iter().any(|&a| a) {
            let end = if s.early_exit { (start + CHUNK).min(s.frames) } else { s.frames };
            let receivers: Vec<(ReceiverKind, usize)> = s
                .receivers
                .iter()
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|(r, _)| *r)
                .collect();
            let per_frame = (start..end)
                .into_par_iter()
                .map(|f| run_frame(&setup, &receivers, eb, s.master_seed, f))
                .collect::<Result<Vec<_>>>()?;
            // Reduction in frame order keeps floating-point sums reproducible.
            for frame in per_frame {
                let mut it = frame.into_iter();
                for (r, cell) in cells.iter_mut().enumerate() {
                    if !active[r] {
                        continue;
                    }
                    let metrics = it.next().expect("one result per active receiver");
                    for (c, m) in cell.iter_mut().zip(&metrics) {
                        c.add(m);
                    }
                }
            }
            if s.early_exit {
                for (r, cell) in cells.iter().enumerate() {
                    let last = cell.last().expect("iteration 0 exists");
                    if last.bit_errors >= EARLY_EXIT_ERRORS && last.frames >= EARLY_EXIT_FRAMES {
                        active[r] = false;
                    }
                }
            }
            start = end;
        }
        for (&(kind, _), cell) in s.receivers.iter().zip(&cells) {
            for (iteration, c) in cell.iter().enumerate() {
                let (ber, ber_stderr) = ber_with_stderr(c.bit_errors, c.bits);
                rows.push(MetricsRow {
                    receiver: kind.name().to_string(),
                    eb_n0_db: eb,
                    iteration,
                    ber,
                    ber_stderr,
                    channel_mse: c.sq_error / c.energy,
                    noise_var_est: c.noise_var / c.frames as f64,
                    frames: c.frames,
                });
            }
        }
    }
    Ok(MetricsTable { rows })
}

/// CSV text of a table; `f64` values use the shortest exact representation.
pub fn format_results(t: &MetricsTable) -> String {
    let mut out = String::with_capacity(64 * (t.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &t.rows {
        writeln!(
            out,
            "{},{:?},{},{:?},{:?},{:?},{:?},{}",
            r.receiver, r.eb_n0_db, r.iteration, r.ber, r.ber_stderr, r.channel_mse, r.noise_var_est, r.frames
        )
        .expect("writing to a String");
    }
    out
}

pub fn emit_results(t: &MetricsTable, path: &Path) -> Result<()> {
    if t.rows.is_empty() {
        return Err(Error::InvalidConfig("empty metrics table".into()));
    }
    std::fs::write(path, format_results(t)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_results(text: &str) -> Result<MetricsTable> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or unexpected header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("'{s}': {e}")));
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse(format!("expected 8 fields: {l}")));
            }
            Ok(MetricsRow {
                receiver: f[0].to_string(),
                eb_n0_db: num(f[1])?,
                iteration: int(f[2])? as usize,
                ber: num(f[3])?,
                ber_stderr: num(f[4])?,
                channel_mse: num(f[5])?,
                noise_var_est: num(f[6])?,
                frames: int(f[7])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsTable { rows })
}

pub fn read_results(path: &Path) -> Result<MetricsTable> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_results(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::build_default_config;
    use crate::modem::{hard_demap, Modulation};

    #[test]
    fn noise_mapping_examples() {
        assert!((eb_n0_to_noise_var(0.0, 1.0 / 3.0, 2).unwrap() - 1.5).abs() < 1e-12);
        assert!((eb_n0_to_noise_var(10.0, 1.0 / 3.0, 4).unwrap() - 0.075).abs() < 1e-12);
        let a = eb_n0_to_noise_var(3.0, 0.5, 2).unwrap();
        let b = eb_n0_to_noise_var(3.0, 0.5, 4).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(eb_n0_to_noise_var(0.0, 0.0, 2).is_err());
    }

    #[test]
    fn genie_on_noiseless_frame_has_no_errors() {
        let mut cfg = build_default_config();
        cfg.modulation = Modulation::Qpsk;
        let setup = ReceiverSetup::new(&cfg).unwrap();
        let mut rng = frame_rng(1, 0);
        let truth = draw_frame(&setup, &mut rng).unwrap();
        let obs = transmit(&truth.symbols, &truth.channel, 0.0, &mut rng).unwrap();
        // Genie: true channel and the other stream known, so each symbol is
        // recovered exactly from the first receive antenna.
        for m in 0..cfg.tx {
            let data: Vec<Complex64> = setup
                .grid
                .data_res()
                .iter()
                .map(|&re| {
                    let k = re % cfg.subcarriers;
                    let other: Complex64 = (0..cfg.tx)
                        .filter(|&o| o != m)
                        .map(|o| truth.channel.h(0, o, k) * truth.symbols[o][re])
                        .sum();
                    (obs.at(0, re) - other) / truth.channel.h(0, m, k)
                })
                .collect();
            let bits = hard_demap(&data, &setup.constellation);
            let coded = setup.interleavers[m].deinterleave(&bits[..cfg.coded_len()]).unwrap();
            assert_eq!(coded, conv_encode(&truth.info_bits[m], &cfg.code));
            let llrs: Vec<f64> = coded.iter().map(|&b| if b == 0 { 10.0 } else { -10.0 }).collect();
            let out = crate::fec::bcjr_decode(&llrs, &cfg.code).unwrap();
            assert_eq!(out.app_info.hard_decisions(), truth.info_bits[m]);
        }
    }

    #[test]
    fn csv_roundtrip_and_header() {
        let t = MetricsTable {
            rows: vec![MetricsRow {
                receiver: "psc-dd".into(),
                eb_n0_db: 2.0,
                iteration: 3,
                ber: 0.1 + 0.2,
                ber_stderr: 1e-17,
                channel_mse: std::f64::consts::PI,
                noise_var_est: 1.0 / 3.0,
                frames: 7,
            }],
        };
        let s = format_results(&t);
        assert_eq!(s.lines().count(), 2);
        assert!(s.starts_with(CSV_HEADER));
        assert_eq!(parse_results(&s).unwrap(), t);
        assert!(parse_results("bad\n").is_err());
    }

    #[test]
    fn stderr_formula() {
        let (p, se) = ber_with_stderr(25, 100);
        assert_eq!(p, 0.25);
        assert!((se - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert_eq!(ber_with_stderr(0, 0), (0.0, 0.0));
    }
}
