//! Frame configuration, resource-grid indexing and pilot layout.
//!
//! Resource elements are flattened subcarrier-fastest, `re = l·K + k`
//! (0-based), matching the stacking `x_m = [x(1,1) … x(K,1) … x(K,L)]ᵀ`.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{etu_profile, PowerDelayProfile};
use crate::error::{Error, Result};
use crate::fec::{ConvCodeSpec, Interleaver};
use crate::modem::{Constellation, Modulation};

/// Pilot subcarrier spacing.
pub const PILOT_SPACING: usize = 12;
/// 0-based OFDM symbols carrying pilots (first and fifth).
pub const PILOT_SYMBOLS: [usize; 2] = [0, 4];
/// 0-based subcarrier offset of the pilots in each pilot symbol. The second
/// symbol is staggered by half the spacing.
pub const PILOT_OFFSETS: [usize; 2] = [0, 6];

/// 1-based `(k, l)` → 0-based flat index `(l−1)·K + (k−1)`.
pub fn flat_index(k: usize, l: usize, subcarriers: usize, symbols: usize) -> Result<usize> {
    if k == 0 || k > subcarriers || l == 0 || l > symbols {
        return Err(Error::OutOfRange(format!(
            "(k={k}, l={l}) outside {subcarriers}x{symbols} grid"
        )));
    }
    Ok((l - 1) * subcarriers + (k - 1))
}

/// Pilot positions shared by all transmit antennas, and per-antenna values.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    /// 0-based `(subcarrier, symbol)` pairs in increasing flat-index order.
    pub positions: Vec<(usize, usize)>,
    /// `values[m][i]` is the pilot sent by antenna `m` at `positions[i]`.
    pub values: Vec<Vec<Complex64>>,
}

impl PilotPattern {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Staggered pilot positions for a `K × L` grid.
pub fn pilot_positions(subcarriers: usize, symbols: usize) -> Result<Vec<(usize, usize)>> {
    if subcarriers < 13 || symbols < 5 {
        return Err(Error::InvalidGrid(format!(
            "{subcarriers}x{symbols} grid too small for pilots in symbols 1 and 5"
        )));
    }
    let mut pos = Vec::new();
    for (&l, &off) in PILOT_SYMBOLS.iter().zip(PILOT_OFFSETS.iter()) {
        pos.extend((off..subcarriers).step_by(PILOT_SPACING).map(|k| (k, l)));
    }
    Ok(pos)
}

/// Pilot pattern with i.i.d. uniform QPSK values per antenna.
pub fn build_pilot_pattern<R: Rng + ?Sized>(
    subcarriers: usize,
    symbols: usize,
    tx: usize,
    rng: &mut R,
) -> Result<PilotPattern> {
    let positions = pilot_positions(subcarriers, symbols)?;
    let qpsk = Constellation::new(Modulation::Qpsk);
    let values = (0..tx)
        .map(|_| {
            (0..positions.len())
                .map(|_| qpsk.points()[rng.random_range(0..qpsk.size())])
                .collect()
        })
        .collect();
    Ok(PilotPattern { positions, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReKind {
    Pilot(usize),
    Data(usize),
}

/// Pilot/data classification of every resource element.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub subcarriers: usize,
    pub symbols: usize,
    kinds: Vec<ReKind>,
    pilot_res: Vec<usize>,
    data_res: Vec<usize>,
}

impl ResourceGrid {
    pub fn new(subcarriers: usize, symbols: usize, pilots: &[(usize, usize)]) -> Result<Self> {
        let n = subcarriers * symbols;
        let mut is_pilot = vec![false; n];
        let mut pilot_res = Vec::with_capacity(pilots.len());
        for &(k, l) in pilots {
            if k >= subcarriers || l >= symbols {
                return Err(Error::InvalidGrid(format!("pilot ({k},{l}) outside grid")));
            }
            let re = l * subcarriers + k;
            if is_pilot[re] {
                return Err(Error::InvalidGrid(format!("duplicate pilot ({k},{l})")));
            }
            is_pilot[re] = true;
            pilot_res.push(re);
        }
        let mut kinds = vec![ReKind::Data(0); n];
        for (i, &re) in pilot_res.iter().enumerate() {
            kinds[re] = ReKind::Pilot(i);
        }
        let mut data_res = Vec::with_capacity(n - pilot_res.len());
        for re in 0..n {
            if !is_pilot[re] {
                kinds[re] = ReKind::Data(data_res.len());
                data_res.push(re);
            }
        }
        Ok(Self {
            subcarriers,
            symbols,
            kinds,
            pilot_res,
            data_res,
        })
    }

    #[inline]
    pub fn index(&self, k: usize, l: usize) -> usize {
        l * self.subcarriers + k
    }

    #[inline]
    pub fn subcarrier_of(&self, re: usize) -> usize {
        re % self.subcarriers
    }

    pub fn n_re(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, re: usize) -> ReKind {
        self.kinds[re]
    }

    /// Flat indices of pilots, in pattern order.
    pub fn pilot_res(&self) -> &[usize] {
        &self.pilot_res
    }

    /// Flat indices of data elements, ascending.
    pub fn data_res(&self) -> &[usize] {
        &self.data_res
    }
}

/// System dimensions and transmission parameters of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig {
    pub tx: usize,
    pub rx: usize,
    pub subcarriers: usize,
    pub symbols: usize,
    pub spacing_hz: f64,
    pub modulation: Modulation,
    pub code: ConvCodeSpec,
    pub pilots: PilotPattern,
    pub eb_n0_db: f64,
    pub profile: PowerDelayProfile,
    /// Seed of the per-antenna interleavers (antenna `m` uses `seed + m`).
    pub interleaver_seed: u64,
}

/// Default seed of the pilot values stored in a config. Simulations
/// redraw pilot values per frame.
pub const DEFAULT_PILOT_SEED: u64 = 0x5eed;

/// 2×2, 75 subcarriers × 7 symbols, 15 kHz, rate-1/3 code, 13 pilots, ETU.
pub fn build_default_config() -> FrameConfig {
    FrameConfig::new(2, 2, 75, 7, 15e3, Modulation::Qam16, etu_profile(), 0.0)
        .expect("default configuration is valid")
}

impl FrameConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        tx: usize,
        rx: usize,
        subcarriers: usize,
        symbols: usize,
        spacing_hz: f64,
        modulation: Modulation,
        profile: PowerDelayProfile,
        eb_n0_db: f64,
    ) -> Result<Self> {
        if tx == 0 || rx == 0 || subcarriers == 0 || symbols == 0 {
            return Err(Error::InvalidConfig("antenna and grid sizes must be ≥ 1".into()));
        }
        if !(spacing_hz > 0.0) {
            return Err(Error::InvalidConfig(format!("subcarrier spacing {spacing_hz}")));
        }
        let pilots = build_pilot_pattern(
            subcarriers,
            symbols,
            tx,
            &mut ChaCha8Rng::seed_from_u64(DEFAULT_PILOT_SEED),
        )?;
        let cfg = Self {
            tx,
            rx,
            subcarriers,
            symbols,
            spacing_hz,
            modulation,
            code: ConvCodeSpec::default(),
            pilots,
            eb_n0_db,
            profile,
            interleaver_seed: 0x1f7e_41ea,
        };
        if cfg.info_len() == 0 {
            return Err(Error::InvalidGrid("no room for a codeword in the data elements".into()));
        }
        Ok(cfg)
    }

    pub fn n_re(&self) -> usize {
        self.subcarriers * self.symbols
    }

    pub fn grid(&self) -> ResourceGrid {
        ResourceGrid::new(self.subcarriers, self.symbols, &self.pilots.positions)
            .expect("pilot pattern fits the grid")
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::new(self.modulation)
    }

    pub fn data_res(&self) -> usize {
        self.n_re() - self.pilots.len()
    }

    /// Coded bits carried by one antenna's data elements.
    pub fn coded_capacity(&self) -> usize {
        self.data_res() * self.constellation().bits_per_symbol()
    }

    /// Information bits per codeword (one codeword per antenna per frame).
    pub fn info_len(&self) -> usize {
        self.code.info_len_for_capacity(self.coded_capacity())
    }

    pub fn coded_len(&self) -> usize {
        self.code.coded_len(self.info_len())
    }

    /// Filler bits appended after the codeword to fill the last symbols.
    pub fn pad_len(&self) -> usize {
        self.coded_capacity() - self.coded_len()
    }

    pub fn interleaver(&self, m: usize) -> Interleaver {
        Interleaver::random(self.coded_len(), self.interleaver_seed.wrapping_add(m as u64))
    }

    /// Same configuration with fresh pilot values drawn from `rng`.
    pub fn with_pilots_from<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut c = self.clone();
        c.pilots = build_pilot_pattern(self.subcarriers, self.symbols, self.tx, rng)
            .expect("grid already validated");
        c
    }

    /// Parses a TOML configuration; absent keys take their default values.
    pub fn from_toml_str(s: &str) -> Result<(Self, Option<ScenarioSection>)> {
        let file: ConfigFile =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        file.into_config()
    }

    pub fn load(path: &Path) -> Result<(Self, Option<ScenarioSection>)> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CustomProfile {
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
}

/// Experiment keys accepted in the `[scenario]` table of a config file.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub receivers: Option<Vec<String>>,
    pub eb_n0_db: Option<Vec<f64>>,
    pub frames: Option<u64>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub em: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    tx_antennas: Option<usize>,
    rx_antennas: Option<usize>,
    subcarriers: Option<usize>,
    ofdm_symbols: Option<usize>,
    subcarrier_spacing_hz: Option<f64>,
    constellation: Option<String>,
    eb_n0_db: Option<f64>,
    channel_profile: Option<String>,
    custom_profile: Option<CustomProfile>,
    interleaver_seed: Option<u64>,
    scenario: Option<ScenarioSection>,
}

impl ConfigFile {
    fn into_config(self) -> Result<(FrameConfig, Option<ScenarioSection>)> {
        let profile = match (self.channel_profile, self.custom_profile) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "set either channel_profile or custom_profile, not both".into(),
                ))
            }
            (Some(name), None) => PowerDelayProfile::by_name(&name)?,
            (None, Some(c)) => PowerDelayProfile::from_ns_db("custom", &c.delays_ns, &c.powers_db)?,
            (None, None) => etu_profile(),
        };
        let modulation = match self.constellation {
            Some(s) => s.parse()?,
            None => Modulation::Qam16,
        };
        let mut cfg = FrameConfig::new(
            self.tx_antennas.unwrap_or(2),
            self.rx_antennas.unwrap_or(2),
            self.subcarriers.unwrap_or(75),
            self.ofdm_symbols.unwrap_or(7),
            self.subcarrier_spacing_hz.unwrap_or(15e3),
            modulation,
            profile,
            self.eb_n0_db.unwrap_or(0.0),
        )?;
        if let Some(seed) = self.interleaver_seed {
            cfg.interleaver_seed = seed;
        }
        Ok((cfg, self.scenario))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimensions() {
        let c = build_default_config();
        assert_eq!((c.tx, c.rx, c.subcarriers, c.symbols), (2, 2, 75, 7));
        assert_eq!(c.spacing_hz, 15e3);
        assert_eq!(c.pilots.len(), 13);
        assert_eq!(c.data_res(), 512);
        assert!((c.code.rate() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn default_pilots_are_qpsk() {
        let c = build_default_config();
        let qpsk = Constellation::new(Modulation::Qpsk);
        for v in c.pilots.values.iter().flatten() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
            assert!(qpsk.points().iter().any(|p| (p - v).norm() < 1e-15));
        }
    }

    #[test]
    fn pilot_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = build_pilot_pattern(75, 7, 2, &mut rng).unwrap();
        assert_eq!(p.len(), 13);
        assert!(p.positions.iter().all(|&(_, l)| l == 0 || l == 4));
        let first: Vec<usize> = p.positions.iter().filter(|p| p.1 == 0).map(|p| p.0 + 1).collect();
        let fifth: Vec<usize> = p.positions.iter().filter(|p| p.1 == 4).map(|p| p.0 + 1).collect();
        assert_eq!(first, vec![1, 13, 25, 37, 49, 61, 73]);
        assert_eq!(fifth, vec![7, 19, 31, 43, 55, 67]);
    }

    #[test]
    fn pilot_pattern_is_deterministic() {
        let a = build_pilot_pattern(75, 7, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = build_pilot_pattern(75, 7, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_grid_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            build_pilot_pattern(12, 7, 1, &mut rng),
            Err(Error::InvalidGrid(_))
        ));
        assert!(build_pilot_pattern(75, 4, 1, &mut rng).is_err());
    }

    #[test]
    fn flat_index_examples() {
        assert_eq!(flat_index(1, 1, 75, 7).unwrap(), 0);
        assert_eq!(flat_index(75, 1, 75, 7).unwrap(), 74);
        assert_eq!(flat_index(1, 2, 75, 7).unwrap(), 75);
        assert!(flat_index(0, 1, 75, 7).is_err());
        assert!(flat_index(76, 1, 75, 7).is_err());
        assert!(flat_index(1, 8, 75, 7).is_err());
    }

    #[test]
    fn grid_rejects_duplicates() {
        assert!(ResourceGrid::new(4, 2, &[(1, 1), (1, 1)]).is_err());
        assert!(ResourceGrid::new(4, 2, &[(4, 0)]).is_err());
    }

    #[test]
    fn toml_defaults_and_overrides() {
        let (c, sc) = FrameConfig::from_toml_str(
            "constellation = \"qpsk\"\neb_n0_db = 4.0\n[scenario]\nframes = 10\n",
        )
        .unwrap();
        assert_eq!(c.modulation, Modulation::Qpsk);
        assert_eq!(c.eb_n0_db, 4.0);
        assert_eq!(c.subcarriers, 75);
        assert_eq!(sc.unwrap().frames, Some(10));
    }

    #[test]
    fn toml_rejects_unknown_keys() {
        assert!(FrameConfig::from_toml_str("bogus = 1\n").is_err());
        assert!(FrameConfig::from_toml_str("[scenario]\nbogus = 1\n").is_err());
    }

    #[test]
    fn toml_custom_profile() {
        let (c, _) = FrameConfig::from_toml_str(
            "[custom_profile]\ndelays_ns = [0.0, 100.0]\npowers_db = [0.0, -3.0]\n",
        )
        .unwrap();
        assert_eq!(c.profile.taps(), 2);
        assert!(FrameConfig::from_toml_str(
            "channel_profile = \"etu\"\n[custom_profile]\ndelays_ns = [0.0]\npowers_db = [0.0]\n"
        )
        .is_err());
    }
}
