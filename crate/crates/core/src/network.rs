//! Topologies, opportunistic access modes, and selection rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fading::{FadingDraw, LinkId, SnrPoint};
use crate::protocol::{self, TimeSplit};
use crate::{Error, Result};

/// Network topology with its node count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TopologyKind {
    OnOffRelay,
    InterferenceRelay(usize),
    SharedRelay(usize),
    Marc(usize),
    Brc(usize),
    XRelay,
    Gateway(usize),
}

impl TopologyKind {
    pub fn validate(self) -> Result<()> {
        match self {
            TopologyKind::InterferenceRelay(n)
            | TopologyKind::SharedRelay(n)
            | TopologyKind::Marc(n)
            | TopologyKind::Brc(n)
            | TopologyKind::Gateway(n)
                if n == 0 =>
            {
                Err(Error::Config(format!("{self} needs at least one node pair")))
            }
            _ => Ok(()),
        }
    }

    /// Number of source-destination pairs (sources for MARC, destinations
    /// for BRC).
    pub fn users(self) -> usize {
        match self {
            TopologyKind::OnOffRelay => 1,
            TopologyKind::XRelay => 2,
            TopologyKind::InterferenceRelay(n)
            | TopologyKind::SharedRelay(n)
            | TopologyKind::Marc(n)
            | TopologyKind::Brc(n)
            | TopologyKind::Gateway(n) => n,
        }
    }

    /// Largest admissible sum multiplexing gain.
    pub fn r_max(self) -> f64 {
        match self {
            TopologyKind::SharedRelay(n) => n as f64,
            _ => 1.0,
        }
    }

    /// Links in canonical order: direct links, then source-relay, then
    /// relay-destination, each ascending.
    pub fn links(self) -> Vec<LinkId> {
        use LinkId::*;
        match self {
            TopologyKind::OnOffRelay => vec![SourceDest(1, 1), SourceRelay(1), RelayDest(1)],
            TopologyKind::InterferenceRelay(n) | TopologyKind::SharedRelay(n) => (1..=n)
                .map(|i| SourceDest(i, i))
                .chain((1..=n).map(SourceRelay))
                .chain((1..=n).map(RelayDest))
                .collect(),
            TopologyKind::Marc(n) => (1..=n)
                .map(|i| SourceDest(i, 1))
                .chain((1..=n).map(SourceRelay))
                .chain(std::iter::once(RelayDest(1)))
                .collect(),
            TopologyKind::Brc(n) => (1..=n)
                .map(|j| SourceDest(1, j))
                .chain(std::iter::once(SourceRelay(1)))
                .chain((1..=n).map(RelayDest))
                .collect(),
            TopologyKind::XRelay => vec![
                SourceDest(1, 1),
                SourceDest(1, 2),
                SourceDest(2, 1),
                SourceDest(2, 2),
                SourceRelay(1),
                SourceRelay(2),
                RelayDest(1),
                RelayDest(2),
            ],
            TopologyKind::Gateway(m) => (1..=m).map(SourceRelay).chain((1..=m).map(RelayDest)).collect(),
        }
    }

    pub fn link_count(self) -> usize {
        match self {
            TopologyKind::OnOffRelay => 3,
            TopologyKind::InterferenceRelay(n) | TopologyKind::SharedRelay(n) => 3 * n,
            TopologyKind::Marc(n) | TopologyKind::Brc(n) => 2 * n + 1,
            TopologyKind::XRelay => 8,
            TopologyKind::Gateway(m) => 2 * m,
        }
    }

    /// Position of `link` in [`TopologyKind::links`].
    pub fn link_index(self, link: LinkId) -> Option<usize> {
        use LinkId::*;
        let in_range = |i: usize, n: usize| (1..=n).contains(&i);
        match (self, link) {
            (TopologyKind::OnOffRelay, _) => TopologyKind::InterferenceRelay(1).link_index(link),
            (TopologyKind::InterferenceRelay(n) | TopologyKind::SharedRelay(n), l) => match l {
                SourceDest(i, j) if i == j && in_range(i, n) => Some(i - 1),
                SourceRelay(i) if in_range(i, n) => Some(n + i - 1),
                RelayDest(j) if in_range(j, n) => Some(2 * n + j - 1),
                _ => None,
            },
            (TopologyKind::Marc(n), l) => match l {
                SourceDest(i, 1) if in_range(i, n) => Some(i - 1),
                SourceRelay(i) if in_range(i, n) => Some(n + i - 1),
                RelayDest(1) => Some(2 * n),
                _ => None,
            },
            (TopologyKind::Brc(n), l) => match l {
                SourceDest(1, j) if in_range(j, n) => Some(j - 1),
                SourceRelay(1) => Some(n),
                RelayDest(j) if in_range(j, n) => Some(n + j),
                _ => None,
            },
            (TopologyKind::XRelay, l) => match l {
                SourceDest(i, j) if in_range(i, 2) && in_range(j, 2) => Some(2 * (i - 1) + j - 1),
                SourceRelay(i) if in_range(i, 2) => Some(3 + i),
                RelayDest(j) if in_range(j, 2) => Some(5 + j),
                _ => None,
            },
            (TopologyKind::Gateway(m), l) => match l {
                SourceRelay(i) if in_range(i, m) => Some(i - 1),
                RelayDest(j) if in_range(j, m) => Some(m + j - 1),
                _ => None,
            },
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::OnOffRelay => write!(f, "on-off"),
            TopologyKind::InterferenceRelay(n) => write!(f, "irc:{n}"),
            TopologyKind::SharedRelay(n) => write!(f, "src:{n}"),
            TopologyKind::Marc(n) => write!(f, "marc:{n}"),
            TopologyKind::Brc(n) => write!(f, "brc:{n}"),
            TopologyKind::XRelay => write!(f, "x-relay"),
            TopologyKind::Gateway(m) => write!(f, "gateway:{m}"),
        }
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, count) = match s.split_once(':') {
            Some((name, n)) => {
                let n = n
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::UnknownKey(format!("topology `{s}`")))?;
                (name.trim(), Some(n))
            }
            None => (s.trim(), None),
        };
        let topo = match (name, count) {
            ("on-off", None) => TopologyKind::OnOffRelay,
            ("x-relay", None) => TopologyKind::XRelay,
            ("irc", Some(n)) => TopologyKind::InterferenceRelay(n),
            ("src", Some(n)) => TopologyKind::SharedRelay(n),
            ("marc", Some(n)) => TopologyKind::Marc(n),
            ("brc", Some(n)) => TopologyKind::Brc(n),
            ("gateway", Some(m)) => TopologyKind::Gateway(m),
            _ => return Err(Error::UnknownKey(format!("topology `{s}`"))),
        };
        topo.validate()?;
        Ok(topo)
    }
}

impl TryFrom<String> for TopologyKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TopologyKind> for String {
    fn from(t: TopologyKind) -> String {
        t.to_string()
    }
}

/// Relaying protocol. The `Unassisted` variants add relay-off modes to the
/// orthogonal MARC/BRC mode set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProtocolKind {
    OrthAf,
    OrthDf,
    OrthAfUnassisted,
    OrthDfUnassisted,
    Naf,
    Ddf,
    Cf,
}

impl ProtocolKind {
    pub fn is_orthogonal(self) -> bool {
        matches!(
            self,
            ProtocolKind::OrthAf | ProtocolKind::OrthDf | ProtocolKind::OrthAfUnassisted | ProtocolKind::OrthDfUnassisted
        )
    }

    fn is_unassisted(self) -> bool {
        matches!(self, ProtocolKind::OrthAfUnassisted | ProtocolKind::OrthDfUnassisted)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::OrthAf => "orth-af",
            ProtocolKind::OrthDf => "orth-df",
            ProtocolKind::OrthAfUnassisted => "orth-af-unassisted",
            ProtocolKind::OrthDfUnassisted => "orth-df-unassisted",
            ProtocolKind::Naf => "naf",
            ProtocolKind::Ddf => "ddf",
            ProtocolKind::Cf => "cf",
        })
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "orth-af" | "af" => ProtocolKind::OrthAf,
            "orth-df" | "df" => ProtocolKind::OrthDf,
            "orth-af-unassisted" => ProtocolKind::OrthAfUnassisted,
            "orth-df-unassisted" => ProtocolKind::OrthDfUnassisted,
            "naf" => ProtocolKind::Naf,
            "ddf" => ProtocolKind::Ddf,
            "cf" => ProtocolKind::Cf,
            _ => return Err(Error::UnknownKey(format!("protocol `{s}`"))),
        })
    }
}

impl TryFrom<String> for ProtocolKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProtocolKind> for String {
    fn from(p: ProtocolKind) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelayRole {
    Off,
    Orthogonal,
    NonOrthogonal,
}

/// One message flow of a mode (1-based node indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stream {
    pub source: usize,
    pub dest: usize,
    pub relayed: bool,
}

/// One opportunistic access mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessMode {
    pub label: String,
    pub streams: Vec<Stream>,
    pub relay_role: RelayRole,
}

impl AccessMode {
    pub fn active_sources(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.streams.iter().map(|s| s.source).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn active_destinations(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.streams.iter().map(|s| s.dest).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Fraction of the sum rate carried by each stream.
    pub fn rate_share(&self) -> f64 {
        1.0 / self.streams.len() as f64
    }

    pub fn is_relayed(&self) -> bool {
        self.streams.iter().any(|s| s.relayed)
    }

    /// Every receiver hears exactly one message stream.
    pub fn is_opportunistic(&self) -> bool {
        if self.streams.is_empty() {
            return false;
        }
        let dests = self.active_destinations();
        let sources = self.active_sources();
        dests.len() == self.streams.len()
            && sources.len() == self.streams.len()
            && (self.relay_role == RelayRole::Off) == !self.is_relayed()
            && self.streams.iter().filter(|s| s.relayed).count() <= 1
    }
}

fn single(label: String, source: usize, dest: usize, relayed: bool, role: RelayRole) -> AccessMode {
    AccessMode {
        label,
        streams: vec![Stream { source, dest, relayed }],
        relay_role: if relayed { role } else { RelayRole::Off },
    }
}

/// The mode set used by the analysis of each (topology, protocol) pair.
pub fn enumerate_modes(topology: TopologyKind, protocol: ProtocolKind) -> Result<Vec<AccessMode>> {
    topology.validate()?;
    let unsupported = || Err(Error::Unsupported(format!("{protocol} on {topology}")));
    let role = if protocol.is_orthogonal() { RelayRole::Orthogonal } else { RelayRole::NonOrthogonal };
    let direct = |i: usize, j: usize| single(format!("direct {i}->{j}"), i, j, false, role);
    let relayed = |i: usize, j: usize| single(format!("relayed {i}->{j}"), i, j, true, role);
    let modes = match topology {
        TopologyKind::OnOffRelay => {
            if !protocol.is_orthogonal() {
                return unsupported();
            }
            vec![direct(1, 1), relayed(1, 1)]
        }
        TopologyKind::InterferenceRelay(n) => {
            let mut modes = Vec::new();
            if protocol.is_orthogonal() {
                modes.extend((1..=n).map(|i| direct(i, i)));
            }
            modes.extend((1..=n).map(|i| relayed(i, i)));
            modes
        }
        TopologyKind::SharedRelay(n) => {
            let mut modes: Vec<AccessMode> = (1..=n).map(|i| relayed(i, i)).collect();
            modes.push(AccessMode {
                label: "all direct".into(),
                streams: (1..=n).map(|i| Stream { source: i, dest: i, relayed: false }).collect(),
                relay_role: RelayRole::Off,
            });
            modes
        }
        TopologyKind::Marc(n) | TopologyKind::Brc(n) => {
            let pair = |k: usize| match topology {
                TopologyKind::Marc(_) => (k, 1),
                _ => (1, k),
            };
            let mut modes = Vec::new();
            if protocol.is_unassisted() {
                modes.extend((1..=n).map(|k| {
                    let (i, j) = pair(k);
                    direct(i, j)
                }));
            }
            modes.extend((1..=n).map(|k| {
                let (i, j) = pair(k);
                relayed(i, j)
            }));
            modes
        }
        TopologyKind::XRelay => {
            let mut modes = vec![relayed(1, 1), relayed(2, 2), direct(1, 2), direct(2, 1)];
            if protocol.is_orthogonal() {
                modes.extend([direct(1, 1), direct(2, 2)]);
            }
            modes
        }
        TopologyKind::Gateway(m) => {
            if protocol != ProtocolKind::OrthDf {
                return unsupported();
            }
            (1..=m).map(|i| relayed(i, i)).collect()
        }
    };
    if protocol.is_unassisted() && !matches!(topology, TopologyKind::Marc(_) | TopologyKind::Brc(_)) {
        return unsupported();
    }
    Ok(modes)
}

/// How a mode is chosen from the channel state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SelectionRule {
    /// Mode with the largest end-to-end capacity.
    MaxEndToEndMI,
    /// Relayed mode of the user with the strongest direct link.
    DirectLinkMax,
    /// Shared-relay cascade: all-direct, then the relayed mode of a user
    /// whose direct link carries its share, then the other relayed mode.
    SequentialSrc,
    /// Gateway one-bit feedback with threshold `alpha`; `None` uses
    /// `(2^{2R} - 1)/rho`.
    OneBitThreshold(Option<f64>),
    FixedMode(usize),
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionRule::MaxEndToEndMI => write!(f, "max-mi"),
            SelectionRule::DirectLinkMax => write!(f, "direct-link-max"),
            SelectionRule::SequentialSrc => write!(f, "sequential-src"),
            SelectionRule::OneBitThreshold(None) => write!(f, "one-bit"),
            SelectionRule::OneBitThreshold(Some(a)) => write!(f, "one-bit:{a}"),
            SelectionRule::FixedMode(i) => write!(f, "fixed:{i}"),
        }
    }
}

impl FromStr for SelectionRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownKey(format!("selection rule `{s}`"));
        Ok(match s.trim().split_once(':') {
            None => match s.trim() {
                "max-mi" => SelectionRule::MaxEndToEndMI,
                "direct-link-max" => SelectionRule::DirectLinkMax,
                "sequential-src" => SelectionRule::SequentialSrc,
                "one-bit" => SelectionRule::OneBitThreshold(None),
                _ => return Err(bad()),
            },
            Some(("one-bit", a)) => {
                let a: f64 = a.trim().parse().map_err(|_| bad())?;
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("one-bit threshold must be >= 0, got {a}")));
                }
                SelectionRule::OneBitThreshold(Some(a))
            }
            Some(("fixed", i)) => SelectionRule::FixedMode(i.trim().parse().map_err(|_| bad())?),
            Some(_) => return Err(bad()),
        })
    }
}

impl TryFrom<String> for SelectionRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SelectionRule> for String {
    fn from(r: SelectionRule) -> String {
        r.to_string()
    }
}

/// Attempted sum rate as a function of SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePolicy {
    /// `R = r log2(rho)`.
    Multiplexing { r: f64 },
    /// Fixed `R` in bits/s/Hz.
    FixedRate { bits: f64 },
}

impl RatePolicy {
    pub fn target_bits(self, snr: SnrPoint) -> f64 {
        match self {
            RatePolicy::Multiplexing { r } => r * snr.rho().log2(),
            RatePolicy::FixedRate { bits } => bits,
        }
    }

    pub fn validate(self, topology: TopologyKind) -> Result<()> {
        match self {
            RatePolicy::Multiplexing { r } if !(0.0..=topology.r_max()).contains(&r) => Err(Error::Config(format!(
                "multiplexing gain {r} outside [0, {}] for {topology}",
                topology.r_max()
            ))),
            RatePolicy::FixedRate { bits } if !(bits >= 0.0 && bits.is_finite()) => {
                Err(Error::Config(format!("rate must be a nonnegative number, got {bits}")))
            }
            _ => Ok(()),
        }
    }
}

/// Listen/transmit split used for CF at finite SNR (relay listens half the
/// interval).
pub const CF_TRANSMIT_SHARE: f64 = 0.5;

/// Outcome of applying a rule to one draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub mode: Option<usize>,
    pub outage: bool,
}

/// Modes of one (topology, protocol) pair plus the bookkeeping the rules
/// need.
#[derive(Debug, Clone)]
pub struct ModeSet {
    topology: TopologyKind,
    protocol: ProtocolKind,
    modes: Vec<AccessMode>,
}

impl ModeSet {
    pub fn new(topology: TopologyKind, protocol: ProtocolKind) -> Result<Self> {
        let modes = enumerate_modes(topology, protocol)?;
        Ok(ModeSet { topology, protocol, modes })
    }

    pub fn topology(&self) -> TopologyKind {
        self.topology
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.protocol
    }

    pub fn modes(&self) -> &[AccessMode] {
        &self.modes
    }

    /// Rejects rules that do not apply to this topology, and NAF, which has
    /// no finite-SNR mutual information.
    pub fn check_rule(&self, rule: SelectionRule) -> Result<()> {
        let bad = |why: &str| Err(Error::Unsupported(format!("{rule} on {}: {why}", self.topology)));
        if self.protocol == ProtocolKind::Naf {
            return Err(Error::Unsupported("NAF has no finite-SNR mutual information".into()));
        }
        match rule {
            SelectionRule::MaxEndToEndMI => Ok(()),
            SelectionRule::DirectLinkMax => match self.topology {
                TopologyKind::OnOffRelay
                | TopologyKind::InterferenceRelay(_)
                | TopologyKind::Marc(_)
                | TopologyKind::Brc(_) => Ok(()),
                _ => bad("needs one relayed mode per user"),
            },
            SelectionRule::SequentialSrc => match self.topology {
                TopologyKind::SharedRelay(_) => Ok(()),
                _ => bad("shared relay channel only"),
            },
            SelectionRule::OneBitThreshold(_) => match self.topology {
                TopologyKind::Gateway(_) => Ok(()),
                _ => bad("gateway channel only"),
            },
            SelectionRule::FixedMode(i) if i >= self.modes.len() => bad("mode index out of range"),
            SelectionRule::FixedMode(_) => Ok(()),
        }
    }

    fn stream_mi(&self, draw: &FadingDraw, s: Stream, snr: SnrPoint, stream_bits: f64) -> Result<f64> {
        let sd = || draw.gain(LinkId::SourceDest(s.source, s.dest));
        if !s.relayed {
            return Ok(protocol::mi_direct(sd(), snr, false).bits);
        }
        let sr = draw.gain(LinkId::SourceRelay(s.source));
        let rd = draw.gain(LinkId::RelayDest(s.dest));
        if let TopologyKind::Gateway(_) = self.topology {
            return Ok(protocol::mi_gateway_df(sr, rd, snr).bits);
        }
        Ok(match self.protocol {
            ProtocolKind::OrthAf | ProtocolKind::OrthAfUnassisted => protocol::mi_orth_af(sd(), sr, rd, snr).bits,
            ProtocolKind::OrthDf | ProtocolKind::OrthDfUnassisted => {
                protocol::mi_orth_df(sd(), sr, rd, snr, stream_bits).bits
            }
            ProtocolKind::Ddf => protocol::mi_ddf(sd(), sr, rd, snr, stream_bits).bits,
            ProtocolKind::Cf => {
                let t = TimeSplit::new(CF_TRANSMIT_SHARE).expect("constant in range");
                protocol::mi_cf_cutsets(sd(), sr, rd, snr, t).bits
            }
            ProtocolKind::Naf => {
                return Err(Error::Unsupported("NAF has no finite-SNR mutual information".into()))
            }
        })
    }

    /// Sum rate mode `idx` can carry when it attempts `target_bits`:
    /// streams times the weakest stream.
    pub fn mode_capacity(&self, idx: usize, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> Result<f64> {
        let mode = &self.modes[idx];
        let k = mode.streams.len() as f64;
        let mut worst = f64::INFINITY;
        for &s in &mode.streams {
            worst = worst.min(self.stream_mi(draw, s, snr, target_bits / k)?);
        }
        Ok(k * worst)
    }

    pub fn mode_outage(&self, idx: usize, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> Result<bool> {
        if target_bits <= 0.0 {
            return Ok(false);
        }
        Ok(self.mode_capacity(idx, draw, snr, target_bits)? < target_bits)
    }

    /// Applies `rule`; `None` means no mode is scheduled (an outage).
    pub fn select(&self, rule: SelectionRule, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> Result<Option<usize>> {
        match rule {
            SelectionRule::FixedMode(i) => {
                if i >= self.modes.len() {
                    return Err(Error::Unsupported(format!("mode {i} of {}", self.topology)));
                }
                Ok(Some(i))
            }
            SelectionRule::MaxEndToEndMI => {
                let mut best = 0;
                let mut best_cap = f64::NEG_INFINITY;
                for i in 0..self.modes.len() {
                    let cap = self.mode_capacity(i, draw, snr, target_bits)?;
                    if cap > best_cap {
                        best = i;
                        best_cap = cap;
                    }
                }
                Ok(Some(best))
            }
            SelectionRule::DirectLinkMax => self.direct_link_max(draw, snr, target_bits).map(Some),
            SelectionRule::SequentialSrc => self.sequential_src(draw, snr, target_bits).map(Some),
            SelectionRule::OneBitThreshold(alpha) => {
                if !matches!(self.topology, TopologyKind::Gateway(_)) {
                    return Err(Error::Unsupported(format!("{rule} on {}", self.topology)));
                }
                let alpha = alpha.unwrap_or_else(|| snr.gain_threshold(2.0 * target_bits));
                Ok(one_bit_pick(draw, self.topology.users(), alpha).map(|i| i - 1))
            }
        }
    }

    /// Selection plus the outage indicator of the chosen mode.
    pub fn evaluate(&self, rule: SelectionRule, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> Result<Selection> {
        let mode = self.select(rule, draw, snr, target_bits)?;
        let outage = match mode {
            Some(i) => self.mode_outage(i, draw, snr, target_bits)?,
            None => target_bits > 0.0,
        };
        Ok(Selection { mode, outage })
    }

    fn direct_link_max(&self, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in self.modes.iter().enumerate() {
            let s = m.streams[0];
            if !s.relayed {
                continue;
            }
            let g = draw.gain(LinkId::SourceDest(s.source, s.dest));
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((i, g));
            }
        }
        let (relayed_idx, _) = best.ok_or_else(|| Error::Unsupported("no relayed mode".into()))?;
        let target = self.modes[relayed_idx].streams[0];
        let direct_idx = self.modes.iter().position(|m| {
            m.streams.len() == 1 && !m.streams[0].relayed && m.streams[0].source == target.source && m.streams[0].dest == target.dest
        });
        if let Some(d) = direct_idx {
            if !self.mode_outage(d, draw, snr, target_bits)? {
                return Ok(d);
            }
        }
        Ok(relayed_idx)
    }

    fn sequential_src(&self, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> Result<usize> {
        let n = match self.topology {
            TopologyKind::SharedRelay(n) => n,
            _ => return Err(Error::Unsupported(format!("sequential-src on {}", self.topology))),
        };
        let all_direct = n;
        if !self.mode_outage(all_direct, draw, snr, target_bits)? {
            return Ok(all_direct);
        }
        let share_threshold = snr.gain_threshold(target_bits / n as f64);
        let second = (1..=n)
            .find(|&i| draw.gain(LinkId::SourceDest(i, i)) >= share_threshold)
            .unwrap_or(1)
            - 1;
        if !self.mode_outage(second, draw, snr, target_bits)? {
            return Ok(second);
        }
        // The remaining relayed mode; with more than two users, the best of
        // the rest.
        let mut best = None;
        let mut best_cap = f64::NEG_INFINITY;
        for i in (0..n).filter(|&i| i != second) {
            let cap = self.mode_capacity(i, draw, snr, target_bits)?;
            if cap > best_cap {
                best = Some(i);
                best_cap = cap;
            }
        }
        Ok(best.unwrap_or(second))
    }
}

/// Picks a mode for one draw. Builds the mode set on every call.
pub fn select_mode(
    rule: SelectionRule,
    draw: &FadingDraw,
    snr: SnrPoint,
    policy: RatePolicy,
    protocol: ProtocolKind,
) -> Result<Option<AccessMode>> {
    let set = ModeSet::new(draw.topology(), protocol)?;
    set.check_rule(rule)?;
    let idx = set.select(rule, draw, snr, policy.target_bits(snr))?;
    Ok(idx.map(|i| set.modes[i].clone()))
}

/// Whether `mode` cannot carry the policy's rate on this draw.
pub fn outage_indicator(
    draw: &FadingDraw,
    mode: &AccessMode,
    protocol: ProtocolKind,
    snr: SnrPoint,
    policy: RatePolicy,
) -> Result<bool> {
    let set = ModeSet::new(draw.topology(), protocol)?;
    let idx = set
        .modes
        .iter()
        .position(|m| m == mode)
        .ok_or_else(|| Error::Unsupported(format!("mode `{}` is not a mode of {}", mode.label, draw.topology())))?;
    set.mode_outage(idx, draw, snr, policy.target_bits(snr))
}

fn one_bit_pick(draw: &FadingDraw, m: usize, alpha: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 1..=m {
        if draw.gain(LinkId::RelayDest(i)) < alpha {
            continue;
        }
        let g = draw.gain(LinkId::SourceRelay(i));
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((i, g));
        }
    }
    best.map(|(i, _)| i)
}

/// Gateway one-bit feedback: destinations whose relay link clears the
/// threshold raise their bit, and the relay serves the eligible pair with
/// the strongest source link.
pub fn gateway_one_bit_select(draw: &FadingDraw, snr: SnrPoint, policy: RatePolicy) -> Result<Option<AccessMode>> {
    let m = match draw.topology() {
        TopologyKind::Gateway(m) => m,
        t => return Err(Error::Unsupported(format!("one-bit feedback on {t}"))),
    };
    let alpha = snr.gain_threshold(2.0 * policy.target_bits(snr));
    let modes = enumerate_modes(draw.topology(), ProtocolKind::OrthDf)?;
    Ok(one_bit_pick(draw, m, alpha).map(|i| modes[i - 1].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::{LinkRates, TrialRngFactory};
    use proptest::prelude::*;
    use LinkId::*;

    fn snr(rho: f64) -> SnrPoint {
        SnrPoint::new(rho).unwrap()
    }

    const ALL_TOPOLOGIES: [TopologyKind; 11] = [
        TopologyKind::OnOffRelay,
        TopologyKind::InterferenceRelay(2),
        TopologyKind::InterferenceRelay(4),
        TopologyKind::SharedRelay(2),
        TopologyKind::SharedRelay(3),
        TopologyKind::Marc(2),
        TopologyKind::Marc(3),
        TopologyKind::Brc(2),
        TopologyKind::XRelay,
        TopologyKind::Gateway(1),
        TopologyKind::Gateway(3),
    ];

    const ALL_PROTOCOLS: [ProtocolKind; 7] = [
        ProtocolKind::OrthAf,
        ProtocolKind::OrthDf,
        ProtocolKind::OrthAfUnassisted,
        ProtocolKind::OrthDfUnassisted,
        ProtocolKind::Naf,
        ProtocolKind::Ddf,
        ProtocolKind::Cf,
    ];

    #[test]
    fn link_index_matches_link_order() {
        for t in ALL_TOPOLOGIES {
            let links = t.links();
            assert_eq!(links.len(), t.link_count());
            let mut sorted = links.clone();
            sorted.sort();
            assert_eq!(sorted, links, "{t}");
            for (i, l) in links.iter().enumerate() {
                assert_eq!(t.link_index(*l), Some(i), "{t} {l}");
            }
            assert_eq!(t.link_index(SourceDest(9, 9)), None);
        }
        assert_eq!(TopologyKind::Marc(2).link_index(SourceDest(1, 2)), None);
    }

    #[test]
    fn topology_round_trips_through_strings() {
        for t in ALL_TOPOLOGIES {
            assert_eq!(t.to_string().parse::<TopologyKind>().unwrap(), t);
        }
        assert!("irc:0".parse::<TopologyKind>().is_err());
        assert!("mesh:3".parse::<TopologyKind>().is_err());
        for p in ALL_PROTOCOLS {
            assert_eq!(p.to_string().parse::<ProtocolKind>().unwrap(), p);
        }
        for r in [
            SelectionRule::MaxEndToEndMI,
            SelectionRule::DirectLinkMax,
            SelectionRule::SequentialSrc,
            SelectionRule::OneBitThreshold(None),
            SelectionRule::OneBitThreshold(Some(0.25)),
            SelectionRule::FixedMode(2),
        ] {
            assert_eq!(r.to_string().parse::<SelectionRule>().unwrap(), r);
        }
    }

    #[test]
    fn mode_counts() {
        let count = |t, p| enumerate_modes(t, p).unwrap().len();
        assert_eq!(count(TopologyKind::InterferenceRelay(2), ProtocolKind::OrthAf), 4);
        assert_eq!(count(TopologyKind::InterferenceRelay(2), ProtocolKind::Cf), 2);
        for p in [ProtocolKind::OrthAf, ProtocolKind::OrthDf, ProtocolKind::Naf, ProtocolKind::Ddf, ProtocolKind::Cf] {
            assert_eq!(count(TopologyKind::SharedRelay(2), p), 3);
        }
        assert_eq!(count(TopologyKind::Marc(3), ProtocolKind::OrthDf), 3);
        assert_eq!(count(TopologyKind::Marc(3), ProtocolKind::OrthDfUnassisted), 6);
        assert_eq!(count(TopologyKind::XRelay, ProtocolKind::Ddf), 4);
        assert_eq!(count(TopologyKind::XRelay, ProtocolKind::OrthAf), 6);
        assert_eq!(count(TopologyKind::Gateway(3), ProtocolKind::OrthDf), 3);
    }

    #[test]
    fn unsupported_pairs_are_reported() {
        for (t, p) in [
            (TopologyKind::OnOffRelay, ProtocolKind::Ddf),
            (TopologyKind::Gateway(2), ProtocolKind::Cf),
            (TopologyKind::InterferenceRelay(2), ProtocolKind::OrthAfUnassisted),
        ] {
            assert!(matches!(enumerate_modes(t, p), Err(Error::Unsupported(_))), "{t} {p}");
        }
    }

    #[test]
    fn every_mode_is_opportunistic() {
        for t in ALL_TOPOLOGIES {
            for p in ALL_PROTOCOLS {
                if let Ok(modes) = enumerate_modes(t, p) {
                    for m in &modes {
                        assert!(m.is_opportunistic(), "{t} {p} {}", m.label);
                        for s in &m.streams {
                            assert!(t.link_index(SourceDest(s.source, s.dest)).is_some() || matches!(t, TopologyKind::Gateway(_)));
                        }
                    }
                }
            }
        }
        let bad = AccessMode {
            label: "two into one".into(),
            streams: vec![
                Stream { source: 1, dest: 1, relayed: false },
                Stream { source: 2, dest: 1, relayed: false },
            ],
            relay_role: RelayRole::Off,
        };
        assert!(!bad.is_opportunistic());
    }

    fn marc_draw(g1d: f64, g2d: f64) -> FadingDraw {
        FadingDraw::from_gains(
            TopologyKind::Marc(2),
            [
                (SourceDest(1, 1), g1d),
                (SourceDest(2, 1), g2d),
                (SourceRelay(1), 1.0),
                (SourceRelay(2), 1.0),
                (RelayDest(1), 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn direct_link_max_picks_strongest_source() {
        let set = ModeSet::new(TopologyKind::Marc(2), ProtocolKind::Cf).unwrap();
        let pick = set.select(SelectionRule::DirectLinkMax, &marc_draw(0.4, 0.1), snr(10.0), 1.0).unwrap();
        assert_eq!(set.modes()[pick.unwrap()].active_sources(), vec![1]);
        let pick = set.select(SelectionRule::DirectLinkMax, &marc_draw(0.1, 0.4), snr(10.0), 1.0).unwrap();
        assert_eq!(set.modes()[pick.unwrap()].active_sources(), vec![2]);
    }

    #[test]
    fn unassisted_direct_link_max_uses_direct_when_it_suffices() {
        let set = ModeSet::new(TopologyKind::Marc(2), ProtocolKind::OrthDfUnassisted).unwrap();
        // log2(1 + 0.4*10) > 1, so the unassisted direct mode of source 1.
        let pick = set.select(SelectionRule::DirectLinkMax, &marc_draw(0.4, 0.1), snr(10.0), 1.0).unwrap().unwrap();
        assert!(!set.modes()[pick].is_relayed());
        let pick = set.select(SelectionRule::DirectLinkMax, &marc_draw(0.4, 0.1), snr(10.0), 3.0).unwrap().unwrap();
        assert!(set.modes()[pick].is_relayed());
        assert_eq!(set.modes()[pick].active_sources(), vec![1]);
    }

    #[test]
    fn ties_go_to_the_lowest_mode() {
        let set = ModeSet::new(TopologyKind::Marc(2), ProtocolKind::Cf).unwrap();
        let pick = set.select(SelectionRule::MaxEndToEndMI, &marc_draw(0.3, 0.3), snr(10.0), 1.0).unwrap();
        assert_eq!(pick, Some(0));
    }

    fn src_draw(g11: f64, g22: f64, relay: f64) -> FadingDraw {
        FadingDraw::from_gains(
            TopologyKind::SharedRelay(2),
            [
                (SourceDest(1, 1), g11),
                (SourceDest(2, 2), g22),
                (SourceRelay(1), relay),
                (SourceRelay(2), relay),
                (RelayDest(1), relay),
                (RelayDest(2), relay),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sequential_src_cascade() {
        let set = ModeSet::new(TopologyKind::SharedRelay(2), ProtocolKind::Ddf).unwrap();
        let s = snr(10.0);
        // Both direct links carry R/2 = 1: mode 1 (all direct), even with a
        // strong relay.
        assert_eq!(set.select(SelectionRule::SequentialSrc, &src_draw(0.5, 0.5, 50.0), s, 2.0).unwrap(), Some(2));
        // Only user 2 carries its half rate: the relayed mode of user 2.
        assert_eq!(set.select(SelectionRule::SequentialSrc, &src_draw(0.01, 0.5, 50.0), s, 2.0).unwrap(), Some(1));
        // Nobody does: user 1 first, and with a dead relay the cascade ends
        // on the other relayed mode.
        assert_eq!(set.select(SelectionRule::SequentialSrc, &src_draw(0.01, 0.02, 50.0), s, 2.0).unwrap(), Some(0));
        assert_eq!(set.select(SelectionRule::SequentialSrc, &src_draw(0.01, 0.02, 0.0), s, 2.0).unwrap(), Some(1));
    }

    #[test]
    fn outage_indicator_examples() {
        let draw = FadingDraw::from_gains(
            TopologyKind::OnOffRelay,
            [(SourceDest(1, 1), 0.3), (SourceRelay(1), 1.0), (RelayDest(1), 2.0)],
        )
        .unwrap();
        let modes = enumerate_modes(TopologyKind::OnOffRelay, ProtocolKind::OrthAf).unwrap();
        let s = snr(10.0);
        assert!(outage_indicator(&draw, &modes[0], ProtocolKind::OrthAf, s, RatePolicy::FixedRate { bits: 2.1 }).unwrap());
        assert!(!outage_indicator(&draw, &modes[0], ProtocolKind::OrthAf, s, RatePolicy::FixedRate { bits: 1.9 }).unwrap());
        for m in &modes {
            assert!(!outage_indicator(&draw, m, ProtocolKind::OrthAf, s, RatePolicy::FixedRate { bits: 0.0 }).unwrap());
        }
        let draw = FadingDraw::from_gains(
            TopologyKind::OnOffRelay,
            [(SourceDest(1, 1), 0.5), (SourceRelay(1), 1.0), (RelayDest(1), 2.0)],
        )
        .unwrap();
        assert!(!outage_indicator(&draw, &modes[1], ProtocolKind::OrthAf, s, RatePolicy::FixedRate { bits: 1.8 }).unwrap());
        assert!(outage_indicator(&draw, &modes[1], ProtocolKind::OrthAf, s, RatePolicy::FixedRate { bits: 1.85 }).unwrap());
    }

    fn gateway_draw(g_r: [f64; 2], g_s: [f64; 2]) -> FadingDraw {
        FadingDraw::from_gains(
            TopologyKind::Gateway(2),
            [
                (SourceRelay(1), g_s[0]),
                (SourceRelay(2), g_s[1]),
                (RelayDest(1), g_r[0]),
                (RelayDest(2), g_r[1]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_bit_examples() {
        let s = snr(10.0);
        // 2^{2R} - 1 = 1 gives alpha = 0.1.
        let policy = RatePolicy::FixedRate { bits: 0.5 };
        assert!(gateway_one_bit_select(&gateway_draw([0.05, 0.05], [2.0, 2.0]), s, policy).unwrap().is_none());

        let draw = gateway_draw([0.05, 0.3], [2.0, 0.01]);
        let picked = gateway_one_bit_select(&draw, s, policy).unwrap().unwrap();
        assert_eq!(picked.active_sources(), vec![2]);
        assert!(outage_indicator(&draw, &picked, ProtocolKind::OrthDf, s, policy).unwrap());

        let three = FadingDraw::from_gains(
            TopologyKind::Gateway(3),
            [
                (SourceRelay(1), 5.0),
                (SourceRelay(2), 0.5),
                (SourceRelay(3), 0.9),
                (RelayDest(1), 0.01),
                (RelayDest(2), 1.0),
                (RelayDest(3), 1.0),
            ],
        )
        .unwrap();
        let picked = gateway_one_bit_select(&three, s, policy).unwrap().unwrap();
        assert_eq!(picked.active_sources(), vec![3]);

        let set = ModeSet::new(TopologyKind::Gateway(2), ProtocolKind::OrthDf).unwrap();
        let sel = set.evaluate(SelectionRule::OneBitThreshold(Some(0.1)), &draw, s, 0.5).unwrap();
        assert_eq!(sel, Selection { mode: Some(1), outage: true });
    }

    #[test]
    fn rule_compatibility() {
        let marc = ModeSet::new(TopologyKind::Marc(2), ProtocolKind::Cf).unwrap();
        assert!(marc.check_rule(SelectionRule::OneBitThreshold(None)).is_err());
        assert!(marc.check_rule(SelectionRule::SequentialSrc).is_err());
        assert!(marc.check_rule(SelectionRule::DirectLinkMax).is_ok());
        let naf = ModeSet::new(TopologyKind::Marc(2), ProtocolKind::Naf).unwrap();
        assert!(matches!(naf.check_rule(SelectionRule::MaxEndToEndMI), Err(Error::Unsupported(_))));
        assert!(RatePolicy::Multiplexing { r: 1.5 }.validate(TopologyKind::SharedRelay(2)).is_ok());
        assert!(RatePolicy::Multiplexing { r: 1.5 }.validate(TopologyKind::Marc(2)).is_err());
    }

    fn supported_pairs() -> Vec<(TopologyKind, ProtocolKind)> {
        let mut v = Vec::new();
        for t in ALL_TOPOLOGIES {
            for p in ALL_PROTOCOLS {
                if p != ProtocolKind::Naf && enumerate_modes(t, p).is_ok() {
                    v.push((t, p));
                }
            }
        }
        v
    }

    #[test]
    fn max_mi_never_picks_an_outage_mode_over_a_working_one() {
        let s = snr(100.0);
        let target = RatePolicy::Multiplexing { r: 0.4 }.target_bits(s);
        for (t, p) in supported_pairs() {
            let set = ModeSet::new(t, p).unwrap();
            let rates = LinkRates::default().resolve(t).unwrap();
            let f = TrialRngFactory::new(21);
            for trial in 0..2000 {
                let draw = FadingDraw::sample(t, &rates, &mut f.trial(trial));
                let sel = set.evaluate(SelectionRule::MaxEndToEndMI, &draw, s, target).unwrap();
                let all_out = (0..set.modes().len()).all(|i| set.mode_outage(i, &draw, s, target).unwrap());
                assert_eq!(sel.outage, all_out, "{t} {p}");
            }
        }
    }

    #[test]
    fn max_mi_dominates_other_rules() {
        let s = snr(31.6);
        let trials = 100_000u64;
        for (t, p) in supported_pairs() {
            let set = ModeSet::new(t, p).unwrap();
            let target = RatePolicy::Multiplexing { r: 0.3 * t.r_max() }.target_bits(s);
            let rules: Vec<SelectionRule> = [
                SelectionRule::DirectLinkMax,
                SelectionRule::SequentialSrc,
                SelectionRule::OneBitThreshold(None),
                SelectionRule::FixedMode(0),
            ]
            .into_iter()
            .filter(|r| set.check_rule(*r).is_ok())
            .collect();
            let rates = LinkRates::default().resolve(t).unwrap();
            let f = TrialRngFactory::new(77);
            let mut best = 0u64;
            let mut other = vec![0u64; rules.len()];
            for trial in 0..trials {
                let draw = FadingDraw::sample(t, &rates, &mut f.trial(trial));
                best += set.evaluate(SelectionRule::MaxEndToEndMI, &draw, s, target).unwrap().outage as u64;
                for (k, r) in rules.iter().enumerate() {
                    other[k] += set.evaluate(*r, &draw, s, target).unwrap().outage as u64;
                }
            }
            for (k, r) in rules.iter().enumerate() {
                assert!(best <= other[k], "{t} {p} {r}: {best} > {}", other[k]);
            }
        }
    }

    #[test]
    fn one_bit_outage_implies_full_csi_check() {
        // Whenever the one-bit rule serves a pair, that pair clears the
        // destination threshold; so one-bit outage with a served pair means
        // the served source link failed, and full CSI is in outage only if
        // no pair clears both thresholds.
        let m = 3;
        let t = TopologyKind::Gateway(m);
        let set = ModeSet::new(t, ProtocolKind::OrthDf).unwrap();
        let s = snr(20.0);
        let target = 1.0;
        let alpha = s.gain_threshold(2.0 * target);
        let rates = LinkRates::default().resolve(t).unwrap();
        let f = TrialRngFactory::new(3);
        for trial in 0..50_000 {
            let draw = FadingDraw::sample(t, &rates, &mut f.trial(trial));
            let full = set.evaluate(SelectionRule::MaxEndToEndMI, &draw, s, target).unwrap();
            let one = set.evaluate(SelectionRule::OneBitThreshold(None), &draw, s, target).unwrap();
            let gamma_max = (1..=m)
                .map(|i| draw.gain(SourceRelay(i)).min(draw.gain(RelayDest(i))))
                .fold(0.0, f64::max);
            assert_eq!(full.outage, gamma_max < alpha);
            if !full.outage {
                let supporting = one.mode.is_some_and(|i| draw.gain(SourceRelay(i + 1)) >= alpha);
                assert_eq!(one.outage, !supporting);
            } else {
                assert!(one.outage);
            }
        }
    }

    proptest! {
        #[test]
        fn sequential_src_prefers_all_direct(seed in any::<u64>(), r in 0.05f64..1.9, db in 5.0f64..30.0) {
            let t = TopologyKind::SharedRelay(2);
            let set = ModeSet::new(t, ProtocolKind::Cf).unwrap();
            let rates = LinkRates::default().resolve(t).unwrap();
            let draw = FadingDraw::sample(t, &rates, &mut TrialRngFactory::new(seed).trial(0));
            let s = SnrPoint::from_db(db).unwrap();
            let target = RatePolicy::Multiplexing { r }.target_bits(s);
            let pick = set.select(SelectionRule::SequentialSrc, &draw, s, target).unwrap().unwrap();
            if !set.mode_outage(2, &draw, s, target).unwrap() {
                prop_assert_eq!(pick, 2);
            } else {
                prop_assert!(pick < 2);
            }
        }

        #[test]
        fn all_modes_out_is_contained_in_selected_out(seed in any::<u64>(), r in 0.05f64..1.9, db in 5.0f64..30.0) {
            let t = TopologyKind::SharedRelay(2);
            let set = ModeSet::new(t, ProtocolKind::Ddf).unwrap();
            let rates = LinkRates::default().resolve(t).unwrap();
            let draw = FadingDraw::sample(t, &rates, &mut TrialRngFactory::new(seed).trial(1));
            let s = SnrPoint::from_db(db).unwrap();
            let target = RatePolicy::Multiplexing { r }.target_bits(s);
            let all_out = (0..3).all(|i| set.mode_outage(i, &draw, s, target).unwrap());
            for rule in [SelectionRule::SequentialSrc, SelectionRule::MaxEndToEndMI, SelectionRule::FixedMode(1)] {
                let sel = set.evaluate(rule, &draw, s, target).unwrap();
                prop_assert!(!all_out || sel.outage);
            }
        }
    }
}
