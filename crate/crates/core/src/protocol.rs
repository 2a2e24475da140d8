//! Instantaneous mutual information of the relaying protocols.
//!
//! Everything here is in bits/s/Hz (base-2 logs). NAF has no finite-SNR
//! expression in this crate; it is analyzed in exponent space only, so the
//! only NAF item here is its selection metric.

use serde::{Deserialize, Serialize};

use crate::fading::SnrPoint;
use crate::{Error, Result};

/// Fraction of the interval during which the relay listens.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TimeSplit(f64);

impl TimeSplit {
    pub fn new(t: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&t) {
            Ok(TimeSplit(t))
        } else {
            Err(Error::Domain(format!("time split must lie in [0, 1], got {t}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MiKind {
    Direct,
    OrthAf,
    OrthDf,
    Ddf,
    Cf,
    GatewayDf,
}

/// Which cutset of the CF bound is smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cutset {
    Broadcast,
    MultipleAccess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Diagnostic {
    /// Realized DDF listening fraction.
    ListenFraction(f64),
    /// Binding CF cutset (broadcast wins ties).
    Binding(Cutset),
    /// Whether the orthogonal DF relay decoded.
    RelayDecoded(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiResult {
    pub bits: f64,
    pub kind: MiKind,
    pub diagnostic: Option<Diagnostic>,
}

impl MiResult {
    fn plain(bits: f64, kind: MiKind) -> Self {
        MiResult { bits: bits.max(0.0), kind, diagnostic: None }
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// `xy / (x + y + 1)`, the end-to-end SNR of an amplify-forward hop pair.
pub fn relay_combine(x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    x * y / (x + y + 1.0)
}

pub fn mi_direct(g_sd: f64, snr: SnrPoint, half_interval: bool) -> MiResult {
    let full = log2_1p(g_sd * snr.rho());
    MiResult::plain(if half_interval { 0.5 * full } else { full }, MiKind::Direct)
}

pub fn mi_orth_af(g_sd: f64, g_sr: f64, g_rd: f64, snr: SnrPoint) -> MiResult {
    let rho = snr.rho();
    let snr_eff = g_sd * rho + relay_combine(g_sr * rho, g_rd * rho);
    MiResult::plain(0.5 * log2_1p(snr_eff), MiKind::OrthAf)
}

/// Orthogonal DF: the relay forwards only if its link decodes rate
/// `target_bits` in half the interval, otherwise the source repeats.
pub fn mi_orth_df(g_sd: f64, g_sr: f64, g_rd: f64, snr: SnrPoint, target_bits: f64) -> MiResult {
    let decoded = g_sr >= snr.gain_threshold(2.0 * target_bits);
    let u = if decoded { g_sd + g_rd } else { 2.0 * g_sd };
    MiResult {
        bits: 0.5 * log2_1p(snr.rho() * u),
        kind: MiKind::OrthDf,
        diagnostic: Some(Diagnostic::RelayDecoded(decoded)),
    }
}

/// Time the DDF relay needs to decode `target_bits`, capped at the whole
/// interval.
pub fn ddf_listen_fraction(g_sr: f64, snr: SnrPoint, target_bits: f64) -> TimeSplit {
    let capacity = log2_1p(g_sr * snr.rho());
    if capacity <= 0.0 {
        return TimeSplit(1.0);
    }
    TimeSplit((target_bits.max(0.0) / capacity).min(1.0))
}

pub fn mi_ddf(g_sd: f64, g_sr: f64, g_rd: f64, snr: SnrPoint, target_bits: f64) -> MiResult {
    let t = ddf_listen_fraction(g_sr, snr, target_bits).value();
    let rho = snr.rho();
    let bits = t * log2_1p(g_sd * rho) + (1.0 - t) * log2_1p((g_sd + g_rd) * rho);
    MiResult { bits: bits.max(0.0), kind: MiKind::Ddf, diagnostic: Some(Diagnostic::ListenFraction(t)) }
}

/// Cutset bounds of CF. Here `1 - t` weights the phase in which the relay
/// listens, so `t` is the relay's transmit share.
pub fn mi_cf_cutsets(g_sd: f64, g_sr: f64, g_rd: f64, snr: SnrPoint, t: TimeSplit) -> MiResult {
    let (bc, mac) = cf_cutset_pair(g_sd, g_sr, g_rd, snr, t);
    let (bits, binding) = if bc <= mac { (bc, Cutset::Broadcast) } else { (mac, Cutset::MultipleAccess) };
    MiResult { bits: bits.max(0.0), kind: MiKind::Cf, diagnostic: Some(Diagnostic::Binding(binding)) }
}

/// `(I_BC, I_MAC)` for CF.
pub fn cf_cutset_pair(g_sd: f64, g_sr: f64, g_rd: f64, snr: SnrPoint, t: TimeSplit) -> (f64, f64) {
    let rho = snr.rho();
    let t = t.value();
    let direct = log2_1p(g_sd * rho);
    let bc = (1.0 - t) * log2_1p((g_sd + g_sr) * rho) + t * direct;
    let mac = (1.0 - t) * direct + t * log2_1p((g_sd + g_rd) * rho);
    (bc, mac)
}

/// High-SNR NAF user-selection metric `g_ii^2 g_ir / (g_ri + g_ir)`.
pub fn naf_selection_metric(g_ii: f64, g_ir: f64, g_ri: f64) -> f64 {
    let den = g_ri + g_ir;
    if den <= 0.0 {
        return 0.0;
    }
    g_ii * g_ii * g_ir / den
}

/// High-SNR CF user-selection metric.
pub fn cf_selection_metric(g_sr: f64, g_sd: f64, g_rd: f64) -> f64 {
    let a = g_sr + g_sd;
    let b = g_rd + g_sd;
    if a + b <= 0.0 {
        return 0.0;
    }
    a * b * g_sd / (a + b)
}

/// Two-hop DF through the relay, limited by the weaker hop.
pub fn mi_gateway_df(g_sr: f64, g_rd: f64, snr: SnrPoint) -> MiResult {
    MiResult::plain(0.5 * log2_1p(snr.rho() * g_sr.min(g_rd)), MiKind::GatewayDf)
}
