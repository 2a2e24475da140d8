use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Breakpoint, DmtCurve, Form};
use crate::network::TopologyKind;
use crate::{Error, Result};

/// Protocol or bound a catalog curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Genie,
    OrthAf,
    OrthDf,
    /// Orthogonal relaying that may also pick unassisted modes.
    OrthOffModes,
    /// X-relay orthogonal relaying restricted to four modes.
    OrthFourMode,
    Naf,
    Ddf,
    /// DDF with selection on source-destination gains.
    DdfDirectLink,
    Cf,
    CfDirectLink,
    HybridNaf,
    HybridDdf,
    HybridCf,
    /// Conditional DMT of the last relayed mode of the shared relay
    /// channel given the other two are in outage.
    CondNaf,
    CondDdf,
    CondCf,
    NoCsi,
    FullCsi,
    OneBit,
    /// Multiple-access half of a non-opportunistic gateway.
    MacInfo,
    /// Broadcast half of a non-opportunistic gateway.
    BcInfo,
}

const VARIANT_NAMES: &[(Variant, &str)] = &[
    (Variant::Genie, "genie"),
    (Variant::OrthAf, "orth-af"),
    (Variant::OrthDf, "orth-df"),
    (Variant::OrthOffModes, "orth-off-modes"),
    (Variant::OrthFourMode, "orth-four-mode"),
    (Variant::Naf, "naf"),
    (Variant::Ddf, "ddf"),
    (Variant::DdfDirectLink, "ddf-direct-link"),
    (Variant::Cf, "cf"),
    (Variant::CfDirectLink, "cf-direct-link"),
    (Variant::HybridNaf, "hybrid-naf"),
    (Variant::HybridDdf, "hybrid-ddf"),
    (Variant::HybridCf, "hybrid-cf"),
    (Variant::CondNaf, "cond-naf"),
    (Variant::CondDdf, "cond-ddf"),
    (Variant::CondCf, "cond-cf"),
    (Variant::NoCsi, "no-csi"),
    (Variant::FullCsi, "full-csi"),
    (Variant::OneBit, "one-bit"),
    (Variant::MacInfo, "mac-info"),
    (Variant::BcInfo, "bc-info"),
];

impl Variant {
    pub fn name(self) -> &'static str {
        VARIANT_NAMES.iter().find(|(v, _)| *v == self).expect("every variant is named").1
    }

    fn is_conditional(self) -> bool {
        matches!(self, Variant::CondNaf | Variant::CondDdf | Variant::CondCf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        VARIANT_NAMES
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(v, _)| *v)
            .ok_or_else(|| Error::UnknownKey(format!("curve variant `{s}`")))
    }
}

/// Catalog key, written `topology/variant`, e.g. `src:2/ddf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CurveKey {
    pub topology: TopologyKind,
    pub variant: Variant,
}

impl CurveKey {
    pub fn new(topology: TopologyKind, variant: Variant) -> Self {
        CurveKey { topology, variant }
    }

    /// The genie bound for the same topology.
    pub fn genie(&self) -> CurveKey {
        CurveKey::new(self.topology, Variant::Genie)
    }
}

impl fmt::Display for CurveKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.topology, self.variant)
    }
}

impl FromStr for CurveKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (t, v) = s
            .split_once('/')
            .ok_or_else(|| Error::UnknownKey(format!("curve key `{s}` (expected topology/variant)")))?;
        let topology: TopologyKind = t.parse().map_err(|_| Error::UnknownKey(format!("curve key `{s}`")))?;
        Ok(CurveKey::new(topology, v.parse()?))
    }
}

impl TryFrom<String> for CurveKey {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CurveKey> for String {
    fn from(k: CurveKey) -> String {
        k.to_string()
    }
}

/// Catalog entry metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CurveInfo {
    pub key: CurveKey,
    /// Intermediate curve that does not describe an opportunistic scheme.
    pub informational: bool,
    /// Whether the curve is expected to sit under the topology's genie bound.
    pub genie_bounded: bool,
}

fn half() -> Breakpoint {
    Breakpoint::rational(1, 2)
}

fn int(v: usize) -> Breakpoint {
    Breakpoint::int(v as i64)
}

/// `k (1-r)` until `n/(n+1)`, then `n (1-r)/r`.
fn ddf_direct_link(n: usize) -> DmtCurve {
    let nf = n as f64;
    DmtCurve::piecewise(vec![
        (Breakpoint::rational(n as i64, n as i64 + 1), Form::ramp(nf + 1.0, 1.0)),
        (Breakpoint::ONE, Form::ratio(nf)),
    ])
}

fn src2(variant: Variant) -> Option<DmtCurve> {
    let two = int(2);
    let tail = Form::ramp(1.0, 2.0);
    let s2 = Breakpoint::Surd { a: 2, b: -1, c: 2 };
    let s5 = Breakpoint::Surd { a: 3, b: -1, c: 5 };
    Some(match variant {
        Variant::OrthAf | Variant::OrthDf => DmtCurve::ramps(&[(2.0, half()), (1.0, two)], two),
        Variant::Naf => DmtCurve::ramps(&[(2.0, half()), (1.0, two), (1.0, Breakpoint::ONE)], two),
        Variant::Ddf => DmtCurve::piecewise(vec![
            (
                half(),
                Form { c0: 1.5, c1: -0.5, c2: 0.0, c3: -0.5 } + Form::ramp(2.0, 1.0) + tail,
            ),
            (s2, Form::ratio(2.0)),
            (Breakpoint::ONE, Form::ratio(1.0) + tail),
            (two, tail),
        ]),
        Variant::Cf | Variant::HybridCf => {
            DmtCurve::piecewise(vec![(Breakpoint::rational(6, 7), Form::ramp(4.0, 1.0)), (two, tail)])
        }
        Variant::HybridNaf => DmtCurve::piecewise(vec![
            (half(), Form::ramp(2.0, 1.0) + Form::ramp(2.0, 0.5)),
            (Breakpoint::rational(2, 3), Form::ramp(2.0, 1.0)),
            (two, tail),
        ]),
        Variant::HybridDdf => DmtCurve::piecewise(vec![
            (half(), Form::ramp(4.0, 1.0)),
            (s5, Form::ratio(2.0)),
            (two, tail),
        ]),
        Variant::CondNaf => DmtCurve::ramps(&[(1.0, half())], two),
        Variant::CondDdf => DmtCurve::piecewise(vec![
            (half(), Form { c0: 1.5, c1: -0.5, c2: 0.0, c3: -0.5 }),
            (s2, Form { c0: -2.0, c1: 0.5, c2: 1.0, c3: 0.0 }),
        ])
        .padded(two),
        Variant::CondCf => DmtCurve::ramps(&[(1.0, Breakpoint::rational(2, 3))], two),
        _ => return None,
    })
}

fn build(key: CurveKey) -> Option<DmtCurve> {
    use TopologyKind as T;
    use Variant as V;
    let one = Breakpoint::ONE;
    let line = |k: f64| DmtCurve::ramps(&[(k, one)], one);
    let two_slope = |a: f64, b: f64| DmtCurve::ramps(&[(a, one), (b, half())], one);
    Some(match (key.topology, key.variant) {
        (T::OnOffRelay, V::OrthAf | V::OrthDf) => two_slope(1.0, 1.0),
        (T::OnOffRelay, V::Genie) => line(2.0),

        (T::InterferenceRelay(n), v) => {
            let nf = n as f64;
            match v {
                V::Genie | V::Cf => line(2.0 * nf),
                V::OrthAf | V::OrthDf | V::Naf => two_slope(nf, nf),
                V::Ddf => DmtCurve::piecewise(vec![(half(), Form::ramp(2.0 * nf, 1.0)), (one, Form::ratio(nf))]),
                V::DdfDirectLink => ddf_direct_link(n),
                _ => return None,
            }
        }

        (T::SharedRelay(n), V::Genie) => {
            DmtCurve::ramps(&[(1.0, int(n)), (2.0 * n as f64 - 1.0, one)], int(n))
        }
        (T::SharedRelay(2), v) => return src2(v),

        (T::Marc(n) | T::Brc(n), v) => {
            let nf = n as f64;
            match v {
                V::Genie | V::Cf | V::CfDirectLink => line(nf + 1.0),
                V::OrthAf | V::OrthDf => DmtCurve::ramps(&[(nf + 1.0, half())], one),
                V::OrthOffModes => DmtCurve::ramps(&[(nf, one), (1.0, int(2))], int(2)),
                V::Naf => two_slope(nf, 1.0),
                V::Ddf | V::DdfDirectLink => ddf_direct_link(n),
                _ => return None,
            }
        }

        (T::XRelay, v) => match v {
            V::Genie | V::Cf => line(6.0),
            V::OrthAf | V::OrthDf | V::Naf => two_slope(4.0, 2.0),
            V::OrthFourMode => two_slope(2.0, 4.0),
            V::Ddf => DmtCurve::piecewise(vec![
                (half(), Form::ramp(6.0, 1.0)),
                (one, Form::ratio(2.0) + Form::ramp(2.0, 1.0)),
            ]),
            _ => return None,
        },

        (T::Gateway(m), v) => {
            let mf = m as f64;
            match v {
                V::NoCsi => DmtCurve::ramps(&[(1.0, half())], one),
                V::FullCsi | V::OneBit | V::Genie => DmtCurve::ramps(&[(mf, half())], one),
                V::MacInfo => DmtCurve::piecewise(vec![
                    (Breakpoint::rational(m as i64, m as i64 + 1), Form::ramp(1.0, mf)),
                    (one, Form::ramp(mf, 1.0)),
                ]),
                V::BcInfo => line(1.0),
                _ => return None,
            }
        }
        _ => return None,
    })
}

/// Closed-form DMT curve for `key`.
pub fn dmt_curve(key: CurveKey) -> Result<DmtCurve> {
    key.topology.validate().map_err(|_| Error::UnknownKey(format!("curve `{key}`")))?;
    build(key).ok_or_else(|| Error::UnknownKey(format!("curve `{key}` is not in the catalog")))
}

/// Every catalog entry for node counts `1..=max_n`.
pub fn catalog_keys(max_n: usize) -> Vec<CurveInfo> {
    let mut topologies = vec![TopologyKind::OnOffRelay, TopologyKind::XRelay];
    for n in 1..=max_n {
        topologies.extend([
            TopologyKind::InterferenceRelay(n),
            TopologyKind::SharedRelay(n),
            TopologyKind::Marc(n),
            TopologyKind::Brc(n),
            TopologyKind::Gateway(n),
        ]);
    }
    let mut out = Vec::new();
    for t in topologies {
        for &(v, _) in VARIANT_NAMES {
            let key = CurveKey::new(t, v);
            if dmt_curve(key).is_ok() {
                let informational = matches!(v, Variant::MacInfo | Variant::BcInfo);
                out.push(CurveInfo { key, informational, genie_bounded: !informational && !v.is_conditional() });
            }
        }
    }
    out.sort_by_key(|i| i.key);
    out
}
