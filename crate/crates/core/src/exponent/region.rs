//! Outage regions in exponential-order space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::expr::{c, one_minus, var, Expr, Pred};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    /// Lower end of the support.
    pub lo: f64,
    pub weight: f64,
    pub offset: f64,
}

impl Variable {
    fn plain(name: impl Into<String>) -> Self {
        Variable { name: name.into(), lo: 0.0, weight: 1.0, offset: 0.0 }
    }

    /// Direct-link order conditioned on that link alone failing rate
    /// `r/2`: support starts at `1 - r/2` and the density carries the
    /// matching offset.
    fn conditioned(name: impl Into<String>, r: f64) -> Self {
        Variable { name: name.into(), lo: 1.0 - r / 2.0, weight: 1.0, offset: r / 2.0 - 1.0 }
    }
}

/// Minimize `sum_i weight_i v_i + offset_i` over the points that satisfy
/// every constraint.
#[derive(Debug, Clone)]
pub struct OutageRegion {
    pub id: RegionId,
    pub r: f64,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Pred>,
}

impl OutageRegion {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.variables.iter().zip(x).map(|(v, &xi)| v.weight * xi + v.offset).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.variables.len()
            && self.variables.iter().zip(x).all(|(v, &xi)| xi >= v.lo - 1e-12)
            && self.constraints.iter().all(|p| p.holds(x))
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionId {
    /// One relayed NAF mode with the amplification rank at half the block.
    NafMode,
    /// One relayed DDF mode.
    DdfMode,
    SrcNafCond,
    SrcDdfCond,
    /// Union of the broadcast and multiple-access cutset regions at time
    /// split `t`.
    SrcCfCond,
    MarcJoint,
    XRelayJoint,
}

const REGION_NAMES: &[(RegionId, &str)] = &[
    (RegionId::NafMode, "naf-mode"),
    (RegionId::DdfMode, "ddf-mode"),
    (RegionId::SrcNafCond, "src-naf-cond"),
    (RegionId::SrcDdfCond, "src-ddf-cond"),
    (RegionId::SrcCfCond, "src-cf-cond"),
    (RegionId::MarcJoint, "marc-joint"),
    (RegionId::XRelayJoint, "x-relay-joint"),
];

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(REGION_NAMES.iter().find(|(id, _)| id == self).expect("named").1)
    }
}

impl FromStr for RegionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        REGION_NAMES
            .iter()
            .find(|(_, n)| *n == s)
            .map(|(id, _)| *id)
            .ok_or_else(|| Error::UnknownKey(format!("region `{s}`")))
    }
}

/// How long a DDF relay listens before it starts forwarding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Listen {
    /// Fixed fraction in `[r, 1]`.
    Fixed(f64),
    /// Until it can decode: `r / max(1 - u, r)` for source-relay order `u`.
    UntilDecoded,
}

/// Relaying protocol of each mode in a joint region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeProtocol {
    Naf,
    Ddf(Listen),
    /// Compress-forward with relay time split `t`.
    Cf(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    /// Number of sources for the MARC.
    pub n: usize,
    /// Mode protocol for the single-mode and joint regions.
    pub protocol: ModeProtocol,
    /// Time split for the CF cutset regions.
    pub t: Option<f64>,
    /// Keep the conditioned support and offset on the direct link of the
    /// shared relay conditional regions.
    pub support_shift: bool,
}

impl Default for RegionParams {
    fn default() -> Self {
        RegionParams { n: 2, protocol: ModeProtocol::Naf, t: None, support_shift: true }
    }
}

impl RegionParams {
    pub fn with_protocol(protocol: ModeProtocol) -> Self {
        RegionParams { protocol, ..Default::default() }
    }
}

/// NAF mode outage with `m = l/2`.
fn naf(v1: Expr, v2: Expr, u: Expr, r: f64) -> Pred {
    Pred::le(one_minus(v1).max(0.5 * one_minus(v2 + u)).pos(), c(r))
}

/// DDF mode outage: `t(1-v1)^+ + (1-t)(1-min(v1,v2))^+ <= r`.
fn ddf(v1: usize, v2: usize, u: usize, listen: Listen, r: f64) -> Pred {
    let t = match listen {
        Listen::Fixed(t) => c(t),
        Listen::UntilDecoded => c(r).div(one_minus(var(u)).max(c(r))),
    };
    let lhs = t.clone() * one_minus(var(v1)).pos() + one_minus(t) * one_minus(var(v1).min(var(v2))).pos();
    Pred::le(lhs, c(r))
}

/// CF mode outage: either cutset falls short.
fn cf(v1: usize, rd: usize, sr: usize, t: f64, r: f64) -> Pred {
    let bc = (1.0 - t) * one_minus(var(v1).min(var(sr))).pos() + t * one_minus(var(v1)).pos();
    let mac = (1.0 - t) * one_minus(var(v1)).pos() + t * one_minus(var(v1).min(var(rd))).pos();
    Pred::Any(vec![Pred::le(bc, c(r)), Pred::le(mac, c(r))])
}

fn mode(protocol: ModeProtocol, v1: usize, rd: usize, sr: usize, r: f64) -> Pred {
    match protocol {
        ModeProtocol::Naf => naf(var(v1), var(rd), var(sr), r),
        ModeProtocol::Ddf(listen) => ddf(v1, rd, sr, listen, r),
        ModeProtocol::Cf(t) => cf(v1, rd, sr, t, r),
    }
}

fn check_t(t: f64, lo: f64, what: &str) -> Result<f64> {
    if t >= lo && t <= 1.0 && t > 0.0 {
        Ok(t)
    } else {
        Err(Error::Domain(format!("{what}: time split {t} outside its range")))
    }
}

/// Instantiates region `id` at multiplexing gain `r`.
pub fn build_region(id: RegionId, r: f64, params: &RegionParams) -> Result<OutageRegion> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("{id}: r = {r} outside [0, 1]")));
    }
    if let ModeProtocol::Ddf(Listen::Fixed(t)) = params.protocol {
        check_t(t, r, "DDF listening fraction")?;
    }
    if let ModeProtocol::Cf(t) = params.protocol {
        check_t(t, 0.0, "CF")?;
    }
    let direct = |r: f64| {
        if params.support_shift {
            Variable::conditioned("v1", r)
        } else {
            Variable::plain("v1")
        }
    };
    let (variables, constraints) = match id {
        RegionId::NafMode | RegionId::DdfMode => {
            let protocol = match id {
                RegionId::NafMode => ModeProtocol::Naf,
                _ => match params.protocol {
                    p @ ModeProtocol::Ddf(_) => p,
                    _ => ModeProtocol::Ddf(Listen::UntilDecoded),
                },
            };
            let vars = vec![Variable::plain("v1"), Variable::plain("v2"), Variable::plain("u")];
            (vars, vec![mode(protocol, 0, 1, 2, r)])
        }
        RegionId::SrcNafCond => {
            let vars = vec![direct(r), Variable::plain("v2"), Variable::plain("v3")];
            (vars, vec![naf(var(0), var(1), var(2), r)])
        }
        RegionId::SrcDdfCond => {
            let listen = match params.protocol {
                ModeProtocol::Ddf(l) => l,
                _ => Listen::UntilDecoded,
            };
            let vars = vec![direct(r), Variable::plain("v2"), Variable::plain("v3")];
            (vars, vec![ddf(0, 1, 2, listen, r)])
        }
        RegionId::SrcCfCond => {
            let t = params
                .t
                .ok_or_else(|| Error::Config("src-cf-cond needs a time split `t`".into()))?;
            let t = check_t(t, 0.0, "CF")?;
            if t >= 1.0 {
                return Err(Error::Domain("CF time split must be below 1".into()));
            }
            let vars = vec![direct(r), Variable::plain("v2"), Variable::plain("v3")];
            // Broadcast cutset over (v1, v3), multiple-access over (v1, v2).
            let bc = (1.0 - t) * one_minus(var(0)).pos() + t * one_minus(var(0).min(var(2))).pos();
            let mac = t * one_minus(var(0)).pos() + (1.0 - t) * one_minus(var(0).min(var(1))).pos();
            (vars, vec![Pred::Any(vec![Pred::le(bc, c(r)), Pred::le(mac, c(r))])])
        }
        RegionId::MarcJoint => {
            let n = params.n;
            if n == 0 {
                return Err(Error::Domain("marc-joint needs n >= 1".into()));
            }
            let mut vars = Vec::with_capacity(2 * n + 1);
            for j in 1..=n {
                vars.push(Variable::plain(format!("v1({j})")));
                vars.push(Variable::plain(format!("u({j})")));
            }
            vars.push(Variable::plain("v2"));
            let shared = 2 * n;
            let cons = (0..n).map(|j| mode(params.protocol, 2 * j, shared, 2 * j + 1, r)).collect();
            (vars, cons)
        }
        RegionId::XRelayJoint => {
            let mut vars = Vec::with_capacity(8);
            for i in 1..=2 {
                for j in 1..=2 {
                    vars.push(Variable::plain(format!("v1({i}{j})")));
                }
            }
            vars.push(Variable::plain("v2(r1)"));
            vars.push(Variable::plain("v2(r2)"));
            vars.push(Variable::plain("u(1r)"));
            vars.push(Variable::plain("u(2r)"));
            let direct = |i: usize, j: usize| 2 * (i - 1) + (j - 1);
            let rd = |j: usize| 3 + j;
            let sr = |i: usize| 5 + i;
            let cons = [(1, 1), (2, 2), (1, 2), (2, 1)]
                .into_iter()
                .map(|(i, j)| mode(params.protocol, direct(i, j), rd(j), sr(i), r))
                .collect();
            (vars, cons)
        }
    };
    Ok(OutageRegion { id, r, variables, constraints })
}
