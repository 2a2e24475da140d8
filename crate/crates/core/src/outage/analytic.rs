//! Closed-form finite-SNR outage expressions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum AnalyticFormula {
    /// Point-to-point Rayleigh link at fixed rate: `1 - exp(-(2^R - 1)/rho)`.
    DirectLink { rho: f64, bits: f64 },
    /// Gateway channel, full CSI: `(1 - exp(-2 alpha))^M`.
    GatewayFullCsi { m: usize, rho: f64, r: f64 },
    /// Gateway channel, one-bit feedback with threshold `alpha`.
    GatewayOneBit { m: usize, lambda: f64, alpha: f64 },
    /// On/off DF relay: `P(X + Y < g2 | X < g1)` for unit exponentials.
    AppendixA { rho: f64, r: f64 },
    /// On/off AF relay with the harmonic-mean term replaced by an Exp(2)
    /// variable.
    AppendixB { rho: f64, r: f64 },
    /// High-SNR approximation for the 2-pair orthogonal AF interference
    /// relay channel.
    IrcOrthAf { rho: f64, r: f64 },
    /// High-SNR approximation for the 2-pair orthogonal DF interference
    /// relay channel.
    IrcOrthDf { rho: f64, r: f64 },
}

/// `(rho^{k r} - 1) / rho`.
pub fn threshold(rho: f64, r: f64, k: f64) -> f64 {
    (rho.powf(k * r) - 1.0) / rho
}

fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

impl AnalyticFormula {
    pub fn id(&self) -> &'static str {
        match self {
            AnalyticFormula::DirectLink { .. } => "direct-link",
            AnalyticFormula::GatewayFullCsi { .. } => "gateway-full-csi",
            AnalyticFormula::GatewayOneBit { .. } => "gateway-one-bit",
            AnalyticFormula::AppendixA { .. } => "appendix-a",
            AnalyticFormula::AppendixB { .. } => "appendix-b",
            AnalyticFormula::IrcOrthAf { .. } => "irc-orth-af",
            AnalyticFormula::IrcOrthDf { .. } => "irc-orth-df",
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("{}: {what}", self.id())));
        let (rho, r) = match *self {
            AnalyticFormula::DirectLink { rho, bits } => {
                if !(bits >= 0.0) {
                    return bad("rate must be >= 0");
                }
                (rho, 0.0)
            }
            AnalyticFormula::GatewayOneBit { m, lambda, alpha } => {
                if m == 0 || !(lambda > 0.0) || !(alpha >= 0.0) {
                    return bad("need M >= 1, lambda > 0, alpha >= 0");
                }
                return Ok(());
            }
            AnalyticFormula::GatewayFullCsi { m, rho, r } => {
                if m == 0 {
                    return bad("need M >= 1");
                }
                (rho, r)
            }
            AnalyticFormula::AppendixA { rho, r }
            | AnalyticFormula::AppendixB { rho, r }
            | AnalyticFormula::IrcOrthAf { rho, r }
            | AnalyticFormula::IrcOrthDf { rho, r } => {
                if !(r > 0.0) {
                    return bad("conditioning needs r > 0");
                }
                (rho, r)
            }
        };
        if !(rho > 0.0 && rho.is_finite()) || !(r >= 0.0) {
            return bad("need rho > 0 and r >= 0");
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<f64> {
        self.check()?;
        Ok(match *self {
            AnalyticFormula::DirectLink { rho, bits } => one_minus_exp_neg((2f64.powf(bits) - 1.0) / rho),
            AnalyticFormula::GatewayFullCsi { m, rho, r } => {
                one_minus_exp_neg(2.0 * threshold(rho, r, 2.0)).powi(m as i32)
            }
            AnalyticFormula::GatewayOneBit { m, lambda, alpha } => {
                let p = (-lambda * alpha).exp();
                let q = one_minus_exp_neg(lambda * alpha);
                (0..=m)
                    .map(|k| binomial(m, k) * p.powi(k as i32) * q.powi((m - k) as i32) * q.powi(k as i32))
                    .sum()
            }
            AnalyticFormula::AppendixA { rho, r } => {
                let g1 = threshold(rho, r, 1.0);
                let g2 = threshold(rho, r, 2.0);
                let den = one_minus_exp_neg(g1);
                (den - g1 * (-g2).exp()) / den
            }
            AnalyticFormula::AppendixB { rho, r } => {
                let g1 = threshold(rho, r, 1.0);
                let g2 = threshold(rho, r, 2.0);
                // e^{-2g2} - e^{-g1} - e^{-2g2+g1} + 1, rearranged for small g1.
                let num = one_minus_exp_neg(g1) - (-2.0 * g2).exp() * g1.exp_m1();
                num / one_minus_exp_neg(g1)
            }
            AnalyticFormula::IrcOrthAf { rho, r } => {
                let a = rho.powf(r - 1.0);
                let b = rho.powf(2.0 * r - 1.0);
                let da = one_minus_exp_neg(a);
                let inner = ((-2.0 * b).exp() - (-a).exp() - (-2.0 * b + a).exp() + 1.0) / da;
                (inner * da).powi(2)
            }
            AnalyticFormula::IrcOrthDf { rho, r } => {
                let a = rho.powf(r - 1.0);
                let b = rho.powf(2.0 * r - 1.0);
                let da = one_minus_exp_neg(a);
                let inner = one_minus_exp_neg(b) + (da - a * (-b).exp()) * (-b).exp() / da;
                (inner * da).powi(2)
            }
        })
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Evaluates a formula by name from a flat parameter map.
///
/// Gateway one-bit accepts either `alpha` or `rho` and `r` (threshold
/// `(rho^{2r} - 1)/rho`); `lambda` defaults to 1.
pub fn analytic_outage(id: &str, params: &BTreeMap<String, f64>) -> Result<f64> {
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .ok_or_else(|| Error::Config(format!("formula `{id}` needs parameter `{k}`")))
    };
    let count = |k: &str| -> Result<usize> {
        let v = get(k)?;
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("`{k}` must be a positive integer, got {v}")))
        }
    };
    let formula = match id {
        "direct-link" => AnalyticFormula::DirectLink { rho: get("rho")?, bits: get("bits")? },
        "gateway-full-csi" => AnalyticFormula::GatewayFullCsi { m: count("m")?, rho: get("rho")?, r: get("r")? },
        "gateway-one-bit" => {
            let alpha = match params.get("alpha") {
                Some(&a) => a,
                None => threshold(get("rho")?, get("r")?, 2.0),
            };
            AnalyticFormula::GatewayOneBit { m: count("m")?, lambda: params.get("lambda").copied().unwrap_or(1.0), alpha }
        }
        "appendix-a" => AnalyticFormula::AppendixA { rho: get("rho")?, r: get("r")? },
        "appendix-b" => AnalyticFormula::AppendixB { rho: get("rho")?, r: get("r")? },
        "irc-orth-af" => AnalyticFormula::IrcOrthAf { rho: get("rho")?, r: get("r")? },
        "irc-orth-df" => AnalyticFormula::IrcOrthDf { rho: get("rho")?, r: get("r")? },
        _ => return Err(Error::UnknownKey(format!("formula `{id}`"))),
    };
    formula.evaluate()
}
