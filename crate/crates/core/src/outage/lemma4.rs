//! Small-ball limits of sums and maxima of exponential variables.
//!
//! Each case compares `P(event < g) / g^k` against its claimed limit, with
//! `g = (rho^{2r} - 1)/rho`.

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{binomial_sigma, estimate_event};
use crate::fading::RngState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemma4Case {
    /// `P(u < g) / g -> lambda_u`.
    Res1,
    /// `P(max_i u_i < g) / g^n -> lambda_u^n`.
    Res2,
    /// `P(max_i u_i + v < g) / g^{n+1} -> lambda_v lambda_u^n / (n+1)`.
    Res3,
    /// `P(max_i u_i + f(v/eps, w/eps) eps < g) / g^{n+1} ->
    /// lambda_u^n (lambda_v + lambda_w) / 2` with `eps = 1/rho`.
    Result1,
}

impl std::str::FromStr for Lemma4Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "res1" => Lemma4Case::Res1,
            "res2" => Lemma4Case::Res2,
            "res3" => Lemma4Case::Res3,
            "result1" => Lemma4Case::Result1,
            _ => return Err(Error::UnknownKey(format!("lemma case `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Params {
    pub n: usize,
    pub r: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_w: f64,
}

impl Default for Lemma4Params {
    fn default() -> Self {
        Lemma4Params { n: 1, r: 0.3, lambda_u: 1.0, lambda_v: 1.0, lambda_w: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Point {
    pub rho: f64,
    pub p_hat: f64,
    pub events: u64,
    pub trials: u64,
    pub ratio: f64,
    /// Standard deviation of `ratio` from binomial noise.
    pub ratio_sigma: f64,
}

impl Lemma4Case {
    fn power(self, n: usize) -> i32 {
        match self {
            Lemma4Case::Res1 => 1,
            Lemma4Case::Res2 => n as i32,
            Lemma4Case::Res3 | Lemma4Case::Result1 => n as i32 + 1,
        }
    }

    fn limit(self, p: &Lemma4Params) -> f64 {
        let un = p.lambda_u.powi(p.n as i32);
        match self {
            Lemma4Case::Res1 => p.lambda_u,
            Lemma4Case::Res2 => un,
            Lemma4Case::Res3 => p.lambda_v * un / (p.n as f64 + 1.0),
            Lemma4Case::Result1 => un * (p.lambda_v + p.lambda_w) / 2.0,
        }
    }
}

/// Monte Carlo ratio of each probability to its claimed asymptote at every
/// SNR of `rho_grid` (linear).
pub fn lemma4_limit_check(
    case: Lemma4Case,
    rho_grid: &[f64],
    params: Lemma4Params,
    trials: u64,
    seed: u64,
) -> Result<Vec<Lemma4Point>> {
    if params.n == 0 || !(params.r > 0.0 && params.r < 0.5) {
        return Err(Error::Domain("need n >= 1 and 0 < r < 1/2".into()));
    }
    let exp = |l: f64| Exp::new(l).map_err(|_| Error::Domain(format!("rate must be positive, got {l}")));
    let (eu, ev, ew) = (exp(params.lambda_u)?, exp(params.lambda_v)?, exp(params.lambda_w)?);
    let n = params.n;
    rho_grid
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            if !(rho > 1.0) {
                return Err(Error::Domain(format!("rho must exceed 1, got {rho}")));
            }
            let g = (rho.powf(2.0 * params.r) - 1.0) / rho;
            let eps = 1.0 / rho;
            let est = estimate_event(RngState::derive(seed, i as u64), trials, |rng| {
                let max_u = match case {
                    Lemma4Case::Res1 => eu.sample(rng),
                    _ => (0..n).map(|_| eu.sample(rng)).fold(0.0, f64::max),
                };
                let extra = match case {
                    Lemma4Case::Res1 | Lemma4Case::Res2 => 0.0,
                    Lemma4Case::Res3 => ev.sample(rng),
                    Lemma4Case::Result1 => {
                        let v = ev.sample(rng);
                        let w = ew.sample(rng);
                        v * w / (v + w + eps)
                    }
                };
                max_u + extra < g
            });
            let scale = g.powi(case.power(n)) * case.limit(&params);
            Ok(Lemma4Point {
                rho,
                p_hat: est.p_hat,
                events: est.events,
                trials,
                ratio: est.p_hat / scale,
                ratio_sigma: binomial_sigma(est.p_hat.max(1.0 / trials as f64), trials) / scale,
            })
        })
        .collect()
}
