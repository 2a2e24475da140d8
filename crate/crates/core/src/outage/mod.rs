//! Monte Carlo outage estimation.
//!
//! Every estimator keys trial `t` to ChaCha stream `t` of the run seed and
//! reduces integer counts, so results do not depend on the thread count.

pub mod analytic;
pub mod lemma4;
pub mod slope;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fading::{FadingDraw, LinkRates, RngState, SnrPoint, TrialRngFactory};
use crate::network::{ModeSet, ProtocolKind, RatePolicy, SelectionRule, TopologyKind};
use crate::{Error, Result};

pub use analytic::{analytic_outage, AnalyticFormula};
pub use lemma4::{lemma4_limit_check, Lemma4Case, Lemma4Params, Lemma4Point};
pub use slope::{fit_diversity, fit_power_law, SlopeFit};

/// Smallest trial count accepted by the unconditional estimators.
pub const MIN_TRIALS: u64 = 1_000;

/// Accepted-sample floor for rejection-sampled conditional estimates.
pub const CONDITIONAL_FLOOR: u64 = 10_000;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci95 {
    pub lo: f64,
    pub hi: f64,
}

impl Ci95 {
    /// Wilson score interval; with no events, `[0, 3/n]` (rule of three).
    pub fn wilson(events: u64, trials: u64) -> Ci95 {
        if trials == 0 {
            return Ci95 { lo: 0.0, hi: 1.0 };
        }
        let n = trials as f64;
        if events == 0 {
            return Ci95 { lo: 0.0, hi: (3.0 / n).min(1.0) };
        }
        let p = events as f64 / n;
        let z2 = Z95 * Z95;
        let den = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / den;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / den;
        Ci95 { lo: (center - half).max(0.0), hi: (center + half).min(1.0) }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }
}

/// Binomial standard deviation of an estimate of `p` from `trials` draws.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub p_hat: f64,
    pub events: u64,
    pub trials: u64,
    pub ci95: Ci95,
}

impl OutageEstimate {
    pub fn from_counts(events: u64, trials: u64) -> Self {
        let p_hat = if trials == 0 { 0.0 } else { events as f64 / trials as f64 };
        OutageEstimate { p_hat, events, trials, ci95: Ci95::wilson(events, trials) }
    }

    /// Whether `p` lies within `k` binomial standard deviations (taken at
    /// `p`) of the estimate.
    pub fn within_sigmas(&self, p: f64, k: f64) -> bool {
        (self.p_hat - p).abs() <= k * binomial_sigma(p, self.trials)
    }
}

/// Counts trials for which `event` holds, in parallel.
pub fn count_events<F>(seed: u64, range: std::ops::Range<u64>, event: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let factory = TrialRngFactory::new(seed);
    range.into_par_iter().map(|t| event(&mut factory.trial(t)) as u64).sum()
}

/// Estimates `P(event)` from `trials` independent draws.
pub fn estimate_event<F>(seed: u64, trials: u64, event: F) -> OutageEstimate
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    OutageEstimate::from_counts(count_events(seed, 0..trials, event), trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub p_hat: f64,
    pub events: u64,
    pub accepted: u64,
    pub trials_run: u64,
    pub ci95: Ci95,
}

impl ConditionalEstimate {
    pub fn as_outage(&self) -> OutageEstimate {
        OutageEstimate::from_counts(self.events, self.accepted)
    }
}

/// Rejection-sampled `P(event | condition)`.
///
/// `sample` returns `None` when the conditioning event fails and
/// `Some(outage)` otherwise. Starting from `trials`, the run doubles until
/// at least `floor` draws are accepted, up to `max_trials`.
pub fn estimate_conditional<F>(seed: u64, trials: u64, max_trials: u64, floor: u64, sample: F) -> Result<ConditionalEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Option<bool> + Sync,
{
    let factory = TrialRngFactory::new(seed);
    let mut done = 0u64;
    let mut target = trials.max(1);
    let (mut accepted, mut events) = (0u64, 0u64);
    loop {
        let (a, e) = (done..target)
            .into_par_iter()
            .map(|t| match sample(&mut factory.trial(t)) {
                None => (0u64, 0u64),
                Some(out) => (1, out as u64),
            })
            .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
        accepted += a;
        events += e;
        done = target;
        if accepted >= floor {
            break;
        }
        if done >= max_trials {
            return Err(Error::InsufficientData(format!(
                "{accepted} conditioned samples after {done} trials, need {floor}"
            )));
        }
        target = (done * 2).min(max_trials);
    }
    let p_hat = events as f64 / accepted as f64;
    Ok(ConditionalEstimate { p_hat, events, accepted, trials_run: done, ci95: Ci95::wilson(events, accepted) })
}

/// What is being simulated: topology, protocol, selection rule and link
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub topology: TopologyKind,
    pub protocol: ProtocolKind,
    pub rule: SelectionRule,
    pub rates: LinkRates,
}

impl Experiment {
    pub fn new(topology: TopologyKind, protocol: ProtocolKind, rule: SelectionRule) -> Self {
        Experiment { topology, protocol, rule, rates: LinkRates::default() }
    }

    /// A single point-to-point link: the relay-off mode of the on/off relay.
    pub fn direct_link() -> Self {
        Experiment::new(TopologyKind::OnOffRelay, ProtocolKind::OrthDf, SelectionRule::FixedMode(0))
    }

    pub fn descriptor(&self) -> String {
        format!("{} {} {}", self.topology, self.protocol, self.rule)
    }

    /// Validated simulation state for this experiment.
    pub fn prepare(&self) -> Result<Prepared> {
        let set = ModeSet::new(self.topology, self.protocol)?;
        set.check_rule(self.rule)?;
        let rates = self.rates.resolve(self.topology)?;
        Ok(Prepared { set, rule: self.rule, rates })
    }
}

/// An experiment whose mode set and rates have been resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub set: ModeSet,
    pub rule: SelectionRule,
    pub rates: Vec<f64>,
}

impl Prepared {
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> FadingDraw {
        FadingDraw::sample(self.set.topology(), &self.rates, rng)
    }

    /// Outage of the selected mode on one draw.
    pub fn outage(&self, draw: &FadingDraw, snr: SnrPoint, target_bits: f64) -> bool {
        self.set
            .evaluate(self.rule, draw, snr, target_bits)
            .expect("rule checked when prepared")
            .outage
    }
}

/// Outage probability of one experiment at one SNR.
pub fn estimate_outage(
    experiment: &Experiment,
    snr: SnrPoint,
    policy: RatePolicy,
    trials: u64,
    seed: u64,
) -> Result<OutageEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::Config(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    policy.validate(experiment.topology)?;
    let prepared = experiment.prepare()?;
    let target = policy.target_bits(snr);
    if target <= 0.0 {
        return Ok(OutageEstimate::from_counts(0, trials));
    }
    Ok(estimate_event(seed, trials, |rng| {
        let draw = prepared.draw(rng);
        prepared.outage(&draw, snr, target)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutagePoint {
    pub snr_db: f64,
    pub rho: f64,
    pub p_hat: f64,
    pub events: u64,
    pub trials: u64,
    pub ci95: Ci95,
}

impl OutagePoint {
    pub fn new(snr_db: f64, estimate: OutageEstimate) -> Self {
        OutagePoint {
            snr_db,
            rho: 10f64.powf(snr_db / 10.0),
            p_hat: estimate.p_hat,
            events: estimate.events,
            trials: estimate.trials,
            ci95: estimate.ci95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageCurve {
    pub descriptor: String,
    pub policy: RatePolicy,
    pub points: Vec<OutagePoint>,
}

/// Seed of grid point `index` within a sweep keyed by `seed`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    RngState::derive(seed, index as u64)
}

pub fn check_grid(snr_grid_db: &[f64]) -> Result<()> {
    if snr_grid_db.is_empty() {
        return Err(Error::Config("empty SNR grid".into()));
    }
    if snr_grid_db.iter().any(|x| !x.is_finite()) || snr_grid_db.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("SNR grid must be finite and strictly ascending".into()));
    }
    Ok(())
}

/// One outage estimate per grid point, each with its own derived seed.
pub fn sweep(
    experiment: &Experiment,
    snr_grid_db: &[f64],
    policy: RatePolicy,
    trials: u64,
    seed: u64,
) -> Result<OutageCurve> {
    check_grid(snr_grid_db)?;
    let points = snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &db)| {
            let est = estimate_outage(experiment, SnrPoint::from_db(db)?, policy, trials, point_seed(seed, i))?;
            Ok(OutagePoint::new(db, est))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OutageCurve { descriptor: experiment.descriptor(), policy, points })
}
