//! Quasi-static Rayleigh fading realizations.
//!
//! Link power gains `|h|^2` are drawn directly as exponential variables.
//! Randomness is counter based: a run is keyed by a 64-bit seed and trial
//! `t` of that run reads ChaCha stream `t`, so any trial can be replayed
//! without touching the others and parallel schedules give identical
//! results.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::network::TopologyKind;
use crate::{Error, Result};

/// A wireless link. Node indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkId {
    SourceDest(usize, usize),
    SourceRelay(usize),
    RelayDest(usize),
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkId::SourceDest(i, j) => write!(f, "h_{i}{j}"),
            LinkId::SourceRelay(i) => write!(f, "h_{i}r"),
            LinkId::RelayDest(j) => write!(f, "h_r{j}"),
        }
    }
}

/// Linear transmit SNR.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SnrPoint {
    rho: f64,
}

impl SnrPoint {
    pub fn new(rho: f64) -> Result<Self> {
        if rho.is_finite() && rho > 0.0 {
            Ok(SnrPoint { rho })
        } else {
            Err(Error::Domain(format!("SNR must be positive and finite, got {rho}")))
        }
    }

    pub fn from_db(db: f64) -> Result<Self> {
        SnrPoint::new(10f64.powf(db / 10.0))
    }

    pub fn rho(self) -> f64 {
        self.rho
    }

    pub fn db(self) -> f64 {
        10.0 * self.rho.log10()
    }

    /// Gain threshold `(2^bits - 1) / rho` below which a full-interval link
    /// cannot carry `bits` bits/s/Hz.
    pub fn gain_threshold(self, bits: f64) -> f64 {
        (2f64.powf(bits) - 1.0) / self.rho
    }
}

/// Counter-based RNG position: a run seed plus a stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, stream: 0 }
    }

    /// State of trial `trial` within the run keyed by `seed`.
    pub fn for_trial(seed: u64, trial: u64) -> Self {
        RngState { seed, stream: trial }
    }

    /// Child run seed, e.g. one per SNR grid point of a sweep.
    pub fn derive(seed: u64, label: u64) -> u64 {
        splitmix64(seed ^ splitmix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn rng(self) -> ChaCha8Rng {
        TrialRngFactory::new(self.seed).trial(self.stream)
    }
}

/// Builds per-trial generators for one run without re-expanding the seed.
#[derive(Debug, Clone)]
pub struct TrialRngFactory {
    key: [u8; 32],
}

impl TrialRngFactory {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut x = seed;
        for chunk in key.chunks_exact_mut(8) {
            x = splitmix64(x);
            chunk.copy_from_slice(&x.to_le_bytes());
        }
        TrialRngFactory { key }
    }

    pub fn trial(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(trial);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Exponential rate parameter per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LinkRates {
    /// Every link shares one rate (1.0 gives the i.i.d. unit-mean model).
    Uniform(f64),
    /// Explicit per-link rates; every link of the topology must be listed.
    PerLink(BTreeMap<LinkId, f64>),
}

impl Default for LinkRates {
    fn default() -> Self {
        LinkRates::Uniform(1.0)
    }
}

impl LinkRates {
    /// Rates in the topology's canonical link order.
    pub fn resolve(&self, topology: TopologyKind) -> Result<Vec<f64>> {
        let check = |link: LinkId, rate: f64| {
            if rate.is_finite() && rate > 0.0 {
                Ok(rate)
            } else {
                Err(Error::Config(format!("rate for {link} must be positive, got {rate}")))
            }
        };
        topology
            .links()
            .into_iter()
            .map(|link| match self {
                LinkRates::Uniform(rate) => check(link, *rate),
                LinkRates::PerLink(map) => match map.get(&link) {
                    Some(rate) => check(link, *rate),
                    None => Err(Error::Config(format!("missing rate for link {link}"))),
                },
            })
            .collect()
    }
}

/// One realization of every link power gain of a topology.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingDraw {
    topology: TopologyKind,
    gains: Vec<f64>,
}

impl FadingDraw {
    /// Builds a draw from explicit gains, mostly for tests and traces.
    pub fn from_gains(
        topology: TopologyKind,
        gains: impl IntoIterator<Item = (LinkId, f64)>,
    ) -> Result<Self> {
        topology.validate()?;
        let mut slots = vec![None; topology.link_count()];
        for (link, gain) in gains {
            let idx = topology
                .link_index(link)
                .ok_or_else(|| Error::Config(format!("{link} is not a link of {topology}")))?;
            if !(gain >= 0.0) {
                return Err(Error::Config(format!("gain of {link} must be >= 0, got {gain}")));
            }
            slots[idx] = Some(gain);
        }
        let gains = slots
            .into_iter()
            .zip(topology.links())
            .map(|(g, link)| g.ok_or_else(|| Error::Config(format!("missing gain for {link}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(FadingDraw { topology, gains })
    }

    /// Draws every gain as an independent exponential with the given
    /// per-link rates (canonical link order, see [`LinkRates::resolve`]).
    pub fn sample<R: Rng + ?Sized>(topology: TopologyKind, rates: &[f64], rng: &mut R) -> Self {
        debug_assert_eq!(rates.len(), topology.link_count());
        let gains = rates
            .iter()
            .map(|&rate| {
                let e: f64 = Exp1.sample(rng);
                e / rate
            })
            .collect();
        FadingDraw { topology, gains }
    }

    pub fn topology(&self) -> TopologyKind {
        self.topology
    }

    /// Gain of `link`. Panics if the link is not part of the topology.
    pub fn gain(&self, link: LinkId) -> f64 {
        match self.get(link) {
            Some(g) => g,
            None => panic!("{link} is not a link of {}", self.topology),
        }
    }

    pub fn get(&self, link: LinkId) -> Option<f64> {
        self.topology.link_index(link).map(|i| self.gains[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (LinkId, f64)> + '_ {
        self.topology.links().into_iter().zip(self.gains.iter().copied())
    }
}

/// Draws one fading realization; a pure function of its arguments.
pub fn draw_fading(topology: TopologyKind, rates: &LinkRates, rng_state: RngState) -> Result<FadingDraw> {
    topology.validate()?;
    let rates = rates.resolve(topology)?;
    let mut rng = rng_state.rng();
    Ok(FadingDraw::sample(topology, &rates, &mut rng))
}

/// Exponential order `-ln(gain)/ln(rho)`; a zero gain has infinite order.
pub fn exponential_order(gain: f64, snr: SnrPoint) -> Result<f64> {
    if snr.rho() <= 1.0 {
        return Err(Error::Domain(format!(
            "exponential order needs rho > 1, got {}",
            snr.rho()
        )));
    }
    if gain < 0.0 || gain.is_nan() {
        return Err(Error::Domain(format!("gain must be nonnegative, got {gain}")));
    }
    if gain == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-gain.ln() / snr.rho().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    const N: u64 = 1_000_000;

    fn gains_of(topology: TopologyKind, link: LinkId, seed: u64) -> Vec<f64> {
        let rates = LinkRates::default().resolve(topology).unwrap();
        let factory = TrialRngFactory::new(seed);
        (0..N)
            .map(|t| FadingDraw::sample(topology, &rates, &mut factory.trial(t)).gain(link))
            .collect()
    }

    #[test]
    fn unit_rate_mean_at_seed_42() {
        let g = gains_of(TopologyKind::OnOffRelay, LinkId::SourceDest(1, 1), 42);
        let mean = g.iter().sum::<f64>() / N as f64;
        assert!((0.997..=1.003).contains(&mean), "mean {mean}");
        assert!(g.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn empirical_cdf_matches_exponential() {
        let g = gains_of(TopologyKind::OnOffRelay, LinkId::SourceRelay(1), 7);
        for x in [0.1, 0.5, 1.0, 2.0] {
            let p = 1.0 - f64::exp(-x);
            let sigma = (p * (1.0 - p) / N as f64).sqrt();
            let hat = g.iter().filter(|&&v| v < x).count() as f64 / N as f64;
            assert!(close(hat, p, 3.0 * sigma), "x={x} hat={hat} p={p}");
        }
    }

    #[test]
    fn links_of_one_draw_are_uncorrelated() {
        let topo = TopologyKind::OnOffRelay;
        let rates = LinkRates::default().resolve(topo).unwrap();
        let factory = TrialRngFactory::new(11);
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in 0..N {
            let d = FadingDraw::sample(topo, &rates, &mut factory.trial(t));
            let x = d.gain(LinkId::SourceDest(1, 1));
            let y = d.gain(LinkId::RelayDest(1));
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let n = N as f64;
        let cov = sxy / n - (sx / n) * (sy / n);
        let corr = cov / ((sxx / n - (sx / n).powi(2)).sqrt() * (syy / n - (sy / n).powi(2)).sqrt());
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn minimum_of_m_exponentials_has_rate_m() {
        let m = 4;
        let topo = TopologyKind::Gateway(m);
        let rates = LinkRates::default().resolve(topo).unwrap();
        let factory = TrialRngFactory::new(5);
        let mins: Vec<f64> = (0..N)
            .map(|t| {
                let d = FadingDraw::sample(topo, &rates, &mut factory.trial(t));
                (1..=m).map(|i| d.gain(LinkId::SourceRelay(i))).fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mean = mins.iter().sum::<f64>() / N as f64;
        // Exp(M) has standard deviation 1/M.
        let sigma = (1.0 / m as f64) / (N as f64).sqrt();
        assert!(close(mean, 1.0 / m as f64, 3.0 * sigma), "mean {mean}");
    }

    #[test]
    fn draw_is_deterministic() {
        let topo = TopologyKind::Marc(3);
        let a = draw_fading(topo, &LinkRates::default(), RngState::for_trial(9, 17)).unwrap();
        let b = draw_fading(topo, &LinkRates::default(), RngState::for_trial(9, 17)).unwrap();
        let c = draw_fading(topo, &LinkRates::default(), RngState::for_trial(9, 18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn per_link_rates_scale_the_mean() {
        let topo = TopologyKind::OnOffRelay;
        let mut map = BTreeMap::new();
        for link in topo.links() {
            map.insert(link, 1.0);
        }
        map.insert(LinkId::RelayDest(1), 4.0);
        let rates = LinkRates::PerLink(map).resolve(topo).unwrap();
        let factory = TrialRngFactory::new(3);
        let mean = (0..200_000u64)
            .map(|t| FadingDraw::sample(topo, &rates, &mut factory.trial(t)).gain(LinkId::RelayDest(1)))
            .sum::<f64>()
            / 200_000.0;
        assert!(close(mean, 0.25, 0.005), "mean {mean}");
    }

    #[test]
    fn missing_rate_is_a_configuration_error() {
        let mut map = BTreeMap::new();
        map.insert(LinkId::SourceDest(1, 1), 1.0);
        let err = draw_fading(TopologyKind::OnOffRelay, &LinkRates::PerLink(map), RngState::new(1));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn exponential_order_examples() {
        let order = |g, rho| exponential_order(g, SnrPoint::new(rho).unwrap()).unwrap();
        assert!(close(order(0.01, 100.0), 1.0, 1e-12));
        assert_eq!(order(1.0, 1e6), 0.0);
        assert!(close(order(100.0, 100.0), -1.0, 1e-12));
        assert_eq!(order(0.0, 10.0), f64::INFINITY);
        assert!(matches!(
            exponential_order(0.5, SnrPoint::new(1.0).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn from_gains_requires_every_link() {
        let err = FadingDraw::from_gains(TopologyKind::OnOffRelay, [(LinkId::SourceDest(1, 1), 1.0)]);
        assert!(err.is_err());
        let err = FadingDraw::from_gains(
            TopologyKind::OnOffRelay,
            [
                (LinkId::SourceDest(1, 1), 1.0),
                (LinkId::SourceRelay(1), -1.0),
                (LinkId::RelayDest(1), 1.0),
            ],
        );
        assert!(err.is_err());
    }
}
