//! Composition of per-mode tradeoffs and the Monte Carlo checks behind it.
//!
//! With modes ordered `1..k`, the opportunistic outage probability is the
//! product of `P(mode i out | modes before it out)`, so the diversity is the
//! sum of the conditional diversities. When modes are independent the
//! conditional curves are the plain per-mode curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmt::{dmt_curve, Breakpoint, CurveKey, DmtCurve, Form, Variant};
use crate::fading::{SnrPoint, TrialRngFactory};
use crate::network::{RatePolicy, TopologyKind};
use crate::outage::{
    check_grid, estimate_conditional, fit_diversity, point_seed, Ci95, Experiment, OutageCurve, OutageEstimate,
    OutagePoint, SlopeFit, CONDITIONAL_FLOOR, MIN_TRIALS,
};
use crate::{Error, Result};

/// Pointwise sum of conditional curves over a common range.
pub fn compose_upper_bound(curves: &[DmtCurve]) -> Result<DmtCurve> {
    let (first, rest) = curves
        .split_first()
        .ok_or_else(|| Error::Domain("nothing to compose".into()))?;
    rest.iter().try_fold(first.clone(), |acc, c| acc.add(c))
}

/// Protocol whose shared relay decomposition is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrcProtocol {
    Genie,
    Naf,
    Ddf,
    Cf,
}

/// Per-mode curves of the 2-pair shared relay channel in the order
/// non-relayed, first relayed, second relayed, all on `[0, 2]`.
///
/// With `conditional` the last curve is the diversity of that mode given
/// the first two are out; otherwise it is the mode's own tradeoff.
pub fn src_components(protocol: SrcProtocol, conditional: bool) -> Result<[DmtCurve; 3]> {
    let two = Breakpoint::int(2);
    let one = Breakpoint::ONE;
    let half = Breakpoint::rational(1, 2);
    let ramps = |terms: &[(f64, Breakpoint)]| DmtCurve::ramps(terms, one).padded(two);
    let non_relayed = DmtCurve::ramps(&[(1.0, two)], two);
    let ddf_single = |k: f64| {
        DmtCurve::piecewise(vec![(half, Form::ramp(k, 1.0)), (one, Form::ratio(k / 2.0))]).padded(two)
    };
    let src = |v: Variant| dmt_curve(CurveKey::new(TopologyKind::SharedRelay(2), v));
    let (second, own, cond) = match protocol {
        SrcProtocol::Genie => {
            let own = ramps(&[(1.0, one)]);
            (ramps(&[(2.0, one)]), own.clone(), own)
        }
        SrcProtocol::Naf => {
            let naf = ramps(&[(1.0, one), (1.0, half)]);
            (naf.clone(), naf, src(Variant::CondNaf)?)
        }
        SrcProtocol::Ddf => (ddf_single(2.0), ddf_single(2.0), src(Variant::CondDdf)?),
        SrcProtocol::Cf => (ramps(&[(2.0, one)]), ramps(&[(2.0, one)]), src(Variant::CondCf)?),
    };
    Ok([non_relayed, second, if conditional { cond } else { own }])
}

/// `P(target out | every mode in given is out)` for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalOutageSpec {
    pub experiment: Experiment,
    pub target: usize,
    pub given: Vec<usize>,
}

impl ConditionalOutageSpec {
    pub fn new(experiment: Experiment, target: usize, given: Vec<usize>) -> Result<Self> {
        let spec = ConditionalOutageSpec { experiment, target, given };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let modes = self.experiment.prepare()?.set.modes().len();
        let mut seen = vec![false; modes];
        for &i in self.given.iter().chain(std::iter::once(&self.target)) {
            if i >= modes {
                return Err(Error::Config(format!("mode {i} out of range ({modes} modes)")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("mode {i} listed twice in a conditional spec")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSlope {
    pub r: f64,
    pub points: Vec<OutagePoint>,
    /// Draws run per point, including rejected ones.
    pub trials_run: Vec<u64>,
    pub fit: SlopeFit,
}

/// Slope of a conditional outage probability over an SNR grid.
///
/// Each point starts at `trials` draws and doubles up to `max_trials`
/// until [`CONDITIONAL_FLOOR`] draws satisfy the conditioning event.
pub fn estimate_conditional_slope(
    spec: &ConditionalOutageSpec,
    snr_grid_db: &[f64],
    r: f64,
    trials: u64,
    max_trials: u64,
    seed: u64,
) -> Result<ConditionalSlope> {
    spec.validate()?;
    check_grid(snr_grid_db)?;
    let policy = RatePolicy::Multiplexing { r };
    policy.validate(spec.experiment.topology)?;
    let prepared = spec.experiment.prepare()?;
    let mut points = Vec::with_capacity(snr_grid_db.len());
    let mut trials_run = Vec::with_capacity(snr_grid_db.len());
    for (i, &db) in snr_grid_db.iter().enumerate() {
        let snr = SnrPoint::from_db(db)?;
        let target = policy.target_bits(snr);
        let est = estimate_conditional(point_seed(seed, i), trials, max_trials, CONDITIONAL_FLOOR, |rng| {
            let draw = prepared.draw(rng);
            let out = |m: usize| prepared.set.mode_outage(m, &draw, snr, target).expect("mode index validated");
            if spec.given.iter().all(|&m| out(m)) {
                Some(out(spec.target))
            } else {
                None
            }
        })?;
        points.push(OutagePoint::new(db, est.as_outage()));
        trials_run.push(est.trials_run);
    }
    let curve = OutageCurve { descriptor: spec.experiment.descriptor(), policy, points };
    let fit = fit_diversity(&curve)?;
    Ok(ConditionalSlope { r, points: curve.points, trials_run, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessPoint {
    pub snr_db: f64,
    pub trials: u64,
    /// Draws where the selected mode is out.
    pub system_outage: u64,
    /// Draws where every mode is out.
    pub all_out: u64,
    /// Selected mode out while another mode would have worked.
    pub wrong_selection: u64,
    pub wrong_selection_ci95: Ci95,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub descriptor: String,
    pub r: f64,
    pub points: Vec<TightnessPoint>,
    pub system_fit: Option<SlopeFit>,
    pub all_out_fit: Option<SlopeFit>,
    pub wrong_selection_total: u64,
    /// No wrong selections were seen.
    pub tight: bool,
}

/// Counts, per SNR, how often the rule picks a mode in outage while some
/// other mode would have supported the rate, alongside the system and
/// all-modes-out outage counts and their fitted slopes.
pub fn tightness_check(
    experiment: &Experiment,
    snr_grid_db: &[f64],
    r: f64,
    trials: u64,
    seed: u64,
) -> Result<TightnessReport> {
    if trials < MIN_TRIALS {
        return Err(Error::Config(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    check_grid(snr_grid_db)?;
    let policy = RatePolicy::Multiplexing { r };
    policy.validate(experiment.topology)?;
    let prepared = experiment.prepare()?;
    let n_modes = prepared.set.modes().len();
    let mut points = Vec::with_capacity(snr_grid_db.len());
    for (i, &db) in snr_grid_db.iter().enumerate() {
        let snr = SnrPoint::from_db(db)?;
        let target = policy.target_bits(snr);
        let factory = TrialRngFactory::new(point_seed(seed, i));
        let (sys, all, wrong) = (0..trials)
            .into_par_iter()
            .map(|t| {
                let draw = prepared.draw(&mut factory.trial(t));
                let sys = prepared.outage(&draw, snr, target);
                let all = (0..n_modes).all(|m| prepared.set.mode_outage(m, &draw, snr, target).expect("valid mode"));
                (sys as u64, all as u64, (sys && !all) as u64)
            })
            .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        points.push(TightnessPoint {
            snr_db: db,
            trials,
            system_outage: sys,
            all_out: all,
            wrong_selection: wrong,
            wrong_selection_ci95: Ci95::wilson(wrong, trials),
        });
    }
    let fit = |count: fn(&TightnessPoint) -> u64| {
        let pts = points
            .iter()
            .map(|p| OutagePoint::new(p.snr_db, OutageEstimate::from_counts(count(p), p.trials)))
            .collect();
        fit_diversity(&OutageCurve { descriptor: experiment.descriptor(), policy, points: pts }).ok()
    };
    let system_fit = fit(|p| p.system_outage);
    let all_out_fit = fit(|p| p.all_out);
    let wrong_selection_total = points.iter().map(|p| p.wrong_selection).sum();
    Ok(TightnessReport {
        descriptor: experiment.descriptor(),
        r,
        points,
        system_fit,
        all_out_fit,
        wrong_selection_total,
        tight: wrong_selection_total == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ProtocolKind, SelectionRule};
    use proptest::prelude::*;

    fn ramp(k: f64, z: Breakpoint) -> DmtCurve {
        DmtCurve::ramps(&[(k, z)], Breakpoint::ONE)
    }

    #[test]
    fn two_mode_sum() {
        let sum = compose_upper_bound(&[ramp(1.0, Breakpoint::ONE), ramp(1.0, Breakpoint::rational(1, 2))]).unwrap();
        let th1 = dmt_curve("on-off/orth-df".parse().unwrap()).unwrap();
        for (r, d) in th1.sample(0.01) {
            assert!((sum.eval(r).unwrap() - d).abs() < 1e-12);
        }
    }

    #[test]
    fn single_and_empty_lists() {
        let c = ramp(2.0, Breakpoint::ONE);
        assert_eq!(compose_upper_bound(std::slice::from_ref(&c)).unwrap(), c);
        assert!(compose_upper_bound(&[]).is_err());
        let wide = DmtCurve::ramps(&[(1.0, Breakpoint::int(2))], Breakpoint::int(2));
        assert!(compose_upper_bound(&[c, wide]).is_err());
    }

    #[test]
    fn src_decompositions_reproduce_the_protocol_curves() {
        for (p, v) in [(SrcProtocol::Genie, "genie"), (SrcProtocol::Naf, "naf"), (SrcProtocol::Ddf, "ddf")] {
            let sum = compose_upper_bound(&src_components(p, true).unwrap()).unwrap();
            let th = dmt_curve(format!("src:2/{v}").parse().unwrap()).unwrap();
            for (r, d) in th.sample(0.01) {
                assert!((sum.eval(r).unwrap() - d).abs() < 1e-12, "{v} r={r}");
            }
        }
    }

    #[test]
    fn src_cf_decomposition_bounds_the_cf_curve() {
        let sum = compose_upper_bound(&src_components(SrcProtocol::Cf, true).unwrap()).unwrap();
        let th = dmt_curve("src:2/cf".parse().unwrap()).unwrap();
        for (r, d) in th.sample(0.01) {
            let s = sum.eval(r).unwrap();
            assert!(s >= d - 1e-12, "r={r}");
            if r <= 2.0 / 3.0 {
                assert!((s - d).abs() < 1e-12, "r={r}");
            }
        }
    }

    #[test]
    fn conditioning_never_raises_the_sum() {
        for p in [SrcProtocol::Genie, SrcProtocol::Naf, SrcProtocol::Ddf, SrcProtocol::Cf] {
            let cond = compose_upper_bound(&src_components(p, true).unwrap()).unwrap();
            let free = compose_upper_bound(&src_components(p, false).unwrap()).unwrap();
            for (r, d) in cond.sample(0.01) {
                assert!(d <= free.eval(r).unwrap() + 1e-12, "{p:?} r={r}");
            }
        }
    }

    proptest! {
        #[test]
        fn composition_is_commutative_and_associative(
            ks in prop::collection::vec((0.1f64..3.0, 1i64..4), 3),
            r in 0.0f64..=1.0,
        ) {
            let cs: Vec<DmtCurve> = ks.iter().map(|&(k, q)| ramp(k, Breakpoint::rational(1, q))).collect();
            let abc = compose_upper_bound(&cs).unwrap();
            let cba = compose_upper_bound(&[cs[2].clone(), cs[1].clone(), cs[0].clone()]).unwrap();
            let grouped = compose_upper_bound(&[cs[0].clone(), compose_upper_bound(&cs[1..]).unwrap()]).unwrap();
            let a = abc.eval(r).unwrap();
            prop_assert!((a - cba.eval(r).unwrap()).abs() < 1e-12);
            prop_assert!((a - grouped.eval(r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_spec_validation() {
        let exp = Experiment::new(TopologyKind::OnOffRelay, ProtocolKind::OrthDf, SelectionRule::MaxEndToEndMI);
        assert!(ConditionalOutageSpec::new(exp.clone(), 1, vec![0]).is_ok());
        assert!(ConditionalOutageSpec::new(exp.clone(), 1, vec![1]).is_err());
        assert!(ConditionalOutageSpec::new(exp, 2, vec![0]).is_err());
    }

    #[test]
    fn conditional_slope_vanishes_at_half_rate() {
        let exp = Experiment::new(TopologyKind::OnOffRelay, ProtocolKind::OrthDf, SelectionRule::MaxEndToEndMI);
        let spec = ConditionalOutageSpec::new(exp, 1, vec![0]).unwrap();
        let res = estimate_conditional_slope(&spec, &[12.0, 16.0, 20.0, 24.0], 0.5, 100_000, 1 << 24, 3).unwrap();
        assert!(res.fit.d_hat.abs() < 0.15, "{:?}", res.fit);
        for p in &res.points {
            assert!(p.trials >= CONDITIONAL_FLOOR);
        }
    }

    #[test]
    fn max_mi_is_tight_by_construction() {
        let exp = Experiment::new(TopologyKind::Marc(2), ProtocolKind::Cf, SelectionRule::MaxEndToEndMI);
        let rep = tightness_check(&exp, &[10.0, 14.0], 0.3, 20_000, 5).unwrap();
        assert!(rep.tight);
        for p in &rep.points {
            assert_eq!(p.system_outage, p.all_out);
        }
        let exp = Experiment::new(TopologyKind::Marc(2), ProtocolKind::Cf, SelectionRule::DirectLinkMax);
        let rep = tightness_check(&exp, &[10.0, 14.0], 0.3, 20_000, 5).unwrap();
        assert!(rep.wrong_selection_total > 0);
        assert!(rep.points.iter().all(|p| p.system_outage >= p.all_out));
    }
}
