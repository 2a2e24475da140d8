//! Diversity slope regression.

use serde::{Deserialize, Serialize};

use super::OutageCurve;
use crate::{Error, Result};

/// Points with fewer outage events are too noisy to fit.
pub const MIN_EVENTS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub d_hat: f64,
    pub stderr: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub points_used: usize,
}

/// Least-squares slope of `-log10 p` against `log10 rho`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = points.iter().copied().filter(|&(rho, p)| rho > 0.0 && p > 0.0).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs 3 points with p > 0, have {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| -p.1.log10()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("slope fit needs distinct SNR values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let stderr = if usable.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let rho_min = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let rho_max = usable.iter().map(|p| p.0).fold(0.0, f64::max);
    Ok(SlopeFit { d_hat: slope, stderr, rho_min, rho_max, points_used: usable.len() })
}

/// Fits the diversity slope of a Monte Carlo curve, skipping points with
/// fewer than [`MIN_EVENTS`] outage events.
pub fn fit_diversity(curve: &OutageCurve) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.events >= MIN_EVENTS)
        .map(|p| (p.rho, p.p_hat))
        .collect();
    fit_power_law(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RatePolicy;
    use crate::outage::{sweep, Experiment, OutageEstimate, OutagePoint};

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 1e4].iter().map(|&r: &f64| (r, r.powf(-1.5))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.d_hat - 1.5).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
        assert_eq!(fit.points_used, 4);
    }

    #[test]
    fn sparse_points_are_dropped() {
        let mut curve = OutageCurve {
            descriptor: "synthetic".into(),
            policy: RatePolicy::Multiplexing { r: 0.0 },
            points: vec![],
        };
        for (db, events) in [(10.0, 1000u64), (20.0, 100), (30.0, 19), (40.0, 0)] {
            curve.points.push(OutagePoint::new(db, OutageEstimate::from_counts(events, 10_000)));
        }
        assert!(matches!(fit_diversity(&curve), Err(Error::InsufficientData(_))));
        curve.points[2] = OutagePoint::new(30.0, OutageEstimate::from_counts(20, 10_000));
        assert_eq!(fit_diversity(&curve).unwrap().points_used, 3);
    }

    #[test]
    fn direct_link_slope_is_one() {
        let grid = [10.0, 15.0, 20.0, 25.0, 30.0];
        let curve = sweep(&Experiment::direct_link(), &grid, RatePolicy::Multiplexing { r: 0.0 }, 1000, 1);
        // r = 0 means no outage at all.
        assert!(fit_diversity(&curve.unwrap()).is_err());
        let curve = sweep(&Experiment::direct_link(), &grid, RatePolicy::FixedRate { bits: 1.0 }, 1_000_000, 1).unwrap();
        let fit = fit_diversity(&curve).unwrap();
        assert!((0.85..=1.15).contains(&fit.d_hat), "{fit:?}");
    }
}
