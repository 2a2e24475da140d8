//! CSV and JSON renderings of a result payload.

use serde::Serialize;

use super::{Payload, ResultRecord, SCHEMA_VERSION};
use crate::{Error, Result};

/// Formats a float with 9 significant digits and a '.' decimal point.
///
/// Magnitudes in `[1e-4, 1e9)` are written positionally, others in
/// exponent form; trailing zeros are dropped.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let s = format!("{:.*}", (8 - mag).max(0) as usize, x);
        trim_fraction(&s).to_string()
    } else {
        let s = format!("{x:.8e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Header row of the CSV for a payload kind.
pub fn csv_header(payload: &Payload) -> &'static [&'static str] {
    match payload {
        Payload::CurveExport { .. } => &["curve", "r", "d"],
        Payload::McSweep { .. } => &["snr_db", "rho", "p_hat", "events", "trials", "ci_lo", "ci_hi"],
        Payload::Slope { .. } => &["d_hat", "stderr", "rho_min", "rho_max", "points_used"],
        Payload::SolverVerify { .. } => &["label", "key", "r", "solver", "catalog", "diff"],
        Payload::Lemma4 { .. } => &["case", "rho", "p_hat", "events", "trials", "ratio", "ratio_sigma"],
        Payload::Conditional { .. } => {
            &["snr_db", "rho", "p_hat", "events", "accepted", "trials_run", "ci_lo", "ci_hi"]
        }
        Payload::Tightness { .. } => {
            &["snr_db", "trials", "system_outage", "all_out", "wrong_selection", "ci_lo", "ci_hi"]
        }
    }
}

fn csv_rows(payload: &Payload) -> Vec<Vec<String>> {
    let f = |x: f64| format_float(x);
    match payload {
        Payload::CurveExport { curves } => curves
            .iter()
            .flat_map(|c| c.samples.iter().map(move |&(r, d)| vec![c.key.to_string(), f(r), f(d)]))
            .collect(),
        Payload::McSweep { curve } => curve
            .points
            .iter()
            .map(|p| {
                vec![
                    f(p.snr_db),
                    f(p.rho),
                    f(p.p_hat),
                    p.events.to_string(),
                    p.trials.to_string(),
                    f(p.ci95.lo),
                    f(p.ci95.hi),
                ]
            })
            .collect(),
        Payload::Slope { fit, .. } => vec![vec![
            f(fit.d_hat),
            f(fit.stderr),
            f(fit.rho_min),
            f(fit.rho_max),
            fit.points_used.to_string(),
        ]],
        Payload::SolverVerify { report } => report
            .rows
            .iter()
            .map(|r| vec![r.label.clone(), r.key.clone(), f(r.r), f(r.solver), f(r.catalog), f(r.diff)])
            .collect(),
        Payload::Lemma4 { case, points, .. } => {
            let case = serde_json::to_value(case).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            points
                .iter()
                .map(|p| {
                    vec![
                        case.clone(),
                        f(p.rho),
                        f(p.p_hat),
                        p.events.to_string(),
                        p.trials.to_string(),
                        f(p.ratio),
                        f(p.ratio_sigma),
                    ]
                })
                .collect()
        }
        Payload::Conditional { result } => result
            .points
            .iter()
            .zip(&result.trials_run)
            .map(|(p, run)| {
                vec![
                    f(p.snr_db),
                    f(p.rho),
                    f(p.p_hat),
                    p.events.to_string(),
                    p.trials.to_string(),
                    run.to_string(),
                    f(p.ci95.lo),
                    f(p.ci95.hi),
                ]
            })
            .collect(),
        Payload::Tightness { report } => report
            .points
            .iter()
            .map(|p| {
                vec![
                    f(p.snr_db),
                    p.trials.to_string(),
                    p.system_outage.to_string(),
                    p.all_out.to_string(),
                    p.wrong_selection.to_string(),
                    f(p.wrong_selection_ci95.lo),
                    f(p.wrong_selection_ci95.hi),
                ]
            })
            .collect(),
    }
}

pub fn to_csv(payload: &Payload) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serde(e.to_string());
    w.write_record(csv_header(payload)).map_err(ser)?;
    for row in csv_rows(payload) {
        w.write_record(&row).map_err(ser)?;
    }
    w.into_inner().map_err(|e| Error::Serde(e.to_string()))
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    schema_version: u32,
    tool_version: &'a str,
    config_hash: &'a str,
    payload: &'a Payload,
}

/// JSON file body. Timestamps stay in the cache so that equal configs give
/// equal files.
pub fn to_json(record: &ResultRecord) -> Result<Vec<u8>> {
    let doc = JsonDocument {
        schema_version: SCHEMA_VERSION,
        tool_version: &record.tool_version,
        config_hash: &record.config_hash,
        payload: &record.payload,
    };
    let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| Error::Serde(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(0.1), "0.1");
        assert_eq!(format_float(2.0), "2");
        assert_eq!(format_float(1.0 / 3.0), "0.333333333");
        assert_eq!(format_float(123456.789123), "123456.789");
        assert_eq!(format_float(-2.5), "-2.5");
        assert_eq!(format_float(0.09516258196404048), "0.095162582");
        assert_eq!(format_float(1.2345678912e-7), "1.23456789e-7");
        assert_eq!(format_float(1e12), "1e12");
        assert_eq!(format_float(9.9999999999), "10");
    }

    #[test]
    fn format_round_trips_to_nine_digits() {
        for x in [std::f64::consts::PI, 1e-5 * std::f64::consts::E, 7.25e10, 0.000123456789] {
            let back: f64 = format_float(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8, "{x}");
        }
    }
}
