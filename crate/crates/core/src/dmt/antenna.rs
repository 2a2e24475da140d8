use super::{Breakpoint, DmtCurve, Form};
use crate::protocol::TimeSplit;
use crate::{Error, Result};

/// DMT bound of an `Mt x Mr` link that selects `Lt` transmit and `Lr`
/// receive antennas: the polyline through `(k, (Mr-k)(Mt-k))` for
/// `k = 0..=K` and `(min(Lr, Lt), 0)`.
pub fn antenna_selection_dmt(mt: usize, mr: usize, lt: usize, lr: usize) -> Result<DmtCurve> {
    if !(1 <= lt && lt <= mt && 1 <= lr && lr <= mr) {
        return Err(Error::Domain(format!(
            "antenna counts need 1 <= Lt <= Mt and 1 <= Lr <= Mr, got Mt={mt} Mr={mr} Lt={lt} Lr={lr}"
        )));
    }
    let l = lr.min(lt) as i64;
    let (mt, mr) = (mt as i64, mr as i64);
    let cost = |k: i64| ((mr - k) * (mt - k)) as f64 / (l - k) as f64;
    // argmin over 0 <= k <= l-1; ties resolve to the smallest k.
    let k_star = (0..l).fold(0, |best, k| if cost(k) < cost(best) { k } else { best });
    let mut points: Vec<(i64, i64)> = (0..=k_star).map(|k| (k, (mr - k) * (mt - k))).collect();
    points.push((l, 0));
    let branches = points
        .windows(2)
        .map(|w| {
            let (x0, y0) = (w[0].0 as f64, w[0].1 as f64);
            let (x1, y1) = (w[1].0 as f64, w[1].1 as f64);
            let slope = (y1 - y0) / (x1 - x0);
            (Breakpoint::int(w[1].0), Form::linear(y0 - slope * x0, slope))
        })
        .collect();
    Ok(DmtCurve::piecewise(branches))
}

/// Broadcast and multiple-access cutset DMTs of CF on the `n`-source MARC
/// for relay time split `t`, as `(d_BC, d_MAC)`.
pub fn marc_cf_cutset_curves(n: usize, t: TimeSplit) -> Result<(DmtCurve, DmtCurve)> {
    let t = t.value();
    if n == 0 || !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("need n >= 1 and 0 < t < 1, got n={n}, t={t}")));
    }
    let nf = n as f64;
    let full = || DmtCurve::ramps(&[(nf + 1.0, Breakpoint::ONE)], Breakpoint::ONE);
    let bc = if t >= 1.0 / (nf + 1.0) {
        full()
    } else {
        DmtCurve::piecewise(vec![
            (Breakpoint::Numeric(t), Form::linear(nf + 1.0, -1.0 / t)),
            (Breakpoint::ONE, Form::linear(nf / (1.0 - t), -nf / (1.0 - t))),
        ])
    };
    let mac = if t <= nf / (nf + 1.0) {
        full()
    } else {
        DmtCurve::piecewise(vec![
            (Breakpoint::Numeric(1.0 - t), Form::linear(nf + 1.0, -1.0 / (1.0 - t))),
            (Breakpoint::ONE, Form::linear(nf / t, -nf / t)),
        ])
    };
    Ok((bc, mac))
}
