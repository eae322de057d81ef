//! Least-squares line fits and slope extraction for growth-law and
//! convergence-order checks.

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Clone, Copy, Debug)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for an exact fit, NaN when fewer
    /// than two usable points were supplied.
    pub r_squared: f64,
    pub n_points: usize,
}

impl LineFit {
    fn degenerate() -> Self {
        LineFit { slope: f64::NAN, intercept: f64::NAN, r_squared: f64::NAN, n_points: 0 }
    }
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len(), "mismatched fit inputs");
    let n = xs.len();
    if n < 2 {
        return LineFit::degenerate();
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return LineFit::degenerate();
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    // A constant series is fit exactly by its own mean.
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    LineFit { slope, intercept, r_squared, n_points: n }
}

/// Fits `v ~ c t^p` by least squares on `log v` vs `log t`, returning `p`
/// as the slope. Pairs with a nonpositive entry carry no information on a
/// log scale and are skipped.
pub fn fit_power_law(ts: &[f64], vs: &[f64]) -> LineFit {
    assert_eq!(ts.len(), vs.len(), "mismatched fit inputs");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&t, &v) in ts.iter().zip(vs) {
        if t > 0.0 && v > 0.0 {
            xs.push(t.ln());
            ys.push(v.ln());
        }
    }
    fit_line(&xs, &ys)
}

/// One-sided `dv/dt` at the start of a uniformly sampled series,
/// Richardson-extrapolated to cancel the quadratic term: with
/// `h = t[i] - t[0]` and `t[j] - t[0] = 2h`,
/// `(4 (v[i] - v[0]) - (v[j] - v[0])) / (2h)` has `O(h^2)` error.
///
/// `i` is the middle index, so the whole supplied window is used; slice
/// the series first to control `h`.
pub fn initial_slope(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len(), "mismatched slope inputs");
    assert!(times.len() >= 3, "initial slope needs at least three samples");
    let i = (times.len() - 1) / 2;
    let j = 2 * i;
    let h = times[i] - times[0];
    let h2 = times[j] - times[0];
    assert!(
        (h2 - 2.0 * h).abs() <= 1e-9 * h.abs().max(1e-300),
        "initial slope expects uniform sampling, got steps {h} and {}",
        h2 - h
    );
    (4.0 * (values[i] - values[0]) - (values[j] - values[0])) / (2.0 * h)
}
