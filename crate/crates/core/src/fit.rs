//! Least-squares line fits used by the scaling-law checks.

/// Ordinary least squares fit `y = slope * x + intercept`.
///
/// Returns `(slope, intercept, rms_residual, slope_stderr)`.
pub fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2, "need at least two points for a line fit");
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        sxx += dx * dx;
        sxy += dx * (ys[i] - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for i in 0..n {
        let r = ys[i] - (slope * xs[i] + intercept);
        ss += r * r;
    }
    let rms = (ss / nf).sqrt();
    let stderr = if n > 2 { (ss / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, intercept, rms, stderr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| -2.5 * x + 0.75).collect();
        let (s, b, r, _) = line_fit(&xs, &ys);
        assert!((s + 2.5).abs() < 1e-12);
        assert!((b - 0.75).abs() < 1e-12);
        assert!(r < 1e-12);
    }
}
