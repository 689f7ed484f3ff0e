//! The limiting vector field and its closed-form separatrix, an adaptive
//! integrator, invariant manifolds of the rescaled family, and numerical
//! measurement of the separatrix splitting (lobe areas and angles).

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fit::line_fit;
use crate::manifold::{
    eval_global, grow_manifold, intersections, GrowOptions, Intersection, ManifoldCurve, Side,
};
use crate::maps::{mu, Inv, PlanarMap, Rescaled};
use crate::real::Real;
use crate::vec2::Vec2;
use crate::{EXTENDED_BITS, NATIVE_BITS};

/// Vector field `xdot = y, ydot = 2x - x^2`.
pub fn vf_eval<R: Real>(p: Vec2<R>) -> Vec2<R> {
    Vec2::new(p.y, (R::from_f64(2.0) - p.x) * p.x)
}

/// Conserved energy `H = y^2/2 - x^2 + x^3/3`.
pub fn energy<R: Real>(p: Vec2<R>) -> R {
    p.y * p.y / R::from_f64(2.0) - p.x * p.x + p.x * p.x * p.x / R::from_f64(3.0)
}

/// Closed-form separatrix `x(t) = 3 sech^2(t / sqrt 2)`, `y = dx/dt`.
pub fn separatrix_point<R: Real>(t: R) -> Vec2<R> {
    let z = t / R::from_f64(2.0).sqrt();
    let sech = R::one() / z.cosh();
    let tanh = z.sinh() / z.cosh();
    let three = R::from_f64(3.0);
    let x = three * sech * sech;
    let y = -three * R::from_f64(2.0).sqrt() * sech * sech * tanh;
    Vec2::new(x, y)
}

/// Residual of the closed form in the vector field, using the analytic
/// second derivative.
pub fn separatrix_residual(t: f64) -> f64 {
    let s2 = 2f64.sqrt();
    let z = t / s2;
    let sech = 1.0 / z.cosh();
    let tanh = z.tanh();
    let x = 3.0 * sech * sech;
    let y = -3.0 * s2 * sech * sech * tanh;
    // dy/dt = -3 (sech^4 - 2 sech^2 tanh^2)
    let dydt = -3.0 * (sech.powi(4) - 2.0 * sech * sech * tanh * tanh);
    let vf = vf_eval(Vec2::new(x, y));
    let rx: f64 = y - vf.x;
    let ry: f64 = dydt - vf.y;
    rx.abs().max(ry.abs())
}

#[derive(Clone, Debug)]
pub struct Trajectory<R> {
    pub times: Vec<R>,
    pub states: Vec<Vec2<R>>,
}

/// Integrate the vector field with a Fehlberg 4(5) pair; the local error
/// per step is kept below `tol * max(1, |state|)`.
pub fn integrate_flow<R: Real>(start: Vec2<R>, t_end: R, tol: R) -> Result<Trajectory<R>> {
    if tol <= R::zero() {
        return Err(CoreError::InvalidInput("tolerance must be positive".to_string()));
    }
    let mut t = R::zero();
    let mut y = start;
    let mut hstep = R::from_f64(1e-3) * if t_end < R::zero() { -R::one() } else { R::one() };
    let mut times = vec![t];
    let mut states = vec![y];
    let forward = t_end >= R::zero();
    let min_step = R::from_f64(1e-14);
    let mut guard = 0usize;
    while (forward && t < t_end) || (!forward && t > t_end) {
        guard += 1;
        if guard > 10_000_000 {
            return Err(CoreError::Domain("integrator step guard exceeded".to_string()));
        }
        if (forward && t + hstep > t_end) || (!forward && t + hstep < t_end) {
            hstep = t_end - t;
        }
        let k1 = vf_eval(y);
        let a = |v: Vec2<R>, s: f64| v.scale(R::from_f64(s));
        let k2 = vf_eval(y + a(k1, 0.25).scale(hstep));
        let k3 = vf_eval(y + (a(k1, 3.0 / 32.0) + a(k2, 9.0 / 32.0)).scale(hstep));
        let k4 = vf_eval(
            y + (a(k1, 1932.0 / 2197.0) + a(k2, -7200.0 / 2197.0) + a(k3, 7296.0 / 2197.0))
                .scale(hstep),
        );
        let k5 = vf_eval(
            y + (a(k1, 439.0 / 216.0) + a(k2, -8.0) + a(k3, 3680.0 / 513.0)
                + a(k4, -845.0 / 4104.0))
                .scale(hstep),
        );
        let k6 = vf_eval(
            y + (a(k1, -8.0 / 27.0) + a(k2, 2.0) + a(k3, -3544.0 / 2565.0)
                + a(k4, 1859.0 / 4104.0)
                + a(k5, -11.0 / 40.0))
                .scale(hstep),
        );
        let y4 = y
            + (a(k1, 25.0 / 216.0) + a(k3, 1408.0 / 2565.0) + a(k4, 2197.0 / 4104.0)
                + a(k5, -0.2))
                .scale(hstep);
        let y5 = y
            + (a(k1, 16.0 / 135.0) + a(k3, 6656.0 / 12825.0) + a(k4, 28561.0 / 56430.0)
                + a(k5, -9.0 / 50.0)
                + a(k6, 2.0 / 55.0))
                .scale(hstep);
        let err = (y5 - y4).norm();
        let scale = tol * y.norm().max_r(R::one());
        if err <= scale {
            t += hstep;
            y = y5;
            times.push(t);
            states.push(y);
        }
        let ratio = if err.is_zero() {
            R::from_f64(4.0)
        } else {
            let r = (scale / err).powf(R::from_f64(0.2)) * R::from_f64(0.9);
            r.min_r(R::from_f64(4.0)).max_r(R::from_f64(0.1))
        };
        hstep *= ratio;
        if hstep.abs() < min_step {
            return Err(CoreError::Domain(
                "integrator step size underflow".to_string(),
            ));
        }
    }
    Ok(Trajectory { times, states })
}

/// Grow the unstable manifold of the origin saddle of the rescaled family.
pub fn unstable_manifold<R: Real>(
    f: &Rescaled<R>,
    jet_order: usize,
    opts: &GrowOptions<R>,
) -> Result<ManifoldCurve<R>> {
    grow_manifold(f, Vec2::zero(), jet_order, Side::Unstable, opts)
}

/// Grow the stable manifold (the unstable manifold of the inverse map).
pub fn stable_manifold<R: Real>(
    f: &Rescaled<R>,
    jet_order: usize,
    opts: &GrowOptions<R>,
) -> Result<ManifoldCurve<R>> {
    let inv = Inv(f);
    grow_manifold(&inv, Vec2::zero(), jet_order, Side::Stable, opts)
}

/// Default window for the separatrix loop of the rescaled family.
pub fn loop_options<R: Real>() -> GrowOptions<R> {
    GrowOptions {
        center: Vec2::from_f64(1.5, 0.0),
        half_width: R::from_f64(2.5),
        max_turn: 0.05,
        max_chord: R::from_f64(0.1),
        max_expansions: 120,
        max_points: 150_000,
        stop_radius: Some(R::from_f64(0.05)),
    }
}

/// Splitting measurement at one value of `h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingReport {
    pub h: f64,
    /// Angle at the primary homoclinic point, radians.
    pub angle: f64,
    /// Lobe area between the primary point and the next intersection.
    pub lobe_area: f64,
    /// Area of the adjacent lobe.
    pub lobe_area_adjacent: f64,
    /// Estimated absolute accuracy of the lobe areas.
    pub accuracy: f64,
    pub precision_bits: u32,
    pub primary_point: (f64, f64),
    pub primary_param: f64,
    pub intersection_count: usize,
}

/// Significand width required by the precision policy at a given `h`.
pub fn required_bits(h: f64) -> Result<u32> {
    if h >= 0.7 {
        Ok(NATIVE_BITS)
    } else if h >= 0.35 {
        Ok(EXTENDED_BITS)
    } else {
        Err(CoreError::PrecisionRefusal {
            what: "separatrix splitting measurement".to_string(),
            h,
            needed_bits: u32::MAX,
            working_bits: EXTENDED_BITS,
        })
    }
}

/// Model prediction for the lobe area: integrating the leading sinusoidal
/// term of the splitting function over a half period gives
/// `h^2 mu(h) / (2 pi^2)`.
pub fn predicted_lobe_area(h: f64, theta1: f64) -> Result<f64> {
    let m = mu(h, theta1)?;
    let v = m.value.unwrap_or(0.0);
    Ok(h * h * v / (2.0 * std::f64::consts::PI.powi(2)))
}

/// Measure the separatrix splitting of the rescaled family at `h`, at the
/// working precision of `R`.
pub fn measure_splitting<R: Real>(h: f64, jet_order: usize) -> Result<SplittingReport> {
    let needed = required_bits(h)?;
    if R::sig_bits() < needed {
        return Err(CoreError::PrecisionRefusal {
            what: "separatrix splitting measurement".to_string(),
            h,
            needed_bits: needed,
            working_bits: R::sig_bits(),
        });
    }
    let f = Rescaled::from_h(R::from_f64(h))?;
    let opts = loop_options::<R>();
    let cu = unstable_manifold(&f, jet_order, &opts)?;
    let cs = stable_manifold(&f, jet_order, &opts)?;
    let inv = Inv(&f);
    let mut xs = intersections(&f, &cu, &inv, &cs);
    // Keep only crossings of the computed first passes: the Newton
    // refinement can slide a seed onto a later pass of the exact
    // parametrization, which shows up as a parameter outside the grown
    // polyline's range. Trim one fundamental domain at each end.
    let lambda = f.lambda;
    let xi_range = (
        cu.points.first().unwrap().param * lambda,
        cu.points.last().unwrap().param / lambda,
    );
    let eta_range = (
        cs.points.first().unwrap().param * lambda,
        cs.points.last().unwrap().param / lambda,
    );
    xs.retain(|x| {
        x.param_u >= xi_range.0
            && x.param_u <= xi_range.1
            && x.param_s >= eta_range.0
            && x.param_s <= eta_range.1
    });
    if xs.len() < 3 {
        return Err(CoreError::NoIntersections(format!(
            "h={h}: {} refined first-pass intersections",
            xs.len()
        )));
    }
    // Primary selection: largest angle with the unstable parameter within
    // one fundamental domain around the geometric center of the list.
    let med = (xs[0].param_u * xs[xs.len() - 1].param_u).sqrt();
    let lo = med / lambda.sqrt();
    let hi = med * lambda.sqrt();
    let mut primary_idx = xs.len() / 2;
    let mut best_angle = R::zero();
    for (i, x) in xs.iter().enumerate() {
        if x.param_u >= lo && x.param_u < hi && x.angle > best_angle {
            best_angle = x.angle;
            primary_idx = i;
        }
    }
    if primary_idx + 2 >= xs.len() {
        primary_idx = xs.len().saturating_sub(3);
    }
    let q0 = &xs[primary_idx];
    let q1 = &xs[primary_idx + 1];
    let q2 = &xs[primary_idx + 2];
    let (area1, acc1) = lobe_area(&f, &cu, &inv, &cs, q0, q1)?;
    let (area2, acc2) = lobe_area(&f, &cu, &inv, &cs, q1, q2)?;

    // accuracy precondition: manifold defect well below the transversal
    // splitting scale implied by the lobes
    let arc_len = (q1.point - q0.point).norm().to_f64().max(1e-300);
    let transversal_scale = area1.to_f64() / arc_len;
    let defect = cu.defect.max_r(cs.defect).to_f64();
    if defect * 30.0 > transversal_scale {
        return Err(CoreError::PrecisionRefusal {
            what: format!(
                "splitting at h={h}: manifold defect {defect:e} vs transversal scale {transversal_scale:e}"
            ),
            h,
            needed_bits: EXTENDED_BITS,
            working_bits: R::sig_bits(),
        });
    }
    Ok(SplittingReport {
        h,
        angle: q0.angle.to_f64(),
        lobe_area: area1.to_f64(),
        lobe_area_adjacent: area2.to_f64(),
        accuracy: (acc1 + acc2).to_f64(),
        precision_bits: R::sig_bits(),
        primary_point: (q0.point.x.to_f64(), q0.point.y.to_f64()),
        primary_param: q0.param_u.to_f64(),
        intersection_count: xs.len(),
    })
}

/// Area of the lobe bounded by the unstable arc from `qa` to `qb` and the
/// stable arc back, via the shoelace formula on refined arc samples.
fn lobe_area<R: Real, MU: PlanarMap<R>, MS: PlanarMap<R>>(
    map_u: &MU,
    cu: &ManifoldCurve<R>,
    map_s: &MS,
    cs: &ManifoldCurve<R>,
    qa: &Intersection<R>,
    qb: &Intersection<R>,
) -> Result<(R, R)> {
    let mut last = R::zero();
    let mut n = 256usize;
    let mut acc = R::zero();
    for round in 0..6 {
        let mut poly: Vec<Vec2<R>> = Vec::with_capacity(2 * n + 2);
        let ra = qb.param_u / qa.param_u;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let xi = qa.param_u * ra.powf(R::from_f64(t));
            let (p, _, _) = eval_global(map_u, &cu.jet, cu.lambda, cu.xi0, xi);
            poly.push(p);
        }
        let rb = qa.param_s / qb.param_s;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let eta = qb.param_s * rb.powf(R::from_f64(t));
            let (p, _, _) = eval_global(map_s, &cs.jet, cs.lambda, cs.xi0, eta);
            poly.push(p);
        }
        let mut two_a = R::zero();
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            two_a += p.cross(q);
        }
        let area = two_a.abs() / R::from_f64(2.0);
        acc = (area - last).abs();
        if round > 0 && acc <= area.abs() * R::from_f64(1e-6) {
            return Ok((area, acc));
        }
        last = area;
        n *= 2;
    }
    Ok((last, acc))
}

/// Sweep `h` values, measure, and fit `ln(area * h^5)` against `1/h`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingSweep {
    pub reports: Vec<SplittingReport>,
    /// Fitted slope of `ln(area h^5)` vs `1/h` (model: `-2 pi^2`).
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

pub fn splitting_sweep(hs: &[f64], jet_order: usize) -> Result<SplittingSweep> {
    use rayon::prelude::*;
    let reports: Vec<SplittingReport> = hs
        .par_iter()
        .map(|&h| measure_splitting::<f64>(h, jet_order))
        .collect::<Result<Vec<_>>>()?;
    let (slope, intercept, _rms, stderr) = if reports.len() >= 2 {
        let xs: Vec<f64> = reports.iter().map(|r| 1.0 / r.h).collect();
        let ys: Vec<f64> = reports
            .iter()
            .map(|r| (r.lobe_area * r.h.powi(5)).ln())
            .collect();
        line_fit(&xs, &ys)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    Ok(SplittingSweep {
        reports,
        slope,
        slope_stderr: stderr,
        intercept,
    })
}
