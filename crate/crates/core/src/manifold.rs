//! Invariant manifolds of saddle fixed points: polynomial jets computed
//! order by order from the invariance equation `F(P(xi)) = P(lambda xi)`,
//! globalized by iterating a fundamental domain, plus polyline
//! intersection finding with Newton refinement on the exact
//! parametrizations.

use crate::error::{CoreError, Result};
use crate::jet::Jet1;
use crate::maps::PlanarMap;
use crate::real::Real;
use crate::vec2::{Mat2, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Unstable,
    Stable,
}

/// A sampled point on the manifold: standard parameter, position, and how
/// many map applications were used past the jet's trust region.
#[derive(Clone, Copy, Debug)]
pub struct MPoint<R> {
    pub param: R,
    pub p: Vec2<R>,
    pub iters: u32,
}

/// Polynomial jet plus globalized polyline of one branch of an invariant
/// manifold. For a stable manifold, `lambda` is the unstable eigenvalue
/// of the inverse map (used to grow the curve).
#[derive(Clone, Debug)]
pub struct ManifoldCurve<R> {
    pub side: Side,
    pub fixed_point: Vec2<R>,
    pub lambda: R,
    pub jet: (Jet1<R>, Jet1<R>),
    /// End of the jet-evaluated trust region `[-xi0, xi0]`.
    pub xi0: R,
    pub points: Vec<MPoint<R>>,
    /// Max invariance defect sampled on the fundamental domain.
    pub defect: R,
    pub truncated: bool,
}

/// Solve the invariance equation for the jet along the eigenvalue largest
/// in absolute value (pass the inverse map to get the stable side). The
/// tangent coefficient is the unit eigenvector with positive first
/// component.
pub fn manifold_jet<R: Real, M: PlanarMap<R>>(
    map: &M,
    fixed_point: Vec2<R>,
    order: usize,
) -> Result<(Jet1<R>, Jet1<R>, R)> {
    if order < 1 {
        return Err(CoreError::InvalidInput("jet order must be >= 1".to_string()));
    }
    let a = map.jacobian(fixed_point);
    let eig = a
        .eigen_real()
        .ok_or_else(|| CoreError::InvalidInput("fixed point has complex eigenvalues".to_string()))?;
    let (lambda, v) = if eig[0].0.abs() > eig[1].0.abs() {
        eig[0]
    } else {
        eig[1]
    };
    if lambda.abs() <= R::one() {
        return Err(CoreError::InvalidInput(format!(
            "dominant multiplier {} is not expanding",
            lambda.to_f64()
        )));
    }
    let mut px = Jet1::new(order);
    let mut py = Jet1::new(order);
    px.c[0] = fixed_point.x;
    py.c[0] = fixed_point.y;
    px.c[1] = v.x;
    py.c[1] = v.y;
    for m in 2..=order {
        let (qx, qy) = map.apply_jet(&px, &py);
        let rhs = Vec2::new(-qx.c[m], -qy.c[m]);
        let lm = lambda.powi(m as i32);
        let sys = Mat2::new(a.a - lm, a.b, a.c, a.d - lm);
        if sys.det().abs() < R::from_f64(1e-10) {
            return Err(CoreError::Domain(format!(
                "near-resonant divisor at jet order {m}"
            )));
        }
        let pm = sys.solve(rhs);
        px.c[m] = pm.x;
        py.c[m] = pm.y;
    }
    Ok((px, py, lambda))
}

/// Evaluate the globalized parametrization at `param`: pull the parameter
/// into the jet trust region, evaluate, push forward. Returns the point,
/// the tangent `dP/dparam`, and the iteration count used.
pub fn eval_global<R: Real, M: PlanarMap<R>>(
    map: &M,
    jet: &(Jet1<R>, Jet1<R>),
    lambda: R,
    xi0: R,
    param: R,
) -> (Vec2<R>, Vec2<R>, u32) {
    let mut xi = param;
    let mut iters = 0u32;
    while xi.abs() > xi0 {
        xi /= lambda;
        iters += 1;
        if iters > 100_000 {
            break;
        }
    }
    let dx = jet.0.derivative();
    let dy = jet.1.derivative();
    let mut p = Vec2::new(jet.0.eval(xi), jet.1.eval(xi));
    let mut t = Vec2::new(dx.eval(xi), dy.eval(xi));
    for _ in 0..iters {
        t = map.jacobian(p).mul_vec(t);
        p = map.apply(p);
    }
    (p, t.scale(lambda.powi(-(iters as i32))), iters)
}

/// Options for growing the polyline.
#[derive(Clone, Copy, Debug)]
pub struct GrowOptions<R> {
    /// Keep refining only while inside this box.
    pub center: Vec2<R>,
    pub half_width: R,
    /// Maximum turn angle between consecutive chords, radians.
    pub max_turn: f64,
    pub max_chord: R,
    /// Grow until the parameter reaches `xi0 * lambda^max_expansions`.
    pub max_expansions: u32,
    pub max_points: usize,
    /// When set, stop the march at the first return: once the curve has
    /// escaped to distance `10 * r` from the fixed point, stop as soon as
    /// it comes back within `r`.
    pub stop_radius: Option<R>,
}

impl GrowOptions<f64> {
    pub fn window(half_width: f64, max_expansions: u32) -> Self {
        GrowOptions {
            center: Vec2::new(0.0, 0.0),
            half_width,
            max_turn: 0.05,
            max_chord: half_width / 10.0,
            max_expansions,
            max_points: 200_000,
            stop_radius: None,
        }
    }
}

/// Compute one branch of the manifold (positive jet parameter side).
pub fn grow_manifold<R: Real, M: PlanarMap<R>>(
    map: &M,
    fixed_point: Vec2<R>,
    order: usize,
    side: Side,
    opts: &GrowOptions<R>,
) -> Result<ManifoldCurve<R>> {
    let (jx, jy, lambda) = manifold_jet(map, fixed_point, order)?;
    let jet = (jx, jy);
    // Trust region: shrink xi0 dyadically until the jet defect on the
    // fundamental domain is at roundoff level.
    let defect_target = R::from_f64(64.0) * R::epsilon();
    let mut xi0 = R::one();
    let mut defect = R::zero();
    let mut found = false;
    for _ in 0..200 {
        defect = jet_defect(map, &jet, lambda, xi0);
        if defect <= defect_target {
            found = true;
            break;
        }
        xi0 = xi0 * R::from_f64(0.75);
    }
    if !found {
        return Err(CoreError::Domain(
            "manifold jet defect does not reach target at any usable radius".to_string(),
        ));
    }

    let in_window = |p: Vec2<R>| {
        (p.x - opts.center.x).abs() <= opts.half_width
            && (p.y - opts.center.y).abs() <= opts.half_width
    };

    let lambda_abs = lambda.abs();
    let eval = |param: R| {
        let (p, _t, it) = eval_global(map, &jet, lambda, xi0, param);
        MPoint {
            param,
            p,
            iters: it,
        }
    };

    let mut points: Vec<MPoint<R>> = Vec::new();
    let start = xi0 * R::from_f64(1e-3);
    points.push(eval(start));
    let top = xi0 * lambda_abs.powi(opts.max_expansions as i32);
    let mut truncated = false;
    let mut escaped = false;
    // march with adaptive parameter step
    let mut step_factor = R::from_f64(1.05);
    let mut param = start;
    while param < top {
        if points.len() >= opts.max_points {
            truncated = true;
            break;
        }
        let next = param * step_factor;
        let cand = eval(next);
        let last = *points.last().unwrap();
        let chord = (cand.p - last.p).norm();
        let ok_turn = if points.len() >= 2 {
            let prev = points[points.len() - 2];
            let c1 = last.p - prev.p;
            let c2 = cand.p - last.p;
            c1.angle_between(c2).to_f64() <= opts.max_turn
        } else {
            true
        };
        let inside = in_window(cand.p) || in_window(last.p);
        if inside && (chord > opts.max_chord || !ok_turn) && (next - param) > param * R::from_f64(1e-12) {
            // halve the step by pulling the factor toward 1
            step_factor = R::one() + (step_factor - R::one()) * R::from_f64(0.5);
            continue;
        }
        points.push(cand);
        param = next;
        if let Some(r_stop) = opts.stop_radius {
            let d = (cand.p - fixed_point).norm();
            if d > r_stop * R::from_f64(10.0) {
                escaped = true;
            }
            if escaped && d < r_stop {
                break;
            }
        }
        // gently re-expand the step
        step_factor = R::one() + (step_factor - R::one()) * R::from_f64(1.3);
        let max_factor = R::from_f64(1.2);
        if step_factor > max_factor {
            step_factor = max_factor;
        }
    }
    Ok(ManifoldCurve {
        side,
        fixed_point,
        lambda,
        jet,
        xi0,
        points,
        defect,
        truncated,
    })
}

/// Max invariance defect `|F(P(xi)) - P(lambda xi)|` over the fundamental
/// domain `[xi0/lambda, xi0]`.
pub fn jet_defect<R: Real, M: PlanarMap<R>>(
    map: &M,
    jet: &(Jet1<R>, Jet1<R>),
    lambda: R,
    xi0: R,
) -> R {
    let mut worst = R::zero();
    let n = 17;
    let lo = xi0 / lambda.abs();
    for k in 0..n {
        let t = R::from_f64(k as f64 / (n - 1) as f64);
        let xi = lo + (xi0 - lo) * t;
        let p = Vec2::new(jet.0.eval(xi), jet.1.eval(xi));
        let q = map.apply(p);
        let r = Vec2::new(jet.0.eval(lambda * xi), jet.1.eval(lambda * xi));
        worst = worst.max_r((q - r).norm());
    }
    worst
}

/// A transversal intersection of two manifold curves.
#[derive(Clone, Copy, Debug)]
pub struct Intersection<R> {
    pub point: Vec2<R>,
    pub param_u: R,
    pub param_s: R,
    /// Angle between tangents, in (0, pi/2].
    pub angle: R,
    /// Sign of cross(tangent_u, tangent_s) at the crossing.
    pub sign: i8,
}

/// All transversal intersections of the two polylines, Newton-refined on
/// the exact globalized parametrizations, sorted along the first curve's
/// parameter. The two curves may live over different maps.
pub fn intersections<R: Real, MU: PlanarMap<R>, MS: PlanarMap<R>>(
    map_u: &MU,
    curve_u: &ManifoldCurve<R>,
    map_s: &MS,
    curve_s: &ManifoldCurve<R>,
) -> Vec<Intersection<R>> {
    let mut raw: Vec<(R, R)> = Vec::new();
    if curve_s.points.len() < 2 || curve_u.points.len() < 2 {
        return Vec::new();
    }
    // Bucket the stable segments on a uniform grid over their bbox.
    let segs_s: Vec<(Vec2<f64>, Vec2<f64>)> = curve_s
        .points
        .windows(2)
        .map(|w| (w[0].p.to_f64(), w[1].p.to_f64()))
        .collect();
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (a, b) in &segs_s {
        min.x = min.x.min(a.x.min(b.x));
        min.y = min.y.min(a.y.min(b.y));
        max.x = max.x.max(a.x.max(b.x));
        max.y = max.y.max(a.y.max(b.y));
    }
    let nb = 128usize;
    let span_x = (max.x - min.x).max(1e-300);
    let span_y = (max.y - min.y).max(1e-300);
    let clampi = |v: f64| -> usize { (v.max(0.0) as usize).min(nb - 1) };
    let cell_range = |a: Vec2<f64>, b: Vec2<f64>| -> (usize, usize, usize, usize) {
        (
            clampi(((a.x.min(b.x) - min.x) / span_x * nb as f64).floor()),
            clampi(((a.x.max(b.x) - min.x) / span_x * nb as f64).floor()),
            clampi(((a.y.min(b.y) - min.y) / span_y * nb as f64).floor()),
            clampi(((a.y.max(b.y) - min.y) / span_y * nb as f64).floor()),
        )
    };
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nb * nb];
    for (i, (a, b)) in segs_s.iter().enumerate() {
        let (x0, x1, y0, y1) = cell_range(*a, *b);
        for bx in x0..=x1 {
            for by in y0..=y1 {
                buckets[bx * nb + by].push(i as u32);
            }
        }
    }
    let seg_intersect =
        |a: Vec2<f64>, b: Vec2<f64>, c: Vec2<f64>, d: Vec2<f64>| -> Option<(f64, f64)> {
            let r = b - a;
            let s = d - c;
            let denom = r.cross(s);
            if denom == 0.0 {
                return None;
            }
            let t = (c - a).cross(s) / denom;
            let u = (c - a).cross(r) / denom;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                Some((t, u))
            } else {
                None
            }
        };
    let mut seen = vec![u32::MAX; segs_s.len()];
    for (ui, w) in curve_u.points.windows(2).enumerate() {
        let a = w[0].p.to_f64();
        let b = w[1].p.to_f64();
        if a.x < min.x && b.x < min.x || a.x > max.x && b.x > max.x {
            continue;
        }
        if a.y < min.y && b.y < min.y || a.y > max.y && b.y > max.y {
            continue;
        }
        let (x0, x1, y0, y1) = cell_range(a, b);
        for bx in x0..=x1 {
            for by in y0..=y1 {
                for &i in &buckets[bx * nb + by] {
                    if seen[i as usize] == ui as u32 {
                        continue;
                    }
                    seen[i as usize] = ui as u32;
                    let (c, d) = segs_s[i as usize];
                    if let Some((t, u)) = seg_intersect(a, b, c, d) {
                        let pu =
                            w[0].param + (w[1].param - w[0].param) * R::from_f64(t);
                        let i = i as usize;
                        let ps = curve_s.points[i].param
                            + (curve_s.points[i + 1].param - curve_s.points[i].param)
                                * R::from_f64(u);
                        raw.push((pu, ps));
                    }
                }
            }
        }
    }
    let mut out: Vec<Intersection<R>> = Vec::new();
    for (mut xi, mut eta) in raw {
        let mut converged = false;
        for _ in 0..80 {
            let (pu, tu, _) = eval_global(map_u, &curve_u.jet, curve_u.lambda, curve_u.xi0, xi);
            let (ps, ts, _) = eval_global(map_s, &curve_s.jet, curve_s.lambda, curve_s.xi0, eta);
            let f = pu - ps;
            let scale = pu.norm().max_r(ps.norm()).max_r(R::one());
            if f.norm() <= scale * R::epsilon() * R::from_f64(64.0) {
                converged = true;
                break;
            }
            let j = Mat2::new(tu.x, -ts.x, tu.y, -ts.y);
            let det = j.det();
            if !det.is_finite() || det.abs() < R::tiny() {
                break;
            }
            let d = j.solve(f);
            xi = xi - d.x;
            eta = eta - d.y;
        }
        if !converged {
            let (pu, _, _) = eval_global(map_u, &curve_u.jet, curve_u.lambda, curve_u.xi0, xi);
            let (ps, _, _) = eval_global(map_s, &curve_s.jet, curve_s.lambda, curve_s.xi0, eta);
            if (pu - ps).norm() > R::from_f64(1e-9) {
                continue;
            }
        }
        let (pu, tu, _) = eval_global(map_u, &curve_u.jet, curve_u.lambda, curve_u.xi0, xi);
        let (_ps, ts, _) = eval_global(map_s, &curve_s.jet, curve_s.lambda, curve_s.xi0, eta);
        let cross = tu.cross(ts);
        let angle = cross.abs().atan2(tu.dot(ts).abs());
        out.push(Intersection {
            point: pu,
            param_u: xi,
            param_s: eta,
            angle,
            sign: if cross > R::zero() { 1 } else { -1 },
        });
    }
    // the local branches cross only at the fixed point: drop detections
    // with both parameters still inside the trust regions
    out.retain(|x| x.param_u.abs() > curve_u.xi0 || x.param_s.abs() > curve_s.xi0);
    out.sort_by(|a, b| a.param_u.partial_cmp(&b.param_u).unwrap());
    out.dedup_by(|a, b| {
        (a.param_u - b.param_u).abs() <= (a.param_u.abs() + b.param_u.abs()) * R::from_f64(1e-8)
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{Inv, Rescaled, StandardMap};

    #[test]
    fn jet_order1_is_eigenvector_tangent() {
        let f = Rescaled::from_h(1.0).unwrap();
        let (jx, jy, lambda) = manifold_jet(&f, Vec2::new(0.0, 0.0), 1).unwrap();
        assert!((lambda - 1.0f64.exp()).abs() < 1e-12);
        let j = f.jacobian(Vec2::new(0.0, 0.0));
        let v = Vec2::new(jx.c[1], jy.c[1]);
        assert!((j.mul_vec(v) - v.scale(lambda)).norm() < 1e-13);
        assert!((v.norm() - 1.0).abs() < 1e-14);
        assert!(v.x > 0.0);
    }

    #[test]
    fn defect_decreases_with_jet_order() {
        let f = Rescaled::from_h(1.0).unwrap();
        let d4 = {
            let (jx, jy, lambda) = manifold_jet(&f, Vec2::new(0.0, 0.0), 4).unwrap();
            jet_defect(&f, &(jx, jy), lambda, 0.1)
        };
        let d8 = {
            let (jx, jy, lambda) = manifold_jet(&f, Vec2::new(0.0, 0.0), 8).unwrap();
            jet_defect(&f, &(jx, jy), lambda, 0.1)
        };
        assert!(d8 < d4, "order 8 defect {d8:e} vs order 4 {d4:e}");
    }

    #[test]
    fn defect_scales_with_order_plus_one_power() {
        let f = Rescaled::from_h(1.0).unwrap();
        let order = 6;
        let (jx, jy, lambda) = manifold_jet(&f, Vec2::new(0.0, 0.0), order).unwrap();
        let jet = (jx, jy);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &r in &[0.2, 0.1, 0.05, 0.025] {
            let d = jet_defect(&f, &jet, lambda, r);
            xs.push(r.ln());
            ys.push(d.ln());
        }
        let (slope, _, _, _) = crate::fit::line_fit(&xs, &ys);
        assert!(
            (slope - (order as f64 + 1.0)).abs() < 0.5,
            "defect slope {slope} vs {}",
            order + 1
        );
    }

    #[test]
    fn global_eval_consistent_across_fundamental_domains() {
        let f = Rescaled::from_h(0.9).unwrap();
        let (jx, jy, lambda) = manifold_jet(&f, Vec2::new(0.0, 0.0), 20).unwrap();
        let jet = (jx, jy);
        let xi0 = 0.05;
        // P(lambda xi) must equal F(P(xi)) across the seam
        let xi = 0.04;
        let (p, _, _) = eval_global(&f, &jet, lambda, xi0, xi);
        let (q, _, _) = eval_global(&f, &jet, lambda, xi0, lambda * xi);
        assert!((f.apply(p) - q).norm() < 1e-13);
        // tangent scaling check by finite differences
        let d = 1e-7;
        let (p1, t, _) = eval_global(&f, &jet, lambda, xi0, 0.2);
        let (p2, _, _) = eval_global(&f, &jet, lambda, xi0, 0.2 + d);
        let fd = (p2 - p1).scale(1.0 / d);
        assert!((fd - t).norm() < 1e-5 * t.norm().max(1.0));
    }

    #[test]
    fn standard_map_manifolds_and_inverse_relation() {
        let m = StandardMap::new(2.0);
        let opts = GrowOptions::window(1.5, 3);
        let c = grow_manifold(&m, Vec2::new(0.0, 0.0), 12, Side::Unstable, &opts).unwrap();
        assert!(c.defect < 1e-12, "defect {:e}", c.defect);
        let j = m.jacobian(Vec2::new(0.0, 0.0));
        let v = Vec2::new(c.jet.0.c[1], c.jet.1.c[1]);
        assert!((j.mul_vec(v) - v.scale(c.lambda)).norm() < 1e-12);
        // stable curve of f is the unstable curve of f^{-1}
        let mi = Inv(&m);
        let cs = grow_manifold(&mi, Vec2::new(0.0, 0.0), 12, Side::Stable, &opts).unwrap();
        assert!(cs.defect < 1e-12);
        assert!((cs.lambda - c.lambda).abs() < 1e-11);
    }

    #[test]
    fn rescaled_manifolds_cross_transversally() {
        // at h = 1 the separatrix splitting is ~2e-7: the two manifolds
        // must intersect in the loop region
        let f = Rescaled::from_h(1.0).unwrap();
        let fi = Inv(&f);
        let opts = GrowOptions {
            center: Vec2::new(1.5, 0.0),
            half_width: 2.0,
            max_turn: 0.05,
            max_chord: 0.1,
            max_expansions: 40,
            max_points: 100_000,
            stop_radius: Some(0.05),
        };
        let cu = grow_manifold(&f, Vec2::new(0.0, 0.0), 24, Side::Unstable, &opts).unwrap();
        let cs = grow_manifold(&fi, Vec2::new(0.0, 0.0), 24, Side::Stable, &opts).unwrap();
        let xs = intersections(&f, &cu, &fi, &cs);
        for x in &xs {
            eprintln!(
                "xi={:.6} eta={:.6} pt=({:.6},{:.6}) angle={:e} sign={}",
                x.param_u, x.param_s, x.point.x, x.point.y, x.angle, x.sign
            );
        }
        assert!(
            xs.len() >= 2,
            "expected at least two primary homoclinic points, got {}",
            xs.len()
        );
        // alternating crossing signs along the unstable parameter
        for w in xs.windows(2) {
            assert_ne!(w[0].sign, w[1].sign, "consecutive crossings must alternate");
        }
        // angles are tiny but positive; the splitting scale at h=1 is ~1e-7
        for x in &xs {
            assert!(x.angle > 0.0 && x.angle < 1e-4, "angle {:e}", x.angle);
        }
    }
}
