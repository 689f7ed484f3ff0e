//! Dynamically defined two-branch Cantor sets: cylinder refinement, gap
//! enumeration, lateral (left/right) thickness, distortion estimates, and
//! Hausdorff-dimension lower bounds with independent oracles.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::real::Real;

/// Closed interval with `lo < hi`. Serializes as the pair `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = String;
    fn try_from(v: [f64; 2]) -> std::result::Result<Self, String> {
        Interval::new(v[0], v[1]).map_err(|e| e.to_string())
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> [f64; 2] {
        [iv.lo, iv.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(CoreError::InvalidInput(format!(
                "interval requires lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, o: &Interval, slack: f64) -> bool {
        self.lo - slack <= o.lo && o.hi <= self.hi + slack
    }

    pub fn intersects(&self, o: &Interval) -> bool {
        self.lo <= o.hi && o.lo <= self.hi
    }
}

/// A monotone contraction: an inverse branch of the expanding map,
/// carrying one piece of the Markov partition onto the whole set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Branch {
    /// `x -> offset + orientation * ratio * x` with `0 < ratio < 1`.
    Affine {
        ratio: f64,
        offset: f64,
        orientation: i8,
    },
    /// Polynomial inverse branch `x -> sum c_k x^k`; monotonicity and
    /// contraction are certified on a dense grid at construction.
    Poly { coeffs: Vec<f64> },
}

impl Branch {
    pub fn eval<R: Real>(&self, x: R) -> R {
        match self {
            Branch::Affine {
                ratio,
                offset,
                orientation,
            } => {
                let s = R::from_f64(*orientation as f64 * *ratio);
                R::from_f64(*offset) + s * x
            }
            Branch::Poly { coeffs } => {
                let mut acc = R::zero();
                for &c in coeffs.iter().rev() {
                    acc = acc * x + R::from_f64(c);
                }
                acc
            }
        }
    }

    pub fn deriv<R: Real>(&self, x: R) -> R {
        match self {
            Branch::Affine {
                ratio, orientation, ..
            } => R::from_f64(*orientation as f64 * *ratio),
            Branch::Poly { coeffs } => {
                let mut acc = R::zero();
                for k in (1..coeffs.len()).rev() {
                    acc = acc * x + R::from_f64(coeffs[k] * k as f64);
                }
                acc
            }
        }
    }

    /// Image of an interval under the (monotone) branch.
    fn image(&self, iv: Interval) -> Interval {
        let a = self.eval(iv.lo);
        let b = self.eval(iv.hi);
        if a <= b {
            Interval { lo: a, hi: b }
        } else {
            Interval { lo: b, hi: a }
        }
    }
}

/// A two-branch expanding system on an interval, described through its
/// inverse branches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CantorSystem {
    pub hull: Interval,
    pub branches: [Branch; 2],
}

const VALIDATION_GRID: usize = 257;

impl CantorSystem {
    /// Validate and normalize: the stated hull is tightened to the
    /// invariant hull of the iterated function system so that cylinder
    /// hulls are exact.
    pub fn new(hull: Interval, branches: [Branch; 2]) -> Result<Self> {
        let mut sys = CantorSystem { hull, branches };
        sys.validate_branches()?;
        sys.tighten_hull();
        sys.validate_images()?;
        Ok(sys)
    }

    pub fn middle_thirds() -> Self {
        CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 0.0,
                    orientation: 1,
                },
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 2.0 / 3.0,
                    orientation: 1,
                },
            ],
        )
        .expect("middle-thirds system is valid")
    }

    pub fn middle_fifths() -> Self {
        CantorSystem::affine(0.4, 0.4).expect("middle-fifths system is valid")
    }

    /// Affine system on [0, 1] with prescribed branch ratios: pieces
    /// `[0, r0]` and `[1 - r1, 1]`.
    pub fn affine(r0: f64, r1: f64) -> Result<Self> {
        if !(r0 > 0.0 && r1 > 0.0 && r0 + r1 < 1.0) {
            return Err(CoreError::InvalidSystem(format!(
                "affine ratios must satisfy r0, r1 > 0 and r0 + r1 < 1, got ({r0}, {r1})"
            )));
        }
        CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Affine {
                    ratio: r0,
                    offset: 0.0,
                    orientation: 1,
                },
                Branch::Affine {
                    ratio: r1,
                    offset: 1.0 - r1,
                    orientation: 1,
                },
            ],
        )
    }

    fn validate_branches(&self) -> Result<()> {
        for (bi, b) in self.branches.iter().enumerate() {
            let mut min_d = f64::INFINITY;
            let mut max_d: f64 = 0.0;
            let mut sign = 0.0f64;
            for k in 0..VALIDATION_GRID {
                let x = self.hull.lo + self.hull.len() * k as f64 / (VALIDATION_GRID - 1) as f64;
                let d: f64 = b.deriv(x);
                if k == 0 {
                    sign = d.signum();
                }
                if d == 0.0 || d.signum() != sign {
                    return Err(CoreError::InvalidSystem(format!(
                        "branch {bi} is not strictly monotone on the hull"
                    )));
                }
                min_d = min_d.min(d.abs());
                max_d = max_d.max(d.abs());
            }
            if max_d >= 1.0 {
                return Err(CoreError::InvalidSystem(format!(
                    "branch {bi} is not a contraction (|derivative| up to {max_d})"
                )));
            }
            let _ = min_d;
        }
        Ok(())
    }

    fn tighten_hull(&mut self) {
        let mut hull = self.hull;
        for _ in 0..512 {
            let i0 = self.branches[0].image(hull);
            let i1 = self.branches[1].image(hull);
            let next = Interval {
                lo: i0.lo.min(i1.lo),
                hi: i0.hi.max(i1.hi),
            };
            if (next.lo - hull.lo).abs() <= 1e-15 * hull.len().abs()
                && (next.hi - hull.hi).abs() <= 1e-15 * hull.len().abs()
            {
                hull = next;
                break;
            }
            hull = next;
        }
        self.hull = hull;
    }

    fn validate_images(&self) -> Result<()> {
        let i0 = self.branches[0].image(self.hull);
        let i1 = self.branches[1].image(self.hull);
        let slack = 1e-12 * self.hull.len();
        if !self.hull.contains_interval(&i0, slack) || !self.hull.contains_interval(&i1, slack) {
            return Err(CoreError::InvalidSystem(
                "branch images escape the hull".to_string(),
            ));
        }
        let (first, second) = if i0.lo <= i1.lo { (i0, i1) } else { (i1, i0) };
        if first.hi + slack >= second.lo {
            return Err(CoreError::InvalidSystem(
                "branch images overlap or touch".to_string(),
            ));
        }
        Ok(())
    }

    fn branch_image_of(&self, b: usize, iv: Interval) -> Interval {
        self.branches[b].image(iv)
    }
}

/// Depth-`n` refinement: hulls of all cylinders for words of length
/// `m <= depth`. Level `m` holds `2^m` intervals; the word
/// `(a_0, ..., a_{m-1})` lives at index `a_0 * 2^{m-1} + ... + a_{m-1}`.
#[derive(Clone, Debug)]
pub struct CylinderTree {
    pub depth: usize,
    pub levels: Vec<Vec<Interval>>,
}

/// Materialize the cylinder refinement of `system` to `depth`.
pub fn refine(system: &CantorSystem, depth: usize) -> Result<CylinderTree> {
    let mut levels = vec![vec![system.hull]];
    for m in 1..=depth {
        let prev = &levels[m - 1];
        let mut cur = Vec::with_capacity(prev.len() * 2);
        for a0 in 0..2usize {
            for v in prev {
                cur.push(system.branch_image_of(a0, *v));
            }
        }
        // nesting and disjointness checks
        let slack = 1e-12 * system.hull.len();
        for (w, iv) in cur.iter().enumerate() {
            let parent = parent_interval(&levels, m, w);
            if !parent.contains_interval(iv, slack) {
                return Err(CoreError::InvalidSystem(format!(
                    "cylinder at level {m} escapes its parent"
                )));
            }
        }
        let mut sorted: Vec<Interval> = cur.clone();
        sorted.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        for pair in sorted.windows(2) {
            if pair[0].hi >= pair[1].lo {
                return Err(CoreError::InvalidSystem(format!(
                    "cylinders overlap at level {m}"
                )));
            }
        }
        levels.push(cur);
    }
    Ok(CylinderTree { depth, levels })
}

/// Parent of word `w` (length `m`) is the word of length `m-1` dropping
/// the last symbol: index `w_parent` such that cyl(a0..a_{m-2}) contains
/// cyl(a0..a_{m-1}).
fn parent_interval(levels: &[Vec<Interval>], m: usize, w: usize) -> Interval {
    // Word bits: a0 is the most significant of m bits. Dropping the last
    // symbol maps index w -> w >> 1 ... only if a_{m-1} were the LSB under
    // the chosen packing w = a0 * 2^{m-1} + v. It is: v indexes the word
    // (a1.., built the same way), so dropping the LAST symbol is w >> 1
    // only for the suffix packing. With prefix packing, the parent of
    // (a0, tail) is (a0, parent(tail)); recursion grounds at length 1.
    fn parent_index(m: usize, w: usize) -> usize {
        if m == 1 {
            0
        } else {
            let a0 = w >> (m - 1);
            let tail = w & ((1 << (m - 1)) - 1);
            (a0 << (m - 2)) | parent_index(m - 1, tail)
        }
    }
    levels[m - 1][parent_index(m, w)]
}

/// A bounded complementary component of the refinement cover, with its
/// order and the two bridges adjacent at the matching level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gap {
    pub interval: Interval,
    pub order: usize,
    pub left_bridge: Interval,
    pub right_bridge: Interval,
    /// Word (level, index) of the left bridge; identifies the gap.
    pub left_word: (usize, usize),
}

/// Enumerate every gap of the depth-level cover, each exactly once, with
/// bridges taken at the gap's own refinement level.
pub fn enumerate_gaps(tree: &CylinderTree) -> Result<Vec<Gap>> {
    if tree.depth < 1 {
        return Err(CoreError::InvalidInput(
            "gap enumeration needs depth >= 1".to_string(),
        ));
    }
    let hull_len = tree.levels[0][0].len();
    let mut gaps: Vec<Gap> = Vec::new();
    for m in 1..=tree.depth {
        let mut order: Vec<(Interval, usize)> = tree.levels[m]
            .iter()
            .cloned()
            .zip(0..)
            .collect();
        order.sort_by(|a, b| a.0.lo.partial_cmp(&b.0.lo).unwrap());
        for k in 0..order.len() - 1 {
            let (l, li) = order[k];
            let (r, ri) = order[k + 1];
            let gap = Interval {
                lo: l.hi,
                hi: r.lo,
            };
            if gap.hi - gap.lo < 1e-3 * f64::EPSILON * hull_len {
                return Err(CoreError::DegenerateGap {
                    left: format!("level {m} index {li}"),
                    right: format!("level {m} index {ri}"),
                    length: gap.hi - gap.lo,
                });
            }
            // New gap iff it sits strictly inside a single level-(m-1)
            // cylinder; otherwise it extends a gap of smaller order.
            let slack = 1e-12 * hull_len;
            let is_new = tree.levels[m - 1]
                .iter()
                .any(|parent| parent.contains_interval(&gap, slack));
            if is_new {
                gaps.push(Gap {
                    interval: gap,
                    order: m - 1,
                    left_bridge: l,
                    right_bridge: r,
                    left_word: (m, li),
                });
            }
        }
    }
    Ok(gaps)
}

/// Minima over enumerated gaps of the bridge-to-gap ratios.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThicknessReport {
    pub tau_l: f64,
    pub tau_r: f64,
    pub depth: usize,
    pub argmin_left: (usize, usize),
    pub argmin_right: (usize, usize),
    pub hull: Interval,
    pub gaps: Vec<Gap>,
}

/// Lateral thickness of the depth-level refinement: for every gap `U`,
/// the ratios `|L_U|/|U|` and `|R_U|/|U|`, minimized.
pub fn lateral_thickness(tree: &CylinderTree) -> Result<ThicknessReport> {
    let gaps = enumerate_gaps(tree)?;
    let mut tau_l = f64::INFINITY;
    let mut tau_r = f64::INFINITY;
    let mut argmin_left = (0, 0);
    let mut argmin_right = (0, 0);
    for g in &gaps {
        let gl = g.interval.len();
        let rl = g.left_bridge.len() / gl;
        let rr = g.right_bridge.len() / gl;
        if rl < tau_l {
            tau_l = rl;
            argmin_left = g.left_word;
        }
        if rr < tau_r {
            tau_r = rr;
            argmin_right = g.left_word;
        }
    }
    Ok(ThicknessReport {
        tau_l,
        tau_r,
        depth: tree.depth,
        argmin_left,
        argmin_right,
        hull: tree.levels[0][0],
        gaps,
    })
}

/// Thickness of the Markov partition itself: the order-zero gap only.
pub fn partition_thickness(system: &CantorSystem) -> Result<(f64, f64)> {
    let tree = refine(system, 1)?;
    let gaps = enumerate_gaps(&tree)?;
    let g = &gaps[0];
    Ok((
        g.left_bridge.len() / g.interval.len(),
        g.right_bridge.len() / g.interval.len(),
    ))
}

/// Depth-doubling convergence for nonlinear systems: refine until two
/// successive thickness values agree to `rel_tol`, or `max_depth`.
pub fn lateral_thickness_converged(
    system: &CantorSystem,
    rel_tol: f64,
    max_depth: usize,
) -> Result<ThicknessReport> {
    let mut depth = 1;
    let mut last = lateral_thickness(&refine(system, depth)?)?;
    while depth < max_depth {
        depth = (depth * 2).min(max_depth);
        let next = lateral_thickness(&refine(system, depth)?)?;
        let dl = (next.tau_l - last.tau_l).abs() / last.tau_l.max(1e-300);
        let dr = (next.tau_r - last.tau_r).abs() / last.tau_r.max(1e-300);
        if dl < rel_tol && dr < rel_tol {
            return Ok(next);
        }
        last = next;
    }
    Ok(last)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionMethod {
    ExactBisection,
    LogFormula,
    MoranOracle,
    BoxOracle,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DimensionBound {
    pub d: f64,
    pub method: DimensionMethod,
    pub tolerance: f64,
}

pub const DIMENSION_TOL: f64 = 1e-12;

/// Solve `tau_l^d + tau_r^d = (1 + tau_l + tau_r)^d` for `d` in `(0, 1)`
/// by bisection. The left side minus the right side is `+1` at `d = 0`
/// and negative at `d = 1`, so the bracket is guaranteed.
pub fn dimension_lower_bound_exact(tau_l: f64, tau_r: f64, tol: f64) -> Result<DimensionBound> {
    if !(tau_l > 0.0 && tau_r > 0.0) || !tau_l.is_finite() || !tau_r.is_finite() {
        return Err(CoreError::Domain(format!(
            "thicknesses must be positive and finite, got ({tau_l}, {tau_r})"
        )));
    }
    if !(tol > 0.0) {
        return Err(CoreError::Domain("tolerance must be positive".to_string()));
    }
    let s = 1.0 + tau_l + tau_r;
    let f = |d: f64| tau_l.powf(d) + tau_r.powf(d) - s.powf(d);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    // f(0) = +1 exactly; f(1) = -1 exactly.
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DimensionBound {
        d: 0.5 * (lo + hi),
        method: DimensionMethod::ExactBisection,
        tolerance: tol,
    })
}

/// The closed-form log-ratio lower bound; always a strict minorant of the
/// exact bound.
pub fn dimension_lower_bound_log(tau_l: f64, tau_r: f64) -> Result<DimensionBound> {
    if !(tau_l > 0.0 && tau_r > 0.0) || !tau_l.is_finite() || !tau_r.is_finite() {
        return Err(CoreError::Domain(format!(
            "thicknesses must be positive and finite, got ({tau_l}, {tau_r})"
        )));
    }
    let b1 = ((1.0 + tau_r / (1.0 + tau_l)).ln()) / ((1.0 + (1.0 + tau_r) / tau_l).ln());
    let b2 = ((1.0 + tau_l / (1.0 + tau_r)).ln()) / ((1.0 + (1.0 + tau_l) / tau_r).ln());
    Ok(DimensionBound {
        d: b1.max(b2),
        method: DimensionMethod::LogFormula,
        tolerance: 0.0,
    })
}

/// Unique `d` with `r0^d + r1^d = 1` (self-similar dimension oracle).
pub fn moran_dimension(r0: f64, r1: f64) -> Result<DimensionBound> {
    if !(r0 > 0.0 && r0 < 1.0 && r1 > 0.0 && r1 < 1.0 && r0 + r1 < 1.0) {
        return Err(CoreError::Domain(format!(
            "Moran ratios must lie in (0,1) with r0 + r1 < 1, got ({r0}, {r1})"
        )));
    }
    let f = |d: f64| r0.powf(d) + r1.powf(d) - 1.0;
    let mut lo = 0.0f64; // f(0) = 1 > 0
    let mut hi = 1.0f64; // f(1) = r0 + r1 - 1 < 0
    for _ in 0..200 {
        if hi - lo <= DIMENSION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DimensionBound {
        d: 0.5 * (lo + hi),
        method: DimensionMethod::MoranOracle,
        tolerance: DIMENSION_TOL,
    })
}

/// Left-right gap lemma check: `true` guarantees the two Cantor sets
/// intersect (hulls overlap, neither hull hides in a gap of the other,
/// and both cross products of lateral thicknesses exceed 1 strictly).
pub fn gap_lemma(
    report_s: &ThicknessReport,
    report_u: &ThicknessReport,
    hull_s: Interval,
    hull_u: Interval,
) -> bool {
    if !hull_s.intersects(&hull_u) {
        return false;
    }
    let inside_gap = |hull: &Interval, gaps: &[Gap]| {
        gaps.iter().any(|g| {
            g.interval.lo < hull.lo && hull.hi < g.interval.hi
        })
    };
    if inside_gap(&hull_s, &report_u.gaps) || inside_gap(&hull_u, &report_s.gaps) {
        return false;
    }
    report_s.tau_l * report_u.tau_r > 1.0 && report_s.tau_r * report_u.tau_l > 1.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistortionEstimate {
    pub c: f64,
    pub depth: usize,
    pub samples: usize,
}

/// Sampled supremum of the log cross-ratio distortion of `psi^n` over
/// cylinders up to `depth`. The distortion of an expanding iterate on a
/// cylinder equals the distortion of the corresponding inverse-branch
/// composition on the hull, which is what gets sampled (Chebyshev grid,
/// all distinct point triples).
pub fn distortion_estimate(
    system: &CantorSystem,
    depth: usize,
    samples: usize,
) -> Result<DistortionEstimate> {
    if samples < 3 {
        return Err(CoreError::InvalidInput(
            "distortion sampling needs at least 3 points per cylinder".to_string(),
        ));
    }
    let hull = system.hull;
    // Chebyshev points on the hull.
    let grid: Vec<f64> = (0..samples)
        .map(|k| {
            let t = ((2 * k + 1) as f64) * std::f64::consts::PI / (2 * samples) as f64;
            0.5 * (hull.lo + hull.hi) - 0.5 * hull.len() * t.cos()
        })
        .collect();
    let mut sup: f64 = 0.0;
    // Iterate words of every length n <= depth.
    for n in 1..=depth {
        for w in 0..(1usize << n) {
            let img: Vec<f64> = grid
                .iter()
                .map(|&x| {
                    let mut v = x;
                    // compose phi_{a0} o ... o phi_{a_{n-1}}: apply the last
                    // symbol first
                    for pos in (0..n).rev() {
                        let b = (w >> (n - 1 - pos)) & 1;
                        v = system.branches[b].eval(v);
                    }
                    v
                })
                .collect();
            for i in 0..samples {
                for j in 0..samples {
                    if j == i {
                        continue;
                    }
                    for k in 0..samples {
                        if k == i || k == j {
                            continue;
                        }
                        let denom_dom = grid[k] - grid[i];
                        let num_dom = grid[j] - grid[i];
                        let num_img = img[j] - img[i];
                        let den_img = img[k] - img[i];
                        if num_dom == 0.0 || denom_dom == 0.0 || num_img == 0.0 || den_img == 0.0 {
                            continue;
                        }
                        let r = ((num_img / den_img) * (denom_dom / num_dom)).abs().ln();
                        if r > sup {
                            sup = r;
                        }
                    }
                }
            }
        }
    }
    Ok(DistortionEstimate {
        c: sup,
        depth,
        samples,
    })
}

/// Thickness transfer under distortion: `e^{-c} tau <= tau(K) <= e^{c} tau`.
pub fn thickness_interval(tau_partition: f64, c: f64) -> (f64, f64) {
    ((-c).exp() * tau_partition, c.exp() * tau_partition)
}

/// Least-squares box-counting dimension of a planar point set over dyadic
/// scales `2^{-j}`, `j = scale_lo..=scale_hi`. Returns the bound and the
/// fit residual (rms in log-count units).
pub fn box_dimension(
    points: &[(f64, f64)],
    scale_lo: u32,
    scale_hi: u32,
) -> Result<(DimensionBound, f64)> {
    if points.len() < 1000 {
        return Err(CoreError::InvalidInput(format!(
            "box counting needs at least 1000 points, got {}",
            points.len()
        )));
    }
    if scale_hi < scale_lo + 3 {
        return Err(CoreError::InvalidInput(
            "box counting needs at least 4 dyadic scales".to_string(),
        ));
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span = (max_x - min_x).max(max_y - min_y);
    if span <= 0.0 {
        return Err(CoreError::Domain(
            "degenerate point set: all points equal".to_string(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut cells = std::collections::HashSet::new();
    for j in scale_lo..=scale_hi {
        cells.clear();
        let inv_eps = (1u64 << j) as f64 / span;
        for &(x, y) in points {
            let cx = ((x - min_x) * inv_eps).floor() as i64;
            let cy = ((y - min_y) * inv_eps).floor() as i64;
            cells.insert((cx, cy));
        }
        xs.push((j as f64) * std::f64::consts::LN_2 - span.ln());
        ys.push((cells.len() as f64).ln());
    }
    let (slope, _b, rms, _se) = crate::fit::line_fit(&xs, &ys);
    Ok((
        DimensionBound {
            d: slope,
            method: DimensionMethod::BoxOracle,
            tolerance: rms,
        },
        rms,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_thirds_refine_depth1() {
        let sys = CantorSystem::middle_thirds();
        let tree = refine(&sys, 1).unwrap();
        assert_eq!(tree.levels[1].len(), 2);
        assert!((tree.levels[1][0].lo - 0.0).abs() < 1e-15);
        assert!((tree.levels[1][0].hi - 1.0 / 3.0).abs() < 1e-15);
        assert!((tree.levels[1][1].lo - 2.0 / 3.0).abs() < 1e-15);
        assert!((tree.levels[1][1].hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn depth0_single_cylinder() {
        let sys = CantorSystem::middle_thirds();
        let tree = refine(&sys, 0).unwrap();
        assert_eq!(tree.levels.len(), 1);
        assert_eq!(tree.levels[0][0], sys.hull);
    }

    #[test]
    fn middle_fifths_depth2_cylinder_lengths() {
        // pieces [0, 2/5] and [3/5, 1]; depth 2 gives 4 cylinders of 4/25
        let sys = CantorSystem::middle_fifths();
        let tree = refine(&sys, 2).unwrap();
        assert_eq!(tree.levels[2].len(), 4);
        for iv in &tree.levels[2] {
            assert!((iv.len() - 4.0 / 25.0).abs() < 1e-14, "{:?}", iv);
        }
    }

    #[test]
    fn middle_thirds_gaps_orders_and_lengths() {
        let sys = CantorSystem::middle_thirds();
        let tree = refine(&sys, 2).unwrap();
        let gaps = enumerate_gaps(&tree).unwrap();
        let mut orders: Vec<usize> = gaps.iter().map(|g| g.order).collect();
        orders.sort();
        assert_eq!(orders, vec![0, 1, 1]);
        let mut lens: Vec<f64> = gaps.iter().map(|g| g.interval.len()).collect();
        lens.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((lens[0] - 1.0 / 9.0).abs() < 1e-14);
        assert!((lens[1] - 1.0 / 9.0).abs() < 1e-14);
        assert!((lens[2] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn middle_thirds_order0_bridges() {
        let sys = CantorSystem::middle_thirds();
        let tree = refine(&sys, 1).unwrap();
        let gaps = enumerate_gaps(&tree).unwrap();
        assert_eq!(gaps.len(), 1);
        let g = &gaps[0];
        assert_eq!(g.order, 0);
        assert!((g.left_bridge.lo - 0.0).abs() < 1e-15 && (g.left_bridge.hi - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.right_bridge.lo - 2.0 / 3.0).abs() < 1e-15 && (g.right_bridge.hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_affine_depth1_gap_geometry() {
        let sys = CantorSystem::affine(0.5, 0.2).unwrap();
        let tree = refine(&sys, 1).unwrap();
        let gaps = enumerate_gaps(&tree).unwrap();
        let g = &gaps[0];
        assert!((g.interval.len() - 0.3).abs() < 1e-14);
        assert!((g.left_bridge.len() - 0.5).abs() < 1e-14);
        assert!((g.right_bridge.len() - 0.2).abs() < 1e-14);
    }

    #[test]
    fn thickness_middle_thirds_all_depths() {
        let sys = CantorSystem::middle_thirds();
        for depth in 1..=8 {
            let rep = lateral_thickness(&refine(&sys, depth).unwrap()).unwrap();
            assert!((rep.tau_l - 1.0).abs() < 1e-12, "depth {depth}");
            assert!((rep.tau_r - 1.0).abs() < 1e-12, "depth {depth}");
        }
    }

    #[test]
    fn thickness_middle_fifths() {
        let sys = CantorSystem::middle_fifths();
        let rep = lateral_thickness(&refine(&sys, 4).unwrap()).unwrap();
        assert!((rep.tau_l - 2.0).abs() < 1e-12);
        assert!((rep.tau_r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn thickness_asymmetric_affine_scale_invariant() {
        let sys = CantorSystem::affine(0.5, 0.2).unwrap();
        for depth in 1..=6 {
            let rep = lateral_thickness(&refine(&sys, depth).unwrap()).unwrap();
            assert!((rep.tau_l - 5.0 / 3.0).abs() < 1e-11, "depth {depth}: {}", rep.tau_l);
            assert!((rep.tau_r - 2.0 / 3.0).abs() < 1e-11, "depth {depth}: {}", rep.tau_r);
        }
    }

    #[test]
    fn partition_thickness_examples() {
        let (l, r) = partition_thickness(&CantorSystem::middle_thirds()).unwrap();
        assert!((l - 1.0).abs() < 1e-13 && (r - 1.0).abs() < 1e-13);
        let (l, r) = partition_thickness(&CantorSystem::affine(0.4, 0.4).unwrap()).unwrap();
        assert!((l - 2.0).abs() < 1e-13 && (r - 2.0).abs() < 1e-13);
        let (l, r) = partition_thickness(&CantorSystem::affine(0.5, 0.2).unwrap()).unwrap();
        assert!((l - 5.0 / 3.0).abs() < 1e-13 && (r - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn exact_bound_symmetric_cases() {
        // (1,1): 2 = 3^d
        let b = dimension_lower_bound_exact(1.0, 1.0, 1e-12).unwrap();
        assert!((b.d - 2f64.ln() / 3f64.ln()).abs() < 1e-10);
        // (2,2): 2*2^d = 5^d => d = ln2/(ln5 - ln2)
        let b = dimension_lower_bound_exact(2.0, 2.0, 1e-12).unwrap();
        assert!((b.d - 2f64.ln() / (5f64.ln() - 2f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn exact_bound_asymmetric_oracle_value() {
        // frozen from the bisection oracle itself at tight tolerance
        let b = dimension_lower_bound_exact(10.0, 0.1, 1e-14).unwrap();
        let f = |d: f64| 10f64.powf(d) + 0.1f64.powf(d) - 11.1f64.powf(d);
        assert!(f(b.d).abs() < 1e-10);
        assert!((b.d - 0.596).abs() < 5e-4, "{}", b.d);
    }

    #[test]
    fn log_bound_values_and_symmetry() {
        let b = dimension_lower_bound_log(1.0, 1.0).unwrap();
        assert!((b.d - 1.5f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!((b.d - 0.36907).abs() < 1e-5);
        let b = dimension_lower_bound_log(10.0, 0.1).unwrap();
        assert!((b.d - 0.49084).abs() < 1e-4, "{}", b.d);
        let exact = dimension_lower_bound_exact(10.0, 0.1, 1e-12).unwrap();
        assert!(b.d < exact.d);
        // swap symmetry
        let b2 = dimension_lower_bound_log(0.1, 10.0).unwrap();
        assert!((b.d - b2.d).abs() < 1e-14);
        let e2 = dimension_lower_bound_exact(0.1, 10.0, 1e-12).unwrap();
        assert!((exact.d - e2.d).abs() < 1e-11);
    }

    #[test]
    fn moran_examples() {
        let b = moran_dimension(1.0 / 3.0, 1.0 / 3.0).unwrap();
        assert!((b.d - 2f64.ln() / 3f64.ln()).abs() < 1e-10);
        // (1/2, 1/4): z + z^2 = 1 with z = 2^-d, z = (sqrt 5 - 1)/2
        let b = moran_dimension(0.5, 0.25).unwrap();
        let z = (5f64.sqrt() - 1.0) / 2.0;
        assert!((b.d - (-z.log2())).abs() < 1e-10);
        assert!((b.d - 0.6942).abs() < 1e-4);
        for &r in &[0.1, 0.25, 0.4] {
            let b = moran_dimension(r, r).unwrap();
            assert!((b.d - 2f64.ln() / (1.0 / r).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn moran_domain_errors() {
        assert!(moran_dimension(0.6, 0.5).is_err());
        assert!(moran_dimension(0.0, 0.5).is_err());
        assert!(dimension_lower_bound_exact(-1.0, 1.0, 1e-12).is_err());
        assert!(dimension_lower_bound_log(0.0, 1.0).is_err());
    }

    #[test]
    fn thickness_interval_examples() {
        let (lo, hi) = thickness_interval(1.0, 0.0);
        assert_eq!((lo, hi), (1.0, 1.0));
        let (lo, hi) = thickness_interval(1.0, 0.202);
        assert!((lo - 0.8171).abs() < 1e-4);
        assert!((hi - 1.2239).abs() < 1e-4);
    }

    #[test]
    fn affine_distortion_is_zero() {
        let sys = CantorSystem::affine(0.45, 0.3).unwrap();
        let d = distortion_estimate(&sys, 4, 9).unwrap();
        assert!(d.c < 1e-12, "{}", d.c);
    }

    #[test]
    fn nonlinear_distortion_positive_and_monotone_in_samples() {
        let sys = CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Poly {
                    coeffs: vec![0.0, 1.0 / 3.0, 1.0 / 50.0],
                },
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 2.0 / 3.0,
                    orientation: 1,
                },
            ],
        )
        .unwrap();
        let d5 = distortion_estimate(&sys, 3, 5).unwrap();
        let d9 = distortion_estimate(&sys, 3, 9).unwrap();
        let d17 = distortion_estimate(&sys, 3, 17).unwrap();
        assert!(d5.c > 0.0);
        assert!(d9.c >= d5.c * (1.0 - 1e-12));
        assert!(d17.c >= d9.c * (1.0 - 1e-12));
    }

    #[test]
    fn nonlinear_distortion_close_to_dense_grid_oracle() {
        let sys = CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Poly {
                    coeffs: vec![0.0, 1.0 / 3.0, 1.0 / 50.0],
                },
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 2.0 / 3.0,
                    orientation: 1,
                },
            ],
        )
        .unwrap();
        let est = distortion_estimate(&sys, 2, 17).unwrap();
        let oracle = distortion_estimate(&sys, 2, 61).unwrap();
        assert!(est.c <= oracle.c + 1e-12);
        assert!((oracle.c - est.c) / oracle.c < 0.10, "est {} oracle {}", est.c, oracle.c);
    }

    #[test]
    fn thickness_enclosure_for_mildly_nonlinear_system() {
        let sys = CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Poly {
                    coeffs: vec![0.0, 1.0 / 3.0, 1.0 / 50.0],
                },
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 2.0 / 3.0,
                    orientation: 1,
                },
            ],
        )
        .unwrap();
        let (pl, pr) = partition_thickness(&sys).unwrap();
        let c = distortion_estimate(&sys, 8, 17).unwrap().c;
        let rep = lateral_thickness(&refine(&sys, 8).unwrap()).unwrap();
        let (llo, lhi) = thickness_interval(pl, c);
        let (rlo, rhi) = thickness_interval(pr, c);
        assert!(rep.tau_l >= llo - 1e-9 && rep.tau_l <= lhi + 1e-9, "{} in [{}, {}]", rep.tau_l, llo, lhi);
        assert!(rep.tau_r >= rlo - 1e-9 && rep.tau_r <= rhi + 1e-9, "{} in [{}, {}]", rep.tau_r, rlo, rhi);
    }

    #[test]
    fn monotone_refinement_of_thickness() {
        let sys = CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Poly {
                    coeffs: vec![0.0, 0.42, -0.04],
                },
                Branch::Affine {
                    ratio: 0.35,
                    offset: 0.65,
                    orientation: 1,
                },
            ],
        )
        .unwrap();
        let mut last = (f64::INFINITY, f64::INFINITY);
        for depth in 1..=7 {
            let rep = lateral_thickness(&refine(&sys, depth).unwrap()).unwrap();
            assert!(rep.tau_l <= last.0 + 1e-12);
            assert!(rep.tau_r <= last.1 + 1e-12);
            last = (rep.tau_l, rep.tau_r);
        }
    }

    #[test]
    fn gap_lemma_cases() {
        let fifths = CantorSystem::middle_fifths();
        let rep = lateral_thickness(&refine(&fifths, 6).unwrap()).unwrap();
        assert!(gap_lemma(&rep, &rep, rep.hull, rep.hull));
        // products exactly 1: strict inequality required
        let thirds = CantorSystem::middle_thirds();
        let rep3 = lateral_thickness(&refine(&thirds, 6).unwrap()).unwrap();
        assert!(!gap_lemma(&rep3, &rep3, rep3.hull, rep3.hull));
        // disjoint hulls
        let hull_shift = Interval { lo: 5.0, hi: 6.0 };
        assert!(!gap_lemma(&rep, &rep, rep.hull, hull_shift));
    }

    #[test]
    fn gap_lemma_cross_products() {
        // (10, 0.05) vs (0.05, 10): cross product 0.05 * 0.05 < 1
        let mut rep_a = lateral_thickness(&refine(&CantorSystem::middle_fifths(), 3).unwrap()).unwrap();
        let mut rep_b = rep_a.clone();
        rep_a.tau_l = 10.0;
        rep_a.tau_r = 0.05;
        rep_b.tau_l = 0.05;
        rep_b.tau_r = 10.0;
        assert!(!gap_lemma(&rep_a, &rep_b, rep_a.hull, rep_b.hull));
    }

    #[test]
    fn hull_tightening_recovers_invariant_hull() {
        // stated hull [−1, 2] but the true invariant hull is [0, 1]
        let sys = CantorSystem::new(
            Interval { lo: -1.0, hi: 2.0 },
            [
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 0.0,
                    orientation: 1,
                },
                Branch::Affine {
                    ratio: 1.0 / 3.0,
                    offset: 2.0 / 3.0,
                    orientation: 1,
                },
            ],
        )
        .unwrap();
        assert!(sys.hull.lo.abs() < 1e-12);
        assert!((sys.hull.hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_overlapping_and_escaping_systems() {
        let bad = CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Affine {
                    ratio: 0.7,
                    offset: 0.0,
                    orientation: 1,
                },
                Branch::Affine {
                    ratio: 0.7,
                    offset: 0.3,
                    orientation: 1,
                },
            ],
        );
        assert!(bad.is_err());
        let expanding = CantorSystem::new(
            Interval { lo: 0.0, hi: 1.0 },
            [
                Branch::Affine {
                    ratio: 1.2,
                    offset: 0.0,
                    orientation: 1,
                },
                Branch::Affine {
                    ratio: 0.2,
                    offset: 0.8,
                    orientation: 1,
                },
            ],
        );
        assert!(expanding.is_err());
    }

    #[test]
    fn box_dimension_unit_square() {
        // deterministic low-discrepancy points in the unit square
        let mut pts = Vec::new();
        let phi = 0.6180339887498949f64;
        let psi = 0.7548776662466927f64;
        for k in 0..100_000u64 {
            pts.push(((k as f64 * phi).fract(), (k as f64 * psi).fract()));
        }
        let (b, _rms) = box_dimension(&pts, 2, 6).unwrap();
        assert!((b.d - 2.0).abs() < 0.1, "{}", b.d);
    }

    #[test]
    fn box_dimension_segment() {
        let pts: Vec<(f64, f64)> = (0..20_000)
            .map(|k| {
                let t = k as f64 / 19_999.0;
                (t, 0.25 + 0.5 * t)
            })
            .collect();
        let (b, _rms) = box_dimension(&pts, 4, 9).unwrap();
        assert!((b.d - 1.0).abs() < 0.05, "{}", b.d);
    }

    #[test]
    fn box_dimension_middle_thirds_endpoints() {
        let sys = CantorSystem::middle_thirds();
        let tree = refine(&sys, 12).unwrap();
        let pts: Vec<(f64, f64)> = tree.levels[12]
            .iter()
            .flat_map(|iv| [(iv.lo, 0.0), (iv.hi, 0.0)])
            .collect();
        let (b, _rms) = box_dimension(&pts, 3, 7).unwrap();
        let target = 2f64.ln() / 3f64.ln();
        assert!((b.d - target).abs() < 0.05, "{} vs {}", b.d, target);
    }

    #[test]
    fn box_dimension_degenerate_rejected() {
        let pts = vec![(1.0, 1.0); 2000];
        assert!(box_dimension(&pts, 2, 6).is_err());
    }

    #[test]
    fn cantor_system_json_round_trip() {
        let sys = CantorSystem::affine(0.5, 0.2).unwrap();
        let s = serde_json::to_string(&sys).unwrap();
        assert!(s.contains("\"hull\""));
        assert!(s.contains("\"affine\""));
        let back: CantorSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back.hull, sys.hull);
    }
}
