//! Planar domains with smooth boundary, their metric data and quadratures.
//!
//! Every domain is described by a closed `C²` parametrization `t ↦ γ(t)` on
//! `[0, 2π)`, positively oriented. Discs and ellipses carry closed forms for
//! membership, boundary distance and ray intersection; general curves fall
//! back on a dense boundary sample refined by Newton iteration.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexPoint = Complex64;

/// Number of boundary samples used for distance, membership and curvature scans.
const DENSE_SAMPLES: usize = 4096;

/// A closed parametrized curve with two continuous derivatives.
pub trait Curve: Send + Sync + fmt::Debug {
    fn point(&self, t: f64) -> Complex64;
    /// dγ/dt
    fn tangent(&self, t: f64) -> Complex64;
    /// d²γ/dt²
    fn second(&self, t: f64) -> Complex64;
}

#[derive(Debug, Clone, Copy)]
pub struct Circle {
    pub center: Complex64,
    pub radius: f64,
}

impl Curve for Circle {
    fn point(&self, t: f64) -> Complex64 {
        self.center + self.radius * Complex64::cis(t)
    }
    fn tangent(&self, t: f64) -> Complex64 {
        Complex64::i() * self.radius * Complex64::cis(t)
    }
    fn second(&self, t: f64) -> Complex64 {
        -self.radius * Complex64::cis(t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EllipseCurve {
    pub center: Complex64,
    pub a: f64,
    pub b: f64,
}

impl Curve for EllipseCurve {
    fn point(&self, t: f64) -> Complex64 {
        self.center + Complex64::new(self.a * t.cos(), self.b * t.sin())
    }
    fn tangent(&self, t: f64) -> Complex64 {
        Complex64::new(-self.a * t.sin(), self.b * t.cos())
    }
    fn second(&self, t: f64) -> Complex64 {
        Complex64::new(-self.a * t.cos(), -self.b * t.sin())
    }
}

/// Trigonometric curve `x(t) = Σ xc_k cos kt + xs_k sin kt`, likewise for `y`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct FourierCurve {
    #[serde(default)]
    pub x_cos: Vec<f64>,
    #[serde(default)]
    pub x_sin: Vec<f64>,
    #[serde(default)]
    pub y_cos: Vec<f64>,
    #[serde(default)]
    pub y_sin: Vec<f64>,
}

impl FourierCurve {
    fn eval(&self, t: f64, order: u32) -> Complex64 {
        let series = |cos: &[f64], sin: &[f64]| -> f64 {
            let mut acc = 0.0;
            for (k, c) in cos.iter().enumerate() {
                let kf = k as f64;
                acc += c * kf.powi(order as i32) * trig_derivative(kf * t, order, true);
            }
            for (k, s) in sin.iter().enumerate() {
                let kf = k as f64;
                acc += s * kf.powi(order as i32) * trig_derivative(kf * t, order, false);
            }
            acc
        };
        Complex64::new(
            series(&self.x_cos, &self.x_sin),
            series(&self.y_cos, &self.y_sin),
        )
    }
}

/// n-th derivative of cos (or sin) evaluated at `x`, without the chain-rule factor.
fn trig_derivative(x: f64, order: u32, cosine: bool) -> f64 {
    let shift = if cosine { 0 } else { 3 };
    match (order + shift) % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

impl Curve for FourierCurve {
    fn point(&self, t: f64) -> Complex64 {
        self.eval(t, 0)
    }
    fn tangent(&self, t: f64) -> Complex64 {
        self.eval(t, 1)
    }
    fn second(&self, t: f64) -> Complex64 {
        self.eval(t, 2)
    }
}

/// Homothetic image `c + ρ (γ(t) - c)` of another curve.
#[derive(Debug, Clone)]
struct ScaledCurve {
    inner: Arc<dyn Curve>,
    center: Complex64,
    factor: f64,
}

impl Curve for ScaledCurve {
    fn point(&self, t: f64) -> Complex64 {
        self.center + self.factor * (self.inner.point(t) - self.center)
    }
    fn tangent(&self, t: f64) -> Complex64 {
        self.factor * self.inner.tangent(t)
    }
    fn second(&self, t: f64) -> Complex64 {
        self.factor * self.inner.second(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Disc { center: Complex64, radius: f64 },
    Ellipse { center: Complex64, a: f64, b: f64 },
    Parametric,
}

/// A bounded, simply connected planar domain with `C²` boundary.
#[derive(Debug, Clone)]
pub struct PlanarDomain {
    kind: DomainKind,
    curve: Arc<dyn Curve>,
    diameter: f64,
    exterior_ball_radius: f64,
    center: Complex64,
    dense: Arc<Vec<Complex64>>,
}

impl PlanarDomain {
    pub fn unit_disc() -> Self {
        Self::disc(Complex64::new(0.0, 0.0), 1.0).expect("unit disc is valid")
    }

    pub fn disc(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Parameter(format!("disc radius must be positive, got {radius}")));
        }
        let curve = Arc::new(Circle { center, radius });
        Ok(Self {
            kind: DomainKind::Disc { center, radius },
            dense: Arc::new(dense_sample(curve.as_ref())),
            curve,
            diameter: 2.0 * radius,
            exterior_ball_radius: radius,
            center,
        })
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        Self::ellipse_at(Complex64::new(0.0, 0.0), a, b)
    }

    pub fn ellipse_at(center: Complex64, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Parameter(format!("ellipse axes must be positive, got a={a}, b={b}")));
        }
        let curve = Arc::new(EllipseCurve { center, a, b });
        let (major, minor) = if a >= b { (a, b) } else { (b, a) };
        Ok(Self {
            kind: DomainKind::Ellipse { center, a, b },
            dense: Arc::new(dense_sample(curve.as_ref())),
            curve,
            diameter: 2.0 * major,
            exterior_ball_radius: minor * minor / major,
            center,
        })
    }

    /// Domain bounded by a general curve. `center` must be an interior point
    /// about which the domain is star-shaped; when `None` the centroid of the
    /// boundary sample is used.
    pub fn parametric(curve: Arc<dyn Curve>, center: Option<Complex64>) -> Result<Self> {
        let start = curve.point(0.0);
        let end = curve.point(TAU);
        if (start - end).norm() > 1e-12 {
            return Err(Error::Geometry(format!(
                "parametrization is not closed: |γ(2π) - γ(0)| = {:.3e}",
                (start - end).norm()
            )));
        }
        let dense = dense_sample(curve.as_ref());
        if !dense.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Geometry("parametrization produced non-finite points".into()));
        }
        check_simple(&dense)?;
        let signed_area = polygon_signed_area(&dense);
        if signed_area <= 0.0 {
            return Err(Error::Geometry(
                "boundary must be positively oriented (counter-clockwise)".into(),
            ));
        }
        let center =
            center.unwrap_or_else(|| dense.iter().sum::<Complex64>() / dense.len() as f64);
        if !point_in_polygon(&dense, center) {
            return Err(Error::Geometry("center is not inside the curve".into()));
        }

        let coarse: Vec<Complex64> = dense.iter().step_by(4).copied().collect();
        let mut diameter: f64 = 0.0;
        for (i, p) in coarse.iter().enumerate() {
            for q in &coarse[i + 1..] {
                diameter = diameter.max((p - q).norm());
            }
        }
        let mut min_radius = f64::INFINITY;
        for k in 0..DENSE_SAMPLES {
            let t = TAU * k as f64 / DENSE_SAMPLES as f64;
            let d1 = curve.tangent(t);
            let d2 = curve.second(t);
            let curvature = (d1.conj() * d2).im.abs() / d1.norm().powi(3);
            if curvature > 0.0 {
                min_radius = min_radius.min(1.0 / curvature);
            }
        }
        let exterior_ball_radius = min_radius.min(diameter);
        if !(exterior_ball_radius > 0.0) {
            return Err(Error::Geometry("boundary curvature is unbounded".into()));
        }
        Ok(Self {
            kind: DomainKind::Parametric,
            curve,
            diameter,
            exterior_ball_radius,
            center,
            dense: Arc::new(dense),
        })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn curve(&self) -> &Arc<dyn Curve> {
        &self.curve
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn exterior_ball_radius(&self) -> f64 {
        self.exterior_ball_radius
    }

    pub fn center(&self) -> Complex64 {
        self.center
    }

    /// Center and radius if this domain is a disc.
    pub fn as_disc(&self) -> Option<(Complex64, f64)> {
        match self.kind {
            DomainKind::Disc { center, radius } => Some((center, radius)),
            _ => None,
        }
    }

    pub fn is_unit_disc(&self) -> bool {
        matches!(self.as_disc(), Some((c, r)) if c.norm() == 0.0 && r == 1.0)
    }

    pub fn label(&self) -> String {
        match self.kind {
            DomainKind::Disc { center, radius } => {
                format!("disc(c={},{},r={})", center.re, center.im, radius)
            }
            DomainKind::Ellipse { a, b, .. } => format!("ellipse(a={a},b={b})"),
            DomainKind::Parametric => "parametric".to_string(),
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return false;
        }
        match self.kind {
            DomainKind::Disc { center, radius } => (z - center).norm() < radius,
            DomainKind::Ellipse { center, a, b } => {
                let p = z - center;
                (p.re / a).powi(2) + (p.im / b).powi(2) < 1.0
            }
            DomainKind::Parametric => point_in_polygon(&self.dense, z),
        }
    }

    pub fn check_interior(&self, z: Complex64) -> Result<()> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(Error::outside(z))
        }
    }

    /// Distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, z: Complex64) -> Result<f64> {
        self.check_interior(z)?;
        if let DomainKind::Disc { center, radius } = self.kind {
            return Ok(radius - (z - center).norm());
        }
        Ok(self.nearest_boundary(z).1)
    }

    /// Distance from an arbitrary point to the boundary curve.
    pub fn boundary_distance_unchecked(&self, z: Complex64) -> f64 {
        if let DomainKind::Disc { center, radius } = self.kind {
            return (radius - (z - center).norm()).abs();
        }
        self.nearest_boundary(z).1
    }

    /// Parameter and distance of the boundary point nearest to `z`.
    fn nearest_boundary(&self, z: Complex64) -> (f64, f64) {
        let n = self.dense.len();
        let mut order: Vec<(f64, usize)> =
            self.dense.iter().enumerate().map(|(i, p)| ((p - z).norm_sqr(), i)).collect();
        order.select_nth_unstable_by(3, |a, b| a.0.total_cmp(&b.0));
        let mut best = (0.0, f64::INFINITY);
        for &(_, i) in order.iter().take(4) {
            let mut t = TAU * i as f64 / n as f64;
            let h = TAU / n as f64;
            let (lo, hi) = (t - h, t + h);
            for _ in 0..30 {
                let p = self.curve.point(t) - z;
                let d1 = self.curve.tangent(t);
                let d2 = self.curve.second(t);
                let g = (p.conj() * d1).re;
                let gp = d1.norm_sqr() + (p.conj() * d2).re;
                if gp <= 0.0 {
                    break;
                }
                let step = g / gp;
                t = (t - step).clamp(lo, hi);
                if step.abs() < 1e-15 {
                    break;
                }
            }
            let dist = (self.curve.point(t) - z).norm();
            let sampled = (self.dense[i] - z).norm();
            let (t, dist) = if dist <= sampled { (t, dist) } else { (TAU * i as f64 / n as f64, sampled) };
            if dist < best.1 {
                best = (t, dist);
            }
        }
        best
    }

    /// Distance from `origin` to the boundary along direction `e^{iθ}`.
    /// Requires the domain to be star-shaped with respect to `origin`.
    pub fn ray_exit(&self, origin: Complex64, theta: f64) -> Result<f64> {
        let dir = Complex64::cis(theta);
        match self.kind {
            DomainKind::Disc { center, radius } => {
                let p = origin - center;
                let b = (dir.conj() * p).re;
                let c = p.norm_sqr() - radius * radius;
                let disc = b * b - c;
                if c >= 0.0 || disc < 0.0 {
                    return Err(Error::outside(origin));
                }
                Ok(-b + disc.sqrt())
            }
            DomainKind::Ellipse { center, a, b } => {
                let p = origin - center;
                let qa = (dir.re / a).powi(2) + (dir.im / b).powi(2);
                let qb = 2.0 * (p.re * dir.re / (a * a) + p.im * dir.im / (b * b));
                let qc = (p.re / a).powi(2) + (p.im / b).powi(2) - 1.0;
                if qc >= 0.0 {
                    return Err(Error::outside(origin));
                }
                let disc = qb * qb - 4.0 * qa * qc;
                Ok((-qb + disc.sqrt()) / (2.0 * qa))
            }
            DomainKind::Parametric => self.ray_exit_parametric(origin, dir),
        }
    }

    fn ray_exit_parametric(&self, origin: Complex64, dir: Complex64) -> Result<f64> {
        self.check_interior(origin)?;
        let n = self.dense.len();
        let cross = |z: Complex64| (dir.conj() * (z - origin)).im;
        let along = |z: Complex64| (dir.conj() * (z - origin)).re;
        let mut hits = Vec::new();
        for i in 0..n {
            let (p, q) = (self.dense[i], self.dense[(i + 1) % n]);
            let (fp, fq) = (cross(p), cross(q));
            if fp <= 0.0 && fq > 0.0 && along(p).max(along(q)) > 0.0 {
                hits.push(i);
            }
        }
        if hits.len() != 1 {
            return Err(Error::Geometry(format!(
                "domain is not star-shaped about ({}, {}): ray meets boundary {} times",
                origin.re,
                origin.im,
                hits.len()
            )));
        }
        let h = TAU / n as f64;
        let mut lo = h * hits[0] as f64;
        let mut hi = lo + h;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cross(self.curve.point(mid)) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(along(self.curve.point(0.5 * (lo + hi))))
    }

    /// Radial gauge about the center: 0 at the center, 1 on the boundary.
    pub fn gauge(&self, z: Complex64) -> Result<f64> {
        let p = z - self.center;
        if p.norm() == 0.0 {
            return Ok(0.0);
        }
        Ok(p.norm() / self.ray_exit(self.center, p.arg())?)
    }

    /// Homothetic copy scaled by `factor` about the center.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Parameter(format!("scale factor must be positive, got {factor}")));
        }
        let c = self.center;
        match self.kind {
            DomainKind::Disc { center, radius } => {
                Self::disc(c + factor * (center - c), factor * radius)
            }
            DomainKind::Ellipse { center, a, b } => {
                Self::ellipse_at(c + factor * (center - c), factor * a, factor * b)
            }
            DomainKind::Parametric => Self::parametric(
                Arc::new(ScaledCurve { inner: self.curve.clone(), center: c, factor }),
                Some(c),
            ),
        }
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::Disc { radius, .. } => PI * radius * radius,
            DomainKind::Ellipse { a, b, .. } => PI * a * b,
            DomainKind::Parametric => {
                let q = self.boundary_quadrature(1024).expect("1024 nodes is valid");
                // (1/2i) ∮ conj(ζ) dζ
                (q.contour_integral(|z| z.conj()) / Complex64::new(0.0, 2.0)).re
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)` of the boundary sample.
    pub fn bounding_box(&self) -> (Complex64, Complex64) {
        let mut lo = Complex64::new(f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for z in self.dense.iter() {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        (lo, hi)
    }

    /// Dense boundary sample (4096 equispaced parameters).
    pub fn boundary_samples(&self) -> &[Complex64] {
        &self.dense
    }

    pub fn boundary_quadrature(&self, n: usize) -> Result<BoundaryQuadrature> {
        BoundaryQuadrature::new(self, n)
    }
}

fn dense_sample(curve: &dyn Curve) -> Vec<Complex64> {
    (0..DENSE_SAMPLES)
        .map(|k| curve.point(TAU * k as f64 / DENSE_SAMPLES as f64))
        .collect()
}

fn polygon_signed_area(pts: &[Complex64]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|i| (pts[i].conj() * pts[(i + 1) % n]).im).sum::<f64>()
}

fn point_in_polygon(pts: &[Complex64], z: Complex64) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.im > z.im) != (b.im > z.im) {
            let x = a.re + (z.im - a.im) * (b.re - a.re) / (b.im - a.im);
            if z.re < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Rejects curves whose 512-gon has intersecting non-adjacent edges.
fn check_simple(dense: &[Complex64]) -> Result<()> {
    let step = dense.len() / 512;
    let poly: Vec<Complex64> = dense.iter().step_by(step).copied().collect();
    let n = poly.len();
    let orient = |a: Complex64, b: Complex64, c: Complex64| ((b - a).conj() * (c - a)).im;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let d1 = orient(a, b, c);
            let d2 = orient(a, b, d);
            let d3 = orient(c, d, a);
            let d4 = orient(c, d, b);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                return Err(Error::Geometry("boundary curve self-intersects".into()));
            }
        }
    }
    Ok(())
}

/// Equispaced trapezoidal rule on the boundary parameter.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub params: Vec<f64>,
    pub nodes: Vec<Complex64>,
    /// dζ/dt at the nodes.
    pub tangents: Vec<Complex64>,
    /// d²ζ/dt² at the nodes.
    pub seconds: Vec<Complex64>,
    /// Parameter weights 2π/N.
    pub weights: Vec<f64>,
}

impl BoundaryQuadrature {
    pub const MIN_NODES: usize = 16;

    pub fn new(dom: &PlanarDomain, n: usize) -> Result<Self> {
        if n < Self::MIN_NODES {
            return Err(Error::Parameter(format!(
                "boundary quadrature needs at least {} nodes, got {n}",
                Self::MIN_NODES
            )));
        }
        let h = TAU / n as f64;
        let params: Vec<f64> = (0..n).map(|k| h * k as f64).collect();
        let curve = dom.curve();
        Ok(Self {
            nodes: params.iter().map(|&t| curve.point(t)).collect(),
            tangents: params.iter().map(|&t| curve.tangent(t)).collect(),
            seconds: params.iter().map(|&t| curve.second(t)).collect(),
            weights: vec![h; n],
            params,
        })
    }

    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    /// ∮ f(ζ) dζ
    pub fn contour_integral<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.tangents)
            .zip(&self.weights)
            .map(|((&z, &dz), &w)| f(z) * dz * w)
            .sum()
    }

    pub fn arc_length(&self) -> f64 {
        self.tangents.iter().zip(&self.weights).map(|(dz, w)| dz.norm() * w).sum()
    }

    /// Complex line elements dζ_j = γ'(t_j) h.
    pub fn line_elements(&self) -> Vec<Complex64> {
        self.tangents.iter().zip(&self.weights).map(|(dz, w)| dz * w).collect()
    }
}

/// Resolution of the polar area rule about a marked point.
///
/// Rays leave the marked point at `angular` equispaced angles; along each ray
/// the segment to the boundary is split into geometric panels of ratio 1/2,
/// down to an innermost panel of relative size `2^-levels`, each carrying
/// `gauss` Gauss–Legendre nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarRule {
    pub angular: usize,
    pub gauss: usize,
    pub levels: usize,
}

impl Default for PolarRule {
    fn default() -> Self {
        Self::with_floor(1e-6, 64, 6)
    }
}

impl PolarRule {
    /// Rule whose innermost panel is at most `floor_fraction · d` across.
    pub fn with_floor(floor_fraction: f64, angular: usize, gauss: usize) -> Self {
        let levels = (1.0 / floor_fraction).log2().ceil().max(1.0) as usize;
        Self { angular, gauss, levels }
    }

    /// Doubles the angular count and adds one Gauss node and one level.
    pub fn refined(&self) -> Self {
        Self { angular: 2 * self.angular, gauss: self.gauss + 1, levels: self.levels + 1 }
    }

    pub fn nodes_per_ray(&self) -> usize {
        (self.levels + 1) * self.gauss
    }

    /// Panel-relative radial nodes and weights on [0, 1].
    fn radial(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let gl = GaussLegendre::new(self.gauss.max(2))
            .map_err(|e| Error::Parameter(format!("Gauss-Legendre rule: {e}")))?;
        let mut edges = vec![0.0];
        for j in (0..=self.levels).rev() {
            edges.push(0.5f64.powi(j as i32));
        }
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for (x, w) in gl.iter() {
                xs.push(a + (b - a) * 0.5 * (x + 1.0));
                ws.push((b - a) * 0.5 * w);
            }
        }
        Ok((xs, ws))
    }
}

/// Area quadrature on a domain, in polar coordinates about an interior point.
#[derive(Debug, Clone)]
pub struct AreaQuadrature {
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
    /// Singular-refinement center, when the rule was built around a kernel pole.
    pub marked: Option<Complex64>,
    /// Polar radius of every node about the origin of the rule.
    pub radii: Vec<f64>,
}

impl AreaQuadrature {
    /// Polar rule about `origin`, which must see the whole boundary.
    pub fn polar(dom: &PlanarDomain, origin: Complex64, rule: &PolarRule) -> Result<Self> {
        dom.check_interior(origin)?;
        if rule.angular < 4 {
            return Err(Error::Parameter("polar rule needs at least 4 rays".into()));
        }
        let (xs, ws) = rule.radial()?;
        let n_theta = rule.angular;
        let dtheta = TAU / n_theta as f64;
        let mut nodes = Vec::with_capacity(n_theta * xs.len());
        let mut weights = Vec::with_capacity(n_theta * xs.len());
        let mut radii = Vec::with_capacity(n_theta * xs.len());
        for j in 0..n_theta {
            let theta = dtheta * (j as f64 + 0.5);
            let reach = dom.ray_exit(origin, theta)?;
            let dir = Complex64::cis(theta);
            for (&x, &w) in xs.iter().zip(&ws) {
                let r = reach * x;
                nodes.push(origin + r * dir);
                weights.push(reach * w * r * dtheta);
                radii.push(r);
            }
        }
        Ok(Self { nodes, weights, marked: None, radii })
    }

    /// Polar rule about `origin` with `panels` equal radial panels per ray.
    pub fn uniform(
        dom: &PlanarDomain,
        origin: Complex64,
        panels: usize,
        gauss: usize,
        angular: usize,
    ) -> Result<Self> {
        dom.check_interior(origin)?;
        if panels == 0 || angular < 4 {
            return Err(Error::Parameter("uniform polar rule needs panels and at least 4 rays".into()));
        }
        let gl = GaussLegendre::new(gauss.max(2))
            .map_err(|e| Error::Parameter(format!("Gauss-Legendre rule: {e}")))?;
        let dtheta = TAU / angular as f64;
        let h = 1.0 / panels as f64;
        let mut q = Self { nodes: Vec::new(), weights: Vec::new(), marked: None, radii: Vec::new() };
        for j in 0..angular {
            let theta = dtheta * (j as f64 + 0.5);
            let reach = dom.ray_exit(origin, theta)?;
            let dir = Complex64::cis(theta);
            for p in 0..panels {
                for (x, w) in gl.iter() {
                    let s = h * (p as f64 + 0.5 * (x + 1.0));
                    let r = reach * s;
                    q.nodes.push(origin + r * dir);
                    q.weights.push(reach * 0.5 * h * w * r * dtheta);
                    q.radii.push(r);
                }
            }
        }
        Ok(q)
    }

    /// Polar rule refined around a kernel pole `w`.
    pub fn singular(dom: &PlanarDomain, w: Complex64, rule: &PolarRule) -> Result<Self> {
        let mut q = Self::polar(dom, w, rule)?;
        q.marked = Some(w);
        Ok(q)
    }

    /// Rule centered at the domain center, for smooth integrands.
    pub fn regular(dom: &PlanarDomain, rule: &PolarRule) -> Result<Self> {
        Self::polar(dom, dom.center(), rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// ∫ f dA
    pub fn integrate<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Complex64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| f(z) * w).sum()
    }
}

/// One member of an exhausting family of subdomains.
///
/// The inner domain is the homothetic copy of the outer domain by `scale`
/// about its center. The diffeomorphism `h` is the identity on the core
/// `{gauge ≤ core}` and contracts the collar `core < gauge ≤ 1` onto the
/// inner collar with a `C²` quintic profile; when the collar would make the
/// map non-monotone it degenerates to the pure homothety (`core = 0`).
#[derive(Debug, Clone)]
pub struct ExhaustionStep {
    pub level: usize,
    pub scale: f64,
    pub core: f64,
    /// dist(∂ inner, ∂ outer)
    pub boundary_gap: f64,
    pub inner_domain: PlanarDomain,
    outer: PlanarDomain,
}

/// Preferred core gauge of the exhaustion diffeomorphism.
pub const DEFAULT_EXHAUSTION_CORE: f64 = 0.55;

impl ExhaustionStep {
    /// Image of a point of the closed outer domain.
    pub fn map(&self, z: Complex64) -> Complex64 {
        let c = self.outer.center();
        let gauge = self.outer_gauge(z);
        c + (z - c) * (1.0 - (1.0 - self.scale) * self.profile(gauge))
    }

    /// Jacobian of the map as the Wirtinger pair (∂h/∂z, ∂h/∂z̄), by central differences.
    pub fn map_derivatives(&self, z: Complex64) -> (Complex64, Complex64) {
        let eps = 1e-6 * self.outer.diameter();
        let dx = (self.map(z + eps) - self.map(z - eps)) / (2.0 * eps);
        let dy = (self.map(z + Complex64::new(0.0, eps)) - self.map(z - Complex64::new(0.0, eps)))
            / (2.0 * eps);
        let i = Complex64::i();
        (0.5 * (dx - i * dy), 0.5 * (dx + i * dy))
    }

    fn outer_gauge(&self, z: Complex64) -> f64 {
        let c = self.outer.center();
        let p = z - c;
        if p.norm() == 0.0 {
            return 0.0;
        }
        let reach = self.outer.ray_exit(c, p.arg()).unwrap_or(p.norm());
        p.norm() / reach
    }

    fn profile(&self, gauge: f64) -> f64 {
        let t = ((gauge - self.core) / (1.0 - self.core)).clamp(0.0, 1.0);
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Builds exhaustion level `l` with the default core gauge.
pub fn exhaustion(dom: &PlanarDomain, level: usize) -> Result<ExhaustionStep> {
    exhaustion_with_core(dom, level, DEFAULT_EXHAUSTION_CORE)
}

pub fn exhaustion_with_core(
    dom: &PlanarDomain,
    level: usize,
    core: f64,
) -> Result<ExhaustionStep> {
    if level < 2 {
        return Err(Error::Parameter(format!("exhaustion level must be ≥ 2, got {level}")));
    }
    let l = level as f64;
    let target = 0.5 * (1.0 / (l + 1.0) + 1.0 / l);
    let gap = |scale: f64| -> Result<f64> {
        let inner = dom.scaled(scale)?;
        Ok(inner
            .boundary_samples()
            .iter()
            .step_by(16)
            .map(|&z| dom.boundary_distance_unchecked(z))
            .fold(f64::INFINITY, f64::min))
    };
    let scale = match dom.kind() {
        DomainKind::Disc { radius, .. } => 1.0 - target / radius,
        _ => {
            let (mut lo, mut hi) = (1e-6, 1.0 - 1e-12);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if gap(mid)? > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::Geometry(format!(
            "exhaustion scale {scale} for level {level} is outside (0, 1)"
        )));
    }
    let boundary_gap = match dom.kind() {
        DomainKind::Disc { radius, .. } => (1.0 - scale) * radius,
        _ => gap(scale)?,
    };
    // Monotonicity of r ↦ r(1 - (1-ρ) s) needs (1-ρ)(1 + 1.875/(1-core)) < 1.
    let admissible = 1.0 - 2.0 * (1.0 - scale) / scale;
    let core = core.min(admissible).max(0.0);
    Ok(ExhaustionStep {
        level,
        scale,
        core,
        boundary_gap,
        inner_domain: dom.scaled(scale)?,
        outer: dom.clone(),
    })
}

/// Quadrature sizes a descriptor may carry for the domain it describes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureDefaults {
    pub boundary_nodes: usize,
    pub angular: usize,
    pub gauss: usize,
    pub floor: f64,
}

impl Default for QuadratureDefaults {
    fn default() -> Self {
        Self { boundary_nodes: 256, angular: 64, gauss: 6, floor: 1e-6 }
    }
}

impl QuadratureDefaults {
    pub fn polar_rule(&self) -> PolarRule {
        PolarRule::with_floor(self.floor, self.angular, self.gauss)
    }
}

/// Shape part of a domain descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainShape {
    UnitDisc,
    Disc {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: [f64; 2],
        a: f64,
        b: f64,
    },
    Parametric {
        #[serde(default)]
        center: Option<[f64; 2]>,
        #[serde(default)]
        x_cos: Vec<f64>,
        #[serde(default)]
        x_sin: Vec<f64>,
        #[serde(default)]
        y_cos: Vec<f64>,
        #[serde(default)]
        y_sin: Vec<f64>,
    },
}

/// A domain descriptor as stored in a TOML file.
///
/// ```toml
/// kind = "ellipse"
/// a = 2.0
/// b = 1.0
///
/// [quadrature]
/// boundary_nodes = 256
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    #[serde(flatten)]
    pub shape: DomainShape,
    #[serde(default)]
    pub quadrature: QuadratureDefaults,
}

impl DomainDescriptor {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Descriptor(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Descriptor(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Builtin descriptors: `disc`, `unit-disc`, `ellipse` (axes 2 and 1).
    pub fn builtin(name: &str) -> Option<Self> {
        let shape = match name {
            "disc" | "unit-disc" => DomainShape::UnitDisc,
            "ellipse" => DomainShape::Ellipse { center: [0.0, 0.0], a: 2.0, b: 1.0 },
            _ => return None,
        };
        Some(Self { shape, quadrature: QuadratureDefaults::default() })
    }

    /// A builtin name or a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(d) => Ok(d),
            None => Self::load(std::path::Path::new(name_or_path)),
        }
    }
}

pub fn make_domain(desc: &DomainDescriptor) -> Result<PlanarDomain> {
    let pt = |c: [f64; 2]| Complex64::new(c[0], c[1]);
    match &desc.shape {
        DomainShape::UnitDisc => Ok(PlanarDomain::unit_disc()),
        DomainShape::Disc { center, radius } => PlanarDomain::disc(pt(*center), *radius),
        DomainShape::Ellipse { center, a, b } => PlanarDomain::ellipse_at(pt(*center), *a, *b),
        DomainShape::Parametric { center, x_cos, x_sin, y_cos, y_sin } => {
            let curve = FourierCurve {
                x_cos: x_cos.clone(),
                x_sin: x_sin.clone(),
                y_cos: y_cos.clone(),
                y_sin: y_sin.clone(),
            };
            PlanarDomain::parametric(Arc::new(curve), center.map(pt))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[derive(Debug)]
    struct OpenArc;
    impl Curve for OpenArc {
        fn point(&self, t: f64) -> Complex64 {
            Complex64::cis(0.9 * t)
        }
        fn tangent(&self, t: f64) -> Complex64 {
            0.9 * Complex64::i() * Complex64::cis(0.9 * t)
        }
        fn second(&self, t: f64) -> Complex64 {
            -0.81 * Complex64::cis(0.9 * t)
        }
    }

    #[derive(Debug)]
    struct FigureEight;
    impl Curve for FigureEight {
        fn point(&self, t: f64) -> Complex64 {
            Complex64::new(t.sin(), (2.0 * t).sin() / 2.0)
        }
        fn tangent(&self, t: f64) -> Complex64 {
            Complex64::new(t.cos(), (2.0 * t).cos())
        }
        fn second(&self, t: f64) -> Complex64 {
            Complex64::new(-t.sin(), -2.0 * (2.0 * t).sin())
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let text = "kind = \"ellipse\"\na = 2.0\nb = 1.0\n\n[quadrature]\nboundary_nodes = 128\n";
        let d = DomainDescriptor::from_toml(text).unwrap();
        assert_eq!(d.quadrature.boundary_nodes, 128);
        assert_eq!(d.quadrature.angular, 64);
        let back = DomainDescriptor::from_toml(&d.to_toml().unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(make_domain(&d).unwrap().diameter(), 4.0);
        let bad = "kind = \"ellipse\"\na = -1.0\nb = 1.0\n";
        assert!(matches!(make_domain(&DomainDescriptor::from_toml(bad).unwrap()), Err(Error::Parameter(_))));
        assert!(DomainDescriptor::from_toml("kind = \"square\"").is_err());
        let curve = "kind = \"parametric\"\nx_cos = [0.0, 1.0]\ny_sin = [0.0, 0.5]\n";
        let dom = make_domain(&DomainDescriptor::from_toml(curve).unwrap()).unwrap();
        assert!((dom.diameter() - 2.0).abs() < 0.02);
    }

    #[test]
    fn disc_and_ellipse_metrics() {
        let d = PlanarDomain::unit_disc();
        assert_eq!(d.diameter(), 2.0);
        assert_eq!(d.exterior_ball_radius(), 1.0);
        let e = PlanarDomain::ellipse(2.0, 1.0).unwrap();
        assert_eq!(e.diameter(), 4.0);
        assert_abs_diff_eq!(e.exterior_ball_radius(), 0.5);
    }

    #[test]
    fn degenerate_parameters_rejected() {
        assert!(matches!(PlanarDomain::ellipse(0.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(PlanarDomain::ellipse(1.0, -2.0), Err(Error::Parameter(_))));
        assert!(matches!(
            PlanarDomain::disc(Complex64::new(0.0, 0.0), 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn open_and_self_intersecting_curves_rejected() {
        assert!(matches!(
            PlanarDomain::parametric(Arc::new(OpenArc), None),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            PlanarDomain::parametric(Arc::new(FigureEight), Some(Complex64::new(0.3, 0.0))),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn fourier_circle_matches_disc() {
        let curve = FourierCurve {
            x_cos: vec![0.0, 1.0],
            y_sin: vec![0.0, 1.0],
            ..Default::default()
        };
        let dom = PlanarDomain::parametric(Arc::new(curve), Some(Complex64::new(0.0, 0.0))).unwrap();
        assert!((dom.diameter() - 2.0).abs() < 0.02);
        assert!((dom.exterior_ball_radius() - 1.0).abs() < 1e-9);
        let z = Complex64::new(0.3, -0.2);
        assert_abs_diff_eq!(dom.distance_to_boundary(z).unwrap(), 1.0 - z.norm(), epsilon = 1e-10);
        assert_abs_diff_eq!(dom.ray_exit(z, 0.7).unwrap(), PlanarDomain::unit_disc().ray_exit(z, 0.7).unwrap(), epsilon = 1e-10);
        assert!((dom.area() - PI).abs() < 1e-10);
    }

    #[test]
    fn boundary_distance_examples() {
        let d = PlanarDomain::unit_disc();
        assert_eq!(d.distance_to_boundary(Complex64::new(0.0, 0.0)).unwrap(), 1.0);
        assert_eq!(d.distance_to_boundary(Complex64::new(0.5, 0.0)).unwrap(), 0.5);
        assert!(matches!(
            d.distance_to_boundary(Complex64::new(1.0, 0.0)),
            Err(Error::Membership { .. })
        ));
        let e = PlanarDomain::ellipse(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(e.distance_to_boundary(Complex64::new(0.0, 0.0)).unwrap(), 1.0, epsilon = 1e-12);
        // Nearest point of the ellipse to (1.5, 0) lies off the axis.
        let p = Complex64::new(1.5, 0.0);
        let brute = (0..200_000)
            .map(|k| (e.curve().point(TAU * k as f64 / 200_000.0) - p).norm())
            .fold(f64::INFINITY, f64::min);
        assert!((e.distance_to_boundary(p).unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn boundary_quadrature_examples() {
        let d = PlanarDomain::unit_disc();
        let q = d.boundary_quadrature(64).unwrap();
        let two_pi_i = Complex64::new(0.0, TAU);
        let w = Complex64::new(0.3, 0.0);
        let inside = q.contour_integral(|z| 1.0 / (z - w)) / two_pi_i;
        assert!((inside - 1.0).norm() < 1e-12);
        // The trapezoid aliasing error here is exactly (2/3)^64 / (1 - (2/3)^64).
        let outside = q.contour_integral(|z| 1.0 / (z - Complex64::new(1.5, 0.0))) / two_pi_i;
        let alias = (2.0f64 / 3.0).powi(64);
        assert!((outside.norm() - alias / (1.0 - alias)).abs() < 1e-15);
        assert!(outside.norm() < 1e-11);
        assert_abs_diff_eq!(q.arc_length(), TAU, epsilon = 1e-12);
        assert!(matches!(d.boundary_quadrature(8), Err(Error::Parameter(_))));
    }

    #[test]
    fn polar_area_rule_integrates_area_and_moments() {
        for dom in [PlanarDomain::unit_disc(), PlanarDomain::ellipse(2.0, 1.0).unwrap()] {
            let w = Complex64::new(0.4, 0.3);
            let q = AreaQuadrature::singular(&dom, w, &PolarRule::with_floor(1e-4, 64, 4)).unwrap();
            assert!((q.total_weight() - dom.area()).abs() < 1e-8 * dom.area(), "{}", q.total_weight() - dom.area());
            assert!(q.nodes.iter().all(|&z| dom.contains(z)));
            // ∫ |z|² over the ellipse is πab(a² + b²)/4.
            let m2 = q.integrate(|z| Complex64::new(z.norm_sqr(), 0.0)).re;
            let (a, b) = match dom.kind() {
                DomainKind::Disc { .. } => (1.0, 1.0),
                DomainKind::Ellipse { a, b, .. } => (a, b),
                _ => unreachable!(),
            };
            assert!((m2 - PI * a * b * (a * a + b * b) / 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn exhaustion_examples() {
        let d = PlanarDomain::unit_disc();
        let step = exhaustion(&d, 4).unwrap();
        assert!(step.boundary_gap > 0.2 && step.boundary_gap < 0.25);
        assert_eq!(step.map(Complex64::new(0.0, 0.0)), Complex64::new(0.0, 0.0));
        let s2 = exhaustion(&d, 2).unwrap();
        let s3 = exhaustion(&d, 3).unwrap();
        assert!(s2.inner_domain.as_disc().unwrap().1 < s3.inner_domain.as_disc().unwrap().1);
        assert!(matches!(exhaustion(&d, 1), Err(Error::Parameter(_))));
        // Boundary goes to the inner boundary.
        let b = Complex64::cis(1.1);
        assert!((step.map(b).norm() - step.scale).abs() < 1e-12);
    }

    #[test]
    fn exhaustion_of_ellipse_hits_gap_window() {
        let e = PlanarDomain::ellipse(2.0, 1.0).unwrap();
        for l in [2, 5, 9] {
            let s = exhaustion(&e, l).unwrap();
            let lf = l as f64;
            assert!(s.boundary_gap > 1.0 / (lf + 1.0) && s.boundary_gap < 1.0 / lf, "level {l}: {}", s.boundary_gap);
        }
    }
}
