//! Integral representations on the unit bidisc `D₁ × D₂`.
//!
//! The Bochner–Martinelli formula, the operator
//!
//! ```text
//! 𝒯f(z) = −(2πi)⁻¹ ∫_{D₁} f₁(ζ₁, z₂)/(ζ₁ − z₁) dζ̄₁∧dζ₁
//!         −(2πi)⁻¹ ∫_{D₂} f₂(z₁, ζ₂)/(ζ₂ − z₂) dζ̄₂∧dζ₂
//!         −(2πi)⁻² ∫_{D₁×D₂} ∂f₂/∂ζ̄₁ / ((ζ₁ − z₁)(ζ₂ − z₂)) dV
//! ```
//!
//! with `dV = dζ̄₁∧dζ₁∧dζ̄₂∧dζ₂`, the representation `u = 𝒯∂̄u + C_{bD₁×bD₂}u`
//! with the iterated Cauchy integral over the torus, and the canonical
//! solution `u − Pu` through the polydisc Bergman projection.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SolutionField, Targets};
use crate::forms::Potential;
use crate::geometry::{AreaQuadrature, PlanarDomain, PolarRule};
use crate::product::{stencil_dbar_residual, Form01, FormFn, ProductDomain};
use crate::report::{EstimateReport, InequalityId};
use crate::sampling::point_in_disc;
use crate::solve1d::AREA_FORM;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Points within this distance of the unit circle count as boundary points.
const EDGE_TOL: f64 = 1e-12;

/// A function on the closed unit bidisc, with its `∂̄` when known.
#[derive(Clone)]
pub struct BidiscField {
    pub name: String,
    pub u: FormFn,
    pub dbar: Option<Form01>,
}

impl std::fmt::Debug for BidiscField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BidiscField")
            .field("name", &self.name)
            .field("dbar", &self.dbar.as_ref().map(|d| d.name.clone()))
            .finish()
    }
}

impl BidiscField {
    pub fn new(name: impl Into<String>, u: FormFn) -> Self {
        Self { name: name.into(), u, dbar: None }
    }

    pub fn with_dbar(mut self, f: Form01) -> Self {
        self.dbar = Some(f);
        self
    }

    /// A polynomial potential with its exact `∂̄` and mixed derivative.
    pub fn from_potential(p: &Potential) -> Result<Self> {
        if p.dim() != 2 {
            return Err(Error::Parameter(format!("{} is not a function on the bidisc", p.name)));
        }
        Ok(Self::new(p.name.clone(), p.as_fn()).with_dbar(p.form()))
    }

    pub fn eval(&self, z: &[C]) -> C {
        (self.u)(z)
    }

    pub fn has_derivative_oracle(&self) -> bool {
        self.dbar.as_ref().is_some_and(|f| f.mixed.contains_key(&vec![0, 1]))
    }

    fn form(&self) -> Result<&Form01> {
        self.dbar
            .as_ref()
            .ok_or_else(|| Error::Data(format!("field {} has no dbar oracle", self.name)))
    }
}

/// Quadrature of the Bergman projection.
///
/// Each factor carries `angular` equispaced angles times `radial`
/// Gauss–Legendre radii on `[0, 1]`. With `degree = None` the kernel is
/// integrated directly; with `Some(d)` it is replaced by its expansion in the
/// orthonormal monomials `√((a+1)(b+1))/π · z₁^a z₂^b`, `a, b ≤ d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRule {
    pub angular: usize,
    pub radial: usize,
    pub degree: Option<usize>,
}

impl ProjectionRule {
    pub const KERNEL: Self = Self { angular: 64, radial: 24, degree: None };
    pub const MODAL: Self = Self { angular: 14, radial: 6, degree: Some(6) };

    fn check(&self) -> Result<()> {
        if self.angular < 4 || self.radial < 2 {
            return Err(Error::Parameter("projection rule needs 4 angles and 2 radii".into()));
        }
        if let Some(d) = self.degree {
            if 2 * d + 1 >= self.angular {
                return Err(Error::Parameter(format!(
                    "degree {d} aliases on {} angles",
                    self.angular
                )));
            }
        }
        Ok(())
    }
}

/// Quadrature resolutions for the bidisc operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixRule {
    /// Polar rule about interior poles of the Cauchy kernel.
    pub polar: PolarRule,
    /// Polar rule of the Bochner–Martinelli volume term.
    pub volume: PolarRule,
    /// Trapezoid nodes per boundary circle.
    pub boundary: usize,
    /// Gauss nodes in angle and radius for poles on the unit circle.
    pub edge: usize,
    pub projection: ProjectionRule,
}

impl Default for AppendixRule {
    fn default() -> Self {
        Self {
            polar: PolarRule { angular: 12, gauss: 3, levels: 5 },
            volume: PolarRule { angular: 16, gauss: 4, levels: 14 },
            boundary: 64,
            edge: 12,
            projection: ProjectionRule::MODAL,
        }
    }
}

impl AppendixRule {
    pub fn refined(&self) -> Self {
        Self {
            polar: self.polar.refined(),
            volume: self.volume.refined(),
            boundary: 2 * self.boundary,
            edge: self.edge + 4,
            projection: self.projection,
        }
    }
}

fn check_point(z: &[C], closed: bool) -> Result<()> {
    if z.len() != 2 {
        return Err(Error::Parameter(format!("expected a point of C^2, got {} coordinates", z.len())));
    }
    for &zj in z {
        let r = zj.norm();
        let inside = if closed { r <= 1.0 + EDGE_TOL } else { r < 1.0 };
        if !inside || !r.is_finite() {
            return Err(Error::outside(zj));
        }
    }
    Ok(())
}

/// Nodes `ζ` and coefficients `c` with `Σ c g(ζ) ≈ −(1/π) ∫_D g(ζ)/(ζ − z) dA`,
/// the planar Cauchy transform that solves `∂̄v = g`.
struct CauchyNodes {
    z: Vec<C>,
    c: Vec<C>,
}

fn cauchy_nodes(z: C, rule: &AppendixRule) -> Result<CauchyNodes> {
    if (z.norm() - 1.0).abs() <= EDGE_TOL {
        return edge_nodes(z, rule.edge);
    }
    let q = AreaQuadrature::singular(&PlanarDomain::unit_disc(), z, &rule.polar)?;
    let c = q.nodes.iter().zip(&q.weights).map(|(&s, &w)| -w / (PI * (s - z))).collect();
    Ok(CauchyNodes { z: q.nodes, c })
}

/// Polar coordinates about a point of the unit circle: the disc is the
/// half-fan `θ ∈ (φ + π/2, φ + 3π/2)`, `0 < r < −2cos(θ − φ)`, on which the
/// Cauchy integrand times `r` is smooth.
fn edge_nodes(z: C, m: usize) -> Result<CauchyNodes> {
    let gl = GaussLegendre::new(m.max(2)).map_err(|e| Error::Parameter(format!("Gauss-Legendre rule: {e}")))?;
    let phi = z.arg();
    let mut out = CauchyNodes { z: Vec::new(), c: Vec::new() };
    for (x, wx) in gl.iter() {
        let theta = phi + PI + 0.5 * PI * x;
        let reach = -2.0 * (theta - phi).cos();
        let dir = C::cis(theta);
        for (y, wy) in gl.iter() {
            let r = 0.5 * reach * (y + 1.0);
            out.z.push(z + r * dir);
            out.c.push(-dir.conj() * (0.5 * PI * wx * 0.5 * reach * wy / PI));
        }
    }
    Ok(out)
}

fn finite(v: C, what: &str, at: &[C]) -> Result<C> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Data(format!("{what} is not finite at {at:?}")))
    }
}

/// `𝒯f` at one point of the closed bidisc.
pub fn henkin_t_at(f: &Form01, z: &[C], rule: &AppendixRule) -> Result<C> {
    check_point(z, true)?;
    if f.dim() != 2 {
        return Err(Error::Parameter(format!("form {} is not a (0,1)-form on the bidisc", f.name)));
    }
    let df = f.mixed_derivative(&[0, 1])?;
    let n1 = cauchy_nodes(z[0], rule)?;
    let n2 = cauchy_nodes(z[1], rule)?;
    let mut total = ZERO;
    let mut p = [z[0], z[1]];
    for (&s, &c) in n1.z.iter().zip(&n1.c) {
        p[0] = s;
        total += c * finite(f.component(0, &p), &f.name, &p)?;
    }
    p[0] = z[0];
    for (&s, &c) in n2.z.iter().zip(&n2.c) {
        p[1] = s;
        total += c * finite(f.component(1, &p), &f.name, &p)?;
    }
    let mut double = ZERO;
    for (&s1, &c1) in n1.z.iter().zip(&n1.c) {
        p[0] = s1;
        let mut inner = ZERO;
        for (&s2, &c2) in n2.z.iter().zip(&n2.c) {
            p[1] = s2;
            inner += c2 * df(&p);
        }
        double += c1 * inner;
    }
    Ok(total - finite(double, &f.name, z)?)
}

/// `𝒯f` on interior targets.
pub fn henkin_t(f: &Form01, targets: &Targets, rule: &AppendixRule) -> Result<SolutionField> {
    if !f.mixed.contains_key(&vec![0, 1]) {
        return Err(Error::Data(format!("form {} lacks the mixed derivative", f.name)));
    }
    let (points, _) = targets.expand();
    let values = points
        .iter()
        .map(|p| {
            check_point(p, false)?;
            henkin_t_at(f, p, rule)
        })
        .collect::<Result<Vec<_>>>()?;
    SolutionField::new(targets, values)
}

/// Samples of `u` on the torus `bD₁ × bD₂` for the trapezoid rule.
pub struct TorusSamples {
    circle: Vec<(C, C)>,
    values: Vec<C>,
}

impl TorusSamples {
    pub fn new<U>(u: U, nodes: usize) -> Result<Self>
    where
        U: Fn(&[C]) -> Result<C>,
    {
        if nodes < 4 {
            return Err(Error::Parameter("the torus rule needs at least 4 nodes per circle".into()));
        }
        let h = TAU / nodes as f64;
        let circle: Vec<(C, C)> = (0..nodes)
            .map(|k| {
                let s = C::cis(h * k as f64);
                (s, C::i() * s * h)
            })
            .collect();
        let mut values = Vec::with_capacity(nodes * nodes);
        for &(s1, _) in &circle {
            for &(s2, _) in &circle {
                let p = [s1, s2];
                values.push(finite(u(&p)?, "torus data", &p)?);
            }
        }
        Ok(Self { circle, values })
    }

    /// `(2πi)⁻² ∬_{bD₁×bD₂} u(ζ)/((ζ₁ − z₁)(ζ₂ − z₂)) dζ₁∧dζ₂`
    pub fn cauchy(&self, z: &[C]) -> Result<C> {
        check_point(z, false)?;
        let m = self.circle.len();
        let mut total = ZERO;
        for (i, &(s1, d1)) in self.circle.iter().enumerate() {
            let row = &self.values[i * m..(i + 1) * m];
            let inner: C = row.iter().zip(&self.circle).map(|(v, &(s2, d2))| v * d2 / (s2 - z[1])).sum();
            total += inner * d1 / (s1 - z[0]);
        }
        let two_pi_i = C::new(0.0, TAU);
        Ok(total / (two_pi_i * two_pi_i))
    }
}

/// Iterated Cauchy integral of `u` over the torus at one interior point.
pub fn double_cauchy<U>(u: U, z: &[C], nodes: usize) -> Result<C>
where
    U: Fn(&[C]) -> Result<C>,
{
    check_point(z, false)?;
    TorusSamples::new(u, nodes)?.cauchy(z)
}

/// Both sides of `1/((ζ₁−z₁)(ζ₂−z₂)) = ζ̄₁−z̄₁ / ((ζ₂−z₂)|ζ−z|²) + ζ̄₂−z̄₂ / ((ζ₁−z₁)|ζ−z|²)`.
pub fn cauchy_identity_check(zeta: [C; 2], z: [C; 2]) -> Result<(C, C)> {
    let a = [zeta[0] - z[0], zeta[1] - z[1]];
    if a[0] == ZERO || a[1] == ZERO {
        return Err(Error::Singularity(format!("ζ and z share a coordinate: ζ = {zeta:?}, z = {z:?}")));
    }
    let r2 = a[0].norm_sqr() + a[1].norm_sqr();
    let lhs = 1.0 / (a[0] * a[1]);
    let rhs = a[0].conj() / (a[1] * r2) + a[1].conj() / (a[0] * r2);
    Ok((lhs, rhs))
}

/// Largest relative gap between the two sides over `count` random pairs in the bidisc.
pub fn identity_random_check(count: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < count {
        let mut draw = || point_in_disc(ZERO, 1.0, &mut rng);
        let zeta = [draw(), draw()];
        let z = [draw(), draw()];
        let (lhs, rhs) = match cauchy_identity_check(zeta, z) {
            Ok(v) => v,
            Err(_) => continue,
        };
        worst = worst.max((lhs - rhs).norm() / lhs.norm());
        done += 1;
    }
    Ok(worst)
}

/// Bochner–Martinelli reconstruction of `u(z)` from `u` on `bD` and `∂̄u` in `D`.
///
/// ```text
/// (2πi)² u(z) = ∫_{bD₁×D₂} (ζ̄₁−z̄₁)/|ζ−z|⁴ u dζ₁∧dζ̄₂∧dζ₂ + ∫_{D₁×bD₂} (ζ̄₂−z̄₂)/|ζ−z|⁴ u dζ₂∧dζ̄₁∧dζ₁
///             − ∫_D (ζ̄₁−z̄₁)/|ζ−z|⁴ f₁ dV − ∫_D (ζ̄₂−z̄₂)/|ζ−z|⁴ f₂ dV
/// ```
pub fn bm_reconstruct(field: &BidiscField, z: &[C], rule: &AppendixRule) -> Result<C> {
    check_point(z, false)?;
    let f = field.form()?;
    let disc = PlanarDomain::unit_disc();
    let h = TAU / rule.boundary.max(4) as f64;
    let circle: Vec<(C, C)> = (0..rule.boundary.max(4))
        .map(|k| {
            let s = C::cis(h * (k as f64 + 0.5));
            (s, C::i() * s * h)
        })
        .collect();
    let q1 = AreaQuadrature::singular(&disc, z[0], &rule.volume)?;
    let q2 = AreaQuadrature::singular(&disc, z[1], &rule.volume)?;
    let kernel = |p: &[C; 2], j: usize| {
        let r2 = (p[0] - z[0]).norm_sqr() + (p[1] - z[1]).norm_sqr();
        (p[j] - z[j]).conj() / (r2 * r2)
    };
    let mut boundary = ZERO;
    for &(s, ds) in &circle {
        for (&t, &w) in q2.nodes.iter().zip(&q2.weights) {
            let p = [s, t];
            boundary += kernel(&p, 0) * finite(field.eval(&p), &field.name, &p)? * ds * AREA_FORM * w;
        }
        for (&t, &w) in q1.nodes.iter().zip(&q1.weights) {
            let p = [t, s];
            boundary += kernel(&p, 1) * finite(field.eval(&p), &field.name, &p)? * ds * AREA_FORM * w;
        }
    }
    let v1 = AreaQuadrature::singular(&disc, z[0], &rule.volume)?;
    let v2 = AreaQuadrature::singular(&disc, z[1], &rule.volume)?;
    let mut volume = ZERO;
    for (&s, &ws) in v1.nodes.iter().zip(&v1.weights) {
        let mut inner = ZERO;
        for (&t, &wt) in v2.nodes.iter().zip(&v2.weights) {
            let p = [s, t];
            inner += (kernel(&p, 0) * f.component(0, &p) + kernel(&p, 1) * f.component(1, &p)) * wt;
        }
        volume += inner * ws;
    }
    let volume = finite(volume * AREA_FORM * AREA_FORM, &f.name, z)?;
    let two_pi_i = C::new(0.0, TAU);
    Ok((boundary - volume) / (two_pi_i * two_pi_i))
}

/// Residuals of `u = 𝒯∂̄u + C_{bD₁×bD₂}u` at each target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Report {
    pub field: String,
    pub residuals: Vec<f64>,
    pub sup: f64,
}

pub fn check_t1(field: &BidiscField, targets: &Targets, rule: &AppendixRule) -> Result<T1Report> {
    let f = field.form()?;
    if !field.has_derivative_oracle() {
        return Err(Error::Data(format!("field {} lacks the mixed derivative", field.name)));
    }
    let (points, _) = targets.expand();
    let torus = TorusSamples::new(|p| Ok(field.eval(p)), rule.boundary)?;
    let mut residuals = Vec::with_capacity(points.len());
    for z in &points {
        check_point(z, false)?;
        let t = henkin_t_at(f, z, rule)?;
        let b = torus.cauchy(z)?;
        residuals.push((field.eval(z) - t - b).norm());
    }
    let sup = residuals.iter().copied().fold(0.0, f64::max);
    Ok(T1Report { field: field.name.clone(), residuals, sup })
}

/// Per-factor nodes of the projection rule: points and area weights.
fn projection_nodes(rule: &ProjectionRule) -> Result<(Vec<C>, Vec<f64>)> {
    let gl = GaussLegendre::new(rule.radial).map_err(|e| Error::Parameter(format!("Gauss-Legendre rule: {e}")))?;
    let dt = TAU / rule.angular as f64;
    let mut z = Vec::new();
    let mut w = Vec::new();
    for j in 0..rule.angular {
        let dir = C::cis(dt * (j as f64 + 0.5));
        for (x, wx) in gl.iter() {
            let r = 0.5 * (x + 1.0);
            z.push(r * dir);
            w.push(0.5 * wx * r * dt);
        }
    }
    Ok((z, w))
}

/// `Pu` at interior targets, for `u` on the closed bidisc.
pub fn bergman_project_bidisc<U>(u: U, targets: &Targets, rule: &ProjectionRule) -> Result<SolutionField>
where
    U: Fn(&[C]) -> Result<C>,
{
    rule.check()?;
    let (points, _) = targets.expand();
    for p in &points {
        check_point(p, false)?;
    }
    let (nodes, weights) = projection_nodes(rule)?;
    let m = nodes.len();
    let mut values = vec![ZERO; m * m];
    for (i, &s) in nodes.iter().enumerate() {
        for (j, &t) in nodes.iter().enumerate() {
            let p = [s, t];
            values[i * m + j] = finite(u(&p)?, "projected function", &p)? * (weights[i] * weights[j]);
        }
    }
    let out = match rule.degree {
        None => points
            .iter()
            .map(|z| {
                let k1: Vec<C> = nodes.iter().map(|&s| disc_bergman(z[0], s)).collect();
                let k2: Vec<C> = nodes.iter().map(|&t| disc_bergman(z[1], t)).collect();
                values.chunks(m).zip(&k1).map(|(row, &a)| a * row.iter().zip(&k2).map(|(v, &b)| v * b).sum::<C>()).sum()
            })
            .collect(),
        Some(d) => {
            // c_ab = ⟨u, ζ₁^a ζ₂^b⟩ (a+1)(b+1)/π²
            let pows: Vec<Vec<C>> = nodes.iter().map(|&s| powers(s.conj(), d)).collect();
            let mut coef = vec![ZERO; (d + 1) * (d + 1)];
            for i in 0..m {
                let mut row = vec![ZERO; d + 1];
                for j in 0..m {
                    let v = values[i * m + j];
                    for (b, r) in row.iter_mut().enumerate() {
                        *r += v * pows[j][b];
                    }
                }
                for a in 0..=d {
                    for b in 0..=d {
                        coef[a * (d + 1) + b] += pows[i][a] * row[b];
                    }
                }
            }
            for a in 0..=d {
                for b in 0..=d {
                    coef[a * (d + 1) + b] *= ((a + 1) * (b + 1)) as f64 / (PI * PI);
                }
            }
            points
                .iter()
                .map(|z| {
                    let (p1, p2) = (powers(z[0], d), powers(z[1], d));
                    let mut v = ZERO;
                    for a in 0..=d {
                        for b in 0..=d {
                            v += coef[a * (d + 1) + b] * p1[a] * p2[b];
                        }
                    }
                    v
                })
                .collect()
        }
    };
    SolutionField::new(targets, out)
}

fn powers(z: C, d: usize) -> Vec<C> {
    let mut out = Vec::with_capacity(d + 1);
    let mut acc = C::new(1.0, 0.0);
    for _ in 0..=d {
        out.push(acc);
        acc *= z;
    }
    out
}

/// Bergman kernel of the unit disc, `1/(π(1 − z ζ̄)²)`.
fn disc_bergman(z: C, zeta: C) -> C {
    let d = 1.0 - z * zeta.conj();
    1.0 / (PI * d * d)
}

/// Interior points at which the hypothesis integral of the projection estimate is sampled.
pub fn hypothesis_points() -> Vec<[C; 2]> {
    vec![
        [ZERO, ZERO],
        [C::new(0.3, 0.0), C::new(0.0, -0.2)],
        [C::new(-0.4, 0.1), C::new(0.5, 0.0)],
        [C::new(0.0, 0.6), C::new(-0.3, -0.3)],
    ]
}

/// Sup-norm ratio `‖Pu‖_∞ / ‖∂̄u‖_∞` for a `u` whose torus Cauchy integral vanishes.
///
/// `u` is evaluated on the torus, so it must extend to the closed bidisc.
/// The hypothesis is sampled at [`hypothesis_points`] and must stay below
/// `hypothesis_tol`.
pub fn check_t2<U>(u: U, f: &Form01, targets: &Targets, rule: &AppendixRule, hypothesis_tol: f64) -> Result<EstimateReport>
where
    U: Fn(&[C]) -> Result<C>,
{
    if f.dim() != 2 {
        return Err(Error::Parameter(format!("form {} is not a (0,1)-form on the bidisc", f.name)));
    }
    let torus = TorusSamples::new(&u, rule.boundary)?;
    let mut hypothesis = 0.0f64;
    for z in hypothesis_points() {
        hypothesis = hypothesis.max(torus.cauchy(&z)?.norm());
    }
    if hypothesis > hypothesis_tol {
        return Err(Error::Precondition(format!(
            "the torus Cauchy integral of u is {hypothesis:.3e}, above {hypothesis_tol:.1e}"
        )));
    }
    let pu = bergman_project_bidisc(&u, targets, &rule.projection)?;
    let mut dbar_sup = 0.0f64;
    for p in &pu.points {
        for j in 0..2 {
            dbar_sup = dbar_sup.max(f.component(j, p).norm());
        }
    }
    let mut report = EstimateReport::new(InequalityId::T2Ratio, "unit bidisc");
    report.samples = pu.len();
    report.supremum = if pu.sup_norm == 0.0 { 0.0 } else { pu.sup_norm / dbar_sup };
    report.extra.insert("hypothesis".into(), hypothesis);
    report.extra.insert("projection_sup".into(), pu.sup_norm);
    report.extra.insert("dbar_sup".into(), dbar_sup);
    if let Some((k, _)) = pu.values.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) {
        report.set_argmax(&pu.points[k]);
    }
    report.grid.insert("boundary_nodes".into(), rule.boundary as f64);
    report.grid.insert("projection_angular".into(), rule.projection.angular as f64);
    report.grid.insert("projection_radial".into(), rule.projection.radial as f64);
    Ok(report)
}

/// Compact sample points of the bidisc used for the residual precondition.
fn residual_points() -> Vec<Vec<C>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..6)
        .map(|_| vec![point_in_disc(ZERO, 0.6, &mut rng), point_in_disc(ZERO, 0.6, &mut rng)])
        .collect()
}

/// `ũ = u − Pu` for a particular solution `u` of `∂̄u = f`.
///
/// The residual of `u` is checked first by centered differences at a few
/// compact points; a relative residual above `residual_tol` is rejected.
pub fn canonical_via_projection<U>(
    u: U,
    f: &Form01,
    targets: &Targets,
    rule: &AppendixRule,
    residual_tol: f64,
) -> Result<SolutionField>
where
    U: Fn(&[C]) -> Result<C>,
{
    let pd = ProductDomain::unit_polydisc(2)?;
    let residual = stencil_dbar_residual(&pd, &u, f, &residual_points(), 1e-3)?;
    if residual > residual_tol {
        return Err(Error::Data(format!(
            "the particular solution misses dbar u = f by {residual:.3e}, above {residual_tol:.1e}"
        )));
    }
    let pu = bergman_project_bidisc(&u, targets, &rule.projection)?;
    let values = pu
        .points
        .iter()
        .zip(&pu.values)
        .map(|(p, &v)| Ok(u(p)? - v))
        .collect::<Result<Vec<_>>>()?;
    SolutionField::new(targets, values)
}

/// `𝒯f` as a closure on the closed bidisc.
pub fn henkin_closure(f: &Form01, rule: &AppendixRule) -> impl Fn(&[C]) -> Result<C> {
    let f = f.clone();
    let rule = *rule;
    move |z: &[C]| henkin_t_at(&f, z, &rule)
}

/// A field given by a closure, without derivative oracle.
pub fn plain_field(name: &str, u: impl Fn(&[C]) -> C + Send + Sync + 'static) -> BidiscField {
    BidiscField::new(name, Arc::new(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{monomial11, Monomial};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn interior_targets() -> Targets {
        Targets::points_nd(vec![
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.3, 0.1), c(-0.2, 0.4)],
            vec![c(-0.5, 0.0), c(0.1, -0.3)],
        ])
    }

    #[test]
    fn identity_example_and_random_pairs() {
        let (l, r) = cauchy_identity_check([c(1.0, 0.0), c(0.0, 1.0)], [ZERO, ZERO]).unwrap();
        assert!((l - c(0.0, -1.0)).norm() < 1e-15 && (r - c(0.0, -1.0)).norm() < 1e-15);
        assert!(identity_random_check(1000, 3).unwrap() < 1e-12);
        let err = cauchy_identity_check([c(0.2, 0.0), c(0.5, 0.0)], [c(0.2, 0.0), ZERO]).unwrap_err();
        assert!(matches!(err, Error::Singularity(_)));
    }

    #[test]
    fn henkin_reproduces_conjugate_monomial() {
        let f = monomial11().form();
        let rule = AppendixRule::default();
        for z in interior_targets().expand().0 {
            let v = henkin_t_at(&f, &z, &rule).unwrap();
            assert!((v - z[0].conj() * z[1].conj()).norm() < 1e-3, "{v}");
        }
        let edge = [C::cis(0.7), C::cis(-2.0)];
        let v = henkin_t_at(&f, &edge, &rule).unwrap();
        assert!((v - edge[0].conj() * edge[1].conj()).norm() < 1e-6, "{v}");
        let zero = Form01::zero(2);
        assert_eq!(henkin_t_at(&zero, &[c(0.1, 0.0), ZERO], &rule).unwrap(), ZERO);
        let bare = Form01::new("bare", f.components.clone());
        assert!(matches!(henkin_t(&bare, &interior_targets(), &rule), Err(Error::Data(_))));
    }

    #[test]
    fn bm_examples() {
        let rule = AppendixRule::default();
        let one = BidiscField::from_potential(&Potential::monomial("one", vec![0, 0], vec![0, 0])).unwrap();
        let v = bm_reconstruct(&one, &[c(0.2, 0.1), c(-0.3, 0.0)], &rule).unwrap();
        assert!((v - 1.0).norm() < 1e-6, "{v}");
        let z1 = BidiscField::from_potential(&Potential::monomial("z1", vec![0, 0], vec![1, 0])).unwrap();
        assert!(bm_reconstruct(&z1, &[ZERO, ZERO], &rule).unwrap().norm() < 1e-6);
        let cz1 = BidiscField::from_potential(&Potential::monomial("conj z1", vec![1, 0], vec![0, 0])).unwrap();
        let v = bm_reconstruct(&cz1, &[c(0.3, 0.0), ZERO], &rule).unwrap();
        assert!((v - 0.3).norm() < 1e-3, "{v}");
        assert!(matches!(bm_reconstruct(&cz1, &[c(1.0, 0.0), ZERO], &rule), Err(Error::Membership { .. })));
    }

    #[test]
    fn t1_residuals() {
        let rule = AppendixRule::default();
        let u = Potential::new(
            "mixed",
            vec![
                Monomial::new(c(1.0, 0.0), vec![1, 1], vec![0, 0]),
                Monomial::new(c(1.0, 0.0), vec![0, 0], vec![1, 1]),
            ],
        );
        let r = check_t1(&BidiscField::from_potential(&u).unwrap(), &interior_targets(), &rule).unwrap();
        assert!(r.sup < 1e-3, "{r:?}");
        let h = Potential::monomial("z1^2 z2", vec![0, 0], vec![2, 1]);
        let r = check_t1(&BidiscField::from_potential(&h).unwrap(), &interior_targets(), &rule).unwrap();
        assert!(r.sup < 1e-6, "{r:?}");
    }

    #[test]
    fn projection_examples() {
        let t = interior_targets();
        for rule in [ProjectionRule::KERNEL, ProjectionRule::MODAL] {
            let p = bergman_project_bidisc(|z: &[C]| Ok(z[0] * z[1]), &t, &rule).unwrap();
            for (z, v) in p.points.iter().zip(&p.values) {
                assert!((v - z[0] * z[1]).norm() <= 1e-6 * (z[0] * z[1]).norm().max(1e-3), "{v}");
            }
            let p = bergman_project_bidisc(|z: &[C]| Ok(z[0].conj() * z[1].conj()), &t, &rule).unwrap();
            assert!(p.sup_norm < 1e-6);
            let p = bergman_project_bidisc(|_: &[C]| Ok(c(1.0, 0.0)), &t, &rule).unwrap();
            assert!(p.values.iter().all(|v| (v - 1.0).norm() < 1e-6));
        }
    }

    #[test]
    fn t2_hypothesis_and_ratio() {
        let rule = AppendixRule::default();
        let t = interior_targets();
        let f = monomial11().form();
        let r = check_t2(henkin_closure(&f, &rule), &f, &t, &rule, 1e-3).unwrap();
        assert!(r.supremum.is_finite() && r.extra["hypothesis"] <= 1e-3, "{r:?}");
        let err = check_t2(|z: &[C]| Ok(z[0]), &Form01::zero(2), &t, &rule, 1e-6).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let r = check_t2(|_: &[C]| Ok(ZERO), &Form01::zero(2), &t, &rule, 1e-6).unwrap();
        assert_eq!(r.supremum, 0.0);
    }

    #[test]
    fn canonical_examples() {
        let rule = AppendixRule::default();
        let t = interior_targets();
        let f = monomial11().form();
        let u = canonical_via_projection(|z: &[C]| Ok(z[0].conj() * z[1].conj()), &f, &t, &rule, 1e-2).unwrap();
        for (z, v) in u.points.iter().zip(&u.values) {
            assert!((v - z[0].conj() * z[1].conj()).norm() < 1e-6);
        }
        let shifted =
            canonical_via_projection(|z: &[C]| Ok(z[0].conj() * z[1].conj() + z[0] * z[0]), &f, &t, &rule, 1e-2).unwrap();
        assert!(shifted.minus(&u).unwrap().sup_norm < 1e-6);
        let zero = canonical_via_projection(|z: &[C]| Ok(z[0]), &Form01::zero(2), &t, &rule, 1e-2).unwrap();
        assert!(zero.sup_norm < 1e-6);
        let err = canonical_via_projection(|z: &[C]| Ok(z[0]), &f, &t, &rule, 1e-2).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
