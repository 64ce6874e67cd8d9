//! The one-variable solution operator `T f(w) = ∫ S(w, z) f(z) dz̄∧dz` and the
//! Bergman projection of a planar domain.
//!
//! Area integrals use polar coordinates centered at the target, where the
//! `1/|z − w|` singularity of `S` is cancelled by the Jacobian. The area
//! element is `dz̄∧dz = 2i dA`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{PolarGrid, SolutionField, Targets};
use crate::geometry::{AreaQuadrature, PlanarDomain, PolarRule};
use crate::kernels::KernelSet;
use crate::report::{stability_ratio, EstimateReport, InequalityId};

pub type ScalarFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

/// `dz̄∧dz / dA`
pub const AREA_FORM: Complex64 = Complex64::new(0.0, 2.0);

/// Coefficient `f` of the datum `f dz̄`.
#[derive(Clone)]
pub struct ScalarData {
    pub name: String,
    pub f: ScalarFn,
    pub smooth: bool,
    pub sup_hint: Option<f64>,
}

impl std::fmt::Debug for ScalarData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarData")
            .field("name", &self.name)
            .field("smooth", &self.smooth)
            .field("sup_hint", &self.sup_hint)
            .finish()
    }
}

impl ScalarData {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self { name: name.into(), f: Arc::new(f), smooth: true, sup_hint: None }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.f)(z)
    }
}

/// A function together with its `∂/∂z̄`, when known.
#[derive(Clone)]
pub struct DiffData {
    pub name: String,
    pub u: ScalarFn,
    pub dbar: Option<ScalarFn>,
}

impl DiffData {
    pub fn new<F, G>(name: impl Into<String>, u: F, dbar: G) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
        G: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self { name: name.into(), u: Arc::new(u), dbar: Some(Arc::new(dbar)) }
    }

    pub fn without_derivative<F>(name: impl Into<String>, u: F) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self { name: name.into(), u: Arc::new(u), dbar: None }
    }

    /// `∂u/∂z̄` from the oracle, or by centered differences.
    pub fn dbar_at(&self, z: Complex64, scale: f64) -> Result<Complex64> {
        if let Some(d) = &self.dbar {
            return Ok(d(z));
        }
        let h = 1e-6 * scale;
        let ih = Complex64::new(0.0, h);
        let ux = ((self.u)(z + h) - (self.u)(z - h)) / (2.0 * h);
        let uy = ((self.u)(z + ih) - (self.u)(z - ih)) / (2.0 * h);
        let d = 0.5 * (ux + Complex64::i() * uy);
        if !(d.re.is_finite() && d.im.is_finite()) {
            return Err(Error::Data(format!(
                "{} is not differentiable at ({}, {})",
                self.name, z.re, z.im
            )));
        }
        Ok(d)
    }
}

/// Default target grid: 128 radii by 128 angles.
pub const DEFAULT_GRID: usize = 128;

pub fn default_targets(dom: &PlanarDomain) -> Result<Targets> {
    Ok(Targets::grid(PolarGrid::square(dom, DEFAULT_GRID)?))
}

/// `T f` at every target.
pub fn solve_t(
    ks: &KernelSet,
    f: &ScalarData,
    targets: &Targets,
    rule: &PolarRule,
) -> Result<SolutionField> {
    let dom = ks.domain();
    let (points, _) = targets.expand();
    let mut values = Vec::with_capacity(points.len());
    for p in &points {
        let w = single(p)?;
        dom.check_interior(w)?;
        let q = AreaQuadrature::singular(dom, w, rule)?;
        let field = ks.l_field(w)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (&z, &wt) in q.nodes.iter().zip(&q.weights) {
            let fz = f.eval(z);
            if !(fz.re.is_finite() && fz.im.is_finite()) {
                return Err(Error::Data(format!(
                    "datum {} is not finite at ({}, {})",
                    f.name, z.re, z.im
                )));
            }
            acc += field.s(z) * fz * wt;
        }
        values.push(acc * AREA_FORM);
    }
    SolutionField::new(targets, values)
}

fn single(p: &[Complex64]) -> Result<Complex64> {
    match p {
        [z] => Ok(*z),
        _ => Err(Error::Parameter(format!("expected planar targets, got dimension {}", p.len()))),
    }
}

/// What the Bergman projection is applied to.
pub enum ProjectionInput<'a> {
    Function(&'a (dyn Fn(Complex64) -> Complex64 + Sync)),
    Field(&'a SolutionField),
}

/// Quadrature for smooth area integrals over a planar domain.
pub fn smooth_rule(dom: &PlanarDomain) -> Result<AreaQuadrature> {
    AreaQuadrature::uniform(dom, dom.center(), 12, 8, 96)
}

/// `P u(w) = ∫ K(w, z) u(z) dA` at every target.
pub fn bergman_project_1d(
    ks: &KernelSet,
    u: ProjectionInput<'_>,
    targets: &Targets,
) -> Result<SolutionField> {
    let dom = ks.domain();
    let (nodes, weights, vals): (Vec<Complex64>, Vec<f64>, Vec<Complex64>) = match u {
        ProjectionInput::Function(f) => {
            let q = smooth_rule(dom)?;
            let vals = q.nodes.iter().map(|&z| f(z)).collect();
            (q.nodes, q.weights, vals)
        }
        ProjectionInput::Field(field) => {
            let mut nodes = Vec::with_capacity(field.len());
            for p in &field.points {
                let z = single(p)?;
                if !dom.contains(z) {
                    return Err(Error::Parameter(format!(
                        "field point ({}, {}) lies outside the domain",
                        z.re, z.im
                    )));
                }
                nodes.push(z);
            }
            (nodes, field.weights.clone(), field.values.clone())
        }
    };
    let (points, _) = targets.expand();
    let mut out = Vec::with_capacity(points.len());
    for p in &points {
        let w = single(p)?;
        let l = ks.l_field(w)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for ((&z, &wt), &v) in nodes.iter().zip(&weights).zip(&vals) {
            acc += l.k(z) * v * wt;
        }
        out.push(acc);
    }
    SolutionField::new(targets, out)
}

/// Normalized inner products `|⟨u, e_j⟩| / ‖u‖` against orthonormalized monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicityDefects {
    pub defects: Vec<f64>,
    /// Set when the domain is not a disc, where monomials are orthonormalized
    /// numerically and density in the Bergman space is not guaranteed.
    pub best_effort: bool,
}

impl CanonicityDefects {
    pub fn max(&self) -> f64 {
        self.defects.iter().copied().fold(0.0, f64::max)
    }
}

pub fn canonicity_defect(
    ks: &KernelSet,
    u: &SolutionField,
    max_degree: usize,
) -> Result<CanonicityDefects> {
    let dom = ks.domain();
    let zs = u.points.iter().map(|p| single(p)).collect::<Result<Vec<_>>>()?;
    let norm = u.l2_norm;
    let basis = monomial_basis(dom, &zs, &u.weights, max_degree);
    let defects = basis
        .iter()
        .map(|e| {
            if norm == 0.0 {
                return 0.0;
            }
            let ip: Complex64 = u
                .values
                .iter()
                .zip(e)
                .zip(&u.weights)
                .map(|((v, b), w)| v * b.conj() * w)
                .sum();
            ip.norm() / norm
        })
        .collect();
    Ok(CanonicityDefects { defects, best_effort: dom.as_disc().is_none() })
}

/// Orthonormal monomials sampled at `zs`: exact on discs, Gram–Schmidt in the
/// discrete inner product otherwise.
pub fn monomial_basis(
    dom: &PlanarDomain,
    zs: &[Complex64],
    weights: &[f64],
    max_degree: usize,
) -> Vec<Vec<Complex64>> {
    if let Some((c, r)) = dom.as_disc() {
        return (0..=max_degree)
            .map(|j| {
                let norm = ((j as f64 + 1.0) / std::f64::consts::PI).sqrt() / r.powi(j as i32 + 1);
                zs.iter().map(|&z| (z - c).powi(j as i32) * norm).collect()
            })
            .collect();
    }
    let c = dom.center();
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for j in 0..=max_degree {
        let mut v: Vec<Complex64> = zs.iter().map(|&z| (z - c).powi(j as i32)).collect();
        for _ in 0..2 {
            for b in &basis {
                let ip: Complex64 =
                    v.iter().zip(b).zip(weights).map(|((x, y), w)| x * y.conj() * w).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= ip * y;
                }
            }
        }
        let n = v.iter().zip(weights).map(|(x, w)| x.norm_sqr() * w).sum::<f64>().sqrt();
        basis.push(v.into_iter().map(|x| x / n).collect());
    }
    basis
}

/// Checks that `(p, q)` is covered by the `L^p → L^q` bounds of `T`:
/// `p ∈ [1, 2]` needs `q < 2p/(2 − p)` (any finite `q` when `p = 2`), while
/// `p ∈ (2, ∞]` allows every `q`.
pub fn check_pq(p: f64, q: f64) -> Result<()> {
    if !(p >= 1.0) || !(q > 0.0) {
        return Err(Error::Parameter(format!("need p ≥ 1 and q > 0, got p = {p}, q = {q}")));
    }
    if p > 2.0 {
        return Ok(());
    }
    let limit = if p == 2.0 { f64::INFINITY } else { 2.0 * p / (2.0 - p) };
    if q < limit {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "q = {q} is not admissible for p = {p}: for p in [1, 2] the bound needs q < 2p/(2-p) = {limit}"
        )))
    }
}

/// Empirical `sup_f ‖T f‖_q / ‖f‖_p` on a grid and on its refinement.
pub fn norm_bound_probe(
    ks: &KernelSet,
    family: &[ScalarData],
    p: f64,
    q: f64,
    grid: usize,
    rule: &PolarRule,
) -> Result<EstimateReport> {
    check_pq(p, q)?;
    if family.is_empty() {
        return Err(Error::Parameter("empty data family".into()));
    }
    let dom = ks.domain();
    let mut sups = Vec::new();
    for n in [grid, 2 * grid] {
        let targets = Targets::grid(PolarGrid::square(dom, n)?);
        let mut sup = 0.0f64;
        for f in family {
            let tf = solve_t(ks, f, &targets, rule)?;
            let fv = SolutionField::from_fn(&targets, |pt| f.eval(pt[0]))?;
            let den = fv.lp_norm(p);
            if den > 0.0 {
                sup = sup.max(tf.lp_norm(q) / den);
            }
        }
        sups.push(sup);
    }
    let mut report = EstimateReport::new(InequalityId::PqBound, dom.label());
    report.samples = family.len();
    report.supremum = sups[1];
    report.set_stability(sups[0]);
    report.extra.insert("p".into(), p);
    report.extra.insert("q".into(), q);
    report.grid.insert("grid".into(), grid as f64);
    report.grid.insert("refined_grid".into(), 2.0 * grid as f64);
    insert_rule(&mut report, rule);
    Ok(report)
}

pub(crate) fn insert_rule(report: &mut EstimateReport, rule: &PolarRule) {
    report.grid.insert("angular".into(), rule.angular as f64);
    report.grid.insert("gauss".into(), rule.gauss as f64);
    report.grid.insert("levels".into(), rule.levels as f64);
}

/// Empirical `sup ‖u − P u‖_∞ / ‖∂̄u‖_∞` over a family, with `P u = u − T(∂̄u)`.
///
/// `extra["max_excess"]` is the largest `‖P u‖_∞ − ‖u‖_∞ − C ‖∂̄u‖_∞` with the
/// fitted `C`; it is non-positive exactly when the sup-norm bound holds on
/// every sample.
pub fn projection_bound_probe(
    ks: &KernelSet,
    family: &[DiffData],
    targets: &Targets,
    rule: &PolarRule,
) -> Result<EstimateReport> {
    if family.is_empty() {
        return Err(Error::Parameter("empty data family".into()));
    }
    let dom = ks.domain();
    let scale = dom.diameter();
    let mut rows = Vec::new();
    for item in family {
        let (points, _) = targets.expand();
        // Differentiability is checked on the targets before any quadrature runs.
        for p in &points {
            item.dbar_at(single(p)?, scale)?;
        }
        let d = item.clone();
        let dbar = ScalarData::new(format!("dbar {}", item.name), move |z| {
            d.dbar_at(z, scale).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
        });
        let t = solve_t(ks, &dbar, targets, rule)?;
        let u = SolutionField::from_fn(targets, |p| (item.u)(p[0]))?;
        let dbar_sup = points
            .iter()
            .map(|p| dbar.eval(p[0]).norm())
            .fold(0.0, f64::max);
        let pu = u.minus(&t)?;
        rows.push((t.sup_norm, dbar_sup, u.sup_norm, pu.sup_norm));
    }
    let fitted = rows
        .iter()
        .map(|&(diff, d, _, _)| if d > 0.0 { diff / d } else { 0.0 })
        .fold(0.0, f64::max);
    let excess = rows
        .iter()
        .map(|&(_, d, u, pu)| pu - u - fitted * d)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut report = EstimateReport::new(InequalityId::ProjectionBound, dom.label());
    report.samples = family.len();
    report.supremum = fitted;
    report.extra.insert("max_excess".into(), excess);
    report.grid.insert("targets".into(), targets.len() as f64);
    insert_rule(&mut report, rule);
    Ok(report)
}

/// Relative sup error between the finite-difference `∂̄` of a planar field and `f`.
pub fn dbar_residual_1d(u: &SolutionField, dom: &PlanarDomain, f: &ScalarData) -> Result<f64> {
    u.dbar_residual(std::slice::from_ref(dom), 0.1, |p| vec![f.eval(p[0])])
}

/// Ratio of two suprema, `0/0` read as 1.
pub fn refinement_ratio(coarse: f64, fine: f64) -> f64 {
    stability_ratio(coarse, fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::uniform_points;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disc() -> (PlanarDomain, KernelSet) {
        let d = PlanarDomain::unit_disc();
        let ks = KernelSet::new(&d, 64).unwrap();
        (d, ks)
    }

    fn inner_points(dom: &PlanarDomain, n: usize, seed: u64) -> Vec<Complex64> {
        uniform_points(dom, n, seed).into_iter().map(|z| z * 0.8).collect()
    }

    fn quick_rule() -> PolarRule {
        PolarRule { angular: 32, gauss: 6, levels: 4 }
    }

    #[test]
    fn calibration_and_zero_datum() {
        let (dom, ks) = disc();
        let targets = Targets::scattered(inner_points(&dom, 20, 1));
        let one = ScalarData::new("one", |_| c(1.0, 0.0));
        let u = solve_t(&ks, &one, &targets, &quick_rule()).unwrap();
        for (p, v) in u.points.iter().zip(&u.values) {
            assert!((v - p[0].conj()).norm() < 1e-10, "{v} vs {}", p[0]);
        }
        let at = solve_t(&ks, &one, &Targets::scattered(vec![c(0.3, 0.0)]), &quick_rule()).unwrap();
        assert!((at.values[0] - 0.3).norm() < 1e-10);
        let zero = ScalarData::new("zero", |_| c(0.0, 0.0));
        assert_eq!(solve_t(&ks, &zero, &targets, &quick_rule()).unwrap().sup_norm, 0.0);
    }

    #[test]
    fn conj_datum_matches_closed_form() {
        // ∂̄ of z̄²/2 is z̄, and z̄²/2 is orthogonal to holomorphic functions.
        let (dom, ks) = disc();
        let targets = Targets::scattered(inner_points(&dom, 20, 2));
        let f = ScalarData::new("conj", |z| z.conj());
        let u = solve_t(&ks, &f, &targets, &quick_rule()).unwrap();
        for (p, v) in u.points.iter().zip(&u.values) {
            assert!((v - p[0].conj().powi(2) / 2.0).norm() < 1e-10);
        }
    }

    #[test]
    fn target_outside_and_unbounded_datum_rejected() {
        let (_, ks) = disc();
        let one = ScalarData::new("one", |_| c(1.0, 0.0));
        let bad = Targets::scattered(vec![c(1.0, 0.0)]);
        assert!(matches!(solve_t(&ks, &one, &bad, &quick_rule()), Err(Error::Membership { .. })));
        let pole = ScalarData::new("pole", |z| 1.0 / (z - c(0.2, 0.0)) / 0.0);
        let t = Targets::scattered(vec![c(0.1, 0.0)]);
        assert!(matches!(solve_t(&ks, &pole, &t, &quick_rule()), Err(Error::Data(_))));
    }

    #[test]
    fn projection_examples() {
        let (dom, ks) = disc();
        let targets = Targets::scattered(inner_points(&dom, 15, 3));
        let sq = |z: Complex64| z * z;
        let p = bergman_project_1d(&ks, ProjectionInput::Function(&sq), &targets).unwrap();
        for (pt, v) in p.points.iter().zip(&p.values) {
            assert!((v - sq(pt[0])).norm() < 1e-8, "{}", (v - sq(pt[0])).norm());
        }
        let conj = |z: Complex64| z.conj();
        let p = bergman_project_1d(&ks, ProjectionInput::Function(&conj), &targets).unwrap();
        assert!(p.sup_norm < 1e-6);
        let konst = |_: Complex64| c(0.5, -2.0);
        let p = bergman_project_1d(&ks, ProjectionInput::Function(&konst), &targets).unwrap();
        assert!(p.values.iter().all(|v| (v - c(0.5, -2.0)).norm() < 1e-6));
    }

    #[test]
    fn canonicity_examples() {
        let (dom, ks) = disc();
        let targets = Targets::grid(PolarGrid::square(&dom, 32).unwrap());
        let zero = SolutionField::from_fn(&targets, |_| c(0.0, 0.0)).unwrap();
        assert!(canonicity_defect(&ks, &zero, 8).unwrap().defects.iter().all(|&d| d == 0.0));
        let z = SolutionField::from_fn(&targets, |p| p[0]).unwrap();
        let d = canonicity_defect(&ks, &z, 8).unwrap();
        assert!((d.defects[1] - 1.0).abs() < 1e-2 && d.max() <= d.defects[1]);
        let zbar = SolutionField::from_fn(&targets, |p| p[0].conj()).unwrap();
        assert!(canonicity_defect(&ks, &zbar, 8).unwrap().max() < 1e-12);
    }

    #[test]
    fn pq_admissibility() {
        assert!(check_pq(2.0, 3.0).is_ok());
        assert!(check_pq(f64::INFINITY, f64::INFINITY).is_ok());
        let err = check_pq(1.0, 3.0).unwrap_err().to_string();
        assert!(err.contains("2p/(2-p)"));
        assert!(check_pq(1.0, 1.9).is_ok());
        assert!(check_pq(2.0, f64::INFINITY).is_err());
        assert!(check_pq(0.5, 1.0).is_err());
    }

    #[test]
    fn projection_probe_examples() {
        let (dom, ks) = disc();
        let targets = Targets::grid(PolarGrid::square(&dom, 12).unwrap());
        let rule = quick_rule();
        let hol = DiffData::new("z3", |z| z * z * z, |_| c(0.0, 0.0));
        let r = projection_bound_probe(&ks, &[hol], &targets, &rule).unwrap();
        assert_eq!(r.supremum, 0.0);
        let conj = DiffData::new("conj", |z| z.conj(), |_| c(1.0, 0.0));
        let r = projection_bound_probe(&ks, &[conj], &targets, &rule).unwrap();
        assert!((r.supremum - (11.5 / 12.0)).abs() < 1e-9, "{}", r.supremum);
        assert!(r.extra["max_excess"] <= 1e-12);
        let fd = DiffData::without_derivative("conj-fd", |z| z.conj());
        let r = projection_bound_probe(&ks, &[fd], &targets, &rule).unwrap();
        assert!((r.supremum - (11.5 / 12.0)).abs() < 1e-6);
        let kink = DiffData::without_derivative("kink", |z| {
            if z.re > 0.0 { c(f64::INFINITY, 0.0) } else { c(0.0, 0.0) }
        });
        assert!(matches!(projection_bound_probe(&ks, &[kink], &targets, &rule), Err(Error::Data(_))));
    }
}
