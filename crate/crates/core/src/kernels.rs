//! The kernels `H`, `L`, `S = L − H` and `K` of the one-variable problem.
//!
//! `L(w, ·)` is the harmonic extension of `H(w, ·)` from the boundary. On
//! discs it is evaluated in closed form, elsewhere through a Dirichlet solve.
//! `K = 2i ∂L/∂z̄` is the Bergman kernel.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{exhaustion, PlanarDomain};
use crate::greens::{DirichletSolver, GreenEvaluator, HarmonicField, Method, DIAGONAL_FLOOR};
use crate::report::{loglog_slope, EstimateReport, InequalityId, SupTracker};
use crate::sampling::PairSampler;

/// Boundary nodes used when a kernel set is built without an explicit size.
pub const DEFAULT_BOUNDARY_NODES: usize = 256;

/// Trapezoid nodes on the ring of the ring-average form.
pub const RING_NODES: usize = 64;

fn two_pi_i() -> Complex64 {
    Complex64::new(0.0, TAU)
}

/// Cauchy kernel `1/(2πi(z − w))`.
pub fn kernel_h(w: Complex64, z: Complex64) -> Result<Complex64> {
    if z == w {
        return Err(Error::Singularity("Cauchy kernel on the diagonal".into()));
    }
    Ok(1.0 / (two_pi_i() * (z - w)))
}

/// Kernel evaluators on one planar domain.
#[derive(Debug, Clone)]
pub struct KernelSet {
    domain: PlanarDomain,
    method: Method,
    solver: Option<Arc<DirichletSolver>>,
    green: GreenEvaluator,
}

/// `L(w, ·)` for one fixed `w`, reusable across many `z`.
#[derive(Debug, Clone)]
pub enum LField {
    Disc { w: Complex64, center: Complex64, radius: f64 },
    Harmonic { w: Complex64, field: HarmonicField },
}

impl LField {
    pub fn pole(&self) -> Complex64 {
        match self {
            Self::Disc { w, .. } | Self::Harmonic { w, .. } => *w,
        }
    }

    pub fn l(&self, z: Complex64) -> Complex64 {
        match self {
            Self::Disc { w, center, radius } => {
                let (ws, zs) = ((w - center) / radius, (z - center) / radius);
                zs.conj() / (two_pi_i() * (1.0 - ws * zs.conj())) / *radius
            }
            Self::Harmonic { field, .. } => field.value(z),
        }
    }

    /// `S(w, z) = L(w, z) − H(w, z)`, for `z ≠ w`.
    pub fn s(&self, z: Complex64) -> Complex64 {
        match self {
            Self::Disc { w, center, radius } => {
                let (ws, zs) = ((w - center) / radius, (z - center) / radius);
                (zs.norm_sqr() - 1.0) / (two_pi_i() * (1.0 - ws * zs.conj()) * (zs - ws)) / *radius
            }
            Self::Harmonic { w, field } => field.value(z) - 1.0 / (two_pi_i() * (z - w)),
        }
    }

    /// `(∂L/∂z, ∂L/∂z̄)`.
    pub fn l_derivatives(&self, z: Complex64) -> (Complex64, Complex64) {
        match self {
            Self::Disc { w, center, radius } => {
                let (ws, zs) = ((w - center) / radius, (z - center) / radius);
                let dzb = 1.0 / (two_pi_i() * (1.0 - ws * zs.conj()).powi(2)) / (radius * radius);
                (Complex64::new(0.0, 0.0), dzb)
            }
            Self::Harmonic { field, .. } => field.derivatives(z),
        }
    }

    /// `K(w, z) = 2i ∂L/∂z̄`.
    pub fn k(&self, z: Complex64) -> Complex64 {
        Complex64::new(0.0, 2.0) * self.l_derivatives(z).1
    }

    /// `(∂S/∂z, ∂S/∂z̄)`.
    pub fn s_gradient(&self, z: Complex64) -> (Complex64, Complex64) {
        let (lz, lzb) = self.l_derivatives(z);
        let w = self.pole();
        (lz + 1.0 / (two_pi_i() * (z - w) * (z - w)), lzb)
    }
}

/// Euclidean length of the real gradient of a complex function with Wirtinger derivatives `(a, b)`.
pub fn gradient_norm((a, b): (Complex64, Complex64)) -> f64 {
    (2.0 * (a.norm_sqr() + b.norm_sqr())).sqrt()
}

impl KernelSet {
    /// Closed form on discs, Nyström-backed with `n` nodes elsewhere.
    pub fn new(dom: &PlanarDomain, n: usize) -> Result<Self> {
        if dom.as_disc().is_some() {
            Self::closed_form(dom)
        } else {
            Self::nystrom(dom, n)
        }
    }

    pub fn closed_form(dom: &PlanarDomain) -> Result<Self> {
        Ok(Self {
            domain: dom.clone(),
            method: Method::ClosedFormDisc,
            solver: None,
            green: GreenEvaluator::closed_form(dom)?,
        })
    }

    pub fn nystrom(dom: &PlanarDomain, n: usize) -> Result<Self> {
        let green = GreenEvaluator::nystrom(dom, n)?;
        Ok(Self {
            domain: dom.clone(),
            method: Method::Nystrom,
            solver: green.solver().cloned(),
            green,
        })
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn green(&self) -> &GreenEvaluator {
        &self.green
    }

    pub fn boundary_nodes(&self) -> Option<usize> {
        self.solver.as_ref().map(|s| s.nodes())
    }

    /// Prepares `L(w, ·)`.
    pub fn l_field(&self, w: Complex64) -> Result<LField> {
        self.domain.check_interior(w)?;
        match self.method {
            Method::ClosedFormDisc => {
                let (center, radius) = self.domain.as_disc().expect("disc");
                Ok(LField::Disc { w, center, radius })
            }
            Method::Nystrom => {
                let solver = self.solver.as_ref().expect("nystrom solver");
                let field = solver.solve(|zeta| 1.0 / (two_pi_i() * (zeta - w)))?;
                Ok(LField::Harmonic { w, field })
            }
        }
    }

    fn check_target(&self, z: Complex64) -> Result<()> {
        if self.domain.contains(z) || self.domain.boundary_distance_unchecked(z) <= 1e-12 {
            Ok(())
        } else {
            Err(Error::outside(z))
        }
    }

    fn check_off_diagonal(&self, w: Complex64, z: Complex64) -> Result<()> {
        if (z - w).norm() < DIAGONAL_FLOOR * self.domain.diameter() {
            return Err(Error::Singularity(format!(
                "|z - w| = {:.3e} is below the diagonal floor",
                (z - w).norm()
            )));
        }
        Ok(())
    }

    pub fn h(&self, w: Complex64, z: Complex64) -> Result<Complex64> {
        kernel_h(w, z)
    }

    pub fn l(&self, w: Complex64, z: Complex64) -> Result<Complex64> {
        self.check_target(z)?;
        let field = self.l_field(w)?;
        if !self.domain.contains(z) {
            // Dirichlet condition.
            return kernel_h(w, z);
        }
        Ok(field.l(z))
    }

    pub fn s(&self, w: Complex64, z: Complex64) -> Result<Complex64> {
        self.check_target(z)?;
        self.check_off_diagonal(w, z)?;
        let field = self.l_field(w)?;
        if !self.domain.contains(z) {
            return Ok(Complex64::new(0.0, 0.0));
        }
        Ok(field.s(z))
    }

    pub fn k(&self, w: Complex64, z: Complex64) -> Result<Complex64> {
        self.check_target(z)?;
        if self.method == Method::Nystrom {
            self.check_off_diagonal(w, z)?;
        }
        Ok(self.l_field(w)?.k(z))
    }

    /// `(∂S/∂z, ∂S/∂z̄)` at `z`.
    pub fn s_gradient(&self, w: Complex64, z: Complex64) -> Result<(Complex64, Complex64)> {
        self.check_target(z)?;
        self.check_off_diagonal(w, z)?;
        Ok(self.l_field(w)?.s_gradient(z))
    }

    /// Ring-average form `L = H − (επi)⁻¹ ∫ G(w + εe^{it}, z) e^{−it} dt`.
    /// With `eps = None` the radius is `min(|z − w|, δ(w))/4`.
    pub fn l_ring(&self, w: Complex64, z: Complex64, eps: Option<f64>) -> Result<Complex64> {
        self.check_target(z)?;
        self.check_off_diagonal(w, z)?;
        let delta = self.domain.distance_to_boundary(w)?;
        let limit = 0.5 * (z - w).norm().min(delta);
        let eps = eps.unwrap_or(0.5 * limit);
        if !(eps > 0.0 && eps <= limit) {
            return Err(Error::Parameter(format!(
                "ring radius {eps} outside (0, {limit}]"
            )));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..RING_NODES {
            let t = TAU * j as f64 / RING_NODES as f64;
            let g = self.green.green(w + eps * Complex64::cis(t), z)?;
            acc += g * Complex64::cis(-t);
        }
        acc *= TAU / RING_NODES as f64;
        Ok(kernel_h(w, z)? - acc / (Complex64::new(0.0, eps * PI)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelBound {
    SFirst,
    SSecond,
    GradS,
    KBound,
}

impl KernelBound {
    pub fn id(&self) -> InequalityId {
        match self {
            Self::SFirst => InequalityId::SFirst,
            Self::SSecond => InequalityId::SSecond,
            Self::GradS => InequalityId::GradS,
            Self::KBound => InequalityId::KBound,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "S-first" => Some(Self::SFirst),
            "S-second" => Some(Self::SSecond),
            "gradS" => Some(Self::GradS),
            "K-bound" => Some(Self::KBound),
            _ => None,
        }
    }

    /// The bare kernel quantity whose radial profile is fitted.
    pub fn magnitude(&self, field: &LField, z: Complex64) -> f64 {
        match self {
            Self::SFirst | Self::SSecond => field.s(z).norm(),
            Self::GradS => gradient_norm(field.s_gradient(z)),
            Self::KBound => field.k(z).norm(),
        }
    }

    /// The quantity divided by its bound, without the constant.
    pub fn normalized(&self, mag: f64, r: f64, d: f64, delta_z: f64) -> f64 {
        match self {
            Self::SFirst => mag * r / (2.0 * d / r).ln(),
            Self::SSecond => mag * r * r / (delta_z * (2.0 * d / r).ln()),
            Self::GradS => mag * r * r / (2.0 * d / r).ln(),
            Self::KBound => mag * r * r / (d / r).ln(),
        }
    }
}

/// Radii (as fractions of the diameter) of the radial decay profile.
pub const PROFILE_RADII: [f64; 9] = [0.004, 0.006, 0.01, 0.015, 0.025, 0.04, 0.06, 0.1, 0.15];

/// Empirical supremum of a normalized kernel bound, with the decay slope of its radial profile.
///
/// The slope is fitted to `ρ ↦ sup_{|z−w|=ρ} |·|` where `w` ranges over the
/// sampled first points together with points at depth `10⁻⁴·d` inside the
/// boundary (depth five node spacings for Nyström sets).
pub fn fit_kernel_decay(
    ks: &KernelSet,
    sampler: &PairSampler,
    which: KernelBound,
) -> Result<EstimateReport> {
    if sampler.count == 0 {
        return Err(Error::Parameter("pair sample is empty".into()));
    }
    let dom = ks.domain();
    let d = dom.diameter();
    let pairs = sampler.doubled().pairs(dom);
    let mut half = SupTracker::default();
    let mut full = SupTracker::default();
    let mut cached: Option<LField> = None;
    for (idx, &(w, z)) in pairs.iter().enumerate() {
        if cached.as_ref().map(|f| f.pole()) != Some(w) {
            cached = Some(ks.l_field(w)?);
        }
        let field = cached.as_ref().expect("field cached");
        let r = (z - w).norm();
        let delta_z = dom.distance_to_boundary(z)?;
        let v = which.normalized(which.magnitude(field, z), r, d, delta_z);
        if idx < sampler.count {
            half.offer(v, &[w, z]);
        }
        full.offer(v, &[w, z]);
    }
    let (radii, sups) = radial_profile(ks, which, &pairs)?;
    let mut report = EstimateReport::new(which.id(), dom.label());
    report.samples = pairs.len();
    report.supremum = full.value;
    report.set_stability(half.value);
    report.set_argmax(&full.at);
    report.slope = loglog_slope(&radii, &sups);
    report.grid.insert("seed".into(), sampler.seed as f64);
    report.grid.insert("profile_radii".into(), radii.len() as f64);
    if let Some(n) = ks.boundary_nodes() {
        report.grid.insert("boundary_nodes".into(), n as f64);
    }
    Ok(report)
}

/// `(ρ_k, sup_{|z−w|=ρ_k} |·|)` over a set of first points.
pub fn radial_profile(
    ks: &KernelSet,
    which: KernelBound,
    pairs: &[(Complex64, Complex64)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dom = ks.domain();
    let d = dom.diameter();
    let depth = match ks.boundary_nodes() {
        Some(_) => 5.0 * ks.solver.as_ref().expect("solver").spacing(),
        None => 1e-4 * d,
    };
    let mut poles: Vec<Complex64> = pairs.iter().take(64).map(|p| p.0).collect();
    let c = dom.center();
    for k in 0..16 {
        let t = TAU * k as f64 / 16.0 + 0.05;
        let reach = dom.ray_exit(c, t)?;
        let inward = c + (reach - depth).max(0.0) * Complex64::cis(t);
        // Push further in until the depth condition holds on curved boundaries.
        let mut p = inward;
        while dom.boundary_distance_unchecked(p) < depth || !dom.contains(p) {
            p = c + (p - c) * 0.999;
        }
        poles.push(p);
    }
    let radii: Vec<f64> = PROFILE_RADII.iter().map(|f| f * d).collect();
    let mut sups = vec![0.0f64; radii.len()];
    for &w in &poles {
        let field = ks.l_field(w)?;
        for (k, &rho) in radii.iter().enumerate() {
            for j in 0..48 {
                let z = w + Complex64::from_polar(rho, TAU * j as f64 / 48.0);
                if dom.contains(z) {
                    sups[k] = sups[k].max(which.magnitude(&field, z));
                }
            }
        }
    }
    Ok((radii, sups))
}

/// Sup deviations of the kernel of one exhaustion level from the limit kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDeviation {
    pub level: usize,
    pub scale: f64,
    pub boundary_gap: f64,
    /// `sup |S_l(w, h_l(z)) − S(w, z)|`
    pub s_deviation: f64,
    /// `sup |∇S_l(w, h_l(z)) − ∇S(w, z)|`
    pub grad_deviation: f64,
    /// `sup |h_l − id|` over the closed domain.
    pub map_deviation: f64,
}

/// Stability of `S` under the exhaustion: for each level, compares the kernel
/// of the inner domain, pulled back by `h_l`, with the kernel of the domain
/// over `w ∈ κ`, `z ∈ closure(D)`, `|z − w| ≥ 0.05·d`. The compact set `κ` is
/// the homothetic copy of the domain by `kappa` about its center.
pub fn stability_probe(
    dom: &PlanarDomain,
    levels: &[usize],
    kappa: f64,
    boundary_nodes: usize,
) -> Result<Vec<LevelDeviation>> {
    if levels.is_empty() || levels.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Parameter("levels must be non-empty and increasing".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::Parameter(format!("compact fraction must be positive, got {kappa}")));
    }
    let steps = levels
        .iter()
        .map(|&l| exhaustion(dom, l))
        .collect::<Result<Vec<_>>>()?;
    if kappa >= steps[0].scale {
        return Err(Error::Parameter(format!(
            "compact set of fraction {kappa} is not inside the level-{} domain (fraction {:.4})",
            steps[0].level, steps[0].scale
        )));
    }
    let base = KernelSet::new(dom, boundary_nodes)?;
    let c = dom.center();
    let d = dom.diameter();
    let mut poles = vec![c];
    for ring in [0.5, 1.0] {
        for k in 0..8 {
            let t = TAU * k as f64 / 8.0 + 0.2;
            let reach = dom.ray_exit(c, t)?;
            poles.push(c + ring * kappa * reach * Complex64::cis(t));
        }
    }
    let mut targets = Vec::new();
    for i in 1..=20 {
        let frac = i as f64 / 20.0;
        for j in 0..48 {
            let t = TAU * (j as f64 + 0.5 * (i % 2) as f64) / 48.0;
            let reach = dom.ray_exit(c, t)?;
            targets.push(c + frac * reach * Complex64::cis(t));
        }
    }
    let base_fields = poles.iter().map(|&w| base.l_field(w)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(steps.len());
    for step in &steps {
        let inner = KernelSet::new(&step.inner_domain, boundary_nodes)?;
        let mut s_dev = 0.0f64;
        let mut g_dev = 0.0f64;
        let mut map_dev = 0.0f64;
        for (&w, base_field) in poles.iter().zip(&base_fields) {
            let field = inner.l_field(w)?;
            for &z in &targets {
                let hz = step.map(z);
                map_dev = map_dev.max((hz - z).norm());
                if (z - w).norm() < 0.05 * d {
                    continue;
                }
                let on_edge = !dom.contains(z);
                let s0 = if on_edge { Complex64::new(0.0, 0.0) } else { base_field.s(z) };
                let sl = if step.inner_domain.contains(hz) {
                    field.s(hz)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                s_dev = s_dev.max((sl - s0).norm());
                let (a0, b0) = base_field.s_gradient(z);
                let (a1, b1) = field.s_gradient(hz);
                g_dev = g_dev.max(gradient_norm((a1 - a0, b1 - b0)));
            }
        }
        out.push(LevelDeviation {
            level: step.level,
            scale: step.scale,
            boundary_gap: step.boundary_gap,
            s_deviation: s_dev,
            grad_deviation: g_dev,
            map_deviation: map_dev,
        });
    }
    Ok(out)
}
