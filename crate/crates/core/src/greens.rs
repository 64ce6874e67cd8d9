//! Green's function and Dirichlet problems on planar domains.
//!
//! Harmonic extensions are computed from the double-layer representation
//! `u = Re C[μ]`, where `C[μ](z) = (2πi)⁻¹ ∮ μ(ζ)/(ζ − z) dζ` and `μ` is real,
//! discretized with the trapezoidal rule. The boundary trace of the
//! holomorphic function `C[μ]` is recovered from `μ`, and interior values are
//! taken from its barycentric Cauchy sum, which stays accurate close to the
//! boundary.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryQuadrature, PlanarDomain};
use crate::report::{EstimateReport, InequalityId, SupTracker};
use crate::sampling::PairSampler;

/// Pairs closer than this fraction of the diameter are rejected.
pub const DIAGONAL_FLOOR: f64 = 1e-8;

/// Factorized double-layer system `μ/2 + Kμ = g` on one boundary quadrature.
#[derive(Debug)]
pub struct DirichletSolver {
    domain: PlanarDomain,
    quad: BoundaryQuadrature,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    spacing: f64,
}

impl DirichletSolver {
    pub fn new(dom: &PlanarDomain, n: usize) -> Result<Self> {
        let quad = dom.boundary_quadrature(n)?;
        let h = TAU / n as f64;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let k = if i == j {
                    (quad.seconds[i] / quad.tangents[i]).im / (4.0 * PI)
                } else {
                    (quad.tangents[j] / (quad.nodes[j] - quad.nodes[i])).im / TAU
                };
                a[(i, j)] = k * h;
            }
            a[(i, i)] += 0.5;
        }
        let spacing = quad.arc_length() / n as f64;
        Ok(Self { domain: dom.clone(), quad, lu: a.lu(), spacing })
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    pub fn quadrature(&self) -> &BoundaryQuadrature {
        &self.quad
    }

    pub fn nodes(&self) -> usize {
        self.quad.count()
    }

    /// Mean arc length between consecutive nodes.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Boundary trace of the holomorphic function `Φ = C[μ]` with `Re Φ = g` on the boundary.
    fn density(&self, g: Vec<f64>) -> Result<Density> {
        let mu = self
            .lu
            .solve(&DVector::from_vec(g))
            .ok_or_else(|| Error::Singularity("double-layer matrix is singular".into()))?;
        let mu: Vec<f64> = mu.iter().copied().collect();
        let n = mu.len();
        let h = TAU / n as f64;
        let dmu_dt = spectral_derivative_real(&mu);
        let q = &self.quad;
        let two_pi_i = Complex64::new(0.0, TAU);
        // Φ₊ = μ + (2πi)⁻¹ ∮ (μ − μ_i) dζ/(ζ − ζ_i); the integrand is smooth.
        let phi: Vec<Complex64> = (0..n)
            .map(|i| {
                let mut acc = Complex64::new(dmu_dt[i] * h, 0.0);
                for j in 0..n {
                    if j != i {
                        acc += (mu[j] - mu[i]) * q.tangents[j] * h / (q.nodes[j] - q.nodes[i]);
                    }
                }
                mu[i] + acc / two_pi_i
            })
            .collect();
        let dphi = spectral_derivative(&phi)
            .iter()
            .zip(&q.tangents)
            .map(|(d, t)| d / t)
            .collect();
        Ok(Density { phi, dphi })
    }

    /// Harmonic extension of complex boundary values given at the nodes.
    pub fn solve_values(self: &Arc<Self>, values: Vec<Complex64>) -> Result<HarmonicField> {
        if let Some(bad) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            let z = self.quad.nodes[bad];
            return Err(Error::Data(format!(
                "boundary data is not finite at ({}, {})",
                z.re, z.im
            )));
        }
        let re = self.density(values.iter().map(|v| v.re).collect())?;
        let im = if values.iter().any(|v| v.im != 0.0) {
            Some(self.density(values.iter().map(|v| v.im).collect())?)
        } else {
            None
        };
        Ok(HarmonicField { solver: Arc::clone(self), re, im, boundary: values })
    }

    pub fn solve<F: Fn(Complex64) -> Complex64>(self: &Arc<Self>, data: F) -> Result<HarmonicField> {
        let values = self.quad.nodes.iter().map(|&z| data(z)).collect();
        self.solve_values(values)
    }

    /// Barycentric Cauchy sum `Σ v_j c_j / Σ c_j`, or the node value when `z` is a node.
    fn cauchy<V: Copy + Into<Complex64>>(&self, v: &[V], z: Complex64) -> Complex64 {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = Complex64::new(0.0, 0.0);
        for ((&zeta, &dz), &vj) in self.quad.nodes.iter().zip(&self.quad.tangents).zip(v) {
            let diff = zeta - z;
            if diff.norm() == 0.0 {
                return vj.into();
            }
            let c = dz / diff;
            num += c * vj.into();
            den += c;
        }
        num / den
    }
}

#[derive(Debug, Clone)]
struct Density {
    /// Boundary values of the holomorphic function whose real part is the field.
    phi: Vec<Complex64>,
    /// dΦ/dζ along the boundary.
    dphi: Vec<Complex64>,
}

/// Spectral derivative d/dt of a periodic sample on [0, 2π).
fn spectral_derivative(v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf = v.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let freq = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        *c *= Complex64::new(0.0, freq / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

fn spectral_derivative_real(v: &[f64]) -> Vec<f64> {
    let c: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    spectral_derivative(&c).iter().map(|z| z.re).collect()
}

/// Harmonic extension of complex boundary data, componentwise.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    solver: Arc<DirichletSolver>,
    re: Density,
    im: Option<Density>,
    boundary: Vec<Complex64>,
}

impl HarmonicField {
    pub fn boundary_values(&self) -> &[Complex64] {
        &self.boundary
    }

    pub fn solver(&self) -> &Arc<DirichletSolver> {
        &self.solver
    }

    /// Value at an interior point. Points on the boundary nodes return the data.
    pub fn value(&self, z: Complex64) -> Complex64 {
        let re = self.solver.cauchy(&self.re.phi, z).re;
        let im = self.im.as_ref().map_or(0.0, |d| self.solver.cauchy(&d.phi, z).re);
        Complex64::new(re, im)
    }

    /// Value together with a flag set when `z` lies within five node spacings of the boundary.
    pub fn value_flagged(&self, z: Complex64) -> Result<(Complex64, bool)> {
        let dom = self.solver.domain();
        dom.check_interior(z)?;
        let near = dom.boundary_distance_unchecked(z) < 5.0 * self.solver.spacing();
        Ok((self.value(z), near))
    }

    /// Wirtinger derivatives `(∂u/∂z, ∂u/∂z̄)`.
    pub fn derivatives(&self, z: Complex64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        let dz_re = 0.5 * self.solver.cauchy(&self.re.dphi, z);
        let (dz_im, dzb_im) = match &self.im {
            Some(d) => {
                let v = 0.5 * self.solver.cauchy(&d.dphi, z);
                (v, v.conj())
            }
            None => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
        };
        (dz_re + i * dz_im, dz_re.conj() + i * dzb_im)
    }
}

/// Harmonic extension of `data` into `dom` with `n` boundary nodes.
pub fn dirichlet_solve<F: Fn(Complex64) -> Complex64>(
    dom: &PlanarDomain,
    data: F,
    n: usize,
) -> Result<HarmonicField> {
    Arc::new(DirichletSolver::new(dom, n)?).solve(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedFormDisc,
    Nystrom,
}

/// Positive Green's function `G(z, w)` of a planar domain.
#[derive(Debug, Clone)]
pub struct GreenEvaluator {
    domain: PlanarDomain,
    method: Method,
    solver: Option<Arc<DirichletSolver>>,
}

impl GreenEvaluator {
    /// Closed form on discs, Nyström with `n` nodes otherwise.
    pub fn new(dom: &PlanarDomain, n: usize) -> Result<Self> {
        if dom.as_disc().is_some() {
            Self::closed_form(dom)
        } else {
            Self::nystrom(dom, n)
        }
    }

    pub fn closed_form(dom: &PlanarDomain) -> Result<Self> {
        if dom.as_disc().is_none() {
            return Err(Error::Unsupported("closed-form Green's function needs a disc".into()));
        }
        Ok(Self { domain: dom.clone(), method: Method::ClosedFormDisc, solver: None })
    }

    pub fn nystrom(dom: &PlanarDomain, n: usize) -> Result<Self> {
        Ok(Self {
            domain: dom.clone(),
            method: Method::Nystrom,
            solver: Some(Arc::new(DirichletSolver::new(dom, n)?)),
        })
    }

    pub fn domain(&self) -> &PlanarDomain {
        &self.domain
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn solver(&self) -> Option<&Arc<DirichletSolver>> {
        self.solver.as_ref()
    }

    fn check_pair(&self, z: Complex64, w: Complex64) -> Result<()> {
        if !self.domain.contains(w) {
            return Err(Error::outside(w));
        }
        if !self.domain.contains(z) && self.domain.boundary_distance_unchecked(z) > 1e-12 {
            return Err(Error::outside(z));
        }
        if (z - w).norm() < DIAGONAL_FLOOR * self.domain.diameter() {
            return Err(Error::Singularity(format!(
                "|z - w| = {:.3e} is below the diagonal floor",
                (z - w).norm()
            )));
        }
        Ok(())
    }

    /// Harmonic part `ρ(·, p) = G(·, p) + (2π)⁻¹ log|· − p|` for a pole `p`.
    pub fn corrector(&self, p: Complex64) -> Result<HarmonicField> {
        let solver = self.solver.as_ref().ok_or_else(|| {
            Error::Unsupported("closed-form evaluator has no harmonic corrector field".into())
        })?;
        solver.solve(|zeta| Complex64::new((zeta - p).norm().ln() / TAU, 0.0))
    }

    fn depth(&self, z: Complex64) -> f64 {
        if self.domain.contains(z) {
            self.domain.boundary_distance_unchecked(z)
        } else {
            0.0
        }
    }

    /// `G(z, w)`; `z` may lie on the boundary.
    pub fn green(&self, z: Complex64, w: Complex64) -> Result<f64> {
        self.check_pair(z, w)?;
        match self.method {
            Method::ClosedFormDisc => {
                let (c, r) = self.domain.as_disc().expect("closed form on disc");
                let (zs, ws) = ((z - c) / r, (w - c) / r);
                Ok(((1.0 - zs * ws.conj()).norm() / (zs - ws).norm()).ln() / TAU)
            }
            Method::Nystrom => {
                // The pole goes to the deeper point, where its data is best resolved.
                let (pole, at) = if self.depth(w) >= self.depth(z) { (w, z) } else { (z, w) };
                let h = self.corrector(pole)?.value(at).re;
                Ok(h - (z - w).norm().ln() / TAU)
            }
        }
    }

    /// `∂G(z, w)/∂z`.
    pub fn green_dz(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        self.check_pair(z, w)?;
        let singular = -1.0 / (4.0 * PI * (z - w));
        match self.method {
            Method::ClosedFormDisc => {
                let (c, r) = self.domain.as_disc().expect("closed form on disc");
                let (zs, ws) = ((z - c) / r, (w - c) / r);
                let reflected = -ws.conj() / (1.0 - zs * ws.conj()) / (4.0 * PI * r);
                Ok(reflected + singular)
            }
            Method::Nystrom => {
                let solver = self.solver.as_ref().expect("nystrom solver");
                if self.depth(w) >= self.depth(z) {
                    Ok(singular + self.corrector(w)?.derivatives(z).0)
                } else {
                    // Differentiate the corrector with respect to its pole instead.
                    let field = solver.solve(|zeta| 1.0 / (4.0 * PI * (z - zeta)))?;
                    Ok(singular + field.value(w))
                }
            }
        }
    }

    /// `∇_z G(z, w)` as `(∂/∂x, ∂/∂y)`.
    pub fn green_gradient(&self, z: Complex64, w: Complex64) -> Result<[f64; 2]> {
        let d = self.green_dz(z, w)?;
        Ok([2.0 * d.re, -2.0 * d.im])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenBound {
    G,
    G2,
    Gd,
    Log,
}

impl GreenBound {
    pub fn id(&self) -> InequalityId {
        match self {
            Self::G => InequalityId::GBound,
            Self::G2 => InequalityId::G2Bound,
            Self::Gd => InequalityId::GdBound,
            Self::Log => InequalityId::LogBound,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "G-bound" | "G" => Some(Self::G),
            "g2-bound" | "g2" => Some(Self::G2),
            "Gd-bound" | "Gd" => Some(Self::Gd),
            "log-bound" | "log" => Some(Self::Log),
            _ => None,
        }
    }
}

/// Empirical supremum of the normalized Green's function bound over sampled pairs.
///
/// The sampler is run at its own size and at double size (same seed, so the
/// first half coincides); the report stores the larger supremum and the ratio.
/// For `Gd` the supremum is the larger of the two normalized gradient terms,
/// each of which is also recorded separately.
pub fn fit_green_bounds(
    ev: &GreenEvaluator,
    sampler: &PairSampler,
    which: GreenBound,
) -> Result<EstimateReport> {
    if sampler.count == 0 {
        return Err(Error::Parameter("pair sample is empty".into()));
    }
    let dom = ev.domain();
    let d = dom.diameter();
    let pairs = sampler.doubled().pairs(dom);
    let mut half = SupTracker::default();
    let mut full = SupTracker::default();
    let (mut grad_any, mut grad_z) = (0.0f64, 0.0f64);
    for (idx, &(w, z)) in pairs.iter().enumerate() {
        let r = (z - w).norm();
        let log = (d / r).ln();
        let value = match which {
            GreenBound::G => ev.green(w, z)? * r / (dom.distance_to_boundary(w)? * log),
            GreenBound::G2 => {
                let dd = dom.distance_to_boundary(w)? * dom.distance_to_boundary(z)?;
                ev.green(w, z)? * r * r / (dd * log)
            }
            GreenBound::Log => TAU * ev.green(z, w)? / log,
            GreenBound::Gd => {
                // ∇_z G(w, z) = ∇_z G(z, w) by symmetry; the w-gradient swaps the roles.
                let gz = ev.green_dz(z, w)?.norm() * 2.0;
                let gw = ev.green_dz(w, z)?.norm() * 2.0;
                let first = gz.max(gw) * r / log;
                let second = gz * r * r / (dom.distance_to_boundary(w)? * log);
                grad_any = grad_any.max(first);
                grad_z = grad_z.max(second);
                first.max(second)
            }
        };
        if idx < sampler.count {
            half.offer(value, &[w, z]);
        }
        full.offer(value, &[w, z]);
    }
    let mut report = EstimateReport::new(which.id(), dom.label());
    report.samples = pairs.len();
    report.supremum = full.value;
    report.set_stability(half.value);
    report.set_argmax(&full.at);
    if which == GreenBound::Gd {
        report.extra.insert("grad_either".into(), grad_any);
        report.extra.insert("grad_z_over_delta_w".into(), grad_z);
    }
    report.grid.insert("seed".into(), sampler.seed as f64);
    if let Some(s) = ev.solver() {
        report.grid.insert("boundary_nodes".into(), s.nodes() as f64);
    }
    Ok(report)
}
