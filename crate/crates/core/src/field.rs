//! Target grids and sampled solution fields.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlanarDomain;

/// Polar midpoint grid about the domain center: `nr` radii `(i + ½)/nr` of the
/// ray length along each of `nt` equispaced angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub center: Complex64,
    pub nr: usize,
    pub nt: usize,
    /// Ray length from the center along each angle.
    pub reach: Vec<f64>,
}

impl PolarGrid {
    pub fn new(dom: &PlanarDomain, nr: usize, nt: usize) -> Result<Self> {
        if nr < 1 || nt < 1 {
            return Err(Error::Parameter(format!("polar grid {nr}x{nt} is empty")));
        }
        let center = dom.center();
        let reach = (0..nt)
            .map(|j| dom.ray_exit(center, TAU * j as f64 / nt as f64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { center, nr, nt, reach })
    }

    /// Square grid with `n` radii and `n` angles.
    pub fn square(dom: &PlanarDomain, n: usize) -> Result<Self> {
        Self::new(dom, n, n)
    }

    pub fn len(&self) -> usize {
        self.nr * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.nt as f64
    }

    pub fn fraction(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.nr as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nt + j
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.nt, idx % self.nt)
    }

    pub fn point(&self, i: usize, j: usize) -> Complex64 {
        self.center + Complex64::from_polar(self.fraction(i) * self.reach[j], self.theta(j))
    }

    /// Midpoint area weight `r Δr Δθ`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let dr = self.reach[j] / self.nr as f64;
        self.fraction(i) * self.reach[j] * dr * TAU / self.nt as f64
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.point(k / self.nt, k % self.nt)).collect()
    }

    /// Doubles both directions.
    pub fn refined(&self, dom: &PlanarDomain) -> Result<Self> {
        Self::new(dom, 2 * self.nr, 2 * self.nt)
    }
}

/// Tensor product of per-factor polar grids; the first factor varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    pub factors: Vec<PolarGrid>,
}

impl TensorGrid {
    pub fn new(factors: Vec<PolarGrid>) -> Self {
        Self { factors }
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn len(&self) -> usize {
        self.factors.iter().map(|g| g.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index to per-factor flat indices.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (k, g) in self.factors.iter().enumerate().rev() {
            out[k] = idx % g.len();
            idx /= g.len();
        }
        out
    }

    pub fn flatten(&self, parts: &[usize]) -> usize {
        parts.iter().zip(&self.factors).fold(0, |acc, (&p, g)| acc * g.len() + p)
    }

    pub fn point(&self, idx: usize) -> Vec<Complex64> {
        self.unflatten(idx)
            .iter()
            .zip(&self.factors)
            .map(|(&p, g)| {
                let (i, j) = g.split(p);
                g.point(i, j)
            })
            .collect()
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.unflatten(idx)
            .iter()
            .zip(&self.factors)
            .map(|(&p, g)| {
                let (i, j) = g.split(p);
                g.weight(i, j)
            })
            .product()
    }
}

/// Where a solver is asked for values.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Grid(TensorGrid),
    /// Scattered points in `Cⁿ`, each with an optional area weight.
    Points { points: Vec<Vec<Complex64>>, weights: Option<Vec<f64>> },
}

impl Targets {
    pub fn grid(g: PolarGrid) -> Self {
        Self::Grid(TensorGrid::new(vec![g]))
    }

    pub fn scattered(points: Vec<Complex64>) -> Self {
        Self::Points { points: points.into_iter().map(|z| vec![z]).collect(), weights: None }
    }

    pub fn points_nd(points: Vec<Vec<Complex64>>) -> Self {
        Self::Points { points, weights: None }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Grid(g) => g.len(),
            Self::Points { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn expand(&self) -> (Vec<Vec<Complex64>>, Vec<f64>) {
        match self {
            Self::Grid(g) => ((0..g.len()).map(|k| g.point(k)).collect(), (0..g.len()).map(|k| g.weight(k)).collect()),
            Self::Points { points, weights } => {
                let w = weights.clone().unwrap_or_else(|| vec![1.0; points.len()]);
                (points.clone(), w)
            }
        }
    }

    pub fn as_grid(&self) -> Option<&TensorGrid> {
        match self {
            Self::Grid(g) => Some(g),
            Self::Points { .. } => None,
        }
    }
}

/// Values of a solution at target points, with their norms.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub points: Vec<Vec<Complex64>>,
    pub weights: Vec<f64>,
    pub values: Vec<Complex64>,
    pub grid: Option<TensorGrid>,
    pub sup_norm: f64,
    /// Discrete L² norm with the stored weights.
    pub l2_norm: f64,
}

impl SolutionField {
    pub fn new(targets: &Targets, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != targets.len() {
            return Err(Error::Parameter(format!(
                "{} values for {} targets",
                values.len(),
                targets.len()
            )));
        }
        let (points, weights) = targets.expand();
        let mut out = Self {
            points,
            weights,
            values,
            grid: targets.as_grid().cloned(),
            sup_norm: 0.0,
            l2_norm: 0.0,
        };
        out.refresh_norms();
        Ok(out)
    }

    pub fn from_fn<F: Fn(&[Complex64]) -> Complex64>(targets: &Targets, f: F) -> Result<Self> {
        let (points, _) = targets.expand();
        Self::new(targets, points.iter().map(|p| f(p)).collect())
    }

    pub fn targets(&self) -> Targets {
        match &self.grid {
            Some(g) => Targets::Grid(g.clone()),
            None => Targets::Points { points: self.points.clone(), weights: Some(self.weights.clone()) },
        }
    }

    pub fn refresh_norms(&mut self) {
        self.sup_norm = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        self.l2_norm = self
            .values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum::<f64>()
            .sqrt();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// Pointwise difference `self − other` on the same targets.
    pub fn minus(&self, other: &SolutionField) -> Result<SolutionField> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(&other.values) {
            *v -= o;
        }
        out.refresh_norms();
        Ok(out)
    }

    pub fn check_same(&self, other: &SolutionField) -> Result<()> {
        if self.points != other.points {
            return Err(Error::Parameter("fields live on different grids".into()));
        }
        Ok(())
    }

    /// Discrete L^p norm, `p = ∞` giving the maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_norm;
        }
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.norm().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// Points whose every coordinate has depth at least `frac · d` in its factor.
    pub fn compact_mask(&self, factors: &[PlanarDomain], frac: f64) -> Vec<bool> {
        self.points
            .iter()
            .map(|p| {
                p.iter().zip(factors).all(|(&z, dom)| {
                    dom.contains(z) && dom.boundary_distance_unchecked(z) >= frac * dom.diameter()
                })
            })
            .collect()
    }

    /// Centered finite-difference `∂u/∂z̄_k` at grid points with radial neighbours
    /// on both sides; `None` elsewhere.
    pub fn dbar_fd(&self, k: usize) -> Result<Vec<Option<Complex64>>> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Parameter("finite differences need a tensor grid".into()))?;
        let g = &grid.factors[k];
        let dtheta = TAU / g.nt as f64;
        let ds = 1.0 / g.nr as f64;
        let mut out = vec![None; self.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let mut parts = grid.unflatten(idx);
            let (i, j) = g.split(parts[k]);
            if i == 0 || i + 1 >= g.nr {
                continue;
            }
            let mut at = |ii: usize, jj: usize| {
                parts[k] = g.index(ii, jj);
                self.values[grid.flatten(&parts)]
            };
            let (jp, jm) = ((j + 1) % g.nt, (j + g.nt - 1) % g.nt);
            let u_s = (at(i + 1, j) - at(i - 1, j)) / (2.0 * ds);
            let u_t = (at(i, jp) - at(i, jm)) / (2.0 * dtheta);
            let reach = g.reach[j];
            let dreach = (g.reach[jp] - g.reach[jm]) / (2.0 * dtheta);
            let s = g.fraction(i);
            let r = s * reach;
            let u_r = u_s / reach;
            let u_theta = u_t - s * dreach * u_r;
            let e = Complex64::cis(g.theta(j));
            *slot = Some(0.5 * e * (u_r + Complex64::i() * u_theta / r));
        }
        Ok(out)
    }

    /// Relative sup error between the finite-difference `∂̄` of the field and
    /// the form `f`, over compact grid points (depth ≥ `frac · d` in every factor).
    pub fn dbar_residual<F>(&self, factors: &[PlanarDomain], frac: f64, f: F) -> Result<f64>
    where
        F: Fn(&[Complex64]) -> Vec<Complex64>,
    {
        let mask = self.compact_mask(factors, frac);
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        let fd: Vec<Vec<Option<Complex64>>> =
            (0..self.dim()).map(|k| self.dbar_fd(k)).collect::<Result<_>>()?;
        for (idx, p) in self.points.iter().enumerate() {
            if !mask[idx] {
                continue;
            }
            let fv = f(p);
            for (k, comp) in fd.iter().enumerate() {
                if let Some(d) = comp[idx] {
                    err = err.max((d - fv[k]).norm());
                    scale = scale.max(fv[k].norm());
                }
            }
        }
        if scale == 0.0 {
            return Ok(err);
        }
        Ok(err / scale)
    }

    /// CSV with one row per target: coordinates then the value.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim() {
            let _ = write!(out, "z{k}_re,z{k}_im,");
        }
        out.push_str("re,im\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            for z in p {
                let _ = write!(out, "{:.12e},{:.12e},", z.re, z.im);
            }
            let _ = writeln!(out, "{:.12e},{:.12e}", v.re, v.im);
        }
        out
    }
}

/// Sup and L² comparison of two fields on identical targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComparison {
    pub sup_difference: f64,
    pub l2_difference: f64,
    /// `l2_difference / ‖b‖₂`, or the absolute value when `b` vanishes.
    pub l2_relative: f64,
    pub max_location: Vec<[f64; 2]>,
    pub points: usize,
}

pub fn compare_fields(a: &SolutionField, b: &SolutionField) -> Result<FieldComparison> {
    let diff = a.minus(b)?;
    let (mut best, mut at) = (0.0f64, 0usize);
    for (k, v) in diff.values.iter().enumerate() {
        if v.norm() > best {
            best = v.norm();
            at = k;
        }
    }
    let loc = diff.points.get(at).map_or_else(Vec::new, |p| p.iter().map(|z| [z.re, z.im]).collect());
    Ok(FieldComparison {
        sup_difference: diff.sup_norm,
        l2_difference: diff.l2_norm,
        l2_relative: if b.l2_norm > 0.0 { diff.l2_norm / b.l2_norm } else { diff.l2_norm },
        max_location: loc,
        points: diff.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_weights_sum_to_area() {
        let disc = PlanarDomain::unit_disc();
        let g = PolarGrid::square(&disc, 64).unwrap();
        let total: f64 = (0..g.len()).map(|k| g.weight(k / g.nt, k % g.nt)).sum();
        assert!((total - std::f64::consts::PI).abs() < 1e-12);
        let ell = PlanarDomain::ellipse(2.0, 1.0).unwrap();
        let g = PolarGrid::square(&ell, 128).unwrap();
        let total: f64 = (0..g.len()).map(|k| g.weight(k / g.nt, k % g.nt)).sum();
        assert!((total - 2.0 * std::f64::consts::PI).abs() < 1e-3);
    }

    #[test]
    fn tensor_indexing_round_trips() {
        let disc = PlanarDomain::unit_disc();
        let t = TensorGrid::new(vec![PolarGrid::new(&disc, 3, 4).unwrap(), PolarGrid::new(&disc, 2, 5).unwrap()]);
        for idx in 0..t.len() {
            assert_eq!(t.flatten(&t.unflatten(idx)), idx);
        }
        assert_eq!(t.len(), 120);
    }

    #[test]
    fn finite_difference_dbar_of_known_fields() {
        for (dom, n) in [(PlanarDomain::unit_disc(), 64), (PlanarDomain::ellipse(2.0, 1.0).unwrap(), 128)] {
            let targets = Targets::grid(PolarGrid::square(&dom, n).unwrap());
            let u = SolutionField::from_fn(&targets, |p| p[0].conj() * p[0].conj() + p[0] * p[0]).unwrap();
            let res = u.dbar_residual(&[dom.clone()], 0.1, |p| vec![2.0 * p[0].conj()]).unwrap();
            assert!(res < 1e-2, "{} {res}", dom.label());
        }
        let disc = PlanarDomain::unit_disc();
        let g = PolarGrid::square(&disc, 16).unwrap();
        let targets = Targets::Grid(TensorGrid::new(vec![g.clone(), g]));
        let u = SolutionField::from_fn(&targets, |p| p[0].conj() * p[1].conj()).unwrap();
        let res = u
            .dbar_residual(&[disc.clone(), disc], 0.1, |p| vec![p[1].conj(), p[0].conj()])
            .unwrap();
        assert!(res < 5e-2, "{res}");
    }

    #[test]
    fn comparison_examples() {
        let disc = PlanarDomain::unit_disc();
        let targets = Targets::grid(PolarGrid::square(&disc, 8).unwrap());
        let a = SolutionField::from_fn(&targets, |p| p[0]).unwrap();
        let r = compare_fields(&a, &a).unwrap();
        assert_eq!((r.sup_difference, r.l2_difference), (0.0, 0.0));
        let zero = SolutionField::from_fn(&targets, |_| Complex64::new(0.0, 0.0)).unwrap();
        let c = SolutionField::from_fn(&targets, |_| Complex64::new(0.0, 2.5)).unwrap();
        assert!((compare_fields(&zero, &c).unwrap().sup_difference - 2.5).abs() < 1e-15);
        let other = Targets::grid(PolarGrid::square(&disc, 4).unwrap());
        let b = SolutionField::from_fn(&other, |p| p[0]).unwrap();
        assert!(matches!(compare_fields(&a, &b), Err(Error::Parameter(_))));
    }
}
