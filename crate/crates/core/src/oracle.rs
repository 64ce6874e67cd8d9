//! Brute-force reference: the minimum-norm solution of a discretized `∂̄`-system.
//!
//! Each disc factor carries the node grid `c + R·(i/n_r)·e^{2πil/n_θ}`,
//! `i = 0..=n_r`, with the center counted once. Angular Fourier modes
//! decouple the planar operator: a mode `û(r)e^{ikθ}` has
//! `∂̄u = ½e^{i(k+1)θ}(û′ − kû/r)`, discretized at the ring midpoints
//! `r_{i+½}` by
//!
//! ```text
//! ½[(û_{i+1} − û_i)/Δr − k(û_{i+1} + û_i)/(2 r_{i+½})]
//! ```
//!
//! Rows at the innermost midpoint are dropped for `k > 0`, which imposes
//! regularity at the center, and output modes above `n_θ/2 − 1` are not
//! resolved. The product system stacks one such operator per factor.
//! Its weighted normal operator is the Kronecker sum `M₁ ⊗ I + I ⊗ M₂`,
//! diagonalized exactly by the per-mode eigenvectors of each factor.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SolutionField, Targets};
use crate::geometry::PlanarDomain;
use crate::product::{Form01, ProductDomain, TensorDefects};
use crate::solve1d::ScalarFn;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Largest `n_r · n_θ` per factor accepted by the oracle.
pub const MAX_FACTOR_NODES: usize = 1 << 14;

/// Default consistency tolerance: relative weighted least-squares residual.
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-2;

/// One angular mode of a factor operator.
#[derive(Debug, Clone)]
struct ModeBlock {
    k: i64,
    /// Ring indices of the unknowns; ring 0 is the center.
    cols: Vec<usize>,
    /// Midpoint indices `m` of the equations, between rings `m` and `m + 1`.
    rows: Vec<usize>,
    b: DMatrix<f64>,
    omega: Vec<f64>,
    rho: Vec<f64>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// The discretized planar `∂̄` on one disc, in angular Fourier coordinates.
#[derive(Clone)]
pub struct DiscFactor {
    pub center: C,
    pub radius: f64,
    pub nr: usize,
    pub nt: usize,
    blocks: Vec<ModeBlock>,
    offsets: Vec<usize>,
    modal_len: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DiscFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscFactor")
            .field("center", &self.center)
            .field("radius", &self.radius)
            .field("nr", &self.nr)
            .field("nt", &self.nt)
            .finish()
    }
}

fn mode_of(slot: usize, nt: usize) -> i64 {
    if slot < nt / 2 {
        slot as i64
    } else {
        slot as i64 - nt as i64
    }
}

fn slot_of(k: i64, nt: usize) -> usize {
    k.rem_euclid(nt as i64) as usize
}

impl DiscFactor {
    pub fn new(dom: &PlanarDomain, nr: usize, nt: usize) -> Result<Self> {
        let (center, radius) = dom.as_disc().ok_or_else(|| {
            Error::Unsupported(format!("the discrete oracle handles discs only, not {}", dom.label()))
        })?;
        if nr < 2 || nt < 4 || nt % 2 != 0 {
            return Err(Error::Parameter(format!("oracle grid needs n_r >= 2 and even n_theta >= 4, got {nr} x {nt}")));
        }
        if nr * nt > MAX_FACTOR_NODES {
            return Err(Error::Parameter(format!(
                "oracle grid {nr} x {nt} exceeds {MAX_FACTOR_NODES} nodes per factor"
            )));
        }
        let dr = 1.0 / nr as f64;
        let ring_weight = |i: usize| {
            if i == 0 {
                PI * (radius * dr).powi(2) / 4.0
            } else {
                let w = TAU * radius * radius * (i as f64 * dr) * dr;
                if i == nr {
                    0.5 * w
                } else {
                    w
                }
            }
        };
        let mut blocks = Vec::with_capacity(nt);
        let mut offsets = Vec::with_capacity(nt);
        let mut modal_len = 0;
        for slot in 0..nt {
            let k = mode_of(slot, nt);
            let cols: Vec<usize> = if k == 0 { (0..=nr).collect() } else { (1..=nr).collect() };
            let rows: Vec<usize> = if k + 1 > nt as i64 / 2 - 1 {
                Vec::new()
            } else if k > 0 {
                (1..nr).collect()
            } else {
                (0..nr).collect()
            };
            let mut b = DMatrix::<f64>::zeros(rows.len(), cols.len());
            let mut rho = Vec::with_capacity(rows.len());
            for (ri, &m) in rows.iter().enumerate() {
                let rm = (m as f64 + 0.5) * dr;
                let kf = k as f64;
                let hi = 0.5 * (1.0 / dr - kf / (2.0 * rm)) / radius;
                let lo = 0.5 * (-1.0 / dr - kf / (2.0 * rm)) / radius;
                for (ci, &c) in cols.iter().enumerate() {
                    if c == m + 1 {
                        b[(ri, ci)] += hi;
                    }
                    if c == m {
                        b[(ri, ci)] += lo;
                    }
                }
                rho.push(TAU * radius * radius * rm * dr);
            }
            let omega: Vec<f64> = cols.iter().map(|&c| ring_weight(c)).collect();
            let scaled = DMatrix::from_fn(rows.len(), cols.len(), |r, c| b[(r, c)] * rho[r].sqrt() / omega[c].sqrt());
            let normal = scaled.transpose() * &scaled;
            let eig = SymmetricEigen::new(normal);
            offsets.push(modal_len);
            modal_len += cols.len();
            blocks.push(ModeBlock {
                k,
                cols,
                rows,
                b,
                omega,
                rho,
                values: eig.eigenvalues.iter().copied().collect(),
                vectors: eig.eigenvectors,
            });
        }
        let mut planner = FftPlanner::<f64>::new();
        Ok(Self {
            center,
            radius,
            nr,
            nt,
            blocks,
            offsets,
            modal_len,
            fft: planner.plan_fft_forward(nt),
            ifft: planner.plan_fft_inverse(nt),
        })
    }

    /// Number of grid nodes, `1 + n_r n_θ`.
    pub fn nodes(&self) -> usize {
        1 + self.nr * self.nt
    }

    pub fn rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    pub fn node(&self, q: usize) -> C {
        if q == 0 {
            return self.center;
        }
        let (i, l) = ((q - 1) / self.nt + 1, (q - 1) % self.nt);
        self.center + self.radius * (i as f64 / self.nr as f64) * C::cis(TAU * l as f64 / self.nt as f64)
    }

    pub fn node_weight(&self, q: usize) -> f64 {
        let dr = 1.0 / self.nr as f64;
        if q == 0 {
            return PI * (self.radius * dr).powi(2) / 4.0;
        }
        let i = (q - 1) / self.nt + 1;
        let w = self.radius * self.radius * (i as f64 * dr) * dr * TAU / self.nt as f64;
        if i == self.nr {
            0.5 * w
        } else {
            w
        }
    }

    /// Node index of `z`, when `z` is a grid node.
    pub fn locate(&self, z: C) -> Option<usize> {
        let p = (z - self.center) / self.radius;
        let tol = 1e-9;
        if p.norm() < tol {
            return Some(0);
        }
        let i = (p.norm() * self.nr as f64).round() as usize;
        let l = (p.arg().rem_euclid(TAU) * self.nt as f64 / TAU).round() as usize % self.nt;
        if i == 0 || i > self.nr {
            return None;
        }
        let q = 1 + (i - 1) * self.nt + l;
        ((self.node(q) - z).norm() < tol * self.radius).then_some(q)
    }

    /// Midpoint-ring sample points, `n_r` rings of `n_θ` angles.
    fn midpoints(&self) -> Vec<C> {
        let mut out = Vec::with_capacity(self.nr * self.nt);
        for m in 0..self.nr {
            let r = self.radius * (m as f64 + 0.5) / self.nr as f64;
            for l in 0..self.nt {
                out.push(self.center + r * C::cis(TAU * l as f64 / self.nt as f64));
            }
        }
        out
    }

    /// Node values to Fourier coordinates `û_{i,k}`.
    fn to_modal(&self, values: &[C], out: &mut [C]) {
        let nt = self.nt;
        let mut buf = vec![ZERO; nt];
        for i in 1..=self.nr {
            buf.copy_from_slice(&values[1 + (i - 1) * nt..1 + i * nt]);
            self.fft.process(&mut buf);
            for (slot, &v) in buf.iter().enumerate() {
                let blk = &self.blocks[slot];
                let pos = if blk.k == 0 { i } else { i - 1 };
                out[self.offsets[slot] + pos] = v / nt as f64;
            }
        }
        out[self.offsets[0]] = values[0];
    }

    /// Fourier coordinates back to node values.
    fn from_modal(&self, modal: &[C], out: &mut [C]) {
        let nt = self.nt;
        let mut buf = vec![ZERO; nt];
        for i in 1..=self.nr {
            for (slot, v) in buf.iter_mut().enumerate() {
                let blk = &self.blocks[slot];
                let pos = if blk.k == 0 { i } else { i - 1 };
                *v = modal[self.offsets[slot] + pos];
            }
            self.ifft.process(&mut buf);
            out[1 + (i - 1) * nt..1 + i * nt].copy_from_slice(&buf);
        }
        out[0] = modal[self.offsets[0]];
    }

    /// `Ω^{−½} Bᵀ P f̂` for samples at the midpoints, and `‖f̂‖²_P` over resolved rows.
    fn adjoint_rhs(&self, samples: &[C], out: &mut [C]) -> f64 {
        let nt = self.nt;
        let mut spectra = vec![ZERO; self.nr * nt];
        for m in 0..self.nr {
            let row = &mut spectra[m * nt..(m + 1) * nt];
            row.copy_from_slice(&samples[m * nt..(m + 1) * nt]);
            self.fft.process(row);
            for v in row.iter_mut() {
                *v /= nt as f64;
            }
        }
        let mut norm2 = 0.0;
        for (slot, blk) in self.blocks.iter().enumerate() {
            let dst = &mut out[self.offsets[slot]..self.offsets[slot] + blk.cols.len()];
            dst.fill(ZERO);
            if blk.rows.is_empty() {
                continue;
            }
            let fslot = slot_of(blk.k + 1, nt);
            for (ri, &m) in blk.rows.iter().enumerate() {
                let g = spectra[m * nt + fslot];
                norm2 += blk.rho[ri] * g.norm_sqr();
                for (ci, d) in dst.iter_mut().enumerate() {
                    let b = blk.b[(ri, ci)];
                    if b != 0.0 {
                        *d += b * blk.rho[ri] * g;
                    }
                }
            }
            for (ci, d) in dst.iter_mut().enumerate() {
                *d /= blk.omega[ci].sqrt();
            }
        }
        norm2
    }

    fn scale(&self, x: &mut [C], power: f64) {
        for (slot, blk) in self.blocks.iter().enumerate() {
            for (ci, &w) in blk.omega.iter().enumerate() {
                x[self.offsets[slot] + ci] *= w.powf(power);
            }
        }
    }

    /// Rotation into (`forward`) or out of the per-mode eigenbasis.
    fn rotate(&self, x: &mut [C], forward: bool) {
        for (slot, blk) in self.blocks.iter().enumerate() {
            let o = self.offsets[slot];
            let n = blk.cols.len();
            let src: Vec<C> = x[o..o + n].to_vec();
            for a in 0..n {
                let mut acc = ZERO;
                for (c, &s) in src.iter().enumerate() {
                    let v = if forward { blk.vectors[(c, a)] } else { blk.vectors[(a, c)] };
                    acc += v * s;
                }
                x[o + a] = acc;
            }
        }
    }

    fn eigenvalues(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.modal_len];
        for (slot, blk) in self.blocks.iter().enumerate() {
            out[self.offsets[slot]..self.offsets[slot] + blk.values.len()].copy_from_slice(&blk.values);
        }
        out
    }

    /// Node values of the discrete holomorphic function of mode `k ≥ 0`, unit in the grid norm.
    pub fn discrete_monomial(&self, k: usize) -> Result<Vec<C>> {
        let slot = slot_of(k as i64, self.nt);
        let blk = &self.blocks[slot];
        if blk.rows.is_empty() {
            return Err(Error::Parameter(format!("mode {k} is not resolved on {} angles", self.nt)));
        }
        let (a, _) = blk
            .values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .ok_or_else(|| Error::Parameter("empty mode block".into()))?;
        let mut modal = vec![ZERO; self.modal_len];
        for ci in 0..blk.cols.len() {
            modal[self.offsets[slot] + ci] = C::new(blk.vectors[(ci, a)] / blk.omega[ci].sqrt(), 0.0);
        }
        let mut out = vec![ZERO; self.nodes()];
        self.from_modal(&modal, &mut out);
        Ok(out)
    }
}

/// Right-hand side of the discrete system.
#[derive(Clone)]
pub enum OracleData {
    Planar(ScalarFn),
    Form(Form01),
}

/// Discretized `∂̄u = f` on a product of discs (or a single disc).
#[derive(Clone)]
pub struct DiscreteDbarSystem {
    pub factors: Vec<DiscFactor>,
    pub data: OracleData,
    pub consistency_tol: f64,
}

impl std::fmt::Debug for DiscreteDbarSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteDbarSystem").field("factors", &self.factors).finish()
    }
}

impl DiscreteDbarSystem {
    pub fn planar(dom: &PlanarDomain, f: ScalarFn, nr: usize, nt: usize) -> Result<Self> {
        Ok(Self {
            factors: vec![DiscFactor::new(dom, nr, nt)?],
            data: OracleData::Planar(f),
            consistency_tol: DEFAULT_CONSISTENCY_TOL,
        })
    }

    pub fn product(pd: &ProductDomain, f: &Form01, nr: usize, nt: usize) -> Result<Self> {
        if pd.dim() != 2 {
            return Err(Error::Unsupported(format!(
                "the discrete oracle handles one or two factors, got {}",
                pd.dim()
            )));
        }
        if f.dim() != 2 {
            return Err(Error::Parameter(format!("form {} has {} components", f.name, f.dim())));
        }
        let factors = (0..2).map(|j| DiscFactor::new(pd.factor(j), nr, nt)).collect::<Result<Vec<_>>>()?;
        Ok(Self { factors, data: OracleData::Form(f.clone()), consistency_tol: DEFAULT_CONSISTENCY_TOL })
    }

    pub fn unknowns(&self) -> usize {
        self.factors.iter().map(|f| f.nodes()).product()
    }

    /// Equation count: for each factor, its rows times the nodes of the others.
    pub fn rows(&self) -> usize {
        let total = self.unknowns();
        self.factors.iter().map(|f| f.rows() * (total / f.nodes())).sum()
    }

    /// Applies the operator to node values: per factor, the midpoint values of
    /// `∂u/∂z̄_j` in resolved modes (stacked in factor order).
    pub fn apply(&self, u: &[C]) -> Result<Vec<Vec<C>>> {
        if u.len() != self.unknowns() {
            return Err(Error::Parameter(format!("{} values for {} unknowns", u.len(), self.unknowns())));
        }
        match self.factors.as_slice() {
            [f] => Ok(vec![apply_factor(f, u)]),
            [f1, f2] => {
                let (n1, n2) = (f1.nodes(), f2.nodes());
                let mut out1 = Vec::with_capacity(f1.nr * f1.nt * n2);
                let mut col = vec![ZERO; n1];
                let mut cols = Vec::with_capacity(n2);
                for q in 0..n2 {
                    for p in 0..n1 {
                        col[p] = u[p * n2 + q];
                    }
                    cols.push(apply_factor(f1, &col));
                }
                let mids = f1.nr * f1.nt;
                for m in 0..mids {
                    for c in &cols {
                        out1.push(c[m]);
                    }
                }
                let mut out2 = Vec::with_capacity(n1 * f2.nr * f2.nt);
                for p in 0..n1 {
                    out2.extend(apply_factor(f2, &u[p * n2..(p + 1) * n2]));
                }
                Ok(vec![out1, out2])
            }
            _ => Err(Error::Unsupported("more than two factors".into())),
        }
    }
}

/// Midpoint values of the discrete `∂̄` of node values, restricted to resolved modes.
fn apply_factor(f: &DiscFactor, u: &[C]) -> Vec<C> {
    let mut modal = vec![ZERO; f.modal_len];
    f.to_modal(u, &mut modal);
    let nt = f.nt;
    let mut spectra = vec![ZERO; f.nr * nt];
    for (slot, blk) in f.blocks.iter().enumerate() {
        if blk.rows.is_empty() {
            continue;
        }
        let fslot = slot_of(blk.k + 1, nt);
        let x = &modal[f.offsets[slot]..f.offsets[slot] + blk.cols.len()];
        for (ri, &m) in blk.rows.iter().enumerate() {
            let mut acc = ZERO;
            for (ci, &v) in x.iter().enumerate() {
                acc += blk.b[(ri, ci)] * v;
            }
            spectra[m * nt + fslot] = acc;
        }
    }
    for m in 0..f.nr {
        f.ifft.process(&mut spectra[m * nt..(m + 1) * nt]);
    }
    spectra
}

/// Minimum-norm discrete solution with its consistency residual.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub field: SolutionField,
    /// Weighted least-squares residual relative to the weighted norm of the data.
    pub residual: f64,
    pub unknowns: usize,
    pub rows: usize,
    pub nr: usize,
    pub nt: usize,
    factors: Vec<DiscFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub residual: f64,
    pub unknowns: usize,
    pub rows: usize,
    pub nr: usize,
    pub nt: usize,
}

impl OracleSolution {
    pub fn summary(&self) -> OracleSummary {
        OracleSummary { residual: self.residual, unknowns: self.unknowns, rows: self.rows, nr: self.nr, nt: self.nt }
    }

    /// Values at targets that are grid nodes.
    pub fn restrict(&self, targets: &Targets) -> Result<SolutionField> {
        let (points, _) = targets.expand();
        let mut values = Vec::with_capacity(points.len());
        for p in &points {
            if p.len() != self.factors.len() {
                return Err(Error::Parameter("target dimension does not match the oracle grid".into()));
            }
            let mut idx = 0;
            for (z, f) in p.iter().zip(&self.factors) {
                let q = f.locate(*z).ok_or_else(|| {
                    Error::Parameter(format!("target {z} is not a node of the {}x{} oracle grid", f.nr, f.nt))
                })?;
                idx = idx * f.nodes() + q;
            }
            values.push(self.field.values[idx]);
        }
        SolutionField::new(targets, values)
    }

    /// Grid inner products against tensor products of discrete holomorphic modes
    /// of total degree at most `max_degree`, relative to the solution norm.
    pub fn discrete_canonicity(&self, max_degree: usize) -> Result<TensorDefects> {
        self.defects(max_degree, |f, k| f.discrete_monomial(k))
    }

    /// The same against sampled monomials `Π (z_j − c_j)^{a_j}`.
    pub fn monomial_canonicity(&self, max_degree: usize) -> Result<TensorDefects> {
        self.defects(max_degree, |f, k| {
            let v: Vec<C> = (0..f.nodes()).map(|q| ((f.node(q) - f.center) / f.radius).powu(k as u32)).collect();
            let n = v.iter().enumerate().map(|(q, x)| f.node_weight(q) * x.norm_sqr()).sum::<f64>().sqrt();
            Ok(v.into_iter().map(|x| x / n).collect())
        })
    }

    fn defects<B>(&self, max_degree: usize, basis: B) -> Result<TensorDefects>
    where
        B: Fn(&DiscFactor, usize) -> Result<Vec<C>>,
    {
        let norm = self.field.l2_norm;
        let per: Vec<Vec<Vec<C>>> = self
            .factors
            .iter()
            .map(|f| (0..=max_degree).map(|k| basis(f, k)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut entries = Vec::new();
        let dims: Vec<usize> = self.factors.iter().map(|f| f.nodes()).collect();
        let mut degrees = vec![0usize; self.factors.len()];
        loop {
            if degrees.iter().sum::<usize>() <= max_degree {
                let mut acc = ZERO;
                for (idx, (&v, &w)) in self.field.values.iter().zip(&self.field.weights).enumerate() {
                    let mut rest = idx;
                    let mut e = C::new(1.0, 0.0);
                    for j in (0..dims.len()).rev() {
                        let q = rest % dims[j];
                        rest /= dims[j];
                        e *= per[j][degrees[j]][q].conj();
                    }
                    acc += v * e * w;
                }
                let d = if norm > 0.0 { acc.norm() / norm } else { acc.norm() };
                entries.push((degrees.clone(), d));
            }
            let mut p = degrees.len();
            loop {
                if p == 0 {
                    return Ok(TensorDefects { entries, best_effort: false });
                }
                p -= 1;
                degrees[p] += 1;
                if degrees[p] <= max_degree {
                    break;
                }
                degrees[p] = 0;
            }
        }
    }
}

/// Minimum weighted-norm solution of the weighted least-squares problem.
///
/// Fails with a data error when the relative residual exceeds the system's
/// consistency tolerance.
pub fn least_norm_solve(sys: &DiscreteDbarSystem) -> Result<OracleSolution> {
    let (values, residual) = match (sys.factors.as_slice(), &sys.data) {
        ([f], OracleData::Planar(g)) => solve_planar(f, g)?,
        ([f1, f2], OracleData::Form(form)) => solve_pair(f1, f2, form)?,
        _ => return Err(Error::Parameter("oracle data does not match the factor count".into())),
    };
    if residual > sys.consistency_tol {
        return Err(Error::Data(format!(
            "the discrete system is inconsistent: relative residual {residual:.3e} exceeds {:.1e}",
            sys.consistency_tol
        )));
    }
    let mut points = Vec::with_capacity(values.len());
    let mut weights = Vec::with_capacity(values.len());
    match sys.factors.as_slice() {
        [f] => {
            for q in 0..f.nodes() {
                points.push(vec![f.node(q)]);
                weights.push(f.node_weight(q));
            }
        }
        [f1, f2] => {
            for p in 0..f1.nodes() {
                for q in 0..f2.nodes() {
                    points.push(vec![f1.node(p), f2.node(q)]);
                    weights.push(f1.node_weight(p) * f2.node_weight(q));
                }
            }
        }
        _ => unreachable!("factor count checked above"),
    }
    let field = SolutionField::new(&Targets::Points { points, weights: Some(weights) }, values)?;
    let f0 = &sys.factors[0];
    Ok(OracleSolution {
        field,
        residual,
        unknowns: sys.unknowns(),
        rows: sys.rows(),
        nr: f0.nr,
        nt: f0.nt,
        factors: sys.factors.clone(),
    })
}

fn finite_samples(v: &[C], name: &str) -> Result<()> {
    if v.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data(format!("datum {name} is not finite on the oracle grid")))
    }
}

fn null_threshold(values: &[f64]) -> f64 {
    1e-10 * values.iter().copied().fold(0.0, f64::max)
}

fn residual_from(norm2: f64, captured: f64) -> f64 {
    if norm2 <= 0.0 {
        0.0
    } else {
        ((norm2 - captured).max(0.0) / norm2).sqrt()
    }
}

fn solve_planar(f: &DiscFactor, g: &ScalarFn) -> Result<(Vec<C>, f64)> {
    let samples: Vec<C> = f.midpoints().into_iter().map(|z| g(z)).collect();
    finite_samples(&samples, "f")?;
    let mut x = vec![ZERO; f.modal_len];
    let norm2 = f.adjoint_rhs(&samples, &mut x);
    f.rotate(&mut x, true);
    let lam = f.eigenvalues();
    let cut = null_threshold(&lam);
    let mut captured = 0.0;
    for (v, &l) in x.iter_mut().zip(&lam) {
        if l > cut {
            captured += v.norm_sqr() / l;
            *v /= l;
        } else {
            *v = ZERO;
        }
    }
    f.rotate(&mut x, false);
    f.scale(&mut x, -0.5);
    let mut out = vec![ZERO; f.nodes()];
    f.from_modal(&x, &mut out);
    Ok((out, residual_from(norm2, captured)))
}

fn solve_pair(f1: &DiscFactor, f2: &DiscFactor, form: &Form01) -> Result<(Vec<C>, f64)> {
    let (n1, n2) = (f1.nodes(), f2.nodes());
    let (m1, m2) = (f1.modal_len, f2.modal_len);
    let mids1 = f1.midpoints();
    let mids2 = f2.midpoints();
    let mut x = vec![ZERO; m1 * m2];
    let mut norm2 = 0.0;
    // (Ω₁^{−½}B₁ᵀP₁ ⊗ Ω₂^{½}) F₁, built one factor-2 node at a time.
    {
        let mut t = vec![ZERO; m1 * n2];
        let mut col = vec![ZERO; m1];
        let mut samples = vec![ZERO; mids1.len()];
        for q in 0..n2 {
            let z2 = f2.node(q);
            for (s, &z1) in samples.iter_mut().zip(&mids1) {
                *s = form.component(0, &[z1, z2]);
            }
            finite_samples(&samples, &form.name)?;
            norm2 += f2.node_weight(q) * f1.adjoint_rhs(&samples, &mut col);
            for a in 0..m1 {
                t[a * n2 + q] = col[a];
            }
        }
        let mut modal = vec![ZERO; m2];
        for a in 0..m1 {
            f2.to_modal(&t[a * n2..(a + 1) * n2], &mut modal);
            f2.scale(&mut modal, 0.5);
            x[a * m2..(a + 1) * m2].copy_from_slice(&modal);
        }
    }
    // (Ω₁^{½} ⊗ Ω₂^{−½}B₂ᵀP₂) F₂, one factor-1 node at a time.
    {
        let mut t = vec![ZERO; n1 * m2];
        let mut samples = vec![ZERO; mids2.len()];
        for p in 0..n1 {
            let z1 = f1.node(p);
            for (s, &z2) in samples.iter_mut().zip(&mids2) {
                *s = form.component(1, &[z1, z2]);
            }
            finite_samples(&samples, &form.name)?;
            norm2 += f1.node_weight(p) * f2.adjoint_rhs(&samples, &mut t[p * m2..(p + 1) * m2]);
        }
        let mut col = vec![ZERO; n1];
        let mut modal = vec![ZERO; m1];
        for b in 0..m2 {
            for p in 0..n1 {
                col[p] = t[p * m2 + b];
            }
            f1.to_modal(&col, &mut modal);
            f1.scale(&mut modal, 0.5);
            for a in 0..m1 {
                x[a * m2 + b] += modal[a];
            }
        }
    }
    rotate_pair(f1, f2, &mut x, true);
    let (lam, mu) = (f1.eigenvalues(), f2.eigenvalues());
    let cut = 1e-10 * (lam.iter().copied().fold(0.0, f64::max) + mu.iter().copied().fold(0.0, f64::max));
    let mut captured = 0.0;
    for a in 0..m1 {
        for b in 0..m2 {
            let s = lam[a] + mu[b];
            let v = &mut x[a * m2 + b];
            if s > cut {
                captured += v.norm_sqr() / s;
                *v /= s;
            } else {
                *v = ZERO;
            }
        }
    }
    rotate_pair(f1, f2, &mut x, false);
    let mut out = vec![ZERO; n1 * n2];
    let mut half = vec![ZERO; n1 * m2];
    let mut col = vec![ZERO; m1];
    let mut nodes = vec![ZERO; n1];
    for b in 0..m2 {
        for a in 0..m1 {
            col[a] = x[a * m2 + b];
        }
        f1.scale(&mut col, -0.5);
        f1.from_modal(&col, &mut nodes);
        for p in 0..n1 {
            half[p * m2 + b] = nodes[p];
        }
    }
    for p in 0..n1 {
        let row = &mut half[p * m2..(p + 1) * m2];
        f2.scale(row, -0.5);
        f2.from_modal(row, &mut out[p * n2..(p + 1) * n2]);
    }
    Ok((out, residual_from(norm2, captured)))
}

fn rotate_pair(f1: &DiscFactor, f2: &DiscFactor, x: &mut [C], forward: bool) {
    let (m1, m2) = (f1.modal_len, f2.modal_len);
    for a in 0..m1 {
        f2.rotate(&mut x[a * m2..(a + 1) * m2], forward);
    }
    let mut col = vec![ZERO; m1];
    for b in 0..m2 {
        for a in 0..m1 {
            col[a] = x[a * m2 + b];
        }
        f1.rotate(&mut col, forward);
        for a in 0..m1 {
            x[a * m2 + b] = col[a];
        }
    }
}

/// Targets at nodes of the coarse `n_r × n_θ` grid, every `stride`-th ring and
/// angle, restricted to rings of radius fraction at most `max_fraction`.
///
/// Such points are nodes of every grid refined by an integer factor.
pub fn nested_targets(pd: &ProductDomain, nr: usize, nt: usize, stride: usize, max_fraction: f64) -> Result<Targets> {
    nested_targets_on(&pd.factors(), nr, nt, stride, max_fraction)
}

/// [`nested_targets`] on a list of factors, which may be a single disc.
pub fn nested_targets_on(
    factors: &[PlanarDomain],
    nr: usize,
    nt: usize,
    stride: usize,
    max_fraction: f64,
) -> Result<Targets> {
    let stride = stride.max(1);
    let mut per = Vec::with_capacity(factors.len());
    for dom in factors {
        let (c, r) = dom.as_disc().ok_or_else(|| {
            Error::Unsupported(format!("nested oracle targets need discs, not {}", dom.label()))
        })?;
        let mut pts = Vec::new();
        for i in (stride..nr).step_by(stride) {
            let frac = i as f64 / nr as f64;
            if frac > max_fraction {
                break;
            }
            for l in (0..nt).step_by(stride) {
                pts.push(c + r * frac * C::cis(TAU * l as f64 / nt as f64));
            }
        }
        per.push(pts);
    }
    let mut points: Vec<Vec<C>> = vec![Vec::new()];
    for pts in &per {
        points = points
            .into_iter()
            .flat_map(|p| {
                pts.iter().map(move |&z| {
                    let mut q = p.clone();
                    q.push(z);
                    q
                })
            })
            .collect();
    }
    Ok(Targets::points_nd(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::monomial11;

    fn rel_l2(field: &SolutionField, exact: impl Fn(&[C]) -> C) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((p, v), w) in field.points.iter().zip(&field.values).zip(&field.weights) {
            let e = exact(p);
            num += w * (v - e).norm_sqr();
            den += w * e.norm_sqr();
        }
        (num / den).sqrt()
    }

    #[test]
    fn planar_constant_datum_gives_conjugate() {
        let disc = PlanarDomain::unit_disc();
        let mut errs = Vec::new();
        for n in [16, 32] {
            let sys = DiscreteDbarSystem::planar(&disc, Arc::new(|_| C::new(1.0, 0.0)), n, n).unwrap();
            let sol = least_norm_solve(&sys).unwrap();
            errs.push(rel_l2(&sol.field, |p| p[0].conj()));
            assert!(sol.residual < 1e-6, "{}", sol.residual);
        }
        assert!(errs[1] < 1e-2 && errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn operator_reproduces_dbar_to_second_order() {
        let disc = PlanarDomain::disc(C::new(0.5, -0.2), 2.0).unwrap();
        let mut errs = Vec::new();
        for n in [16, 32] {
            let sys = DiscreteDbarSystem::planar(&disc, Arc::new(|_| ZERO), n, n).unwrap();
            let f = &sys.factors[0];
            let u: Vec<C> = (0..f.nodes()).map(|q| {
                let z = f.node(q);
                z.conj() * z.conj() * z
            }).collect();
            let du = sys.apply(&u).unwrap().remove(0);
            let mids = f.midpoints();
            let err = du.iter().zip(&mids).skip(f.nt * n / 2).map(|(d, z)| (d - 2.0 * z.conj() * z).norm()).fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn zero_datum_and_inconsistency() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        let sys = DiscreteDbarSystem::product(&pd, &Form01::zero(2), 8, 8).unwrap();
        let sol = least_norm_solve(&sys).unwrap();
        assert_eq!(sol.field.sup_norm, 0.0);
        let bad = Form01::new(
            "open",
            vec![Arc::new(|p: &[C]| p[1].conj()), Arc::new(|_: &[C]| ZERO)],
        );
        let sys = DiscreteDbarSystem::product(&pd, &bad, 8, 8).unwrap();
        assert!(matches!(least_norm_solve(&sys), Err(Error::Data(_))));
    }

    #[test]
    fn bidisc_monomial_and_canonicity() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        let f = monomial11().form();
        let sys = DiscreteDbarSystem::product(&pd, &f, 16, 16).unwrap();
        assert_eq!(sys.unknowns(), 257 * 257);
        let sol = least_norm_solve(&sys).unwrap();
        let err = rel_l2(&sol.field, |p| (p[0] * p[1]).conj());
        assert!(err < 5e-2, "{err}");
        assert!(sol.discrete_canonicity(4).unwrap().max() < 1e-6);
        let t = nested_targets(&pd, 8, 8, 2, 0.9).unwrap();
        let r = sol.restrict(&t).unwrap();
        assert_eq!(r.len(), t.len());
    }

    #[test]
    fn non_disc_factor_is_unsupported() {
        let ell = PlanarDomain::ellipse(2.0, 1.0).unwrap();
        assert!(matches!(DiscFactor::new(&ell, 8, 8), Err(Error::Unsupported(_))));
    }
}
