//! Canonical solutions on products `D₁ × … × Dₙ` of planar domains.
//!
//! Two solution operators are provided. [`solve_smooth`] nests the planar
//! operators and consumes mixed `∂̄`-derivatives of the datum. [`solve_tilde`]
//! moves those derivatives onto the kernel through the weight
//! `H = Σ_j Π_{m≠j} |w_m − z_m|²` and needs only the components of the datum.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{PolarGrid, SolutionField, Targets, TensorGrid};
use crate::geometry::{AreaQuadrature, PlanarDomain, PolarRule};
use crate::kernels::KernelSet;
use crate::report::{EstimateReport, InequalityId};
use crate::sampling::uniform_point;
use crate::solve1d::{insert_rule, monomial_basis, AREA_FORM};

pub type FormFn = Arc<dyn Fn(&[Complex64]) -> Complex64 + Send + Sync>;

/// Largest dimension handled by [`solve_tilde`]; its index sums grow factorially.
pub const MAX_TILDE_DIM: usize = 3;

/// A product of planar domains with one kernel set per factor.
#[derive(Debug, Clone)]
pub struct ProductDomain {
    kernels: Vec<KernelSet>,
}

impl ProductDomain {
    pub fn new(factors: &[PlanarDomain], boundary_nodes: usize) -> Result<Self> {
        let kernels = factors
            .iter()
            .map(|d| KernelSet::new(d, boundary_nodes))
            .collect::<Result<Vec<_>>>()?;
        Self::from_kernels(kernels)
    }

    pub fn from_kernels(kernels: Vec<KernelSet>) -> Result<Self> {
        if kernels.len() < 2 {
            return Err(Error::Parameter(format!(
                "a product needs at least two factors, got {}",
                kernels.len()
            )));
        }
        Ok(Self { kernels })
    }

    pub fn unit_polydisc(n: usize) -> Result<Self> {
        Self::new(&vec![PlanarDomain::unit_disc(); n], 256)
    }

    pub fn dim(&self) -> usize {
        self.kernels.len()
    }

    pub fn factor(&self, j: usize) -> &PlanarDomain {
        self.kernels[j].domain()
    }

    pub fn factors(&self) -> Vec<PlanarDomain> {
        self.kernels.iter().map(|k| k.domain().clone()).collect()
    }

    pub fn kernels(&self, j: usize) -> &KernelSet {
        &self.kernels[j]
    }

    pub fn label(&self) -> String {
        self.kernels.iter().map(|k| k.domain().label()).collect::<Vec<_>>().join(" x ")
    }

    pub fn contains(&self, p: &[Complex64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.kernels).all(|(&z, k)| k.domain().contains(z))
    }

    pub fn check_interior(&self, p: &[Complex64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Parameter(format!(
                "point has {} coordinates, the product has {} factors",
                p.len(),
                self.dim()
            )));
        }
        for (&z, k) in p.iter().zip(&self.kernels) {
            k.domain().check_interior(z)?;
        }
        Ok(())
    }

    /// Factor `j` of the result is factor `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.dim())?;
        Self::from_kernels(perm.iter().map(|&j| self.kernels[j].clone()).collect())
    }

    /// Tensor grid with an `nr × nt` polar grid in every factor.
    pub fn polar_targets(&self, nr: usize, nt: usize) -> Result<Targets> {
        let grids = self
            .kernels
            .iter()
            .map(|k| PolarGrid::new(k.domain(), nr, nt))
            .collect::<Result<Vec<_>>>()?;
        Ok(Targets::Grid(TensorGrid::new(grids)))
    }

    /// Uniform interior sample.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<Complex64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| self.kernels.iter().map(|k| uniform_point(k.domain(), &mut rng)).collect())
            .collect()
    }

    /// Uniform sample of points with depth at least `frac · d` in every factor.
    ///
    /// Panics unless `frac < 1/2`; no point lies deeper than half the diameter.
    pub fn sample_compact(&self, count: usize, frac: f64, seed: u64) -> Vec<Vec<Complex64>> {
        assert!(frac < 0.5, "no point has depth {frac} times the diameter");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p: Vec<Complex64> =
                self.kernels.iter().map(|k| uniform_point(k.domain(), &mut rng)).collect();
            let deep = p.iter().zip(&self.kernels).all(|(&z, k)| {
                k.domain().boundary_distance_unchecked(z) >= frac * k.domain().diameter()
            });
            if deep {
                out.push(p);
            }
        }
        out
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&j| j >= n || std::mem::replace(&mut seen[j], true)) {
        return Err(Error::Parameter(format!("{perm:?} is not a permutation of 0..{n}")));
    }
    Ok(())
}

/// A `(0,1)`-form `Σ f_j dz̄_j` with an optional table of mixed derivatives.
///
/// `mixed[I]` for an ascending index set `I = {i₁ < … < i_s}` holds
/// `∂^{s−1} f_{i_s} / ∂z̄_{i₁}⋯∂z̄_{i_{s−1}}`, which closedness makes symmetric
/// in the choice of the underived component.
#[derive(Clone)]
pub struct Form01 {
    pub name: String,
    pub components: Vec<FormFn>,
    pub mixed: BTreeMap<Vec<usize>, FormFn>,
    pub closed_tol: f64,
}

impl std::fmt::Debug for Form01 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Form01")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("mixed", &self.mixed.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Form01 {
    pub fn new(name: impl Into<String>, components: Vec<FormFn>) -> Self {
        Self { name: name.into(), components, mixed: BTreeMap::new(), closed_tol: 1e-6 }
    }

    pub fn zero(n: usize) -> Self {
        let z: FormFn = Arc::new(|_| Complex64::new(0.0, 0.0));
        let mut f = Self::new("zero", vec![z.clone(); n]);
        for set in subsets(n).into_iter().filter(|s| s.len() >= 2) {
            f.mixed.insert(set, z.clone());
        }
        f
    }

    pub fn with_mixed(mut self, set: Vec<usize>, g: FormFn) -> Self {
        self.mixed.insert(set, g);
        self
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, j: usize, p: &[Complex64]) -> Complex64 {
        (self.components[j])(p)
    }

    /// `∂^{s−1} f_{i_s}/∂z̄_{i₁}⋯∂z̄_{i_{s−1}}` for ascending `set`.
    pub fn mixed_derivative(&self, set: &[usize]) -> Result<FormFn> {
        match set {
            [] => Err(Error::Parameter("empty index set".into())),
            [j] => Ok(self.components[*j].clone()),
            _ => self.mixed.get(set).cloned().ok_or_else(|| {
                Error::Data(format!("form {} has no mixed derivative for {set:?}", self.name))
            }),
        }
    }

    pub fn has_derivative_oracle(&self) -> bool {
        subsets(self.dim()).iter().filter(|s| s.len() >= 2).all(|s| self.mixed.contains_key(s))
    }

    /// Largest `|∂f_j/∂z̄_k − ∂f_k/∂z̄_j|` over `count` interior points, by centered differences.
    pub fn closedness_defect(&self, pd: &ProductDomain, count: usize, seed: u64) -> Result<f64> {
        self.check_dim(pd)?;
        let n = self.dim();
        let mut worst = 0.0f64;
        for p in pd.sample_points(count, seed) {
            for j in 0..n {
                for k in (j + 1)..n {
                    let hk = 1e-5 * pd.factor(k).diameter();
                    let hj = 1e-5 * pd.factor(j).diameter();
                    let a = dbar_fd(|q| self.component(j, q), &p, k, hk);
                    let b = dbar_fd(|q| self.component(k, q), &p, j, hj);
                    worst = worst.max((a - b).norm());
                }
            }
        }
        Ok(worst)
    }

    pub fn check_closed(&self, pd: &ProductDomain) -> Result<()> {
        let defect = self.closedness_defect(pd, 100, 7)?;
        if defect > self.closed_tol {
            return Err(Error::Data(format!(
                "form {} is not dbar-closed: defect {defect:.3e} exceeds {:.1e}",
                self.name, self.closed_tol
            )));
        }
        Ok(())
    }

    fn check_dim(&self, pd: &ProductDomain) -> Result<()> {
        if self.dim() != pd.dim() {
            return Err(Error::Parameter(format!(
                "form {} has {} components on a product of {} factors",
                self.name,
                self.dim(),
                pd.dim()
            )));
        }
        Ok(())
    }

    /// The same form in permuted coordinates: new factor `j` is old factor `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        check_permutation(perm, n)?;
        let perm: Arc<Vec<usize>> = Arc::new(perm.to_vec());
        let pull = {
            let perm = perm.clone();
            move |q: &[Complex64]| {
                let mut p = vec![Complex64::new(0.0, 0.0); q.len()];
                for (j, &old) in perm.iter().enumerate() {
                    p[old] = q[j];
                }
                p
            }
        };
        let wrap = |g: FormFn| -> FormFn {
            let pull = pull.clone();
            Arc::new(move |q: &[Complex64]| g(&pull(q)))
        };
        let components = perm.iter().map(|&old| wrap(self.components[old].clone())).collect();
        let mut out = Self::new(format!("{} permuted", self.name), components);
        out.closed_tol = self.closed_tol;
        for set in subsets(n).into_iter().filter(|s| s.len() >= 2) {
            let mut old: Vec<usize> = set.iter().map(|&j| perm[j]).collect();
            old.sort_unstable();
            if let Some(g) = self.mixed.get(&old) {
                out.mixed.insert(set, wrap(g.clone()));
            }
        }
        Ok(out)
    }
}

/// `∂u/∂z̄_k` at `p` by centered differences with step `h`.
pub fn dbar_fd<F: Fn(&[Complex64]) -> Complex64>(u: F, p: &[Complex64], k: usize, h: f64) -> Complex64 {
    let mut q = p.to_vec();
    let mut probe = |d: Complex64| {
        q[k] = p[k] + d;
        u(&q)
    };
    let ux = (probe(Complex64::new(h, 0.0)) - probe(Complex64::new(-h, 0.0))) / (2.0 * h);
    let uy = (probe(Complex64::new(0.0, h)) - probe(Complex64::new(0.0, -h))) / (2.0 * h);
    0.5 * (ux + Complex64::i() * uy)
}

/// Nonempty subsets of `0..n` as ascending lists, ordered by bitmask.
pub fn subsets(n: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << n)).map(|mask| (0..n).filter(|&j| mask & (1 << j) != 0).collect()).collect()
}

// Weight calculus.

/// `W^k = Π_{j∈active, j≠k} |w_j − z_j|² / H` with `H` summed over `active`.
pub fn weight_ratio(active: &[usize], k: usize, w: &[Complex64], z: &[Complex64]) -> Result<f64> {
    let a = offsets(active, w, z)?;
    let sq: Vec<f64> = active.iter().map(|&j| a[j].norm_sqr()).collect();
    let h = weight_h_sq(&sq);
    let num: f64 = active.iter().zip(&sq).filter(|(&j, _)| j != k).map(|(_, s)| s).product();
    Ok(num / h)
}

/// `H = Σ_j Π_{m≠j} |w_m − z_m|²` over `active`.
pub fn weight_h(active: &[usize], w: &[Complex64], z: &[Complex64]) -> f64 {
    let sq: Vec<f64> = active.iter().map(|&j| (w[j] - z[j]).norm_sqr()).collect();
    weight_h_sq(&sq)
}

fn weight_h_sq(sq: &[f64]) -> f64 {
    (0..sq.len())
        .map(|j| sq.iter().enumerate().filter(|&(m, _)| m != j).map(|(_, s)| s).product::<f64>())
        .sum()
}

fn offsets(active: &[usize], w: &[Complex64], z: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut a = vec![Complex64::new(0.0, 0.0); w.len()];
    for &j in active {
        if j >= w.len() || j >= z.len() {
            return Err(Error::Parameter(format!("index {j} outside the point")));
        }
        a[j] = w[j] - z[j];
        if a[j] == Complex64::new(0.0, 0.0) {
            return Err(Error::Singularity(format!("z_{} = w_{} lies on the diagonal", j + 1, j + 1)));
        }
    }
    Ok(a)
}

/// `∂^B W^k / Π_{j∈B} ∂z̄_j` in closed form, for `B ⊆ active ∖ {k}`:
/// `(−1)^m m! |a_k|^{2m} H^{−(m+1)} Π_{j∈B} a_j|a_j|^{2(m−1)} Π_{j∉B, j≠k} |a_j|^{2(m+1)}`
/// with `a_j = w_j − z_j` and `m = |B|`.
pub fn weight_derivative(
    active: &[usize],
    k: usize,
    b: &[usize],
    w: &[Complex64],
    z: &[Complex64],
) -> Result<Complex64> {
    check_derivative_set(active, k, b)?;
    let a = offsets(active, w, z)?;
    let sq: Vec<f64> = a.iter().map(|x| x.norm_sqr()).collect();
    let h = weight_h(active, w, z);
    Ok(weight_derivative_raw(active, k, b, &a, &sq, h))
}

fn weight_derivative_raw(
    active: &[usize],
    k: usize,
    b: &[usize],
    a: &[Complex64],
    sq: &[f64],
    h: f64,
) -> Complex64 {
    let m = b.len() as i32;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let mut val = Complex64::new(sign * factorial(m as usize) * sq[k].powi(m) / h.powi(m + 1), 0.0);
    for &j in active {
        if j == k {
            continue;
        }
        if b.contains(&j) {
            val *= a[j] * sq[j].powi(m - 1);
        } else {
            val *= sq[j].powi(m + 1);
        }
    }
    val
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|x| x as f64).product()
}

fn check_derivative_set(active: &[usize], k: usize, b: &[usize]) -> Result<()> {
    if !active.contains(&k) {
        return Err(Error::Parameter(format!("index {k} is not active")));
    }
    for (pos, j) in b.iter().enumerate() {
        if b[..pos].contains(j) {
            return Err(Error::Parameter(format!("derivative index {j} is repeated")));
        }
        if *j == k || !active.contains(j) {
            return Err(Error::Parameter(format!(
                "derivative index {j} must be active and differ from {k}"
            )));
        }
    }
    Ok(())
}

/// Mixed `z̄`-derivative of `Π_{j<k}|w_j − z_j|² / H` over the first `k`
/// coordinates, taken in `z̄₁, …, z̄_m` (indices counted from 1).
pub fn weight_ratio_derivative(k: usize, m: usize, w: &[Complex64], z: &[Complex64]) -> Result<Complex64> {
    if k < 2 || m < 1 || m > k - 1 {
        return Err(Error::Parameter(format!("need 1 <= m <= k - 1, got k = {k}, m = {m}")));
    }
    if w.len() < k || z.len() < k {
        return Err(Error::Parameter(format!("points need at least {k} coordinates")));
    }
    let active: Vec<usize> = (0..k).collect();
    let b: Vec<usize> = (0..m).collect();
    weight_derivative(&active, k - 1, &b, w, z)
}

/// Verdict of the weighted geometric-mean inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmVerdict {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `Π x_j^{α_j} ≤ Σ x_j` when `Σα = 1`, and `≤ Σ_j Π_{m≠j} x_m` when `Σα = n − 1`.
pub fn gm_bound_check(x: &[f64], alpha: &[f64]) -> Result<GmVerdict> {
    let n = x.len();
    if n == 0 || alpha.len() != n {
        return Err(Error::Parameter("x and alpha need the same positive length".into()));
    }
    if x.iter().any(|&v| !(v >= 0.0)) || alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::Parameter("need x_j >= 0 and alpha_j in [0, 1]".into()));
    }
    let total: f64 = alpha.iter().sum();
    let lhs: f64 = x.iter().zip(alpha).map(|(v, a)| v.powf(*a)).product();
    let rhs = if (total - 1.0).abs() < 1e-12 {
        x.iter().sum()
    } else if (total - (n as f64 - 1.0)).abs() < 1e-12 {
        weight_h_sq(x)
    } else {
        return Err(Error::Parameter(format!(
            "exponent sum {total} is neither 1 nor n - 1 = {}",
            n - 1
        )));
    };
    Ok(GmVerdict { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) })
}

/// Exponent regimes of [`gm_bound_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmRegime {
    SumOne,
    SumNMinusOne,
}

/// Violations over `count` random instances with log-uniform `x ∈ [10⁻³, 10³]`.
pub fn gm_random_violations(n: usize, regime: GmRegime, count: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..count {
        let x: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-3.0..3.0))).collect();
        let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen::<f64>()).collect();
        cuts.push(0.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        let simplex: Vec<f64> = cuts.windows(2).map(|p| p[1] - p[0]).collect();
        let alpha: Vec<f64> = match regime {
            GmRegime::SumOne => simplex,
            GmRegime::SumNMinusOne => simplex.iter().map(|b| 1.0 - b).collect(),
        };
        // Rounding can push the sum off by an ulp or two.
        let target = match regime {
            GmRegime::SumOne => 1.0,
            GmRegime::SumNMinusOne => n as f64 - 1.0,
        };
        let drift = (alpha.iter().sum::<f64>() - target) / n as f64;
        let alpha: Vec<f64> = alpha.iter().map(|a| (a - drift).clamp(0.0, 1.0)).collect();
        if !gm_bound_check(&x, &alpha)?.holds {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Which kernel enters a term for one active index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFactor {
    /// `S(w_j, z_j)`
    S,
    /// `∂S/∂z̄_j = K(w_j, z_j)/(2i)`
    DbarS,
}

/// Integrability budget of one term: exponents of `|z_j − w_j|` in the
/// pointwise bound, split into area and boundary factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentRecord {
    pub area: Vec<(usize, f64)>,
    pub boundary: Vec<(usize, f64)>,
    /// Kernel order per active index: 1 for `S`, 2 for `K`.
    pub kernel_order: Vec<(usize, u32)>,
    /// Power of `H` in the denominator of the weight factor.
    pub h_power: u32,
}

impl ExponentRecord {
    /// Area exponents below 2 and boundary exponents below 1.
    pub fn integrable(&self) -> bool {
        self.area.iter().all(|&(_, a)| (0.0..2.0).contains(&a))
            && self.boundary.iter().all(|&(_, b)| (0.0..1.0).contains(&b))
    }
}

/// `sign · Π kernel factors · ∂^B W^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ETerm {
    pub factors: Vec<(usize, KernelFactor)>,
    pub weight_derivative: Vec<usize>,
    pub exponents: ExponentRecord,
}

/// Product-rule expansion of `∂^J e^k` with `e^k = Π_{l∈I} S_l · W^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EExpansion {
    pub active: Vec<usize>,
    pub k: usize,
    pub derivatives: Vec<usize>,
    pub terms: Vec<ETerm>,
}

/// Pointwise data one term needs, indexed by factor.
#[derive(Debug, Clone)]
pub struct KernelValues {
    pub a: Vec<Complex64>,
    pub sq: Vec<f64>,
    pub s: Vec<Complex64>,
    pub dbar_s: Vec<Complex64>,
    pub h: f64,
}

impl KernelValues {
    pub fn new(n: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self { a: vec![zero; n], sq: vec![0.0; n], s: vec![zero; n], dbar_s: vec![zero; n], h: 0.0 }
    }

    pub fn refresh_h(&mut self, active: &[usize]) {
        let mut h = 0.0;
        for &j in active {
            let mut p = 1.0;
            for &m in active {
                if m != j {
                    p *= self.sq[m];
                }
            }
            h += p;
        }
        self.h = h;
    }
}

impl EExpansion {
    pub fn eval(&self, v: &KernelValues) -> Complex64 {
        self.terms.iter().map(|t| t.eval(&self.active, self.k, v)).sum()
    }
}

impl ETerm {
    pub fn eval(&self, active: &[usize], k: usize, v: &KernelValues) -> Complex64 {
        let mut val = weight_derivative_raw(active, k, &self.weight_derivative, &v.a, &v.sq, v.h);
        for &(j, f) in &self.factors {
            val *= match f {
                KernelFactor::S => v.s[j],
                KernelFactor::DbarS => v.dbar_s[j],
            };
        }
        val
    }
}

/// Expands `∂^{|J|} e^k / Π_{j∈J} ∂z̄_j`: each derivative either turns `S_j`
/// into `K_j/(2i)` or falls on the weight ratio.
pub fn expand_e_derivative(active: &[usize], k: usize, derivatives: &[usize]) -> Result<EExpansion> {
    if active.is_empty() || active.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Parameter(format!("active indices {active:?} must be strictly increasing")));
    }
    check_derivative_set(active, k, derivatives)?;
    let s = active.len();
    let m = derivatives.len();
    let exponents_for = |orders: &Vec<(usize, u32)>, h_power: u32| {
        let gain = if s > 1 { 1.0 / (2.0 * (s as f64 - 1.0)) } else { 0.0 };
        let sigma = gain / 2.0;
        let mut area = vec![(k, if s > 1 { 1.5 + sigma } else { 1.0 })];
        let mut boundary = Vec::new();
        for &j in active {
            if j == k {
                continue;
            }
            if derivatives.contains(&j) {
                area.push((j, 2.0 - gain + sigma));
            } else {
                boundary.push((j, 1.0 - gain + sigma));
            }
        }
        ExponentRecord { area, boundary, kernel_order: orders.clone(), h_power }
    };
    let mut terms = Vec::with_capacity(1 << m);
    for mask in 0u32..(1 << m) {
        let on_kernel: Vec<usize> =
            (0..m).filter(|&b| mask & (1 << b) != 0).map(|b| derivatives[b]).collect();
        let on_weight: Vec<usize> =
            derivatives.iter().copied().filter(|j| !on_kernel.contains(j)).collect();
        let factors: Vec<(usize, KernelFactor)> = active
            .iter()
            .map(|&j| (j, if on_kernel.contains(&j) { KernelFactor::DbarS } else { KernelFactor::S }))
            .collect();
        let orders = factors
            .iter()
            .map(|&(j, f)| (j, if f == KernelFactor::S { 1 } else { 2 }))
            .collect();
        let h_power = if s > 1 { on_weight.len() as u32 + 1 } else { 0 };
        terms.push(ETerm { factors, weight_derivative: on_weight, exponents: exponents_for(&orders, h_power) });
    }
    Ok(EExpansion { active: active.to_vec(), k, derivatives: derivatives.to_vec(), terms })
}

/// Pointwise bound `|a_k|^{−3/2−σ} Π_{j∈J}|a_j|^{−2+g−σ} Π_{j∉J}|a_j|^{−1+g−σ}` with `g = 1/(2(s−1))`.
pub fn ee_bound(exp: &EExpansion, a: &[Complex64], sigma: f64) -> f64 {
    let s = exp.active.len();
    let g = 1.0 / (2.0 * (s as f64 - 1.0));
    let mut b = a[exp.k].norm().powf(-1.5 - sigma);
    for &j in &exp.active {
        if j == exp.k {
            continue;
        }
        let e = if exp.derivatives.contains(&j) { -2.0 + g - sigma } else { -1.0 + g - sigma };
        b *= a[j].norm().powf(e);
    }
    b
}

/// Empirical `sup |∂^J e^k| / bound` over random off-diagonal points, at
/// `count` and `2 · count` samples (the first `count` shared).
pub fn audit_ee_bound(
    pd: &ProductDomain,
    exp: &EExpansion,
    count: usize,
    seed: u64,
    sigma: f64,
) -> Result<EstimateReport> {
    let s = exp.active.len();
    if s < 2 {
        return Err(Error::Parameter("the audit needs at least two active indices".into()));
    }
    let limit = 1.0 / (2.0 * (s as f64 - 1.0));
    if !(sigma > 0.0 && sigma < limit) {
        return Err(Error::Parameter(format!("sigma = {sigma} must lie in (0, {limit})")));
    }
    if exp.active.iter().any(|&j| j >= pd.dim()) {
        return Err(Error::Parameter("active index outside the product".into()));
    }
    let n = pd.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = KernelValues::new(n);
    let mut sup_first = 0.0f64;
    let mut sup = 0.0f64;
    let mut argmax = Vec::new();
    for i in 0..2 * count {
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        let mut z = w.clone();
        for &j in &exp.active {
            let dom = pd.factor(j);
            w[j] = uniform_point(dom, &mut rng);
            z[j] = loop {
                let rho = dom.diameter() * 10f64.powf(-rng.gen_range(0.0..4.0));
                let cand = w[j] + Complex64::from_polar(rho, rng.gen_range(0.0..std::f64::consts::TAU));
                if dom.contains(cand) {
                    break cand;
                }
            };
            let field = pd.kernels(j).l_field(w[j])?;
            v.a[j] = w[j] - z[j];
            v.sq[j] = v.a[j].norm_sqr();
            v.s[j] = field.s(z[j]);
            v.dbar_s[j] = field.k(z[j]) / Complex64::new(0.0, 2.0);
        }
        v.refresh_h(&exp.active);
        let ratio = exp.eval(&v).norm() / ee_bound(exp, &v.a, sigma);
        if !ratio.is_finite() {
            return Err(Error::Singularity(format!("non-finite ratio at sample {i}")));
        }
        if ratio > sup {
            sup = ratio;
            argmax = exp.active.iter().flat_map(|&j| [w[j], z[j]]).collect();
        }
        if i + 1 == count {
            sup_first = sup;
        }
    }
    let mut report = EstimateReport::new(InequalityId::EeBound, pd.label());
    report.samples = 2 * count;
    report.supremum = sup;
    report.set_stability(sup_first);
    report.set_argmax(&argmax);
    report.extra.insert("sigma".into(), sigma);
    report.extra.insert("m".into(), exp.derivatives.len() as f64);
    report.extra.insert("s".into(), s as f64);
    Ok(report)
}

// Solution operators.

struct FactorNodes {
    z: Vec<Complex64>,
    /// `dz̄∧dz` quadrature weights.
    wt: Vec<Complex64>,
    s: Vec<Complex64>,
    dbar_s: Vec<Complex64>,
}

fn factor_nodes(ks: &KernelSet, w: Complex64, rule: &PolarRule, need_k: bool) -> Result<FactorNodes> {
    let q = AreaQuadrature::singular(ks.domain(), w, rule)?;
    let field = ks.l_field(w)?;
    let s = q.nodes.iter().map(|&z| field.s(z)).collect();
    let dbar_s = if need_k {
        q.nodes.iter().map(|&z| field.k(z) / Complex64::new(0.0, 2.0)).collect()
    } else {
        Vec::new()
    };
    let wt = q.weights.iter().map(|&x| AREA_FORM * x).collect();
    Ok(FactorNodes { z: q.nodes, wt, s, dbar_s })
}

/// Calls `f` on every multi-index below `sizes`, last position fastest.
fn for_each_tuple<F: FnMut(&[usize])>(sizes: &[usize], mut f: F) {
    if sizes.iter().any(|&n| n == 0) {
        return;
    }
    let mut idx = vec![0; sizes.len()];
    loop {
        f(&idx);
        let mut p = sizes.len();
        loop {
            if p == 0 {
                return;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < sizes[p] {
                break;
            }
            idx[p] = 0;
        }
    }
}

fn finite(v: Complex64, name: &str, p: &[Complex64]) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::Data(format!("form {name} is not finite at {p:?}")))
    }
}

fn target_points(pd: &ProductDomain, targets: &Targets) -> Result<Vec<Vec<Complex64>>> {
    let (points, _) = targets.expand();
    for p in &points {
        pd.check_interior(p)?;
    }
    Ok(points)
}

/// `Σ_s (−1)^{s−1} Σ_{i₁<…<i_s} T_{i₁}⋯T_{i_s}(∂^{s−1} f_{i_s}/∂z̄_{i₁}⋯∂z̄_{i_{s−1}})`.
pub fn solve_smooth(pd: &ProductDomain, f: &Form01, targets: &Targets, rule: &PolarRule) -> Result<SolutionField> {
    f.check_dim(pd)?;
    if !f.has_derivative_oracle() {
        return Err(Error::Data(format!("form {} lacks the mixed-derivative oracle", f.name)));
    }
    f.check_closed(pd)?;
    let points = target_points(pd, targets)?;
    let mut values = Vec::with_capacity(points.len());
    for w in &points {
        values.push(solve_smooth_at(pd, f, w, rule)?);
    }
    SolutionField::new(targets, values)
}

/// [`solve_smooth`] at a single interior point, without the closedness check.
pub fn solve_smooth_at(pd: &ProductDomain, f: &Form01, w: &[Complex64], rule: &PolarRule) -> Result<Complex64> {
    pd.check_interior(w)?;
    let nodes = (0..pd.dim())
        .map(|j| factor_nodes(pd.kernels(j), w[j], rule, false))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Complex64::new(0.0, 0.0);
    let mut pt = w.to_vec();
    for set in subsets(pd.dim()) {
        let g = f.mixed_derivative(&set)?;
        let sizes: Vec<usize> = set.iter().map(|&j| nodes[j].z.len()).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut err = None;
        for_each_tuple(&sizes, |idx| {
            let mut c = Complex64::new(1.0, 0.0);
            for (&j, &q) in set.iter().zip(idx) {
                pt[j] = nodes[j].z[q];
                c *= nodes[j].s[q] * nodes[j].wt[q];
            }
            match finite(g(&pt), &f.name, &pt) {
                Ok(v) => acc += c * v,
                Err(e) => {
                    err.get_or_insert(e);
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        pt.copy_from_slice(w);
        if set.len() % 2 == 0 {
            total -= acc;
        } else {
            total += acc;
        }
    }
    Ok(total)
}

/// Term lists of `T̃` for every active set of size at least 2 and every `k`.
pub struct TildePlan {
    n: usize,
    blocks: Vec<(Vec<usize>, Vec<EExpansion>)>,
}

impl TildePlan {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=MAX_TILDE_DIM).contains(&n) {
            return Err(Error::Unsupported(format!(
                "the derivative-free operator is implemented for 2 <= n <= {MAX_TILDE_DIM}, got n = {n}"
            )));
        }
        let mut blocks = Vec::new();
        for set in subsets(n).into_iter().filter(|s| s.len() >= 2) {
            let exps = set
                .iter()
                .map(|&k| {
                    let others: Vec<usize> = set.iter().copied().filter(|&j| j != k).collect();
                    expand_e_derivative(&set, k, &others)
                })
                .collect::<Result<Vec<_>>>()?;
            blocks.push((set, exps));
        }
        Ok(Self { n, blocks })
    }
}

/// The derivative-free operator `T̃` applied to each form in `forms`.
///
/// For `|I| ≥ 2` only the area integral with every derivative on the kernel
/// survives: the other terms carry an underived `S_t` on `bD_t`, where `S`
/// vanishes.
pub fn solve_tilde_many(
    pd: &ProductDomain,
    forms: &[Form01],
    targets: &Targets,
    rule: &PolarRule,
) -> Result<Vec<SolutionField>> {
    let plan = TildePlan::new(pd.dim())?;
    for f in forms {
        f.check_dim(pd)?;
    }
    let points = target_points(pd, targets)?;
    let mut values = vec![Vec::with_capacity(points.len()); forms.len()];
    for w in &points {
        let v = tilde_at(pd, &plan, forms, w, rule)?;
        for (out, x) in values.iter_mut().zip(v) {
            out.push(x);
        }
    }
    values.into_iter().map(|v| SolutionField::new(targets, v)).collect()
}

pub fn solve_tilde(pd: &ProductDomain, f: &Form01, targets: &Targets, rule: &PolarRule) -> Result<SolutionField> {
    Ok(solve_tilde_many(pd, std::slice::from_ref(f), targets, rule)?.remove(0))
}

/// `T̃` at one interior point for several forms.
pub fn solve_tilde_at(pd: &ProductDomain, forms: &[Form01], w: &[Complex64], rule: &PolarRule) -> Result<Vec<Complex64>> {
    let plan = TildePlan::new(pd.dim())?;
    pd.check_interior(w)?;
    tilde_at(pd, &plan, forms, w, rule)
}

fn tilde_at(
    pd: &ProductDomain,
    plan: &TildePlan,
    forms: &[Form01],
    w: &[Complex64],
    rule: &PolarRule,
) -> Result<Vec<Complex64>> {
    let n = plan.n;
    let nodes = (0..n)
        .map(|j| factor_nodes(pd.kernels(j), w[j], rule, true))
        .collect::<Result<Vec<_>>>()?;
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = vec![zero; forms.len()];
    let mut pt = w.to_vec();
    let mut err: Option<Error> = None;
    for i in 0..n {
        for q in 0..nodes[i].z.len() {
            pt[i] = nodes[i].z[q];
            let c = nodes[i].s[q] * nodes[i].wt[q];
            for (a, f) in acc.iter_mut().zip(forms) {
                match finite(f.component(i, &pt), &f.name, &pt) {
                    Ok(v) => *a += c * v,
                    Err(e) => return Err(e),
                }
            }
        }
        pt[i] = w[i];
    }
    let mut kv = KernelValues::new(n);
    for (set, exps) in &plan.blocks {
        let sizes: Vec<usize> = set.iter().map(|&j| nodes[j].z.len()).collect();
        let pair = n == 2;
        for_each_tuple(&sizes, |idx| {
            let mut weight = Complex64::new(1.0, 0.0);
            for (&j, &q) in set.iter().zip(idx) {
                let fnode = &nodes[j];
                pt[j] = fnode.z[q];
                kv.a[j] = w[j] - fnode.z[q];
                kv.sq[j] = kv.a[j].norm_sqr();
                kv.s[j] = fnode.s[q];
                kv.dbar_s[j] = fnode.dbar_s[q];
                weight *= fnode.wt[q];
            }
            let d: [Complex64; MAX_TILDE_DIM] = if pair {
                stok_pair(&kv)
            } else {
                kv.refresh_h(set);
                let mut d = [zero; MAX_TILDE_DIM];
                for (slot, e) in d.iter_mut().zip(exps) {
                    *slot = e.eval(&kv);
                }
                d
            };
            for (a, f) in acc.iter_mut().zip(forms) {
                let mut sum = zero;
                for (pos, &k) in set.iter().enumerate() {
                    let v = f.component(k, &pt);
                    if !(v.re.is_finite() && v.im.is_finite()) {
                        err.get_or_insert_with(|| Error::Data(format!("form {} is not finite at {pt:?}", f.name)));
                    }
                    sum += v * d[pos];
                }
                *a += sum * weight;
            }
        });
        if let Some(e) = err.take() {
            return Err(e);
        }
        pt.copy_from_slice(w);
    }
    Ok(acc)
}

/// The two kernels of the bidisc decomposition, for the `f₁` and `f₂` slots:
/// `S₁(K₂/(2i)·|a₂|²/H − S₂·a₂|a₁|²/H²)` and its mirror, with `H = |a₁|² + |a₂|²`.
fn stok_pair(v: &KernelValues) -> [Complex64; MAX_TILDE_DIM] {
    let h = v.sq[0] + v.sq[1];
    let h2 = h * h;
    let d1 = v.s[0] * (v.dbar_s[1] * (v.sq[1] / h) - v.s[1] * v.a[1] * (v.sq[0] / h2));
    let d2 = v.s[1] * (v.dbar_s[0] * (v.sq[0] / h) - v.s[0] * v.a[0] * (v.sq[1] / h2));
    [d1, d2, Complex64::new(0.0, 0.0)]
}

/// Relative sup error between a centered-difference `∂̄u` (step `h · d` per factor) and `f`.
pub fn stencil_dbar_residual<U>(pd: &ProductDomain, u: U, f: &Form01, points: &[Vec<Complex64>], h: f64) -> Result<f64>
where
    U: Fn(&[Complex64]) -> Result<Complex64>,
{
    f.check_dim(pd)?;
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for p in points {
        for k in 0..pd.dim() {
            let step = h * pd.factor(k).diameter();
            let mut q = p.clone();
            let mut probe = |d: Complex64| -> Result<Complex64> {
                q[k] = p[k] + d;
                u(&q)
            };
            let ux = (probe(Complex64::new(step, 0.0))? - probe(Complex64::new(-step, 0.0))?) / (2.0 * step);
            let uy = (probe(Complex64::new(0.0, step))? - probe(Complex64::new(0.0, -step))?) / (2.0 * step);
            let d = 0.5 * (ux + Complex64::i() * uy);
            let fv = f.component(k, p);
            err = err.max((d - fv).norm());
            scale = scale.max(fv.norm());
        }
    }
    Ok(if scale > 0.0 { err / scale } else { err })
}

/// Normalized inner products against tensor monomials `Π z_j^{a_j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDefects {
    pub entries: Vec<(Vec<usize>, f64)>,
    /// Set when some factor is not a disc.
    pub best_effort: bool,
}

impl TensorDefects {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn get(&self, degrees: &[usize]) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == degrees).map(|e| e.1)
    }
}

pub fn canonicity_defect_nd(pd: &ProductDomain, u: &SolutionField, max_degree: usize) -> Result<TensorDefects> {
    let grid = u
        .grid
        .as_ref()
        .ok_or_else(|| Error::Parameter("canonicity defects need a tensor grid field".into()))?;
    if grid.dim() != pd.dim() {
        return Err(Error::Parameter("grid and product dimensions differ".into()));
    }
    let bases: Vec<Vec<Vec<Complex64>>> = grid
        .factors
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let pts = g.points();
            let wts: Vec<f64> = (0..g.len()).map(|p| {
                let (i, t) = g.split(p);
                g.weight(i, t)
            }).collect();
            monomial_basis(pd.factor(j), &pts, &wts, max_degree)
        })
        .collect();
    let parts: Vec<Vec<usize>> = (0..u.len()).map(|idx| grid.unflatten(idx)).collect();
    let mut entries = Vec::new();
    let n = pd.dim();
    let mut degrees = vec![0usize; n];
    loop {
        if degrees.iter().sum::<usize>() <= max_degree {
            let ip: Complex64 = if u.l2_norm == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                u.values
                    .iter()
                    .zip(&u.weights)
                    .zip(&parts)
                    .map(|((v, w), part)| {
                        let e: Complex64 = part.iter().zip(&degrees).enumerate().map(|(j, (&p, &a))| bases[j][a][p]).product();
                        v * e.conj() * w
                    })
                    .sum()
            };
            let d = if u.l2_norm == 0.0 { 0.0 } else { ip.norm() / u.l2_norm };
            entries.push((degrees.clone(), d));
        }
        let mut p = n;
        loop {
            if p == 0 {
                let best_effort = (0..n).any(|j| pd.factor(j).as_disc().is_none());
                return Ok(TensorDefects { entries, best_effort });
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

/// One resolution of [`uniform_bound_probe`]: an `nr × nt` target grid per
/// factor and the quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResolution {
    pub nr: usize,
    pub nt: usize,
    pub rule: PolarRule,
}

impl ProbeResolution {
    pub fn refined(&self) -> Self {
        Self { nr: 2 * self.nr, nt: 2 * self.nt, rule: self.rule.refined() }
    }
}

/// Empirical `sup ‖T̃f‖_∞ / ‖f‖_∞` per resolution; `extra["spread"]` is the
/// largest relative deviation from the finest ratio.
pub fn uniform_bound_probe(
    pd: &ProductDomain,
    family: &[Form01],
    resolutions: &[ProbeResolution],
) -> Result<EstimateReport> {
    if family.is_empty() {
        return Err(Error::Parameter("empty form family".into()));
    }
    if resolutions.is_empty() {
        return Err(Error::Parameter("no resolutions given".into()));
    }
    let mut ratios = Vec::new();
    for res in resolutions {
        let targets = pd.polar_targets(res.nr, res.nt)?;
        let fields = solve_tilde_many(pd, family, &targets, &res.rule)?;
        let (points, _) = targets.expand();
        let mut ratio = 0.0f64;
        for (f, u) in family.iter().zip(&fields) {
            let fsup = points
                .iter()
                .flat_map(|p| (0..pd.dim()).map(move |j| f.component(j, p).norm()))
                .fold(0.0, f64::max);
            if fsup > 0.0 {
                ratio = ratio.max(u.sup_norm / fsup);
            }
        }
        ratios.push(ratio);
    }
    let last = *ratios.last().expect("nonempty");
    let spread = ratios
        .iter()
        .map(|&r| if last > 0.0 { (r - last).abs() / last } else if r == 0.0 { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max);
    let mut report = EstimateReport::new(InequalityId::UniformBound, pd.label());
    report.samples = family.len();
    report.supremum = last;
    if ratios.len() >= 2 {
        report.set_stability(ratios[ratios.len() - 2]);
    }
    for (i, r) in ratios.iter().enumerate() {
        report.extra.insert(format!("ratio_{i}"), *r);
    }
    report.extra.insert("spread".into(), spread);
    let finest = resolutions.last().expect("nonempty");
    report.grid.insert("nr".into(), finest.nr as f64);
    report.grid.insert("nt".into(), finest.nt as f64);
    insert_rule(&mut report, &finest.rule);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{abs_form, bidisc_family, monomial11};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rule() -> PolarRule {
        PolarRule { angular: 12, gauss: 3, levels: 5 }
    }

    fn mixed_fd<F: Fn(&[Complex64]) -> Complex64 + Copy>(u: F, p: &[Complex64], idx: &[usize], h: f64) -> Complex64 {
        match idx {
            [] => u(p),
            [first, rest @ ..] => {
                let inner = |q: &[Complex64]| mixed_fd(u, q, rest, h);
                dbar_fd(inner, p, *first, h)
            }
        }
    }

    #[test]
    fn weight_derivative_hand_value() {
        let w = [c(1.0, 0.0), c(0.0, 1.0)];
        let z = [c(0.0, 0.0), c(0.0, 0.0)];
        let v = weight_ratio_derivative(2, 1, &w, &z).unwrap();
        assert!((v + (w[0] - z[0]) / 4.0).norm() < 1e-15);
        let z_diag = [w[0], c(0.0, 0.0)];
        assert!(matches!(weight_ratio_derivative(2, 1, &w, &z_diag), Err(Error::Singularity(_))));
        assert!(weight_ratio_derivative(2, 2, &w, &z).is_err());
    }

    #[test]
    fn weight_derivative_matches_differences() {
        let w = [c(0.3, 0.1), c(-0.2, 0.4), c(0.5, -0.3)];
        let z = [c(-0.1, 0.2), c(0.1, -0.3), c(0.2, 0.2)];
        for (k, m) in [(2, 1), (3, 1), (3, 2)] {
            let active: Vec<usize> = (0..k).collect();
            let b: Vec<usize> = (0..m).collect();
            let wr = |q: &[Complex64]| Complex64::new(weight_ratio(&active, k - 1, &w, q).unwrap(), 0.0);
            let fd = mixed_fd(wr, &z, &b, 1e-4);
            let exact = weight_ratio_derivative(k, m, &w, &z).unwrap();
            assert!((fd - exact).norm() < 1e-6 * exact.norm(), "k={k} m={m}: {fd} vs {exact}");
        }
    }

    #[test]
    fn expansion_shapes() {
        let e = expand_e_derivative(&[0, 1], 1, &[0]).unwrap();
        assert_eq!(e.terms.len(), 2);
        assert!(e.terms.iter().any(|t| t.factors.contains(&(0, KernelFactor::DbarS)) && t.weight_derivative.is_empty()));
        assert!(e.terms.iter().any(|t| t.weight_derivative == vec![0]));
        let e0 = expand_e_derivative(&[0, 1], 1, &[]).unwrap();
        assert_eq!(e0.terms.len(), 1);
        assert!(expand_e_derivative(&[0, 1, 2], 2, &[0, 0]).is_err());
        for s in 2..=4 {
            let active: Vec<usize> = (0..s).collect();
            let derivs: Vec<usize> = (0..s - 1).collect();
            for m in 0..s {
                let e = expand_e_derivative(&active, s - 1, &derivs[..m]).unwrap();
                assert!(e.terms.iter().all(|t| t.exponents.integrable()));
            }
        }
    }

    #[test]
    fn expansion_matches_differences() {
        let pd = ProductDomain::unit_polydisc(3).unwrap();
        let w = [c(0.3, 0.1), c(-0.2, 0.4), c(0.5, -0.3)];
        let fields: Vec<_> = (0..3).map(|j| pd.kernels(j).l_field(w[j]).unwrap()).collect();
        let e_fn = |active: Vec<usize>, k: usize| {
            let fields = fields.clone();
            move |z: &[Complex64]| {
                let wr = weight_ratio(&active, k, &w, z).unwrap();
                active.iter().map(|&j| fields[j].s(z[j])).product::<Complex64>() * wr
            }
        };
        let z = [c(-0.1, 0.2), c(0.1, -0.3), c(0.2, 0.25)];
        for (active, k, derivs) in [(vec![0, 1], 1, vec![0]), (vec![0, 1, 2], 2, vec![0, 1]), (vec![0, 1, 2], 0, vec![2])] {
            let exp = expand_e_derivative(&active, k, &derivs).unwrap();
            let mut kv = KernelValues::new(3);
            for &j in &active {
                kv.a[j] = w[j] - z[j];
                kv.sq[j] = kv.a[j].norm_sqr();
                kv.s[j] = fields[j].s(z[j]);
                kv.dbar_s[j] = fields[j].k(z[j]) / c(0.0, 2.0);
            }
            kv.refresh_h(&active);
            let exact = exp.eval(&kv);
            let f = e_fn(active.clone(), k);
            let fd = mixed_fd(&f, &z, &derivs, 1e-4);
            assert!((fd - exact).norm() < 1e-5 * exact.norm(), "{active:?} {derivs:?}: {fd} vs {exact}");
        }
    }

    #[test]
    fn pair_kernels_match_generic_expansion() {
        let mut kv = KernelValues::new(2);
        kv.a = vec![c(0.3, -0.1), c(-0.2, 0.5)];
        kv.sq = kv.a.iter().map(|a| a.norm_sqr()).collect();
        kv.s = vec![c(0.1, 0.7), c(-0.4, 0.2)];
        kv.dbar_s = vec![c(1.2, -0.3), c(0.5, 0.9)];
        kv.refresh_h(&[0, 1]);
        let d = stok_pair(&kv);
        let e0 = expand_e_derivative(&[0, 1], 0, &[1]).unwrap().eval(&kv);
        let e1 = expand_e_derivative(&[0, 1], 1, &[0]).unwrap().eval(&kv);
        assert!((d[0] - e0).norm() < 1e-14 && (d[1] - e1).norm() < 1e-14);
    }

    #[test]
    fn geometric_mean_examples() {
        let v = gm_bound_check(&[4.0, 9.0], &[0.5, 0.5]).unwrap();
        assert!((v.lhs - 6.0).abs() < 1e-12 && (v.rhs - 13.0).abs() < 1e-12 && v.holds);
        let v = gm_bound_check(&[1.0, 1.0, 1.0], &[0.5, 0.5, 1.0]).unwrap();
        assert!((v.lhs - 1.0).abs() < 1e-12 && (v.rhs - 3.0).abs() < 1e-12);
        assert!(gm_bound_check(&[1.0, 2.0], &[0.2, 0.2]).is_err());
        for n in 2..=4 {
            assert_eq!(gm_random_violations(n, GmRegime::SumOne, 2000, 1).unwrap(), 0);
            assert_eq!(gm_random_violations(n, GmRegime::SumNMinusOne, 2000, 2).unwrap(), 0);
        }
    }

    #[test]
    fn smooth_solution_examples() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        let f = monomial11().form();
        let t = Targets::points_nd(vec![vec![c(0.5, 0.0), c(0.5, 0.0)], vec![c(0.1, 0.3), c(-0.4, 0.2)]]);
        let u = solve_smooth(&pd, &f, &t, &rule()).unwrap();
        for (p, v) in u.points.iter().zip(&u.values) {
            assert!((v - (p[0] * p[1]).conj()).norm() < 1e-3, "{v}");
        }
        let z = solve_smooth(&pd, &Form01::zero(2), &t, &rule()).unwrap();
        assert_eq!(z.sup_norm, 0.0);
        let dz1 = crate::forms::builtin_form("dz1", 2).unwrap();
        let u = solve_smooth(&pd, &dz1, &t, &rule()).unwrap();
        for (p, v) in u.points.iter().zip(&u.values) {
            assert!((v - p[0].conj()).norm() < 1e-4, "{}", (v - p[0].conj()).norm());
        }
        assert!(matches!(solve_smooth(&pd, &abs_form(), &t, &rule()), Err(Error::Data(_))));
        let mut bad = monomial11().form();
        bad.components[0] = Arc::new(|p: &[Complex64]| p[1]);
        assert!(matches!(solve_smooth(&pd, &bad, &t, &rule()), Err(Error::Data(_))));
    }

    #[test]
    fn tilde_agrees_with_smooth() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        let t = Targets::points_nd(vec![vec![c(0.5, 0.0), c(0.5, 0.0)], vec![c(0.1, 0.3), c(-0.4, 0.2)]]);
        let forms: Vec<Form01> = bidisc_family().iter().take(4).map(|p| p.form()).collect();
        let tilde = solve_tilde_many(&pd, &forms, &t, &rule()).unwrap();
        for (f, ut) in forms.iter().zip(&tilde) {
            let us = solve_smooth(&pd, f, &t, &rule()).unwrap();
            assert!(ut.minus(&us).unwrap().sup_norm < 1e-2, "{}", f.name);
        }
        let z = solve_tilde(&pd, &Form01::zero(2), &t, &rule()).unwrap();
        assert_eq!(z.sup_norm, 0.0);
        let u = solve_tilde(&pd, &abs_form(), &t, &rule()).unwrap();
        assert!(u.sup_norm.is_finite());
    }

    #[test]
    fn tilde_rejects_large_products() {
        let pd = ProductDomain::unit_polydisc(4).unwrap();
        let t = Targets::points_nd(vec![vec![c(0.1, 0.0); 4]]);
        assert!(matches!(solve_tilde(&pd, &Form01::zero(4), &t, &rule()), Err(Error::Unsupported(_))));
        assert!(ProductDomain::unit_polydisc(1).is_err());
    }

    #[test]
    fn permutation_symmetry() {
        let pd = ProductDomain::new(&[PlanarDomain::unit_disc(), PlanarDomain::disc(c(0.0, 0.0), 2.0).unwrap()], 128).unwrap();
        let f = bidisc_family()[7].form();
        let p = vec![c(0.2, 0.1), c(-0.5, 0.7)];
        let perm = [1, 0];
        let pd2 = pd.permuted(&perm).unwrap();
        let f2 = f.permuted(&perm).unwrap();
        let q = vec![p[1], p[0]];
        let a = solve_tilde_at(&pd, &[f.clone()], &p, &rule()).unwrap()[0];
        let b = solve_tilde_at(&pd2, &[f2.clone()], &q, &rule()).unwrap()[0];
        assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        let a = solve_smooth_at(&pd, &f, &p, &rule()).unwrap();
        let b = solve_smooth_at(&pd2, &f2, &q, &rule()).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn tensor_canonicity_examples() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        let t = pd.polar_targets(8, 16).unwrap();
        let zz = SolutionField::from_fn(&t, |p| p[0] * p[1]).unwrap();
        let d = canonicity_defect_nd(&pd, &zz, 4).unwrap();
        assert!(d.get(&[1, 1]).unwrap() > 0.9);
        let zero = SolutionField::from_fn(&t, |_| c(0.0, 0.0)).unwrap();
        assert_eq!(canonicity_defect_nd(&pd, &zero, 4).unwrap().max(), 0.0);
        let anti = SolutionField::from_fn(&t, |p| (p[0] * p[1]).conj()).unwrap();
        assert!(canonicity_defect_nd(&pd, &anti, 6).unwrap().max() < 1e-12);
    }

    #[test]
    fn audit_examples() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        for m in 0..=1 {
            let derivs: Vec<usize> = (0..m).collect();
            let exp = expand_e_derivative(&[0, 1], 1, &derivs).unwrap();
            let r = audit_ee_bound(&pd, &exp, 500, 3, 0.1).unwrap();
            assert!(r.supremum.is_finite() && r.supremum > 0.0);
        }
        let exp = expand_e_derivative(&[0, 1], 1, &[]).unwrap();
        assert!(audit_ee_bound(&pd, &exp, 10, 3, 0.5).is_err());
    }

    #[test]
    fn stencil_residual_of_closed_form() {
        let pd = ProductDomain::unit_polydisc(2).unwrap();
        let pot = bidisc_family()[5].clone();
        let f = pot.form();
        let pts = pd.sample_compact(5, 0.1, 9);
        let r = stencil_dbar_residual(&pd, |p| Ok(pot.eval(p)), &f, &pts, 1e-3).unwrap();
        assert!(r < 1e-6);
    }
}
