//! Test data: polynomial potentials in `z` and `z̄`, the `∂̄`-closed forms they
//! generate, and the named builtins used by the command line.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::PlanarDomain;
use crate::product::{subsets, Form01, FormFn};
use crate::solve1d::{DiffData, ScalarData};

/// `coef · Π_j z̄_j^{conj_pow[j]} z_j^{pow[j]}`
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: Complex64,
    pub conj_pow: Vec<u32>,
    pub pow: Vec<u32>,
}

impl Monomial {
    pub fn new(coef: Complex64, conj_pow: Vec<u32>, pow: Vec<u32>) -> Self {
        Self { coef, conj_pow, pow }
    }

    pub fn eval(&self, p: &[Complex64]) -> Complex64 {
        let mut v = self.coef;
        for (j, &z) in p.iter().enumerate() {
            v *= z.conj().powu(self.conj_pow[j]) * z.powu(self.pow[j]);
        }
        v
    }

    /// `∂^{|set|}/Π_{j∈set} ∂z̄_j`, or `None` when it vanishes.
    pub fn dbar(&self, set: &[usize]) -> Option<Self> {
        let mut out = self.clone();
        for &j in set {
            if out.conj_pow[j] == 0 {
                return None;
            }
            out.coef *= out.conj_pow[j] as f64;
            out.conj_pow[j] -= 1;
        }
        Some(out)
    }

    /// Bergman projection on a product of discs centered at 0, factor by factor:
    /// `z̄^a z^c ↦ R^{2a} (c − a + 1)/(c + 1) · z^{c−a}` for `c ≥ a`, else 0.
    pub fn disc_projection(&self, radii: &[f64]) -> Option<Self> {
        let mut out = Self::new(self.coef, vec![0; self.pow.len()], vec![0; self.pow.len()]);
        for (j, &r) in radii.iter().enumerate() {
            let (a, c) = (self.conj_pow[j], self.pow[j]);
            if c < a {
                return None;
            }
            out.coef *= r.powi(2 * a as i32) * (c - a + 1) as f64 / (c + 1) as f64;
            out.pow[j] = c - a;
        }
        Some(out)
    }
}

/// A polynomial `u` in `z, z̄`; its `∂̄u` is a closed form with exact mixed derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub name: String,
    pub terms: Vec<Monomial>,
}

impl Potential {
    pub fn new(name: impl Into<String>, terms: Vec<Monomial>) -> Self {
        Self { name: name.into(), terms }
    }

    /// Single monomial `Π z̄_j^{a_j} z_j^{c_j}`.
    pub fn monomial(name: impl Into<String>, conj_pow: Vec<u32>, pow: Vec<u32>) -> Self {
        Self::new(name, vec![Monomial::new(Complex64::new(1.0, 0.0), conj_pow, pow)])
    }

    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |t| t.pow.len())
    }

    pub fn eval(&self, p: &[Complex64]) -> Complex64 {
        self.terms.iter().map(|t| t.eval(p)).sum()
    }

    pub fn dbar(&self, set: &[usize]) -> Potential {
        Potential::new(
            format!("{} dbar{set:?}", self.name),
            self.terms.iter().filter_map(|t| t.dbar(set)).collect(),
        )
    }

    pub fn as_fn(&self) -> FormFn {
        let me = self.clone();
        Arc::new(move |p: &[Complex64]| me.eval(p))
    }

    /// `∂̄u` with every mixed derivative.
    pub fn form(&self) -> Form01 {
        let n = self.dim();
        let components = (0..n).map(|j| self.dbar(&[j]).as_fn()).collect();
        let mut f = Form01::new(format!("dbar({})", self.name), components);
        for set in subsets(n).into_iter().filter(|s| s.len() >= 2) {
            f.mixed.insert(set.clone(), self.dbar(&set).as_fn());
        }
        f
    }

    /// `u − P u` on a product of discs centered at the origin.
    pub fn canonical_on_discs(&self, factors: &[PlanarDomain]) -> Result<Potential> {
        let mut radii = Vec::with_capacity(factors.len());
        for d in factors {
            match d.as_disc() {
                Some((c, r)) if c.norm() == 0.0 => radii.push(r),
                _ => {
                    return Err(Error::Unsupported(
                        "closed-form projection needs discs centered at the origin".into(),
                    ))
                }
            }
        }
        let mut terms = self.terms.clone();
        for t in &self.terms {
            if let Some(mut p) = t.disc_projection(&radii) {
                p.coef = -p.coef;
                terms.push(p);
            }
        }
        Ok(Potential::new(format!("canonical {}", self.name), terms))
    }

    /// Planar datum `∂̄u` for a one-variable potential.
    pub fn scalar_data(&self) -> ScalarData {
        let d = self.dbar(&[0]);
        let mut s = ScalarData::new(format!("dbar({})", self.name), move |z| d.eval(&[z]));
        s.smooth = true;
        s
    }

    pub fn diff_data(&self) -> DiffData {
        let u = self.clone();
        let d = self.dbar(&[0]);
        DiffData::new(self.name.clone(), move |z| u.eval(&[z]), move |z| d.eval(&[z]))
    }
}

/// `z̄₁z̄₂`, whose `∂̄` is the standard bidisc test form.
pub fn monomial11() -> Potential {
    Potential::monomial("conj(z1) conj(z2)", vec![1, 1], vec![0, 0])
}

/// Smooth non-canonical potentials on the bidisc, used as test data.
pub fn bidisc_family() -> Vec<Potential> {
    let c = |re, im| Complex64::new(re, im);
    let m = |coef, a: [u32; 2], p: [u32; 2]| Monomial::new(coef, a.to_vec(), p.to_vec());
    vec![
        monomial11(),
        Potential::monomial("conj(z1)", vec![1, 0], vec![0, 0]),
        Potential::monomial("conj(z2)^2", vec![0, 2], vec![0, 0]),
        Potential::monomial("conj(z1) z1", vec![1, 0], vec![1, 0]),
        Potential::monomial("conj(z1) z2", vec![1, 0], vec![0, 1]),
        Potential::monomial("conj(z1 z2) z1", vec![1, 1], vec![1, 0]),
        Potential::new("mix a", vec![m(c(1.0, 0.0), [1, 1], [0, 0]), m(c(0.0, 0.5), [2, 0], [0, 1])]),
        Potential::new("mix b", vec![m(c(0.3, 0.0), [1, 2], [0, 0]), m(c(-0.7, 0.2), [0, 1], [1, 1])]),
        Potential::new("mix c", vec![m(c(0.5, 0.0), [2, 1], [1, 0]), m(c(1.0, 0.0), [0, 1], [0, 0])]),
        Potential::new("mix d", vec![m(c(0.0, 1.0), [1, 1], [2, 1]), m(c(0.4, 0.0), [3, 0], [0, 0])]),
    ]
}

/// `f = |z₁| z̄₂ dz̄₁ + (2/3)|z₁| z̄₁ dz̄₂`, the `∂̄` of `(2/3)|z₁| z̄₁ z̄₂`:
/// continuous and closed, with `f₁` not differentiable on `z₁ = 0`.
pub fn abs_form() -> Form01 {
    let f1: FormFn = Arc::new(|p: &[Complex64]| p[0].norm() * p[1].conj());
    let f2: FormFn = Arc::new(|p: &[Complex64]| (2.0 / 3.0) * p[0].norm() * p[0].conj());
    Form01::new("abs", vec![f1, f2])
}

/// Potential of [`abs_form`].
pub fn abs_potential(p: &[Complex64]) -> Complex64 {
    (2.0 / 3.0) * p[0].norm() * p[0].conj() * p[1].conj()
}

/// `∂̄(z̄₁z̄₂z̄₃)` on the tridisc.
pub fn monomial111() -> Potential {
    Potential::monomial("conj(z1 z2 z3)", vec![1, 1, 1], vec![0, 0, 0])
}

pub const FORM_NAMES: [&str; 6] = ["zero", "monomial11", "dz1", "mixed", "abs", "monomial111"];

/// Named `(0,1)`-forms on a product of `n` factors.
pub fn builtin_form(name: &str, n: usize) -> Result<Form01> {
    let f = match name {
        "zero" => Form01::zero(n),
        "monomial11" => expect_dim(monomial11(), n)?.form(),
        "monomial111" => expect_dim(monomial111(), n)?.form(),
        "dz1" => {
            let mut pow = vec![0; n];
            pow[0] = 1;
            Potential::monomial("conj(z1)", pow, vec![0; n]).form()
        }
        "mixed" => expect_dim(bidisc_family()[6].clone(), n)?.form(),
        "abs" => {
            if n != 2 {
                return Err(Error::Parameter("form abs lives on a bidisc".into()));
            }
            abs_form()
        }
        _ => return Err(Error::Parameter(format!("unknown form {name}; expected one of {FORM_NAMES:?}"))),
    };
    Ok(f)
}

fn expect_dim(p: Potential, n: usize) -> Result<Potential> {
    if p.dim() != n {
        return Err(Error::Parameter(format!("{} needs {} factors, got {n}", p.name, p.dim())));
    }
    Ok(p)
}

pub const DATA_NAMES: [&str; 5] = ["one", "conj", "z", "zero", "mixed"];

/// One-variable potentials behind the named planar data.
pub fn builtin_potential_1d(name: &str) -> Result<Potential> {
    let c = |re| Complex64::new(re, 0.0);
    let m = |coef, a: u32, p: u32| Monomial::new(coef, vec![a], vec![p]);
    let p = match name {
        "one" => Potential::monomial("conj(z)", vec![1], vec![0]),
        "conj" => Potential::new("conj(z)^2/2", vec![m(c(0.5), 2, 0)]),
        "z" => Potential::monomial("z conj(z)", vec![1], vec![1]),
        "zero" => Potential::new("0", vec![m(c(0.0), 0, 0)]),
        "mixed" => Potential::new("mixed", vec![m(c(1.0), 1, 2), m(Complex64::new(0.0, 0.5), 2, 0)]),
        _ => return Err(Error::Parameter(format!("unknown data {name}; expected one of {DATA_NAMES:?}"))),
    };
    Ok(p)
}

/// A builtin datum name, or a potential written as a sum of monomials such as
/// `zbar^2*z + 0.5*zbar`.
pub fn resolve_potential_1d(name_or_expr: &str) -> Result<Potential> {
    if DATA_NAMES.contains(&name_or_expr) {
        return builtin_potential_1d(name_or_expr);
    }
    parse_potential_1d(name_or_expr)
}

pub fn parse_potential_1d(expr: &str) -> Result<Potential> {
    let bad = |why: &str| Error::Parameter(format!("cannot read potential {expr:?}: {why}"));
    let mut terms = Vec::new();
    for term in expr.split('+') {
        let term = term.trim();
        if term.is_empty() {
            return Err(bad("empty term"));
        }
        let mut coef = 1.0;
        let (mut a, mut p) = (0u32, 0u32);
        for factor in term.split('*').map(str::trim) {
            let (base, exp) = match factor.split_once('^') {
                Some((b, e)) => (b.trim(), e.trim().parse::<u32>().map_err(|_| bad("bad exponent"))?),
                None => (factor, 1),
            };
            match base {
                "zbar" => a += exp,
                "z" => p += exp,
                _ => coef *= base.parse::<f64>().map_err(|_| bad("unknown factor"))?,
            }
        }
        terms.push(Monomial::new(Complex64::new(coef, 0.0), vec![a], vec![p]));
    }
    Ok(Potential::new(expr, terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_potentials() {
        let p = parse_potential_1d("zbar^2*z + 0.5*zbar").unwrap();
        let z = Complex64::new(0.3, -0.4);
        let expect = z.conj() * z.conj() * z + 0.5 * z.conj();
        assert!((p.eval(&[z]) - expect).norm() < 1e-15);
        assert!(parse_potential_1d("w^2").is_err());
        assert!(parse_potential_1d("z +").is_err());
        assert_eq!(resolve_potential_1d("one").unwrap().name, "conj(z)");
    }

    #[test]
    fn monomial_derivatives() {
        let p = Potential::monomial("m", vec![2, 1], vec![1, 0]);
        let d = p.dbar(&[0, 1]);
        let x = [Complex64::new(0.3, 0.2), Complex64::new(-0.1, 0.5)];
        let expect = 2.0 * x[0].conj() * x[0];
        assert!((d.eval(&x) - expect).norm() < 1e-14);
        assert!(p.dbar(&[0, 0, 0]).terms.is_empty());
    }

    #[test]
    fn disc_projection_examples() {
        let r = [1.0];
        let m = Monomial::new(Complex64::new(1.0, 0.0), vec![1], vec![1]);
        let p = m.disc_projection(&r).unwrap();
        assert_eq!(p.pow, vec![0]);
        assert!((p.coef - 0.5).norm() < 1e-15);
        assert!(Monomial::new(Complex64::new(1.0, 0.0), vec![1], vec![0]).disc_projection(&r).is_none());
        let big = Monomial::new(Complex64::new(1.0, 0.0), vec![1], vec![1]).disc_projection(&[2.0]).unwrap();
        assert!((big.coef - 2.0).norm() < 1e-15);
    }

    #[test]
    fn abs_form_is_closed() {
        let f = abs_form();
        let p = [Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.4)];
        let h = 1e-6;
        let d2f1 = crate::product::dbar_fd(|q| f.component(0, q), &p, 1, h);
        let d1f2 = crate::product::dbar_fd(|q| f.component(1, q), &p, 0, h);
        assert!((d2f1 - d1f2).norm() < 1e-8);
        let df = crate::product::dbar_fd(abs_potential, &p, 0, h);
        assert!((df - f.component(0, &p)).norm() < 1e-8);
    }

    #[test]
    fn builtins_resolve() {
        for name in FORM_NAMES {
            let n = if name == "monomial111" { 3 } else { 2 };
            assert_eq!(builtin_form(name, n).unwrap().dim(), n);
        }
        assert!(builtin_form("nope", 2).is_err());
        for name in DATA_NAMES {
            builtin_potential_1d(name).unwrap();
        }
    }
}
