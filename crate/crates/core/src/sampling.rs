//! Seeded samplers for interior points and point pairs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::PlanarDomain;

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Draws off-diagonal interior pairs `(w, z)` uniformly in area.
#[derive(Debug, Clone)]
pub struct PairSampler {
    pub count: usize,
    pub seed: u64,
    /// Pairs closer than `min_separation · d` are redrawn.
    pub min_separation: f64,
    /// First points closer than this to the boundary are redrawn.
    pub min_depth: f64,
}

impl PairSampler {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { count, seed, min_separation: 1e-8, min_depth: 0.0 }
    }

    pub fn with_min_depth(mut self, depth: f64) -> Self {
        self.min_depth = depth;
        self
    }

    pub fn with_min_separation(mut self, frac: f64) -> Self {
        self.min_separation = frac;
        self
    }

    /// Same seed, twice the pairs; the first `count` pairs coincide.
    pub fn doubled(&self) -> Self {
        Self { count: 2 * self.count, ..self.clone() }
    }

    pub fn pairs(&self, dom: &PlanarDomain) -> Vec<(Complex64, Complex64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let floor = self.min_separation * dom.diameter();
        let mut out = Vec::with_capacity(self.count);
        while out.len() < self.count {
            let w = uniform_point(dom, &mut rng);
            let z = uniform_point(dom, &mut rng);
            if (z - w).norm() >= floor
                && (self.min_depth == 0.0 || dom.boundary_distance_unchecked(w) >= self.min_depth)
            {
                out.push((w, z));
            }
        }
        out
    }
}

/// Uniform interior point by rejection from the bounding box.
pub fn uniform_point<R: Rng>(dom: &PlanarDomain, rng: &mut R) -> Complex64 {
    let (lo, hi) = dom.bounding_box();
    loop {
        let z = Complex64::new(rng.gen_range(lo.re..hi.re), rng.gen_range(lo.im..hi.im));
        if dom.contains(z) {
            return z;
        }
    }
}

pub fn uniform_points(dom: &PlanarDomain, count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| uniform_point(dom, &mut rng)).collect()
}

/// Uniform point in the disc of radius `r` about `c`.
pub fn point_in_disc<R: Rng>(c: Complex64, r: f64, rng: &mut R) -> Complex64 {
    let rho = r * rng.gen::<f64>().sqrt();
    c + Complex64::from_polar(rho, rng.gen_range(0.0..std::f64::consts::TAU))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_interior_and_reproducible() {
        let dom = PlanarDomain::ellipse(2.0, 1.0).unwrap();
        let s = PairSampler::new(200, 7).with_min_separation(0.01);
        let a = s.pairs(&dom);
        assert_eq!(a, s.pairs(&dom));
        assert_eq!(&s.doubled().pairs(&dom)[..200], &a[..]);
        for (w, z) in a {
            assert!(dom.contains(w) && dom.contains(z));
            assert!((z - w).norm() >= 0.04);
        }
    }
}
