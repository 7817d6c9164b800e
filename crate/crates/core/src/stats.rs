//! Streaming raw power sums over small real vectors.
//!
//! An accumulator holds Σ x^e for every multi-index e with 1 ≤ |e| ≤ degree,
//! plus the count. Merging is elementwise addition, so blocks reduced in a
//! fixed order give bitwise-stable results. Callers shift samples by a
//! deterministic reference (the classical trajectory) before pushing, which
//! keeps the raw sums well conditioned; central moments of any linear form
//! are then recovered exactly by polynomial expansion.

use std::sync::Arc;

#[derive(Debug, PartialEq, Eq)]
struct Layout {
    dim: usize,
    degree: usize,
    /// Exponent vectors, index 0 is the constant monomial.
    monomials: Vec<Vec<u8>>,
    /// Dense lookup over (degree+1)^dim exponent codes.
    index: Vec<usize>,
}

impl Layout {
    fn new(dim: usize, degree: usize) -> Self {
        assert!(dim > 0 && degree > 0);
        let base = degree + 1;
        let total = base.pow(dim as u32);
        let mut all: Vec<Vec<u8>> = (0..total)
            .map(|mut code| {
                (0..dim)
                    .map(|_| {
                        let e = (code % base) as u8;
                        code /= base;
                        e
                    })
                    .collect::<Vec<u8>>()
            })
            .filter(|e: &Vec<u8>| e.iter().map(|&x| x as usize).sum::<usize>() <= degree)
            .collect();
        // graded, then lexicographic: deterministic order
        all.sort_by(|a, b| {
            let da: usize = a.iter().map(|&x| x as usize).sum();
            let db: usize = b.iter().map(|&x| x as usize).sum();
            da.cmp(&db).then_with(|| b.cmp(a))
        });
        let mut index = vec![usize::MAX; total];
        for (i, e) in all.iter().enumerate() {
            index[Self::code(e, base)] = i;
        }
        Layout { dim, degree, monomials: all, index }
    }

    fn code(e: &[u8], base: usize) -> usize {
        e.iter().rev().fold(0, |acc, &x| acc * base + x as usize)
    }

    fn lookup(&self, e: &[u8]) -> Option<usize> {
        if e.iter().map(|&x| x as usize).sum::<usize>() > self.degree {
            return None;
        }
        Some(self.index[Self::code(e, self.degree + 1)])
    }
}

/// Polynomial in the accumulator variables, coefficients over the layout.
#[derive(Clone, Debug)]
pub struct Poly {
    layout: Arc<Layout>,
    coef: Vec<f64>,
}

impl Poly {
    fn zero(layout: &Arc<Layout>) -> Self {
        Poly { layout: layout.clone(), coef: vec![0.0; layout.monomials.len()] }
    }

    /// c₀ + Σ cᵢ xᵢ.
    pub fn linear(acc: &PowerSums, constant: f64, c: &[f64]) -> Self {
        assert_eq!(c.len(), acc.layout.dim);
        let mut p = Poly::zero(&acc.layout);
        p.coef[0] = constant;
        let mut e = vec![0u8; c.len()];
        for (i, &ci) in c.iter().enumerate() {
            e[i] = 1;
            p.coef[acc.layout.lookup(&e).unwrap()] = ci;
            e[i] = 0;
        }
        p
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(&self.layout);
        let mut e = vec![0u8; self.layout.dim];
        for (i, &a) in self.coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coef.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (k, slot) in e.iter_mut().enumerate() {
                    *slot = self.layout.monomials[i][k] + self.layout.monomials[j][k];
                }
                let idx = self
                    .layout
                    .lookup(&e)
                    .expect("polynomial degree exceeds accumulator degree");
                out.coef[idx] += a * b;
            }
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (o, b) in out.coef.iter_mut().zip(&other.coef) {
            *o -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = self.clone();
        out.coef.iter_mut().for_each(|c| *c *= s);
        out
    }
}

#[derive(Clone, Debug)]
pub struct PowerSums {
    layout: Arc<Layout>,
    count: u64,
    /// sums[0] is unused (the constant monomial); count carries it.
    sums: Vec<f64>,
    scratch: Vec<[f64; 8]>,
}

impl PartialEq for PowerSums {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.count == other.count && self.sums == other.sums
    }
}

impl PowerSums {
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!(degree < 8, "degree must be < 8");
        let layout = Arc::new(Layout::new(dim, degree));
        let n = layout.monomials.len();
        PowerSums { layout, count: 0, sums: vec![0.0; n], scratch: vec![[0.0; 8]; dim] }
    }

    /// Empty accumulator sharing this one's layout.
    pub fn empty_like(&self) -> Self {
        PowerSums {
            layout: self.layout.clone(),
            count: 0,
            sums: vec![0.0; self.sums.len()],
            scratch: self.scratch.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn degree(&self) -> usize {
        self.layout.degree
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.layout.dim);
        for (p, &xi) in self.scratch.iter_mut().zip(x) {
            p[0] = 1.0;
            for k in 1..=self.layout.degree {
                p[k] = p[k - 1] * xi;
            }
        }
        for (s, e) in self.sums.iter_mut().zip(&self.layout.monomials).skip(1) {
            let mut v = 1.0;
            for (p, &k) in self.scratch.iter().zip(e) {
                v *= p[k as usize];
            }
            *s += v;
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &PowerSums) {
        assert_eq!(self.layout, other.layout, "accumulator layouts differ");
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
    }

    /// Sample mean of x^e.
    pub fn raw_moment(&self, e: &[u8]) -> f64 {
        let idx = self.layout.lookup(e).expect("exponent exceeds accumulator degree");
        if idx == 0 {
            return 1.0;
        }
        self.sums[idx] / self.count as f64
    }

    /// Sample mean of a polynomial.
    pub fn expect(&self, p: &Poly) -> f64 {
        assert!(Arc::ptr_eq(&self.layout, &p.layout) || *self.layout == *p.layout);
        let n = self.count as f64;
        p.coef[0] + p.coef.iter().zip(&self.sums).skip(1).map(|(c, s)| c * s / n).sum::<f64>()
    }

    /// Sample mean of the linear form c·x.
    pub fn mean_linear(&self, c: &[f64]) -> f64 {
        self.expect(&Poly::linear(self, 0.0, c))
    }

    /// k-th sample central moment (1/n normalization) of c·x.
    pub fn central_moment_linear(&self, c: &[f64], k: usize) -> f64 {
        let m = self.mean_linear(c);
        let d = Poly::linear(self, -m, c);
        let mut p = Poly::linear(self, 1.0, &vec![0.0; c.len()]);
        for _ in 0..k {
            p = p.mul(&d);
        }
        self.expect(&p)
    }
}

/// Differences of two correlated variances: the estimator behind
/// Re E[(M − E M)²] = Var X − Var Y for M = X + iY.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarianceDifference {
    /// Unbiased Var X − Var Y.
    pub value: f64,
    /// Fourth-moment standard error √((E W² − (n−3)/(n−1)·(E W)²)/n), W = dX² − dY².
    pub std_error: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub count: u64,
}

/// Var(cx·x) − Var(cy·x) with its standard error. Pass cy = 0 for a plain variance.
pub fn variance_difference(acc: &PowerSums, cx: &[f64], cy: &[f64]) -> VarianceDifference {
    let n = acc.count();
    let nf = n as f64;
    let mx = acc.mean_linear(cx);
    let my = acc.mean_linear(cy);
    if n < 2 {
        return VarianceDifference { value: f64::NAN, std_error: f64::NAN, mean_x: mx, mean_y: my, count: n };
    }
    let dx = Poly::linear(acc, -mx, cx);
    let dy = Poly::linear(acc, -my, cy);
    let w = dx.mul(&dx).sub(&dy.mul(&dy));
    let ew = acc.expect(&w);
    let value = ew * nf / (nf - 1.0);
    let std_error = if acc.degree() >= 4 {
        let ew2 = acc.expect(&w.mul(&w));
        let num = ew2 - (nf - 3.0) / (nf - 1.0) * ew * ew;
        (num.max(0.0) / nf).sqrt()
    } else {
        f64::NAN
    };
    VarianceDifference { value, std_error, mean_x: mx, mean_y: my, count: n }
}

/// Standard error of a linear-form mean.
pub fn mean_std_error(acc: &PowerSums, c: &[f64]) -> f64 {
    let n = acc.count() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let var = acc.central_moment_linear(c, 2) * n / (n - 1.0);
    (var.max(0.0) / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NoiseStream, TAG_AUX};

    #[test]
    fn layout_sizes() {
        assert_eq!(PowerSums::new(4, 4).sums.len(), 70);
        assert_eq!(PowerSums::new(4, 2).sums.len(), 15);
        assert_eq!(PowerSums::new(2, 2).sums.len(), 6);
    }

    #[test]
    fn central_moments_match_direct_computation() {
        let mut rng = NoiseStream::new(1, TAG_AUX, 0);
        let xs: Vec<[f64; 3]> = (0..500)
            .map(|_| {
                let a = rng.standard_normal();
                [a + 3.0, 0.5 * a + rng.standard_normal(), rng.uniform()]
            })
            .collect();
        let mut acc = PowerSums::new(3, 4);
        for x in &xs {
            acc.push(x);
        }
        let c = [0.3, -1.2, 2.0];
        let vals: Vec<f64> = xs.iter().map(|x| x.iter().zip(&c).map(|(a, b)| a * b).sum()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        for k in 2..=4 {
            let direct = vals.iter().map(|v| (v - mean).powi(k as i32)).sum::<f64>() / n;
            let got = acc.central_moment_linear(&c, k);
            assert!((got - direct).abs() < 1e-10 * direct.abs().max(1.0), "k={k}: {got} vs {direct}");
        }
    }

    #[test]
    fn constant_samples_have_zero_variance_and_error() {
        let mut acc = PowerSums::new(2, 4);
        for _ in 0..40 {
            acc.push(&[0.0, 0.0]);
        }
        let v = variance_difference(&acc, &[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(v.value, 0.0);
        assert_eq!(v.std_error, 0.0);
    }

    #[test]
    fn gaussian_variance_error_follows_fourth_moment_identity() {
        let n = 10_000;
        let mut rng = NoiseStream::new(2, TAG_AUX, 0);
        let mut acc = PowerSums::new(1, 4);
        for _ in 0..n {
            acc.push(&[rng.standard_normal()]);
        }
        let v = variance_difference(&acc, &[1.0], &[0.0]);
        let expected = (2.0 / n as f64).sqrt();
        assert!((v.std_error / expected - 1.0).abs() < 0.2, "se {}", v.std_error);
        assert!((v.value - 1.0).abs() < 5.0 * expected);
    }

    #[test]
    fn error_halves_when_count_quadruples() {
        let mut rng = NoiseStream::new(3, TAG_AUX, 0);
        let mut small = PowerSums::new(1, 4);
        let mut large = PowerSums::new(1, 4);
        for i in 0..40_000 {
            let x = rng.standard_normal();
            if i < 10_000 {
                small.push(&[x]);
            }
            large.push(&[x]);
        }
        let r = variance_difference(&small, &[1.0], &[0.0]).std_error
            / variance_difference(&large, &[1.0], &[0.0]).std_error;
        assert!((r - 2.0).abs() < 0.4, "ratio {r}");
    }
}
