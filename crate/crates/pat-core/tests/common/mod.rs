//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;

/// Unevaluated sum `hi + lo` carrying roughly 106 bits.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const fn new(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f(self, f: f64) -> Dd {
        self.mul(Dd::new(f))
    }

    /// Division by a power of two or any f64, one Newton correction.
    pub fn div_f(self, f: f64) -> Dd {
        let q = self.hi / f;
        let r = self.sub(Dd::new(f).mul(Dd::new(q)));
        Dd::new(q).add(Dd::new(r.hi / f))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        Dd::new(q1).add(Dd::new(q2)).add(Dd::new(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// 2 pi to double-double precision.
pub const TWO_PI_DD: Dd = Dd { hi: 6.283185307179586, lo: 2.4492935982947064e-16 };

/// `(cos 2 pi t, sin 2 pi t)` for a double-double `t`, by reduction to
/// `|t| <= 1/2` and a Taylor series.
pub fn sincos_turns(t: Dd) -> (Dd, Dd) {
    let r = t.sub(Dd::new(t.hi.round()));
    let x = r.mul(TWO_PI_DD);
    let x2 = x.mul(x);
    let mut term = Dd::new(1.0);
    let mut cos = Dd::new(1.0);
    let mut sin_term = x;
    let mut sin = x;
    let mut k = 1.0;
    for _ in 0..30 {
        term = term.mul(x2).div_f(-(2.0 * k - 1.0) * (2.0 * k));
        cos = cos.add(term);
        sin_term = sin_term.mul(x2).div_f(-(2.0 * k) * (2.0 * k + 1.0));
        sin = sin.add(sin_term);
        k += 1.0;
    }
    (cos, sin)
}

/// Double-double accumulation of `sum_n u_n exp(-2 pi i kappa n / N)`.
pub fn ner_reference(u: &[Complex64], kappas: &[f64]) -> Vec<Complex64> {
    let n = u.len() as f64;
    kappas
        .iter()
        .map(|&kap| {
            let (mut re, mut im) = (Dd::new(0.0), Dd::new(0.0));
            for (i, v) in u.iter().enumerate() {
                let (p, e) = two_prod(kap, i as f64);
                let t = Dd { hi: p, lo: e }.div_f(n);
                let (c, s) = sincos_turns(t);
                // (a + ib)(c - is)
                re = re.add(Dd::new(v.re).mul(c)).add(Dd::new(v.im).mul(s));
                im = im.add(Dd::new(v.im).mul(c)).sub(Dd::new(v.re).mul(s));
            }
            Complex64::new(re.to_f64(), im.to_f64())
        })
        .collect()
}

/// Double-double evaluation of the non-equispaced-data sum on a centred grid.
pub fn ned_reference(positions: &[Vec<f64>], values: &[Complex64], dims: &[usize]) -> Vec<Complex64> {
    let total: usize = dims.iter().product();
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut j = vec![0.0; dims.len()];
            for a in (0..dims.len()).rev() {
                j[a] = (rem % dims[a]) as f64 - (dims[a] / 2) as f64;
                rem /= dims[a];
            }
            let (mut re, mut im) = (Dd::new(0.0), Dd::new(0.0));
            for (p, v) in positions.iter().zip(values) {
                let mut t = Dd::new(0.0);
                for a in 0..dims.len() {
                    let (hi, lo) = two_prod(j[a], p[a]);
                    t = t.add(Dd { hi, lo }.div_f(dims[a] as f64));
                }
                let (c, s) = sincos_turns(t);
                re = re.add(Dd::new(v.re).mul(c)).add(Dd::new(v.im).mul(s));
                im = im.add(Dd::new(v.im).mul(c)).sub(Dd::new(v.re).mul(s));
            }
            Complex64::new(re.to_f64(), im.to_f64())
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on [-1, 1] in double-double.
pub fn gauss_legendre(n: usize) -> Vec<(Dd, Dd)> {
    let legendre = |x: Dd| -> (Dd, Dd) {
        let (mut p0, mut p1) = (Dd::new(1.0), x);
        for k in 1..n {
            let k = k as f64;
            let p2 = x.mul(p1).mul_f(2.0 * k + 1.0).sub(p0.mul_f(k)).div_f(k + 1.0);
            p0 = p1;
            p1 = p2;
        }
        // derivative from P_n and P_{n-1}
        let dp = x.mul(p1).sub(p0).mul_f(n as f64).div(x.mul(x).sub(Dd::new(1.0)));
        (p1, dp)
    };
    (0..n)
        .map(|i| {
            let mut x = Dd::new((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
            for _ in 0..8 {
                let (p, dp) = legendre(x);
                x = x.sub(p.div(dp));
            }
            let (_, dp) = legendre(x);
            let w = Dd::new(2.0).div(Dd::new(1.0).sub(x.mul(x)).mul(dp).mul(dp));
            (x, w)
        })
        .collect()
}

/// Integral of `f` over `[-h, h]`, doubling the Gauss-Legendre order until
/// two successive estimates agree to `rel_tol`.
pub fn gauss_adaptive(f: &dyn Fn(Dd) -> Dd, h: f64, rel_tol: f64) -> f64 {
    let rule = |n: usize| {
        gauss_legendre(n)
            .into_iter()
            .fold(Dd::new(0.0), |acc, (x, w)| acc.add(w.mul(f(x.mul_f(h)))))
            .mul_f(h)
            .to_f64()
    };
    let mut n = 16;
    let mut prev = rule(n);
    loop {
        n *= 2;
        let next = rule(n);
        if (next - prev).abs() <= rel_tol * next.abs() || n >= 1024 {
            return next;
        }
        prev = next;
    }
}

/// `I0(sqrt(z) * b)` for double-double `z >= 0` by its power series in `z`.
pub fn bessel_i0_sq(z: Dd, b: f64) -> Dd {
    let q = z.mul_f(b * b).div_f(4.0);
    let mut term = Dd::new(1.0);
    let mut sum = Dd::new(1.0);
    for k in 1..200 {
        let k = k as f64;
        term = term.mul(q).div_f(k * k);
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 * sum.hi.abs() {
            break;
        }
    }
    sum
}

/// Small deterministic generator for test inputs.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn complex_vec(&mut self, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(self.uniform() - 0.5, self.uniform() - 0.5)).collect()
    }
}
