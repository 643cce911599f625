//! Double-well potentials, the proliferation function and the separation
//! interval.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Points closer than this to a finite endpoint of the domain are rejected.
pub const BOUNDARY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum Potential {
    /// `F(r) = (r^2 - 1)^2 / 4` on the real line.
    Regular,
    /// `F(r) = (1+r) ln(1+r) + (1-r) ln(1-r) - c1 r^2` on `(-1, 1)`, `c1 > 1`.
    Logarithmic { c1: f64 },
    /// Polynomial `F(r) = sum_k c_k r^k` of even degree with positive leading
    /// coefficient.
    Custom(PolynomialPotential),
}

impl Potential {
    pub fn logarithmic(c1: f64) -> Result<Self> {
        if !(c1.is_finite() && c1 > 1.0) {
            return Err(Error::invalid(format!(
                "logarithmic potential needs c1 > 1, got {c1}"
            )));
        }
        Ok(Potential::Logarithmic { c1 })
    }

    pub fn custom(coefficients: Vec<f64>) -> Result<Self> {
        PolynomialPotential::new(coefficients).map(Potential::Custom)
    }

    /// Open interval `(a, b)`.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Potential::Logarithmic { .. } => (-1.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn check(&self, s: f64) -> Result<()> {
        let (a, b) = self.domain();
        let inside = match self {
            Potential::Logarithmic { .. } => s.abs() < 1.0 - BOUNDARY_GUARD,
            _ => s.is_finite(),
        };
        if inside {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                value: s,
                lower: a,
                upper: b,
            })
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        Ok(match self {
            Potential::Regular => 0.25 * (s * s - 1.0).powi(2),
            Potential::Logarithmic { c1 } => {
                (1.0 + s) * s.ln_1p() + (1.0 - s) * (-s).ln_1p() - c1 * s * s
            }
            Potential::Custom(p) => p.eval(0, s),
        })
    }

    /// `f = F'`.
    pub fn f(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        Ok(match self {
            Potential::Regular => s * s * s - s,
            Potential::Logarithmic { c1 } => s.ln_1p() - (-s).ln_1p() - 2.0 * c1 * s,
            Potential::Custom(p) => p.eval(1, s),
        })
    }

    pub fn f_prime(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        Ok(match self {
            Potential::Regular => 3.0 * s * s - 1.0,
            Potential::Logarithmic { c1 } => 2.0 / ((1.0 - s) * (1.0 + s)) - 2.0 * c1,
            Potential::Custom(p) => p.eval(2, s),
        })
    }

    pub fn f_second(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        Ok(match self {
            Potential::Regular => 6.0 * s,
            Potential::Logarithmic { .. } => {
                let d = (1.0 - s) * (1.0 + s);
                4.0 * s / (d * d)
            }
            Potential::Custom(p) => p.eval(3, s),
        })
    }

    /// `(lo, hi)` such that `f' > 0` on `(a, lo)` and on `(hi, b)`.
    pub fn monotone_threshold(&self) -> (f64, f64) {
        match self {
            Potential::Regular => {
                let t = 1.0 / 3f64.sqrt();
                (-t, t)
            }
            Potential::Logarithmic { c1 } => {
                let t = (1.0 - 1.0 / c1).sqrt();
                (-t, t)
            }
            Potential::Custom(p) => {
                let r = p.root_bound();
                (-r, r)
            }
        }
    }

    /// Splitting `f = f1 + f2` with `f1(s) = int_0^s (f')^+` monotone and
    /// `f2` Lipschitz.
    pub fn split_f(&self, s: f64) -> Result<(f64, f64)> {
        let f = self.f(s)?;
        let f1 = match self {
            Potential::Regular | Potential::Logarithmic { .. } => {
                let (lo, hi) = self.monotone_threshold();
                if s > hi {
                    f - self.f(hi)?
                } else if s < lo {
                    f - self.f(lo)?
                } else {
                    0.0
                }
            }
            Potential::Custom(p) => p.monotone_part(s),
        };
        Ok((f1, f - f1))
    }
}

/// Polynomial potential with a tabulated monotone part of `f`.
#[derive(Debug, Clone)]
pub struct PolynomialPotential {
    /// Ascending coefficients of `F`.
    coefficients: Vec<f64>,
    table: OnceLock<SplitTable>,
}

impl PolynomialPotential {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        let mut coefficients = coefficients;
        while coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        let degree = coefficients.len().saturating_sub(1);
        if degree < 2 || degree % 2 != 0 || coefficients[degree] <= 0.0 {
            return Err(Error::invalid(
                "custom potential must have even degree >= 2 and a positive leading coefficient",
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("custom potential coefficients must be finite"));
        }
        Ok(Self {
            coefficients,
            table: OnceLock::new(),
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `d`-th derivative of `F` at `s` (Horner on the differentiated
    /// coefficients).
    fn eval(&self, d: usize, s: f64) -> f64 {
        let c = &self.coefficients;
        if d >= c.len() {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in (d..c.len()).rev() {
            let falling: f64 = (0..d).map(|i| (k - i) as f64).product();
            acc = acc * s + c[k] * falling;
        }
        acc
    }

    /// Cauchy bound on the real roots of `f' = F''`.
    fn root_bound(&self) -> f64 {
        let c = &self.coefficients;
        let n = c.len() - 1;
        // coefficients of F'' in ascending order
        let d2: Vec<f64> = (2..=n).map(|k| c[k] * (k * (k - 1)) as f64).collect();
        let lead = *d2.last().unwrap();
        let m = d2[..d2.len() - 1]
            .iter()
            .map(|a| (a / lead).abs())
            .fold(0.0, f64::max);
        1.0 + m
    }

    fn monotone_part(&self, s: f64) -> f64 {
        let table = self.table.get_or_init(|| SplitTable::build(self));
        table.eval(self, s)
    }
}

/// Piecewise cubic Hermite table of `f1(s) = int_0^s (f')^+` on
/// `[-R, R]`, with nodes placed on the roots of `f'` so that no cell
/// straddles a kink. Outside the table `f' > 0` and `f1` is exact.
#[derive(Debug, Clone)]
struct SplitTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    bound: f64,
}

const TABLE_CELLS_PER_PIECE: usize = 512;
const SPLIT_QUAD_TOL: f64 = 1e-12;

impl SplitTable {
    fn build(p: &PolynomialPotential) -> Self {
        let r = p.root_bound();
        let fp = |s: f64| p.eval(2, s);
        let pos = |s: f64| fp(s).max(0.0);
        // breakpoints: sign changes of f' on a fine scan, refined by bisection
        let scan = 4096;
        let mut breaks = vec![-r];
        let h = 2.0 * r / scan as f64;
        for i in 0..scan {
            let (x0, x1) = (-r + i as f64 * h, -r + (i + 1) as f64 * h);
            if fp(x0).signum() != fp(x1).signum() && fp(x0) != 0.0 {
                breaks.push(bisect(fp, x0, x1, 0.0));
            }
        }
        breaks.push(0.0);
        breaks.push(r);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let mut nodes = Vec::new();
        for w in breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            for i in 0..TABLE_CELLS_PER_PIECE {
                nodes.push(lo + (hi - lo) * i as f64 / TABLE_CELLS_PER_PIECE as f64);
            }
        }
        nodes.push(r);
        // f1 anchored at 0: integrate outward from the node at zero
        let zero = nodes.iter().position(|&x| x == 0.0).unwrap();
        let mut values = vec![0.0; nodes.len()];
        for i in zero + 1..nodes.len() {
            values[i] = values[i - 1] + adaptive_simpson(&pos, nodes[i - 1], nodes[i], SPLIT_QUAD_TOL);
        }
        for i in (0..zero).rev() {
            values[i] = values[i + 1] - adaptive_simpson(&pos, nodes[i], nodes[i + 1], SPLIT_QUAD_TOL);
        }
        let slopes = nodes.iter().map(|&x| pos(x)).collect();
        Self {
            nodes,
            values,
            slopes,
            bound: r,
        }
    }

    fn eval(&self, p: &PolynomialPotential, s: f64) -> f64 {
        let last = self.nodes.len() - 1;
        if s >= self.bound {
            return self.values[last] + p.eval(1, s) - p.eval(1, self.bound);
        }
        if s <= -self.bound {
            return self.values[0] + p.eval(1, s) - p.eval(1, -self.bound);
        }
        let i = match self.nodes.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let h = x1 - x0;
        let t = (s - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[i]
            + h10 * h * self.slopes[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

/// Root of `g(z) = target` on a bracket with a sign change.
fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let below_at_lo = g(lo) < target;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v == target {
            return mid;
        }
        if (v < target) == below_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bounded, nonnegative, Lipschitz proliferation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proliferation {
    /// `P(s) = p0 / (1 + s^2) + p1` with `p0, p1 >= 0`.
    Rational { p0: f64, p1: f64 },
}

impl Proliferation {
    pub fn rational(p0: f64, p1: f64) -> Result<Self> {
        if !(p0.is_finite() && p1.is_finite() && p0 >= 0.0 && p1 >= 0.0) {
            return Err(Error::invalid(format!(
                "proliferation constants must be nonnegative, got p0 = {p0}, p1 = {p1}"
            )));
        }
        Ok(Proliferation::Rational { p0, p1 })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::rational(0.0, value)
    }

    pub fn zero() -> Self {
        Proliferation::Rational { p0: 0.0, p1: 0.0 }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Proliferation::Rational { p0, p1 } => p0 / (1.0 + s * s) + p1,
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        match *self {
            Proliferation::Rational { p0, .. } => {
                let d = 1.0 + s * s;
                -2.0 * p0 * s / (d * d)
            }
        }
    }

    pub fn d2(&self, s: f64) -> f64 {
        match *self {
            Proliferation::Rational { p0, .. } => {
                let d = 1.0 + s * s;
                p0 * (6.0 * s * s - 2.0) / (d * d * d)
            }
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match *self {
            Proliferation::Rational { p0, p1 } => p0 + p1,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_bound() == 0.0
    }
}

/// `[a_M, b_M]` with `f < -M` on `(a, a_M)` and `f > M` on `(b_M, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationInterval {
    pub a_m: f64,
    pub b_m: f64,
}

impl SeparationInterval {
    pub fn contains(&self, s: f64) -> bool {
        s >= self.a_m && s <= self.b_m
    }
}

const SEPARATION_SCAN: usize = 2000;
const SEPARATION_TOL: f64 = 1e-10;

/// Smallest interval around `[a0, b0]` outside of which `|f| > M` with the
/// sign of the respective end.
pub fn separation_interval(
    potential: &Potential,
    m: f64,
    a0: f64,
    b0: f64,
) -> Result<SeparationInterval> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::invalid(format!("M must be positive, got {m}")));
    }
    if a0 > b0 {
        return Err(Error::invalid("a0 must not exceed b0"));
    }
    potential.check(a0)?;
    potential.check(b0)?;
    let (a, b) = potential.domain();
    let (lo_thr, hi_thr) = potential.monotone_threshold();
    let f = |z: f64| potential.f(z).expect("probe inside domain");
    let b_m = outer_level(&f, b0, hi_thr, b, m)?;
    // mirror: g(z) = -f(-z) has the same structure on the right
    let g = |z: f64| -f(-z);
    let a_m = -outer_level(&g, -a0, -lo_thr, -a, m)?;
    Ok(SeparationInterval { a_m, b_m })
}

/// Smallest `z >= start` with `g > level` on `(z, end)`, assuming `g' > 0`
/// beyond `thr`.
fn outer_level(g: &impl Fn(f64) -> f64, start: f64, thr: f64, end: f64, level: f64) -> Result<f64> {
    // last sample <= level in the possibly non-monotone stretch [start, thr]
    let mut last_low: Option<(f64, f64)> = None;
    if start < thr {
        let h = (thr - start) / SEPARATION_SCAN as f64;
        for i in 0..=SEPARATION_SCAN {
            let z = start + i as f64 * h;
            if g(z) <= level {
                last_low = Some((z, (z + h).min(thr)));
            }
        }
    }
    let mono_start = start.max(thr);
    if g(mono_start) <= level {
        // root of g = level in the monotone tail
        let hi = if end.is_finite() {
            let mut k = 1;
            loop {
                let z = end - (end - mono_start) * 0.5f64.powi(k);
                if end - z <= 2.0 * BOUNDARY_GUARD {
                    return Err(Error::NoSeparationInterval(format!(
                        "f stays below {level} up to the resolvable distance from the domain endpoint"
                    )));
                }
                if g(z) > level {
                    break z;
                }
                k += 1;
            }
        } else {
            let mut step = 1.0;
            loop {
                let z = mono_start + step;
                if g(z) > level {
                    break z;
                }
                step *= 2.0;
                if step > 1e12 {
                    return Err(Error::NoSeparationInterval(format!(
                        "f stays below {level} on an unbounded tail"
                    )));
                }
            }
        };
        return Ok(refine(g, mono_start, hi, level));
    }
    match last_low {
        Some((z0, z1)) if z0 < thr => Ok(refine(g, z0, z1.max(z0), level)),
        _ => Ok(start),
    }
}

fn refine(g: &impl Fn(f64) -> f64, lo: f64, hi: f64, level: f64) -> f64 {
    let z = bisect(g, lo, hi, level);
    // Near a logarithmic endpoint one ulp of z can move g by more than the
    // tolerance; the bracket is then as tight as doubles allow.
    let ulp_jump = (g(z.next_up()) - g(z.next_down())).abs();
    debug_assert!((g(z) - level).abs() <= SEPARATION_TOL.max(1e-8 * level.abs()).max(ulp_jump));
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64)
    }

    #[test]
    fn regular_values() {
        let p = Potential::Regular;
        assert_eq!(p.eval(0.0).unwrap(), 0.25);
        assert_eq!(p.f(1.0).unwrap(), 0.0);
        assert_eq!(p.f(0.0).unwrap(), 0.0);
        assert_eq!(p.f_prime(0.0).unwrap(), -1.0);
    }

    #[test]
    fn logarithmic_values_and_guard() {
        let p = Potential::logarithmic(2.0).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert_eq!(p.f(0.0).unwrap(), 0.0);
        assert!(matches!(p.f(1.0), Err(Error::DomainViolation { .. })));
        assert!(p.f(1.0 - 1e-13).is_err());
        assert!(p.f(-0.999999).is_ok());
        assert!(Potential::logarithmic(0.9).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let pots = [
            Potential::Regular,
            Potential::logarithmic(2.0).unwrap(),
            Potential::custom(vec![0.0, 0.3, -1.0, 0.0, 0.5]).unwrap(),
        ];
        let h = 1e-6;
        for p in &pots {
            for s in sample(-0.9, 0.9, 37) {
                let fd1 = (p.f(s + h).unwrap() - p.f(s - h).unwrap()) / (2.0 * h);
                let d1 = p.f_prime(s).unwrap();
                assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(1.0), "{p:?} f' at {s}");
                let fd2 = (p.f_prime(s + h).unwrap() - p.f_prime(s - h).unwrap()) / (2.0 * h);
                let d2 = p.f_second(s).unwrap();
                assert!((fd2 - d2).abs() <= 1e-5 * d2.abs().max(1.0), "{p:?} f'' at {s}");
                let fd0 = (p.eval(s + h).unwrap() - p.eval(s - h).unwrap()) / (2.0 * h);
                let d0 = p.f(s).unwrap();
                assert!((fd0 - d0).abs() <= 1e-5 * d0.abs().max(1.0), "{p:?} F' at {s}");
            }
        }
    }

    #[test]
    fn regular_quadratic_lower_bound() {
        for s in sample(-10.0, 10.0, 2001) {
            assert!(Potential::Regular.eval(s).unwrap() >= s * s / 8.0 - 1.0);
        }
    }

    /// Composite Simpson on (3t^2 - 1)^+ split at the kink.
    fn f1_regular_oracle(s: f64) -> f64 {
        let k = 1.0 / 3f64.sqrt();
        if s.abs() <= k {
            return 0.0;
        }
        let (a, b) = (k, s.abs());
        let n = 2000;
        let h = (b - a) / n as f64;
        let g = |t: f64| 3.0 * t * t - 1.0;
        let mut acc = g(a) + g(b);
        for i in 1..n {
            acc += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        (acc * h / 3.0).copysign(s)
    }

    #[test]
    fn split_regular() {
        let p = Potential::Regular;
        assert_eq!(p.split_f(0.0).unwrap(), (0.0, 0.0));
        let (f1, f2) = p.split_f(1.0).unwrap();
        assert_relative_eq!(f1, 0.3849002, epsilon = 1e-7);
        assert_relative_eq!(f1, f1_regular_oracle(1.0), epsilon = 1e-10);
        assert_relative_eq!(f2, -f1, epsilon = 1e-14);
        for s in sample(-3.0, 3.0, 999) {
            let (f1, f2) = p.split_f(s).unwrap();
            assert!((f1 + f2 - p.f(s).unwrap()).abs() <= 1e-10);
            assert!((f1 - f1_regular_oracle(s)).abs() <= 1e-9);
        }
    }

    #[test]
    fn split_is_monotone_and_reconstructs() {
        let pots = [
            Potential::Regular,
            Potential::logarithmic(3.0).unwrap(),
            Potential::custom(vec![0.1, 0.0, -2.0, 0.1, 1.0]).unwrap(),
        ];
        for p in &pots {
            let mut prev = f64::NEG_INFINITY;
            for s in sample(-0.99, 0.99, 999) {
                let (f1, f2) = p.split_f(s).unwrap();
                assert!(f1 >= prev - 1e-12, "{p:?} not monotone at {s}");
                prev = f1;
                assert!((f1 + f2 - p.f(s).unwrap()).abs() <= 1e-10);
            }
            assert!(p.split_f(0.0).unwrap().0.abs() <= 1e-12);
        }
    }

    #[test]
    fn custom_split_matches_regular() {
        // F = 1/4 - 1/2 r^2 + 1/4 r^4 is the regular potential
        let c = Potential::custom(vec![0.25, 0.0, -0.5, 0.0, 0.25]).unwrap();
        for s in sample(-4.0, 4.0, 801) {
            let (a, _) = c.split_f(s).unwrap();
            let (b, _) = Potential::Regular.split_f(s).unwrap();
            assert!((a - b).abs() <= 1e-9, "at {s}: {a} vs {b}");
        }
    }

    #[test]
    fn proliferation_default() {
        let p = Proliferation::rational(0.8, 0.2).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.d1(0.0), 0.0);
        for s in sample(-10.0, 10.0, 400) {
            let v = p.eval(s);
            assert!((0.0..=p.sup_bound()).contains(&v));
            let h = 1e-6;
            let fd = (p.eval(s + h) - p.eval(s - h)) / (2.0 * h);
            assert!((fd - p.d1(s)).abs() < 1e-7);
            let fd2 = (p.d1(s + h) - p.d1(s - h)) / (2.0 * h);
            assert!((fd2 - p.d2(s)).abs() < 1e-6);
        }
        assert!(Proliferation::rational(-1.0, 0.0).is_err());
    }

    #[test]
    fn separation_regular() {
        // f = s^3 - s = 6 at s = 2
        let iv = separation_interval(&Potential::Regular, 6.0, -0.9, 0.9).unwrap();
        assert_relative_eq!(iv.b_m, 2.0, epsilon = 1e-10);
        assert_relative_eq!(iv.a_m, -2.0, epsilon = 1e-10);
        assert!((iv.b_m.powi(3) - iv.b_m - 6.0).abs() <= 1e-10);
    }

    #[test]
    fn separation_logarithmic_stays_inside() {
        let p = Potential::logarithmic(2.0).unwrap();
        let iv = separation_interval(&p, 20.0, -0.5, 0.5).unwrap();
        assert!(iv.b_m < 1.0 && iv.a_m > -1.0);
        for z in sample(iv.b_m + 1e-12, 1.0 - 1e-11, 500) {
            assert!(p.f(z).unwrap() > 20.0);
        }
        for z in sample(-1.0 + 1e-11, iv.a_m - 1e-12, 500) {
            assert!(p.f(z).unwrap() < -20.0);
        }
        // f = 50 only within ~1e-23 of the endpoint
        assert!(matches!(
            separation_interval(&p, 50.0, -0.5, 0.5),
            Err(Error::NoSeparationInterval(_))
        ));
    }

    #[test]
    fn separation_already_sufficient() {
        let iv = separation_interval(&Potential::Regular, 1.0, -1.5, 1.5).unwrap();
        assert_eq!(iv.b_m, 1.5);
        assert_eq!(iv.a_m, -1.5);
    }

    #[test]
    fn separation_non_monotone_stretch() {
        // f(-0.577) ~ 0.385 > M but f dips below M before the outer root
        let p = Potential::Regular;
        let iv = separation_interval(&p, 0.2, -0.6, -0.55).unwrap();
        for z in sample(iv.b_m + 1e-9, 5.0, 2000) {
            assert!(p.f(z).unwrap() > 0.2, "f({z}) <= M");
        }
        assert!(iv.b_m > 1.0);
    }
}
