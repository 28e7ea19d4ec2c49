//! Dense real polynomials in one and two variables, with the bracketed
//! root isolation used everywhere a switching-line event has to be located.

use std::fmt;

/// Tolerance used when refining an isolated root bracket.
pub const TOL_ROOT: f64 = 1e-12;

/// A univariate polynomial with real coefficients, stored dense in
/// ascending degree order (`coeffs[k]` multiplies `x^k`).
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(
            coeffs.iter().all(|c| c.is_finite()),
            "polynomial coefficients must be finite"
        );
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        Poly::new(vec![0.0, 1.0])
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(&c) if c == 0.0) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// Antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut out = Vec::with_capacity(self.coeffs.len() + 1);
        out.push(0.0);
        for (k, &c) in self.coeffs.iter().enumerate() {
            out.push(c / (k + 1) as f64);
        }
        Poly::new(out)
    }

    /// Definite integral over `[a, b]`, exact up to rounding.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let anti = self.antiderivative();
        anti.eval(b) - anti.eval(a)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (k, &c) in self.coeffs.iter().enumerate() {
            out[k] += c;
        }
        for (k, &c) in other.coeffs.iter().enumerate() {
            out[k] += c;
        }
        Poly::new(out)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// Shift by a constant offset: `p + c`.
    pub fn add_constant(&self, c: f64) -> Poly {
        self.add(&Poly::constant(c))
    }

    /// `(x - r)` convenience factor.
    pub fn linear_root(r: f64) -> Poly {
        Poly::new(vec![-r, 1.0])
    }

    /// All isolated roots of the polynomial on `[a, b]`, ascending.
    ///
    /// Sign-change roots are found by bracketed bisection on a subdivision
    /// grid; even-multiplicity roots (touch points with no sign change) are
    /// recovered from the roots of the derivative where `|p|` vanishes.
    /// Roots closer together than the subdivision step may be merged; the
    /// scenario polynomials keep their roots well separated.
    pub fn roots_on(&self, a: f64, b: f64) -> Vec<RootOnInterval> {
        isolate_roots(self, a, b)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { "-" } else { "+" })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            let a = c.abs();
            match k {
                0 => write!(f, "{a}")?,
                1 if a == 1.0 => write!(f, "x")?,
                1 => write!(f, "{a}*x")?,
                _ if a == 1.0 => write!(f, "x^{k}")?,
                _ => write!(f, "{a}*x^{k}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// A root located on an interval, annotated with how it was detected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootOnInterval {
    pub x: f64,
    /// True when the polynomial changes sign across the root (odd
    /// multiplicity); false for touch roots recovered from the derivative.
    pub sign_change: bool,
}

/// Bisect a bracket `[lo, hi]` with `p(lo)` and `p(hi)` of opposite sign
/// down to `TOL_ROOT` width (or machine limit).
pub fn bisect_root(p: &Poly, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = p.eval(lo);
    let fhi = p.eval(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo * fhi < 0.0, "bisect_root needs a sign bracket");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= TOL_ROOT || mid == lo || mid == hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

fn isolate_roots(p: &Poly, a: f64, b: f64) -> Vec<RootOnInterval> {
    if p.is_zero() || a >= b {
        return vec![];
    }
    if p.degree() == Some(0) {
        return vec![];
    }
    let scale = (b - a).max(1.0);
    let merge_tol = 1e-9 * scale;
    // Subdivision fine enough for every scenario polynomial (root gaps are
    // macroscopic); degree-adaptive so user fields behave too.
    let n = 64.max(16 * p.coeffs.len());
    let step = (b - a) / n as f64;
    let mut found: Vec<RootOnInterval> = Vec::new();

    // Parity of a root landed exactly on the grid, probed just off it.
    let parity = |x: f64| -> bool {
        let eps = step * 1e-3;
        let l = p.eval((x - eps).max(a - eps));
        let r = p.eval((x + eps).min(b + eps));
        l * r < 0.0
    };

    let mut x0 = a;
    let mut f0 = p.eval(x0);
    for k in 1..=n {
        let x1 = if k == n { b } else { a + step * k as f64 };
        let f1 = p.eval(x1);
        if f0 == 0.0 {
            push_root(&mut found, x0, parity(x0), merge_tol);
        } else if f0 * f1 < 0.0 {
            let r = bisect_root(p, x0, x1);
            push_root(&mut found, r, true, merge_tol);
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == 0.0 {
        push_root(&mut found, b, parity(b), merge_tol);
    }

    // Touch roots: stationary points where the value also vanishes.
    let dp = p.derivative();
    if !dp.is_zero() && dp.degree().unwrap_or(0) >= 1 {
        let value_tol = value_tolerance(p, a, b);
        for st in isolate_roots(&dp, a, b) {
            if p.eval(st.x).abs() <= value_tol {
                push_root(&mut found, st.x, false, merge_tol);
            }
        }
    }
    found.sort_by(|u, v| u.x.partial_cmp(&v.x).unwrap());
    found
}

fn value_tolerance(p: &Poly, a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs()).max(1.0);
    let mut scale = 0.0f64;
    for (k, &c) in p.coeffs().iter().enumerate() {
        scale += c.abs() * m.powi(k as i32);
    }
    1e-10 * scale.max(1.0)
}

fn push_root(found: &mut Vec<RootOnInterval>, x: f64, sign_change: bool, merge_tol: f64) {
    for r in found.iter_mut() {
        if (r.x - x).abs() <= merge_tol {
            r.sign_change |= sign_change;
            return;
        }
    }
    found.push(RootOnInterval { x, sign_change });
}

/// A bivariate polynomial in `(x, y)`, stored dense by total degree:
/// `coeffs[i][j]` multiplies `x^i * y^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly2 {
    coeffs: Vec<Vec<f64>>,
}

impl Poly2 {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Self {
        assert!(
            coeffs.iter().flatten().all(|c| c.is_finite()),
            "polynomial coefficients must be finite"
        );
        let mut p = Poly2 { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly2 { coeffs: vec![] }
    }

    pub fn constant(c: f64) -> Self {
        Poly2::new(vec![vec![c]])
    }

    /// Build from `(x_degree, y_degree, coefficient)` terms.
    pub fn from_terms(terms: &[(usize, usize, f64)]) -> Self {
        let mut coeffs: Vec<Vec<f64>> = vec![];
        for &(i, j, c) in terms {
            if coeffs.len() <= i {
                coeffs.resize(i + 1, vec![]);
            }
            if coeffs[i].len() <= j {
                coeffs[i].resize(j + 1, 0.0);
            }
            coeffs[i][j] += c;
        }
        Poly2::new(coeffs)
    }

    /// Lift a univariate polynomial in `x`.
    pub fn from_poly_x(p: &Poly) -> Self {
        Poly2::new(p.coeffs().iter().map(|&c| vec![c]).collect())
    }

    pub fn terms(&self) -> Vec<(usize, usize, f64)> {
        let mut out = vec![];
        for (i, row) in self.coeffs.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    out.push((i, j, c));
                }
            }
        }
        out
    }

    fn trim(&mut self) {
        for row in &mut self.coeffs {
            while matches!(row.last(), Some(&c) if c == 0.0) {
                row.pop();
            }
        }
        while matches!(self.coeffs.last(), Some(r) if r.is_empty()) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|r| r.is_empty())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for row in self.coeffs.iter().rev() {
            let row_val = row.iter().rev().fold(0.0, |a, &c| a * y + c);
            acc = acc * x + row_val;
        }
        acc
    }

    pub fn dx(&self) -> Poly2 {
        if self.coeffs.len() <= 1 {
            return Poly2::zero();
        }
        Poly2::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, row)| row.iter().map(|&c| c * i as f64).collect())
                .collect(),
        )
    }

    pub fn dy(&self) -> Poly2 {
        Poly2::new(
            self.coeffs
                .iter()
                .map(|row| {
                    if row.len() <= 1 {
                        vec![]
                    } else {
                        row.iter()
                            .enumerate()
                            .skip(1)
                            .map(|(j, &c)| c * j as f64)
                            .collect()
                    }
                })
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly2) -> Poly2 {
        let ni = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![vec![]; ni];
        for (i, row) in out.iter_mut().enumerate() {
            let a = self.coeffs.get(i).map(|r| r.as_slice()).unwrap_or(&[]);
            let b = other.coeffs.get(i).map(|r| r.as_slice()).unwrap_or(&[]);
            let nj = a.len().max(b.len());
            row.resize(nj, 0.0);
            for j in 0..nj {
                row[j] = a.get(j).copied().unwrap_or(0.0) + b.get(j).copied().unwrap_or(0.0);
            }
        }
        Poly2::new(out)
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        if self.is_zero() || other.is_zero() {
            return Poly2::zero();
        }
        let ni = self.coeffs.len() + other.coeffs.len() - 1;
        let nj = self.coeffs.iter().map(|r| r.len()).max().unwrap_or(0)
            + other.coeffs.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut out = vec![vec![0.0; nj]; ni];
        for (i1, r1) in self.coeffs.iter().enumerate() {
            for (j1, &c1) in r1.iter().enumerate() {
                if c1 == 0.0 {
                    continue;
                }
                for (i2, r2) in other.coeffs.iter().enumerate() {
                    for (j2, &c2) in r2.iter().enumerate() {
                        out[i1 + i2][j1 + j2] += c1 * c2;
                    }
                }
            }
        }
        Poly2::new(out)
    }

    pub fn scale(&self, s: f64) -> Poly2 {
        Poly2::new(
            self.coeffs
                .iter()
                .map(|row| row.iter().map(|&c| c * s).collect())
                .collect(),
        )
    }

    /// Restriction to the switching line: the univariate `p(x, 0)`.
    pub fn at_y0(&self) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .map(|row| row.first().copied().unwrap_or(0.0))
                .collect(),
        )
    }

    /// True when the polynomial does not involve `y`.
    pub fn independent_of_y(&self) -> bool {
        self.coeffs.iter().all(|row| row.len() <= 1)
    }

    /// The constant value if the polynomial is constant.
    pub fn as_constant(&self) -> Option<f64> {
        match self.coeffs.len() {
            0 => Some(0.0),
            1 if self.coeffs[0].len() <= 1 => {
                Some(self.coeffs[0].first().copied().unwrap_or(0.0))
            }
            _ => None,
        }
    }
}

/// Product of linear factors `(x - r)` for each root, times `scale`,
/// returned as a univariate polynomial.
pub fn poly_from_roots(scale: f64, roots: &[f64]) -> Poly {
    let mut p = Poly::constant(scale);
    for &r in roots {
        p = p.mul(&Poly::linear_root(r));
    }
    p
}
