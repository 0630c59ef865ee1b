//! Composite Simpson integration on uniform grids and the moment integrals
//! `I(r, s) = ∫ f^r g^s dx` consumed by the variance formulas.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-degenerate interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    lo: f64,
    hi: f64,
}

impl SupportInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid(format!("support [{lo}, {hi}] is not finite")));
        }
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "support [{lo}, {hi}] is degenerate (need lo < hi)"
            )));
        }
        Ok(SupportInterval { lo, hi })
    }

    /// `[-a, a]`.
    pub fn symmetric(a: f64) -> Result<Self> {
        SupportInterval::new(-a, a)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Smallest interval covering both.
    pub fn union(&self, other: &SupportInterval) -> SupportInterval {
        SupportInterval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Image under `x -> c x + d`.
    pub fn affine(&self, c: f64, d: f64) -> Result<SupportInterval> {
        let (a, b) = (c * self.lo + d, c * self.hi + d);
        SupportInterval::new(a.min(b), a.max(b))
    }
}

impl fmt::Display for SupportInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// `m` equally spaced nodes spanning a support, endpoints included.
/// `m` is odd and at least 3 so composite Simpson applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    support: SupportInterval,
    points: usize,
}

impl UniformGrid {
    pub fn new(support: SupportInterval, points: usize) -> Result<Self> {
        check_simpson_count(points)?;
        Ok(UniformGrid { support, points })
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.support.width() / (self.points - 1) as f64
    }

    /// The k-th node; the last node is exactly `hi`.
    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.points {
            self.support.hi
        } else {
            self.support.lo + k as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.node(k)).collect()
    }

    /// Tabulates `f` on the nodes.
    pub fn tabulate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.points).map(|k| f(self.node(k))).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.points {
            return Err(Error::invalid(format!(
                "{} values supplied for a {}-point grid",
                values.len(),
                self.points
            )));
        }
        integrate(values, self.support)
    }
}

fn check_simpson_count(m: usize) -> Result<()> {
    if m < 3 || m.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "composite Simpson needs an odd number of points >= 3, got {m}"
        )));
    }
    Ok(())
}

/// Composite Simpson rule for values on a uniform grid spanning `support`.
pub fn integrate(values: &[f64], support: SupportInterval) -> Result<f64> {
    let m = values.len();
    check_simpson_count(m)?;
    let step = support.width() / (m - 1) as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for (k, v) in values.iter().enumerate().take(m - 1).skip(1) {
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    Ok(step / 3.0 * (values[0] + values[m - 1] + 4.0 * odd + 2.0 * even))
}

/// An exponent pair `(r, s)` stored as exact halves `(2r, 2s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MomentKey {
    r2: u8,
    s2: u8,
}

impl MomentKey {
    /// From doubled exponents: `halves(5, 1)` is `(5/2, 1/2)`.
    pub const fn halves(r2: u8, s2: u8) -> Self {
        MomentKey { r2, s2 }
    }

    /// From real exponents; each must be a nonnegative multiple of 1/2.
    pub fn new(r: f64, s: f64) -> Result<Self> {
        let to_half = |e: f64| -> Result<u8> {
            let d = 2.0 * e;
            if e >= 0.0 && d <= 255.0 && d.fract() == 0.0 {
                Ok(d as u8)
            } else {
                Err(Error::invalid(format!(
                    "moment exponent {e} is not a nonnegative multiple of 1/2"
                )))
            }
        };
        Ok(MomentKey {
            r2: to_half(r)?,
            s2: to_half(s)?,
        })
    }

    pub fn r(&self) -> f64 {
        self.r2 as f64 / 2.0
    }

    pub fn s(&self) -> f64 {
        self.s2 as f64 / 2.0
    }

    pub fn swapped(&self) -> Self {
        MomentKey {
            r2: self.s2,
            s2: self.r2,
        }
    }
}

impl fmt::Display for MomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let part = |h: u8| {
            if h.is_multiple_of(2) {
                format!("{}", h / 2)
            } else {
                format!("{h}/2")
            }
        };
        write!(f, "({},{})", part(self.r2), part(self.s2))
    }
}

/// `v^(h/2)` with negative inputs clamped to zero.
#[inline]
fn half_power(v: f64, h: u8) -> f64 {
    let v = v.max(0.0);
    let whole = v.powi((h / 2) as i32);
    if h % 2 == 1 {
        whole * v.sqrt()
    } else {
        whole
    }
}

/// `∫ f^r g^s` by Simpson; `fvals` and `gvals` sit on the same grid over `support`.
pub fn moment_integral(
    fvals: &[f64],
    gvals: &[f64],
    key: MomentKey,
    support: SupportInterval,
) -> Result<f64> {
    if fvals.len() != gvals.len() {
        return Err(Error::invalid(format!(
            "f and g are on different grids ({} vs {} points)",
            fvals.len(),
            gvals.len()
        )));
    }
    let integrand: Vec<f64> = fvals
        .iter()
        .zip(gvals)
        .map(|(&f, &g)| half_power(f, key.r2) * half_power(g, key.s2))
        .collect();
    integrate(&integrand, support)
}

/// Pairs needed by the Pianka and MacArthur-Levins variance formulas.
pub const REQUIRED_PAIRS: [MomentKey; 9] = [
    MomentKey::halves(2, 2),
    MomentKey::halves(4, 0),
    MomentKey::halves(0, 4),
    MomentKey::halves(6, 0),
    MomentKey::halves(0, 6),
    MomentKey::halves(4, 2),
    MomentKey::halves(2, 4),
    MomentKey::halves(5, 1),
    MomentKey::halves(1, 5),
];

/// Mass and length diagnostics stored alongside the required pairs.
pub const DIAGNOSTIC_PAIRS: [MomentKey; 3] = [
    MomentKey::halves(0, 0),
    MomentKey::halves(2, 0),
    MomentKey::halves(0, 2),
];

/// Moment integrals of one density pair on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    entries: BTreeMap<MomentKey, f64>,
    support: SupportInterval,
    points: usize,
}

impl MomentTable {
    /// Builds the table from two densities tabulated on a common grid.
    pub fn from_values(fvals: &[f64], gvals: &[f64], grid: &UniformGrid) -> Result<Self> {
        if fvals.len() != grid.len() || gvals.len() != grid.len() {
            return Err(Error::invalid(format!(
                "density values ({} and {}) do not match the {}-point grid",
                fvals.len(),
                gvals.len(),
                grid.len()
            )));
        }
        let mut entries = BTreeMap::new();
        for key in REQUIRED_PAIRS.iter().chain(&DIAGNOSTIC_PAIRS) {
            entries.insert(*key, moment_integral(fvals, gvals, *key, grid.support())?);
        }
        Ok(MomentTable {
            entries,
            support: grid.support(),
            points: grid.len(),
        })
    }

    /// Tabulates two density functions on `grid` and builds the table.
    pub fn from_fns(
        f: impl Fn(f64) -> f64,
        g: impl Fn(f64) -> f64,
        grid: &UniformGrid,
    ) -> Result<Self> {
        MomentTable::from_values(&grid.tabulate(f), &grid.tabulate(g), grid)
    }

    /// A table with caller-supplied entries, for exercising the formulas directly.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (MomentKey, f64)>,
        support: SupportInterval,
        points: usize,
    ) -> Self {
        MomentTable {
            entries: entries.into_iter().collect(),
            support,
            points,
        }
    }

    pub fn get(&self, key: MomentKey) -> Result<f64> {
        self.entries
            .get(&key)
            .copied()
            .ok_or_else(|| Error::invalid(format!("moment table has no entry I{key}")))
    }

    /// `I(r, s)` with integer or half-integer exponents.
    pub fn i(&self, r: f64, s: f64) -> Result<f64> {
        self.get(MomentKey::new(r, s)?)
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn grid_points(&self) -> usize {
        self.points
    }

    pub fn entries(&self) -> impl Iterator<Item = (MomentKey, f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// The table of `(g, f)`: every `I(r, s)` becomes `I(s, r)`.
    pub fn swapped(&self) -> MomentTable {
        MomentTable {
            entries: self.entries.iter().map(|(k, v)| (k.swapped(), *v)).collect(),
            support: self.support,
            points: self.points,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> SupportInterval {
        SupportInterval::new(0.0, 1.0).unwrap()
    }

    fn sym1() -> SupportInterval {
        SupportInterval::symmetric(1.0).unwrap()
    }

    #[test]
    fn support_validation() {
        assert!(SupportInterval::new(1.0, 1.0).is_err());
        assert!(SupportInterval::new(2.0, 1.0).is_err());
        assert!(SupportInterval::new(f64::NEG_INFINITY, 1.0).is_err());
        let s = SupportInterval::new(-1.0, 2.0).unwrap();
        assert_eq!(s.width(), 3.0);
        let t = s.affine(-2.0, 1.0).unwrap();
        assert_eq!((t.lo(), t.hi()), (-3.0, 3.0));
    }

    #[test]
    fn grid_nodes() {
        let g = UniformGrid::new(sym1(), 3).unwrap();
        assert_eq!(g.nodes(), vec![-1.0, 0.0, 1.0]);
        assert!(UniformGrid::new(sym1(), 4).is_err());
        assert!(UniformGrid::new(sym1(), 1).is_err());
    }

    #[test]
    fn simpson_constant_and_polynomials() {
        let g = UniformGrid::new(unit(), 101).unwrap();
        assert!((g.integrate(&g.tabulate(|_| 1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!((g.integrate(&g.tabulate(|x| x * x)).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        assert!((g.integrate(&g.tabulate(|x| x * x * x)).unwrap() - 0.25).abs() < 1e-12);
        let e = UniformGrid::new(sym1(), 1001).unwrap();
        let epan = e.tabulate(|x| 0.75 * (1.0 - x * x));
        assert!((e.integrate(&epan).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_rejects_even_counts() {
        assert!(integrate(&[1.0, 1.0], unit()).is_err());
        assert!(integrate(&[1.0; 4], unit()).is_err());
        assert!(integrate(&[1.0], unit()).is_err());
    }

    #[test]
    fn moment_keys() {
        let k = MomentKey::new(2.5, 0.5).unwrap();
        assert_eq!(k, MomentKey::halves(5, 1));
        assert_eq!(k.swapped(), MomentKey::halves(1, 5));
        assert_eq!(k.to_string(), "(5/2,1/2)");
        assert_eq!(MomentKey::halves(2, 0).to_string(), "(1,0)");
        assert!(MomentKey::new(0.3, 1.0).is_err());
        assert!(MomentKey::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn moment_integral_constants() {
        let g = UniformGrid::new(sym1(), 101).unwrap();
        let half = g.tabulate(|_| 0.5);
        let i11 = moment_integral(&half, &half, MomentKey::halves(2, 2), g.support()).unwrap();
        assert!((i11 - 0.5).abs() < 1e-14);
        let i10 = moment_integral(&half, &half, MomentKey::halves(2, 0), g.support()).unwrap();
        assert!((i10 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn moment_integral_rejects_mismatched_grids() {
        let err = moment_integral(&[1.0; 5], &[1.0; 7], MomentKey::halves(2, 2), unit());
        assert!(err.is_err());
    }

    #[test]
    fn fractional_powers_clamp_negatives() {
        let g = UniformGrid::new(unit(), 5).unwrap();
        let f = vec![-1.0, 1.0, 1.0, 1.0, -1.0];
        let ones = vec![1.0; 5];
        let v = moment_integral(&f, &ones, MomentKey::halves(1, 0), g.support()).unwrap();
        assert!(v.is_finite());
        // Clamped integrand is [0, 1, 1, 1, 0].
        let expected = integrate(&[0.0, 1.0, 1.0, 1.0, 0.0], g.support()).unwrap();
        assert_eq!(v, expected);
    }

    #[test]
    fn uniform_table() {
        let g = UniformGrid::new(sym1(), 1001).unwrap();
        let t = MomentTable::from_fns(|_| 0.5, |_| 0.5, &g).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(t.i(2.0, 0.0).unwrap(), 0.5));
        assert!(close(t.i(0.0, 2.0).unwrap(), 0.5));
        assert!(close(t.i(3.0, 0.0).unwrap(), 0.25));
        assert!(close(t.i(0.0, 3.0).unwrap(), 0.25));
        assert!(close(t.i(1.0, 1.0).unwrap(), 0.5));
        assert!(close(t.i(0.0, 0.0).unwrap(), 2.0));
        assert!(close(t.i(1.0, 0.0).unwrap(), 1.0));
        assert!(t.i(1.5, 0.0).is_err());
    }

    #[test]
    fn identical_densities_give_symmetric_table() {
        let g = UniformGrid::new(SupportInterval::new(-2.0, 3.0).unwrap(), 401).unwrap();
        let f = |x: f64| (1.0 + 0.3 * x.sin()) / 5.0;
        let t = MomentTable::from_fns(f, f, &g).unwrap();
        for (key, v) in t.entries() {
            assert_eq!(v, t.get(key.swapped()).unwrap(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn swap_and_cauchy_schwarz(
            a in 0.01f64..2.0, b in -1.0f64..1.0, c in 0.01f64..2.0, d in -1.0f64..1.0,
        ) {
            let grid = UniformGrid::new(SupportInterval::new(-1.0, 1.0).unwrap(), 201).unwrap();
            let f = move |x: f64| a + b * x * x;
            let g = move |x: f64| (c + d * x).abs();
            let t = MomentTable::from_fns(f, g, &grid).unwrap();
            let s = MomentTable::from_fns(g, f, &grid).unwrap();
            for (key, v) in t.entries() {
                prop_assert_eq!(s.get(key.swapped()).unwrap(), v);
                prop_assert_eq!(t.swapped().get(key.swapped()).unwrap(), v);
            }
            let i11 = t.i(1.0, 1.0).unwrap();
            let bound = t.i(2.0, 0.0).unwrap() * t.i(0.0, 2.0).unwrap();
            prop_assert!(i11 * i11 <= bound * (1.0 + 1e-12));
        }
    }
}
