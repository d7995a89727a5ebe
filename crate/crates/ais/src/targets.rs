//! Pointwise-evaluable unnormalized target densities on rectangular domains.
//!
//! Besides the user-facing piecewise-constant constructor, this module holds
//! the registry of builtin experiment targets. All step-family builtins are
//! represented as [`PiecewiseConstantSpec`]s so that the oracle can integrate
//! them in closed form.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Axis-aligned rectangle with per-dimension bounds, `lo[d] < hi[d]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rectangle {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rectangle {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Config(format!(
                "rectangle bounds must be nonempty and of equal length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for d in 0..lo.len() {
            if !(lo[d] < hi[d]) || !lo[d].is_finite() || !hi[d].is_finite() {
                return Err(Error::Config(format!(
                    "rectangle requires lo[{d}] < hi[{d}], got [{}, {}]",
                    lo[d], hi[d]
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// 1-D interval.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h - l)
            .product()
    }

    /// Closed-bounds containment, used for domain membership checks.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&xi, (&l, &h))| xi >= l && xi <= h)
    }

    /// Whether `self` is contained in `other` (closed bounds).
    pub fn subset_of(&self, other: &Rectangle) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|d| self.lo[d] >= other.lo[d] - 1e-12 && self.hi[d] <= other.hi[d] + 1e-12)
    }

    /// Split into two equal halves along `dim`: `[lo, mid)` and `[mid, hi]`.
    pub fn split(&self, dim: usize) -> (Rectangle, Rectangle) {
        assert!(dim < self.dim());
        let mid = 0.5 * (self.lo[dim] + self.hi[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[dim] = mid;
        right.lo[dim] = mid;
        (left, right)
    }
}

impl fmt::Display for Rectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in 0..self.dim() {
            if d > 0 {
                write!(f, "x")?;
            }
            write!(f, "[{}, {}]", self.lo[d], self.hi[d])?;
        }
        Ok(())
    }
}

/// 1-D piecewise-constant density: `levels[i]` on the piece between
/// `breakpoints[i-1]` (exclusive) and `breakpoints[i]` (inclusive).
///
/// Pieces are right-closed, so a breakpoint belongs to the piece to its left;
/// this matches the indicator conventions of the step targets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PiecewiseConstantSpec {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
}

impl PiecewiseConstantSpec {
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return Err(Error::Config(format!(
                "piecewise spec needs levels.len() == breakpoints.len() + 1, got {} and {}",
                levels.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "piecewise breakpoints must be strictly increasing".into(),
            ));
        }
        if levels.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config(
                "piecewise levels must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            levels,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Level of the piece containing `x` (right-closed pieces).
    pub fn level_at(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b < x);
        self.levels[idx]
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let mut total = 0.0;
        let mut left = a;
        for (i, &bp) in self.breakpoints.iter().enumerate() {
            if bp <= left {
                continue;
            }
            if bp >= b {
                break;
            }
            total += self.levels[i] * (bp - left);
            left = bp;
        }
        if left < b {
            let idx = self.breakpoints.partition_point(|&bp| bp < b);
            // `left` sits on the previous breakpoint (or at `a`), so every
            // point of (left, b] shares the level at `b`.
            total += self.levels[idx.min(self.levels.len() - 1)] * (b - left);
        }
        total
    }
}

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum TargetKind {
    Piecewise(PiecewiseConstantSpec),
    Generic {
        eval: EvalFn,
        /// Known 1-D discontinuity locations, used by the adaptive quadrature
        /// to split the integration range.
        breaks: Vec<f64>,
    },
}

/// Unnormalized target density `f(x) >= 0` on a rectangular domain.
#[derive(Clone)]
pub struct TargetDensity {
    name: String,
    domain: Rectangle,
    sup_bound: Option<f64>,
    kind: TargetKind,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl TargetDensity {
    pub fn from_fn<F>(name: &str, domain: Rectangle, sup_bound: Option<f64>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            domain,
            sup_bound,
            kind: TargetKind::Generic {
                eval: Arc::new(eval),
                breaks: Vec::new(),
            },
        }
    }

    /// Like [`from_fn`](Self::from_fn) but declaring 1-D discontinuity points.
    pub fn from_fn_with_breaks<F>(
        name: &str,
        domain: Rectangle,
        sup_bound: Option<f64>,
        breaks: Vec<f64>,
        eval: F,
    ) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            domain,
            sup_bound,
            kind: TargetKind::Generic {
                eval: Arc::new(eval),
                breaks,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Rectangle {
        &self.domain
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    /// The piecewise-constant representation, when this target has one.
    pub fn piecewise(&self) -> Option<&PiecewiseConstantSpec> {
        match &self.kind {
            TargetKind::Piecewise(spec) => Some(spec),
            TargetKind::Generic { .. } => None,
        }
    }

    /// Known 1-D discontinuities (empty for smooth targets).
    pub fn discontinuities(&self) -> &[f64] {
        match &self.kind {
            TargetKind::Piecewise(spec) => spec.breakpoints(),
            TargetKind::Generic { breaks, .. } => breaks,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            TargetKind::Piecewise(spec) => spec.level_at(x[0]),
            TargetKind::Generic { eval, .. } => eval(x),
        }
    }
}

/// Builds a density from a piecewise-constant spec; `sup_bound` is the
/// largest level.
pub fn piecewise_target(spec: PiecewiseConstantSpec, domain: Rectangle) -> Result<TargetDensity> {
    if domain.dim() != 1 {
        return Err(Error::Config(
            "piecewise targets are one-dimensional".into(),
        ));
    }
    let (lo, hi) = (domain.lo()[0], domain.hi()[0]);
    if spec
        .breakpoints()
        .iter()
        .any(|&b| !(b > lo && b < hi))
    {
        return Err(Error::Config(format!(
            "piecewise breakpoints must lie strictly inside the domain ({lo}, {hi})"
        )));
    }
    let sup = spec.levels().iter().cloned().fold(0.0, f64::max);
    Ok(TargetDensity {
        name: "piecewise".into(),
        domain,
        sup_bound: Some(sup),
        kind: TargetKind::Piecewise(spec),
    })
}

/// Builtin experiment targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    /// Generic two-level step on (0,1): `hi` on (0, split], `lo` above.
    Step1d { split: f64, hi: f64, lo: f64 },
    /// `(10+δ)1(0<x≤0.05) + (10−δ)1(0.05<x≤0.1) + 0.1·1(0.1<x<1)`.
    VaryTau { delta: f64 },
    /// `3K·1(0<x≤0.2) + K·1(0.2<x<1)`.
    VaryK { k: u32 },
    /// Literal four-indicator mass-ratio target; see [`vary_ratio_value`].
    VaryRatio { k: u32, delta: f64 },
    /// `20·1(0<x≤0.25) + 3·1(0.25<x≤0.5) + 9·1(0.5<x≤0.99) + 1·1(0.99<x<1)`.
    PerArmTau,
    /// `exp(10(x−1))` on (0.25, 1), `0.5` on (0, 0.25].
    ExpFlat,
    /// `exp{−0.5(0.03·x1² + (x2 + 0.03(x1²−100))²)}`.
    Banana { domain: Option<Rectangle> },
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Step1d { .. } => "step-1d",
            Builtin::VaryTau { .. } => "vary-tau",
            Builtin::VaryK { .. } => "vary-k",
            Builtin::VaryRatio { .. } => "vary-ratio",
            Builtin::PerArmTau => "per-arm-tau",
            Builtin::ExpFlat => "exp-flat",
            Builtin::Banana { .. } => "banana",
        }
    }
}

/// Pointwise value of the vary-ratio target, written exactly as the sum of
/// its four indicator terms.
///
/// `frac(10x)` is the fractional part of `10x`. For `K != 10` the indicator
/// arguments do not align with the K-cell partition; the formula is applied
/// literally and the resulting breakpoints are collected per 0.1-period.
pub fn vary_ratio_value(k: u32, delta: f64, x: f64) -> f64 {
    let kf = f64::from(k);
    let inv_k = 1.0 / kf;
    let thresh = delta / (kf - 1.0);
    let frac = (10.0 * x).fract();
    let mut f = 0.0;
    if x > 0.0 && x <= inv_k - delta {
        f += 10.0;
    }
    if x > inv_k - delta && x <= inv_k {
        f += 0.1;
    }
    if frac < thresh {
        f += 10.0;
    } else {
        f += 0.1;
    }
    f
}

fn vary_ratio_spec(k: u32, delta: f64) -> Result<PiecewiseConstantSpec> {
    let kf = f64::from(k);
    let thresh = delta / (kf - 1.0);
    let mut breaks: Vec<f64> = vec![1.0 / kf - delta, 1.0 / kf];
    for j in 0..10 {
        let base = f64::from(j) / 10.0;
        breaks.push(base);
        if thresh > 0.0 && thresh < 1.0 {
            breaks.push(base + thresh / 10.0);
        }
    }
    breaks.retain(|&b| b > 0.0 && b < 1.0);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut edges = vec![0.0];
    edges.extend_from_slice(&breaks);
    edges.push(1.0);
    let levels: Vec<f64> = edges
        .windows(2)
        .map(|w| vary_ratio_value(k, delta, 0.5 * (w[0] + w[1])))
        .collect();
    PiecewiseConstantSpec::new(breaks, levels)
}

/// Constructs a builtin target.
pub fn builtin_target(builtin: &Builtin) -> Result<TargetDensity> {
    let unit = Rectangle::interval(0.0, 1.0)?;
    match builtin {
        Builtin::Step1d { split, hi, lo } => {
            if !(*split > 0.0 && *split < 1.0) || *hi < 0.0 || *lo < 0.0 {
                return Err(Error::Config(format!(
                    "step-1d requires split in (0,1) and nonnegative levels, got split={split}, hi={hi}, lo={lo}"
                )));
            }
            let spec = PiecewiseConstantSpec::new(vec![*split], vec![*hi, *lo])?;
            let mut t = piecewise_target(spec, unit)?;
            t.name = "step-1d".into();
            Ok(t)
        }
        Builtin::VaryTau { delta } => {
            if *delta < 0.0 || *delta >= 10.0 {
                return Err(Error::Config(format!(
                    "vary-tau requires 0 <= delta < 10, got {delta}"
                )));
            }
            if !(0.001..=8.0).contains(delta) {
                log::warn!("vary-tau delta {delta} is outside the experiment range [0.001, 8]");
            }
            let spec = PiecewiseConstantSpec::new(
                vec![0.05, 0.1],
                vec![10.0 + delta, 10.0 - delta, 0.1],
            )?;
            let mut t = piecewise_target(spec, unit)?;
            t.name = "vary-tau".into();
            Ok(t)
        }
        Builtin::VaryK { k } => {
            if *k < 1 {
                return Err(Error::Config("vary-k requires k >= 1".into()));
            }
            let kf = f64::from(*k);
            let spec = PiecewiseConstantSpec::new(vec![0.2], vec![3.0 * kf, kf])?;
            let mut t = piecewise_target(spec, unit)?;
            t.name = "vary-k".into();
            Ok(t)
        }
        Builtin::VaryRatio { k, delta } => {
            if *k < 2 {
                return Err(Error::Config("vary-ratio requires k >= 2".into()));
            }
            if !(*delta > 0.0 && *delta < 1.0 / f64::from(*k)) {
                return Err(Error::Config(format!(
                    "vary-ratio requires 0 < delta < 1/k, got delta={delta}, k={k}"
                )));
            }
            let spec = vary_ratio_spec(*k, *delta)?;
            let mut t = piecewise_target(spec, unit)?;
            t.name = "vary-ratio".into();
            Ok(t)
        }
        Builtin::PerArmTau => {
            let spec = PiecewiseConstantSpec::new(
                vec![0.25, 0.5, 0.99],
                vec![20.0, 3.0, 9.0, 1.0],
            )?;
            let mut t = piecewise_target(spec, unit)?;
            t.name = "per-arm-tau".into();
            Ok(t)
        }
        Builtin::ExpFlat => Ok(TargetDensity::from_fn_with_breaks(
            "exp-flat",
            unit,
            Some(1.0),
            vec![0.25],
            |x| {
                if x[0] <= 0.25 {
                    0.5
                } else {
                    (10.0 * (x[0] - 1.0)).exp()
                }
            },
        )),
        Builtin::Banana { domain } => {
            let domain = match domain {
                Some(r) => {
                    if r.dim() != 2 {
                        return Err(Error::Config("banana domain must be 2-D".into()));
                    }
                    r.clone()
                }
                None => Rectangle::new(vec![-20.0, -10.0], vec![20.0, 10.0])?,
            };
            Ok(TargetDensity::from_fn("banana", domain, Some(1.0), |x| {
                let (x1, x2) = (x[0], x[1]);
                let b = x2 + 0.03 * (x1 * x1 - 100.0);
                (-0.5 * (0.03 * x1 * x1 + b * b)).exp()
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_flat_values() {
        let t = builtin_target(&Builtin::ExpFlat).unwrap();
        assert_eq!(t.eval(&[0.1]), 0.5);
        // left-closed at the breakpoint
        assert_eq!(t.eval(&[0.25]), 0.5);
        assert!((t.eval(&[1.0]) - 1.0).abs() < 1e-15);
        assert!((t.eval(&[0.9999999]) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn banana_mode_ridge() {
        let t = builtin_target(&Builtin::Banana { domain: None }).unwrap();
        // exponent vanishes at (0, -3): x2 + 0.03(x1^2 - 100) = -3 + 0.03*(-100) ... = 0
        assert!((t.eval(&[0.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!(t.eval(&[0.0, -3.0]) < 1.0);
    }

    #[test]
    fn piecewise_eval_and_integral() {
        let spec = PiecewiseConstantSpec::new(vec![0.5], vec![1.0, 1.0]).unwrap();
        let t = piecewise_target(spec, Rectangle::interval(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(t.eval(&[0.3]), 1.0);
        assert_eq!(t.eval(&[0.7]), 1.0);

        let spec = PiecewiseConstantSpec::new(vec![0.2], vec![30.0, 10.0]).unwrap();
        assert_eq!(spec.level_at(0.1), 30.0);
        assert_eq!(spec.level_at(0.2), 30.0);
        assert_eq!(spec.level_at(0.21), 10.0);
        assert!((spec.integral(0.0, 1.0) - (30.0 * 0.2 + 10.0 * 0.8)).abs() < 1e-12);
        assert!((spec.integral(0.1, 0.3) - (30.0 * 0.1 + 10.0 * 0.1)).abs() < 1e-12);

        let t = builtin_target(&Builtin::PerArmTau).unwrap();
        assert_eq!(t.eval(&[0.1]), 20.0);
        assert_eq!(t.eval(&[0.995]), 1.0);
    }

    #[test]
    fn nonnegative_on_probe_grid() {
        let builtins = vec![
            builtin_target(&Builtin::Step1d { split: 0.2, hi: 3.0, lo: 1.0 }).unwrap(),
            builtin_target(&Builtin::VaryTau { delta: 4.0 }).unwrap(),
            builtin_target(&Builtin::VaryK { k: 10 }).unwrap(),
            builtin_target(&Builtin::VaryRatio { k: 10, delta: 0.05 }).unwrap(),
            builtin_target(&Builtin::PerArmTau).unwrap(),
            builtin_target(&Builtin::ExpFlat).unwrap(),
            builtin_target(&Builtin::Banana { domain: None }).unwrap(),
        ];
        for t in &builtins {
            let dom = t.domain().clone();
            // golden-ratio quasi-random probes
            let mut u = vec![0.5f64; t.dim()];
            let alphas = [0.6180339887498949f64, 0.7548776662466927];
            for _ in 0..10_000 {
                let mut x = Vec::with_capacity(t.dim());
                for d in 0..t.dim() {
                    u[d] = (u[d] + alphas[d]).fract();
                    x.push(dom.lo()[d] + u[d] * (dom.hi()[d] - dom.lo()[d]));
                }
                let v = t.eval(&x);
                assert!(v >= 0.0, "{} produced negative value {v} at {x:?}", t.name());
                if let Some(sup) = t.sup_bound() {
                    assert!(v <= sup + 1e-12, "{} exceeds sup at {x:?}", t.name());
                }
            }
        }
    }

    #[test]
    fn vary_ratio_literal_matches_spec_levels() {
        let t = builtin_target(&Builtin::VaryRatio { k: 10, delta: 0.05 }).unwrap();
        // Probe points avoid exact breakpoints, where the literal frac-based
        // formula and the right-closed piecewise form differ (measure zero).
        for &x in &[0.01, 0.049, 0.051, 0.09, 0.11, 0.302, 0.77, 0.999] {
            assert_eq!(t.eval(&[x]), vary_ratio_value(10, 0.05, x), "x={x}");
        }
    }

    #[test]
    fn vary_k_spec_value() {
        let t = builtin_target(&Builtin::VaryK { k: 10 }).unwrap();
        assert_eq!(t.eval(&[0.1]), 30.0);
    }

    #[test]
    fn rectangle_invariants() {
        assert!(Rectangle::interval(1.0, 1.0).is_err());
        assert!(Rectangle::new(vec![0.0], vec![1.0, 2.0]).is_err());
        let r = Rectangle::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(r.volume(), 6.0);
        let (l, rr) = r.split(1);
        assert_eq!(l.hi()[1], 1.5);
        assert_eq!(rr.lo()[1], 1.5);
        assert!(l.subset_of(&r) && rr.subset_of(&r));
    }
}
