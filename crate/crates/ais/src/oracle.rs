//! Deterministic quadrature oracle producing ground-truth cell masses.
//!
//! Piecewise-constant targets are integrated in closed form; everything else
//! goes through adaptive Simpson refinement (dyadic midpoint subdivision with
//! a Richardson stopping rule). The oracle never uses Monte Carlo, so it is an
//! independent check on the samplers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::targets::{Rectangle, TargetDensity};

/// Default relative tolerance for 1-D integration.
pub const DEFAULT_TOL_1D: f64 = 1e-10;
/// Default relative tolerance for 2-D integration.
pub const DEFAULT_TOL_2D: f64 = 1e-8;
/// Maximum dyadic refinement depth before giving up.
pub const MAX_DEPTH: u32 = 24;

/// Ground truth for a (target, partition) pair.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTable {
    #[serde(skip)]
    pub partition: Vec<Rectangle>,
    /// Unnormalized cell masses `Z_a`.
    pub z_a: Vec<f64>,
    /// Total mass `Z = Σ_a Z_a`.
    pub z: f64,
    /// Normalized masses `π_a = Z_a / Z`.
    pub pi_a: Vec<f64>,
    /// `π_a^(α) = ∫_cell π^α g_a^{1−α} dx`, present when an α was requested.
    pub alpha: Option<f64>,
    pub alpha_masses: Option<Vec<f64>>,
}

impl OracleTable {
    /// Builds a table directly from known masses (used by the synthetic-arms
    /// harness where the arm reward law is given analytically).
    pub fn from_masses(partition: Vec<Rectangle>, z_a: Vec<f64>) -> Result<Self> {
        let z: f64 = z_a.iter().sum();
        if !(z > 0.0) {
            return Err(Error::BadPartition("total mass must be positive".into()));
        }
        let pi_a = z_a.iter().map(|&m| m / z).collect();
        Ok(Self {
            partition,
            z_a,
            z,
            pi_a,
            alpha: None,
            alpha_masses: None,
        })
    }
}

struct Quad1d<'a> {
    f: &'a dyn Fn(f64) -> f64,
    abs_tol: f64,
    max_depth: u32,
    /// Subdivide at least this deep before trusting the Richardson stop;
    /// guards against narrow peaks falling between the dyadic probe points.
    min_depth: u32,
}

impl Quad1d<'_> {
    /// Adaptive Simpson on [a, b] with precomputed endpoint/midpoint values.
    fn refine(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> std::result::Result<f64, (f64, f64)> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let h = b - a;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth >= self.min_depth && delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth >= self.max_depth {
            return Err((left + right + delta / 15.0, delta.abs() / 15.0));
        }
        let l = self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1);
        let r = self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
        match (l, r) {
            (Ok(x), Ok(y)) => Ok(x + y),
            (l, r) => {
                let (x, ex) = l.map(|v| (v, 0.0)).unwrap_or_else(|e| e);
                let (y, ey) = r.map(|v| (v, 0.0)).unwrap_or_else(|e| e);
                Err((x + y, ex + ey))
            }
        }
    }

    fn integrate(&self, a: f64, b: f64) -> std::result::Result<f64, (f64, f64)> {
        let fa = (self.f)(a);
        let fb = (self.f)(b);
        let fm = (self.f)(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.refine(a, b, fa, fm, fb, whole, self.abs_tol, 0)
    }
}

/// Integrates `f` over `[a, b]`, splitting the range at the listed interior
/// discontinuities so that each adaptive pass sees a smooth integrand.
pub fn integrate_1d(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Config("quadrature tolerance must be positive".into()));
    }
    let mut edges = vec![a];
    for &bp in breaks {
        if bp > a && bp < b {
            edges.push(bp);
        }
    }
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());

    // First pass at a coarse absolute tolerance to fix the scale for the
    // relative stopping rule.
    let coarse: f64 = edges
        .windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (w[1] - w[0]) / 6.0 * (f(w[0]) + 4.0 * f(m) + f(w[1]))
        })
        .sum();
    let abs_tol = tol * coarse.abs().max(1.0);

    let mut total = 0.0;
    let mut err_bound = 0.0;
    let mut failed = false;
    for w in edges.windows(2) {
        // Nudge evaluations off the exact panel endpoints: with breakpoint
        // splitting the integrand is smooth in the open panel, but its value
        // at a shared breakpoint may belong to the neighbouring piece.
        let (a, b) = (w[0], w[1]);
        let eps = (b - a) * 1e-12;
        let g = move |x: f64| f(x.clamp(a + eps, b - eps));
        let q = Quad1d {
            f: &g,
            abs_tol,
            max_depth: MAX_DEPTH,
            min_depth: 6,
        };
        match q.integrate(w[0], w[1]) {
            Ok(v) => total += v,
            Err((v, e)) => {
                total += v;
                err_bound += e;
                failed = true;
            }
        }
    }
    if failed && err_bound > abs_tol.max(tol * total.abs()) {
        return Err(Error::OracleNonConvergence {
            max_depth: MAX_DEPTH,
            estimate: total,
            bound: err_bound,
        });
    }
    Ok(total)
}

fn integrate_generic(target: &TargetDensity, cell: &Rectangle, tol: f64, power: f64) -> Result<f64> {
    let apply = move |v: f64| if power == 1.0 { v } else { v.powf(power) };
    match target.dim() {
        1 => {
            let t = target.clone();
            let f = move |x: f64| apply(t.eval(&[x]));
            integrate_1d(&f, cell.lo()[0], cell.hi()[0], target.discontinuities(), tol)
        }
        2 => {
            // Tensor-grid adaptive Simpson: the outer integrand is itself an
            // adaptive 1-D integral over the second coordinate.
            let t = target.clone();
            let (y0, y1) = (cell.lo()[1], cell.hi()[1]);
            let inner_tol = tol * 0.1;
            let outer = move |x: f64| {
                let f_inner = |y: f64| apply(t.eval(&[x, y]));
                integrate_1d(&f_inner, y0, y1, &[], inner_tol).unwrap_or(f64::NAN)
            };
            let v = integrate_1d(&outer, cell.lo()[0], cell.hi()[0], &[], tol)?;
            if !v.is_finite() {
                return Err(Error::OracleNonConvergence {
                    max_depth: MAX_DEPTH,
                    estimate: v,
                    bound: f64::INFINITY,
                });
            }
            Ok(v)
        }
        d => Err(Error::Config(format!(
            "the quadrature oracle supports 1-D and 2-D targets only (got {d}-D)"
        ))),
    }
}

/// `∫_cell f(x) dx`, exact for piecewise-constant targets, adaptive otherwise.
pub fn integrate_cell(target: &TargetDensity, cell: &Rectangle, tol: f64) -> Result<f64> {
    if !cell.subset_of(target.domain()) {
        return Err(Error::Config(format!(
            "cell {cell} is not contained in the target domain {}",
            target.domain()
        )));
    }
    if let Some(spec) = target.piecewise() {
        return Ok(spec.integral(cell.lo()[0], cell.hi()[0]));
    }
    integrate_generic(target, cell, tol, 1.0)
}

/// `∫_cell f(x)^alpha dx` (used for the α-divergence cell masses).
pub fn integrate_cell_power(
    target: &TargetDensity,
    cell: &Rectangle,
    alpha: f64,
    tol: f64,
) -> Result<f64> {
    if let Some(spec) = target.piecewise() {
        let mut total = 0.0;
        let (a, b) = (cell.lo()[0], cell.hi()[0]);
        let mut edges = vec![a];
        for &bp in spec.breakpoints() {
            if bp > a && bp < b {
                edges.push(bp);
            }
        }
        edges.push(b);
        for w in edges.windows(2) {
            let level = spec.level_at(0.5 * (w[0] + w[1]));
            total += level.powf(alpha) * (w[1] - w[0]);
        }
        return Ok(total);
    }
    integrate_generic(target, cell, tol, alpha)
}

pub fn default_tol(dim: usize) -> f64 {
    if dim <= 1 {
        DEFAULT_TOL_1D
    } else {
        DEFAULT_TOL_2D
    }
}

pub fn check_partition(domain: &Rectangle, partition: &[Rectangle]) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::BadPartition("empty partition".into()));
    }
    let mut vol = 0.0;
    for (i, cell) in partition.iter().enumerate() {
        if !cell.subset_of(domain) {
            return Err(Error::BadPartition(format!(
                "cell {i} ({cell}) is not inside the domain {domain}"
            )));
        }
        vol += cell.volume();
    }
    let dvol = domain.volume();
    if ((vol - dvol) / dvol).abs() > 1e-9 {
        return Err(Error::BadPartition(format!(
            "cell volumes sum to {vol}, domain volume is {dvol}"
        )));
    }
    // Pairwise interior-overlap check.
    for i in 0..partition.len() {
        for j in (i + 1)..partition.len() {
            let (a, b) = (&partition[i], &partition[j]);
            let overlaps = (0..a.dim()).all(|d| {
                a.lo()[d] < b.hi()[d] - 1e-15 && b.lo()[d] < a.hi()[d] - 1e-15
            });
            if overlaps {
                return Err(Error::BadPartition(format!(
                    "cells {i} and {j} overlap"
                )));
            }
        }
    }
    Ok(())
}

/// Computes `Z_a`, `Z` and `π_a` (plus optional `π_a^(α)`) for a partition
/// with uniform subproposals.
pub fn oracle_table(
    target: &TargetDensity,
    partition: &[Rectangle],
    alpha: Option<f64>,
) -> Result<OracleTable> {
    check_partition(target.domain(), partition)?;
    let tol = default_tol(target.dim());
    let z_a: Vec<f64> = partition
        .iter()
        .map(|cell| integrate_cell(target, cell, tol))
        .collect::<Result<_>>()?;
    let z: f64 = z_a.iter().sum();
    if !(z > 0.0) {
        return Err(Error::BadPartition(
            "target has zero total mass on the domain".into(),
        ));
    }
    let pi_a: Vec<f64> = z_a.iter().map(|&m| m / z).collect();

    let alpha_masses = match alpha {
        Some(a) if a != 1.0 => {
            // π_a^(α) = Z^{-α} · vol_a^{α−1} · ∫_cell f^α dx  (uniform g_a)
            let masses: Vec<f64> = partition
                .iter()
                .map(|cell| {
                    let fa = integrate_cell_power(target, cell, a, tol)?;
                    Ok(z.powf(-a) * cell.volume().powf(a - 1.0) * fa)
                })
                .collect::<Result<_>>()?;
            Some(masses)
        }
        Some(_) => Some(pi_a.clone()),
        None => None,
    };

    Ok(OracleTable {
        partition: partition.to_vec(),
        z_a,
        z,
        pi_a,
        alpha,
        alpha_masses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{builtin_target, Builtin, PiecewiseConstantSpec};

    fn exp_flat_closed_form() -> (f64, f64) {
        // ∫_(0,0.25] 0.5 dx = 0.125;  ∫_(0.25,1) e^{10(x-1)} dx = (1 - e^{-7.5})/10
        (0.125, (1.0 - (-7.5f64).exp()) / 10.0)
    }

    #[test]
    fn uniform_cell_volume() {
        let t = crate::targets::piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![1.0]).unwrap(),
            Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let cell = Rectangle::interval(0.2, 0.5).unwrap();
        assert!((integrate_cell(&t, &cell, 1e-10).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn exp_flat_cells() {
        let t = builtin_target(&Builtin::ExpFlat).unwrap();
        let (z1, z2) = exp_flat_closed_form();
        let left = Rectangle::interval(0.0, 0.25).unwrap();
        let right = Rectangle::interval(0.25, 1.0).unwrap();
        let full = Rectangle::interval(0.0, 1.0).unwrap();
        assert!((integrate_cell(&t, &left, 1e-10).unwrap() - z1).abs() < 1e-11);
        assert!((integrate_cell(&t, &right, 1e-10).unwrap() - z2).abs() < 1e-11);
        assert!((integrate_cell(&t, &full, 1e-10).unwrap() - (z1 + z2)).abs() < 1e-10);
        assert!((z2 - 0.09994469).abs() < 1e-7);
    }

    #[test]
    fn exp_flat_table() {
        let t = builtin_target(&Builtin::ExpFlat).unwrap();
        let part = vec![
            Rectangle::interval(0.0, 0.25).unwrap(),
            Rectangle::interval(0.25, 1.0).unwrap(),
        ];
        let table = oracle_table(&t, &part, None).unwrap();
        let (z1, z2) = exp_flat_closed_form();
        assert!((table.z - (z1 + z2)).abs() < 1e-10);
        assert!((table.pi_a[0] - z1 / (z1 + z2)).abs() < 1e-9);
        assert!((table.pi_a[0] - 0.5557).abs() < 1e-3);
        assert!((table.pi_a[1] - 0.4443).abs() < 1e-3);
        assert!((table.pi_a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_four_cells() {
        let t = crate::targets::piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![2.0]).unwrap(),
            Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let part: Vec<Rectangle> = (0..4)
            .map(|i| Rectangle::interval(0.25 * i as f64, 0.25 * (i + 1) as f64).unwrap())
            .collect();
        let table = oracle_table(&t, &part, Some(2.0)).unwrap();
        for &p in &table.pi_a {
            assert!((p - 0.25).abs() < 1e-12);
        }
        let am = table.alpha_masses.unwrap();
        for w in am.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn additivity_under_split() {
        let t = builtin_target(&Builtin::ExpFlat).unwrap();
        let parent = Rectangle::interval(0.1, 0.9).unwrap();
        let (l, r) = parent.split(0);
        let tol = 1e-10;
        let whole = integrate_cell(&t, &parent, tol).unwrap();
        let sum = integrate_cell(&t, &l, tol).unwrap() + integrate_cell(&t, &r, tol).unwrap();
        assert!((whole - sum).abs() < 2.0 * tol * whole.max(1.0));
    }

    #[test]
    fn determinism() {
        let t = builtin_target(&Builtin::Banana { domain: None }).unwrap();
        let cell = Rectangle::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
        let a = integrate_cell(&t, &cell, 1e-8).unwrap();
        let b = integrate_cell(&t, &cell, 1e-8).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn banana_mass_is_covered_by_default_domain() {
        // Z over the default rectangle vs a much larger one; the default
        // should capture essentially all of the mass.
        let t = builtin_target(&Builtin::Banana { domain: None }).unwrap();
        let z_default = integrate_cell(&t, &t.domain().clone(), 1e-8).unwrap();
        let big = Rectangle::new(vec![-60.0, -40.0], vec![60.0, 40.0]).unwrap();
        let t_big = builtin_target(&Builtin::Banana { domain: Some(big.clone()) }).unwrap();
        let z_big = integrate_cell(&t_big, &big, 1e-8).unwrap();
        // The Gaussian x1 tail beyond ±20 carries ≈5e-4 of the mass, so the
        // default rectangle covers all but O(1e-3) of it.
        let deficit = (z_big - z_default) / z_big;
        assert!(deficit > 0.0 && deficit < 2e-3, "deficit = {deficit}");
    }

    #[test]
    fn bad_partition_rejected() {
        let t = builtin_target(&Builtin::ExpFlat).unwrap();
        let gap = vec![
            Rectangle::interval(0.0, 0.2).unwrap(),
            Rectangle::interval(0.3, 1.0).unwrap(),
        ];
        assert!(matches!(
            oracle_table(&t, &gap, None),
            Err(Error::BadPartition(_))
        ));
        let overlap = vec![
            Rectangle::interval(0.0, 0.6).unwrap(),
            Rectangle::interval(0.4, 1.0).unwrap(),
        ];
        assert!(matches!(
            oracle_table(&t, &overlap, None),
            Err(Error::BadPartition(_))
        ));
    }

    #[test]
    fn quadrature_vs_closed_form_on_steps() {
        // Force the adaptive path by wrapping the step targets as generic
        // closures (with declared discontinuities) and compare against the
        // exact piecewise integrals.
        let cases = vec![
            builtin_target(&Builtin::VaryTau { delta: 4.0 }).unwrap(),
            builtin_target(&Builtin::VaryK { k: 10 }).unwrap(),
            builtin_target(&Builtin::VaryRatio { k: 10, delta: 0.05 }).unwrap(),
            builtin_target(&Builtin::PerArmTau).unwrap(),
        ];
        for t in cases {
            let spec = t.piecewise().unwrap().clone();
            let spec2 = spec.clone();
            let generic = TargetDensity::from_fn_with_breaks(
                "wrapped",
                t.domain().clone(),
                t.sup_bound(),
                spec.breakpoints().to_vec(),
                move |x| spec2.level_at(x[0]),
            );
            for k in [1usize, 3, 10] {
                for i in 0..k {
                    let cell = Rectangle::interval(i as f64 / k as f64, (i + 1) as f64 / k as f64)
                        .unwrap();
                    let exact = spec.integral(cell.lo()[0], cell.hi()[0]);
                    let quad = integrate_cell(&generic, &cell, 1e-10).unwrap();
                    if exact > 0.0 {
                        assert!(
                            ((quad - exact) / exact).abs() < 1e-8,
                            "{}: cell {cell} quad={quad} exact={exact}",
                            t.name()
                        );
                    }
                }
            }
        }
    }
}
