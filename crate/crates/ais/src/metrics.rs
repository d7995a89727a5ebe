//! Importance-sampling estimators, KL regret and cumulative-regret
//! bookkeeping against the oracle.

use crate::error::{Error, Result};
use crate::oracle::{self, OracleTable};
use crate::partition::KahanSum;
use crate::targets::{Rectangle, TargetDensity};

/// Per-iteration trace entry.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub t: u64,
    pub arm: usize,
    pub x: Vec<f64>,
    /// Localized weight `Y = f(x)/g_a(x)`.
    pub y: f64,
    /// Running mixture-weighted estimate of `Z`.
    pub z_hat_total: f64,
    pub instant_regret: Option<f64>,
    pub cum_regret: Option<f64>,
    /// Number of leaves (1 + the fixed K for flat partitions).
    pub partition_count: usize,
}

/// `Σ_a π_a ln(π_a/q_a)`, with `0·ln(0/q) := 0`. Returns `+∞` when some
/// `q_a = 0` has `π_a > 0`.
pub fn kl_regret(pi: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(pi.len(), q.len());
    let mut total = 0.0;
    for (&p, &qa) in pi.iter().zip(q) {
        if p == 0.0 {
            continue;
        }
        if qa == 0.0 {
            return f64::INFINITY;
        }
        total += p * (p / qa).ln();
    }
    total
}

/// Self-normalized importance-sampling estimates from mixture-weighted
/// samples `(w_t, x_t)` with `w_t = f(x_t)/q_t(x_t)`.
pub struct IsEstimates {
    /// Unbiased estimate `Z ≈ (1/T) Σ w_t`.
    pub z_hat: f64,
    w_sum: f64,
    samples: Vec<(f64, Vec<f64>)>,
}

pub fn is_estimates(samples: &[(f64, Vec<f64>)]) -> Result<IsEstimates> {
    if samples.is_empty() {
        return Err(Error::EstimatorUndefined);
    }
    let mut sum = KahanSum::default();
    for (w, _) in samples {
        if !w.is_finite() {
            return Err(Error::EstimatorUndefined);
        }
        sum.add(*w);
    }
    let w_sum = sum.value();
    if w_sum == 0.0 {
        return Err(Error::EstimatorUndefined);
    }
    Ok(IsEstimates {
        z_hat: w_sum / samples.len() as f64,
        w_sum,
        samples: samples.to_vec(),
    })
}

impl IsEstimates {
    /// `E_π[φ] ≈ Σ w_t φ(x_t) / Σ w_t` (biased but consistent).
    pub fn expect<F: Fn(&[f64]) -> f64>(&self, phi: F) -> f64 {
        let mut num = KahanSum::default();
        for (w, x) in &self.samples {
            num.add(w * phi(x));
        }
        num.value() / self.w_sum
    }
}

/// Full `KL(π‖q_t)` for a piecewise-uniform proposal over `partition`:
/// the within-cell term `Σ_a ∫_cell π ln(π/(π_a g_a))` plus the mass term
/// `Σ_a π_a ln(π_a/q_a)`.
///
/// Unlike [`kl_regret`] the within-cell term differs between partitions, so
/// this is the quantity to use for cross-partition comparisons.
pub fn full_kl(
    target: &TargetDensity,
    partition: &[Rectangle],
    q: &[f64],
    table: &OracleTable,
) -> Result<f64> {
    debug_assert_eq!(partition.len(), q.len());
    let z = table.z;
    let tol = oracle::default_tol(target.dim());
    let mut within = 0.0;
    for (a, cell) in partition.iter().enumerate() {
        let pi_a = table.pi_a[a];
        if pi_a == 0.0 {
            continue;
        }
        // ∫_cell π ln(π/(π_a g_a))
        //   = (1/Z)∫ f ln f − π_a ln Z + π_a ln vol_a − π_a ln π_a
        let flnf = integrate_f_ln_f(target, cell, tol)?;
        within += flnf / z - pi_a * z.ln() + pi_a * cell.volume().ln() - pi_a * pi_a.ln();
    }
    Ok(within + kl_regret(&table.pi_a, q))
}

fn integrate_f_ln_f(target: &TargetDensity, cell: &Rectangle, tol: f64) -> Result<f64> {
    if let Some(spec) = target.piecewise() {
        // Exact: Σ pieces level·ln(level)·width, with 0 ln 0 = 0.
        let (a, b) = (cell.lo()[0], cell.hi()[0]);
        let mut edges = vec![a];
        for &bp in spec.breakpoints() {
            if bp > a && bp < b {
                edges.push(bp);
            }
        }
        edges.push(b);
        let mut total = 0.0;
        for w in edges.windows(2) {
            let level = spec.level_at(0.5 * (w[0] + w[1]));
            if level > 0.0 {
                total += level * level.ln() * (w[1] - w[0]);
            }
        }
        return Ok(total);
    }
    match target.dim() {
        1 => {
            let t = target.clone();
            let f = move |x: f64| {
                let v = t.eval(&[x]);
                if v > 0.0 {
                    v * v.ln()
                } else {
                    0.0
                }
            };
            oracle::integrate_1d(&f, cell.lo()[0], cell.hi()[0], target.discontinuities(), tol)
        }
        _ => Err(Error::Config(
            "full_kl quadrature supports 1-D targets (piecewise exact path covers the rest)"
                .into(),
        )),
    }
}

/// Running cumulative-regret accumulator (compensated; nondecreasing for
/// nonnegative instantaneous regrets).
#[derive(Debug, Clone, Default)]
pub struct RegretAccumulator {
    sum: KahanSum,
}

impl RegretAccumulator {
    pub fn push(&mut self, instant: f64) -> f64 {
        debug_assert!(instant >= -1e-12, "negative instantaneous regret {instant}");
        self.sum.add(instant);
        self.sum.value()
    }

    pub fn total(&self) -> f64 {
        self.sum.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::oracle_table;
    use crate::targets::{builtin_target, piecewise_target, Builtin, PiecewiseConstantSpec};

    #[test]
    fn kl_basics() {
        assert_eq!(kl_regret(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(kl_regret(&[1.0], &[1.0]), 0.0);
        let r = kl_regret(&[0.75, 0.25], &[0.5, 0.5]);
        let expect = 0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln();
        assert!((r - expect).abs() < 1e-12);
        assert!((r - 0.130812).abs() < 1e-6);
        assert!(kl_regret(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
        // 0 ln 0 convention
        assert_eq!(kl_regret(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn is_estimator_basics() {
        let samples: Vec<(f64, Vec<f64>)> =
            (0..100).map(|i| (1.0, vec![i as f64 / 100.0])).collect();
        let est = is_estimates(&samples).unwrap();
        assert_eq!(est.z_hat, 1.0);
        assert_eq!(est.expect(|_| 1.0), 1.0);
        assert!(is_estimates(&[]).is_err());
        assert!(is_estimates(&[(0.0, vec![0.0])]).is_err());
    }

    #[test]
    fn full_kl_zero_cases() {
        // Uniform target, single cell, q = (1): proposal equals target.
        let t = piecewise_target(
            PiecewiseConstantSpec::new(vec![], vec![2.0]).unwrap(),
            crate::targets::Rectangle::interval(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let part = vec![crate::targets::Rectangle::interval(0.0, 1.0).unwrap()];
        let table = oracle_table(&t, &part, None).unwrap();
        let kl = full_kl(&t, &part, &[1.0], &table).unwrap();
        assert!(kl.abs() < 1e-12);
    }

    #[test]
    fn full_kl_vanishes_on_aligned_refinement() {
        // Piecewise target with cells aligned to its pieces and q at the
        // optimum: g_a matches π on each constant cell, so the KL is 0.
        let t = builtin_target(&Builtin::VaryK { k: 10 }).unwrap();
        let part = vec![
            crate::targets::Rectangle::interval(0.0, 0.2).unwrap(),
            crate::targets::Rectangle::interval(0.2, 1.0).unwrap(),
        ];
        let table = oracle_table(&t, &part, None).unwrap();
        let kl = full_kl(&t, &part, &table.pi_a.clone(), &table).unwrap();
        assert!(kl.abs() < 1e-10, "kl = {kl}");
    }

    #[test]
    fn full_kl_second_term_vanishes_at_optimum() {
        let t = builtin_target(&Builtin::ExpFlat).unwrap();
        let part = vec![
            crate::targets::Rectangle::interval(0.0, 0.25).unwrap(),
            crate::targets::Rectangle::interval(0.25, 1.0).unwrap(),
        ];
        let table = oracle_table(&t, &part, None).unwrap();
        let at_opt = full_kl(&t, &part, &table.pi_a.clone(), &table).unwrap();
        let off_opt = full_kl(&t, &part, &[0.5, 0.5], &table).unwrap();
        assert!(at_opt >= 0.0);
        let mass_term = kl_regret(&table.pi_a, &[0.5, 0.5]);
        assert!((off_opt - at_opt - mass_term).abs() < 1e-9);
    }

    #[test]
    fn refinement_never_hurts_optimum() {
        let t = builtin_target(&Builtin::PerArmTau).unwrap();
        let coarse: Vec<_> = (0..2)
            .map(|i| crate::targets::Rectangle::interval(0.5 * i as f64, 0.5 * (i + 1) as f64).unwrap())
            .collect();
        let fine: Vec<_> = (0..4)
            .map(|i| crate::targets::Rectangle::interval(0.25 * i as f64, 0.25 * (i + 1) as f64).unwrap())
            .collect();
        let tc = oracle_table(&t, &coarse, None).unwrap();
        let tf = oracle_table(&t, &fine, None).unwrap();
        let klc = full_kl(&t, &coarse, &tc.pi_a.clone(), &tc).unwrap();
        let klf = full_kl(&t, &fine, &tf.pi_a.clone(), &tf).unwrap();
        assert!(klf <= klc + 1e-12, "refined {klf} vs coarse {klc}");
    }

    #[test]
    fn cum_regret_nondecreasing() {
        let mut acc = RegretAccumulator::default();
        let mut prev = 0.0;
        for i in 0..100 {
            let cur = acc.push(1.0 / (i + 1) as f64);
            assert!(cur >= prev);
            prev = cur;
        }
    }
}
