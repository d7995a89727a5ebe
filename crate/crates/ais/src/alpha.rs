//! α-divergence generalization: transformed localized weights, the
//! α-proposal update and the α-regret.
//!
//! `alpha = 1` recovers the KL machinery exactly (same code path, identity
//! transforms), and `alpha = 2` corresponds to the variance of the
//! importance weights.
//!
//! Internally the regret follows the appendix convention `Z_a := Z·π_a^(α)`,
//! which shadows the plain cell masses; the oracle's `alpha_masses` supply
//! `π_a^(α)` directly.

use crate::daisee::compute_proposal;
use crate::error::{Error, Result};
use crate::oracle::OracleTable;
use crate::partition::ArmState;

/// Admissible range is (0, 2].
pub fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 2], got {alpha}"
        )));
    }
    Ok(())
}

/// Transformed localized weight `Y^(α) = (f/g)^α`; identity at `alpha = 1`.
pub fn alpha_weight(f_val: f64, g_density: f64, alpha: f64) -> f64 {
    let y = f_val / g_density;
    if alpha == 1.0 {
        y
    } else {
        y.powf(alpha)
    }
}

/// `q_a ∝ (Ẑ_a + σ_a)^{1/α}`; dispatches to the plain proposal at `alpha = 1`.
pub fn alpha_proposal(states: &[ArmState], boosts: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if alpha == 1.0 {
        return compute_proposal(states, boosts);
    }
    validate_alpha(alpha)?;
    let mut num = Vec::with_capacity(states.len());
    let mut total = 0.0;
    for (s, &b) in states.iter().zip(boosts) {
        let base = s.z_hat()? + b;
        if !(base >= 0.0) || !base.is_finite() {
            return Err(Error::DegenerateProposal);
        }
        let v = base.powf(1.0 / alpha);
        num.push(v);
        total += v;
    }
    if !total.is_finite() {
        return Err(Error::DegenerateProposal);
    }
    if total == 0.0 {
        // No information yet: uniform fallback, matching the α=1 path.
        return Ok(vec![1.0 / states.len() as f64; states.len()]);
    }
    for v in &mut num {
        *v /= total;
    }
    Ok(num)
}

fn appendix_masses(table: &OracleTable) -> Result<Vec<f64>> {
    let masses = table.alpha_masses.as_ref().ok_or_else(|| {
        Error::Config("oracle table was built without alpha masses".into())
    })?;
    Ok(masses.iter().map(|&m| table.z * m).collect())
}

/// α-regret of a proposal vector against the oracle:
/// `R(q) = (1/(α(α−1)Z))·(Σ_a q_a^{1−α} Z_a − (Σ_a Z_a^{1/α})^α)`
/// with `Z_a = Z·π_a^(α)`.
///
/// A zero `q_a` with `α > 1` yields `+∞` rather than an error.
pub fn alpha_regret(q: &[f64], table: &OracleTable, alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    if alpha == 1.0 {
        return Err(Error::Config(
            "alpha_regret requires alpha != 1; use kl_regret for the KL case".into(),
        ));
    }
    let z_a = appendix_masses(table)?;
    debug_assert_eq!(q.len(), z_a.len());
    let mut dot = 0.0;
    for (&qa, &za) in q.iter().zip(&z_a) {
        if za == 0.0 {
            continue;
        }
        if qa == 0.0 {
            if alpha > 1.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        dot += qa.powf(1.0 - alpha) * za;
    }
    let opt: f64 = z_a.iter().map(|&za| za.powf(1.0 / alpha)).sum::<f64>().powf(alpha);
    Ok((dot - opt) / (alpha * (alpha - 1.0) * table.z))
}

/// Optimal α-proposal `q*_a ∝ (π_a^(α))^{1/α}` from the oracle masses.
pub fn alpha_optimal_q(table: &OracleTable, alpha: f64) -> Result<Vec<f64>> {
    validate_alpha(alpha)?;
    let masses = table.alpha_masses.as_ref().ok_or_else(|| {
        Error::Config("oracle table was built without alpha masses".into())
    })?;
    let mut num: Vec<f64> = masses.iter().map(|&m| m.powf(1.0 / alpha)).collect();
    let total: f64 = num.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateProposal);
    }
    for v in &mut num {
        *v /= total;
    }
    Ok(num)
}

/// α-loss `L_α(q) = (1/(α(1−α)))·(1 − Σ_a q_a^{1−α} π_a^(α))` of a
/// piecewise-uniform proposal. At `α = 2` this equals half the variance of
/// the importance weights, `½∫(π/q − 1)² q dx`.
pub fn alpha_loss(q: &[f64], table: &OracleTable, alpha: f64) -> Result<f64> {
    validate_alpha(alpha)?;
    if alpha == 1.0 {
        return Err(Error::Config(
            "alpha_loss requires alpha != 1; use full_kl for the KL case".into(),
        ));
    }
    let masses = table.alpha_masses.as_ref().ok_or_else(|| {
        Error::Config("oracle table was built without alpha masses".into())
    })?;
    let mut dot = 0.0;
    for (&qa, &m) in q.iter().zip(masses) {
        if m == 0.0 {
            continue;
        }
        if qa == 0.0 {
            return Ok(if alpha > 1.0 { f64::INFINITY } else { f64::NEG_INFINITY });
        }
        dot += qa.powf(1.0 - alpha) * m;
    }
    Ok((1.0 - dot) / (alpha * (1.0 - alpha)))
}
