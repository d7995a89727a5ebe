//! JSON configuration schemas for runs and sweeps.

use serde::{Deserialize, Serialize};

use crate::daisee::{BoostForm, BoostSpec};
use crate::error::{Error, Result};
use crate::hidaisee::{MassMode, TauRule};
use crate::partition::TauSpec;
use crate::targets::{self, Builtin, PiecewiseConstantSpec, Rectangle, TargetDensity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainSpec {
    pub fn build(&self) -> Result<Rectangle> {
        Rectangle::new(self.lo.clone(), self.hi.clone())
    }

    pub fn from_rect(r: &Rectangle) -> Self {
        Self { lo: r.lo().to_vec(), hi: r.hi().to_vec() }
    }
}

/// Free-form per-family parameters of a built-in target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TargetParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
}

/// Target specification: `{"family": ..., "params": {...}}`, or the explicit
/// piecewise form `{"family": "piecewise", "breakpoints": [...], "levels":
/// [...], "domain": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<TargetParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
}

impl TargetSpec {
    pub fn family(family: &str) -> Self {
        Self {
            family: family.to_string(),
            params: None,
            breakpoints: None,
            levels: None,
            domain: None,
        }
    }

    pub fn with_params(family: &str, params: TargetParams) -> Self {
        Self { params: Some(params), ..Self::family(family) }
    }

    pub fn build(&self) -> Result<TargetDensity> {
        let p = self.params.clone().unwrap_or_default();
        let missing = |f: &str| {
            Error::Config(format!("target family {} requires params.{f}", self.family))
        };
        let builtin = match self.family.as_str() {
            "piecewise" => {
                let breaks = self
                    .breakpoints
                    .clone()
                    .ok_or_else(|| Error::Config("piecewise target requires breakpoints".into()))?;
                let levels = self
                    .levels
                    .clone()
                    .ok_or_else(|| Error::Config("piecewise target requires levels".into()))?;
                let domain = self
                    .domain
                    .as_ref()
                    .ok_or_else(|| Error::Config("piecewise target requires domain".into()))?
                    .build()?;
                let spec = PiecewiseConstantSpec::new(breaks, levels)?;
                return targets::piecewise_target(spec, domain);
            }
            "step-1d" => Builtin::Step1d {
                split: p.split.ok_or_else(|| missing("split"))?,
                hi: p.hi.ok_or_else(|| missing("hi"))?,
                lo: p.lo.ok_or_else(|| missing("lo"))?,
            },
            "vary-tau" => Builtin::VaryTau { delta: p.delta.ok_or_else(|| missing("delta"))? },
            "vary-k" => Builtin::VaryK { k: p.k.ok_or_else(|| missing("k"))? },
            "vary-ratio" => Builtin::VaryRatio {
                k: p.k.ok_or_else(|| missing("k"))?,
                delta: p.delta.ok_or_else(|| missing("delta"))?,
            },
            "per-arm-tau" => Builtin::PerArmTau,
            "exp-flat" => Builtin::ExpFlat,
            "banana" => Builtin::Banana {
                domain: p.domain.as_ref().map(|d| d.build()).transpose()?,
            },
            other => {
                return Err(Error::UnknownTarget(other.to_string()));
            }
        };
        targets::builtin_target(&builtin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Daisee,
    Alpha,
    Hidaisee,
    SyntheticArms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostConfig {
    /// One of `ucb_sqrt`, `power`, `log_over_n`, `inverse_n`, `none`.
    pub form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_true(v: &bool) -> bool {
    *v
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_one(v: &f64) -> bool {
    *v == 1.0
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { form: "ucb_sqrt".into(), exponent: None, scale: 1.0 }
    }
}

impl BoostConfig {
    pub fn build(&self) -> Result<BoostSpec> {
        let form = match self.form.as_str() {
            "ucb_sqrt" => BoostForm::UcbSqrt,
            "power" => BoostForm::Power(self.exponent.ok_or_else(|| {
                Error::Config("boost form `power` requires an exponent".into())
            })?),
            "log_over_n" => BoostForm::LogOverN,
            "inverse_n" => BoostForm::InverseN,
            "none" => BoostForm::None,
            other => {
                return Err(Error::Config(format!("unknown boost form {other}")));
            }
        };
        BoostSpec::new(form, self.scale)
    }
}

/// τ assignment: a shared scalar, explicit per-arm values, or the
/// `(M/2)·vol` auto rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauConfig {
    Shared(f64),
    PerArm(Vec<f64>),
    Auto,
}

impl TauConfig {
    pub fn build(&self) -> TauSpec {
        match self {
            TauConfig::Shared(t) => TauSpec::Shared(*t),
            TauConfig::PerArm(v) => TauSpec::PerArm(v.clone()),
            TauConfig::Auto => TauSpec::AutoFromSup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    /// Fixed partition size (daisee/alpha/synthetic-arms).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauConfig>,
    #[serde(default)]
    pub boost: BoostConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Total number of draws, including the K initialization draws.
    pub t: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub regret_tracking: bool,
    /// When false the proposal stays frozen uniform (fixed-proposal mode,
    /// used for unbiasedness checks).
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub adapt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ess_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<u64>,
    /// `halve` (default) or `constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_rule: Option<String>,
    /// `exact` (default) or `lazy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_mode: Option<String>,
    /// Output file stem; defaults to the mode name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_prefix: Option<String>,
}

impl RunConfig {
    pub fn out_prefix(&self) -> String {
        self.out_prefix.clone().unwrap_or_else(|| {
            match self.mode {
                Mode::Daisee => "daisee",
                Mode::Alpha => "alpha",
                Mode::Hidaisee => "hidaisee",
                Mode::SyntheticArms => "synthetic-arms",
            }
            .to_string()
        })
    }

    pub fn tau_rule(&self) -> Result<TauRule> {
        match self.tau_rule.as_deref() {
            None | Some("halve") => Ok(TauRule::Halve),
            Some("constant") => Ok(TauRule::Constant),
            Some(other) => Err(Error::Config(format!("tau_rule: unknown value {other}"))),
        }
    }

    pub fn mass_mode(&self) -> Result<MassMode> {
        match self.mass_mode.as_deref() {
            None | Some("exact") => Ok(MassMode::Exact),
            Some("lazy") => Ok(MassMode::Lazy),
            Some(other) => Err(Error::Config(format!("mass_mode: unknown value {other}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::Config("t: must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed required".into()));
        }
        match self.mode {
            Mode::Daisee | Mode::Alpha => {
                if self.target.is_none() {
                    return Err(Error::Config("target: required for this mode".into()));
                }
                let k = self.k.ok_or_else(|| Error::Config("k: required for fixed partitions".into()))?;
                if self.t <= k as u64 {
                    return Err(Error::Config(format!(
                        "t: must exceed k = {k} for fixed partitions (got {})",
                        self.t
                    )));
                }
                if self.mode == Mode::Alpha {
                    let a = self
                        .alpha
                        .ok_or_else(|| Error::Config("alpha: required in alpha mode".into()))?;
                    crate::alpha::validate_alpha(a)?;
                    // The (M/2)·vol bound justifies auto τ only for α = 1.
                    if a != 1.0 && !matches!(self.tau, Some(TauConfig::Shared(_)) | Some(TauConfig::PerArm(_))) {
                        return Err(Error::Config(
                            "tau: alpha mode with alpha != 1 requires an explicit tau".into(),
                        ));
                    }
                }
            }
            Mode::SyntheticArms => {
                let k = self.k.ok_or_else(|| Error::Config("k: required for synthetic-arms".into()))?;
                if k < 2 {
                    return Err(Error::Config("k: synthetic-arms needs k >= 2".into()));
                }
                if self.t <= k as u64 {
                    return Err(Error::Config(format!(
                        "t: must exceed k = {k} (got {})",
                        self.t
                    )));
                }
                if !matches!(self.tau, Some(TauConfig::Shared(_))) {
                    return Err(Error::Config(
                        "tau: synthetic-arms requires a shared tau value".into(),
                    ));
                }
                if self.target.is_some() {
                    return Err(Error::Config(
                        "target: synthetic-arms uses the analytic reward law; remove the target".into(),
                    ));
                }
            }
            Mode::Hidaisee => {
                if self.target.is_none() {
                    return Err(Error::Config("target: required for hidaisee".into()));
                }
                if let Some(r) = self.ess_ratio {
                    if !(r > 0.0 && r < 1.0) {
                        return Err(Error::Config(format!(
                            "ess_ratio: must lie in (0, 1), got {r}"
                        )));
                    }
                }
                self.tau_rule()?;
                self.mass_mode()?;
            }
        }
        self.boost.build()?;
        Ok(())
    }
}

/// Sweep axis: which knob the value list drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    BoostForm,
    BoostExponent,
    /// Shared τ, except on the `vary-tau` target where values are the
    /// target's δ (τ then follows from the auto rule).
    Tau,
    K,
    /// δ of the `vary-ratio` target; rows report the achieved Z_max/Z_min.
    Ratio,
    EssRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub axis: SweepAxis,
    pub values: Vec<serde_json::Value>,
    /// When positive, replaces `base.seeds` with `0..replicates`.
    #[serde(default)]
    pub replicates: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("values: sweep needs at least one value".into()));
        }
        let compatible = match self.axis {
            SweepAxis::EssRatio => self.base.mode == Mode::Hidaisee,
            SweepAxis::BoostForm | SweepAxis::BoostExponent | SweepAxis::Tau => true,
            SweepAxis::K => self.base.mode != Mode::Hidaisee,
            SweepAxis::Ratio => {
                self.base.target.as_ref().map(|t| t.family.as_str()) == Some("vary-ratio")
            }
        };
        if !compatible {
            return Err(Error::Config(format!(
                "axis {:?} is not compatible with mode {:?}",
                self.axis, self.base.mode
            )));
        }
        for v in &self.values {
            self.apply(&self.base, v)?;
        }
        Ok(())
    }

    fn value_f64(v: &serde_json::Value) -> Result<f64> {
        v.as_f64()
            .ok_or_else(|| Error::Config(format!("sweep value {v} is not a number")))
    }

    /// Produces the run config for one axis value.
    pub fn apply(&self, base: &RunConfig, value: &serde_json::Value) -> Result<RunConfig> {
        let mut cfg = base.clone();
        if self.replicates > 0 {
            cfg.seeds = (0..self.replicates).collect();
        }
        match self.axis {
            SweepAxis::BoostForm => {
                let form = value
                    .as_str()
                    .ok_or_else(|| Error::Config(format!("boost_form value {value} is not a string")))?;
                cfg.boost.form = form.to_string();
                if form != "power" {
                    cfg.boost.exponent = None;
                }
                cfg.out_prefix = Some(format!("{}_{form}", base.out_prefix()));
            }
            SweepAxis::BoostExponent => {
                let e = Self::value_f64(value)?;
                cfg.boost.form = "power".into();
                cfg.boost.exponent = Some(e);
                cfg.out_prefix = Some(format!("{}_e{e}", base.out_prefix()));
            }
            SweepAxis::Tau => {
                let v = Self::value_f64(value)?;
                if base.target.as_ref().map(|t| t.family.as_str()) == Some("vary-tau") {
                    let spec = cfg.target.as_mut().unwrap();
                    let mut params = spec.params.clone().unwrap_or_default();
                    params.delta = Some(v);
                    spec.params = Some(params);
                    cfg.tau = Some(TauConfig::Auto);
                    cfg.out_prefix = Some(format!("{}_d{v}", base.out_prefix()));
                } else {
                    cfg.tau = Some(TauConfig::Shared(v));
                    cfg.out_prefix = Some(format!("{}_tau{v}", base.out_prefix()));
                }
            }
            SweepAxis::K => {
                let k = Self::value_f64(value)? as usize;
                cfg.k = Some(k);
                if let Some(spec) = cfg.target.as_mut() {
                    // The vary-k family couples the density level to K.
                    if spec.family == "vary-k" {
                        let mut params = spec.params.clone().unwrap_or_default();
                        params.k = Some(k as u32);
                        spec.params = Some(params);
                    }
                }
                cfg.out_prefix = Some(format!("{}_k{k}", base.out_prefix()));
            }
            SweepAxis::Ratio => {
                let d = Self::value_f64(value)?;
                let spec = cfg
                    .target
                    .as_mut()
                    .ok_or_else(|| Error::Config("ratio axis requires a target".into()))?;
                let mut params = spec.params.clone().unwrap_or_default();
                params.delta = Some(d);
                spec.params = Some(params);
                cfg.out_prefix = Some(format!("{}_d{d}", base.out_prefix()));
            }
            SweepAxis::EssRatio => {
                let r = Self::value_f64(value)?;
                cfg.ess_ratio = Some(r);
                cfg.out_prefix = Some(format!("{}_ess{r}", base.out_prefix()));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Partition description consumed by the `oracle` subcommand: either
/// `{"k": n}` (equal split along dimension 0) or explicit `{"cells": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<DomainSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl PartitionSpec {
    pub fn build(&self, domain: &Rectangle) -> Result<Vec<Rectangle>> {
        match (&self.k, &self.cells) {
            (Some(k), None) => {
                let arms = crate::partition::make_equal_partition(
                    domain,
                    *k,
                    &TauSpec::Shared(1.0),
                    None,
                )?;
                Ok(arms.into_iter().map(|a| a.cell().clone()).collect())
            }
            (None, Some(cells)) => cells.iter().map(|c| c.build()).collect(),
            _ => Err(Error::Config(
                "partition spec needs exactly one of `k` or `cells`".into(),
            )),
        }
    }
}
