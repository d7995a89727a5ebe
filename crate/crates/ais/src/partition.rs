//! Fixed-partition arm model: rectangular cells with uniform subproposals and
//! per-arm running statistics.

use crate::error::{Error, Result};
use crate::targets::Rectangle;

/// Neumaier-compensated running sum; the per-arm weight sums accumulate up to
/// 1e6 terms of widely varying magnitude.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        // Compensation is meaningless once a non-finite value enters; skip it
        // so an infinite total stays infinite instead of decaying to NaN.
        if t.is_finite() {
            if self.sum.abs() >= v.abs() {
                self.comp += (self.sum - t) + v;
            } else {
                self.comp += (v - t) + self.sum;
            }
        } else {
            self.comp = 0.0;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// One subset of the partition: a cell, its uniform subproposal density and
/// its sub-Gaussian variance factor.
#[derive(Debug, Clone)]
pub struct Arm {
    cell: Rectangle,
    g_density: f64,
    tau: f64,
}

impl Arm {
    pub fn new(cell: Rectangle, tau: f64) -> Result<Self> {
        // Zero is allowed: a known zero-variance arm gets no optimism boost.
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("arm variance factor must be nonnegative, got {tau}")));
        }
        let g_density = 1.0 / cell.volume();
        Ok(Self { cell, g_density, tau })
    }

    pub fn cell(&self) -> &Rectangle {
        &self.cell
    }

    /// Uniform density `1/volume(cell)`.
    pub fn g_density(&self) -> f64 {
        self.g_density
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Running statistics of one arm: pull count, compensated weight sums and the
/// running mass estimate.
#[derive(Debug, Clone, Default)]
pub struct ArmState {
    n: u64,
    sum_y: KahanSum,
    sum_y2: KahanSum,
}

impl ArmState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn sum_y(&self) -> f64 {
        self.sum_y.value()
    }

    pub fn sum_y2(&self) -> f64 {
        self.sum_y2.value()
    }

    /// `Ẑ = (Σ Y) / N`. The arm must have been pulled at least once.
    pub fn z_hat(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::UninitializedArm(usize::MAX));
        }
        Ok(self.sum_y.value() / self.n as f64)
    }

    pub fn record_pull(&mut self, y: f64) -> Result<()> {
        if !y.is_finite() || y < 0.0 {
            return Err(Error::NonFiniteWeight { arm: usize::MAX, t: 0, y });
        }
        self.n += 1;
        self.sum_y.add(y);
        self.sum_y2.add(y * y);
        Ok(())
    }
}

/// How the per-arm variance factors are assigned.
#[derive(Debug, Clone, PartialEq)]
pub enum TauSpec {
    /// One shared value for every arm.
    Shared(f64),
    /// Explicit per-arm values.
    PerArm(Vec<f64>),
    /// `τ_a = (M/2)·volume(cell)` from the target supremum `M`.
    AutoFromSup,
}

/// Splits the domain into `k` congruent cells along dimension 0 and assigns
/// variance factors per `tau_spec`. `sup` is the target supremum, required
/// for [`TauSpec::AutoFromSup`].
pub fn make_equal_partition(
    domain: &Rectangle,
    k: usize,
    tau_spec: &TauSpec,
    sup: Option<f64>,
) -> Result<Vec<Arm>> {
    if k == 0 {
        return Err(Error::Config("partition needs at least one cell".into()));
    }
    let lo = domain.lo()[0];
    let hi = domain.hi()[0];
    let width = (hi - lo) / k as f64;
    let mut arms = Vec::with_capacity(k);
    for a in 0..k {
        let mut cell_lo = domain.lo().to_vec();
        let mut cell_hi = domain.hi().to_vec();
        cell_lo[0] = lo + a as f64 * width;
        cell_hi[0] = if a + 1 == k { hi } else { lo + (a + 1) as f64 * width };
        let cell = Rectangle::new(cell_lo, cell_hi)?;
        let tau = match tau_spec {
            TauSpec::Shared(t) => *t,
            TauSpec::PerArm(ts) => {
                if ts.len() != k {
                    return Err(Error::Config(format!(
                        "per-arm tau vector has {} entries for {k} arms",
                        ts.len()
                    )));
                }
                ts[a]
            }
            TauSpec::AutoFromSup => {
                let m = sup.ok_or_else(|| {
                    Error::Config(
                        "tau auto rule requires a target with a known supremum".into(),
                    )
                })?;
                0.5 * m * cell.volume()
            }
        };
        arms.push(Arm::new(cell, tau)?);
    }
    Ok(arms)
}

/// One draw together with its localized weight `Y = f(x)/g_a(x)`.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub x: Vec<f64>,
    pub f_val: f64,
    /// Localized weight `f(x) · volume(cell)`.
    pub y: f64,
    pub arm: usize,
    pub t: u64,
}
