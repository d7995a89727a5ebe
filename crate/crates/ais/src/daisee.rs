//! Optimism-boosted proposal adaptation over a fixed partition.
//!
//! The engine alternates drawing an arm from the current proposal vector,
//! sampling uniformly inside the arm's cell, and recomputing the proposal
//! from the running mass estimates plus an optimism boost.

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};

use crate::alpha;
use crate::error::{Error, Result};
use crate::partition::{Arm, ArmState, KahanSum, WeightedSample};
use crate::targets::{Rectangle, TargetDensity};

/// `c = √(4.14·log₂(2e))` from the boost definition.
pub fn optimism_constant() -> f64 {
    (4.14 * (2.0 * std::f64::consts::E).log2()).sqrt()
}

/// Functional form of the optimism boost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoostForm {
    /// `c·τ·√(ln t / N)`.
    UcbSqrt,
    /// `τ·(ln t / N)^e` for an exponent `e` in (0, 1].
    Power(f64),
    /// `τ·ln t / N`.
    LogOverN,
    /// `τ / N`.
    InverseN,
    /// No exploration.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostSpec {
    pub form: BoostForm,
    /// Positive multiplier applied on top of the form.
    pub scale: f64,
}

impl BoostSpec {
    pub fn new(form: BoostForm, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!("boost scale must be positive, got {scale}")));
        }
        if let BoostForm::Power(e) = form {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!(
                    "power boost exponent must lie in (0, 1], got {e}"
                )));
            }
        }
        Ok(Self { form, scale })
    }

    pub fn ucb() -> Self {
        Self { form: BoostForm::UcbSqrt, scale: 1.0 }
    }

    pub fn none() -> Self {
        Self { form: BoostForm::None, scale: 1.0 }
    }
}

/// Boost value with the log factor supplied directly (test hook; `boost`
/// passes `ln t`).
pub fn boost_with_log(spec: &BoostSpec, tau: f64, log_t: f64, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::UninitializedArm(usize::MAX));
    }
    let nf = n as f64;
    let v = match spec.form {
        BoostForm::UcbSqrt => optimism_constant() * tau * (log_t / nf).sqrt(),
        BoostForm::Power(e) => tau * (log_t / nf).powf(e),
        BoostForm::LogOverN => tau * log_t / nf,
        BoostForm::InverseN => tau / nf,
        BoostForm::None => return Ok(0.0),
    };
    Ok(spec.scale * v)
}

/// Optimism boost `σ_at` at iteration `t` for an arm pulled `n` times.
pub fn boost(spec: &BoostSpec, tau: f64, t: u64, n: u64) -> Result<f64> {
    boost_with_log(spec, tau, (t as f64).ln(), n)
}

/// `q_a = (Ẑ_a + σ_a) / Σ_b (Ẑ_b + σ_b)`.
///
/// An all-zero numerator (every estimate and boost zero, e.g. no boost and no
/// successes yet) carries no information and falls back to the uniform
/// proposal; negative or non-finite numerators are an error.
pub fn compute_proposal(states: &[ArmState], boosts: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(states.len(), boosts.len());
    let mut num = Vec::with_capacity(states.len());
    let mut total = 0.0;
    for (s, &b) in states.iter().zip(boosts) {
        let v = s.z_hat()? + b;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::DegenerateProposal);
        }
        num.push(v);
        total += v;
    }
    if !total.is_finite() {
        return Err(Error::DegenerateProposal);
    }
    if total == 0.0 {
        return Ok(vec![1.0 / states.len() as f64; states.len()]);
    }
    for v in &mut num {
        *v /= total;
    }
    Ok(num)
}

/// Inverse-CDF draw over `q`; a tie at a cumulative boundary resolves to the
/// lower index.
pub fn sample_discrete(q: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &p) in q.iter().enumerate() {
        cum += p;
        if u <= cum {
            return i;
        }
    }
    q.len() - 1
}

pub fn sample_uniform_in(cell: &Rectangle, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..cell.dim())
        .map(|d| {
            let u: f64 = rng.gen();
            cell.lo()[d] + u * (cell.hi()[d] - cell.lo()[d])
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DaiseeOptions {
    pub boost: BoostSpec,
    /// α-divergence parameter; 1.0 selects the plain KL engine path.
    pub alpha: f64,
    /// When false the proposal stays frozen uniform (fixed-proposal mode).
    pub adapt: bool,
    pub seed: u64,
}

impl DaiseeOptions {
    pub fn new(boost: BoostSpec, seed: u64) -> Self {
        Self { boost, alpha: 1.0, adapt: true, seed }
    }
}

/// Fixed-partition sampler state.
pub struct Daisee {
    target: TargetDensity,
    arms: Vec<Arm>,
    states: Vec<ArmState>,
    q: Vec<f64>,
    t: u64,
    rng: ChaCha8Rng,
    opts: DaiseeOptions,
    w_sum: KahanSum,
}

impl Daisee {
    pub fn new(target: TargetDensity, arms: Vec<Arm>, opts: DaiseeOptions) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::Config("sampler needs at least one arm".into()));
        }
        alpha::validate_alpha(opts.alpha)?;
        let k = arms.len();
        let states = vec![ArmState::new(); k];
        Ok(Self {
            target,
            q: vec![1.0 / k as f64; k],
            states,
            arms,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            opts,
            w_sum: KahanSum::default(),
        })
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn states(&self) -> &[ArmState] {
        &self.states
    }

    pub fn alpha(&self) -> f64 {
        self.opts.alpha
    }

    /// Running mixture-weighted estimate of `Z` over all draws so far.
    pub fn z_hat_total(&self) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        self.w_sum.value() / self.t as f64
    }

    pub fn total_pulls(&self) -> u64 {
        self.states.iter().map(|s| s.n()).sum()
    }

    fn eval_target(&mut self, arm: usize) -> Result<WeightedSample> {
        let x = sample_uniform_in(self.arms[arm].cell(), &mut self.rng);
        let f_val = self.target.eval(&x);
        if !f_val.is_finite() {
            return Err(Error::NonFiniteTarget { x });
        }
        if let Some(sup) = self.target.sup_bound() {
            if f_val > sup * (1.0 + 1e-9) {
                return Err(Error::SupBoundViolated { value: f_val, sup, x });
            }
        }
        let y = f_val / self.arms[arm].g_density();
        Ok(WeightedSample { x, f_val, y, arm, t: self.t + 1 })
    }

    fn record(&mut self, sample: &WeightedSample, q_used: f64) -> Result<()> {
        let a = sample.arm;
        let y_rec = alpha::alpha_weight(sample.f_val, self.arms[a].g_density(), self.opts.alpha);
        self.states[a].record_pull(y_rec).map_err(|_| Error::NonFiniteWeight {
            arm: a,
            t: self.t + 1,
            y: y_rec,
        })?;
        self.t += 1;
        self.w_sum.add(sample.y / q_used);
        debug_assert_eq!(self.total_pulls(), self.t);
        Ok(())
    }

    fn refresh_proposal(&mut self) -> Result<()> {
        if !self.opts.adapt {
            return Ok(());
        }
        let boosts: Vec<f64> = self
            .arms
            .iter()
            .zip(&self.states)
            .map(|(arm, s)| boost(&self.opts.boost, arm.tau(), self.t, s.n()))
            .collect::<Result<_>>()?;
        self.q = alpha::alpha_proposal(&self.states, &boosts, self.opts.alpha)?;
        Ok(())
    }

    /// One draw from each arm, then the first adapted proposal. Must be
    /// called once before [`step`](Self::step).
    pub fn initialize(&mut self) -> Result<Vec<WeightedSample>> {
        if self.t != 0 {
            return Err(Error::Config("sampler already initialized".into()));
        }
        let k = self.k();
        let mut out = Vec::with_capacity(k);
        for a in 0..k {
            let s = self.eval_target(a)?;
            // Initialization draws are weighted as if from the uniform
            // mixture over arms.
            self.record(&s, 1.0 / k as f64)?;
            out.push(s);
        }
        self.refresh_proposal()?;
        Ok(out)
    }

    /// One adaptive iteration: draw an arm from `q`, sample in its cell,
    /// update that arm and recompute the proposal at the new `t`.
    pub fn step(&mut self) -> Result<WeightedSample> {
        if self.states.iter().any(|s| s.n() == 0) {
            return Err(Error::Config(
                "sampler must be initialized before stepping".into(),
            ));
        }
        let u: f64 = self.rng.gen();
        let a = sample_discrete(&self.q, u);
        let sample = self.eval_target(a)?;
        self.record(&sample, self.q[a])?;
        self.refresh_proposal()?;
        Ok(sample)
    }
}

/// Synthetic-arms harness: the arm reward law `Y_a ~ 2a·Bernoulli(1/K)/(K+1)`
/// is given directly instead of a target density, so the 100-arm adaptation
/// experiment is reproducible without reconstructing the implied density.
pub struct SyntheticArms {
    k: usize,
    taus: Vec<f64>,
    states: Vec<ArmState>,
    q: Vec<f64>,
    t: u64,
    rng: ChaCha8Rng,
    boost: BoostSpec,
    adapt: bool,
    w_sum: KahanSum,
}

impl SyntheticArms {
    pub fn new(k: usize, tau: f64, boost: BoostSpec, seed: u64, adapt: bool) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config("synthetic-arms mode needs k >= 2".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(Self {
            k,
            taus: vec![tau; k],
            states: vec![ArmState::new(); k],
            q: vec![1.0 / k as f64; k],
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            boost,
            adapt,
            w_sum: KahanSum::default(),
        })
    }

    /// Exact arm masses: `Z_a = E[Y_a] = 2a/(K(K+1))`, so `Z = 1`.
    pub fn pi(&self) -> Vec<f64> {
        let denom = (self.k * (self.k + 1)) as f64;
        (1..=self.k).map(|a| 2.0 * a as f64 / denom).collect()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn states(&self) -> &[ArmState] {
        &self.states
    }

    pub fn z_hat_total(&self) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        self.w_sum.value() / self.t as f64
    }

    fn draw_reward(&mut self, arm: usize) -> f64 {
        let hit: f64 = self.rng.gen();
        if hit < 1.0 / self.k as f64 {
            2.0 * (arm + 1) as f64 / (self.k + 1) as f64
        } else {
            0.0
        }
    }

    fn refresh_proposal(&mut self) -> Result<()> {
        if !self.adapt {
            return Ok(());
        }
        let boosts: Vec<f64> = self
            .taus
            .iter()
            .zip(&self.states)
            .map(|(&tau, s)| boost(&self.boost, tau, self.t, s.n()))
            .collect::<Result<_>>()?;
        self.q = compute_proposal(&self.states, &boosts)?;
        Ok(())
    }

    pub fn initialize(&mut self) -> Result<Vec<WeightedSample>> {
        if self.t != 0 {
            return Err(Error::Config("sampler already initialized".into()));
        }
        let mut out = Vec::with_capacity(self.k);
        for a in 0..self.k {
            let y = self.draw_reward(a);
            self.states[a].record_pull(y).unwrap();
            self.t += 1;
            self.w_sum.add(y * self.k as f64);
            out.push(WeightedSample {
                x: vec![(a as f64 + 0.5) / self.k as f64],
                f_val: y,
                y,
                arm: a,
                t: self.t,
            });
        }
        self.refresh_proposal()?;
        Ok(out)
    }

    pub fn step(&mut self) -> Result<WeightedSample> {
        let u: f64 = self.rng.gen();
        let a = sample_discrete(&self.q, u);
        let q_used = self.q[a];
        let y = self.draw_reward(a);
        self.states[a].record_pull(y).unwrap();
        self.t += 1;
        self.w_sum.add(y / q_used);
        self.refresh_proposal()?;
        Ok(WeightedSample {
            x: vec![(a as f64 + 0.5) / self.k as f64],
            f_val: y,
            y,
            arm: a,
            t: self.t,
        })
    }
}
