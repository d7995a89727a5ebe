//! Experiment harness: replicate fan-out, CSV/JSON emission and the sweep
//! driver.
//!
//! Replicates run in parallel, one per (config, seed) pair, and results are
//! merged in seed order, so parallelism never changes output bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::alpha;
use crate::config::{Mode, RunConfig, SweepAxis, SweepConfig, TauConfig};
use crate::daisee::{Daisee, DaiseeOptions, SyntheticArms};
use crate::error::{Error, Result};
use crate::hidaisee::{is_snapshot_time, HiDaisee, HiDaiseeOptions, SplitPolicy, TreeSnapshot};
use crate::metrics::{full_kl, kl_regret, RegretAccumulator, RunRecord};
use crate::oracle::{oracle_table, OracleTable};
use crate::partition::{make_equal_partition, KahanSum, TauSpec};
use crate::targets::Rectangle;

/// C `%.12g` formatting: 12 significant digits, trailing zeros trimmed,
/// scientific notation outside [1e-4, 1e12). Infinities print as `inf`.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Exponent after rounding to 12 significant digits.
    let sci = format!("{:.11e}", v);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-4..12).contains(&exp) {
        let prec = (11 - exp).max(0) as usize;
        let mut s = format!("{:.*}", prec, v);
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        let (mant, _) = sci.split_at(sci.find('e').unwrap());
        let mut m = mant.to_string();
        if m.contains('.') {
            while m.ends_with('0') {
                m.pop();
            }
            if m.ends_with('.') {
                m.pop();
            }
        }
        format!("{m}e{exp:+03}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_g).unwrap_or_default()
}

/// Output of a single seeded run.
pub struct ReplicateOutput {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    /// Final proposal over the final partition.
    pub final_q: Vec<f64>,
    /// Final partition cells (fixed for daisee, leaves for hidaisee); empty
    /// in synthetic-arms mode.
    pub final_partition: Vec<Rectangle>,
    /// Oracle masses when regret tracking was enabled.
    pub pi: Option<Vec<f64>>,
    /// Oracle total mass when available.
    pub z_oracle: Option<f64>,
    /// Final mixture-weighted Z estimate.
    pub z_hat: f64,
    /// Full KL(π‖q) of the final proposal (1-D targets with tracking).
    pub final_full_kl: Option<f64>,
    /// Tree snapshots at {1,2,5}·10^k (hidaisee only).
    pub snapshots: Vec<TreeSnapshot>,
}

impl ReplicateOutput {
    pub fn final_cum_regret(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.cum_regret)
    }

    pub fn final_instant_regret(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.instant_regret)
    }
}

fn build_oracle(cfg: &RunConfig, cells: &[Rectangle]) -> Result<Option<OracleTable>> {
    if !cfg.regret_tracking {
        return Ok(None);
    }
    let target = cfg.target.as_ref().unwrap().build()?;
    let alpha_req = match (cfg.mode, cfg.alpha) {
        (Mode::Alpha, Some(a)) if a != 1.0 => Some(a),
        _ => None,
    };
    Ok(Some(oracle_table(&target, cells, alpha_req)?))
}

fn run_fixed_partition(cfg: &RunConfig, seed: u64) -> Result<ReplicateOutput> {
    let target = cfg.target.as_ref().unwrap().build()?;
    let k = cfg.k.unwrap();
    let tau_spec = cfg
        .tau
        .as_ref()
        .map(TauConfig::build)
        .unwrap_or(TauSpec::AutoFromSup);
    let arms = make_equal_partition(target.domain(), k, &tau_spec, target.sup_bound())?;
    let cells: Vec<Rectangle> = arms.iter().map(|a| a.cell().clone()).collect();
    let table = build_oracle(cfg, &cells)?;

    let mut opts = DaiseeOptions::new(cfg.boost.build()?, seed);
    opts.adapt = cfg.adapt;
    if cfg.mode == Mode::Alpha {
        opts.alpha = cfg.alpha.unwrap();
    }
    let alpha_v = opts.alpha;
    let mut engine = Daisee::new(target.clone(), arms, opts)?;

    let mut records = Vec::with_capacity(cfg.t as usize);
    let mut w_sum = KahanSum::default();
    let mut acc = RegretAccumulator::default();

    for s in engine.initialize()? {
        w_sum.add(s.y * k as f64);
        records.push(RunRecord {
            t: s.t,
            arm: s.arm,
            x: s.x,
            y: s.y,
            z_hat_total: w_sum.value() / s.t as f64,
            instant_regret: None,
            cum_regret: None,
            partition_count: k,
        });
    }
    while engine.t() < cfg.t {
        let instant = match &table {
            Some(tab) => Some(if alpha_v == 1.0 {
                kl_regret(&tab.pi_a, engine.q())
            } else {
                alpha::alpha_regret(engine.q(), tab, alpha_v)?
            }),
            None => None,
        };
        let q_arm_pre = engine.q().to_vec();
        let s = engine.step()?;
        w_sum.add(s.y / q_arm_pre[s.arm]);
        let cum = instant.map(|r| acc.push(r));
        records.push(RunRecord {
            t: s.t,
            arm: s.arm,
            x: s.x,
            y: s.y,
            z_hat_total: w_sum.value() / s.t as f64,
            instant_regret: instant,
            cum_regret: cum,
            partition_count: k,
        });
    }

    let final_q = engine.q().to_vec();
    let final_full_kl = match &table {
        Some(tab) if target.dim() == 1 && alpha_v == 1.0 => {
            Some(full_kl(&target, &cells, &final_q, tab)?)
        }
        _ => None,
    };
    Ok(ReplicateOutput {
        seed,
        z_hat: engine.z_hat_total(),
        records,
        final_q,
        final_partition: cells,
        pi: table.as_ref().map(|t| t.pi_a.clone()),
        z_oracle: table.as_ref().map(|t| t.z),
        final_full_kl,
        snapshots: Vec::new(),
    })
}

fn run_synthetic(cfg: &RunConfig, seed: u64) -> Result<ReplicateOutput> {
    let k = cfg.k.unwrap();
    let tau = match cfg.tau {
        Some(TauConfig::Shared(t)) => t,
        _ => unreachable!("validated"),
    };
    let mut engine = SyntheticArms::new(k, tau, cfg.boost.build()?, seed, cfg.adapt)?;
    let pi = engine.pi();
    let mut records = Vec::with_capacity(cfg.t as usize);
    let mut acc = RegretAccumulator::default();

    for s in engine.initialize()? {
        records.push(RunRecord {
            t: s.t,
            arm: s.arm,
            x: s.x,
            y: s.y,
            z_hat_total: engine.z_hat_total(),
            instant_regret: None,
            cum_regret: None,
            partition_count: k,
        });
    }
    while engine.t() < cfg.t {
        let instant = cfg
            .regret_tracking
            .then(|| kl_regret(&pi, engine.q()));
        let s = engine.step()?;
        let cum = instant.map(|r| acc.push(r));
        records.push(RunRecord {
            t: s.t,
            arm: s.arm,
            x: s.x,
            y: s.y,
            z_hat_total: engine.z_hat_total(),
            instant_regret: instant,
            cum_regret: cum,
            partition_count: k,
        });
    }
    Ok(ReplicateOutput {
        seed,
        z_hat: engine.z_hat_total(),
        records,
        final_q: engine.q().to_vec(),
        final_partition: Vec::new(),
        pi: cfg.regret_tracking.then_some(pi),
        z_oracle: cfg.regret_tracking.then_some(1.0),
        final_full_kl: None,
        snapshots: Vec::new(),
    })
}

fn run_hidaisee(cfg: &RunConfig, seed: u64) -> Result<ReplicateOutput> {
    let target = cfg.target.as_ref().unwrap().build()?;
    let policy = SplitPolicy::new(cfg.n_min.unwrap_or(10), cfg.ess_ratio.unwrap_or(0.5))?;
    let mut opts = HiDaiseeOptions::new(policy, cfg.boost.build()?, seed);
    opts.tau_rule = cfg.tau_rule()?;
    opts.mass_mode = cfg.mass_mode()?;
    if let Some(TauConfig::Shared(t)) = cfg.tau {
        opts.root_tau = Some(t);
    }
    let mut engine = HiDaisee::new(target.clone(), opts)?;

    let mut records = Vec::with_capacity(cfg.t as usize);
    let mut snapshots = Vec::new();
    let mut w_sum = KahanSum::default();
    while engine.t() < cfg.t {
        let s = engine.step()?;
        w_sum.add(s.y / s.q_leaf);
        records.push(RunRecord {
            t: s.t,
            arm: s.leaf,
            x: s.x,
            y: s.y,
            z_hat_total: w_sum.value() / s.t as f64,
            instant_regret: None,
            cum_regret: None,
            partition_count: engine.leaf_count(),
        });
        if is_snapshot_time(s.t) {
            snapshots.push(engine.snapshot());
        }
    }

    let cells = engine.partition();
    let final_q = engine.q();
    let (pi, z_oracle, final_full_kl) = if cfg.regret_tracking {
        let table = oracle_table(&target, &cells, None)?;
        let fk = if target.dim() == 1 {
            Some(full_kl(&target, &cells, &final_q, &table)?)
        } else {
            None
        };
        (Some(table.pi_a.clone()), Some(table.z), fk)
    } else {
        (None, None, None)
    };
    Ok(ReplicateOutput {
        seed,
        z_hat: engine.z_hat_total(),
        records,
        final_q,
        final_partition: cells,
        pi,
        z_oracle,
        final_full_kl,
        snapshots,
    })
}

/// Runs one seeded replicate of a validated config.
pub fn run_replicate(cfg: &RunConfig, seed: u64) -> Result<ReplicateOutput> {
    match cfg.mode {
        Mode::Daisee | Mode::Alpha => run_fixed_partition(cfg, seed),
        Mode::SyntheticArms => run_synthetic(cfg, seed),
        Mode::Hidaisee => run_hidaisee(cfg, seed),
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunnerOptions {
    pub out_dir: PathBuf,
    pub seed_offset: u64,
}

pub struct ExperimentOutput {
    pub replicates: Vec<ReplicateOutput>,
    pub per_seed_csv: Vec<PathBuf>,
    pub aggregate_csv: PathBuf,
    pub summary_json: PathBuf,
}

const CSV_HEADER: &str = "t,arm,x,y,z_hat_total,instant_regret,cum_regret,partition_count";

fn write_seed_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let x = r.x.iter().map(|&c| fmt_g(c)).collect::<Vec<_>>().join(";");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.arm,
            x,
            fmt_g(r.y),
            fmt_g(r.z_hat_total),
            fmt_opt(r.instant_regret),
            fmt_opt(r.cum_regret),
            r.partition_count
        )?;
    }
    w.flush()?;
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_aggregate_csv(path: &Path, reps: &[ReplicateOutput]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "t,z_hat_mean,z_hat_std,instant_regret_mean,instant_regret_std,cum_regret_mean,cum_regret_std,partition_count_mean,partition_count_std"
    )?;
    let t_max = reps.iter().map(|r| r.records.len()).min().unwrap_or(0);
    for i in 0..t_max {
        let t = reps[0].records[i].t;
        let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> (String, String) {
            let vals: Vec<f64> = reps.iter().filter_map(|r| f(&r.records[i])).collect();
            if vals.len() == reps.len() {
                let (m, s) = mean_std(&vals);
                (fmt_g(m), fmt_g(s))
            } else {
                (String::new(), String::new())
            }
        };
        let (zm, zs) = col(&|r| Some(r.z_hat_total));
        let (im, is) = col(&|r| r.instant_regret);
        let (cm, cs) = col(&|r| r.cum_regret);
        let (pm, ps) = col(&|r| Some(r.partition_count as f64));
        writeln!(w, "{t},{zm},{zs},{im},{is},{cm},{cs},{pm},{ps}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    z_hat: f64,
    final_cum_regret: Option<f64>,
    final_instant_regret: Option<f64>,
    final_full_kl: Option<f64>,
    final_partition_count: usize,
}

#[derive(Serialize)]
struct RunSummary {
    prefix: String,
    z_oracle: Option<f64>,
    seeds: Vec<SeedSummary>,
    mean_final_cum_regret: Option<f64>,
    std_final_cum_regret: Option<f64>,
    mean_final_instant_regret: Option<f64>,
    mean_final_full_kl: Option<f64>,
    mean_z_hat: f64,
}

fn summarize(prefix: &str, reps: &[ReplicateOutput]) -> RunSummary {
    let seeds: Vec<SeedSummary> = reps
        .iter()
        .map(|r| SeedSummary {
            seed: r.seed,
            z_hat: r.z_hat,
            final_cum_regret: r.final_cum_regret(),
            final_instant_regret: r.final_instant_regret(),
            final_full_kl: r.final_full_kl,
            final_partition_count: r.records.last().map(|x| x.partition_count).unwrap_or(0),
        })
        .collect();
    let collect = |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Option<(f64, f64)> {
        let vals: Vec<f64> = seeds.iter().filter_map(f).collect();
        (vals.len() == seeds.len() && !vals.is_empty()).then(|| mean_std(&vals))
    };
    let cum = collect(&|s| s.final_cum_regret);
    let inst = collect(&|s| s.final_instant_regret);
    let fkl = collect(&|s| s.final_full_kl);
    RunSummary {
        prefix: prefix.to_string(),
        z_oracle: reps.first().and_then(|r| r.z_oracle),
        mean_final_cum_regret: cum.map(|c| c.0),
        std_final_cum_regret: cum.map(|c| c.1),
        mean_final_instant_regret: inst.map(|c| c.0),
        mean_final_full_kl: fkl.map(|c| c.0),
        mean_z_hat: seeds.iter().map(|s| s.z_hat).sum::<f64>() / seeds.len() as f64,
        seeds,
    }
}

/// Runs all seeds of a config in parallel and writes one CSV per seed, an
/// aggregate CSV (per-t mean/std over seeds) and a JSON summary.
pub fn run_experiment(cfg: &RunConfig, opts: &RunnerOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out_dir)?;
    let seeds: Vec<u64> = cfg.seeds.iter().map(|s| s + opts.seed_offset).collect();
    let replicates: Vec<ReplicateOutput> = seeds
        .par_iter()
        .map(|&seed| run_replicate(cfg, seed))
        .collect::<Result<_>>()?;

    let prefix = cfg.out_prefix();
    let mut per_seed_csv = Vec::with_capacity(replicates.len());
    for rep in &replicates {
        let path = opts.out_dir.join(format!("{prefix}_seed{}.csv", rep.seed));
        write_seed_csv(&path, &rep.records)?;
        per_seed_csv.push(path);
        if !rep.snapshots.is_empty() {
            let snap_path = opts
                .out_dir
                .join(format!("{prefix}_seed{}_snapshots.json", rep.seed));
            serde_json::to_writer_pretty(
                BufWriter::new(File::create(&snap_path)?),
                &rep.snapshots,
            )?;
        }
    }
    let aggregate_csv = opts.out_dir.join(format!("{prefix}_aggregate.csv"));
    write_aggregate_csv(&aggregate_csv, &replicates)?;
    let summary_json = opts.out_dir.join(format!("{prefix}_summary.json"));
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(&summary_json)?),
        &summarize(&prefix, &replicates),
    )?;
    Ok(ExperimentOutput {
        replicates,
        per_seed_csv,
        aggregate_csv,
        summary_json,
    })
}

/// Z_max/Z_min over an equal-K partition, for the ratio sweep report.
fn z_ratio(cfg: &RunConfig) -> Result<f64> {
    let target = cfg.target.as_ref().unwrap().build()?;
    let k = cfg.k.unwrap();
    let arms = make_equal_partition(target.domain(), k, &TauSpec::Shared(1.0), None)?;
    let cells: Vec<Rectangle> = arms.iter().map(|a| a.cell().clone()).collect();
    let table = oracle_table(&target, &cells, None)?;
    let max = table.z_a.iter().cloned().fold(f64::MIN, f64::max);
    let min = table.z_a.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) {
        return Err(Error::BadPartition("zero-mass cell in ratio computation".into()));
    }
    Ok(max / min)
}

pub struct SweepOutput {
    pub summary_csv: PathBuf,
    pub runs: Vec<ExperimentOutput>,
}

/// Runs one experiment per axis value and writes a summary CSV with one row
/// per value.
pub fn run_sweep(sweep: &SweepConfig, opts: &RunnerOptions) -> Result<SweepOutput> {
    sweep.validate()?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for value in &sweep.values {
        let cfg = sweep.apply(&sweep.base, value)?;
        let ratio = if sweep.axis == SweepAxis::Ratio {
            Some(z_ratio(&cfg)?)
        } else {
            None
        };
        let out = run_experiment(&cfg, opts)?;
        let summary = summarize(&cfg.out_prefix(), &out.replicates);
        rows.push((value.clone(), ratio, summary));
        runs.push(out);
    }
    let summary_csv = opts
        .out_dir
        .join(format!("{}_sweep_summary.csv", sweep.base.out_prefix()));
    let mut w = BufWriter::new(File::create(&summary_csv)?);
    writeln!(
        w,
        "axis,value,z_ratio,mean_final_cum_regret,std_final_cum_regret,mean_final_instant_regret"
    )?;
    let axis = serde_json::to_value(sweep.axis)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    for (value, ratio, s) in &rows {
        let value_str = match value {
            serde_json::Value::String(v) => v.clone(),
            other => fmt_g(other.as_f64().unwrap_or(f64::NAN)),
        };
        writeln!(
            w,
            "{axis},{value_str},{},{},{},{}",
            fmt_opt(*ratio),
            fmt_opt(s.mean_final_cum_regret),
            fmt_opt(s.std_final_cum_regret),
            fmt_opt(s.mean_final_instant_regret)
        )?;
    }
    w.flush()?;
    Ok(SweepOutput { summary_csv, runs })
}
