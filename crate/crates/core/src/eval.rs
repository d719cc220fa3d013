//! Trajectory error metrics, the seed × configuration experiment grid and the
//! bootstrap check of the accuracy-vs-IMU-count trends.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::liekf::{ErrorVec, NavState};
use crate::scenario::{run_single, RigPreset, RunOutput, Scenario, ScenarioError};
use crate::seeding::substream;
use crate::sim::GroundTruth;

/// Timestamps closer than this (s) are considered equal.
pub const TIME_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("estimate at t = {t} s has no matching ground-truth sample")]
    TimestampMismatch { t: f64 },
    #[error("error series is empty")]
    EmptySeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSample {
    pub t: f64,
    pub state: NavState,
    /// Marginal 1σ of the error state.
    pub sigmas: ErrorVec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub t: Vec<f64>,
    /// Axis-angle norm of `C_gtᵀ C_est` (rad).
    pub rotation: Vec<f64>,
    /// `‖p_est − p_gt‖` (m).
    pub position: Vec<f64>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Errors of `est` against truth; every estimate time must be a truth time.
pub fn compute_errors(est: &[EstimateSample], gt: &GroundTruth) -> Result<ErrorSeries, EvalError> {
    let mut out = ErrorSeries::default();
    let mut k = 0;
    for e in est {
        while k < gt.samples.len() && gt.samples[k].t < e.t - TIME_MATCH_TOLERANCE {
            k += 1;
        }
        let truth = gt
            .samples
            .get(k)
            .filter(|s| (s.t - e.t).abs() <= TIME_MATCH_TOLERANCE)
            .ok_or(EvalError::TimestampMismatch { t: e.t })?;
        out.t.push(e.t);
        out.rotation.push(truth.rotation.angle_to(&e.state.rotation));
        out.position.push((e.state.position - truth.position).norm());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: String,
    pub seed: u64,
    pub rot_mae: f64,
    pub rot_rmse: f64,
    pub pos_mae: f64,
    pub pos_rmse: f64,
    /// Not serialized, so artifacts stay byte-identical across reruns.
    #[serde(skip)]
    pub wall_time_s: f64,
}

fn mae_rmse(e: &[f64]) -> (f64, f64) {
    let n = e.len() as f64;
    let mae = e.iter().map(|x| x.abs()).sum::<f64>() / n;
    let rmse = (e.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    // Rounding can put a constant series' RMSE an ulp below its MAE.
    (mae, rmse.max(mae))
}

pub fn summarize(errs: &ErrorSeries, config: &str, seed: u64) -> Result<RunSummary, EvalError> {
    if errs.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    let (rot_mae, rot_rmse) = mae_rmse(&errs.rotation);
    let (pos_mae, pos_rmse) = mae_rmse(&errs.position);
    Ok(RunSummary {
        config: config.to_string(),
        seed,
        rot_mae,
        rot_rmse,
        pos_mae,
        pos_rmse,
        wall_time_s: 0.0,
    })
}

/// Per-run result kept by an experiment (the heavy series are dropped unless
/// the caller asks for them through [`run_grid`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub weights_gyro: Vec<f64>,
    pub weights_accel: Vec<f64>,
    pub fused_sigma_g: f64,
    pub fused_sigma_a: f64,
}

impl From<&RunOutput> for RunRecord {
    fn from(r: &RunOutput) -> Self {
        Self {
            summary: r.summary.clone(),
            weights_gyro: r.config.w_gyro.clone(),
            weights_accel: r.config.w_accel.clone(),
            fused_sigma_g: r.config.fused_noise.sigma_g,
            fused_sigma_a: r.config.fused_noise.sigma_a,
        }
    }
}

/// Runs every `(seed, preset)` cell in parallel, handing each full output to
/// `visit` (which may write artifacts) and keeping its record. Truth is shared
/// by all cells and camera frames by all presets of one seed.
pub fn run_grid<F>(
    scenario: &Scenario,
    presets: &[RigPreset],
    seeds: &[u64],
    visit: F,
) -> Result<Vec<RunRecord>, ScenarioError>
where
    F: Fn(&RunOutput) -> Result<(), ScenarioError> + Sync,
{
    let gt = scenario.ground_truth()?;
    let frames: Vec<_> = seeds
        .par_iter()
        .map(|&s| scenario.camera_frames(&gt, s))
        .collect::<Result<_, _>>()?;
    let cells: Vec<(usize, RigPreset)> = (0..seeds.len())
        .flat_map(|i| presets.iter().map(move |&p| (i, p)))
        .collect();
    cells
        .par_iter()
        .map(|&(i, preset)| {
            let out = run_single(scenario, preset, seeds[i], &gt, &frames[i])?;
            visit(&out)?;
            log::debug!(
                "{} seed {}: rot MAE {:.5} pos MAE {:.5}",
                preset,
                seeds[i],
                out.summary.rot_mae,
                out.summary.pos_mae
            );
            Ok(RunRecord::from(&out))
        })
        .collect()
}

pub fn run_experiment(
    scenario: &Scenario,
    presets: &[RigPreset],
    seeds: &[u64],
) -> Result<Vec<RunRecord>, ScenarioError> {
    run_grid(scenario, presets, seeds, |_| Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedSigma {
    pub gyro: f64,
    pub accel: f64,
}

/// One row of the JSON report: seed-averaged metrics of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub config: String,
    pub seeds: Vec<u64>,
    pub rot_mae: f64,
    pub rot_rmse: f64,
    pub pos_mae: f64,
    pub pos_rmse: f64,
    pub fused_sigma: FusedSigma,
    pub weights_gyro: Vec<f64>,
    pub weights_accel: Vec<f64>,
}

fn mean(x: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Seed-averaged report per configuration, in first-appearance order.
pub fn config_reports(records: &[RunRecord]) -> Vec<ConfigReport> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = r.summary.config.as_str();
        if !groups.contains_key(key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|name| {
            let g = &groups[name];
            let mut seeds: Vec<u64> = g.iter().map(|r| r.summary.seed).collect();
            seeds.sort_unstable();
            ConfigReport {
                config: name.to_string(),
                seeds,
                rot_mae: mean(g.iter().map(|r| r.summary.rot_mae)),
                rot_rmse: mean(g.iter().map(|r| r.summary.rot_rmse)),
                pos_mae: mean(g.iter().map(|r| r.summary.pos_mae)),
                pos_rmse: mean(g.iter().map(|r| r.summary.pos_rmse)),
                fused_sigma: FusedSigma {
                    gyro: g[0].fused_sigma_g,
                    accel: g[0].fused_sigma_a,
                },
                weights_gyro: g[0].weights_gyro.clone(),
                weights_accel: g[0].weights_accel.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Rotation,
    Position,
}

/// One ordering asserted between seed-mean MAEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrendClaim {
    /// Strictly decreasing along the listed configurations.
    Decreasing { channel: Channel, chain: Vec<String> },
    /// `worse` has mean MAE at least that of `better`.
    NotBetter { channel: Channel, worse: String, better: String },
}

impl TrendClaim {
    fn holds(&self, means: &BTreeMap<(String, Channel), f64>) -> Option<bool> {
        match self {
            Self::Decreasing { channel, chain } => {
                let vals: Option<Vec<f64>> = chain.iter().map(|c| means.get(&(c.clone(), *channel)).copied()).collect();
                vals.map(|v| v.windows(2).all(|w| w[1] < w[0]))
            }
            Self::NotBetter { channel, worse, better } => {
                let w = means.get(&(worse.clone(), *channel))?;
                let b = means.get(&(better.clone(), *channel))?;
                Some(w >= b)
            }
        }
    }

    pub fn describe(&self) -> String {
        let ch = |c: &Channel| match c {
            Channel::Rotation => "rot",
            Channel::Position => "pos",
        };
        match self {
            Self::Decreasing { channel, chain } => format!("{} MAE {}", ch(channel), chain.join(" > ")),
            Self::NotBetter { channel, worse, better } => format!("{} MAE {worse} >= {better}", ch(channel)),
        }
    }
}

/// The claims checked by default: the symmetric chain decreases on both
/// channels and every asymmetric rig is no better than its counterpart.
pub fn default_claims(presets: &[RigPreset]) -> Vec<TrendClaim> {
    let mut claims = Vec::new();
    let chain: Vec<String> = [RigPreset::S0, RigPreset::S2, RigPreset::S4, RigPreset::S6]
        .iter()
        .filter(|p| presets.contains(p))
        .map(|p| p.name().to_string())
        .collect();
    for channel in [Channel::Rotation, Channel::Position] {
        if chain.len() >= 2 {
            claims.push(TrendClaim::Decreasing {
                channel,
                chain: chain.clone(),
            });
        }
        for p in presets {
            if let Some(s) = p.symmetric_counterpart().filter(|s| presets.contains(s)) {
                claims.push(TrendClaim::NotBetter {
                    channel,
                    worse: p.name().to_string(),
                    better: s.name().to_string(),
                });
            }
        }
    }
    claims
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimOutcome {
    pub claim: String,
    pub holds_on_means: bool,
    /// Fraction of bootstrap resamples in which the claim held.
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub resamples: usize,
    pub threshold: f64,
    pub claims: Vec<ClaimOutcome>,
    /// Fraction of resamples in which every claim held at once.
    pub joint_support: f64,
}

impl TrendReport {
    pub fn passed(&self) -> bool {
        self.joint_support >= self.threshold && self.claims.iter().all(|c| c.holds_on_means)
    }
}

fn seed_means(by_seed: &[BTreeMap<(String, Channel), f64>], pick: impl Iterator<Item = usize>) -> BTreeMap<(String, Channel), f64> {
    let mut sum: BTreeMap<(String, Channel), (f64, usize)> = BTreeMap::new();
    for i in pick {
        for (k, v) in &by_seed[i] {
            let e = sum.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    sum.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Paired bootstrap over seeds: each resample draws seeds with replacement and
/// keeps every configuration of a drawn seed together.
pub fn bootstrap_trends(
    records: &[RunRecord],
    claims: &[TrendClaim],
    resamples: usize,
    threshold: f64,
    seed: u64,
) -> TrendReport {
    let mut seeds: Vec<u64> = records.iter().map(|r| r.summary.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let by_seed: Vec<BTreeMap<(String, Channel), f64>> = seeds
        .iter()
        .map(|s| {
            records
                .iter()
                .filter(|r| r.summary.seed == *s)
                .flat_map(|r| {
                    [
                        ((r.summary.config.clone(), Channel::Rotation), r.summary.rot_mae),
                        ((r.summary.config.clone(), Channel::Position), r.summary.pos_mae),
                    ]
                })
                .collect()
        })
        .collect();
    let full = seed_means(&by_seed, 0..seeds.len());
    let mut hits = vec![0usize; claims.len()];
    let mut joint = 0usize;
    let mut rng = substream(seed, "bootstrap", 0);
    for _ in 0..resamples {
        let pick: Vec<usize> = (0..seeds.len()).map(|_| rng.random_range(0..seeds.len())).collect();
        let means = seed_means(&by_seed, pick.into_iter());
        let mut all = true;
        for (h, c) in hits.iter_mut().zip(claims) {
            if c.holds(&means) == Some(true) {
                *h += 1;
            } else {
                all = false;
            }
        }
        joint += usize::from(all);
    }
    let frac = |h: usize| if resamples == 0 { 0.0 } else { h as f64 / resamples as f64 };
    TrendReport {
        resamples,
        threshold,
        claims: claims
            .iter()
            .zip(&hits)
            .map(|(c, &h)| ClaimOutcome {
                claim: c.describe(),
                holds_on_means: c.holds(&full) == Some(true),
                support: frac(h),
            })
            .collect(),
        joint_support: frac(joint),
    }
}
