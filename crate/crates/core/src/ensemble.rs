//! Parallel trajectory ensembles and the statistical test battery.
//!
//! Trajectory `i` of an ensemble always uses noise stream `i`, so the
//! resulting statistics are a pure function of (scenario, n_traj, base seed,
//! schedule) regardless of worker count or execution order. Merging partial
//! ensembles re-finalizes from the per-trajectory summaries in index order,
//! which makes the merge associative down to the last bit.
//!
//! Early-terminated trajectories are padded onto the recording grid with
//! their stopped values; for martingale statistics this is exactly the
//! stopped process.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::integrator::{
    integrate_trajectory, integrate_with_path, Branch, CollapseTerm, Completion, IntegrateError,
    Schedule, TrajectoryProblem, TrajectoryRecord,
};
use crate::noise::{sample_path, NoiseConfig, NoisePath};
use crate::state::{
    reduced_density, BipartitePartition, DensityMatrix, HermitianOperator, StateError,
    StateVector, Subsystem,
};
use crate::stats;

/// Ensemble runs abort if more than this fraction of trajectories fail.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("{failures} of {n_traj} trajectories failed integration")]
    TooManyFailures { failures: u64, n_traj: u64 },
    #[error("ensembles record on different grids and cannot merge")]
    GridMismatch,
    #[error("density tracking needs stored states and dimension <= 4, got dim {0}")]
    DensityUnavailable(usize),
    #[error("ensemble needs at least one trajectory")]
    Empty,
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// What per-trajectory density information to retain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKeep {
    None,
    /// Full |ψ⟩⟨ψ| series; requires dim <= 4 and stored states.
    Full,
    /// Reduced density of one subsystem; requires stored states.
    Reduced(BipartitePartition, Subsystem),
}

/// Per-trajectory digest, grid-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub index: u64,
    pub outcome: Option<String>,
    pub had_completion: bool,
    pub steps_taken: usize,
    pub series: Vec<(String, Vec<f64>)>,
    pub rho: Option<Vec<DensityMatrix>>,
    pub drift_max: f64,
}

impl TrajectorySummary {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

/// Mean and standard error of one recorded quantity over the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSeries {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Deterministic ensemble statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_traj: u64,
    pub failures: u64,
    pub unresolved: u64,
    pub outcome_counts: BTreeMap<String, u64>,
    pub times: Vec<f64>,
    pub mean_series: BTreeMap<String, MeanSeries>,
    pub mean_density: Option<Vec<DensityMatrix>>,
    pub summaries: Vec<TrajectorySummary>,
}

impl EnsembleStats {
    pub fn resolved(&self) -> u64 {
        self.outcome_counts.values().sum()
    }

    pub fn mean_series(&self, name: &str) -> Option<&MeanSeries> {
        self.mean_series.get(name)
    }

    /// Merges two partial ensembles; associative in any grouping.
    pub fn merge(mut self, mut other: EnsembleStats) -> Result<EnsembleStats, EnsembleError> {
        if self.times != other.times {
            return Err(EnsembleError::GridMismatch);
        }
        let times = std::mem::take(&mut self.times);
        let mut summaries = std::mem::take(&mut self.summaries);
        summaries.append(&mut other.summaries);
        finalize(
            summaries,
            times,
            self.n_traj + other.n_traj,
            self.failures + other.failures,
        )
    }
}

/// Pads recorded samples onto the grid; past termination the stopped value is
/// held. Recorded times are exact multiples of dt, so grid hits compare
/// exactly.
fn align_to_grid(times: &[f64], values: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut cursor = 0;
    for &t in grid {
        while cursor + 1 < times.len() && times[cursor + 1] <= t {
            cursor += 1;
        }
        out.push(values[cursor]);
    }
    out
}

fn summarize(
    record: &TrajectoryRecord,
    index: u64,
    grid: &[f64],
    keep: DensityKeep,
) -> Result<TrajectorySummary, EnsembleError> {
    let mut series: Vec<(String, Vec<f64>)> = record
        .series
        .iter()
        .map(|(name, values)| (name.clone(), align_to_grid(&record.times, values, grid)))
        .collect();
    series.push((
        "norm".into(),
        align_to_grid(&record.times, &record.norms, grid),
    ));

    let rho = match keep {
        DensityKeep::None => None,
        DensityKeep::Full | DensityKeep::Reduced(..) => {
            if record.states.is_empty() {
                return Err(EnsembleError::DensityUnavailable(0));
            }
            let per_record: Vec<DensityMatrix> = record
                .states
                .iter()
                .map(|state| match keep {
                    DensityKeep::Full => {
                        if state.dim() > 4 {
                            Err(EnsembleError::DensityUnavailable(state.dim()))
                        } else {
                            Ok(DensityMatrix::from_pure(state))
                        }
                    }
                    DensityKeep::Reduced(part, side) => {
                        reduced_density(state, part, side).map_err(EnsembleError::from)
                    }
                    DensityKeep::None => unreachable!(),
                })
                .collect::<Result<_, _>>()?;
            let mut out = Vec::with_capacity(grid.len());
            let mut cursor = 0;
            for &t in grid {
                while cursor + 1 < record.times.len() && record.times[cursor + 1] <= t {
                    cursor += 1;
                }
                out.push(per_record[cursor].clone());
            }
            Some(out)
        }
    };

    Ok(TrajectorySummary {
        index,
        outcome: record.outcome.clone(),
        had_completion: record.completion_threshold.is_some(),
        steps_taken: record.steps_taken,
        series,
        rho,
        drift_max: record.drift_max,
    })
}

fn finalize(
    mut summaries: Vec<TrajectorySummary>,
    times: Vec<f64>,
    n_traj: u64,
    failures: u64,
) -> Result<EnsembleStats, EnsembleError> {
    summaries.sort_by_key(|s| s.index);
    if summaries.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let n = summaries.len();

    let mut outcome_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut unresolved = 0;
    for s in &summaries {
        match (&s.outcome, s.had_completion) {
            (Some(label), _) => *outcome_counts.entry(label.clone()).or_insert(0) += 1,
            (None, true) => unresolved += 1,
            (None, false) => {}
        }
    }

    let mut mean_series = BTreeMap::new();
    for (name, _) in &summaries[0].series {
        let mut sum = vec![0.0; times.len()];
        let mut sum_sq = vec![0.0; times.len()];
        for s in &summaries {
            let values = s.series(name).expect("uniform series across ensemble");
            for (t, &v) in values.iter().enumerate() {
                sum[t] += v;
                sum_sq[t] += v * v;
            }
        }
        let nf = n as f64;
        let stderr: Vec<f64> = sum
            .iter()
            .zip(&sum_sq)
            .map(|(&s1, &s2)| {
                if n < 2 {
                    return 0.0;
                }
                let var = (s2 - s1 * s1 / nf) / (nf - 1.0);
                (var.max(0.0) / nf).sqrt()
            })
            .collect();
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        mean_series.insert(name.clone(), MeanSeries { mean, stderr });
    }

    let mean_density = if let Some(first) = summaries[0].rho.as_ref() {
        let dim = first[0].dim();
        let mut acc: Vec<DensityMatrix> =
            (0..times.len()).map(|_| DensityMatrix::zero(dim)).collect();
        for s in &summaries {
            for (slot, rho) in acc.iter_mut().zip(s.rho.as_ref().unwrap()) {
                slot.add_scaled(rho, 1.0);
            }
        }
        let w = 1.0 / n as f64;
        for slot in &mut acc {
            slot.scale(w);
        }
        Some(acc)
    } else {
        None
    };

    Ok(EnsembleStats {
        n_traj,
        failures,
        unresolved,
        outcome_counts,
        times,
        mean_series,
        mean_density,
        summaries,
    })
}

/// Runs `n_traj` trajectories in parallel; `run(i)` must draw its noise from
/// stream `i`. Fails if more than [`MAX_FAILURE_FRACTION`] of trajectories
/// error.
pub fn run_ensemble<F>(
    n_traj: u64,
    grid: &[f64],
    keep: DensityKeep,
    run: F,
) -> Result<EnsembleStats, EnsembleError>
where
    F: Fn(u64) -> Result<TrajectoryRecord, IntegrateError> + Sync,
{
    if n_traj == 0 {
        return Err(EnsembleError::Empty);
    }
    let results: Vec<Result<TrajectorySummary, EnsembleError>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let record = run(i)?;
            summarize(&record, i, grid, keep)
        })
        .collect();

    let mut summaries = Vec::with_capacity(results.len());
    let mut failures = 0u64;
    let mut hard_error = None;
    for r in results {
        match r {
            Ok(s) => summaries.push(s),
            Err(EnsembleError::Integrate(_)) => failures += 1,
            Err(e) => hard_error = Some(e),
        }
    }
    if let Some(e) = hard_error {
        return Err(e);
    }
    if failures as f64 > MAX_FAILURE_FRACTION * n_traj as f64 {
        return Err(EnsembleError::TooManyFailures { failures, n_traj });
    }
    finalize(summaries, grid.to_vec(), n_traj, failures)
}

/// Convenience runner: a fresh problem per trajectory, driven by the base
/// noise config on stream `i`.
pub fn run_problem_ensemble<F>(
    n_traj: u64,
    base_noise: NoiseConfig,
    keep: DensityKeep,
    make_problem: F,
) -> Result<EnsembleStats, EnsembleError>
where
    F: Fn(u64) -> TrajectoryProblem + Sync,
{
    let grid = make_problem(0).schedule.grid_times();
    run_ensemble(n_traj, &grid, keep, |i| {
        integrate_trajectory(make_problem(i), &base_noise.with_trajectory(i))
    })
}

/// Chi-square significance for outcome-frequency verdicts. Chosen so the full
/// statistical suite keeps its combined false-failure probability under a few
/// percent.
pub const BORN_SIGNIFICANCE: f64 = 1e-3;

/// Verdict of a Born-frequency test.
#[derive(Debug, Clone, PartialEq)]
pub struct BornVerdict {
    pub z_scores: Vec<(String, f64)>,
    pub chi_square: f64,
    pub degrees: usize,
    pub p_value: f64,
    pub pass: bool,
}

impl BornVerdict {
    pub fn max_abs_z(&self) -> f64 {
        self.z_scores
            .iter()
            .map(|(_, z)| z.abs())
            .fold(0.0, f64::max)
    }
}

/// Compares outcome counts against expected probabilities (summing to one).
/// A zero-probability label with a nonzero count fails outright.
pub fn born_test(stats_in: &EnsembleStats, expected: &[(String, f64)]) -> BornVerdict {
    let total: u64 = expected
        .iter()
        .map(|(label, _)| stats_in.outcome_counts.get(label).copied().unwrap_or(0))
        .sum();
    let mut z_scores = Vec::new();
    let mut observed = Vec::new();
    let mut expect_counts = Vec::new();
    let mut impossible = false;
    for (label, p) in expected {
        let count = stats_in.outcome_counts.get(label).copied().unwrap_or(0);
        if *p == 0.0 {
            if count > 0 {
                impossible = true;
            }
            z_scores.push((label.clone(), if count > 0 { f64::INFINITY } else { 0.0 }));
            continue;
        }
        observed.push(count as f64);
        expect_counts.push(p * total as f64);
        z_scores.push((label.clone(), stats::binomial_z(count, total, *p)));
    }
    let (chi_square, p_value) = if observed.len() >= 2 {
        stats::chi_square_test(&observed, &expect_counts)
    } else {
        (0.0, 1.0)
    };
    BornVerdict {
        z_scores,
        chi_square,
        degrees: observed.len().saturating_sub(1),
        p_value,
        pass: !impossible && p_value >= BORN_SIGNIFICANCE,
    }
}

/// Max matrix-element deviation of the ensemble-mean density from a
/// deterministic reference evolution.
pub fn mean_density_check<F>(stats_in: &EnsembleStats, reference: F) -> Result<f64, EnsembleError>
where
    F: Fn(f64) -> DensityMatrix,
{
    let mean = stats_in
        .mean_density
        .as_ref()
        .ok_or(EnsembleError::DensityUnavailable(0))?;
    let mut max_dev: f64 = 0.0;
    for (t, rho) in stats_in.times.iter().zip(mean) {
        let want = reference(*t);
        for i in 0..rho.dim() {
            for j in 0..rho.dim() {
                max_dev = max_dev.max((rho.entry(i, j) - want.entry(i, j)).norm());
            }
        }
    }
    Ok(max_dev)
}

/// Exponential decay rate fitted to the ensemble-mean off-diagonal of a
/// two-level density, with a jackknife standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub lambda: f64,
    pub stderr: f64,
    pub window: usize,
}

pub fn fit_offdiagonal_decay(stats_in: &EnsembleStats) -> Result<DecayFit, EnsembleError> {
    let mean = stats_in
        .mean_density
        .as_ref()
        .ok_or(EnsembleError::DensityUnavailable(0))?;
    let n = stats_in.summaries.len();
    let per_traj: Vec<Vec<f64>> = stats_in
        .summaries
        .iter()
        .map(|s| {
            s.rho
                .as_ref()
                .unwrap()
                .iter()
                .map(|r| r.entry(0, 1).re)
                .collect()
        })
        .collect();
    let sums: Vec<f64> = (0..stats_in.times.len())
        .map(|t| per_traj.iter().map(|series| series[t]).sum())
        .collect();

    // Fit window: from t = 0 until the pooled mean falls below 5% of its
    // initial value; the same window is reused for every jackknife replicate.
    let initial = mean[0].entry(0, 1).re;
    let floor = 0.05 * initial.abs();
    let mut window = stats_in.times.len();
    for (t, rho) in mean.iter().enumerate() {
        if rho.entry(0, 1).re.abs() < floor {
            window = t.max(3);
            break;
        }
    }
    let window = window.min(stats_in.times.len());

    let fit = |leave_out: Option<usize>| -> f64 {
        let nf = match leave_out {
            Some(_) => (n - 1) as f64,
            None => n as f64,
        };
        let mut xs = Vec::with_capacity(window);
        let mut ys = Vec::with_capacity(window);
        for t in 0..window {
            let mut s = sums[t];
            if let Some(i) = leave_out {
                s -= per_traj[i][t];
            }
            let value = (s / nf).abs();
            if value > 0.0 {
                xs.push(stats_in.times[t]);
                ys.push(value.ln());
            }
        }
        let (slope, _) = stats::linear_fit(&xs, &ys);
        -slope
    };

    let lambda = fit(None);
    let loo: Vec<f64> = (0..n).map(|i| fit(Some(i))).collect();
    Ok(DecayFit {
        lambda,
        stderr: stats::jackknife_stderr(&loo),
        window,
    })
}

/// No-signaling test configuration: a deviation collapse term acts on one
/// side of a bipartite state; the other side's ensemble-mean reduced density
/// is compared against the collapse-free evolution.
pub struct NoSignalingConfig {
    pub n_traj: u64,
    pub seed: u64,
    /// Collapse-basis eigenvalues on the collapsing side.
    pub a: f64,
    pub b: f64,
    pub strength: f64,
    pub gamma: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub record_every: usize,
    /// Deterministic drift added to every noise increment, per unit time.
    /// Zero is the genuine dynamics; nonzero builds the biased negative
    /// control that the detector must flag.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoSignalingReport {
    pub trace_distance: f64,
    pub stderr: f64,
    pub z: f64,
    pub passes: bool,
}

pub fn no_signaling_test(
    initial: &StateVector,
    partition: BipartitePartition,
    collapse_on: Subsystem,
    cfg: &NoSignalingConfig,
) -> Result<NoSignalingReport, EnsembleError> {
    partition.check(initial.dim())?;
    let observe = match collapse_on {
        Subsystem::A => Subsystem::B,
        Subsystem::B => Subsystem::A,
    };
    // Local collapse basis lifted to the product space.
    let diag: Vec<f64> = (0..initial.dim())
        .map(|idx| {
            let (i, j) = (idx / partition.dim_b, idx % partition.dim_b);
            let local = match collapse_on {
                Subsystem::A => i,
                Subsystem::B => j,
            };
            if local == 0 {
                cfg.a
            } else {
                cfg.b
            }
        })
        .collect();
    let op = std::sync::Arc::new(HermitianOperator::from_diagonal(&diag));

    let schedule = Schedule::new(cfg.dt, cfg.n_steps, cfg.record_every).storing_states();
    let grid = schedule.grid_times();
    let keep = DensityKeep::Reduced(partition, observe);

    // Collapse-free reference: deterministic, a single trajectory suffices.
    let free = run_ensemble(1, &grid, keep, |i| {
        let problem = TrajectoryProblem::new(initial.clone(), schedule.clone());
        integrate_trajectory(problem, &NoiseConfig::new(cfg.seed, cfg.dt).with_trajectory(i))
    })?;

    let collapsed = run_ensemble(cfg.n_traj, &grid, keep, |i| {
        let problem = TrajectoryProblem::new(initial.clone(), schedule.clone()).with_term(
            CollapseTerm::fixed(op.clone(), cfg.strength, cfg.gamma),
        );
        let noise = NoiseConfig::new(cfg.seed, cfg.dt).with_trajectory(i);
        let mut path = sample_path(&noise, cfg.n_steps)?;
        if cfg.bias != 0.0 {
            let shift = Complex64::new(cfg.bias * cfg.dt, 0.0);
            path = NoisePath::from_increments(
                path.increments().iter().map(|z| z + shift).collect(),
                cfg.dt,
            );
        }
        integrate_with_path(problem, &path)
    })?;

    let last = grid.len() - 1;
    let mean_rho = &collapsed.mean_density.as_ref().unwrap()[last];
    let reference = &free.mean_density.as_ref().unwrap()[last];
    let trace_distance = mean_rho.trace_distance(reference);

    // Jackknife over the collapse-side trajectories.
    let n = collapsed.summaries.len();
    let mut sum = DensityMatrix::zero(mean_rho.dim());
    for s in &collapsed.summaries {
        sum.add_scaled(&s.rho.as_ref().unwrap()[last], 1.0);
    }
    let loo: Vec<f64> = collapsed
        .summaries
        .iter()
        .map(|s| {
            let mut rho = sum.clone();
            rho.add_scaled(&s.rho.as_ref().unwrap()[last], -1.0);
            rho.scale(1.0 / (n - 1) as f64);
            rho.trace_distance(reference)
        })
        .collect();
    let stderr = stats::jackknife_stderr(&loo);
    let z = if stderr > 0.0 {
        trace_distance / stderr
    } else {
        f64::INFINITY
    };
    Ok(NoSignalingReport {
        trace_distance,
        stderr,
        z,
        passes: trace_distance <= 5.0 * stderr,
    })
}

/// Bell state (|00⟩ + |11⟩)/√2 on a 2x2 partition.
pub fn bell_state() -> StateVector {
    let r = 0.5_f64.sqrt();
    StateVector::new(vec![
        Complex64::new(r, 0.0),
        Complex64::ZERO,
        Complex64::ZERO,
        Complex64::new(r, 0.0),
    ])
    .unwrap()
}

/// Completion over the two basis branches |x⟩ = index 0, |y⟩ = index 1.
pub fn two_level_completion(threshold: f64) -> Completion {
    Completion::new(vec![Branch::new("x", vec![0]), Branch::new("y", vec![1])])
        .with_threshold(threshold)
}
