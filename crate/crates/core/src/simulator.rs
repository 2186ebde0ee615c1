//! Monte-Carlo simulation of the controlled chain under a strategy profile.
//!
//! Each state carries a clock ticking at its largest exit rate; actions are
//! redrawn from the stationary mixtures at every tick and the reward integral
//! is accumulated in closed form between ticks. Every path
//! owns a ChaCha stream selected by its index, so results do not depend on
//! how paths are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{EstimateMethod, PayoffEstimate, StrategyProfile};
use crate::game_model::GameModel;

pub const DEFAULT_BIAS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub num_paths: usize,
    pub master_seed: u64,
    /// Paths still running at this time are cut off without terminal payoff.
    pub horizon_cap: f64,
}

impl SimulationConfig {
    /// Chooses the horizon so the truncated tail contributes at most `bias`.
    pub fn with_bias(model: &GameModel, num_paths: usize, master_seed: u64, bias: f64) -> Self {
        SimulationConfig {
            num_paths,
            master_seed,
            horizon_cap: horizon_for_bias(model, bias),
        }
    }
}

/// Smallest horizon `H` with `e^{-alpha H} (r_max / alpha + max psi1) <= bias`.
pub fn horizon_for_bias(model: &GameModel, bias: f64) -> f64 {
    let alpha = model.alpha();
    let scale = model.reward_max() / alpha + model.psi1_max();
    (scale / bias).max(1.0).ln() / alpha
}

/// Upper bound on the payoff lost by cutting paths at `horizon`.
pub fn horizon_bias(model: &GameModel, horizon: f64) -> f64 {
    let alpha = model.alpha();
    (-alpha * horizon).exp() * (model.reward_max() / alpha + model.psi1_max())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    P1Stop,
    P2Stop,
    Horizon,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::P1Stop => "P1_STOP",
            StopReason::P2Stop => "P2_STOP",
            StopReason::Horizon => "HORIZON",
        }
    }
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Time of each clock tick, starting at 0. A tick may leave the state
    /// unchanged, in which case it repeats in `states`.
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    /// Action pair drawn at each tick before stopping, in order.
    pub actions: Vec<(usize, usize)>,
    pub stop_reason: StopReason,
    /// Stopping time, or the horizon.
    pub end_time: f64,
}

/// Receives the events of a path as it is generated.
trait PathVisitor {
    fn enter(&mut self, state: usize, time: f64);
    fn sojourn(&mut self, state: usize, a: usize, b: usize, from: f64, to: f64);
    fn finish(&mut self, state: usize, reason: StopReason, time: f64);
}

impl PathVisitor for PathRecord {
    fn enter(&mut self, state: usize, time: f64) {
        self.states.push(state);
        self.jump_times.push(time);
    }

    fn sojourn(&mut self, _: usize, a: usize, b: usize, _: f64, _: f64) {
        self.actions.push((a, b));
    }

    fn finish(&mut self, _: usize, reason: StopReason, time: f64) {
        self.stop_reason = reason;
        self.end_time = time;
    }
}

/// Discounted payoff accumulated along a path.
struct Payoff<'a> {
    model: &'a GameModel,
    total: f64,
}

impl PathVisitor for Payoff<'_> {
    fn enter(&mut self, _: usize, _: f64) {}

    fn sojourn(&mut self, state: usize, a: usize, b: usize, from: f64, to: f64) {
        let alpha = self.model.alpha();
        let r = self.model.reward(state, a, b);
        self.total += r * ((-alpha * from).exp() - (-alpha * to).exp()) / alpha;
    }

    fn finish(&mut self, state: usize, reason: StopReason, time: f64) {
        let terminal = match reason {
            StopReason::P1Stop => self.model.psi1()[state],
            StopReason::P2Stop => self.model.psi2()[state],
            StopReason::Horizon => return,
        };
        self.total += (-self.model.alpha() * time).exp() * terminal;
    }
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

fn path_rng(master_seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path as u64);
    rng
}

/// Generates one path under the relaxed (mixed-extension) dynamics.
///
/// Each state runs a clock of rate `q(i) = max_{a,b} q(i|a,b)`; actions are
/// redrawn at every tick and the tick moves to `j` with probability
/// `q(j|i,a,b) / q(i)`, staying put otherwise. Because the tick rate does
/// not depend on the draw, the payoff has exactly the law of the generator
/// `sum_{a,b} phi(a) psi(b) q(.|i,a,b)`; drawing once per sojourn would not.
fn run_path(
    model: &GameModel,
    profile: &StrategyProfile,
    horizon: f64,
    initial: usize,
    rng: &mut ChaCha8Rng,
    visitor: &mut impl PathVisitor,
) {
    let mut state = initial;
    let mut time = 0.0;
    visitor.enter(state, time);
    loop {
        // tie rule: the maximizer's stop takes precedence
        if profile.stop2.contains(&state) {
            return visitor.finish(state, StopReason::P2Stop, time);
        }
        if profile.stop1.contains(&state) {
            return visitor.finish(state, StopReason::P1Stop, time);
        }
        let a = sample_index(rng, &profile.phi[state]);
        let b = sample_index(rng, &profile.psi[state]);
        let clock = model.q_max(state);
        if !(clock > 0.0) {
            visitor.sojourn(state, a, b, time, horizon);
            return visitor.finish(state, StopReason::Horizon, horizon);
        }
        let u: f64 = rng.random();
        let hold = -(1.0 - u).ln() / clock;
        if time + hold >= horizon {
            visitor.sojourn(state, a, b, time, horizon);
            return visitor.finish(state, StopReason::Horizon, horizon);
        }
        visitor.sojourn(state, a, b, time, time + hold);
        time += hold;
        let target = rng.random::<f64>() * clock;
        let mut acc = 0.0;
        for &(j, q) in &model.rate_row(state, a, b).off_diagonal {
            acc += q;
            if target < acc {
                state = j;
                break;
            }
        }
        visitor.enter(state, time);
    }
}

fn check_inputs(model: &GameModel, profile: &StrategyProfile, cfg: &SimulationConfig, initial: usize) -> Result<()> {
    profile.validate(model)?;
    if initial >= model.num_states() {
        return Err(Error::Invalid(format!("initial state {initial} outside state space")));
    }
    if cfg.num_paths == 0 {
        return Err(Error::Invalid("need at least one path".into()));
    }
    if !(cfg.horizon_cap > 0.0) {
        return Err(Error::Invalid("horizon must be positive".into()));
    }
    Ok(())
}

/// Simulates `cfg.num_paths` trajectories from `initial`.
pub fn simulate_paths(
    model: &GameModel,
    profile: &StrategyProfile,
    cfg: &SimulationConfig,
    initial: usize,
) -> Result<Vec<PathRecord>> {
    check_inputs(model, profile, cfg, initial)?;
    Ok((0..cfg.num_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.master_seed, k);
            let mut record = PathRecord {
                jump_times: Vec::new(),
                states: Vec::new(),
                actions: Vec::new(),
                stop_reason: StopReason::Horizon,
                end_time: 0.0,
            };
            run_path(model, profile, cfg.horizon_cap, initial, &mut rng, &mut record);
            record
        })
        .collect())
}

/// Per-path discounted payoffs from `initial`, without storing the paths.
/// Identical to replaying [`simulate_paths`] output through the estimator.
pub fn simulate_payoffs(
    model: &GameModel,
    profile: &StrategyProfile,
    cfg: &SimulationConfig,
    initial: usize,
) -> Result<Vec<f64>> {
    check_inputs(model, profile, cfg, initial)?;
    Ok((0..cfg.num_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.master_seed, k);
            let mut payoff = Payoff { model, total: 0.0 };
            run_path(model, profile, cfg.horizon_cap, initial, &mut rng, &mut payoff);
            payoff.total
        })
        .collect())
}

/// Discounted payoff of a recorded path.
pub fn path_payoff(model: &GameModel, path: &PathRecord) -> f64 {
    let mut payoff = Payoff { model, total: 0.0 };
    for (k, &(a, b)) in path.actions.iter().enumerate() {
        let to = path.jump_times.get(k + 1).copied().unwrap_or(path.end_time);
        payoff.sojourn(path.states[k], a, b, path.jump_times[k], to);
    }
    let last = *path.states.last().expect("path visits its initial state");
    payoff.finish(last, path.stop_reason, path.end_time);
    payoff.total
}

/// Sample mean and standard error, reduced in index order.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean discounted payoff and standard error per initial state.
pub fn estimate_payoff(paths: &[PathRecord], model: &GameModel, profile: &StrategyProfile) -> Result<PayoffEstimate> {
    profile.validate(model)?;
    let n = model.num_states();
    let mut by_state: Vec<Vec<f64>> = vec![Vec::new(); n];
    for path in paths {
        let Some(&first) = path.states.first() else {
            return Err(Error::Invalid("empty path record".into()));
        };
        if first >= n {
            return Err(Error::Invalid(format!("path starts outside state space at {first}")));
        }
        by_state[first].push(path_payoff(model, path));
    }
    let (values, stderr) = by_state
        .iter()
        .map(|s| {
            if s.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_and_stderr(s)
            }
        })
        .unzip();
    Ok(PayoffEstimate {
        values,
        method: EstimateMethod::MonteCarlo,
        stderr: Some(stderr),
    })
}

/// Writes one row per visited state:
/// `path_id, jump_time, state, action_p1, action_p2, stop_reason`.
/// Actions are those drawn for the sojourn starting at that row; the stop
/// reason appears on each path's last row.
pub fn write_paths_csv<W: Write>(model: &GameModel, paths: &[PathRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["path_id", "jump_time", "state", "action_p1", "action_p2", "stop_reason"])
        .map_err(csv_err)?;
    for (id, path) in paths.iter().enumerate() {
        let last = path.states.len() - 1;
        for (k, (&state, &time)) in path.states.iter().zip(&path.jump_times).enumerate() {
            let (a, b) = match path.actions.get(k) {
                Some(&(a, b)) => (model.actions_p1()[a].as_str(), model.actions_p2()[b].as_str()),
                None => ("", ""),
            };
            let reason = if k == last { path.stop_reason.as_str() } else { "" };
            w.write_record([
                id.to_string().as_str(),
                crate::report::format_float(time).as_str(),
                state.to_string().as_str(),
                a,
                b,
                reason,
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::ModelBuilder;

    fn death_chain() -> GameModel {
        let mut b = ModelBuilder::with_action_counts(2, 1, 1, 1.0);
        b.rate_all(1, 0, 1.0).unwrap();
        b.obstacles(0, 2.0, 0.0).unwrap().obstacles(1, 2.0, 0.0).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn immediate_stop_has_empty_path() {
        let model = death_chain();
        let mut p = StrategyProfile::first_actions(&model);
        p.stop2.insert(1);
        let cfg = SimulationConfig {
            num_paths: 3,
            master_seed: 1,
            horizon_cap: 10.0,
        };
        let paths = simulate_paths(&model, &p, &cfg, 1).unwrap();
        for path in &paths {
            assert_eq!(path.states, vec![1]);
            assert!(path.actions.is_empty());
            assert_eq!(path.stop_reason, StopReason::P2Stop);
        }
        let est = estimate_payoff(&paths, &model, &p).unwrap();
        assert_eq!(est.values[1], 0.0);
        assert_eq!(est.stderr.as_ref().unwrap()[1], 0.0);
        assert!(est.values[0].is_nan());
    }

    #[test]
    fn death_chain_hitting_time() {
        let model = death_chain();
        let mut p = StrategyProfile::first_actions(&model);
        p.stop1.insert(0);
        let cfg = SimulationConfig {
            num_paths: 20_000,
            master_seed: 7,
            horizon_cap: 1e6,
        };
        let paths = simulate_paths(&model, &p, &cfg, 1).unwrap();
        let times: Vec<f64> = paths.iter().map(|p| p.end_time).collect();
        let (mean, se) = mean_and_stderr(&times);
        assert!((mean - 1.0).abs() <= 3.5 * se, "mean {mean} se {se}");
        assert!(paths.iter().all(|p| p.stop_reason == StopReason::P1Stop));
    }

    #[test]
    fn absorbing_state_runs_to_horizon() {
        let mut b = ModelBuilder::with_action_counts(1, 1, 1, 0.5);
        b.reward_all(0, 1.0).unwrap().obstacles(0, 10.0, 0.0).unwrap();
        let model = b.build().unwrap();
        let p = StrategyProfile::first_actions(&model);
        let cfg = SimulationConfig {
            num_paths: 4,
            master_seed: 0,
            horizon_cap: 3.0,
        };
        let paths = simulate_paths(&model, &p, &cfg, 0).unwrap();
        let expected = (1.0 - (-0.5f64 * 3.0).exp()) / 0.5;
        for path in &paths {
            assert_eq!(path.stop_reason, StopReason::Horizon);
            assert!((path_payoff(&model, path) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn streaming_matches_recorded_paths() {
        let mut b = ModelBuilder::with_action_counts(3, 2, 2, 0.7);
        for i in 0..3 {
            b.rate(i, 0, 0, (i + 1) % 3, 1.0).unwrap();
            b.rate(i, 1, 1, (i + 2) % 3, 2.5).unwrap();
            b.rate(i, 0, 1, (i + 1) % 3, 0.5).unwrap();
            b.reward(i, 1, 0, 1.0 + i as f64).unwrap();
            b.obstacles(i, 9.0, 0.1).unwrap();
        }
        let model = b.build().unwrap();
        let mut p = StrategyProfile::first_actions(&model);
        p.phi = vec![vec![0.3, 0.7]; 3];
        p.psi = vec![vec![0.6, 0.4]; 3];
        p.stop1.insert(2);
        let cfg = SimulationConfig::with_bias(&model, 500, 42, DEFAULT_BIAS);
        let paths = simulate_paths(&model, &p, &cfg, 0).unwrap();
        let streamed = simulate_payoffs(&model, &p, &cfg, 0).unwrap();
        let replayed: Vec<f64> = paths.iter().map(|x| path_payoff(&model, x)).collect();
        assert_eq!(streamed, replayed);
        for path in &paths {
            assert_eq!(path.states[0], 0);
            assert!(path.jump_times.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(paths, simulate_paths(&model, &p, &cfg, 0).unwrap());
    }

    #[test]
    fn horizon_bias_bound_holds() {
        let model = death_chain();
        let h = horizon_for_bias(&model, 1e-6);
        assert!(horizon_bias(&model, h) <= 1e-6 * (1.0 + 1e-12));
    }

    #[test]
    fn csv_dump_layout() {
        let model = death_chain();
        let mut p = StrategyProfile::first_actions(&model);
        p.stop1.insert(0);
        let cfg = SimulationConfig {
            num_paths: 2,
            master_seed: 3,
            horizon_cap: 100.0,
        };
        let paths = simulate_paths(&model, &p, &cfg, 1).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&model, &paths, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,jump_time,state,action_p1,action_p2,stop_reason");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0,0,1,0,0,");
        assert!(lines[2].starts_with("0,") && lines[2].ends_with(",0,,,P1_STOP"));
    }
}
