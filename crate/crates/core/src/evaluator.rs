//! Exact payoff of fixed stationary strategies with hitting-time stopping
//! rules, one-sided best responses, and the sampled saddle-point certificate
//! built from both.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpi_solver::{uniformize, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::game_model::{GameModel, ValueFunction};

/// Residual bound every exact solve must meet.
pub const EXACT_RESIDUAL_TOL: f64 = 1e-10;

const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    /// The minimizer.
    P1,
    /// The maximizer.
    P2,
}

/// One player's stationary mixture and stopping set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfProfile {
    pub strategy: Vec<Vec<f64>>,
    pub stop: BTreeSet<usize>,
}

/// Both players' stationary controls and stopping sets. Each player stops on
/// first entry into their set; where the sets overlap the maximizer's payoff
/// `psi2` is paid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub stop1: BTreeSet<usize>,
    pub stop2: BTreeSet<usize>,
}

impl StrategyProfile {
    pub fn from_halves(p1: HalfProfile, p2: HalfProfile) -> Self {
        StrategyProfile {
            phi: p1.strategy,
            psi: p2.strategy,
            stop1: p1.stop,
            stop2: p2.stop,
        }
    }

    pub fn from_equilibrium(sol: &EquilibriumSolution) -> Self {
        StrategyProfile {
            phi: sol.phi_star.clone(),
            psi: sol.psi_star.clone(),
            stop1: sol.region_a1.iter().copied().collect(),
            stop2: sol.region_a2.iter().copied().collect(),
        }
    }

    pub fn half(&self, player: Player) -> HalfProfile {
        match player {
            Player::P1 => HalfProfile {
                strategy: self.phi.clone(),
                stop: self.stop1.clone(),
            },
            Player::P2 => HalfProfile {
                strategy: self.psi.clone(),
                stop: self.stop2.clone(),
            },
        }
    }

    /// Profile where both players always play their first action and never stop.
    pub fn first_actions(model: &GameModel) -> Self {
        let pure = |n: usize| {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            vec![v; model.num_states()]
        };
        StrategyProfile {
            phi: pure(model.num_actions_p1()),
            psi: pure(model.num_actions_p2()),
            stop1: BTreeSet::new(),
            stop2: BTreeSet::new(),
        }
    }

    pub fn validate(&self, model: &GameModel) -> Result<()> {
        check_mixtures("phi", &self.phi, model.num_states(), model.num_actions_p1())?;
        check_mixtures("psi", &self.psi, model.num_states(), model.num_actions_p2())?;
        check_states(&self.stop1, model.num_states())?;
        check_states(&self.stop2, model.num_states())
    }

    /// Terminal payoff at `i` if some player stops there.
    pub fn terminal(&self, model: &GameModel, i: usize) -> Option<f64> {
        if self.stop2.contains(&i) {
            Some(model.psi2()[i])
        } else if self.stop1.contains(&i) {
            Some(model.psi1()[i])
        } else {
            None
        }
    }
}

fn check_mixtures(what: &'static str, mix: &[Vec<f64>], states: usize, actions: usize) -> Result<()> {
    if mix.len() != states {
        return Err(Error::Dimension {
            what,
            expected: states,
            got: mix.len(),
        });
    }
    for (i, p) in mix.iter().enumerate() {
        if p.len() != actions {
            return Err(Error::Dimension {
                what,
                expected: actions,
                got: p.len(),
            });
        }
        let total: f64 = p.iter().sum();
        if p.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::Invalid(format!("{what}({i}) is not a probability vector")));
        }
    }
    Ok(())
}

fn check_states(set: &BTreeSet<usize>, states: usize) -> Result<()> {
    match set.iter().next_back() {
        Some(&s) if s >= states => Err(Error::Invalid(format!("stop state {s} outside state space"))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EstimateMethod {
    Exact,
    MonteCarlo,
}

/// Discounted payoff per initial state.
///
/// Monte-Carlo estimates cover only the states paths were started from;
/// the others hold `NaN` (serialized as `null`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub values: Vec<f64>,
    pub method: EstimateMethod,
    pub stderr: Option<Vec<f64>>,
}

/// Mixed extensions `r~(i)` and `q~(.|i)` of state `i` under the profile.
fn mixed_row(model: &GameModel, profile: &StrategyProfile, i: usize) -> (f64, Vec<(usize, f64)>) {
    let mut reward = 0.0;
    let mut rates: Vec<(usize, f64)> = Vec::new();
    for (a, &pa) in profile.phi[i].iter().enumerate() {
        for (b, &pb) in profile.psi[i].iter().enumerate() {
            let w = pa * pb;
            if w == 0.0 {
                continue;
            }
            reward += w * model.reward(i, a, b);
            for &(j, q) in &model.rate_row(i, a, b).off_diagonal {
                match rates.iter_mut().find(|(t, _)| *t == j) {
                    Some((_, acc)) => *acc += w * q,
                    None => rates.push((j, w * q)),
                }
            }
        }
    }
    (reward, rates)
}

/// Exact `J_alpha(i, profile)` for every initial state `i`.
///
/// Stopping states are fixed at their terminal payoff; on the remaining
/// states `(alpha + q~_out(i)) J(i) - sum_{j != i} q~(j|i) J(j) = r~(i)`,
/// a strictly diagonally dominant system.
pub fn exact_value(model: &GameModel, profile: &StrategyProfile) -> Result<PayoffEstimate> {
    profile.validate(model)?;
    let n = model.num_states();
    let alpha = model.alpha();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..n {
        if let Some(payoff) = profile.terminal(model, i) {
            a[(i, i)] = 1.0;
            rhs[i] = payoff;
            continue;
        }
        let (reward, rates) = mixed_row(model, profile, i);
        let out: f64 = rates.iter().map(|&(_, q)| q).sum();
        a[(i, i)] = alpha + out;
        for (j, q) in rates {
            a[(i, j)] -= q;
        }
        rhs[i] = reward;
    }
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("LU factorization failed".into()))?;
    // one step of iterative refinement
    let r = &rhs - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let residual = (&rhs - &a * &x).amax();
    if !(residual <= EXACT_RESIDUAL_TOL) {
        return Err(Error::SingularSystem(format!("residual {residual:e} above tolerance")));
    }
    Ok(PayoffEstimate {
        values: x.iter().copied().collect(),
        method: EstimateMethod::Exact,
        stderr: None,
    })
}

#[derive(Debug, Clone)]
pub struct BestResponseConfig {
    pub theta: f64,
    /// Bound on the distance of the returned value to the true best-response value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BestResponseConfig {
    fn default() -> Self {
        BestResponseConfig {
            theta: 1.0,
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

/// Best response of the free player against `fixed`, over stationary
/// controls and hitting-time stopping rules.
///
/// The fixed player's stop set is terminal. Elsewhere the free player's
/// one-sided operator (a max over pure columns, or min over pure rows, of the
/// stage game averaged over the fixed mixture, clamped by the free player's
/// own obstacle) is iterated until the contraction bound puts the iterate
/// within `tol` of its fixed point.
pub fn best_response(
    model: &GameModel,
    fixed_player: Player,
    fixed: &HalfProfile,
    cfg: &BestResponseConfig,
) -> Result<(ValueFunction, HalfProfile)> {
    let n = model.num_states();
    let (n1, n2) = (model.num_actions_p1(), model.num_actions_p2());
    let fixed_actions = match fixed_player {
        Player::P1 => n1,
        Player::P2 => n2,
    };
    check_mixtures("fixed strategy", &fixed.strategy, n, fixed_actions)?;
    check_states(&fixed.stop, n)?;
    let um = uniformize(model, cfg.theta)?;
    let (psi1, psi2) = (model.psi1(), model.psi2());
    let free_actions = match fixed_player {
        Player::P1 => n2,
        Player::P2 => n1,
    };

    // continuation value of each free action at state i
    let action_values = |i: usize, v: &[f64]| -> Vec<f64> {
        (0..free_actions)
            .map(|free| {
                fixed.strategy[i]
                    .iter()
                    .enumerate()
                    .filter(|&(_, &p)| p > 0.0)
                    .map(|(k, &p)| {
                        let (a, b) = match fixed_player {
                            Player::P1 => (k, free),
                            Player::P2 => (free, k),
                        };
                        p * um.stage_entry(i, a, b, v)
                    })
                    .sum()
            })
            .collect()
    };
    let best = |vals: &[f64]| -> (usize, f64) {
        let mut pick = (0, vals[0]);
        for (k, &x) in vals.iter().enumerate().skip(1) {
            let better = match fixed_player {
                Player::P1 => x > pick.1,
                Player::P2 => x < pick.1,
            };
            if better {
                pick = (k, x);
            }
        }
        pick
    };
    let terminal = |i: usize| match fixed_player {
        Player::P1 => psi1[i],
        Player::P2 => psi2[i],
    };
    let clamp = |i: usize, cont: f64| match fixed_player {
        Player::P1 => cont.max(psi2[i]),
        Player::P2 => cont.min(psi1[i]),
    };

    let beta = um.max_stage_discount();
    let factor = beta / (1.0 - beta);
    let mut v: Vec<f64> = (0..n)
        .map(|i| match (fixed.stop.contains(&i), fixed_player) {
            (true, _) => terminal(i),
            (false, Player::P1) => psi2[i],
            (false, Player::P2) => psi1[i],
        })
        .collect();
    let mut iterations = 0;
    loop {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if fixed.stop.contains(&i) {
                    terminal(i)
                } else {
                    clamp(i, best(&action_values(i, &v)).1)
                }
            })
            .collect();
        let step = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = next;
        if factor * step <= cfg.tol {
            break;
        }
        iterations += 1;
        if iterations >= cfg.max_iter {
            return Err(Error::MaxIterExceeded {
                iterations,
                residual: step,
            });
        }
    }

    let mut strategy = Vec::with_capacity(n);
    let mut stop = BTreeSet::new();
    for i in 0..n {
        let (k, cont) = best(&action_values(i, &v));
        let mut pure = vec![0.0; free_actions];
        pure[k] = 1.0;
        strategy.push(pure);
        if fixed.stop.contains(&i) {
            continue;
        }
        let stops = match fixed_player {
            Player::P1 => psi2[i] >= cont,
            Player::P2 => psi1[i] <= cont,
        };
        if stops {
            stop.insert(i);
        }
    }
    Ok((ValueFunction::unweighted(v), HalfProfile { strategy, stop }))
}

#[derive(Debug, Clone)]
pub struct SaddleConfig {
    /// Random stationary deviations per side.
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub best_response: BestResponseConfig,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        SaddleConfig {
            samples: 100,
            seed: 0,
            tol: 1e-6,
            best_response: BestResponseConfig::default(),
        }
    }
}

/// Gains available to each player by unilateral deviation from an equilibrium.
/// All gains are measured in the deviating player's favored direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleReport {
    pub tol: f64,
    /// `max_i J(i) - u*(i)` over sampled maximizer deviations.
    pub max_gain_p2: f64,
    /// `max_i u*(i) - J(i)` over sampled minimizer deviations.
    pub max_gain_p1: f64,
    /// `max_i BR_2(i) - u*(i)` against the minimizer's equilibrium half.
    pub best_response_gap_p2: f64,
    /// `max_i u*(i) - BR_1(i)` against the maximizer's equilibrium half.
    pub best_response_gap_p1: f64,
    /// `max_i |J(i) - u*(i)|` for the equilibrium profile itself.
    pub equilibrium_mismatch: f64,
    pub deviations_checked: usize,
}

impl SaddleReport {
    pub fn passed(&self) -> bool {
        self.max_gain_p1 <= self.tol
            && self.max_gain_p2 <= self.tol
            && self.best_response_gap_p1 <= self.tol
            && self.best_response_gap_p2 <= self.tol
            && self.equilibrium_mismatch <= 10.0 * self.tol
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Deviations of one side: random stationary mixtures (half keeping the
/// equilibrium stop set, half with a random one) and every single-state
/// toggle of the equilibrium stop set.
fn deviations(rng: &mut ChaCha8Rng, eq: &HalfProfile, actions: usize, samples: usize) -> Vec<HalfProfile> {
    let n = eq.strategy.len();
    let mut out = Vec::with_capacity(samples + n);
    for k in 0..samples {
        let strategy = (0..n).map(|_| random_simplex(rng, actions)).collect();
        let stop = if k % 2 == 0 {
            eq.stop.clone()
        } else {
            (0..n).filter(|_| rng.random_bool(0.5)).collect()
        };
        out.push(HalfProfile { strategy, stop });
    }
    for i in 0..n {
        let mut stop = eq.stop.clone();
        if !stop.remove(&i) {
            stop.insert(i);
        }
        out.push(HalfProfile {
            strategy: eq.strategy.clone(),
            stop,
        });
    }
    out
}

/// Checks that neither player gains more than `tol` from sampled unilateral
/// deviations or from an exact best response.
pub fn saddle_certificate(model: &GameModel, sol: &EquilibriumSolution, cfg: &SaddleConfig) -> Result<SaddleReport> {
    let eq = StrategyProfile::from_equilibrium(sol);
    let u = &sol.u_star.values;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let own = exact_value(model, &eq)?;
    let equilibrium_mismatch = max_diff(&own.values, u, |j, u| (j - u).abs());

    let (p1, p2) = (eq.half(Player::P1), eq.half(Player::P2));
    let mut max_gain_p2 = f64::NEG_INFINITY;
    let mut checked = 0;
    for dev in deviations(&mut rng, &p2, model.num_actions_p2(), cfg.samples) {
        let j = exact_value(model, &StrategyProfile::from_halves(p1.clone(), dev))?;
        max_gain_p2 = max_gain_p2.max(max_diff(&j.values, u, |j, u| j - u));
        checked += 1;
    }
    let mut max_gain_p1 = f64::NEG_INFINITY;
    for dev in deviations(&mut rng, &p1, model.num_actions_p1(), cfg.samples) {
        let j = exact_value(model, &StrategyProfile::from_halves(dev, p2.clone()))?;
        max_gain_p1 = max_gain_p1.max(max_diff(&j.values, u, |j, u| u - j));
        checked += 1;
    }

    let (br2, _) = best_response(model, Player::P1, &p1, &cfg.best_response)?;
    let (br1, _) = best_response(model, Player::P2, &p2, &cfg.best_response)?;
    Ok(SaddleReport {
        tol: cfg.tol,
        max_gain_p2,
        max_gain_p1,
        best_response_gap_p2: max_diff(&br2.values, u, |b, u| b - u),
        best_response_gap_p1: max_diff(&br1.values, u, |b, u| u - b),
        equilibrium_mismatch,
        deviations_checked: checked,
    })
}

fn max_diff(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f(x, y))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::ModelBuilder;

    fn absorbing(rho: f64) -> GameModel {
        let mut b = ModelBuilder::with_action_counts(1, 1, 1, 0.5);
        b.reward_all(0, rho).unwrap().obstacles(0, 10.0, 7.0).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn absorbing_continuation_value() {
        let model = absorbing(1.0);
        let j = exact_value(&model, &StrategyProfile::first_actions(&model)).unwrap();
        assert!((j.values[0] - 2.0).abs() < 1e-14);
        assert_eq!(j.method, EstimateMethod::Exact);
    }

    #[test]
    fn stop_states_pay_obstacles_with_psi2_precedence() {
        let model = absorbing(1.0);
        let mut p = StrategyProfile::first_actions(&model);
        p.stop2.insert(0);
        assert_eq!(exact_value(&model, &p).unwrap().values, vec![7.0]);
        p.stop1.insert(0);
        assert_eq!(exact_value(&model, &p).unwrap().values, vec![7.0]);
        p.stop2.clear();
        assert_eq!(exact_value(&model, &p).unwrap().values, vec![10.0]);
    }

    #[test]
    fn two_state_chain_against_hand_solution() {
        // 0 -> 1 at rate 2, reward 3 at state 0, state 1 stopped by player II with psi2 = 1
        let mut b = ModelBuilder::with_action_counts(2, 1, 1, 1.0);
        b.rate_all(0, 1, 2.0).unwrap().reward_all(0, 3.0).unwrap();
        b.obstacles(0, 5.0, 0.0).unwrap().obstacles(1, 5.0, 1.0).unwrap();
        let model = b.build().unwrap();
        let mut p = StrategyProfile::first_actions(&model);
        p.stop2.insert(1);
        // (1 + 2) J0 = 3 + 2 * 1
        let j = exact_value(&model, &p).unwrap();
        assert!((j.values[0] - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_profiles_rejected() {
        let model = absorbing(1.0);
        let mut p = StrategyProfile::first_actions(&model);
        p.phi[0] = vec![0.5];
        assert!(exact_value(&model, &p).is_err());
        let mut p = StrategyProfile::first_actions(&model);
        p.stop1.insert(3);
        assert!(exact_value(&model, &p).is_err());
    }

    #[test]
    fn single_action_best_response_equals_exact_value() {
        let model = absorbing(1.0);
        let p = StrategyProfile::first_actions(&model);
        // psi2 = 7 > 2 = continuation: the maximizer stops immediately
        let (v, half) = best_response(&model, Player::P1, &p.half(Player::P1), &BestResponseConfig::default()).unwrap();
        assert!((v.values[0] - 7.0).abs() < 1e-9);
        assert!(half.stop.contains(&0));
        let with_br = StrategyProfile::from_halves(p.half(Player::P1), half);
        assert!((exact_value(&model, &with_br).unwrap().values[0] - v.values[0]).abs() < 1e-9);
    }

    #[test]
    fn no_profitable_stop_best_response() {
        let mut b = ModelBuilder::with_action_counts(1, 1, 1, 0.5);
        b.reward_all(0, 1.0).unwrap().obstacles(0, 10.0, 0.5).unwrap();
        let model = b.build().unwrap();
        let p = StrategyProfile::first_actions(&model);
        let (v, half) = best_response(&model, Player::P1, &p.half(Player::P1), &BestResponseConfig::default()).unwrap();
        let exact = exact_value(&model, &p).unwrap();
        assert!((v.values[0] - exact.values[0]).abs() < 1e-9);
        assert!(half.stop.is_empty());
    }
}
