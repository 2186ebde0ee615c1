//! Value of the game with control and stopping as the fixed point of the
//! clamped operator
//!
//! ```text
//! T phi(i) = min{ max{ I(i, phi), psi2(i) }, psi1(i) }
//! ```
//!
//! where `I(i, phi)` is the value of the one-shot matrix game obtained by
//! uniformizing the rates at state `i` with the constant `q(i) + theta`.
//! Iterating from `psi2` gives a non-decreasing sequence whose limit is the
//! value; the stage-game mixtures at the limit and the contact sets with the
//! two obstacles give a saddle point.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game_model::{weighted_distance, GameModel, ValueFunction};
use crate::matrix_game::{solve_matrix_game, GameSolution, MatrixGame};

/// Tolerance on the per-step decrease allowed by the monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Below this many states a sweep runs on the calling thread.
const PARALLEL_MIN_STATES: usize = 64;

/// Discrete-time form of a game model.
#[derive(Debug, Clone)]
pub struct UniformizedModel {
    model: Arc<GameModel>,
    theta: f64,
    /// Probability rows `p~(.|i,a,b)` including the diagonal, sorted by target.
    kernel: Vec<Vec<(usize, f64)>>,
    /// `r(i,a,b) / (alpha + q(i) + theta)`.
    stage_reward: Vec<f64>,
    /// `(q(i) + theta) / (alpha + q(i) + theta)`.
    stage_discount: Vec<f64>,
}

/// Builds the uniformized kernel with constant `q(i) + theta` at state `i`:
/// `p~(j|i,a,b) = q(j|i,a,b) / (q(i) + theta) + delta_ij`.
pub fn uniformize(model: &GameModel, theta: f64) -> Result<UniformizedModel> {
    uniformize_shared(Arc::new(model.clone()), theta)
}

pub fn uniformize_shared(model: Arc<GameModel>, theta: f64) -> Result<UniformizedModel> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Invalid(format!(
            "uniformization constant must be positive, got {theta}"
        )));
    }
    let alpha = model.alpha();
    let mut kernel = Vec::with_capacity(model.rate_rows().len());
    let mut stage_reward = Vec::with_capacity(model.rate_rows().len());
    for (i, a, b) in model.cells() {
        let lambda = model.q_max(i) + theta;
        let row = model.rate_row(i, a, b);
        let mut probs: Vec<(usize, f64)> = row.off_diagonal.iter().map(|&(j, q)| (j, q / lambda)).collect();
        let pos = probs.partition_point(|&(j, _)| j < i);
        probs.insert(pos, (i, 1.0 + row.diagonal / lambda));
        kernel.push(probs);
        stage_reward.push(model.reward(i, a, b) / (alpha + lambda));
    }
    let stage_discount = (0..model.num_states())
        .map(|i| {
            let lambda = model.q_max(i) + theta;
            lambda / (alpha + lambda)
        })
        .collect();
    Ok(UniformizedModel {
        model,
        theta,
        kernel,
        stage_reward,
        stage_discount,
    })
}

impl UniformizedModel {
    pub fn model(&self) -> &GameModel {
        &self.model
    }

    pub fn shared_model(&self) -> Arc<GameModel> {
        self.model.clone()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    pub fn kernel_row(&self, i: usize, a: usize, b: usize) -> &[(usize, f64)] {
        &self.kernel[self.model.index(i, a, b)]
    }

    pub fn stage_reward(&self, i: usize, a: usize, b: usize) -> f64 {
        self.stage_reward[self.model.index(i, a, b)]
    }

    pub fn stage_discount(&self, i: usize) -> f64 {
        self.stage_discount[i]
    }

    /// Largest stage discount; the operator contracts the sup norm by this factor.
    pub fn max_stage_discount(&self) -> f64 {
        self.stage_discount.iter().copied().fold(0.0, f64::max)
    }

    /// `stage_reward(i,a,b) + stage_discount(i) * sum_j p~(j|i,a,b) phi(j)`.
    #[inline]
    pub fn stage_entry(&self, i: usize, a: usize, b: usize, phi: &[f64]) -> f64 {
        let k = self.model.index(i, a, b);
        let expect: f64 = self.kernel[k].iter().map(|&(j, p)| p * phi[j]).sum();
        self.stage_reward[k] + self.stage_discount[i] * expect
    }
}

/// The one-shot game at state `i` whose value is `I(i, phi)`.
pub fn stage_payoff_matrix(um: &UniformizedModel, i: usize, phi: &[f64]) -> MatrixGame {
    let (n1, n2) = (um.model.num_actions_p1(), um.model.num_actions_p2());
    let mut data = Vec::with_capacity(n1 * n2);
    for a in 0..n1 {
        for b in 0..n2 {
            data.push(um.stage_entry(i, a, b, phi));
        }
    }
    MatrixGame::new(n1, n2, data).expect("stage matrix of a validated model is finite")
}

/// The unclamped continuation game `r(i,a,b) + sum_j q(j|i,a,b) phi(j)`, whose
/// value is `H(i, phi)`.
pub fn generator_payoff_matrix(model: &GameModel, i: usize, phi: &[f64]) -> MatrixGame {
    let (n1, n2) = (model.num_actions_p1(), model.num_actions_p2());
    let mut data = Vec::with_capacity(n1 * n2);
    for a in 0..n1 {
        for b in 0..n2 {
            data.push(model.reward(i, a, b) + model.rate_row(i, a, b).apply(i, phi));
        }
    }
    MatrixGame::new(n1, n2, data).expect("generator matrix of a validated model is finite")
}

#[inline]
fn clamp_obstacles(x: f64, psi2: f64, psi1: f64) -> f64 {
    x.max(psi2).min(psi1)
}

fn check_len(phi: &[f64], n: usize) -> Result<()> {
    if phi.len() != n {
        return Err(Error::Dimension {
            what: "value function",
            expected: n,
            got: phi.len(),
        });
    }
    Ok(())
}

fn stage_values(um: &UniformizedModel, phi: &[f64]) -> Result<Vec<GameSolution>> {
    let n = um.num_states();
    check_len(phi, n)?;
    let solve = |i: usize| solve_matrix_game(&stage_payoff_matrix(um, i, phi));
    if n >= PARALLEL_MIN_STATES {
        (0..n).into_par_iter().map(solve).collect()
    } else {
        (0..n).map(solve).collect()
    }
}

/// One application of the clamped operator. Returns `T phi` and the solved
/// stage game at every state.
pub fn apply_t(um: &UniformizedModel, phi: &ValueFunction) -> Result<(ValueFunction, Vec<GameSolution>)> {
    let games = stage_values(um, &phi.values)?;
    let (psi1, psi2) = (um.model.psi1(), um.model.psi2());
    let values = games
        .iter()
        .enumerate()
        .map(|(i, g)| clamp_obstacles(g.value, psi2[i], psi1[i]))
        .collect();
    Ok((ValueFunction::new(values, phi.weight.clone()), games))
}

/// Where the iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPoint {
    /// `u_0 = psi2`; iterates increase.
    #[default]
    Lower,
    /// `u_0 = psi1`; iterates decrease.
    Upper,
}

#[derive(Debug, Clone)]
pub struct IterationConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub start: StartPoint,
    /// Norm weight `W`; unit weight when absent.
    pub weight: Option<Arc<[f64]>>,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            tol: 1e-8,
            max_iter: 100_000,
            start: StartPoint::Lower,
            weight: None,
        }
    }
}

/// Per-state tag of the bilateral inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateClass {
    Continuation,
    /// `u*(i) = psi1(i)`: the minimizer stops.
    StopP1,
    /// `u*(i) = psi2(i)`: the maximizer stops.
    StopP2,
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateClass::Continuation => "CONTINUATION",
            StateClass::StopP1 => "STOP_P1",
            StateClass::StopP2 => "STOP_P2",
        })
    }
}

/// Contact tolerance for deciding `u = psi`.
pub fn contact_tolerance(tol: f64, psi: f64) -> f64 {
    (10.0 * tol).max(1e-9 * (1.0 + psi.abs()))
}

/// Classifies a state by contact with the obstacles. Contact wins over
/// continuation; a state touching both goes to the nearer obstacle, with
/// ties resolved toward `psi2`.
pub fn classify(u: f64, psi1: f64, psi2: f64, tol: f64) -> StateClass {
    let (d1, d2) = ((u - psi1).abs(), (u - psi2).abs());
    let touches1 = d1 <= contact_tolerance(tol, psi1);
    let touches2 = d2 <= contact_tolerance(tol, psi2);
    match (touches1, touches2) {
        (true, true) if d1 < d2 => StateClass::StopP1,
        (_, true) => StateClass::StopP2,
        (true, false) => StateClass::StopP1,
        (false, false) => StateClass::Continuation,
    }
}

/// Value, saddle-point strategies and stopping regions.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub u_star: ValueFunction,
    /// Minimizer's stationary mixture per state.
    pub phi_star: Vec<Vec<f64>>,
    /// Maximizer's stationary mixture per state.
    pub psi_star: Vec<Vec<f64>>,
    /// States where `u* = psi1`.
    pub region_a1: Vec<usize>,
    /// States where `u* = psi2`.
    pub region_a2: Vec<usize>,
    pub classification: Vec<StateClass>,
    pub iterations: usize,
    /// `||T u* - u*||_W` at termination.
    pub residual: f64,
}

/// Exported form of [`EquilibriumSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub u_star: Vec<f64>,
    pub phi_star: Vec<Vec<f64>>,
    pub psi_star: Vec<Vec<f64>>,
    #[serde(rename = "A1")]
    pub a1: Vec<usize>,
    #[serde(rename = "A2")]
    pub a2: Vec<usize>,
    pub classification: Vec<StateClass>,
    pub iterations: usize,
    pub residual: f64,
}

impl EquilibriumSolution {
    pub fn to_file(&self) -> SolutionFile {
        SolutionFile {
            u_star: self.u_star.values.clone(),
            phi_star: self.phi_star.clone(),
            psi_star: self.psi_star.clone(),
            a1: self.region_a1.clone(),
            a2: self.region_a2.clone(),
            classification: self.classification.clone(),
            iterations: self.iterations,
            residual: self.residual,
        }
    }

    /// Rebuilds a solution from its exported form; the regions are taken
    /// from the classification so the two cannot disagree.
    pub fn from_file(file: SolutionFile, weight: Arc<[f64]>) -> Result<Self> {
        let n = file.u_star.len();
        for (what, got) in [
            ("phi_star", file.phi_star.len()),
            ("psi_star", file.psi_star.len()),
            ("classification", file.classification.len()),
            ("weight", weight.len()),
        ] {
            if got != n {
                return Err(Error::Dimension { what, expected: n, got });
            }
        }
        let region = |tag| {
            file.classification
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c == tag)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        let (a1, a2) = (region(StateClass::StopP1), region(StateClass::StopP2));
        if a1 != file.a1 || a2 != file.a2 {
            return Err(Error::Parse("A1/A2 disagree with classification".into()));
        }
        Ok(EquilibriumSolution {
            u_star: ValueFunction::new(file.u_star, weight),
            phi_star: file.phi_star,
            psi_star: file.psi_star,
            region_a1: a1,
            region_a2: a2,
            classification: file.classification,
            iterations: file.iterations,
            residual: file.residual,
        })
    }
}

/// Monotone iteration `u_n = T u_{n-1}` to the fixed point.
pub fn value_iterate(um: &UniformizedModel, cfg: &IterationConfig) -> Result<EquilibriumSolution> {
    value_iterate_observed(um, cfg, |_, _| {})
}

/// As [`value_iterate`], calling `observe(n, u_n)` on every iterate from `n = 0`.
///
/// Stops when both `||u_n - u_{n-1}||_W <= tol` and `||T u_n - u_n||_W <= tol`.
/// The strategies are read off the stage games solved at the returned `u*`.
pub fn value_iterate_observed(
    um: &UniformizedModel,
    cfg: &IterationConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<EquilibriumSolution> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    let model = um.model();
    let n = model.num_states();
    let weight = cfg.weight.clone().unwrap_or_else(|| vec![1.0; n].into());
    let start = match cfg.start {
        StartPoint::Lower => model.psi2().to_vec(),
        StartPoint::Upper => model.psi1().to_vec(),
    };
    let mut current = ValueFunction::new(start, weight.clone());
    let mut previous_step = f64::INFINITY;
    let mut iteration = 0;
    loop {
        observe(iteration, &current.values);
        let (next, games) = apply_t(um, &current)?;
        check_monotone(&current.values, &next.values, cfg.start, iteration + 1)?;
        let step = weighted_distance(&next.values, &current.values, &weight)?;
        if step <= cfg.tol && previous_step <= cfg.tol {
            return Ok(assemble(model, current, games, iteration, step, cfg.tol));
        }
        if iteration >= cfg.max_iter {
            return Err(Error::MaxIterExceeded {
                iterations: iteration,
                residual: step,
            });
        }
        previous_step = step;
        current = next;
        iteration += 1;
    }
}

fn check_monotone(prev: &[f64], next: &[f64], start: StartPoint, iteration: usize) -> Result<()> {
    for (state, (p, x)) in prev.iter().zip(next).enumerate() {
        let drop = match start {
            StartPoint::Lower => p - x,
            StartPoint::Upper => x - p,
        };
        if drop > MONOTONE_SLACK {
            return Err(Error::MonotonicityViolation { iteration, state, drop });
        }
    }
    Ok(())
}

fn assemble(
    model: &GameModel,
    u_star: ValueFunction,
    games: Vec<GameSolution>,
    iterations: usize,
    residual: f64,
    tol: f64,
) -> EquilibriumSolution {
    let classification: Vec<StateClass> = (0..model.num_states())
        .map(|i| classify(u_star.values[i], model.psi1()[i], model.psi2()[i], tol))
        .collect();
    let region = |tag| {
        classification
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == tag)
            .map(|(i, _)| i)
            .collect()
    };
    let (phi_star, psi_star) = games.into_iter().map(|g| (g.mu, g.nu)).unzip();
    EquilibriumSolution {
        region_a1: region(StateClass::StopP1),
        region_a2: region(StateClass::StopP2),
        u_star,
        phi_star,
        psi_star,
        classification,
        iterations,
        residual,
    }
}

/// Which inequality a state fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DpiViolation {
    /// `psi2 <= u <= psi1` fails.
    OutsideObstacles { state: usize, u: f64 },
    /// Tag says contact but `u` is not at that obstacle.
    ContactMismatch {
        state: usize,
        class: StateClass,
        distance: f64,
    },
    /// `u = I(i,u)` fails on a continuation state.
    ContinuationGap { state: usize, gap: f64 },
    /// `u - I(i,u) >= 0` fails where the maximizer stops.
    LowerContactReversed { state: usize, gap: f64 },
    /// `u - I(i,u) <= 0` fails where the minimizer stops.
    UpperContactReversed { state: usize, gap: f64 },
    /// Same inequality checked in generator form, `alpha u - H(i,u)`.
    GeneratorForm { state: usize, class: StateClass, gap: f64 },
    /// `u` differs from one of the two clamped fixed-point forms.
    ClampForm { state: usize, form: String, gap: f64 },
}

impl DpiViolation {
    pub fn state(&self) -> usize {
        match *self {
            DpiViolation::OutsideObstacles { state, .. }
            | DpiViolation::ContactMismatch { state, .. }
            | DpiViolation::ContinuationGap { state, .. }
            | DpiViolation::LowerContactReversed { state, .. }
            | DpiViolation::UpperContactReversed { state, .. }
            | DpiViolation::GeneratorForm { state, .. }
            | DpiViolation::ClampForm { state, .. } => state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateCheck {
    pub state: usize,
    pub class: StateClass,
    pub u: f64,
    pub psi1: f64,
    pub psi2: f64,
    /// `I(i, u)`.
    pub i_alpha: f64,
    /// `alpha u(i) - H(i, u)`.
    pub generator_gap: f64,
    /// `min{max{I, psi2}, psi1}`.
    pub form_ii: f64,
    /// `max{min{I, psi1}, psi2}`.
    pub form_iii: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpiReport {
    pub tol: f64,
    pub states: Vec<StateCheck>,
    pub violations: Vec<DpiViolation>,
}

impl DpiReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Largest `|form_ii - form_iii|` over states.
    pub fn clamp_form_disagreement(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.form_ii - s.form_iii).abs())
            .fold(0.0, f64::max)
    }
}

/// Checks the bilateral dynamic-programming inequalities at `sol.u_star`.
///
/// Each state is checked in uniformized form (`u - I`), in generator form
/// (`alpha u - H`, with tolerance scaled by `alpha + q(i) + theta`), against
/// both clamped fixed-point forms, and for consistency between its tag and
/// its contact with the obstacles.
pub fn verify_dpi(um: &UniformizedModel, sol: &EquilibriumSolution, tol: f64) -> Result<DpiReport> {
    let model = um.model();
    let n = model.num_states();
    let u = &sol.u_star.values;
    check_len(u, n)?;
    if sol.classification.len() != n {
        return Err(Error::Dimension {
            what: "classification",
            expected: n,
            got: sol.classification.len(),
        });
    }
    let alpha = model.alpha();
    let mut states = Vec::with_capacity(n);
    let mut violations = Vec::new();
    for i in 0..n {
        let (psi1, psi2) = (model.psi1()[i], model.psi2()[i]);
        let class = sol.classification[i];
        let i_alpha = solve_matrix_game(&stage_payoff_matrix(um, i, u))?.value;
        let h_alpha = solve_matrix_game(&generator_payoff_matrix(model, i, u))?.value;
        let generator_gap = alpha * u[i] - h_alpha;
        let form_ii = i_alpha.max(psi2).min(psi1);
        let form_iii = i_alpha.min(psi1).max(psi2);

        if u[i] < psi2 - tol || u[i] > psi1 + tol {
            violations.push(DpiViolation::OutsideObstacles { state: i, u: u[i] });
        }
        let obstacle = match class {
            StateClass::StopP1 => Some(psi1),
            StateClass::StopP2 => Some(psi2),
            StateClass::Continuation => None,
        };
        if let Some(psi) = obstacle {
            let distance = (u[i] - psi).abs();
            if distance > contact_tolerance(tol, psi) {
                violations.push(DpiViolation::ContactMismatch {
                    state: i,
                    class,
                    distance,
                });
            }
        }

        let gap = u[i] - i_alpha;
        let h_tol = tol * (alpha + model.q_max(i) + um.theta());
        match class {
            StateClass::Continuation => {
                if gap.abs() > tol {
                    violations.push(DpiViolation::ContinuationGap { state: i, gap });
                }
                if generator_gap.abs() > h_tol {
                    violations.push(DpiViolation::GeneratorForm {
                        state: i,
                        class,
                        gap: generator_gap,
                    });
                }
            }
            StateClass::StopP2 => {
                if gap < -tol {
                    violations.push(DpiViolation::LowerContactReversed { state: i, gap });
                }
                if generator_gap < -h_tol {
                    violations.push(DpiViolation::GeneratorForm {
                        state: i,
                        class,
                        gap: generator_gap,
                    });
                }
            }
            StateClass::StopP1 => {
                if gap > tol {
                    violations.push(DpiViolation::UpperContactReversed { state: i, gap });
                }
                if generator_gap > h_tol {
                    violations.push(DpiViolation::GeneratorForm {
                        state: i,
                        class,
                        gap: generator_gap,
                    });
                }
            }
        }
        for (form, value) in [("min_max", form_ii), ("max_min", form_iii)] {
            if (value - u[i]).abs() > tol {
                violations.push(DpiViolation::ClampForm {
                    state: i,
                    form: form.into(),
                    gap: value - u[i],
                });
            }
        }
        states.push(StateCheck {
            state: i,
            class,
            u: u[i],
            psi1,
            psi2,
            i_alpha,
            generator_gap,
            form_ii,
            form_iii,
        });
    }
    Ok(DpiReport {
        tol,
        states,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game_model::ModelBuilder;

    fn absorbing(rho: f64, alpha: f64, psi1: f64, psi2: f64) -> GameModel {
        let mut b = ModelBuilder::with_action_counts(1, 1, 1, alpha);
        b.reward_all(0, rho).unwrap().obstacles(0, psi1, psi2).unwrap();
        b.build().unwrap()
    }

    fn solve(model: &GameModel) -> EquilibriumSolution {
        let um = uniformize(model, 1.0).unwrap();
        value_iterate(&um, &IterationConfig::default()).unwrap()
    }

    #[test]
    fn stage_discount_arithmetic() {
        // q(0) = 3 via a single jump to state 1
        let mut b = ModelBuilder::with_action_counts(2, 1, 1, 0.5);
        b.rate_all(0, 1, 3.0).unwrap();
        b.obstacles(0, 1.0, 0.0).unwrap().obstacles(1, 1.0, 0.0).unwrap();
        let um = uniformize(&b.build().unwrap(), 1.0).unwrap();
        assert!((um.stage_discount(0) - 8.0 / 9.0).abs() < 1e-15);
        // state 1 is absorbing
        assert_eq!(um.kernel_row(1, 0, 0), &[(1, 1.0)]);
        assert!((um.stage_discount(1) - 1.0 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn two_state_flip_kernel() {
        let mut b = ModelBuilder::with_action_counts(2, 1, 1, 1.0);
        b.rate_all(0, 1, 2.0).unwrap().rate_all(1, 0, 2.0).unwrap();
        b.obstacles(0, 1.0, 0.0).unwrap().obstacles(1, 1.0, 0.0).unwrap();
        let um = uniformize(&b.build().unwrap(), 1.0).unwrap();
        let row = um.kernel_row(0, 0, 0);
        assert!((row[0].1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((row[1].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(uniformize(&b.build().unwrap(), 0.0).is_err());
    }

    #[test]
    fn stage_matrix_examples() {
        let model = absorbing(1.0, 0.5, 10.0, 0.0);
        let um = uniformize(&model, 1.0).unwrap();
        let g = stage_payoff_matrix(&um, 0, &[0.0]);
        assert_eq!(g.data(), &[um.stage_reward(0, 0, 0)]);
        let g = stage_payoff_matrix(&um, 0, &[3.0]);
        assert!((g.get(0, 0) - (1.0 / 1.5 + 3.0 / 1.5)).abs() < 1e-15);
    }

    #[test]
    fn apply_t_examples() {
        let model = absorbing(1.0, 0.5, 10.0, 0.0);
        let um = uniformize(&model, 1.0).unwrap();
        let (t, _) = apply_t(&um, &ValueFunction::unweighted(vec![0.0])).unwrap();
        assert!((t.values[0] - 2.0 / 3.0).abs() < 1e-15);
        // I(0, 100) = (1 + 100) / 1.5 > psi1 = 10
        let (t, _) = apply_t(&um, &ValueFunction::unweighted(vec![100.0])).unwrap();
        assert_eq!(t.values[0], 10.0);
        let (t, _) = apply_t(&um, &ValueFunction::unweighted(model.psi2().to_vec())).unwrap();
        assert!(t.values[0] >= model.psi2()[0]);
    }

    #[test]
    fn absorbing_state_continuation() {
        let sol = solve(&absorbing(1.0, 0.5, 10.0, 0.0));
        assert!((sol.u_star.values[0] - 2.0).abs() < 1e-7);
        assert_eq!(sol.classification, vec![StateClass::Continuation]);
        assert!(sol.residual <= 1e-8);
    }

    #[test]
    fn absorbing_state_upper_clamp() {
        let sol = solve(&absorbing(1.0, 0.5, 1.5, 0.0));
        assert_eq!(sol.u_star.values[0], 1.5);
        assert_eq!(sol.region_a1, vec![0]);
        assert!(sol.region_a2.is_empty());
    }

    #[test]
    fn absorbing_state_lower_clamp() {
        let sol = solve(&absorbing(1.0, 0.5, 10.0, 3.0));
        assert_eq!(sol.u_star.values[0], 3.0);
        assert_eq!(sol.region_a2, vec![0]);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn iteration_starts_at_psi2() {
        let model = absorbing(1.0, 0.5, 10.0, 0.25);
        let um = uniformize(&model, 1.0).unwrap();
        let mut first = None;
        value_iterate_observed(&um, &IterationConfig::default(), |n, u| {
            if n == 0 {
                first = Some(u.to_vec());
            }
        })
        .unwrap();
        assert_eq!(first.unwrap(), vec![0.25]);
    }

    #[test]
    fn max_iter_reported_with_residual() {
        let um = uniformize(&absorbing(1.0, 0.01, 1000.0, 0.0), 1.0).unwrap();
        let cfg = IterationConfig {
            max_iter: 5,
            ..IterationConfig::default()
        };
        match value_iterate(&um, &cfg) {
            Err(Error::MaxIterExceeded {
                iterations: 5,
                residual,
            }) => assert!(residual > 0.0),
            other => panic!("expected MaxIterExceeded, got {other:?}"),
        }
    }

    #[test]
    fn verify_flags_reversed_upper_contact() {
        let model = absorbing(1.0, 0.5, 10.0, 0.0);
        let um = uniformize(&model, 1.0).unwrap();
        // at phi = psi1 = 10, I = (1 + 10) / 1.5 < 10
        let sol = EquilibriumSolution {
            u_star: ValueFunction::unweighted(vec![10.0]),
            phi_star: vec![vec![1.0]],
            psi_star: vec![vec![1.0]],
            region_a1: vec![0],
            region_a2: vec![],
            classification: vec![StateClass::StopP1],
            iterations: 0,
            residual: 0.0,
        };
        let report = verify_dpi(&um, &sol, 1e-7).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, DpiViolation::UpperContactReversed { state: 0, .. })));
    }

    #[test]
    fn verify_passes_on_solver_output() {
        for (psi1, psi2) in [(10.0, 0.0), (1.5, 0.0), (10.0, 3.0)] {
            let model = absorbing(1.0, 0.5, psi1, psi2);
            let um = uniformize(&model, 1.0).unwrap();
            let sol = value_iterate(&um, &IterationConfig::default()).unwrap();
            let report = verify_dpi(&um, &sol, 1e-7).unwrap();
            assert!(report.passed(), "{:?}", report.violations);
        }
    }

    #[test]
    fn solution_file_round_trip() {
        let sol = solve(&absorbing(1.0, 0.5, 1.5, 0.0));
        let file = sol.to_file();
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"A1\":[0]") && json.contains("STOP_P1"));
        let back: SolutionFile = serde_json::from_str(&json).unwrap();
        let rebuilt = EquilibriumSolution::from_file(back, sol.u_star.weight.clone()).unwrap();
        assert_eq!(rebuilt, sol);
    }

    #[test]
    fn classification_precedence() {
        assert_eq!(classify(1.0, 5.0, 1.0, 1e-8), StateClass::StopP2);
        assert_eq!(classify(5.0, 5.0, 1.0, 1e-8), StateClass::StopP1);
        assert_eq!(classify(3.0, 5.0, 1.0, 1e-8), StateClass::Continuation);
        // both obstacles within contact distance: nearer one wins
        assert_eq!(classify(1.0 + 4e-7, 1.0 + 5e-7, 1.0, 1e-7), StateClass::StopP1);
        assert_eq!(classify(1.0 + 1e-7, 1.0 + 5e-7, 1.0, 1e-7), StateClass::StopP2);
    }
}
