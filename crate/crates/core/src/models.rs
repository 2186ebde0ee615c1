//! Built-in model generators and the model file format.
//!
//! The controlled single-server queue: player I buys extra service `h(a)`
//! at cost `c1(i,a)`, player II buys extra arrivals `g(b)` at cost
//! `c2(i,b)`, the maximizer earns `c + r_lin i` per unit time, and quitting
//! pays `c_bar + R(i)` (player I) or `c_prime` (player II).

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game_model::{
    truncate_model, validate_model, CountableModel, GameModel, LyapunovCertificate, ModelBuilder, ValidationReport,
};

/// A function of the state, extended past the end of a table by its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateFn {
    Constant(f64),
    Table(Vec<f64>),
    Affine { intercept: f64, slope: f64 },
}

impl StateFn {
    pub fn eval(&self, i: usize) -> f64 {
        match self {
            StateFn::Constant(c) => *c,
            StateFn::Table(t) => t.get(i).or(t.last()).copied().unwrap_or(f64::NAN),
            StateFn::Affine { intercept, slope } => intercept + slope * i as f64,
        }
    }
}

/// Cost rate of a player's action, either state-independent or per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionCost {
    PerAction(Vec<f64>),
    /// Row `i` holds the costs at state `i`; the last row extends upward.
    PerState(Vec<Vec<f64>>),
}

impl ActionCost {
    pub fn eval(&self, i: usize, action: usize) -> f64 {
        match self {
            ActionCost::PerAction(v) => v[action],
            ActionCost::PerState(rows) => rows.get(i).or(rows.last()).map_or(f64::NAN, |r| r[action]),
        }
    }

    fn fits(&self, actions: usize) -> bool {
        match self {
            ActionCost::PerAction(v) => v.len() == actions,
            ActionCost::PerState(rows) => !rows.is_empty() && rows.iter().all(|r| r.len() == actions),
        }
    }
}

/// Parameters of the controlled queue. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueueSpec {
    pub lambda: StateFn,
    /// Base service rate; unused at `i = 0`.
    pub mu: StateFn,
    /// Arrival boost per player-II action.
    pub g: Vec<f64>,
    /// Service boost per player-I action.
    pub h: Vec<f64>,
    pub c: f64,
    pub r_lin: f64,
    pub c1: ActionCost,
    pub c2: ActionCost,
    pub c_bar: f64,
    #[serde(rename = "R")]
    pub big_r: StateFn,
    pub c_prime: f64,
    pub alpha: f64,
    pub s_max: usize,
}

impl Default for QueueSpec {
    fn default() -> Self {
        QueueSpec {
            lambda: StateFn::Constant(1.0),
            mu: StateFn::Constant(1.5),
            g: vec![0.0, 0.5],
            h: vec![0.0, 1.0],
            // smallest round base rate keeping c + r_lin i + c1 - c2 >= 0 at i = 0
            c: 0.1,
            r_lin: 1.0,
            c1: ActionCost::PerAction(vec![0.0, 0.2]),
            c2: ActionCost::PerAction(vec![0.0, 0.05]),
            c_bar: 8.0,
            big_r: StateFn::Affine {
                intercept: 0.0,
                slope: 0.1,
            },
            c_prime: 0.5,
            alpha: 1.0,
            s_max: 50,
        }
    }
}

impl QueueSpec {
    fn check_shapes(&self) -> Result<()> {
        if self.g.is_empty() || self.h.is_empty() {
            return Err(Error::Invalid("g and h need at least one action each".into()));
        }
        if !self.c1.fits(self.h.len()) {
            return Err(Error::Invalid("c1 must have one entry per player-I action".into()));
        }
        if !self.c2.fits(self.g.len()) {
            return Err(Error::Invalid("c2 must have one entry per player-II action".into()));
        }
        for (name, f) in [("lambda", &self.lambda), ("mu", &self.mu), ("R", &self.big_r)] {
            if matches!(f, StateFn::Table(t) if t.is_empty()) {
                return Err(Error::Invalid(format!("{name} table is empty")));
            }
        }
        Ok(())
    }
}

impl CountableModel for QueueSpec {
    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn actions_p1(&self) -> Vec<String> {
        (0..self.h.len()).map(|a| format!("h{a}")).collect()
    }

    fn actions_p2(&self) -> Vec<String> {
        (0..self.g.len()).map(|b| format!("g{b}")).collect()
    }

    fn transitions(&self, i: usize, a: usize, b: usize) -> Vec<(usize, f64)> {
        let up = (i + 1, self.lambda.eval(i) + self.g[b]);
        if i == 0 {
            vec![up]
        } else {
            vec![(i - 1, self.mu.eval(i) + self.h[a]), up]
        }
    }

    fn reward(&self, i: usize, a: usize, b: usize) -> f64 {
        self.c + self.r_lin * i as f64 + self.c1.eval(i, a) - self.c2.eval(i, b)
    }

    fn psi1(&self, i: usize) -> f64 {
        self.c_bar + self.big_r.eval(i)
    }

    fn psi2(&self, _: usize) -> f64 {
        self.c_prime
    }
}

/// Truncates the queue at `spec.s_max` and validates it against
/// [`queue_certificate`]. Negative rewards or rates and `c_prime >= psi1`
/// are rejected.
pub fn build_queueing_model(spec: &QueueSpec) -> Result<GameModel> {
    let model = truncate_queue(spec)?;
    let cert = queue_certificate(&model)?;
    validate_model(&model, Some(&cert)).into_result()?;
    Ok(model)
}

/// Truncates the queue at `spec.s_max` without validating the result.
pub fn truncate_queue(spec: &QueueSpec) -> Result<GameModel> {
    spec.check_shapes()?;
    truncate_model(spec, spec.s_max)
}

/// Linear certificate for birth-death models: `w_1(i) = 1 + i` and a
/// constant `w_2` equal to the largest upward drift of `w_1`, so
/// `W(i) = 1 + i + w_2`.
pub fn queue_certificate(model: &GameModel) -> Result<LyapunovCertificate> {
    let n = model.num_states();
    let w1: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
    let drift = model
        .cells()
        .map(|(i, a, b)| model.rate_row(i, a, b).apply(i, &w1))
        .fold(0.0, f64::max);
    LyapunovCertificate::complete(model, vec![w1, vec![drift; n]])
}

/// Validation report of a queue model against its linear certificate.
pub fn validate_queue(model: &GameModel) -> Result<ValidationReport> {
    Ok(validate_model(model, Some(&queue_certificate(model)?)))
}

/// Ranges for [`random_model`].
#[derive(Debug, Clone)]
pub struct RandomModelParams {
    pub max_states: usize,
    pub max_actions: usize,
    pub rate_max: f64,
    /// Probability that a given off-diagonal rate is nonzero.
    pub density: f64,
    pub reward_max: f64,
    pub alpha_range: (f64, f64),
}

impl Default for RandomModelParams {
    fn default() -> Self {
        RandomModelParams {
            max_states: 8,
            max_actions: 3,
            rate_max: 5.0,
            density: 0.6,
            reward_max: 5.0,
            alpha_range: (0.2, 2.0),
        }
    }
}

/// A small random model. Obstacles are drawn on the scale `reward_max / alpha`
/// so that both stopping regions are regularly non-empty.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, params: &RandomModelParams) -> GameModel {
    let n = rng.random_range(1..=params.max_states);
    let n1 = rng.random_range(1..=params.max_actions);
    let n2 = rng.random_range(1..=params.max_actions);
    let alpha = rng.random_range(params.alpha_range.0..=params.alpha_range.1);
    let mut b = ModelBuilder::with_action_counts(n, n1, n2, alpha);
    for i in 0..n {
        for a in 0..n1 {
            for bb in 0..n2 {
                for j in (0..n).filter(|&j| j != i) {
                    if rng.random_bool(params.density) {
                        b.rate(i, a, bb, j, rng.random_range(0.0..=params.rate_max))
                            .expect("in range");
                    }
                }
                b.reward(i, a, bb, rng.random_range(0.0..=params.reward_max))
                    .expect("in range");
            }
        }
    }
    let scale = params.reward_max / alpha;
    for i in 0..n {
        let psi2 = rng.random_range(0.0..=0.8 * scale);
        let psi1 = psi2 + rng.random_range(0.05 * scale..=0.8 * scale);
        b.obstacles(i, psi1, psi2).expect("in range");
    }
    b.build().expect("random model has consistent shapes")
}

/// On-disk model document. Rate and reward tensors are sparse lists
/// `[i, a, b, j, q]` and `[i, a, b, r]`; omitted diagonals are rebuilt from
/// conservativeness and omitted rewards are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub alpha: f64,
    pub states: usize,
    pub actions_p1: Vec<String>,
    pub actions_p2: Vec<String>,
    pub rates: Vec<(usize, usize, usize, usize, f64)>,
    #[serde(default)]
    pub rewards: Vec<(usize, usize, usize, f64)>,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
}

impl ModelFile {
    pub fn from_model(model: &GameModel) -> Self {
        let mut rates = Vec::new();
        let mut rewards = Vec::new();
        for (i, a, b) in model.cells() {
            let row = model.rate_row(i, a, b);
            let mut entries: Vec<(usize, f64)> = row.off_diagonal.clone();
            entries.push((i, row.diagonal));
            entries.sort_by_key(|&(j, _)| j);
            rates.extend(entries.into_iter().map(|(j, q)| (i, a, b, j, q)));
            let r = model.reward(i, a, b);
            if r != 0.0 {
                rewards.push((i, a, b, r));
            }
        }
        ModelFile {
            alpha: model.alpha(),
            states: model.num_states(),
            actions_p1: model.actions_p1().to_vec(),
            actions_p2: model.actions_p2().to_vec(),
            rates,
            rewards,
            psi1: model.psi1().to_vec(),
            psi2: model.psi2().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<GameModel> {
        let field = |name: &str, e: Error| Error::Parse(format!("field `{name}`: {e}"));
        if self.psi1.len() != self.states {
            return Err(Error::Parse(format!(
                "field `psi1`: expected {} entries, got {}",
                self.states,
                self.psi1.len()
            )));
        }
        if self.psi2.len() != self.states {
            return Err(Error::Parse(format!(
                "field `psi2`: expected {} entries, got {}",
                self.states,
                self.psi2.len()
            )));
        }
        let mut b = ModelBuilder::new(self.states, self.actions_p1, self.actions_p2, self.alpha);
        for (k, &(i, a, bb, j, q)) in self.rates.iter().enumerate() {
            b.rate(i, a, bb, j, q).map_err(|e| field(&format!("rates[{k}]"), e))?;
        }
        for (k, &(i, a, bb, r)) in self.rewards.iter().enumerate() {
            b.reward(i, a, bb, r).map_err(|e| field(&format!("rewards[{k}]"), e))?;
        }
        for i in 0..self.states {
            b.obstacles(i, self.psi1[i], self.psi2[i])?;
        }
        b.build()
    }
}

/// Parses a model document without validating it.
pub fn parse_model(text: &str) -> Result<GameModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_model()
}

pub fn model_to_json(model: &GameModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model document serializes")
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<GameModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let model = parse_model(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    validate_model(&model, None).into_result()?;
    Ok(model)
}

pub fn save_model(model: &GameModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(model) + "\n")?;
    Ok(())
}

/// Parses a queue spec block; missing fields take the defaults.
pub fn parse_queue_spec(text: &str) -> Result<QueueSpec> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}
