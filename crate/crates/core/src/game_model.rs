//! Game primitives: the controlled rate tensor, reward rates, the two stopping
//! payoffs and the discount rate, together with the checks that make a finite
//! model admissible (sign and conservativeness of the rates, `psi2 < psi1`,
//! and a Lyapunov-type certificate bounding growth).
//!
//! Player I (the minimizer) picks actions from `actions_p1` and stops with
//! payoff `psi1`; player II (the maximizer) picks from `actions_p2` and stops
//! with payoff `psi2`. All tensors indexed by `(i, a, b)` are stored flat in
//! row-major order.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute per-row tolerance for `sum_j q(j|i,a,b) = 0`.
pub const CONSERVATIVE_TOL: f64 = 1e-12;

/// One row `q(.|i,a,b)` of the rate tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    /// Off-diagonal entries `(j, q(j|i,a,b))`, sorted by `j`, zeros omitted.
    pub off_diagonal: Vec<(usize, f64)>,
    pub diagonal: f64,
}

impl RateRow {
    /// Builds a conservative row from off-diagonal rates, merging duplicate targets.
    pub fn conservative(state: usize, entries: Vec<(usize, f64)>) -> Self {
        let off_diagonal = merge_targets(&entries, state);
        let diagonal = -off_diagonal.iter().map(|&(_, v)| v).sum::<f64>();
        RateRow { off_diagonal, diagonal }
    }

    /// Total jump rate out of the state, `sum_{j != i} q(j|i,a,b)`.
    pub fn out_rate(&self) -> f64 {
        self.off_diagonal.iter().map(|&(_, v)| v).sum()
    }

    pub fn row_sum(&self) -> f64 {
        self.diagonal + self.out_rate()
    }

    /// `sum_j q(j|i,a,b) f(j)` for the row belonging to `state`.
    pub fn apply(&self, state: usize, f: &[f64]) -> f64 {
        self.diagonal * f[state] + self.off_diagonal.iter().map(|&(j, v)| v * f[j]).sum::<f64>()
    }
}

/// A finite game model. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    alpha: f64,
    num_states: usize,
    actions_p1: Vec<String>,
    actions_p2: Vec<String>,
    rates: Vec<RateRow>,
    reward: Vec<f64>,
    psi1: Vec<f64>,
    psi2: Vec<f64>,
    q_max: Vec<f64>,
}

impl GameModel {
    /// Assembles a model from flat `(i, a, b)`-indexed tensors.
    ///
    /// Only shapes and index ranges are checked here; the admissibility
    /// conditions live in [`validate_model`].
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        alpha: f64,
        num_states: usize,
        actions_p1: Vec<String>,
        actions_p2: Vec<String>,
        rates: Vec<RateRow>,
        reward: Vec<f64>,
        psi1: Vec<f64>,
        psi2: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::Invalid("model needs at least one state".into()));
        }
        if actions_p1.is_empty() || actions_p2.is_empty() {
            return Err(Error::Invalid("each player needs at least one action".into()));
        }
        let cells = num_states * actions_p1.len() * actions_p2.len();
        check_len("rates", cells, rates.len())?;
        check_len("reward", cells, reward.len())?;
        check_len("psi1", num_states, psi1.len())?;
        check_len("psi2", num_states, psi2.len())?;
        for row in &rates {
            if let Some(&(j, _)) = row.off_diagonal.iter().find(|&&(j, _)| j >= num_states) {
                return Err(Error::Invalid(format!(
                    "rate target {j} outside state space of size {num_states}"
                )));
            }
        }
        let per_state = actions_p1.len() * actions_p2.len();
        let q_max = rates
            .chunks(per_state)
            .map(|rows| rows.iter().map(RateRow::out_rate).fold(0.0, f64::max))
            .collect();
        Ok(GameModel {
            alpha,
            num_states,
            actions_p1,
            actions_p2,
            rates,
            reward,
            psi1,
            psi2,
            q_max,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn actions_p1(&self) -> &[String] {
        &self.actions_p1
    }

    pub fn actions_p2(&self) -> &[String] {
        &self.actions_p2
    }

    pub fn num_actions_p1(&self) -> usize {
        self.actions_p1.len()
    }

    pub fn num_actions_p2(&self) -> usize {
        self.actions_p2.len()
    }

    #[inline]
    pub fn index(&self, i: usize, a: usize, b: usize) -> usize {
        (i * self.actions_p1.len() + a) * self.actions_p2.len() + b
    }

    pub fn rate_row(&self, i: usize, a: usize, b: usize) -> &RateRow {
        &self.rates[self.index(i, a, b)]
    }

    pub fn rate_rows(&self) -> &[RateRow] {
        &self.rates
    }

    pub fn reward(&self, i: usize, a: usize, b: usize) -> f64 {
        self.reward[self.index(i, a, b)]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn psi1(&self) -> &[f64] {
        &self.psi1
    }

    pub fn psi2(&self) -> &[f64] {
        &self.psi2
    }

    /// `q(i) = max_{a,b} sum_{j != i} q(j|i,a,b)`.
    pub fn q_max(&self, i: usize) -> f64 {
        self.q_max[i]
    }

    pub fn q_max_all(&self) -> &[f64] {
        &self.q_max
    }

    /// Largest reward rate over all states and action pairs.
    pub fn reward_max(&self) -> f64 {
        self.reward.iter().copied().fold(0.0, f64::max)
    }

    pub fn psi1_max(&self) -> f64 {
        self.psi1.iter().copied().fold(0.0, f64::max)
    }

    /// Iterates `(i, a, b)` in storage order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (n1, n2) = (self.num_actions_p1(), self.num_actions_p2());
        (0..self.num_states).flat_map(move |i| (0..n1).flat_map(move |a| (0..n2).map(move |b| (i, a, b))))
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { what, expected, got });
    }
    Ok(())
}

/// Incremental construction of a [`GameModel`] from sparse entries.
///
/// Diagonal rates are reconstructed from conservativeness unless set
/// explicitly with `j == i`.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    alpha: f64,
    num_states: usize,
    actions_p1: Vec<String>,
    actions_p2: Vec<String>,
    off_diagonal: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<Option<f64>>,
    reward: Vec<f64>,
    psi1: Vec<f64>,
    psi2: Vec<f64>,
}

impl ModelBuilder {
    pub fn new(num_states: usize, actions_p1: Vec<String>, actions_p2: Vec<String>, alpha: f64) -> Self {
        let cells = num_states * actions_p1.len() * actions_p2.len();
        ModelBuilder {
            alpha,
            num_states,
            actions_p1,
            actions_p2,
            off_diagonal: vec![Vec::new(); cells],
            diagonal: vec![None; cells],
            reward: vec![0.0; cells],
            psi1: vec![0.0; num_states],
            psi2: vec![0.0; num_states],
        }
    }

    /// Builder with numbered action labels `"0".."n-1"`.
    pub fn with_action_counts(num_states: usize, n1: usize, n2: usize, alpha: f64) -> Self {
        let labels = |n: usize| (0..n).map(|k| k.to_string()).collect();
        Self::new(num_states, labels(n1), labels(n2), alpha)
    }

    fn cell(&self, i: usize, a: usize, b: usize) -> Result<usize> {
        let (n1, n2) = (self.actions_p1.len(), self.actions_p2.len());
        if i >= self.num_states || a >= n1 || b >= n2 {
            return Err(Error::Invalid(format!(
                "cell ({i},{a},{b}) outside {}x{n1}x{n2}",
                self.num_states
            )));
        }
        Ok((i * n1 + a) * n2 + b)
    }

    pub fn rate(&mut self, i: usize, a: usize, b: usize, j: usize, value: f64) -> Result<&mut Self> {
        let k = self.cell(i, a, b)?;
        if j >= self.num_states {
            return Err(Error::Invalid(format!("rate target {j} outside state space")));
        }
        if j == i {
            self.diagonal[k] = Some(value);
        } else {
            self.off_diagonal[k].push((j, value));
        }
        Ok(self)
    }

    /// Sets the same off-diagonal rate for every action pair.
    pub fn rate_all(&mut self, i: usize, j: usize, value: f64) -> Result<&mut Self> {
        for a in 0..self.actions_p1.len() {
            for b in 0..self.actions_p2.len() {
                self.rate(i, a, b, j, value)?;
            }
        }
        Ok(self)
    }

    pub fn reward(&mut self, i: usize, a: usize, b: usize, value: f64) -> Result<&mut Self> {
        let k = self.cell(i, a, b)?;
        self.reward[k] = value;
        Ok(self)
    }

    pub fn reward_all(&mut self, i: usize, value: f64) -> Result<&mut Self> {
        for a in 0..self.actions_p1.len() {
            for b in 0..self.actions_p2.len() {
                self.reward(i, a, b, value)?;
            }
        }
        Ok(self)
    }

    pub fn obstacles(&mut self, i: usize, psi1: f64, psi2: f64) -> Result<&mut Self> {
        if i >= self.num_states {
            return Err(Error::Invalid(format!("state {i} outside state space")));
        }
        self.psi1[i] = psi1;
        self.psi2[i] = psi2;
        Ok(self)
    }

    pub fn build(&self) -> Result<GameModel> {
        let per_state = self.actions_p1.len() * self.actions_p2.len();
        if per_state == 0 {
            return Err(Error::Invalid("each player needs at least one action".into()));
        }
        let rates = self
            .off_diagonal
            .iter()
            .zip(&self.diagonal)
            .enumerate()
            .map(|(k, (entries, diag))| {
                let off_diagonal = merge_targets(entries, k / per_state);
                let diagonal = diag.unwrap_or_else(|| -off_diagonal.iter().map(|&(_, v)| v).sum::<f64>());
                RateRow { off_diagonal, diagonal }
            })
            .collect();
        GameModel::from_parts(
            self.alpha,
            self.num_states,
            self.actions_p1.clone(),
            self.actions_p2.clone(),
            rates,
            self.reward.clone(),
            self.psi1.clone(),
            self.psi2.clone(),
        )
    }
}

/// Sorts by target, sums duplicates and drops the diagonal and exact zeros.
fn merge_targets(entries: &[(usize, f64)], state: usize) -> Vec<(usize, f64)> {
    let mut sorted: Vec<(usize, f64)> = entries.iter().copied().filter(|&(j, _)| j != state).collect();
    sorted.sort_by_key(|&(j, _)| j);
    let mut merged: Vec<(usize, f64)> = Vec::with_capacity(sorted.len());
    for (j, v) in sorted {
        match merged.last_mut() {
            Some((last, acc)) if *last == j => *acc += v,
            _ => merged.push((j, v)),
        }
    }
    merged.retain(|&(_, v)| v != 0.0);
    merged
}

/// Which obstacle a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Obstacle {
    Psi1,
    Psi2,
}

/// The certificate inequality that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateCondition {
    /// `sum_j q(j|i,a,b) w_n(j) <= w_{n+1}(i)`, or `<= 0` for the last function.
    Drift { level: usize },
    /// `q(i) <= c W(i)`.
    RateBound,
    /// `r(i,a,b) <= M W(i)`.
    RewardBound,
    /// `psi1(i) <= M W(i)`.
    ObstacleBound,
    /// `q(i) W(i) <= M W~(i)`.
    RateWeightBound,
    /// `sum_j q(j|i,a,b) W~(j) <= c W~(i) + c~`.
    SecondDrift,
    /// Functions must be nonnegative and constants positive.
    Sign,
}

/// One failed admissibility condition, with the offending indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveDiscount {
        alpha: f64,
    },
    NonFinite {
        field: String,
        state: usize,
    },
    NegativeRate {
        i: usize,
        a: usize,
        b: usize,
        j: usize,
        value: f64,
    },
    NonConservative {
        i: usize,
        a: usize,
        b: usize,
        row_sum: f64,
    },
    NegativeReward {
        i: usize,
        a: usize,
        b: usize,
        value: f64,
    },
    NegativeObstacle {
        state: usize,
        obstacle: Obstacle,
        value: f64,
    },
    ObstacleOrder {
        state: usize,
        psi1: f64,
        psi2: f64,
    },
    Certificate {
        condition: CertificateCondition,
        state: usize,
        actions: Option<(usize, usize)>,
        lhs: f64,
        rhs: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveDiscount { alpha } => write!(f, "discount rate {alpha} is not positive"),
            Violation::NonFinite { field, state } => write!(f, "non-finite {field} at state {state}"),
            Violation::NegativeRate { i, a, b, j, value } => {
                write!(f, "negative off-diagonal rate q({j}|{i},{a},{b}) = {value}")
            }
            Violation::NonConservative { i, a, b, row_sum } => {
                write!(f, "non-conservative row ({i},{a},{b}): sum = {row_sum:e}")
            }
            Violation::NegativeReward { i, a, b, value } => {
                write!(f, "negative reward r({i},{a},{b}) = {value}")
            }
            Violation::NegativeObstacle { state, obstacle, value } => {
                write!(f, "negative {obstacle:?} at state {state}: {value}")
            }
            Violation::ObstacleOrder { state, psi1, psi2 } => {
                write!(f, "psi2 >= psi1 at state {state} ({psi2} >= {psi1})")
            }
            Violation::Certificate {
                condition,
                state,
                actions,
                lhs,
                rhs,
            } => {
                write!(f, "certificate condition {condition:?} fails at state {state}")?;
                if let Some((a, b)) = actions {
                    write!(f, " actions ({a},{b})")?;
                }
                write!(f, ": {lhs} > {rhs}")
            }
        }
    }
}

/// Growth and non-explosion certificate for a finite model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    /// `w_1 .. w_N`.
    pub w: Vec<Vec<f64>>,
    /// `W = w_1 + ... + w_N`.
    pub weight: Vec<f64>,
    pub w_tilde: Vec<f64>,
    pub m: f64,
    pub c: f64,
    pub c_tilde: f64,
}

impl LyapunovCertificate {
    /// Completes a certificate from the drift functions `w`, choosing
    /// `W~ = W (1 + q)`, `c~ = 1` and the smallest `M`, `c` that make every
    /// bound hold on the finite model.
    pub fn complete(model: &GameModel, w: Vec<Vec<f64>>) -> Result<Self> {
        let n = model.num_states();
        if w.is_empty() {
            return Err(Error::Invalid("certificate needs at least one drift function".into()));
        }
        for level in &w {
            check_len("certificate drift function", n, level.len())?;
        }
        let weight: Vec<f64> = (0..n).map(|i| w.iter().map(|level| level[i]).sum()).collect();
        if let Some((state, &value)) = weight.iter().enumerate().find(|(_, &v)| v <= 0.0 || !v.is_finite()) {
            return Err(Error::DegenerateWeight { state, value });
        }
        let w_tilde: Vec<f64> = (0..n).map(|i| weight[i] * (1.0 + model.q_max(i))).collect();
        let c_tilde = 1.0;

        let mut m: f64 = 0.0;
        let mut c: f64 = 0.0;
        for i in 0..n {
            m = m.max(model.psi1()[i] / weight[i]);
            m = m.max(model.q_max(i) * weight[i] / w_tilde[i]);
            c = c.max(model.q_max(i) / weight[i]);
        }
        for (i, a, b) in model.cells() {
            m = m.max(model.reward(i, a, b) / weight[i]);
            let drift = model.rate_row(i, a, b).apply(i, &w_tilde);
            c = c.max((drift - c_tilde) / w_tilde[i]);
        }
        Ok(LyapunovCertificate {
            w,
            weight,
            w_tilde,
            m: if m > 0.0 { m } else { 1.0 },
            c: if c > 0.0 { c } else { 1.0 },
            c_tilde,
        })
    }

    /// The certificate used when none is supplied: `N = 1`, `w_1 = 1`.
    ///
    /// A constant function has zero drift under any conservative generator,
    /// so on a finite model only the constants need choosing. The induced
    /// weighted norm is the sup norm.
    pub fn trivial(model: &GameModel) -> Result<Self> {
        Self::complete(model, vec![vec![1.0; model.num_states()]])
    }
}

/// Outcome of [`validate_model`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Recorded stability bound `q(i)` per state.
    pub q_max: Vec<f64>,
    pub certificate: Option<LyapunovCertificate>,
    /// True when the certificate was constructed rather than supplied.
    pub auto_certificate: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::Rejected(self.violations))
        }
    }

    /// The norm weight `W` of the certificate, or the unit weight.
    pub fn weight(&self) -> Arc<[f64]> {
        match &self.certificate {
            Some(cert) => cert.weight.clone().into(),
            None => vec![1.0; self.q_max.len()].into(),
        }
    }
}

/// Checks every admissibility condition and, when `cert` is absent,
/// constructs and re-checks the trivial certificate.
pub fn validate_model(model: &GameModel, cert: Option<&LyapunovCertificate>) -> ValidationReport {
    let mut violations = Vec::new();
    if !(model.alpha() > 0.0 && model.alpha().is_finite()) {
        violations.push(Violation::NonPositiveDiscount { alpha: model.alpha() });
    }
    for (i, a, b) in model.cells() {
        let row = model.rate_row(i, a, b);
        let finite = row.diagonal.is_finite() && row.off_diagonal.iter().all(|&(_, v)| v.is_finite());
        if !finite {
            violations.push(Violation::NonFinite {
                field: "rates".into(),
                state: i,
            });
            continue;
        }
        for &(j, value) in &row.off_diagonal {
            if value < 0.0 {
                violations.push(Violation::NegativeRate { i, a, b, j, value });
            }
        }
        let row_sum = row.row_sum();
        if row_sum.abs() > CONSERVATIVE_TOL {
            violations.push(Violation::NonConservative { i, a, b, row_sum });
        }
        let r = model.reward(i, a, b);
        if !r.is_finite() {
            violations.push(Violation::NonFinite {
                field: "reward".into(),
                state: i,
            });
        } else if r < 0.0 {
            violations.push(Violation::NegativeReward { i, a, b, value: r });
        }
    }
    for state in 0..model.num_states() {
        let (p1, p2) = (model.psi1()[state], model.psi2()[state]);
        if !p1.is_finite() || !p2.is_finite() {
            violations.push(Violation::NonFinite {
                field: "psi".into(),
                state,
            });
            continue;
        }
        if p1 < 0.0 {
            violations.push(Violation::NegativeObstacle {
                state,
                obstacle: Obstacle::Psi1,
                value: p1,
            });
        }
        if p2 < 0.0 {
            violations.push(Violation::NegativeObstacle {
                state,
                obstacle: Obstacle::Psi2,
                value: p2,
            });
        }
        if p2 >= p1 {
            violations.push(Violation::ObstacleOrder {
                state,
                psi1: p1,
                psi2: p2,
            });
        }
    }

    let (certificate, auto_certificate) = match cert {
        Some(c) => (Some(c.clone()), false),
        None => (LyapunovCertificate::trivial(model).ok(), true),
    };
    // certificate inequalities are meaningless on a malformed generator
    if let (Some(c), true) = (&certificate, violations.is_empty()) {
        violations.extend(check_certificate(model, c));
    }
    ValidationReport {
        violations,
        q_max: model.q_max_all().to_vec(),
        certificate,
        auto_certificate,
    }
}

/// Re-checks every certificate inequality on the finite model.
pub fn check_certificate(model: &GameModel, cert: &LyapunovCertificate) -> Vec<Violation> {
    let n = model.num_states();
    let mut out = Vec::new();
    let shapes_ok = cert.w.iter().all(|w| w.len() == n) && cert.weight.len() == n && cert.w_tilde.len() == n;
    if cert.w.is_empty() || !shapes_ok {
        out.push(Violation::Certificate {
            condition: CertificateCondition::Sign,
            state: 0,
            actions: None,
            lhs: cert.w.len() as f64,
            rhs: n as f64,
        });
        return out;
    }
    let mut fail = |condition, state, actions, lhs: f64, rhs: f64, scale: f64| {
        if lhs > rhs + 1e-12 * scale.max(1.0) {
            out.push(Violation::Certificate {
                condition,
                state,
                actions,
                lhs,
                rhs,
            });
        }
    };
    for c in [cert.m, cert.c, cert.c_tilde] {
        if !(c > 0.0) {
            fail(CertificateCondition::Sign, 0, None, 0.0, c, 0.0);
        }
    }
    let big_n = cert.w.len();
    for i in 0..n {
        let w_sum: f64 = cert.w.iter().map(|w| w[i]).sum();
        for w in &cert.w {
            fail(CertificateCondition::Sign, i, None, 0.0, w[i], 0.0);
        }
        fail(CertificateCondition::Sign, i, None, 0.0, cert.w_tilde[i], 0.0);
        fail(
            CertificateCondition::Sign,
            i,
            None,
            (cert.weight[i] - w_sum).abs(),
            0.0,
            w_sum,
        );
        let q = model.q_max(i);
        fail(CertificateCondition::RateBound, i, None, q, cert.c * w_sum, q);
        fail(
            CertificateCondition::ObstacleBound,
            i,
            None,
            model.psi1()[i],
            cert.m * w_sum,
            model.psi1()[i],
        );
        fail(
            CertificateCondition::RateWeightBound,
            i,
            None,
            q * w_sum,
            cert.m * cert.w_tilde[i],
            q * w_sum,
        );
    }
    for (i, a, b) in model.cells() {
        let row = model.rate_row(i, a, b);
        let scale_of =
            |f: &[f64]| row.diagonal.abs() * f[i] + row.off_diagonal.iter().map(|&(j, v)| v.abs() * f[j]).sum::<f64>();
        for level in 0..big_n {
            let drift = row.apply(i, &cert.w[level]);
            let bound = if level + 1 < big_n { cert.w[level + 1][i] } else { 0.0 };
            fail(
                CertificateCondition::Drift { level: level + 1 },
                i,
                Some((a, b)),
                drift,
                bound,
                scale_of(&cert.w[level]),
            );
        }
        let r = model.reward(i, a, b);
        fail(
            CertificateCondition::RewardBound,
            i,
            Some((a, b)),
            r,
            cert.m * cert.weight[i],
            r,
        );
        let drift = row.apply(i, &cert.w_tilde);
        fail(
            CertificateCondition::SecondDrift,
            i,
            Some((a, b)),
            drift,
            cert.c * cert.w_tilde[i] + cert.c_tilde,
            scale_of(&cert.w_tilde),
        );
    }
    out
}

/// A state-indexed function together with the weight of its norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub weight: Arc<[f64]>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>, weight: Arc<[f64]>) -> Self {
        ValueFunction { values, weight }
    }

    /// Value function measured in the sup norm (`W = 1`).
    pub fn unweighted(values: Vec<f64>) -> Self {
        let weight = vec![1.0; values.len()].into();
        ValueFunction { values, weight }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `max_i |f(i)| / W(i)`.
pub fn weighted_norm(f: &ValueFunction) -> Result<f64> {
    weighted_distance(&f.values, &vec![0.0; f.values.len()], &f.weight)
}

/// `max_i |f(i) - g(i)| / W(i)`.
pub fn weighted_distance(f: &[f64], g: &[f64], weight: &[f64]) -> Result<f64> {
    check_len("value function", weight.len(), f.len())?;
    check_len("value function", weight.len(), g.len())?;
    let mut norm: f64 = 0.0;
    for (state, ((x, y), &w)) in f.iter().zip(g).zip(weight).enumerate() {
        if !(w > 0.0) {
            return Err(Error::DegenerateWeight { state, value: w });
        }
        norm = norm.max((x - y).abs() / w);
    }
    Ok(norm)
}

/// A model on the countable state space `{0, 1, 2, ...}`, described by rules
/// evaluated per `(i, a, b)`.
pub trait CountableModel {
    fn alpha(&self) -> f64;
    fn actions_p1(&self) -> Vec<String>;
    fn actions_p2(&self) -> Vec<String>;
    /// Off-diagonal rates `(j, q(j|i,a,b))`; targets may lie beyond any truncation level.
    fn transitions(&self, i: usize, a: usize, b: usize) -> Vec<(usize, f64)>;
    fn reward(&self, i: usize, a: usize, b: usize) -> f64;
    fn psi1(&self, i: usize) -> f64;
    fn psi2(&self, i: usize) -> f64;
}

/// Restricts a countable model to `{0..=s_max}` with reflecting truncation:
/// rate mass leaving the range is dropped and the diagonal rebalanced.
pub fn truncate_model<M: CountableModel + ?Sized>(spec: &M, s_max: usize) -> Result<GameModel> {
    if s_max == 0 {
        return Err(Error::Invalid("truncation level must be at least 1".into()));
    }
    let num_states = s_max + 1;
    let (p1, p2) = (spec.actions_p1(), spec.actions_p2());
    let mut rates = Vec::with_capacity(num_states * p1.len() * p2.len());
    let mut reward = Vec::with_capacity(rates.capacity());
    for i in 0..num_states {
        for a in 0..p1.len() {
            for b in 0..p2.len() {
                let kept = spec
                    .transitions(i, a, b)
                    .into_iter()
                    .filter(|&(j, _)| j <= s_max)
                    .collect();
                rates.push(RateRow::conservative(i, kept));
                reward.push(spec.reward(i, a, b));
            }
        }
    }
    GameModel::from_parts(
        spec.alpha(),
        num_states,
        p1,
        p2,
        rates,
        reward,
        (0..num_states).map(|i| spec.psi1(i)).collect(),
        (0..num_states).map(|i| spec.psi2(i)).collect(),
    )
}
