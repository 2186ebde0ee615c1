//! Finite two-player zero-sum matrix games.
//!
//! Rows belong to the minimizer (player I), columns to the maximizer
//! (player II); entry `(a, b)` is paid to the maximizer. Games are solved
//! with a dense simplex tableau on the positively shifted matrix using
//! Bland's rule, so the returned vertex solution is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted duality gap, relative to `max(1, max |entry|)`.
pub const DUALITY_GAP_TOL: f64 = 1e-8;

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixGame {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(
                "matrix game needs at least one row and one column".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "payoff matrix",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("payoff matrix has non-finite entries".into()));
        }
        Ok(MatrixGame { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Invalid("ragged payoff matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.cols + b]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `A nu`: the minimizer's expected payment for each pure row.
    pub fn row_payoffs(&self, nu: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().zip(nu).map(|(x, p)| x * p).sum())
            .collect()
    }

    /// `mu^T A`: the maximizer's expected gain for each pure column.
    pub fn col_payoffs(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &p) in self.data.chunks(self.cols).zip(mu) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += p * x;
            }
        }
        out
    }

    /// `mu^T A nu`.
    pub fn bilinear(&self, mu: &[f64], nu: &[f64]) -> f64 {
        self.row_payoffs(nu).iter().zip(mu).map(|(x, p)| x * p).sum()
    }

    fn scale(&self) -> f64 {
        self.data.iter().fold(1.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Value and optimal mixed strategies of a matrix game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    pub value: f64,
    /// Minimizer's mixture over rows.
    pub mu: Vec<f64>,
    /// Maximizer's mixture over columns.
    pub nu: Vec<f64>,
}

impl GameSolution {
    /// `max_b (mu^T A)_b - min_a (A nu)_a`: what `mu` concedes at worst minus
    /// what `nu` secures at worst. Zero exactly at a saddle point.
    pub fn duality_gap(&self, game: &MatrixGame) -> f64 {
        let upper = game.col_payoffs(&self.mu).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let lower = game.row_payoffs(&self.nu).into_iter().fold(f64::INFINITY, f64::min);
        upper - lower
    }
}

/// Solves `min_mu max_nu mu^T A nu`.
pub fn solve_matrix_game(game: &MatrixGame) -> Result<GameSolution> {
    if game.rows == 1 {
        let (b, value) = arg_best(&game.data, |x, best| x > best);
        return Ok(GameSolution {
            value,
            mu: vec![1.0],
            nu: unit(game.cols, b),
        });
    }
    if game.cols == 1 {
        let (a, value) = arg_best(&game.data, |x, best| x < best);
        return Ok(GameSolution {
            value,
            mu: unit(game.rows, a),
            nu: vec![1.0],
        });
    }

    let (mu, nu) = simplex(game)?;
    let sol = GameSolution {
        value: game.bilinear(&mu, &nu),
        mu,
        nu,
    };
    let gap = sol.duality_gap(game);
    if !(gap <= DUALITY_GAP_TOL * game.scale()) {
        return Err(Error::LpFailure(format!("duality gap {gap:e} above tolerance")));
    }
    Ok(sol)
}

fn arg_best(values: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (k, &x) in values.iter().enumerate().skip(1) {
        if better(x, best.1) {
            best = (k, x);
        }
    }
    best
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Minimizer's LP on the shifted matrix `A' > 0`:
/// maximize `sum x` subject to `A'^T x <= 1`, `x >= 0`.
/// The slack reduced costs at the optimum are the maximizer's dual `y`,
/// and `mu = x / sum x`, `nu = y / sum y`.
fn simplex(game: &MatrixGame) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n_rows, n_cols) = (game.rows, game.cols);
    let min_entry = game.data.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 + min_entry.abs();

    // constraint r <-> column r of A; variables: x_0..x_{n_rows-1}, then slacks
    let width = n_rows + n_cols;
    let mut tab = vec![0.0; n_cols * width];
    let mut rhs = vec![1.0; n_cols];
    for r in 0..n_cols {
        for a in 0..n_rows {
            tab[r * width + a] = game.get(a, r) + shift;
        }
        tab[r * width + n_rows + r] = 1.0;
    }
    let mut obj = vec![0.0; width];
    obj[..n_rows].fill(-1.0);
    let mut obj_rhs = 0.0;
    let mut basis: Vec<usize> = (n_rows..width).collect();

    let max_pivots = 50 * width * width + 100;
    let mut pivots = 0;
    while let Some(enter) = (0..width).find(|&c| obj[c] < -PIVOT_EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..n_cols {
            let coef = tab[r * width + enter];
            if coef > PIVOT_EPS {
                let ratio = rhs[r] / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio || (ratio == lratio && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((pr, _)) = leave else {
            return Err(Error::LpFailure("unbounded pivot column".into()));
        };

        let p = tab[pr * width + enter];
        for c in 0..width {
            tab[pr * width + c] /= p;
        }
        rhs[pr] /= p;
        for r in 0..n_cols {
            if r == pr {
                continue;
            }
            let f = tab[r * width + enter];
            if f != 0.0 {
                for c in 0..width {
                    tab[r * width + c] -= f * tab[pr * width + c];
                }
                rhs[r] -= f * rhs[pr];
            }
        }
        let f = obj[enter];
        for c in 0..width {
            obj[c] -= f * tab[pr * width + c];
        }
        obj_rhs -= f * rhs[pr];
        basis[pr] = enter;

        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::LpFailure("pivot limit reached".into()));
        }
    }
    if !(obj_rhs > 0.0) {
        return Err(Error::LpFailure(format!("non-positive LP objective {obj_rhs}")));
    }

    let mut x = vec![0.0; n_rows];
    for (r, &var) in basis.iter().enumerate() {
        if var < n_rows {
            x[var] = rhs[r];
        }
    }
    let y: Vec<f64> = obj[n_rows..].to_vec();
    Ok((normalize(x)?, normalize(y)?))
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    for p in v.iter_mut() {
        *p = p.max(0.0);
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        return Err(Error::LpFailure("empty mixed strategy".into()));
    }
    for p in v.iter_mut() {
        *p /= total;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn game(rows: &[&[f64]]) -> MatrixGame {
        MatrixGame::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Closed form for 2x2 games without a pure saddle point.
    fn two_by_two_mixed(m: [[f64; 2]; 2]) -> (f64, f64, f64) {
        let [[a, b], [c, d]] = m;
        let den = a + d - b - c;
        ((a * d - b * c) / den, (d - c) / den, (d - b) / den)
    }

    #[test]
    fn matching_pennies() {
        let g = game(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let s = solve_matrix_game(&g).unwrap();
        assert!(s.value.abs() < 1e-12);
        assert!(close(&s.mu, &[0.5, 0.5], 1e-12));
        assert!(close(&s.nu, &[0.5, 0.5], 1e-12));
    }

    #[test]
    fn single_entry() {
        let s = solve_matrix_game(&game(&[&[5.0]])).unwrap();
        assert_eq!(
            s,
            GameSolution {
                value: 5.0,
                mu: vec![1.0],
                nu: vec![1.0]
            }
        );
    }

    #[test]
    fn diagonal_two_by_two_matches_closed_form() {
        let (v, mu0, nu0) = two_by_two_mixed([[2.0, 0.0], [0.0, 1.0]]);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        let s = solve_matrix_game(&game(&[&[2.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert!((s.value - v).abs() < 1e-12);
        assert!(close(&s.mu, &[mu0, 1.0 - mu0], 1e-12));
        assert!(close(&s.nu, &[nu0, 1.0 - nu0], 1e-12));
        assert!(close(&s.mu, &[1.0 / 3.0, 2.0 / 3.0], 1e-12));
    }

    #[test]
    fn degenerate_shapes_bypass_lp() {
        let s = solve_matrix_game(&game(&[&[1.0, 4.0, 4.0, -2.0]])).unwrap();
        assert_eq!((s.value, s.nu), (4.0, vec![0.0, 1.0, 0.0, 0.0]));
        let s = solve_matrix_game(&game(&[&[3.0], &[-1.0], &[-1.0]])).unwrap();
        assert_eq!((s.value, s.mu), (-1.0, vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MatrixGame::new(0, 1, vec![]).is_err());
        assert!(MatrixGame::new(1, 2, vec![1.0]).is_err());
        assert!(MatrixGame::new(1, 1, vec![f64::NAN]).is_err());
        assert!(MatrixGame::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn deterministic_on_repeat() {
        let g = game(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let first = solve_matrix_game(&g).unwrap();
        for _ in 0..5 {
            assert_eq!(solve_matrix_game(&g).unwrap(), first);
        }
    }

    fn matrix() -> impl Strategy<Value = MatrixGame> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| MatrixGame::new(r, c, d).unwrap())
        })
    }

    fn pure_minimax(g: &MatrixGame) -> (f64, f64) {
        let upper = (0..g.rows())
            .map(|a| (0..g.cols()).map(|b| g.get(a, b)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        let lower = (0..g.cols())
            .map(|b| (0..g.rows()).map(|a| g.get(a, b)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max);
        (upper, lower)
    }

    proptest! {
        #[test]
        fn optimality_certificates(g in matrix()) {
            let s = solve_matrix_game(&g).unwrap();
            prop_assert!((s.mu.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!((s.nu.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(s.mu.iter().chain(&s.nu).all(|&p| p >= 0.0));
            // mu caps the maximizer's best column; nu floors the minimizer's best row
            let best_col = g.col_payoffs(&s.mu).into_iter().fold(f64::NEG_INFINITY, f64::max);
            let best_row = g.row_payoffs(&s.nu).into_iter().fold(f64::INFINITY, f64::min);
            prop_assert!(best_col <= s.value + 1e-8);
            prop_assert!(best_row >= s.value - 1e-8);
        }

        #[test]
        fn monotone_in_entries(g in matrix(), bumps in prop::collection::vec(0.0f64..3.0, 36)) {
            let data: Vec<f64> = g.data().iter().zip(&bumps).map(|(x, d)| x + d).collect();
            let h = MatrixGame::new(g.rows(), g.cols(), data).unwrap();
            let (vg, vh) = (solve_matrix_game(&g).unwrap().value, solve_matrix_game(&h).unwrap().value);
            prop_assert!(vg <= vh + 1e-9);
        }

        #[test]
        fn constant_shift(g in matrix(), c in -20.0f64..20.0) {
            let shifted = MatrixGame::new(g.rows(), g.cols(), g.data().iter().map(|x| x + c).collect()).unwrap();
            let s = solve_matrix_game(&shifted).unwrap();
            let base = solve_matrix_game(&g).unwrap();
            prop_assert!((s.value - (base.value + c)).abs() < 1e-8);
            // the shifted game's strategies stay optimal for the original
            let unshifted = GameSolution { value: base.value, mu: s.mu.clone(), nu: s.nu.clone() };
            prop_assert!(unshifted.duality_gap(&g) <= 1e-8 * 30.0);
        }

        #[test]
        fn pure_saddle_agrees_with_enumeration(g in matrix()) {
            let (upper, lower) = pure_minimax(&g);
            if upper == lower {
                let s = solve_matrix_game(&g).unwrap();
                prop_assert!((s.value - upper).abs() < 1e-9);
            }
        }
    }
}
