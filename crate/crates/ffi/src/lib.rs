//! C ABI over the stopgame solver.
//!
//! Models and solutions are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`StopgameStatus`]; on failure the
//! message is kept per thread and read with [`stopgame_last_error_message`].
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use stopgame::dpi_solver::{
    uniformize_shared, value_iterate, verify_dpi, EquilibriumSolution, IterationConfig, StateClass,
};
use stopgame::evaluator::StrategyProfile;
use stopgame::game_model::{validate_model, GameModel};
use stopgame::matrix_game::{solve_matrix_game, MatrixGame};
use stopgame::models::{parse_model, truncate_queue, validate_queue, QueueSpec};
use stopgame::report::to_canonical_json;
use stopgame::simulator::{mean_and_stderr, simulate_payoffs, SimulationConfig, DEFAULT_BIAS};
use stopgame::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopgameStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Rejected = 4,
    InvalidInput = 5,
    NoConvergence = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopgameStateClass {
    Continuation = 0,
    StopP1 = 1,
    StopP2 = 2,
}

impl From<StateClass> for StopgameStateClass {
    fn from(c: StateClass) -> Self {
        match c {
            StateClass::Continuation => StopgameStateClass::Continuation,
            StateClass::StopP1 => StopgameStateClass::StopP1,
            StateClass::StopP2 => StopgameStateClass::StopP2,
        }
    }
}

/// A validated model and its norm weight.
pub struct StopgameModel {
    model: Arc<GameModel>,
    weight: Arc<[f64]>,
}

/// A solved equilibrium, bound to the model it was computed for.
pub struct StopgameSolution {
    model: Arc<GameModel>,
    theta: f64,
    solution: EquilibriumSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(StopgameStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse(_) => StopgameStatus::Parse,
            Error::Rejected(_) => StopgameStatus::Rejected,
            Error::MaxIterExceeded { .. } | Error::MonotonicityViolation { .. } => StopgameStatus::NoConvergence,
            Error::Invalid(_) | Error::Dimension { .. } | Error::DegenerateWeight { .. } => {
                StopgameStatus::InvalidInput
            }
            _ => StopgameStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(StopgameStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, records any failure, and converts panics to `Panic`.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> StopgameStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            StopgameStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside stopgame".into());
            StopgameStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(StopgameStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn out_slice<'a, T>(buf: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], Failure> {
    if buf.is_null() {
        return Err(null("output buffer"));
    }
    if len < needed {
        return Err(Failure(
            StopgameStatus::BufferTooSmall,
            format!("buffer holds {len} entries, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(buf, needed))
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn stopgame_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a model document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_model_from_json(json: *const c_char, out: *mut *mut StopgameModel) -> StopgameStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let model = parse_model(text)?;
        let report = validate_model(&model, None).into_result()?;
        let handle = StopgameModel {
            weight: report.weight(),
            model: Arc::new(model),
        };
        write_out(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// The controlled queue with default parameters, truncated at `s_max`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_model_default_queue(s_max: usize, out: *mut *mut StopgameModel) -> StopgameStatus {
    guard(|| {
        let model = truncate_queue(&QueueSpec {
            s_max,
            ..QueueSpec::default()
        })?;
        let report = validate_queue(&model)?.into_result()?;
        let handle = StopgameModel {
            weight: report.weight(),
            model: Arc::new(model),
        };
        write_out(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_model_num_states(model: *const StopgameModel, out: *mut usize) -> StopgameStatus {
    guard(|| write_out(out, as_ref(model, "model")?.model.num_states(), "out"))
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stopgame_model_free(model: *mut StopgameModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Solves the game by monotone iteration from the lower obstacle.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_solve(
    model: *const StopgameModel,
    tol: f64,
    max_iter: usize,
    theta: f64,
    out: *mut *mut StopgameSolution,
) -> StopgameStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let um = uniformize_shared(m.model.clone(), theta)?;
        let cfg = IterationConfig {
            tol,
            max_iter,
            weight: Some(m.weight.clone()),
            ..IterationConfig::default()
        };
        let solution = value_iterate(&um, &cfg)?;
        let handle = StopgameSolution {
            model: m.model.clone(),
            theta,
            solution,
        };
        write_out(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// Copies `u*` into `buf`, which must hold at least one entry per state.
///
/// # Safety
/// `solution` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn stopgame_solution_values(
    solution: *const StopgameSolution,
    buf: *mut f64,
    len: usize,
) -> StopgameStatus {
    guard(|| {
        let values = &as_ref(solution, "solution")?.solution.u_star.values;
        out_slice(buf, len, values.len())?.copy_from_slice(values);
        Ok(())
    })
}

/// Copies the per-state classification into `buf`.
///
/// # Safety
/// `solution` must be a live handle; `buf` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn stopgame_solution_classification(
    solution: *const StopgameSolution,
    buf: *mut StopgameStateClass,
    len: usize,
) -> StopgameStatus {
    guard(|| {
        let classes = &as_ref(solution, "solution")?.solution.classification;
        for (slot, &c) in out_slice(buf, len, classes.len())?.iter_mut().zip(classes) {
            *slot = c.into();
        }
        Ok(())
    })
}

/// Iteration count and final residual `||T u* - u*||_W`.
///
/// # Safety
/// `solution` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_solution_stats(
    solution: *const StopgameSolution,
    iterations: *mut usize,
    residual: *mut f64,
) -> StopgameStatus {
    guard(|| {
        let s = &as_ref(solution, "solution")?.solution;
        write_out(iterations, s.iterations, "iterations")?;
        write_out(residual, s.residual, "residual")
    })
}

/// Canonical JSON of the solution. Release the string with [`stopgame_string_free`].
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_solution_to_json(
    solution: *const StopgameSolution,
    out: *mut *mut c_char,
) -> StopgameStatus {
    guard(|| {
        let text = to_canonical_json(&as_ref(solution, "solution")?.solution.to_file())?;
        let c = CString::new(text).map_err(|e| Failure(StopgameStatus::Internal, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stopgame_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `solution` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn stopgame_solution_free(solution: *mut StopgameSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Checks the dynamic-programming inequalities at tolerance `tol`.
/// `passed` receives 1 when every state satisfies them, else 0.
///
/// # Safety
/// `solution` must be a live handle; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_verify(
    solution: *const StopgameSolution,
    tol: f64,
    passed: *mut i32,
) -> StopgameStatus {
    guard(|| {
        let s = as_ref(solution, "solution")?;
        let um = uniformize_shared(s.model.clone(), s.theta)?;
        let report = verify_dpi(&um, &s.solution, tol)?;
        write_out(passed, report.passed() as i32, "passed")
    })
}

/// Monte-Carlo payoff of the equilibrium profile from `initial`.
///
/// # Safety
/// `solution` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn stopgame_simulate(
    solution: *const StopgameSolution,
    initial: usize,
    paths: usize,
    seed: u64,
    mean: *mut f64,
    stderr: *mut f64,
) -> StopgameStatus {
    guard(|| {
        let s = as_ref(solution, "solution")?;
        let profile = StrategyProfile::from_equilibrium(&s.solution);
        let cfg = SimulationConfig::with_bias(&s.model, paths, seed, DEFAULT_BIAS);
        let (m, se) = mean_and_stderr(&simulate_payoffs(&s.model, &profile, &cfg, initial)?);
        write_out(mean, m, "mean")?;
        write_out(stderr, se, "stderr")
    })
}

/// Solves the row-major `rows x cols` matrix game (rows minimize).
/// `mu` and `nu` receive `rows` and `cols` probabilities.
///
/// # Safety
/// `data` must hold `rows * cols` doubles; `mu`, `nu` and `value` must be
/// writable for `rows`, `cols` and one entries.
#[no_mangle]
pub unsafe extern "C" fn stopgame_matrix_game_solve(
    data: *const f64,
    rows: usize,
    cols: usize,
    value: *mut f64,
    mu: *mut f64,
    nu: *mut f64,
) -> StopgameStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let entries = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(StopgameStatus::InvalidInput, "matrix size overflows".into()))?;
        let game = MatrixGame::new(rows, cols, std::slice::from_raw_parts(data, entries).to_vec())?;
        let sol = solve_matrix_game(&game)?;
        out_slice(mu, rows, rows)?.copy_from_slice(&sol.mu);
        out_slice(nu, cols, cols)?.copy_from_slice(&sol.nu);
        write_out(value, sol.value, "value")
    })
}
