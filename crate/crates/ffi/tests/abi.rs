use std::ffi::{CStr, CString};
use std::ptr;

use stopgame_ffi::*;

fn last_error() -> String {
    let p = stopgame_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const TWO_STATE: &str = r#"{
  "alpha": 1.0, "states": 2, "actions_p1": ["x"], "actions_p2": ["y"],
  "rates": [[0, 0, 0, 1, 1.0], [1, 0, 0, 0, 2.0]],
  "rewards": [[0, 0, 0, 1.0], [1, 0, 0, 0.5]],
  "psi1": [3.0, 0.9], "psi2": [0.2, 0.6]
}"#;

#[test]
fn queue_round_trip() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(stopgame_model_default_queue(20, &mut model), StopgameStatus::Ok);
        let mut n = 0;
        assert_eq!(stopgame_model_num_states(model, &mut n), StopgameStatus::Ok);
        assert_eq!(n, 21);

        let mut sol = ptr::null_mut();
        assert_eq!(stopgame_solve(model, 1e-8, 100_000, 1.0, &mut sol), StopgameStatus::Ok);
        assert!(stopgame_last_error_message().is_null());

        let mut values = vec![0.0; n];
        assert_eq!(
            stopgame_solution_values(sol, values.as_mut_ptr(), n),
            StopgameStatus::Ok
        );
        assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-9));

        let mut classes = vec![StopgameStateClass::Continuation; n];
        assert_eq!(
            stopgame_solution_classification(sol, classes.as_mut_ptr(), n),
            StopgameStatus::Ok
        );
        assert_eq!(classes[n - 1], StopgameStateClass::StopP1);

        let (mut iterations, mut residual) = (0, 0.0);
        assert_eq!(
            stopgame_solution_stats(sol, &mut iterations, &mut residual),
            StopgameStatus::Ok
        );
        assert!(iterations > 0 && residual <= 1e-8);

        let mut passed = 0;
        assert_eq!(stopgame_verify(sol, 1e-7, &mut passed), StopgameStatus::Ok);
        assert_eq!(passed, 1);

        let mut json = ptr::null_mut();
        assert_eq!(stopgame_solution_to_json(sol, &mut json), StopgameStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        stopgame_string_free(json);
        assert!(text.contains("\"u_star\""));

        stopgame_solution_free(sol);
        stopgame_model_free(model);
    }
}

#[test]
fn simulate_agrees_with_value() {
    let json = CString::new(TWO_STATE).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(stopgame_model_from_json(json.as_ptr(), &mut model), StopgameStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(stopgame_solve(model, 1e-10, 100_000, 1.0, &mut sol), StopgameStatus::Ok);
        let mut u = [0.0; 2];
        stopgame_solution_values(sol, u.as_mut_ptr(), 2);
        let (mut mean, mut se) = (0.0, 0.0);
        assert_eq!(
            stopgame_simulate(sol, 0, 20_000, 9, &mut mean, &mut se),
            StopgameStatus::Ok
        );
        assert!((mean - u[0]).abs() <= 4.0 * se + 1e-6, "{mean} vs {}", u[0]);
        stopgame_solution_free(sol);
        stopgame_model_free(model);
    }
}

#[test]
fn failures_set_status_and_message() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            stopgame_model_from_json(ptr::null(), &mut model),
            StopgameStatus::NullPointer
        );
        assert!(model.is_null());

        let bad = CString::new("{ not json").unwrap();
        assert_eq!(
            stopgame_model_from_json(bad.as_ptr(), &mut model),
            StopgameStatus::Parse
        );

        let touching = CString::new(TWO_STATE.replace("[0.2, 0.6]", "[0.2, 0.9]")).unwrap();
        assert_eq!(
            stopgame_model_from_json(touching.as_ptr(), &mut model),
            StopgameStatus::Rejected
        );
        assert!(last_error().contains("state 1"), "{}", last_error());

        let json = CString::new(TWO_STATE).unwrap();
        assert_eq!(stopgame_model_from_json(json.as_ptr(), &mut model), StopgameStatus::Ok);
        let mut sol = ptr::null_mut();
        assert_eq!(
            stopgame_solve(model, 1e-8, 100_000, -1.0, &mut sol),
            StopgameStatus::InvalidInput
        );
        assert_eq!(
            stopgame_solve(model, 1e-14, 3, 1.0, &mut sol),
            StopgameStatus::NoConvergence
        );
        assert_eq!(stopgame_solve(model, 1e-8, 100_000, 1.0, &mut sol), StopgameStatus::Ok);

        let mut short = [0.0; 1];
        assert_eq!(
            stopgame_solution_values(sol, short.as_mut_ptr(), 1),
            StopgameStatus::BufferTooSmall
        );
        assert_eq!(
            stopgame_simulate(sol, 7, 10, 0, &mut 0.0, &mut 0.0),
            StopgameStatus::InvalidInput
        );

        stopgame_solution_free(sol);
        stopgame_model_free(model);
        stopgame_model_free(ptr::null_mut());
        stopgame_solution_free(ptr::null_mut());
        stopgame_string_free(ptr::null_mut());
    }
}

#[test]
fn matrix_game_through_the_abi() {
    let data = [2.0, 0.0, 0.0, 1.0];
    let (mut value, mut mu, mut nu) = (0.0, [0.0; 2], [0.0; 2]);
    let status =
        unsafe { stopgame_matrix_game_solve(data.as_ptr(), 2, 2, &mut value, mu.as_mut_ptr(), nu.as_mut_ptr()) };
    assert_eq!(status, StopgameStatus::Ok);
    assert!((value - 2.0 / 3.0).abs() < 1e-12);
    assert!((mu[0] - 1.0 / 3.0).abs() < 1e-12 && (nu[1] - 2.0 / 3.0).abs() < 1e-12);

    let status =
        unsafe { stopgame_matrix_game_solve(data.as_ptr(), 0, 2, &mut value, mu.as_mut_ptr(), nu.as_mut_ptr()) };
    assert_eq!(status, StopgameStatus::InvalidInput);
}
