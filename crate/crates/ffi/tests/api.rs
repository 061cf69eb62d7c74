use std::ffi::CStr;
use std::ptr;

use sesched_ffi::*;

fn last_error() -> String {
    let p = sesched_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn system(n: usize, m: usize, seed: u64) -> *mut SeschedSystem {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { sesched_system_generate(n, m, seed, &mut sys) }, SeschedStatus::Ok);
    assert!(!sys.is_null());
    sys
}

#[test]
fn solve_and_simulate() {
    let sys = system(2, 1, 3);
    let (mut n, mut m) = (0usize, 0usize);
    assert_eq!(unsafe { sesched_system_dims(sys, &mut n, &mut m) }, SeschedStatus::Ok);
    assert_eq!((n, m), (2, 1));

    let mut sol = ptr::null_mut();
    let st = unsafe { sesched_solve(sys, 6, SeschedReward::SumMse, 0.95, 1e-8, &mut sol) };
    assert_eq!(st, SeschedStatus::Ok);
    let mut states = 0usize;
    assert_eq!(unsafe { sesched_solution_num_states(sol, &mut states) }, SeschedStatus::Ok);
    // AoI 1..=6 per sensor, five channel levels per link
    assert_eq!(states, 36 * 25);

    let mut env = ptr::null_mut();
    assert_eq!(unsafe { sesched_env_new(sys, SeschedReward::SumMse, 9, &mut env) }, SeschedStatus::Ok);
    // the environment keeps its own reference
    unsafe { sesched_system_free(sys) };
    let (mut tau, mut h, mut a) = ([0u32; 2], [0u8; 2], [0u8; 2]);
    let mut total = 0.0;
    for _ in 0..200 {
        assert_eq!(unsafe { sesched_env_state(env, tau.as_mut_ptr(), 2, h.as_mut_ptr(), 2) }, SeschedStatus::Ok);
        let st = unsafe { sesched_solution_action(sol, tau.as_ptr(), 2, h.as_ptr(), 2, a.as_mut_ptr(), 2) };
        assert_eq!(st, SeschedStatus::Ok);
        assert_eq!(a.iter().filter(|&&c| c == 1).count(), 1);
        let mut r = 0.0;
        assert_eq!(unsafe { sesched_env_step(env, a.as_ptr(), 2, &mut r) }, SeschedStatus::Ok);
        assert!(r < 0.0);
        total += r;
    }
    assert!(total.is_finite());
    let mut v = 0.0;
    let st = unsafe { sesched_solution_value(sol, [1u32, 1].as_ptr(), 2, [1u8, 1].as_ptr(), 2, &mut v) };
    assert_eq!(st, SeschedStatus::Ok);
    assert!(v < 0.0);
    unsafe {
        sesched_env_free(env);
        sesched_solution_free(sol);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { sesched_system_generate(1, 2, 0, &mut sys) }, SeschedStatus::Validation);
    assert!(sys.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { sesched_system_generate(2, 1, 0, ptr::null_mut()) }, SeschedStatus::NullPointer);
    assert!(last_error().contains("out"));

    let sys = system(2, 1, 0);
    let mut mse = 0.0;
    let st = unsafe { sesched_system_sum_mse(sys, [1u32, 2, 3].as_ptr(), 3, &mut mse) };
    assert_eq!(st, SeschedStatus::Shape);
    assert_eq!(unsafe { sesched_system_sum_mse(sys, [1u32, 2].as_ptr(), 2, &mut mse) }, SeschedStatus::Ok);
    assert!(mse > 0.0);
    assert!(sesched_last_error().is_null());

    let st = unsafe { sesched_system_check_state(sys, [0u32, 2].as_ptr(), 2, [1u8, 1].as_ptr(), 2) };
    assert_eq!(st, SeschedStatus::Validation);
    let st = unsafe { sesched_system_check_state(sys, [1u32, 2].as_ptr(), 2, [1u8, 2].as_ptr(), 2) };
    assert_eq!(st, SeschedStatus::Ok);

    let mut env = ptr::null_mut();
    assert_eq!(unsafe { sesched_env_new(sys, SeschedReward::SumAoi, 1, &mut env) }, SeschedStatus::Ok);
    let mut r = 0.0;
    // both sensors on the single channel
    assert_eq!(unsafe { sesched_env_step(env, [1u8, 1].as_ptr(), 2, &mut r) }, SeschedStatus::Validation);
    assert_eq!(unsafe { sesched_env_step(ptr::null_mut(), [1u8, 0].as_ptr(), 2, &mut r) }, SeschedStatus::NullPointer);

    let mut sol = ptr::null_mut();
    let st = unsafe { sesched_solve(sys, 4, SeschedReward::SumMse, 1.5, 1e-8, &mut sol) };
    assert_eq!(st, SeschedStatus::Validation);
    unsafe {
        sesched_env_free(env);
        sesched_system_free(sys);
        sesched_system_free(ptr::null_mut());
        sesched_solution_free(ptr::null_mut());
        sesched_env_free(ptr::null_mut());
    }
}
