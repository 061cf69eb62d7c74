//! C interface to `sesched`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`sesched_solve`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`SeschedStatus`]; on failure [`sesched_last_error`] describes the cause
//! for the calling thread. Arrays are passed as pointer plus length and are
//! laid out row-major (`h[n * M + m]`, 1-based channel indices in actions,
//! 0 for idle).

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use sesched::channel::{ScheduleAction, SysState};
use sesched::env::{generate_random_system, EnvConfig, Environment, System, SystemGenSpec};
use sesched::error::Error;
use sesched::estimation::RewardKind;
use sesched::mdp::{solve, Solution, SolverOptions, TabularPolicy};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeschedStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Convergence = 3,
    Capacity = 4,
    Shape = 5,
    Diverged = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeschedReward {
    SumMse = 0,
    SumAoi = 1,
    ProductMse = 2,
}

impl From<SeschedReward> for RewardKind {
    fn from(r: SeschedReward) -> Self {
        match r {
            SeschedReward::SumMse => RewardKind::SumMse,
            SeschedReward::SumAoi => RewardKind::SumAoi,
            SeschedReward::ProductMse => RewardKind::ProductMse,
        }
    }
}

/// Sensors, processes and channel model.
pub struct SeschedSystem {
    inner: Arc<System>,
}

/// Value-iteration result with its tabular policy.
pub struct SeschedSolution {
    solution: Solution,
    policy: TabularPolicy,
}

/// Simulated environment with its own random stream.
pub struct SeschedEnv {
    inner: Environment,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SeschedStatus {
    match e {
        Error::Validation(_) | Error::Config { .. } => SeschedStatus::Validation,
        Error::Convergence { .. } => SeschedStatus::Convergence,
        Error::Capacity(_) => SeschedStatus::Capacity,
        Error::Shape(_) => SeschedStatus::Shape,
        Error::Diverged(_) => SeschedStatus::Diverged,
        Error::Io { .. } | Error::Csv(_) => SeschedStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SeschedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SeschedStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            SeschedStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SeschedStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn array<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn array_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn expect_len(what: &str, got: usize, want: usize) -> Result<(), Fail> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what} has length {got}, expected {want}")).into())
    }
}

unsafe fn read_state(system: &System, tau: *const u32, tau_len: usize, h: *const u8, h_len: usize) -> Result<SysState, Fail> {
    let (n, m) = (system.sensors(), system.channels());
    expect_len("tau", tau_len, n)?;
    expect_len("h", h_len, n * m)?;
    Ok(SysState::new(array(tau, tau_len, "tau")?.to_vec(), array(h, h_len, "h")?.to_vec()))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sesched_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generates a random system with the default generator settings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sesched_system_generate(
    sensors: usize,
    channels: usize,
    seed: u64,
    out: *mut *mut SeschedSystem,
) -> SeschedStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let sys = generate_random_system(sensors, channels, &SystemGenSpec::default(), seed)?;
        *out = Box::into_raw(Box::new(SeschedSystem { inner: Arc::new(sys) }));
        Ok(())
    })
}

/// # Safety
/// `system` must be NULL or a handle from `sesched_system_generate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sesched_system_free(system: *mut SeschedSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// # Safety
/// `system` must be a live handle and `sensors`, `channels` writable.
#[no_mangle]
pub unsafe extern "C" fn sesched_system_dims(
    system: *const SeschedSystem,
    sensors: *mut usize,
    channels: *mut usize,
) -> SeschedStatus {
    guard(|| {
        let s = &deref(system, "system")?.inner;
        *deref_mut(sensors, "sensors")? = s.sensors();
        *deref_mut(channels, "channels")? = s.channels();
        Ok(())
    })
}

/// Sum of estimation MSEs at the given AoI vector.
///
/// # Safety
/// `tau` must point to `tau_len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sesched_system_sum_mse(
    system: *const SeschedSystem,
    tau: *const u32,
    tau_len: usize,
    out: *mut f64,
) -> SeschedStatus {
    guard(|| {
        let s = &deref(system, "system")?.inner;
        expect_len("tau", tau_len, s.sensors())?;
        *deref_mut(out, "out")? = s.sum_mse(array(tau, tau_len, "tau")?)?;
        Ok(())
    })
}

/// Solves the truncated MDP by value iteration.
///
/// # Safety
/// `system` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sesched_solve(
    system: *const SeschedSystem,
    tau_max: u32,
    reward: SeschedReward,
    gamma: f64,
    tol: f64,
    out: *mut *mut SeschedSolution,
) -> SeschedStatus {
    guard(|| {
        let s = &deref(system, "system")?.inner;
        let out = deref_mut(out, "out")?;
        let opts = SolverOptions {
            gamma,
            tol,
            ..SolverOptions::default()
        };
        let solution = solve(s, tau_max, reward.into(), &opts)?;
        let policy = TabularPolicy::new(solution.space.clone(), solution.actions.clone(), solution.policy.clone())?;
        *out = Box::into_raw(Box::new(SeschedSolution { solution, policy }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be NULL or a handle from `sesched_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sesched_solution_free(solution: *mut SeschedSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sesched_solution_num_states(solution: *const SeschedSolution, out: *mut usize) -> SeschedStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(solution, "solution")?.solution.space.len();
        Ok(())
    })
}

/// Optimal action at a state; AoI beyond `tau_max` is looked up at the cap.
/// `action_out` receives one channel index per sensor.
///
/// # Safety
/// Array pointers must cover their lengths.
#[no_mangle]
pub unsafe extern "C" fn sesched_solution_action(
    solution: *const SeschedSolution,
    tau: *const u32,
    tau_len: usize,
    h: *const u8,
    h_len: usize,
    action_out: *mut u8,
    action_len: usize,
) -> SeschedStatus {
    guard(|| {
        let sol = deref(solution, "solution")?;
        let space = &sol.solution.space;
        let n = space.sensors();
        expect_len("tau", tau_len, n)?;
        expect_len("h", h_len, n * space.channels())?;
        expect_len("action", action_len, n)?;
        let state = SysState::new(array(tau, tau_len, "tau")?.to_vec(), array(h, h_len, "h")?.to_vec());
        let a = sol.policy.action(&state)?;
        array_mut(action_out, action_len, "action_out")?.copy_from_slice(a.as_slice());
        Ok(())
    })
}

/// Optimal value at a state inside the truncated space.
///
/// # Safety
/// Array pointers must cover their lengths and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sesched_solution_value(
    solution: *const SeschedSolution,
    tau: *const u32,
    tau_len: usize,
    h: *const u8,
    h_len: usize,
    out: *mut f64,
) -> SeschedStatus {
    guard(|| {
        let sol = deref(solution, "solution")?;
        let space = &sol.solution.space;
        expect_len("tau", tau_len, space.sensors())?;
        expect_len("h", h_len, space.sensors() * space.channels())?;
        let state = SysState::new(array(tau, tau_len, "tau")?.to_vec(), array(h, h_len, "h")?.to_vec());
        let idx = space.encode(&state)?;
        *deref_mut(out, "out")? = sol.solution.values.values[idx];
        Ok(())
    })
}

/// Creates an environment over `system` with unbounded AoI, starting from
/// all-ones AoI and a random channel matrix.
///
/// # Safety
/// `system` must be a live handle and `out` writable. The environment keeps
/// its own reference; the system handle may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn sesched_env_new(
    system: *const SeschedSystem,
    reward: SeschedReward,
    seed: u64,
    out: *mut *mut SeschedEnv,
) -> SeschedStatus {
    guard(|| {
        let s = deref(system, "system")?.inner.clone();
        let out = deref_mut(out, "out")?;
        let cfg = EnvConfig {
            reward: reward.into(),
            ..EnvConfig::default()
        };
        *out = Box::into_raw(Box::new(SeschedEnv {
            inner: Environment::new(s, cfg, seed)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `env` must be NULL or a handle from `sesched_env_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sesched_env_free(env: *mut SeschedEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Copies the current state into `tau_out` (N entries) and `h_out` (N·M).
///
/// # Safety
/// Array pointers must cover their lengths.
#[no_mangle]
pub unsafe extern "C" fn sesched_env_state(
    env: *const SeschedEnv,
    tau_out: *mut u32,
    tau_len: usize,
    h_out: *mut u8,
    h_len: usize,
) -> SeschedStatus {
    guard(|| {
        let st = deref(env, "env")?.inner.state();
        expect_len("tau", tau_len, st.tau.len())?;
        expect_len("h", h_len, st.h.len())?;
        array_mut(tau_out, tau_len, "tau_out")?.copy_from_slice(&st.tau);
        array_mut(h_out, h_len, "h_out")?.copy_from_slice(&st.h);
        Ok(())
    })
}

/// Applies `action` and writes the reward of the state it was taken in.
///
/// # Safety
/// `action` must point to `action_len` entries and `reward_out` be writable.
#[no_mangle]
pub unsafe extern "C" fn sesched_env_step(
    env: *mut SeschedEnv,
    action: *const u8,
    action_len: usize,
    reward_out: *mut f64,
) -> SeschedStatus {
    guard(|| {
        let env = &mut deref_mut(env, "env")?.inner;
        expect_len("action", action_len, env.system().sensors())?;
        let a = ScheduleAction(array(action, action_len, "action")?.to_vec());
        let out = env.step(&a)?;
        *deref_mut(reward_out, "reward_out")? = out.reward;
        Ok(())
    })
}

/// Checks a state against the system's dimensions and channel levels.
///
/// # Safety
/// Array pointers must cover their lengths.
#[no_mangle]
pub unsafe extern "C" fn sesched_system_check_state(
    system: *const SeschedSystem,
    tau: *const u32,
    tau_len: usize,
    h: *const u8,
    h_len: usize,
) -> SeschedStatus {
    guard(|| {
        let s = &deref(system, "system")?.inner;
        let st = read_state(s, tau, tau_len, h, h_len)?;
        let levels = s.channel.levels() as u8;
        if st.tau.contains(&0) || st.h.iter().any(|&x| x == 0 || x > levels) {
            return Err(Error::Validation(format!("AoI must be >= 1 and levels in 1..={levels}")).into());
        }
        Ok(())
    })
}
