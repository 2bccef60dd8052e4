//! C ABI over `beda-core`.
//!
//! Every fallible function returns a [`BedaStatus`]; on failure the message
//! is available from [`beda_last_error`] on the same thread. Strings handed
//! out by the library are freed with [`beda_string_free`]; handles with
//! their own `_free` function.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use beda_core::belief::{belief_gap, pairwise_order_agreement, BeliefVector, Perspective};
use beda_core::epistemic::{ActKind, StateEvent, TwoAgentModel};
use beda_core::games::casino::casino_reward;
use beda_core::games::Preference;
use beda_core::generation::{parse_action, ActionGrammar, Deal};
use beda_core::harness::{ExperimentConfig, Runner};
use beda_core::selection::{feasible_set, ActConstraint};
use beda_core::Error;
use serde::Deserialize;

pub const BEDA_ACT_ADVERSARIAL: u32 = 0;
pub const BEDA_ACT_ALIGNMENT: u32 = 1;

/// Largest state space a model handle accepts.
pub const BEDA_MAX_STATES: usize = 64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BedaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Backend = 5,
    Data = 6,
    Io = 7,
    /// Every episode was excluded from the metrics.
    Empty = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

impl From<&Error> for BedaStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) | Error::Capacity(_) | Error::MissingSlot(_) => {
                BedaStatus::InvalidArgument
            }
            Error::Config(_) | Error::Parse { .. } => BedaStatus::Config,
            Error::Transport { .. } | Error::Protocol(_) => BedaStatus::Backend,
            Error::Format(_) | Error::Data(_) | Error::Json(_) => BedaStatus::Data,
            Error::Io(_) => BedaStatus::Io,
        }
    }
}

/// Opaque two-agent partition model.
pub struct BedaModel {
    inner: TwoAgentModel,
}

/// Opaque experiment runner.
pub struct BedaRunner {
    inner: Runner,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

struct Failure(BedaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(BedaStatus::from(&e), e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn guard(body: impl FnOnce() -> Outcome) -> BedaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BedaStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside beda");
            BedaStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(BedaStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(BedaStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Outcome {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> Outcome {
    let s = CString::new(value).map_err(|e| Failure(BedaStatus::Data, e.to_string()))?;
    write_out(out, s.into_raw(), "out")
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(BedaStatus::InvalidArgument, message.into())
}

fn act_kind(act: u32) -> Outcome<ActKind> {
    match act {
        BEDA_ACT_ADVERSARIAL => Ok(ActKind::Adversarial),
        BEDA_ACT_ALIGNMENT => Ok(ActKind::Alignment),
        other => Err(invalid(format!("unknown act {other}"))),
    }
}

fn json_arg<T: for<'de> Deserialize<'de>>(raw: &str, name: &str) -> Outcome<T> {
    serde_json::from_str(raw).map_err(|e| invalid(format!("`{name}`: {e}")))
}

unsafe fn model_ref<'a>(model: *const BedaModel) -> Outcome<&'a TwoAgentModel> {
    model
        .as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| null("model"))
}

fn event_of(model: &TwoAgentModel, mask: u64) -> Outcome<StateEvent> {
    let n = model.states().len();
    if n < 64 && mask >> n != 0 {
        return Err(invalid(format!(
            "mask {mask:#x} names states beyond the {n} in the model"
        )));
    }
    Ok(StateEvent::from_mask(n, mask))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn beda_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn beda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn beda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[derive(Deserialize)]
struct ModelDoc {
    states: Vec<String>,
    cells_a: Vec<Vec<String>>,
    cells_b: Vec<Vec<String>>,
    #[serde(default)]
    prior_a: Option<Vec<f64>>,
}

/// Builds a model from `{"states": [..], "cells_a": [[..]], "cells_b": [[..]], "prior_a": [..]}`.
/// A missing prior is uniform.
///
/// # Safety
/// `model_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_model_new(
    model_json: *const c_char,
    out: *mut *mut BedaModel,
) -> BedaStatus {
    guard(|| {
        let doc: ModelDoc = json_arg(read_str(model_json, "model_json")?, "model_json")?;
        if doc.states.len() > BEDA_MAX_STATES {
            return Err(invalid(format!("at most {BEDA_MAX_STATES} states")));
        }
        let n = doc.states.len();
        let prior = doc
            .prior_a
            .unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n]);
        let inner = TwoAgentModel::new(&doc.states, &doc.cells_a, &doc.cells_b, prior)?;
        write_out(out, Box::into_raw(Box::new(BedaModel { inner })), "out")
    })
}

/// # Safety
/// `model` must come from [`beda_model_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn beda_model_free(model: *mut BedaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_model_num_states(
    model: *const BedaModel,
    out: *mut usize,
) -> BedaStatus {
    guard(|| write_out(out, model_ref(model)?.states().len(), "out"))
}

/// Whether the event with bit mask `event` is an ε-act of kind `act`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_model_act_feasible(
    model: *const BedaModel,
    event: u64,
    act: u32,
    epsilon: f64,
    out: *mut bool,
) -> BedaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let feasible = m.act_feasible(&event_of(m, event)?, act_kind(act)?, epsilon)?;
        write_out(out, feasible, "out")
    })
}

/// The second agent's knowledge of an event, as a bit mask.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_model_knowledge_b(
    model: *const BedaModel,
    event: u64,
    out: *mut u64,
) -> BedaStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_out(out, m.knowledge_b(&event_of(m, event)?).mask(), "out")
    })
}

/// Every feasible event as a bit mask, ascending. Writes the count to
/// `out_len`; returns `BufferTooSmall` when it exceeds `capacity`.
///
/// # Safety
/// `model` must be a live handle; `out_masks` must hold `capacity` values
/// (it may be null when `capacity` is 0); `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_model_feasible_events(
    model: *const BedaModel,
    act: u32,
    epsilon: f64,
    out_masks: *mut u64,
    capacity: usize,
    out_len: *mut usize,
) -> BedaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let events = m.feasible_events_bruteforce(act_kind(act)?, epsilon)?;
        let masks: Vec<u64> = events.iter().map(StateEvent::mask).collect();
        fill(&masks, out_masks, capacity, out_len)
    })
}

unsafe fn fill<T: Copy>(
    values: &[T],
    out: *mut T,
    capacity: usize,
    out_len: *mut usize,
) -> Outcome {
    write_out(out_len, values.len(), "out_len")?;
    if values.len() > capacity {
        return Err(Failure(
            BedaStatus::BufferTooSmall,
            format!("{} values do not fit in {capacity}", values.len()),
        ));
    }
    if !values.is_empty() {
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    }
    Ok(())
}

unsafe fn read_vector(
    p: *const f64,
    len: usize,
    perspective: Perspective,
    name: &str,
) -> Outcome<BeliefVector> {
    if p.is_null() && len > 0 {
        return Err(null(name));
    }
    let values = if len == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(p, len).to_vec()
    };
    Ok(BeliefVector::new(perspective, values)?)
}

/// Indices whose beliefs satisfy the act constraint, ascending.
///
/// # Safety
/// `self_truth` and `opp_knows` must each hold `len` values; `out_indices`
/// must hold `capacity` values; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_feasible_set(
    self_truth: *const f64,
    opp_knows: *const f64,
    len: usize,
    act: u32,
    epsilon: f64,
    out_indices: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> BedaStatus {
    guard(|| {
        let a = read_vector(self_truth, len, Perspective::SelfTruth, "self_truth")?;
        let b = read_vector(opp_knows, len, Perspective::OpponentKnows, "opp_knows")?;
        let set = feasible_set(&a, &b, ActConstraint::new(act_kind(act)?, epsilon)?)?;
        let indices: Vec<usize> = set.into_iter().collect();
        fill(&indices, out_indices, capacity, out_len)
    })
}

/// Symmetric difference between the events predicted known (value ≥ 0.5)
/// and the `truth_len` ground-truth indices.
///
/// # Safety
/// `predicted` must hold `len` values and `truth` `truth_len` indices;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_belief_gap(
    predicted: *const f64,
    len: usize,
    truth: *const usize,
    truth_len: usize,
    out: *mut usize,
) -> BedaStatus {
    guard(|| {
        let v = read_vector(predicted, len, Perspective::OpponentKnows, "predicted")?;
        if truth.is_null() && truth_len > 0 {
            return Err(null("truth"));
        }
        let truth: BTreeSet<usize> = if truth_len == 0 {
            BTreeSet::new()
        } else {
            std::slice::from_raw_parts(truth, truth_len)
                .iter()
                .copied()
                .collect()
        };
        write_out(out, belief_gap(&v, &truth), "out")
    })
}

/// Points earned by the preference with index `preference` (0..6, in the
/// canonical permutation order) from keeping the given packages.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_casino_reward(
    preference: u32,
    food: u32,
    water: u32,
    firewood: u32,
    out: *mut u32,
) -> BedaStatus {
    guard(|| {
        let pref = Preference::ALL
            .get(preference as usize)
            .ok_or_else(|| invalid(format!("preference index {preference} outside 0..6")))?;
        write_out(
            out,
            casino_reward(pref, &Deal::new(food, water, firewood))?,
            "out",
        )
    })
}

/// Fraction of item pairs ordered alike by two comma-separated rankings.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_pairwise_agreement(
    predicted: *const c_char,
    truth: *const c_char,
    out: *mut f64,
) -> BedaStatus {
    guard(|| {
        let split = |s: &str| {
            s.split(',')
                .map(str::trim)
                .map(str::to_owned)
                .collect::<Vec<_>>()
        };
        let p = split(read_str(predicted, "predicted")?);
        let t = split(read_str(truth, "truth")?);
        let p: Vec<&str> = p.iter().map(String::as_str).collect();
        let t: Vec<&str> = t.iter().map(String::as_str).collect();
        write_out(out, pairwise_order_agreement(&p, &t), "out")
    })
}

/// Parses an utterance under a grammar document such as
/// `{"ckbg": {"containers": [..]}}`, `{"mf": {"friends": [[..]]}}` or
/// `"casino"`. Writes the parsed action as JSON.
///
/// # Safety
/// Both strings must be NUL-terminated; `out_json` must be writable. The
/// result is freed with [`beda_string_free`].
#[no_mangle]
pub unsafe extern "C" fn beda_parse_action(
    grammar_json: *const c_char,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> BedaStatus {
    guard(|| {
        let grammar: ActionGrammar =
            json_arg(read_str(grammar_json, "grammar_json")?, "grammar_json")?;
        let action = parse_action(&grammar, read_str(text, "text")?);
        write_string(
            out_json,
            serde_json::to_string(&action).map_err(Error::from)?,
        )
    })
}

/// Validates an experiment config document (JSON) and prepares its
/// scenarios.
///
/// # Safety
/// `config_json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn beda_runner_new(
    config_json: *const c_char,
    out: *mut *mut BedaRunner,
) -> BedaStatus {
    guard(|| {
        let raw = read_str(config_json, "config_json")?;
        let config: ExperimentConfig =
            serde_json::from_str(raw).map_err(|e| Failure(BedaStatus::Config, e.to_string()))?;
        let inner = Runner::new(config)?;
        write_out(out, Box::into_raw(Box::new(BedaRunner { inner })), "out")
    })
}

/// # Safety
/// `runner` must come from [`beda_runner_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn beda_runner_free(runner: *mut BedaRunner) {
    if !runner.is_null() {
        drop(Box::from_raw(runner));
    }
}

/// Runs every episode, writing records to the configured output, and
/// writes the metrics report as JSON. When no episode survived exclusion
/// the report is still written and the status is `Backend` if every
/// episode hit an infrastructure failure, `Empty` otherwise.
///
/// # Safety
/// `runner` must be a live handle; `out_report_json` must be writable. The
/// report is freed with [`beda_string_free`].
#[no_mangle]
pub unsafe extern "C" fn beda_runner_run(
    runner: *const BedaRunner,
    out_report_json: *mut *mut c_char,
) -> BedaStatus {
    guard(|| {
        let runner = runner.as_ref().ok_or_else(|| null("runner"))?;
        let out = runner.inner.run()?;
        write_string(
            out_report_json,
            serde_json::to_string(&out.report).map_err(Error::from)?,
        )?;
        let counts = &out.report.counts;
        if out.report.is_empty()
            && counts.episodes > 0
            && counts.infrastructure_failures == counts.episodes
        {
            return Err(Failure(
                BedaStatus::Backend,
                "every episode failed on a backend".into(),
            ));
        }
        if out.report.is_empty() {
            return Err(Failure(
                BedaStatus::Empty,
                "no episode survived exclusion".into(),
            ));
        }
        Ok(())
    })
}
