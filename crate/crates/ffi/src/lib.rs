//! C interface to the reasoning engine.
//!
//! Every fallible function returns an [`ArStatus`]. On failure a message is
//! kept per thread and can be read with [`ar_last_error`]. Strings handed
//! out by this library must be released with [`ar_string_free`]; trees with
//! [`ar_tree_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use atomic_reasoner::backend::{Script, ScriptedBackend};
use atomic_reasoner::bench::task::parse_task_line;
use atomic_reasoner::bench::{extract_mcq, gen_puzzle, score, Task};
use atomic_reasoner::metrics::{
    deserialize_trace, entropy_of, serialize_trace, trace_stats, weighted_step_entropy, TraceDoc, TraceEvaluation,
};
use atomic_reasoner::model::render_tree;
use atomic_reasoner::prompts::PromptCatalog;
use atomic_reasoner::session::{run_session, SessionConfig};
use atomic_reasoner::sop::SopRegistry;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Backend = 5,
    Panic = 6,
}

/// A reasoning tree owned by the caller.
pub struct ArTree {
    doc: TraceDoc,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ArStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: ArStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> ArStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            ArStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(ArStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(ArStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> FfiResult<()> {
    if p.is_null() {
        return fail(ArStatus::NullArgument, format!("{what} is null"));
    }
    Ok(())
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

unsafe fn write_string(out: *mut *mut c_char, s: String) {
    *out = to_c(s);
}

unsafe fn tree_ref<'a>(t: *const ArTree) -> FfiResult<&'a ArTree> {
    t.as_ref().map_or_else(|| fail(ArStatus::NullArgument, "tree is null"), Ok)
}

unsafe fn f64_slice<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(ArStatus::NullArgument, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn parse_task(json: &str) -> FfiResult<Task> {
    parse_task_line(json, None, "ffi").or_else(|(reason, msg)| fail(ArStatus::Parse, format!("task {reason:?}: {msg}")))
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a trace document (JSON) into a tree handle.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_from_json(json: *const c_char, out: *mut *mut ArTree) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let text = read_str(json, "json")?;
        let doc = deserialize_trace(text).or_else(|e| fail(ArStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(ArTree { doc }));
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_free(tree: *mut ArTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Serializes the tree as a trace document.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_to_json(tree: *const ArTree, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let t = tree_ref(tree)?;
        write_string(out, serialize_trace(&t.doc));
        Ok(())
    })
}

/// Per-trace statistics as a JSON object.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_stats_json(tree: *const ArTree, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let t = tree_ref(tree)?;
        let json = serde_json::to_string(&trace_stats(&t.doc.tree)).or_else(|e| fail(ArStatus::Panic, e.to_string()))?;
        write_string(out, json);
        Ok(())
    })
}

/// Text rendering of the tree, truncated to roughly `budget` characters.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_render(tree: *const ArTree, budget: usize, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let t = tree_ref(tree)?;
        write_string(out, render_tree(&t.doc.tree, budget));
        Ok(())
    })
}

/// Number of nodes in the tree; 0 for a null handle.
///
/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_round_count(tree: *const ArTree) -> usize {
    tree.as_ref().map_or(0, |t| t.doc.tree.round_count())
}

/// Number of chains in the tree; 0 for a null handle.
///
/// # Safety
/// `tree` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_tree_chain_count(tree: *const ArTree) -> usize {
    tree.as_ref().map_or(0, |t| t.doc.tree.chains().len())
}

/// Runs one session on a task record with a response script (both JSON).
/// Writes the resulting tree to `out_tree` and, when `out_answer` is not
/// null, the final answer text. A `max_rounds` of 0 keeps the default limit.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_tree` must be writable and
/// `out_answer` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ar_solve_scripted(
    task_json: *const c_char,
    script_json: *const c_char,
    max_rounds: usize,
    out_tree: *mut *mut ArTree,
    out_answer: *mut *mut c_char,
) -> ArStatus {
    guard(|| {
        out_ptr(out_tree, "out_tree")?;
        let task = parse_task(read_str(task_json, "task_json")?)?;
        let script: Script = serde_json::from_str(read_str(script_json, "script_json")?)
            .or_else(|e| fail(ArStatus::Parse, format!("script: {e}")))?;
        let mut config = SessionConfig::default();
        if max_rounds > 0 {
            config.router.max_rounds = max_rounds;
        }
        let backend = ScriptedBackend::from_script(script);
        let out = run_session(
            task.problem(),
            &config,
            &backend,
            &PromptCatalog::builtin(),
            &SopRegistry::builtin(),
            &mut [],
        )
        .or_else(|f| {
            let status = if f.is_backend() { ArStatus::Backend } else { ArStatus::InvalidArgument };
            fail(status, f.to_string())
        })?;
        let verdict = score(&task, &out.answer.text);
        let evaluation = TraceEvaluation { suite: task.suite.clone(), correct: verdict.correct, partial: verdict.partial };
        if !out_answer.is_null() {
            write_string(out_answer, out.answer.text);
        }
        *out_tree = Box::into_raw(Box::new(ArTree { doc: TraceDoc::new(out.tree, Some(evaluation)) }));
        Ok(())
    })
}

/// Generates a unique-solution logic-grid puzzle as a task record (JSON).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_gen_puzzle(seed: u64, houses: usize, attributes: usize, out: *mut *mut c_char) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let p = gen_puzzle(seed, houses, attributes).or_else(|e| fail(ArStatus::InvalidArgument, e.to_string()))?;
        let json = serde_json::to_string(&p.task.to_record()).or_else(|e| fail(ArStatus::Panic, e.to_string()))?;
        write_string(out, json);
        Ok(())
    })
}

/// Scores an answer text against a task record.
///
/// # Safety
/// Strings must be NUL-terminated; `correct` and `partial` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_score(
    task_json: *const c_char,
    answer: *const c_char,
    correct: *mut bool,
    partial: *mut f64,
) -> ArStatus {
    guard(|| {
        out_ptr(correct, "correct")?;
        out_ptr(partial, "partial")?;
        let task = parse_task(read_str(task_json, "task_json")?)?;
        let v = score(&task, read_str(answer, "answer")?);
        *correct = v.correct;
        *partial = v.partial;
        Ok(())
    })
}

/// Extracts a multiple-choice letter from free text. `options` holds
/// `n_options` option strings.
///
/// # Safety
/// `text` and every option must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_extract_mcq(
    text: *const c_char,
    options: *const *const c_char,
    n_options: usize,
    out: *mut c_char,
) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let text = read_str(text, "text")?;
        if n_options > 0 && options.is_null() {
            return fail(ArStatus::NullArgument, "options is null");
        }
        let opts = (0..n_options)
            .map(|i| read_str(*options.add(i), "option").map(str::to_string))
            .collect::<FfiResult<Vec<_>>>()?;
        let letter = extract_mcq(text, &opts).or_else(|e| fail(ArStatus::Parse, e.to_string()))?;
        *out = letter as u8 as c_char;
        Ok(())
    })
}

/// Shannon entropy in bits of a probability vector.
///
/// # Safety
/// `ps` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_entropy(ps: *const f64, n: usize, out: *mut f64) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ps = f64_slice(ps, n, "ps")?;
        *out = entropy_of(ps).or_else(|e| fail(ArStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Dot product of an action-selection row with per-action entropies.
///
/// # Safety
/// `row` and `entropies` must each point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_weighted_step_entropy(
    row: *const f64,
    entropies: *const f64,
    n: usize,
    out: *mut f64,
) -> ArStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let row = f64_slice(row, n, "row")?;
        let ent = f64_slice(entropies, n, "entropies")?;
        *out = weighted_step_entropy(row, ent).or_else(|e| fail(ArStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}
