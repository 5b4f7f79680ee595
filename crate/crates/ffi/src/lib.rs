//! C ABI over `kbqa-core`.
//!
//! Every fallible call returns a [`KbqaStatus`]; on failure the message is
//! available from [`kbqa_last_error_message`] on the same thread. Strings
//! handed out by the library are owned by the caller and released with
//! [`kbqa_string_free`]. Handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kbqa_core::eval::{answer_f1_strings, em_classify, js_divergence, Verdict};
use kbqa_core::kb::{execute_in_memory, load_triples, parse_triples, KbError, TripleStore};
use kbqa_core::logical_form::schema::DEFAULT_TYPE_RELATION;
use kbqa_core::logical_form::{
    parse_sparql, Compiler, EntityPattern, LogicalFormError, Schema, SexprParser,
};
use kbqa_core::rerank::parse_rerank_response;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KbqaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed s-expression, SPARQL, JSON or triples.
    Parse = 3,
    /// Well-formed input outside the supported fragment.
    Unsupported = 4,
    Io = 5,
    /// Invalid argument value.
    Invalid = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KbqaVerdict {
    Equivalent = 0,
    NonEquivalent = 1,
    NoDecision = 2,
}

/// An in-memory triple store.
pub struct KbqaStore(TripleStore);

/// A schema: class and relation manifests, or open.
pub struct KbqaSchema(Schema);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KbqaPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(KbqaStatus, String);

type Res<T> = Result<T, Failure>;

impl From<LogicalFormError> for Failure {
    fn from(e: LogicalFormError) -> Self {
        let status = match e {
            LogicalFormError::UnsupportedConstruct(_) | LogicalFormError::Compile(_) => {
                KbqaStatus::Unsupported
            }
            LogicalFormError::Io { .. } => KbqaStatus::Io,
            LogicalFormError::InvalidPattern(_) | LogicalFormError::SchemaOverlap(_) => {
                KbqaStatus::Invalid
            }
            _ => KbqaStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

impl From<KbError> for Failure {
    fn from(e: KbError) -> Self {
        let status = match e {
            KbError::Parse { .. } => KbqaStatus::Parse,
            KbError::Unsupported(_) => KbqaStatus::Unsupported,
            _ => KbqaStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Res<()>) -> KbqaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KbqaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            KbqaStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(Failure(KbqaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(KbqaStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Res<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Res<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(KbqaStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Res<()> {
    if out.is_null() {
        return Err(Failure(KbqaStatus::NullArgument, format!("{what} is null")));
    }
    *out = value;
    Ok(())
}

fn owned(s: String) -> Res<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|e| Failure(KbqaStatus::Invalid, e.to_string()))
}

fn json_strings(s: &str, what: &str) -> Res<Vec<String>> {
    serde_json::from_str(s).map_err(|e| Failure(KbqaStatus::Parse, format!("{what}: {e}")))
}

/// The last error raised on this thread, as a new string, or null.
#[no_mangle]
pub extern "C" fn kbqa_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn kbqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version; static, do not free.
#[no_mangle]
pub extern "C" fn kbqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a triples file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_store_load(
    path: *const c_char,
    out: *mut *mut KbqaStore,
) -> KbqaStatus {
    guard(|| {
        let store = load_triples(Path::new(text(path, "path")?))?;
        put(out, Box::into_raw(Box::new(KbqaStore(store))), "out")
    })
}

/// Parses triples from text, one `subject predicate object .` per line.
///
/// # Safety
/// `triples` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_store_parse(
    triples: *const c_char,
    out: *mut *mut KbqaStore,
) -> KbqaStatus {
    guard(|| {
        let store = parse_triples(text(triples, "triples")?)?;
        put(out, Box::into_raw(Box::new(KbqaStore(store))), "out")
    })
}

/// Number of triples; 0 for a null handle.
///
/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kbqa_store_len(store: *const KbqaStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `store` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn kbqa_store_free(store: *mut KbqaStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

fn pattern(p: Option<&str>) -> Res<EntityPattern> {
    Ok(match p {
        Some(p) => EntityPattern::new(p)?,
        None => EntityPattern::default(),
    })
}

/// An open schema. Null arguments take the defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_schema_open(
    entity_pattern: *const c_char,
    type_relation: *const c_char,
    out: *mut *mut KbqaSchema,
) -> KbqaStatus {
    guard(|| {
        let schema = Schema::open(
            pattern(opt_text(entity_pattern, "entity_pattern")?)?,
            opt_text(type_relation, "type_relation")?.unwrap_or(DEFAULT_TYPE_RELATION),
        );
        put(out, Box::into_raw(Box::new(KbqaSchema(schema))), "out")
    })
}

/// A closed schema from class and relation manifests, one IRI per line.
///
/// # Safety
/// Paths must be NUL-terminated; the other strings null or NUL-terminated;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_schema_load(
    classes_path: *const c_char,
    relations_path: *const c_char,
    entity_pattern: *const c_char,
    type_relation: *const c_char,
    out: *mut *mut KbqaSchema,
) -> KbqaStatus {
    guard(|| {
        let schema = Schema::load(
            Path::new(text(classes_path, "classes_path")?),
            Path::new(text(relations_path, "relations_path")?),
            pattern(opt_text(entity_pattern, "entity_pattern")?)?,
            opt_text(type_relation, "type_relation")?.unwrap_or(DEFAULT_TYPE_RELATION),
        )?;
        put(out, Box::into_raw(Box::new(KbqaSchema(schema))), "out")
    })
}

/// # Safety
/// `schema` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn kbqa_schema_free(schema: *mut KbqaSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// Compiles an s-expression to single-line SPARQL. A null schema uses the
/// default entity pattern and type relation.
///
/// # Safety
/// `sexpr` must be NUL-terminated; `schema` null or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_translate(
    schema: *const KbqaSchema,
    sexpr: *const c_char,
    out: *mut *mut c_char,
) -> KbqaStatus {
    guard(|| {
        let default;
        let schema = match schema.as_ref() {
            Some(s) => &s.0,
            None => {
                default = Schema::default();
                &default
            }
        };
        let e = SexprParser::new(schema.entity_pattern()).parse(text(sexpr, "sexpr")?)?;
        let q = Compiler::new(schema.type_relation()).compile(&e)?;
        put(out, owned(q.serialize())?, "out")
    })
}

/// Runs a SPARQL query on the store; writes a JSON array of answer
/// strings (a one-element array for COUNT).
///
/// # Safety
/// `store` must be live; `sparql` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_execute(
    store: *const KbqaStore,
    sparql: *const c_char,
    out: *mut *mut c_char,
) -> KbqaStatus {
    guard(|| {
        let store = handle(store, "store")?;
        let q = parse_sparql(text(sparql, "sparql")?)?;
        let answers: Vec<String> = execute_in_memory(&q, &store.0)
            .to_strings()
            .into_iter()
            .collect();
        put(
            out,
            owned(serde_json::Value::from(answers).to_string())?,
            "out",
        )
    })
}

/// Three-valued logical-form match of two SPARQL queries given the answer
/// F1 of the prediction. `out_detail` may be null; otherwise it receives
/// the verdict with its reason and element bags as JSON.
///
/// # Safety
/// `schema` must be live; queries NUL-terminated; `out_verdict` writable;
/// `out_detail` null or writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_equiv(
    schema: *const KbqaSchema,
    pred: *const c_char,
    gold: *const c_char,
    f1: f64,
    out_verdict: *mut KbqaVerdict,
    out_detail: *mut *mut c_char,
) -> KbqaStatus {
    guard(|| {
        let schema = handle(schema, "schema")?;
        if !(0.0..=1.0).contains(&f1) {
            return Err(Failure(
                KbqaStatus::Invalid,
                format!("f1 {f1} is outside [0, 1]"),
            ));
        }
        let p = parse_sparql(text(pred, "pred")?)?;
        let g = parse_sparql(text(gold, "gold")?)?;
        let v = em_classify(&p, &g, f1, &schema.0);
        let verdict = match v.verdict {
            Verdict::Equivalent => KbqaVerdict::Equivalent,
            Verdict::NonEquivalent => KbqaVerdict::NonEquivalent,
            Verdict::NoDecision => KbqaVerdict::NoDecision,
        };
        if !out_detail.is_null() {
            let json = serde_json::to_string(&v)
                .map_err(|e| Failure(KbqaStatus::Invalid, e.to_string()))?;
            *out_detail = owned(json)?;
        }
        put(out_verdict, verdict, "out_verdict")
    })
}

/// Set precision, recall and F1 of two JSON string arrays.
///
/// # Safety
/// Both strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_answer_f1(
    pred_json: *const c_char,
    gold_json: *const c_char,
    out: *mut KbqaPrf,
) -> KbqaStatus {
    guard(|| {
        let pred = json_strings(text(pred_json, "pred_json")?, "pred_json")?;
        let gold = json_strings(text(gold_json, "gold_json")?, "gold_json")?;
        let r = answer_f1_strings(&pred.into_iter().collect(), &gold.into_iter().collect());
        put(
            out,
            KbqaPrf {
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
            },
            "out",
        )
    })
}

/// Jensen-Shannon divergence of two distributions over `len` outcomes.
///
/// # Safety
/// `p` and `q` must point to `len` doubles each; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_js_divergence(
    p: *const f64,
    q: *const f64,
    len: usize,
    base: f64,
    out: *mut f64,
) -> KbqaStatus {
    guard(|| {
        if p.is_null() || q.is_null() {
            return Err(Failure(
                KbqaStatus::NullArgument,
                "distribution is null".into(),
            ));
        }
        let (p, q) = (
            std::slice::from_raw_parts(p, len),
            std::slice::from_raw_parts(q, len),
        );
        let d =
            js_divergence(p, q, base).map_err(|e| Failure(KbqaStatus::Invalid, e.to_string()))?;
        put(out, d, "out")
    })
}

/// Parses an `@@`-separated re-rank reply against a JSON array of
/// candidates; writes the selected JSON array.
///
/// # Safety
/// Strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kbqa_rerank_parse(
    response: *const c_char,
    candidates_json: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> KbqaStatus {
    guard(|| {
        let cands = json_strings(text(candidates_json, "candidates_json")?, "candidates_json")?;
        let picked = parse_rerank_response(text(response, "response")?, &cands, k)
            .map_err(|e| Failure(KbqaStatus::Invalid, e.to_string()))?;
        put(
            out,
            owned(serde_json::Value::from(picked).to_string())?,
            "out",
        )
    })
}
