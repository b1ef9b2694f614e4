//! C ABI over `ggsp-core`.
//!
//! Every entry point returns a [`GgspStatus`]. On failure the message is kept
//! per thread and can be fetched with [`ggsp_last_error`]. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nalgebra::DMatrix;

use ggsp::baselines;
use ggsp::kernels::gtrss_prior_correlation;
use ggsp::variance::{var_bound, BoundParams};
use ggsp::{fit_krr, Error, ErrorKind, Graph, Gso, KernelSpec, KrrModel, ProductKernel};
use ggsp::{RffFeatureMap, RffPredictor, Sample, SampleSet};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgspStatus {
    Ok = 0,
    /// Invalid parameter or unsupported operation.
    Usage = 1,
    /// Input data violates a structural precondition.
    Data = 2,
    /// A factorization or solve failed.
    Numerical = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// Graph shift operator selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgspGso {
    Combinatorial = 0,
    Normalized = 1,
}

/// Parameters of the asymptotic variance bound.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GgspBoundParams {
    pub kt: f64,
    pub l: f64,
    pub m0: f64,
    pub c0: f64,
    pub dim: u32,
    pub c_d: f64,
    pub n_d: u32,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Opaque weighted undirected graph.
pub struct GgspGraph {
    inner: Arc<Graph>,
}

/// Opaque fitted kernel ridge regression model.
pub struct GgspKrr {
    inner: KrrModel,
}

/// Opaque online random-feature predictor.
pub struct GgspRff {
    inner: RffPredictor,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GgspStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GgspStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Usage => GgspStatus::Usage,
                ErrorKind::Data => GgspStatus::Data,
                ErrorKind::Numerical => GgspStatus::Numerical,
            }
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            GgspStatus::NullPointer
        }
        Ok(Err(Failure::Utf8)) => {
            set_error("string argument is not valid UTF-8".into());
            GgspStatus::InvalidUtf8
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GgspStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

unsafe fn write<T>(out: *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn samples(
    vertices: *const usize,
    times: *const f64,
    values: *const f64,
    len: usize,
) -> Result<SampleSet, Failure> {
    let v = slice(vertices, len, "vertices")?;
    let t = slice(times, len, "times")?;
    let y = slice(values, len, "values")?;
    Ok((0..len).map(|i| Sample::new(v[i], t[i], y[i])).collect())
}

fn kernel(graph: &GgspGraph, spec_json: &str) -> Result<ProductKernel, Failure> {
    Ok(KernelSpec::from_json(spec_json)?.build(graph.inner.clone())?)
}

/// Copy of the last error message on this thread, or NULL if the last call
/// succeeded. Release with [`ggsp_string_free`].
#[no_mangle]
pub extern "C" fn ggsp_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ggsp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a graph from `n_edges` weighted edges given as parallel arrays.
///
/// # Safety
/// Each array must hold `n_edges` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_graph_new(
    n_vertices: usize,
    us: *const usize,
    vs: *const usize,
    ws: *const f64,
    n_edges: usize,
    gso: GgspGso,
    out: *mut *mut GgspGraph,
) -> GgspStatus {
    guard(|| {
        let (u, v, w) = (slice(us, n_edges, "us")?, slice(vs, n_edges, "vs")?, slice(ws, n_edges, "ws")?);
        let edges: Vec<_> = (0..n_edges).map(|i| (u[i], v[i], w[i])).collect();
        let gso = match gso {
            GgspGso::Combinatorial => Gso::Combinatorial,
            GgspGso::Normalized => Gso::Normalized,
        };
        let graph = Graph::with_gso(n_vertices, &edges, gso)?;
        write(out, Box::into_raw(Box::new(GgspGraph { inner: Arc::new(graph) })), "out")
    })
}

/// Parse a whitespace-separated `u v w` edge list.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_graph_parse(text: *const c_char, gso: GgspGso, out: *mut *mut GgspGraph) -> GgspStatus {
    guard(|| {
        let gso = match gso {
            GgspGso::Combinatorial => Gso::Combinatorial,
            GgspGso::Normalized => Gso::Normalized,
        };
        let graph = Graph::parse_edge_list(string(text, "text")?, gso)?;
        write(out, Box::into_raw(Box::new(GgspGraph { inner: Arc::new(graph) })), "out")
    })
}

/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_graph_n_vertices(graph: *const GgspGraph, out: *mut usize) -> GgspStatus {
    guard(|| write(out, deref(graph, "graph")?.inner.n_vertices(), "out"))
}

/// # Safety
/// `graph` must come from this library or be NULL, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ggsp_graph_free(graph: *mut GgspGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Fit kernel ridge regression. `kernel_json` is a kernel spec document
/// such as `{"graph":{"type":"quadratic","b":0.5},"time":{"type":"gaussian","gamma":0.1}}`.
///
/// # Safety
/// Sample arrays must hold `n_samples` elements; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ggsp_krr_fit(
    graph: *const GgspGraph,
    kernel_json: *const c_char,
    vertices: *const usize,
    times: *const f64,
    values: *const f64,
    n_samples: usize,
    mu: f64,
    out: *mut *mut GgspKrr,
) -> GgspStatus {
    guard(|| {
        let k = kernel(deref(graph, "graph")?, string(kernel_json, "kernel_json")?)?;
        let model = fit_krr(&k, &samples(vertices, times, values, n_samples)?, mu)?;
        write(out, Box::into_raw(Box::new(GgspKrr { inner: model })), "out")
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_krr_predict(model: *const GgspKrr, vertex: usize, time: f64, out: *mut f64) -> GgspStatus {
    guard(|| write(out, deref(model, "model")?.inner.predict(vertex, time)?, "out"))
}

/// Serialize the model as bit-exact JSON. Release with [`ggsp_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_krr_to_json(model: *const GgspKrr, out: *mut *mut c_char) -> GgspStatus {
    guard(|| {
        let json = deref(model, "model")?.inner.to_json()?;
        write(out, CString::new(json).unwrap_or_default().into_raw(), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_krr_from_json(json: *const c_char, out: *mut *mut GgspKrr) -> GgspStatus {
    guard(|| {
        let model = KrrModel::from_json(string(json, "json")?)?;
        write(out, Box::into_raw(Box::new(GgspKrr { inner: model })), "out")
    })
}

/// # Safety
/// `model` must come from this library or be NULL, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ggsp_krr_free(model: *mut GgspKrr) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Posterior variance of the Gaussian process with the given kernel at
/// `(vertex, time)` after observing the samples with noise variance `noise`.
///
/// # Safety
/// Sample arrays must hold `n_samples` elements; pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ggsp_posterior_variance(
    graph: *const GgspGraph,
    kernel_json: *const c_char,
    vertices: *const usize,
    times: *const f64,
    n_samples: usize,
    noise: f64,
    vertex: usize,
    time: f64,
    out: *mut f64,
) -> GgspStatus {
    guard(|| {
        let k = kernel(deref(graph, "graph")?, string(kernel_json, "kernel_json")?)?;
        let v = slice(vertices, n_samples, "vertices")?;
        let t = slice(times, n_samples, "times")?;
        let set: SampleSet = (0..n_samples).map(|i| Sample::new(v[i], t[i], 0.0)).collect();
        let q = ggsp::PosteriorQuery::new(noise)?;
        write(out, ggsp::reconstruct::posterior_variance(&k, &set, q, vertex, time)?, "out")
    })
}

/// Create an online predictor with `features` random features per vertex.
/// A non-positive `step` selects `0.05 / max ||eta||^2` over the features of
/// `(vertex, 0)` and `(vertex, 1)` for every vertex.
///
/// # Safety
/// Pointers must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_rff_new(
    graph: *const GgspGraph,
    kernel_json: *const c_char,
    features: usize,
    seed: u64,
    ridge: f64,
    horizon: usize,
    step: f64,
    out: *mut *mut GgspRff,
) -> GgspStatus {
    guard(|| {
        let k = kernel(deref(graph, "graph")?, string(kernel_json, "kernel_json")?)?;
        let map = RffFeatureMap::new(&k, features, seed)?;
        let step = if step > 0.0 {
            step
        } else {
            let d = k.domain();
            let probe: SampleSet = (0..k.n_vertices())
                .flat_map(|v| [Sample::new(v, d.lo, 0.0), Sample::new(v, d.hi, 0.0)])
                .collect();
            RffPredictor::default_step(&map, &probe)?
        };
        let predictor = RffPredictor::new(map, ridge, horizon, step)?;
        write(out, Box::into_raw(Box::new(GgspRff { inner: predictor })), "out")
    })
}

/// One stochastic gradient update on `(vertex, time, value)`. The prediction
/// made before the update is written to `prediction` when it is not NULL.
///
/// # Safety
/// `rff` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ggsp_rff_step(
    rff: *mut GgspRff,
    vertex: usize,
    time: f64,
    value: f64,
    prediction: *mut f64,
) -> GgspStatus {
    guard(|| {
        let (pred, _) = deref_mut(rff, "rff")?.inner.sgd_step(vertex, time, value)?;
        if !prediction.is_null() {
            prediction.write(pred);
        }
        Ok(())
    })
}

/// # Safety
/// `rff` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_rff_predict(rff: *const GgspRff, vertex: usize, time: f64, out: *mut f64) -> GgspStatus {
    guard(|| write(out, deref(rff, "rff")?.inner.predict(vertex, time)?, "out"))
}

/// # Safety
/// `rff` must come from this library or be NULL, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ggsp_rff_free(rff: *mut GgspRff) {
    if !rff.is_null() {
        drop(Box::from_raw(rff));
    }
}

/// # Safety
/// `params` must be readable; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_var_bound(
    params: *const GgspBoundParams,
    bound: *mut f64,
    probability: *mut f64,
) -> GgspStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let r = var_bound(&BoundParams {
            kt: p.kt,
            l: p.l,
            m0: p.m0,
            c0: p.c0,
            dim: p.dim,
            c_d: p.c_d,
            n_d: p.n_d,
            c1: p.c1,
            c2: p.c2,
            c3: p.c3,
        })?;
        write(bound, r.bound, "bound")?;
        write(probability, r.probability, "probability")
    })
}

/// Correlation between the first two time steps under the first-difference
/// prior with `steps` samples and boundary precision `delta0`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggsp_gtrss_prior_correlation(steps: usize, delta0: f64, out: *mut f64) -> GgspStatus {
    guard(|| write(out, gtrss_prior_correlation(steps, delta0)?, "out"))
}

/// Solve the joint first-difference reconstruction on a `steps`-column grid.
/// `mask` and `observations` are `n_vertices * steps` column-major arrays
/// (index `t * n_vertices + v`); `out` receives the estimate in the same layout.
///
/// # Safety
/// Arrays must hold `n_vertices * steps` elements.
#[no_mangle]
pub unsafe extern "C" fn ggsp_gtrss_solve(
    graph: *const GgspGraph,
    mask: *const u8,
    observations: *const f64,
    steps: usize,
    mu_tv: f64,
    alpha: f64,
    beta: f64,
    delta0: f64,
    out: *mut f64,
) -> GgspStatus {
    guard(|| {
        let g = deref(graph, "graph")?;
        let len = g.inner.n_vertices() * steps;
        let m = slice(mask, len, "mask")?;
        let y = slice(observations, len, "observations")?;
        let n = g.inner.n_vertices();
        let mask = DMatrix::from_iterator(n, steps, m.iter().map(|&b| if b != 0 { 1.0 } else { 0.0 }));
        let obs = DMatrix::from_iterator(n, steps, y.iter().zip(m).map(|(&x, &b)| if b != 0 { x } else { 0.0 }));
        let problem = baselines::GtrssProblem::new(g.inner.clone(), mask, obs, mu_tv, alpha, beta, delta0)?;
        let x = baselines::solve_gtrss(&problem)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(x.as_slice());
        Ok(())
    })
}
