//! C ABI over the `lottery` crate.
//!
//! A network is an opaque [`LtNetwork`] handle holding its architecture,
//! its initial and current parameters (in `f64`) and its pruning mask. Every
//! fallible call returns an [`LtStatus`]; on failure the message is kept in a
//! thread-local buffer readable through [`lt_last_error`]. Panics never cross
//! the boundary: they are caught and reported as `LT_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lottery::data::{split, synthetic_blobs, DataSplits};
use lottery::experiment::{early_stop, train_once, TrainConfig, TrainSeeds};
use lottery::nn::{build_network, forward, glorot_std, InitSpec, Mode, NetworkSpec, ParamSet};
use lottery::pruning::{prune, sparsity, Mask, PruneConfig};
use lottery::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LtStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Shape = 3,
    Diverged = 4,
    Io = 5,
    Format = 6,
    Internal = 7,
}

/// A network, its initialization snapshot and its mask.
pub struct LtNetwork {
    spec: NetworkSpec,
    params: ParamSet<f64>,
    mask: Mask,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

fn status_of(e: &Error) -> LtStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config { .. } | Error::Incomplete(_) => LtStatus::InvalidArgument,
        Error::Shape(_) => LtStatus::Shape,
        Error::Diverged { .. } | Error::NonFinite(_) => LtStatus::Diverged,
        Error::Io(_) => LtStatus::Io,
        Error::Format { .. } => LtStatus::Format,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LtStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            LtStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            LtStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed(spec: NetworkSpec, seed: u64) -> Result<*mut LtNetwork, Fail> {
    let params = build_network(&spec, InitSpec::GaussianGlorot, seed)?;
    let mask = Mask::full(&spec);
    Ok(Box::into_raw(Box::new(LtNetwork { spec, params, mask })))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Standard deviation of the Glorot Gaussian for a layer.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn lt_glorot_std(fan_in: usize, fan_out: usize, out: *mut f64) -> LtStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = glorot_std(fan_in, fan_out)?;
        Ok(())
    })
}

/// Creates a preset network ("lenet", "conv-2", "conv-4", "conv-6") with a
/// Glorot Gaussian initialization drawn from `seed` and a full mask.
///
/// # Safety
/// `name` must be null or a NUL-terminated string; `out` must be null or
/// writable. The handle written to `out` must be released with
/// [`lt_network_free`].
#[no_mangle]
pub unsafe extern "C" fn lt_network_preset(name: *const c_char, seed: u64, out: *mut *mut LtNetwork) -> LtStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let out = deref_mut(out, "out")?;
        *out = boxed(NetworkSpec::preset(name)?, seed)?;
        Ok(())
    })
}

/// Creates a fully-connected ReLU network `input → hidden… → classes`.
///
/// # Safety
/// `hidden` must point to `hidden_len` values (or be null when it is 0);
/// `out` as for [`lt_network_preset`].
#[no_mangle]
pub unsafe extern "C" fn lt_network_mlp(
    input: usize,
    hidden: *const usize,
    hidden_len: usize,
    classes: usize,
    seed: u64,
    out: *mut *mut LtNetwork,
) -> LtStatus {
    guard(|| {
        let hidden = slice_arg(hidden, hidden_len, "hidden")?;
        let out = deref_mut(out, "out")?;
        if input == 0 || classes == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()).into());
        }
        *out = boxed(NetworkSpec::mlp(input, hidden, classes), seed)?;
        Ok(())
    })
}

/// Releases a network. Null is ignored.
///
/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lt_network_free(net: *mut LtNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Input length per example and number of classes.
///
/// # Safety
/// `net` must be a live handle; the out pointers null or writable.
#[no_mangle]
pub unsafe extern "C" fn lt_network_dims(net: *const LtNetwork, input_len: *mut usize, classes: *mut usize) -> LtStatus {
    guard(|| {
        let net = deref(net, "net")?;
        *deref_mut(input_len, "input_len")? = net.spec.input_len();
        *deref_mut(classes, "classes")? = net.spec.classes();
        Ok(())
    })
}

/// Total prunable weights and how many the mask keeps.
///
/// # Safety
/// As for [`lt_network_dims`].
#[no_mangle]
pub unsafe extern "C" fn lt_network_sparsity(net: *const LtNetwork, total: *mut usize, remaining: *mut usize) -> LtStatus {
    guard(|| {
        let net = deref(net, "net")?;
        let report = sparsity(&net.mask);
        *deref_mut(total, "total")? = report.layers.iter().map(|l| l.total).sum();
        *deref_mut(remaining, "remaining")? = report.layers.iter().map(|l| l.remaining).sum();
        Ok(())
    })
}

/// One round of layer-wise magnitude pruning on the current weights: each
/// layer loses `fc_rate` (dense), `conv_rate` (convolutional) or
/// `fc_rate / 2` (output) of its surviving weights. Pruned weights are zeroed.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lt_network_prune(net: *mut LtNetwork, fc_rate: f64, conv_rate: f64) -> LtStatus {
    guard(|| {
        let net = deref_mut(net, "net")?;
        let cfg = PruneConfig::layerwise(fc_rate, conv_rate, 1);
        cfg.validate()?;
        let pruned = prune(&net.spec, &net.params, &net.mask, &cfg)?;
        net.params.apply_mask(&pruned.mask)?;
        net.mask = pruned.mask;
        Ok(())
    })
}

/// Resets surviving weights and all biases to their initial values.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lt_network_rewind(net: *mut LtNetwork) -> LtStatus {
    guard(|| {
        let net = deref_mut(net, "net")?;
        net.params = net.params.rewound(&net.mask)?;
        Ok(())
    })
}

/// Logits for `batch` examples laid out row-major in `input`
/// (`batch * input_len` values). Writes `batch * classes` values.
///
/// # Safety
/// `input` must hold `input_len` values and `logits` room for `logits_len`.
#[no_mangle]
pub unsafe extern "C" fn lt_network_forward(
    net: *const LtNetwork,
    input: *const f64,
    input_len: usize,
    batch: usize,
    logits: *mut f64,
    logits_len: usize,
) -> LtStatus {
    guard(|| {
        let net = deref(net, "net")?;
        let input = slice_arg(input, input_len, "input")?;
        if batch == 0 || input_len != batch * net.spec.input_len() {
            return Err(Error::Shape(format!(
                "{input_len} inputs for batch {batch} of {} values each",
                net.spec.input_len()
            ))
            .into());
        }
        let classes = net.spec.classes();
        if logits_len != batch * classes {
            return Err(Error::Shape(format!("logits buffer holds {logits_len}, need {}", batch * classes)).into());
        }
        if logits.is_null() {
            return Err(Fail::Null("logits"));
        }
        let mut shape = vec![batch];
        shape.extend(&net.spec.input_shape);
        let x = Tensor::new(shape, input.to_vec())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&net.spec, &net.params, &net.mask, &x, Mode::Eval, &mut rng)?;
        std::slice::from_raw_parts_mut(logits, logits_len).copy_from_slice(out.logits.data());
        Ok(())
    })
}

/// Trains the current weights under the mask with Adam on synthetic
/// Gaussian blobs sized to the network (`per_class` examples per class, a
/// fifth held out for validation and as many again for test). Writes the
/// early-stopping iteration and the test accuracy there; the network keeps
/// the weights from the end of training.
///
/// # Safety
/// `net` must be a live handle; the out pointers null or writable.
#[no_mangle]
pub unsafe extern "C" fn lt_network_train_blobs(
    net: *mut LtNetwork,
    per_class: usize,
    separation: f64,
    learning_rate: f64,
    iterations: u64,
    seed: u64,
    early_iteration: *mut u64,
    test_accuracy: *mut f64,
) -> LtStatus {
    guard(|| {
        let net = deref_mut(net, "net")?;
        let early_iteration = deref_mut(early_iteration, "early_iteration")?;
        let test_accuracy = deref_mut(test_accuracy, "test_accuracy")?;
        let classes = net.spec.classes();
        if per_class < 5 {
            return Err(Error::InvalidArgument("need at least 5 examples per class".into()).into());
        }
        let test_per_class = per_class / 5;
        let all = synthetic_blobs(classes, per_class + test_per_class, net.spec.input_len(), separation, seed)?;
        let n_train = classes * per_class;
        let train_all = all.subset(&(0..n_train).collect::<Vec<_>>())?;
        let test = all.subset(&(n_train..all.len()).collect::<Vec<_>>())?;
        let (train, validation) = split(&train_all, n_train / 5, seed)?;
        let shape = net.spec.input_shape.clone();
        let data = DataSplits {
            train: train.reshape(shape.clone())?,
            validation: validation.reshape(shape.clone())?,
            test: test.reshape(shape)?,
        };
        let cfg = TrainConfig {
            batch_size: 60.min(data.train.len()),
            eval_interval: (iterations / 10).max(1),
            ..TrainConfig::adam(learning_rate, iterations)
        };
        let seeds = TrainSeeds {
            order: seed,
            dropout: seed ^ 1,
        };
        let (trace, trained) = train_once(&net.spec, &net.params, &net.mask, &cfg, &data, seeds)?;
        let stop = early_stop(&trace)?;
        net.params = trained;
        *early_iteration = stop.iteration;
        *test_accuracy = stop.test_acc;
        Ok(())
    })
}

/// Writes the mask in the library's binary mask format.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lt_mask_save(net: *const LtNetwork, path: *const c_char) -> LtStatus {
    guard(|| {
        let net = deref(net, "net")?;
        let path = str_arg(path, "path")?;
        net.mask.save(Path::new(path))?;
        Ok(())
    })
}

/// Replaces the mask with one read from `path` and zeroes the weights it
/// removes. The mask must match the network's layers.
///
/// # Safety
/// As for [`lt_mask_save`].
#[no_mangle]
pub unsafe extern "C" fn lt_mask_load(net: *mut LtNetwork, path: *const c_char) -> LtStatus {
    guard(|| {
        let net = deref_mut(net, "net")?;
        let path = str_arg(path, "path")?;
        let mask = Mask::load(Path::new(path))?;
        mask.check_params(&net.params)?;
        net.params.apply_mask(&mask)?;
        net.mask = mask;
        Ok(())
    })
}
