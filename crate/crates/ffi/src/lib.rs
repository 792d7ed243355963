//! C ABI for the capsule network engine: opaque handles, status codes, and
//! a thread-local last-error message.
//!
//! Every fallible entry point returns [`CapsnetStatus`]; results travel
//! through out pointers, which are written only on `Ok`. A non-`Ok` status
//! leaves a description readable via [`capsnet_last_error`] on the calling
//! thread. Handles returned through `out` parameters are owned by the
//! caller and must be released with [`capsnet_network_free`].
//!
//! The generated header lands in `include/capsnet.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use capsnet_core::cli::RunConfig;
use capsnet_core::network::{
    load_checkpoint, save_checkpoint, InitScheme, Network, NetworkError,
};
use capsnet_core::tensor::{SeedRng, Tensor};

/// Outcome of a call. Anything other than `Ok` sets the thread-local
/// error message.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapsnetStatus {
    /// The call succeeded and all out parameters are valid.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was structurally valid but semantically wrong
    /// (bad configuration text, wrong buffer length, corrupt checkpoint).
    InvalidArgument = 3,
    /// The operating system reported an I/O failure.
    IoError = 4,
    /// An unexpected internal failure; report these as bugs.
    InternalError = 5,
}

/// Opaque handle to a network instance.
pub struct CapsnetNetwork {
    inner: Network<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: CapsnetStatus, message: impl Display) -> CapsnetStatus {
    // Interior NULs cannot come from our error types, but never panic here.
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NUL bytes stripped above");
    });
    status
}

fn network_status(err: &NetworkError) -> CapsnetStatus {
    match err {
        NetworkError::Io(_) => CapsnetStatus::IoError,
        _ => CapsnetStatus::InvalidArgument,
    }
}

/// Run `body`, converting any panic into `InternalError` instead of
/// unwinding across the C boundary.
fn guarded(body: impl FnOnce() -> CapsnetStatus) -> CapsnetStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(CapsnetStatus::InternalError, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be null or point to a NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, CapsnetStatus> {
    if ptr.is_null() {
        return Err(fail(
            CapsnetStatus::NullPointer,
            format!("{name} pointer is null"),
        ));
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|err| {
        fail(
            CapsnetStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8: {err}"),
        )
    })
}

/// # Safety
/// `handle` must be null or a pointer obtained from this library.
unsafe fn network_arg<'a>(
    handle: *const CapsnetNetwork,
) -> Result<&'a Network<f32>, CapsnetStatus> {
    match unsafe { handle.as_ref() } {
        Some(wrapper) => Ok(&wrapper.inner),
        None => Err(fail(
            CapsnetStatus::NullPointer,
            "network handle is null",
        )),
    }
}

fn input_tensor(
    network: &Network<f32>,
    pixels: *const f32,
    pixel_count: usize,
) -> Result<Tensor<f32>, CapsnetStatus> {
    if pixels.is_null() {
        return Err(fail(CapsnetStatus::NullPointer, "pixels pointer is null"));
    }
    let side = network.config().input_side;
    let channels = network.config().input_channels;
    let want = channels * side * side;
    if pixel_count != want {
        return Err(fail(
            CapsnetStatus::InvalidArgument,
            format!(
                "expected {want} pixel values ({channels}x{side}x{side}, \
                 channel-major), got {pixel_count}"
            ),
        ));
    }
    let data = unsafe { std::slice::from_raw_parts(pixels, pixel_count) }.to_vec();
    Tensor::new(vec![channels, side, side], data)
        .map_err(|err| fail(CapsnetStatus::InternalError, err))
}

fn class_norms(
    network: &Network<f32>,
    pixels: *const f32,
    pixel_count: usize,
) -> Result<Vec<f32>, CapsnetStatus> {
    let input = input_tensor(network, pixels, pixel_count)?;
    let pass = network
        .forward(&input)
        .map_err(|err| fail(network_status(&err), err))?;
    Ok(pass.class_norms())
}

/// Description of the most recent failure on the calling thread.
///
/// Never null; the empty string before any failure. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn capsnet_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// NUL-terminated name of a class index, or null if out of range.
///
/// The returned pointer is static and must not be freed.
#[no_mangle]
pub extern "C" fn capsnet_class_name(class: u32) -> *const c_char {
    let name: &[u8] = match class {
        0 => b"normal\0",
        1 => b"benign\0",
        2 => b"insitu\0",
        3 => b"invasive\0",
        _ => return std::ptr::null(),
    };
    name.as_ptr().cast()
}

/// Build a freshly initialized network.
///
/// `config` is UTF-8 `key=value` text in the run-configuration format
/// (unknown keys are rejected); pass null or an empty string for the
/// default architecture. `seed` drives parameter initialization: equal
/// seeds and configurations produce bitwise-identical networks.
///
/// # Safety
/// `config` must be null or NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_new(
    config: *const c_char,
    seed: u64,
    out: *mut *mut CapsnetNetwork,
) -> CapsnetStatus {
    guarded(|| {
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(CapsnetStatus::NullPointer, "out pointer is null");
        };
        let text = if config.is_null() {
            ""
        } else {
            match unsafe { utf8_arg(config, "config") } {
                Ok(text) => text,
                Err(status) => return status,
            }
        };
        let run = match RunConfig::parse(text) {
            Ok(run) => run,
            Err(err) => return fail(CapsnetStatus::InvalidArgument, err),
        };
        if let Err(err) = run.validate() {
            return fail(CapsnetStatus::InvalidArgument, err);
        }
        let rng = SeedRng::new(seed).derive("ffi/init");
        match Network::build(run.network_config(), &rng, InitScheme::default()) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CapsnetNetwork { inner }));
                CapsnetStatus::Ok
            }
            Err(err) => fail(CapsnetStatus::InvalidArgument, err),
        }
    })
}

/// Load a network from a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_load(
    path: *const c_char,
    out: *mut *mut CapsnetNetwork,
) -> CapsnetStatus {
    guarded(|| {
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(CapsnetStatus::NullPointer, "out pointer is null");
        };
        let path = match unsafe { utf8_arg(path, "path") } {
            Ok(path) => path,
            Err(status) => return status,
        };
        match load_checkpoint(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CapsnetNetwork { inner }));
                CapsnetStatus::Ok
            }
            Err(err) => fail(network_status(&err), err),
        }
    })
}

/// Write a network to a checkpoint file.
///
/// # Safety
/// `network` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_save(
    network: *const CapsnetNetwork,
    path: *const c_char,
) -> CapsnetStatus {
    guarded(|| {
        let network = match unsafe { network_arg(network) } {
            Ok(network) => network,
            Err(status) => return status,
        };
        let path = match unsafe { utf8_arg(path, "path") } {
            Ok(path) => path,
            Err(status) => return status,
        };
        match save_checkpoint(network, Path::new(path)) {
            Ok(()) => CapsnetStatus::Ok,
            Err(err) => fail(network_status(&err), err),
        }
    })
}

/// Total number of trainable parameters.
///
/// # Safety
/// `network` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_parameter_count(
    network: *const CapsnetNetwork,
    out: *mut u64,
) -> CapsnetStatus {
    guarded(|| {
        let network = match unsafe { network_arg(network) } {
            Ok(network) => network,
            Err(status) => return status,
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(CapsnetStatus::NullPointer, "out pointer is null");
        };
        *out = network.parameter_count() as u64;
        CapsnetStatus::Ok
    })
}

/// Side length of the square input the network expects.
///
/// # Safety
/// `network` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_input_side(
    network: *const CapsnetNetwork,
    out: *mut usize,
) -> CapsnetStatus {
    guarded(|| {
        let network = match unsafe { network_arg(network) } {
            Ok(network) => network,
            Err(status) => return status,
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(CapsnetStatus::NullPointer, "out pointer is null");
        };
        *out = network.config().input_side;
        CapsnetStatus::Ok
    })
}

/// Number of output classes (the length `capsnet_network_forward` writes).
///
/// # Safety
/// `network` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_class_count(
    network: *const CapsnetNetwork,
    out: *mut usize,
) -> CapsnetStatus {
    guarded(|| {
        let network = match unsafe { network_arg(network) } {
            Ok(network) => network,
            Err(status) => return status,
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(CapsnetStatus::NullPointer, "out pointer is null");
        };
        *out = network.config().class_capsules;
        CapsnetStatus::Ok
    })
}

/// Run inference and write one capsule norm per class into `norms`.
///
/// `pixels` holds `channels * side * side` values in channel-major order,
/// scaled to `[0, 1]`; `pixel_count` and `norm_count` must match the
/// network (`norm_count` equals the class count). Norms lie in `(0, 1)`
/// and the predicted class is the argmax.
///
/// # Safety
/// `network` must be a live handle; `pixels` must hold `pixel_count`
/// readable values; `norms` must hold `norm_count` writable values.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_forward(
    network: *const CapsnetNetwork,
    pixels: *const f32,
    pixel_count: usize,
    norms: *mut f32,
    norm_count: usize,
) -> CapsnetStatus {
    guarded(|| {
        let network = match unsafe { network_arg(network) } {
            Ok(network) => network,
            Err(status) => return status,
        };
        if norms.is_null() {
            return fail(CapsnetStatus::NullPointer, "norms pointer is null");
        }
        let classes = network.config().class_capsules;
        if norm_count != classes {
            return fail(
                CapsnetStatus::InvalidArgument,
                format!("norms buffer holds {norm_count} values, need {classes}"),
            );
        }
        let values = match class_norms(network, pixels, pixel_count) {
            Ok(values) => values,
            Err(status) => return status,
        };
        let out = unsafe { std::slice::from_raw_parts_mut(norms, norm_count) };
        out.copy_from_slice(&values);
        CapsnetStatus::Ok
    })
}

/// Run inference and write the predicted class index (argmax of the
/// per-class capsule norms; ties resolve to the lowest index).
///
/// # Safety
/// `network` must be a live handle; `pixels` must hold `pixel_count`
/// readable values; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_predict(
    network: *const CapsnetNetwork,
    pixels: *const f32,
    pixel_count: usize,
    out: *mut u32,
) -> CapsnetStatus {
    guarded(|| {
        let network = match unsafe { network_arg(network) } {
            Ok(network) => network,
            Err(status) => return status,
        };
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(CapsnetStatus::NullPointer, "out pointer is null");
        };
        let values = match class_norms(network, pixels, pixel_count) {
            Ok(values) => values,
            Err(status) => return status,
        };
        *out = capsnet_core::network::argmax(&values) as u32;
        CapsnetStatus::Ok
    })
}

/// Release a handle. Null is a no-op; a handle must not be used after.
///
/// # Safety
/// `network` must be null or a pointer obtained from this library that has
/// not been freed before.
#[no_mangle]
pub unsafe extern "C" fn capsnet_network_free(network: *mut CapsnetNetwork) {
    if !network.is_null() {
        drop(unsafe { Box::from_raw(network) });
    }
}
