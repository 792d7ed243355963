//! Exercises the C ABI from Rust: handle lifecycle, buffer contracts,
//! error codes with messages, and checkpoint round-trips.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use capsnet_ffi::{
    capsnet_class_name, capsnet_last_error, capsnet_network_class_count,
    capsnet_network_forward, capsnet_network_free, capsnet_network_input_side,
    capsnet_network_load, capsnet_network_new, capsnet_network_parameter_count,
    capsnet_network_predict, capsnet_network_save, CapsnetNetwork, CapsnetStatus,
};

const SMALL: &str = "\
patch_size=16
conv_layers=4x3s2,8x3s2
primary_capsule_dim=4
class_capsule_dim=6
routing_iterations=2
";

fn last_error() -> String {
    unsafe { CStr::from_ptr(capsnet_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn build(config: &str, seed: u64) -> *mut CapsnetNetwork {
    let config = CString::new(config).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { capsnet_network_new(config.as_ptr(), seed, &mut out) };
    assert_eq!(status, CapsnetStatus::Ok, "build failed: {}", last_error());
    assert!(!out.is_null());
    out
}

fn c_path(path: &Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

fn forward_norms(net: *const CapsnetNetwork, pixels: &[f32]) -> Vec<f32> {
    let mut classes = 0usize;
    assert_eq!(
        unsafe { capsnet_network_class_count(net, &mut classes) },
        CapsnetStatus::Ok
    );
    let mut norms = vec![f32::NAN; classes];
    let status = unsafe {
        capsnet_network_forward(net, pixels.as_ptr(), pixels.len(), norms.as_mut_ptr(), classes)
    };
    assert_eq!(status, CapsnetStatus::Ok, "forward failed: {}", last_error());
    norms
}

#[test]
fn round_trip_build_save_load_forward() {
    let dir = tempfile::tempdir().unwrap();
    let net = build(SMALL, 42);

    let mut side = 0usize;
    assert_eq!(
        unsafe { capsnet_network_input_side(net, &mut side) },
        CapsnetStatus::Ok
    );
    assert_eq!(side, 16);

    let mut params = 0u64;
    assert_eq!(
        unsafe { capsnet_network_parameter_count(net, &mut params) },
        CapsnetStatus::Ok
    );
    assert!(params > 0);

    let pixels = vec![0.25f32; 3 * 16 * 16];
    let norms = forward_norms(net, &pixels);
    assert_eq!(norms.len(), 4);
    for &n in &norms {
        assert!(n.is_finite() && n > 0.0 && n < 1.0, "norm {n}");
    }

    let mut class = u32::MAX;
    assert_eq!(
        unsafe { capsnet_network_predict(net, pixels.as_ptr(), pixels.len(), &mut class) },
        CapsnetStatus::Ok
    );
    let argmax = norms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(class as usize, argmax);

    let path = dir.path().join("net.capn");
    assert_eq!(
        unsafe { capsnet_network_save(net, c_path(&path).as_ptr()) },
        CapsnetStatus::Ok
    );

    let mut reloaded = ptr::null_mut();
    assert_eq!(
        unsafe { capsnet_network_load(c_path(&path).as_ptr(), &mut reloaded) },
        CapsnetStatus::Ok,
        "load failed: {}",
        last_error()
    );
    let mut reloaded_params = 0u64;
    assert_eq!(
        unsafe { capsnet_network_parameter_count(reloaded, &mut reloaded_params) },
        CapsnetStatus::Ok
    );
    assert_eq!(reloaded_params, params);
    assert_eq!(forward_norms(reloaded, &pixels), norms, "reload must be bitwise");

    unsafe {
        capsnet_network_free(net);
        capsnet_network_free(reloaded);
    }
}

#[test]
fn full_size_network_matches_published_parameter_count() {
    let net = build("patch_size=512\n", 0);
    let mut params = 0u64;
    assert_eq!(
        unsafe { capsnet_network_parameter_count(net, &mut params) },
        CapsnetStatus::Ok
    );
    assert_eq!(params, 9_850_816);
    unsafe { capsnet_network_free(net) };
}

#[test]
fn null_config_builds_the_default_patch_network() {
    let mut net = ptr::null_mut();
    assert_eq!(
        unsafe { capsnet_network_new(ptr::null(), 0, &mut net) },
        CapsnetStatus::Ok,
        "default build failed: {}",
        last_error()
    );
    let mut side = 0usize;
    assert_eq!(
        unsafe { capsnet_network_input_side(net, &mut side) },
        CapsnetStatus::Ok
    );
    assert_eq!(side, 256);
    unsafe { capsnet_network_free(net) };
}

#[test]
fn same_seed_builds_identical_networks() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.capn"), dir.path().join("b.capn")];
    for path in &paths {
        let net = build(SMALL, 7);
        assert_eq!(
            unsafe { capsnet_network_save(net, c_path(path).as_ptr()) },
            CapsnetStatus::Ok
        );
        unsafe { capsnet_network_free(net) };
    }
    let a = std::fs::read(&paths[0]).unwrap();
    let b = std::fs::read(&paths[1]).unwrap();
    assert_eq!(a, b, "same seed must serialize identically");

    let net = build(SMALL, 8);
    let other = dir.path().join("c.capn");
    assert_eq!(
        unsafe { capsnet_network_save(net, c_path(&other).as_ptr()) },
        CapsnetStatus::Ok
    );
    unsafe { capsnet_network_free(net) };
    assert_ne!(a, std::fs::read(&other).unwrap(), "different seed must differ");
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { capsnet_network_new(ptr::null(), 0, ptr::null_mut()) },
        CapsnetStatus::NullPointer
    );
    assert_eq!(
        unsafe { capsnet_network_load(ptr::null(), &mut out) },
        CapsnetStatus::NullPointer
    );
    let mut params = 0u64;
    assert_eq!(
        unsafe { capsnet_network_parameter_count(ptr::null(), &mut params) },
        CapsnetStatus::NullPointer
    );
    assert!(last_error().contains("null"), "message: {}", last_error());
    // Freeing null is a no-op.
    unsafe { capsnet_network_free(ptr::null_mut()) };
}

#[test]
fn config_errors_set_status_and_message() {
    let mut out = ptr::null_mut();

    let bad_utf8 = CStr::from_bytes_with_nul(&[0xff, 0x00]).unwrap();
    assert_eq!(
        unsafe { capsnet_network_new(bad_utf8.as_ptr(), 0, &mut out) },
        CapsnetStatus::InvalidUtf8
    );

    let unknown = CString::new("learning_rate=0.1\n").unwrap();
    assert_eq!(
        unsafe { capsnet_network_new(unknown.as_ptr(), 0, &mut out) },
        CapsnetStatus::InvalidArgument
    );
    assert!(
        last_error().contains("unknown key"),
        "message: {}",
        last_error()
    );
    assert!(out.is_null(), "out must stay untouched on failure");
}

#[test]
fn buffer_length_contracts_are_enforced() {
    let net = build(SMALL, 1);
    let pixels = vec![0.0f32; 3 * 16 * 16];
    let mut norms = [0.0f32; 4];

    let status = unsafe {
        capsnet_network_forward(net, pixels.as_ptr(), 99, norms.as_mut_ptr(), 4)
    };
    assert_eq!(status, CapsnetStatus::InvalidArgument);
    assert!(
        last_error().contains("768") && last_error().contains("99"),
        "message: {}",
        last_error()
    );

    let status = unsafe {
        capsnet_network_forward(net, pixels.as_ptr(), pixels.len(), norms.as_mut_ptr(), 3)
    };
    assert_eq!(status, CapsnetStatus::InvalidArgument);
    assert!(last_error().contains("need 4"), "message: {}", last_error());

    unsafe { capsnet_network_free(net) };
}

#[test]
fn checkpoint_errors_distinguish_io_from_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let mut out = ptr::null_mut();

    let missing = c_path(&dir.path().join("missing.capn"));
    assert_eq!(
        unsafe { capsnet_network_load(missing.as_ptr(), &mut out) },
        CapsnetStatus::IoError
    );

    let corrupt = dir.path().join("corrupt.capn");
    std::fs::write(&corrupt, b"not a checkpoint").unwrap();
    assert_eq!(
        unsafe { capsnet_network_load(c_path(&corrupt).as_ptr(), &mut out) },
        CapsnetStatus::InvalidArgument
    );
    assert!(
        last_error().contains("magic"),
        "message: {}",
        last_error()
    );
}

#[test]
fn class_names_cover_all_indices() {
    let expected = ["normal", "benign", "insitu", "invasive"];
    for (index, want) in expected.iter().enumerate() {
        let ptr = capsnet_class_name(index as u32);
        assert!(!ptr.is_null());
        let name = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
        assert_eq!(name, *want);
    }
    assert!(capsnet_class_name(4).is_null());
}

#[test]
fn generated_header_declares_the_surface() {
    let header = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("include/capsnet.h"),
    )
    .expect("build script generates include/capsnet.h");
    for needle in [
        "typedef struct CapsnetNetwork CapsnetNetwork;",
        "CAPSNET_STATUS_OK = 0",
        "CAPSNET_STATUS_IO_ERROR = 4",
        "capsnet_network_new",
        "capsnet_network_forward",
        "capsnet_network_free",
        "capsnet_last_error",
    ] {
        assert!(header.contains(needle), "header missing {needle:?}");
    }
}
