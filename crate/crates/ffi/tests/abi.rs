use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use sdemath_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { sde_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn cstrings(items: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = items.iter().map(|s| CString::new(*s).unwrap()).collect();
    let ptrs = owned.iter().map(|s| s.as_ptr()).collect();
    (owned, ptrs)
}

#[test]
fn scalar_model_round_trip() {
    let (_d, drift) = cstrings(&["-x1"]);
    let (_b, diffusion) = cstrings(&["0"]);
    let x0 = [2.0];
    let mut model = ptr::null_mut();
    let mut store = ptr::null_mut();
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(
            sde_model_new(1, 1, drift.as_ptr(), diffusion.as_ptr(), x0.as_ptr(), &mut model),
            SdeStatus::Ok
        );
        assert_eq!(sde_store_open(ptr::null(), &mut store), SdeStatus::Ok);
        assert_eq!(
            sde_simulator_new(model, store, 1, SdeCalculus::Ito, 0.1, 1.0, 1.0, 7, &mut sim),
            SdeStatus::Ok
        );
        let steps = sde_simulator_steps(sim);
        assert_eq!(steps, 10);
        let mut states = vec![0.0; steps + 1];
        assert_eq!(sde_simulator_path(sim, 0, states.as_mut_ptr(), states.len()), SdeStatus::Ok);
        assert!((states[10] - 2.0 * 0.9f64.powi(10)).abs() < 1e-14);
        assert_eq!(
            sde_simulator_path(sim, 0, states.as_mut_ptr(), 3),
            SdeStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 11"));
        let (mut mean, mut var) = (vec![0.0; 11], vec![0.0; 11]);
        let mut diverged = 99;
        assert_eq!(
            sde_simulator_ensemble(sim, 5, mean.as_mut_ptr(), var.as_mut_ptr(), 11, &mut diverged),
            SdeStatus::Ok
        );
        assert_eq!(diverged, 0);
        assert_eq!(mean[10], states[10]);
        assert_eq!(var[10], 0.0);
        sde_simulator_free(sim);
        sde_store_free(store);
        sde_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    let (_d, drift) = cstrings(&["-y"]);
    let (_b, diffusion) = cstrings(&["1"]);
    let mut model = ptr::null_mut();
    unsafe {
        let status = sde_model_new(1, 1, drift.as_ptr(), diffusion.as_ptr(), [0.0].as_ptr(), &mut model);
        assert_eq!(status, SdeStatus::Parse);
        assert!(model.is_null());
        assert!(last_error().contains('y'));
        assert_eq!(sde_store_flush(ptr::null()), SdeStatus::NullPointer);
        let mut store = ptr::null_mut();
        sde_store_open(ptr::null(), &mut store);
        let mut v = 0.0;
        let w = [0u8, 0, 0];
        let j = [0u16, 0, 0];
        assert_eq!(sde_coefficient(store, w.as_ptr(), j.as_ptr(), 3, &mut v), SdeStatus::Ok);
        assert_eq!(v, 4.0 / 3.0);
        let bad = [9u8];
        assert_eq!(
            sde_coefficient(store, bad.as_ptr(), j.as_ptr(), 1, &mut v),
            SdeStatus::InvalidArgument
        );
        sde_store_free(store);
    }
}

#[test]
fn linear_entry_points() {
    let a = [0.0, 1.0, -0.3205, -0.14];
    let f = [0.0, 5.08];
    let mut out = [0.0; 4];
    unsafe {
        assert_eq!(sde_mat_exp(2, [0.0; 4].as_ptr(), 1.0, out.as_mut_ptr()), SdeStatus::Ok);
        assert_eq!(out, [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(sde_step_covariance(2, 1, a.as_ptr(), f.as_ptr(), 0.1, out.as_mut_ptr()), SdeStatus::Ok);
        assert_eq!(out[1], out[2]);
        assert!(out[3] > 0.0);
        let (_u, u) = cstrings(&[]);
        let mut model = ptr::null_mut();
        let x0 = [7.0, -0.25];
        assert_eq!(
            sde_linear_new(2, 1, 0, 0, a.as_ptr(), ptr::null(), f.as_ptr(), ptr::null(), u.as_ptr(), x0.as_ptr(), &mut model),
            SdeStatus::Ok
        );
        let (mut mean, mut var) = (vec![0.0; 22], vec![0.0; 22]);
        assert_eq!(
            sde_linear_simulate(model, 0.1, 1.0, 50, 3, mean.as_mut_ptr(), var.as_mut_ptr(), 22),
            SdeStatus::Ok
        );
        assert_eq!(&mean[..2], &x0);
        assert!(var[21] > 0.0);
        sde_linear_free(model);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sdemath.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["sde_model_new", "sde_simulator_ensemble", "sde_linear_simulate", "sde_last_error", "SDE_STATUS_PANIC"] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler; skipping the syntax check");
        return;
    };
    assert!(status.success());
}
