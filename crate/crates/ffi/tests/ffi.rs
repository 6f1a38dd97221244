use std::ffi::{CStr, CString};
use std::ptr;

use helmfno::dataset::{build_dataset, fit_norm, BuildSpec};
use helmfno::fdtd::{SourceSpec, TimeGrid};
use helmfno::helmholtz::{ricker_amplitude, solve, HelmholtzBoundary, Stencil};
use helmfno::io::save_checkpoint;
use helmfno::nn::{FnoConfig, InputLayout, ModelConfig, ModelHandle};
use helmfno::velocity::{synthesize, FamilyKind, FamilySpec, Grid, VelocityModel};
use helmfno_ffi::*;

fn last_error() -> String {
    let p = hf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(hf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn synthesized_handle_matches_core() {
    let family = CString::new("fault-A").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hf_velocity_synthesize(family.as_ptr(), 42, &mut h) }, HfStatus::Ok);
    let (mut nz, mut nx) = (0, 0);
    assert_eq!(unsafe { hf_velocity_dims(h, &mut nz, &mut nx) }, HfStatus::Ok);
    assert_eq!((nz, nx), (70, 70));
    let mut vals = vec![0.0; nz * nx];
    assert_eq!(unsafe { hf_velocity_values(h, vals.as_mut_ptr(), vals.len()) }, HfStatus::Ok);
    let want = synthesize(&FamilySpec::new(FamilyKind::FaultA), &Grid::openfwi(), 42).unwrap();
    assert_eq!(vals, want.values);

    let mut short = vec![0.0; 10];
    assert_eq!(unsafe { hf_velocity_values(h, short.as_mut_ptr(), short.len()) }, HfStatus::Shape);
    unsafe { hf_velocity_free(h) };
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hf_velocity_synthesize(ptr::null(), 1, &mut h) }, HfStatus::NullPointer);
    assert!(h.is_null());

    let bad = CString::new("no-such-family").unwrap();
    assert_ne!(unsafe { hf_velocity_synthesize(bad.as_ptr(), 1, &mut h) }, HfStatus::Ok);
    assert!(last_error().contains("no-such-family"));

    let (mut nz, mut nx) = (0, 0);
    assert_eq!(unsafe { hf_velocity_dims(ptr::null(), &mut nz, &mut nx) }, HfStatus::NullPointer);

    let vals = [-1.0; 25];
    assert_eq!(unsafe { hf_velocity_from_values(5, 5, 10.0, 10.0, vals.as_ptr(), &mut h) }, HfStatus::InvalidArgument);

    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hf_model_load(missing.as_ptr(), &mut m) }, HfStatus::Io);

    unsafe {
        hf_velocity_free(ptr::null_mut());
        hf_model_free(ptr::null_mut());
    }
}

#[test]
fn helmholtz_solve_matches_core() {
    let n = 24;
    let vals = vec![2000.0; n * n];
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { hf_velocity_from_values(n, n, 10.0, 10.0, vals.as_ptr(), &mut h) }, HfStatus::Ok);
    let (mut re, mut im) = (vec![0.0; n * n], vec![0.0; n * n]);
    let st = unsafe { hf_helmholtz_solve(h, 10.0, 120.0, 50.0, true, re.as_mut_ptr(), im.as_mut_ptr(), n * n) };
    assert_eq!(st, HfStatus::Ok);

    let g = Grid::new(n, n, 10.0, 10.0).unwrap();
    let v = VelocityModel::constant(g, 2000.0).unwrap();
    let src = SourceSpec::ricker(120.0, 50.0, 15.0);
    let amp = ricker_amplitude(&src, &TimeGrid::standard(), 10.0);
    let want = solve(&v, 10.0, &src, amp, &HelmholtzBoundary::standard(), Stencil::NinePoint).unwrap();
    for (i, u) in want.u.iter().enumerate() {
        assert_eq!((re[i], im[i]), (u.re, u.im));
    }
    unsafe { hf_velocity_free(h) };
}

#[test]
fn model_prediction_matches_core() {
    let spec = BuildSpec::new(FamilyKind::FlatA, 1, 1, vec![10.0], 3);
    let d = build_dataset(&spec).unwrap();
    let norm = fit_norm(&d, InputLayout::Basic);
    let model = ModelHandle::new(ModelConfig::Fno(FnoConfig { modes: 4, ..FnoConfig::new(6, 3) }), norm.clone(), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();

    let s = d.samples(InputLayout::Basic, &norm, None).unwrap();
    let want = model.predict(&s.x, [1, s.channels, s.h, s.w], &s.freqs).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { hf_model_load(cpath.as_ptr(), &mut m) }, HfStatus::Ok);
    let mut ch = 0;
    assert_eq!(unsafe { hf_model_in_channels(m, &mut ch) }, HfStatus::Ok);
    assert_eq!(ch, 3);

    let g = spec.grid;
    let vals: Vec<f64> = d.velocity_model(0).iter().map(|&x| x as f64).collect();
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { hf_velocity_from_values(g.nz, g.nx, g.dz, g.dx, vals.as_ptr(), &mut v) }, HfStatus::Ok);
    let src = spec.sources().unwrap()[0];
    let n = g.len();
    let (mut re, mut im) = (vec![0.0f32; n], vec![0.0f32; n]);
    let st = unsafe { hf_model_predict(m, v, src.x, src.z, 10.0, re.as_mut_ptr(), im.as_mut_ptr(), n) };
    assert_eq!(st, HfStatus::Ok, "{}", last_error());
    assert_eq!(re, want[..n]);
    assert_eq!(im, want[n..2 * n]);
    unsafe {
        hf_velocity_free(v);
        hf_model_free(m);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/helmfno.h")).unwrap();
    for name in ["hf_velocity_synthesize", "hf_helmholtz_solve", "hf_model_predict", "HF_STATUS_OK", "HfVelocity"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
