use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use pptp_core::cp::failure_risk_vector;
use pptp_core::model::{ModelConfig, ModelInput, PptpModel as CoreModel, SignalMask};
use pptp_core::session::{frame_stream, load_session, WindowingConfig};
use pptp_core::synth::{generate_cohort, SynthConfig};
use pptp_ffi::*;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pptp_last_error()) }.to_str().unwrap().to_string()
}

fn cohort(dir: &Path) -> std::path::PathBuf {
    let cfg = SynthConfig {
        post_task_ms: 2000,
        ..Default::default()
    };
    generate_cohort(1, 1, 3, &cfg, dir).unwrap().remove(0)
}

#[test]
fn session_round_trip_matches_core() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = cohort(tmp.path());
    let core = load_session(&dir).unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(pptp_session_load(cstr(&dir).as_ptr(), &mut s), PptpStatus::Ok);
        assert!(!s.is_null());
        assert_eq!(last_error(), "");

        let mut n = 0usize;
        assert_eq!(pptp_session_frame_count(s, &mut n), PptpStatus::Ok);
        assert_eq!(n, frame_stream(&core, &WindowingConfig::default()).unwrap().len());

        let at = core.placements[3].timestamp_ms;
        let mut f = [0.0; PPTP_CP_LEN];
        assert_eq!(pptp_session_failure_risk(s, at, 0.0, f.as_mut_ptr()), PptpStatus::Ok);
        assert_eq!(f, failure_risk_vector(&core.placements, at, 0.8).unwrap().f);
        assert_eq!(pptp_session_failure_risk(s, at, 1.5, f.as_mut_ptr()), PptpStatus::Validation);
        assert!(!last_error().is_empty());
        pptp_session_free(s);
    }
}

#[test]
fn model_prediction_matches_core() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = cohort(tmp.path());
    let cfg = ModelConfig {
        d_model: 8,
        n_heads: 2,
        ffn_mult: 2,
        patch_len: 75,
        plain_per_group: 1,
        groups: 1,
        ..Default::default()
    };
    let model = CoreModel::new(cfg, 5).unwrap();
    let ckpt = tmp.path().join("m.ckpt");
    model.save(&ckpt).unwrap();
    let reloaded = CoreModel::load(&ckpt).unwrap();

    let core = load_session(&dir).unwrap();
    let frames = frame_stream(&core, &WindowingConfig::default()).unwrap();
    let idx = frames.len() / 2;
    let expected = reloaded.logits(&ModelInput::from_frame(&frames[idx], SignalMask::ALL).unwrap()).unwrap();

    let (mut s, mut m) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(pptp_session_load(cstr(&dir).as_ptr(), &mut s), PptpStatus::Ok);
        assert_eq!(pptp_model_load(cstr(&ckpt).as_ptr(), &mut m), PptpStatus::Ok);
        let mut k = 0usize;
        assert_eq!(pptp_model_class_count(m, &mut k), PptpStatus::Ok);
        assert_eq!(k, 3);

        let mut class = usize::MAX;
        let mut logits = [0.0; 3];
        assert_eq!(pptp_model_predict_frame(m, s, idx, &mut class, logits.as_mut_ptr(), 3), PptpStatus::Ok);
        assert_eq!(logits.to_vec(), expected);
        assert_eq!(class, pptp_core::model::predict(&expected));
        assert_eq!(pptp_model_predict_frame(m, s, idx, &mut class, ptr::null_mut(), 0), PptpStatus::Ok);

        assert_eq!(
            pptp_model_predict_frame(m, s, frames.len(), &mut class, ptr::null_mut(), 0),
            PptpStatus::OutOfRange
        );
        assert_eq!(
            pptp_model_predict_frame(m, s, 0, &mut class, logits.as_mut_ptr(), 2),
            PptpStatus::InvalidArgument
        );
        pptp_model_free(m);
        pptp_session_free(s);
    }
}

#[test]
fn errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = ptr::null_mut();
    let mut m = ptr::null_mut();
    let mut n = 0usize;
    unsafe {
        assert_eq!(pptp_session_load(ptr::null(), &mut s), PptpStatus::NullPointer);
        assert_eq!(last_error(), "path is null");
        assert_eq!(pptp_session_load(cstr(tmp.path()).as_ptr(), ptr::null_mut()), PptpStatus::NullPointer);
        assert_eq!(pptp_session_load(cstr(&tmp.path().join("absent")).as_ptr(), &mut s), PptpStatus::Format);
        assert!(last_error().contains("meta.json"), "{}", last_error());
        assert!(s.is_null());
        assert_eq!(pptp_session_frame_count(ptr::null(), &mut n), PptpStatus::NullPointer);

        let bad = tmp.path().join("bad.ckpt");
        std::fs::write(&bad, "not a checkpoint").unwrap();
        assert_eq!(pptp_model_load(cstr(&bad).as_ptr(), &mut m), PptpStatus::Checkpoint);
        assert!(m.is_null());
        pptp_session_free(ptr::null_mut());
        pptp_model_free(ptr::null_mut());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(pptp_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pptp.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "pptp_session_load",
        "pptp_session_frame_count",
        "pptp_session_failure_risk",
        "pptp_session_free",
        "pptp_model_load",
        "pptp_model_predict_frame",
        "pptp_model_free",
        "pptp_last_error",
        "typedef struct PptpSession PptpSession",
        "PPTP_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax-check the header with the system C compiler when there is one.
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"pptp.h\"\nint main(void) { PptpSession *s = 0; return pptp_session_load(\"x\", &s) == PPTP_STATUS_OK; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; header syntax not checked"),
    }
}
