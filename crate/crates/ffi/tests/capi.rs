use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sskcf::harness::{synth_generate, SynthSpec};
use sskcf::Frame;
use sskcf_ffi::*;

fn last_error() -> String {
    let needed = unsafe { sskcf_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as libc::c_char; needed];
    unsafe { sskcf_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn new_tracker(cfg: *const SskcfConfig, frame: &Frame, b: SskcfBox) -> (SskcfStatus, *mut SskcfTracker) {
    let mut out = ptr::null_mut();
    let status = unsafe {
        sskcf_tracker_new(
            cfg,
            frame.data().as_ptr(),
            frame.width(),
            frame.height(),
            frame.width() * frame.channels(),
            frame.channels(),
            b,
            &mut out,
        )
    };
    (status, out)
}

fn short_sequence() -> sskcf::harness::SynthSequence {
    let spec = SynthSpec {
        frames: 12,
        waypoints: vec![(0, (150.0, 120.0)), (11, (172.0, 126.0))],
        ..SynthSpec::default()
    };
    synth_generate(&spec, 0).unwrap()
}

#[test]
fn tracks_through_the_c_interface() {
    let synth = short_sequence();
    let first = synth.sequence.frame(0).unwrap();
    let (status, tracker) = new_tracker(ptr::null(), &first, synth.boxes[0].into());
    assert_eq!(status, SskcfStatus::Ok, "{}", last_error());
    assert!(!tracker.is_null());
    assert_eq!(unsafe { sskcf_tracker_part_count(tracker) }, 4);

    let mut out = SskcfBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 };
    for t in 1..synth.sequence.len() {
        let f = synth.sequence.frame(t).unwrap();
        let s = unsafe {
            sskcf_tracker_step(
                tracker,
                f.data().as_ptr(),
                f.width(),
                f.height(),
                f.width() * 3,
                3,
                &mut out,
            )
        };
        assert_eq!(s, SskcfStatus::Ok);
        assert!(sskcf_iou(out, synth.boxes[t].into()) > 0.6, "frame {t}");
    }
    let mut current = out;
    assert_eq!(unsafe { sskcf_tracker_box(tracker, &mut current) }, SskcfStatus::Ok);
    assert_eq!(current, out);

    let mut scale = 0.0;
    assert_eq!(unsafe { sskcf_tracker_scale(tracker, &mut scale) }, SskcfStatus::Ok);
    assert!((scale - 1.0).abs() < 0.1);

    let mut part = SskcfPart {
        region: out,
        psr: 0.0,
        similarity: 0.0,
        weight: 0.0,
        reliable: false,
    };
    assert_eq!(unsafe { sskcf_tracker_part(tracker, 0, &mut part) }, SskcfStatus::Ok);
    assert!(part.reliable && part.psr > 0.0 && part.weight > 0.0);
    assert_eq!(
        unsafe { sskcf_tracker_part(tracker, 4, &mut part) },
        SskcfStatus::IndexOutOfRange
    );
    unsafe { sskcf_tracker_free(tracker) };
}

#[test]
fn matches_the_rust_api() {
    let synth = short_sequence();
    let cfg = sskcf::TrackerConfig::default();
    let first = synth.sequence.frame(0).unwrap();
    let mut native = sskcf::Tracker::init(&first.view(), synth.boxes[0], cfg).unwrap();
    let (_, tracker) = new_tracker(ptr::null(), &first, synth.boxes[0].into());
    let mut out = SskcfBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 };
    for t in 1..5 {
        let f = synth.sequence.frame(t).unwrap();
        let expected = native.step(&f.view()).unwrap();
        unsafe {
            sskcf_tracker_step(tracker, f.data().as_ptr(), f.width(), f.height(), f.width() * 3, 3, &mut out);
        }
        assert_eq!(out, expected.into());
    }
    unsafe { sskcf_tracker_free(tracker) };
}

#[test]
fn config_round_trip_and_errors() {
    let cfg = sskcf_config_new();
    let key = CString::new("psr_threshold").unwrap();
    let value = CString::new("6.25").unwrap();
    assert_eq!(unsafe { sskcf_config_set(cfg, key.as_ptr(), value.as_ptr()) }, SskcfStatus::Ok);

    let mut needed = 0;
    let mut buf = [0 as libc::c_char; 32];
    let s = unsafe { sskcf_config_get(cfg, key.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut needed) };
    assert_eq!(s, SskcfStatus::Ok);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(text, "6.25");
    assert_eq!(needed, text.len() + 1);

    let bad = CString::new("no_such_key").unwrap();
    assert_eq!(
        unsafe { sskcf_config_set(cfg, bad.as_ptr(), value.as_ptr()) },
        SskcfStatus::UnknownKey
    );
    assert!(last_error().contains("no_such_key"));

    let neg = CString::new("-1").unwrap();
    let c = CString::new("c").unwrap();
    assert_eq!(
        unsafe { sskcf_config_set(cfg, c.as_ptr(), neg.as_ptr()) },
        SskcfStatus::InvalidArgument
    );
    let junk = CString::new("abc").unwrap();
    assert_eq!(
        unsafe { sskcf_config_set(cfg, key.as_ptr(), junk.as_ptr()) },
        SskcfStatus::InvalidArgument
    );
    // failed sets leave the previous value alone
    unsafe { sskcf_config_get(cfg, key.as_ptr(), buf.as_mut_ptr(), buf.len(), ptr::null_mut()) };
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "6.25");

    assert_eq!(
        unsafe { sskcf_config_set(ptr::null_mut(), key.as_ptr(), value.as_ptr()) },
        SskcfStatus::NullPointer
    );
    unsafe { sskcf_config_free(cfg) };
    unsafe { sskcf_config_free(ptr::null_mut()) };
}

#[test]
fn truncated_error_message_is_terminated() {
    let (status, _) = new_tracker(ptr::null(), &Frame::filled(64, 64, [0; 3]), SskcfBox { x: 100.0, y: 100.0, w: 20.0, h: 20.0 });
    assert_eq!(status, SskcfStatus::BoxOutsideFrame);
    let full = last_error();
    let mut buf = [1 as libc::c_char; 5];
    let needed = unsafe { sskcf_last_error(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(needed, full.len() + 1);
    assert_eq!(buf[4], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), &full[..4]);
}

#[test]
fn rejects_bad_inputs() {
    let frame = Frame::filled(64, 64, [90; 3]);
    let (s, out) = new_tracker(ptr::null(), &frame, SskcfBox { x: 30.0, y: 30.0, w: 2.0, h: 2.0 });
    assert_eq!(s, SskcfStatus::BoxTooSmall);
    assert!(out.is_null());

    let mut out = ptr::null_mut();
    let s = unsafe {
        sskcf_tracker_new(ptr::null(), ptr::null(), 64, 64, 192, 3, SskcfBox { x: 0.0, y: 0.0, w: 20.0, h: 20.0 }, &mut out)
    };
    assert_eq!(s, SskcfStatus::NullPointer);

    let data = [0u8; 64 * 64 * 3];
    let s = unsafe {
        sskcf_tracker_new(ptr::null(), data.as_ptr(), 64, 64, 64 * 4, 4, SskcfBox { x: 0.0, y: 0.0, w: 20.0, h: 20.0 }, &mut out)
    };
    assert_eq!(s, SskcfStatus::InvalidBuffer);

    let mut b = SskcfBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 };
    let s = unsafe { sskcf_tracker_step(ptr::null_mut(), data.as_ptr(), 64, 64, 192, 3, &mut b) };
    assert_eq!(s, SskcfStatus::NullPointer);
    assert_eq!(unsafe { sskcf_tracker_part_count(ptr::null()) }, 0);
    unsafe { sskcf_tracker_free(ptr::null_mut()) };
}

#[test]
fn grayscale_frames_are_accepted() {
    let synth = short_sequence();
    let rgb = synth.sequence.frame(0).unwrap();
    let gray: Vec<u8> = rgb.data().chunks(3).map(|p| p[1]).collect();
    let mut out = ptr::null_mut();
    let s = unsafe {
        sskcf_tracker_new(ptr::null(), gray.as_ptr(), rgb.width(), rgb.height(), rgb.width(), 1, synth.boxes[0].into(), &mut out)
    };
    assert_eq!(s, SskcfStatus::Ok, "{}", last_error());
    unsafe { sskcf_tracker_free(out) };
}

#[test]
fn metric_helpers() {
    let a = SskcfBox { x: 0.0, y: 0.0, w: 10.0, h: 10.0 };
    let b = SskcfBox { x: 5.0, y: 0.0, w: 10.0, h: 10.0 };
    assert!((sskcf_iou(a, b) - 50.0 / 150.0).abs() < 1e-12);
    assert_eq!(sskcf_iou(a, a), 1.0);
    assert_eq!(sskcf_center_error(a, b), 5.0);
    let v = unsafe { CStr::from_ptr(sskcf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sskcf.h")
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    for name in [
        "typedef struct SskcfConfig SskcfConfig;",
        "typedef struct SskcfTracker SskcfTracker;",
        "SSKCF_STATUS_OK = 0",
        "SSKCF_STATUS_BOX_TOO_SMALL",
        "sskcf_config_new(void)",
        "sskcf_config_set(",
        "sskcf_config_get(",
        "sskcf_tracker_new(",
        "sskcf_tracker_step(",
        "sskcf_tracker_free(",
        "sskcf_tracker_part(",
        "sskcf_last_error(",
        "sskcf_iou(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
    // opaque handles: no field of the Rust structs leaks into C
    assert!(!header.contains("inner"));
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    // `deps/` holds the copy built alongside this test; the uplifted one in
    // the profile directory may be older.
    [deps, deps.parent()?]
        .iter()
        .map(|d| d.join("libsskcf_ffi.a"))
        .filter_map(|p| Some((p.metadata().ok()?.modified().ok()?, p)))
        .max_by_key(|(t, _)| *t)
        .map(|(_, p)| p)
}

#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib = static_lib().expect("libsskcf_ffi.a next to the test binary");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "sskcf.h"

int main(void) {
    SskcfConfig *cfg = sskcf_config_new();
    if (sskcf_config_set(cfg, "learning_rate", "0.02") != SSKCF_STATUS_OK) return 1;
    if (sskcf_config_set(cfg, "bogus", "1") != SSKCF_STATUS_UNKNOWN_KEY) return 2;
    char msg[128];
    sskcf_last_error(msg, sizeof msg);
    if (strstr(msg, "bogus") == NULL) return 3;

    enum { W = 160, H = 120 };
    static unsigned char px[W * H * 3];
    for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++)
            for (int c = 0; c < 3; c++)
            {
                unsigned h = (unsigned)(x / 6) * 73856093u ^ (unsigned)(y / 6) * 19349663u ^ (unsigned)c * 83492791u;
                h ^= h >> 13;
                h *= 0x5bd1e995u;
                h ^= h >> 15;
                px[(y * W + x) * 3 + c] = (unsigned char)(h & 0xff);
            }
    SskcfBox init = { 50.0, 40.0, 48.0, 40.0 };
    SskcfTracker *t = NULL;
    if (sskcf_tracker_new(cfg, px, W, H, W * 3, 3, init, &t) != SSKCF_STATUS_OK) return 4;
    SskcfBox out;
    if (sskcf_tracker_step(t, px, W, H, W * 3, 3, &out) != SSKCF_STATUS_OK) return 5;
    if (sskcf_iou(out, init) < 0.9) { printf("%f %f %f %f\n", out.x, out.y, out.w, out.h); return 6; }
    if (sskcf_tracker_part_count(t) != 4) return 7;
    sskcf_tracker_free(t);
    sskcf_config_free(cfg);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "C program exited with {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stdout));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
