use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use beatsynth_ffi::*;

fn last_error() -> String {
    let p = bs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn embed_deembed_round_trip_through_the_abi() {
    let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.4).sin()).collect();
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let x: Vec<f64> = x.iter().map(|v| 2.0 * (v - min) / (max - min) - 1.0).collect();
    let mut needed = 0usize;
    let status = unsafe { bs_embed(x.as_ptr(), 16, 8, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, BS_ERR_BUFFER);
    assert_eq!(needed, 3 * 16 * 16);
    let mut img = vec![0.0; needed];
    assert_eq!(unsafe { bs_embed(x.as_ptr(), 16, 8, img.as_mut_ptr(), img.len(), &mut needed) }, BS_OK);
    let mut back = vec![0.0; 16];
    let mut violation = -1.0;
    assert_eq!(unsafe { bs_deembed(img.as_ptr(), 16, back.as_mut_ptr(), &mut violation) }, BS_OK);
    assert_eq!(violation, 0.0);
    for (a, b) in x.iter().zip(&back) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn distances_match_hand_values() {
    let a = [0.0, 1.0, 2.0];
    let b = [0.0, 2.0];
    let mut d = 0.0;
    assert_eq!(unsafe { bs_dtw(a.as_ptr(), 3, b.as_ptr(), 2, &mut d) }, BS_OK);
    assert_eq!(d, 1.0);
    assert_eq!(unsafe { bs_frechet(a.as_ptr(), 3, b.as_ptr(), 2, &mut d) }, BS_OK);
    assert_eq!(d, 1.0);
    let x = [0.0, 0.0, 2.0, 2.0];
    let y = [1.0, 1.0];
    assert_eq!(unsafe { bs_mmd_linear(x.as_ptr(), 2, y.as_ptr(), 1, 2, &mut d) }, BS_OK);
    assert_eq!(d, 0.0);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut d = 0.0;
    assert_eq!(unsafe { bs_dtw(ptr::null(), 3, [1.0].as_ptr(), 1, &mut d) }, BS_ERR_ARGUMENT);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { bs_dtw([1.0].as_ptr(), 0, [1.0].as_ptr(), 1, &mut d) }, BS_ERR_CONFIG);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"sede": 1}"#).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { bs_config_load(cstr(&bad).as_ptr(), &mut cfg) }, BS_ERR_CONFIG);
    assert!(last_error().contains("sede"));
    assert!(cfg.is_null());

    let missing = dir.path().join("missing.tsnn");
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { bs_wgan_load(cstr(&missing).as_ptr(), &mut model) }, BS_ERR_DATA);
    assert!(last_error().contains("missing.tsnn"));
    assert_eq!(unsafe { bs_decode_format212([1u8, 2].as_ptr(), 2, ptr::null_mut(), ptr::null_mut(), 0, ptr::null_mut()) }, BS_OK);
}

#[test]
fn config_hash_is_stable_and_seed_sensitive() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { bs_config_new(&mut cfg) }, BS_OK);
    let mut buf = [0 as std::ffi::c_char; 65];
    let mut needed = 0;
    assert_eq!(unsafe { bs_config_hash(cfg, buf.as_mut_ptr(), 65, &mut needed) }, BS_OK);
    assert_eq!(needed, 65);
    let first = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(first.len(), 64);
    assert_eq!(unsafe { bs_config_set_seed(cfg, 99) }, BS_OK);
    assert_eq!(unsafe { bs_config_hash(cfg, buf.as_mut_ptr(), 65, &mut needed) }, BS_OK);
    assert_ne!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), first);
    assert_eq!(unsafe { bs_config_hash(cfg, buf.as_mut_ptr(), 10, &mut needed) }, BS_ERR_BUFFER);
    unsafe { bs_config_free(cfg) };
    unsafe { bs_config_free(ptr::null_mut()) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(bs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("beatsynth.h")
}

#[test]
fn header_declares_every_exported_function() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 20);
    for name in exported {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    for opaque in ["BsConfig", "BsBeats", "BsWgan", "BsDdpm"] {
        assert!(h.contains(&format!("typedef struct {opaque} {opaque};")));
    }
}

/// Directory holding the static library built alongside this test binary.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = lib_dir().join("libbeatsynth_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "beatsynth.h"
int main(void) {
    double a[3] = {0.0, 1.0, 2.0}, b[2] = {0.0, 2.0}, d = -1.0;
    if (bs_dtw(a, 3, b, 2, &d) != BS_OK || d != 1.0) return 1;
    if (bs_dtw(NULL, 3, b, 2, &d) != BS_ERR_ARGUMENT || bs_last_error() == NULL) return 2;
    BsConfig *cfg = NULL;
    char hash[65];
    size_t needed = 0;
    if (bs_config_new(&cfg) != BS_OK) return 3;
    if (bs_config_hash(cfg, hash, sizeof hash, &needed) != BS_OK || needed != 65) return 4;
    bs_config_free(cfg);
    printf("%s %s\n", bs_version(), hash);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("C compiler runs");
    assert!(status.success(), "compiling the C smoke test failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with(env!("CARGO_PKG_VERSION")));
    assert_eq!(text.trim().split(' ').nth(1).unwrap().len(), 64);
}

#[test]
fn wgan_checkpoint_loads_and_samples_through_handles() {
    use beatsynth::wgan::{train_wgan_gp, CriticConfig, GeneratorConfig, WganTrainConfig};
    let beats: Vec<Vec<f64>> = (0..8).map(|k| (0..64).map(|i| ((i + k) as f64 * 0.1).sin()).collect()).collect();
    let cfg = WganTrainConfig {
        steps: 1,
        n_critic: 1,
        batch_size: 4,
        generator: GeneratorConfig { widths: [8, 8, 4, 4], ..Default::default() },
        critic: CriticConfig { widths: [4, 4, 4, 4], input_len: 64 },
        ..Default::default()
    };
    let (model, _) = train_wgan_gp(&beats, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.tsnn");
    model.save(&path).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { bs_wgan_load(cstr(&path).as_ptr(), &mut h) }, BS_OK);
    let mut len = 0;
    assert_eq!(unsafe { bs_wgan_beat_len(h, &mut len) }, BS_OK);
    assert_eq!(len, 64);
    let mut buf = vec![0.0; 3 * 64];
    let mut needed = 0;
    assert_eq!(unsafe { bs_wgan_sample(h, 3, 5, buf.as_mut_ptr(), buf.len(), &mut needed) }, BS_OK);
    assert_eq!(needed, 192);
    assert_eq!(buf, model.sample(3, 5).unwrap().concat());
    unsafe { bs_wgan_free(h) };
}
