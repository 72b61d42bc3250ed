use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mops_core::commands::cmd_gen;
use mops_core::config::Family;
use mops_core::instance::{ClassSpec, TabularSpec};
use mops_core::commands::GenRequest;
use mops_ffi::*;

fn instance_file(dir: &Path, include_truth: bool) -> PathBuf {
    let req = GenRequest {
        family: Family::Tabular,
        seed: 11,
        tabular: Some(TabularSpec {
            contexts: 2,
            states: 3,
            actions: 2,
            horizon: 2,
            reward_layout: Default::default(),
            reward_noise: Default::default(),
        }),
        mixture: None,
        knr: None,
        class: ClassSpec {
            size: 4,
            perturbation: 0.7,
            include_true_model: include_truth,
            misspecified: !include_truth,
        },
    };
    let path = dir.join(format!("inst_{include_truth}.json"));
    cmd_gen(&req, &path).unwrap();
    path
}

fn last_error() -> String {
    let p = mops_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn divergences_and_omega() {
    let (p, q) = ([0.2, 0.8], [0.6, 0.4]);
    let mut out = f64::NAN;
    unsafe {
        assert_eq!(mops_divergence(MopsDivergence::Tv, p.as_ptr(), q.as_ptr(), 2, &mut out), MopsStatus::Ok);
        assert!((out - 0.4).abs() < 1e-15);
        assert_eq!(mops_divergence(MopsDivergence::HellingerSq, p.as_ptr(), q.as_ptr(), 2, &mut out), MopsStatus::Ok);
        let h = (0.2f64.sqrt() - 0.6f64.sqrt()).powi(2) + (0.8f64.sqrt() - 0.4f64.sqrt()).powi(2);
        assert!((out - h).abs() < 1e-15);

        let bad = [0.5, 0.6];
        assert_eq!(mops_divergence(MopsDivergence::Kl, bad.as_ptr(), q.as_ptr(), 2, &mut out), MopsStatus::InvalidArgument);
        assert!(last_error().starts_with("p:"));
        assert_eq!(mops_divergence(MopsDivergence::Kl, p.as_ptr(), q.as_ptr(), 2, ptr::null_mut()), MopsStatus::NullPointer);

        let radii = [0.0, 0.25, 4.0];
        let lp = [(1.0f64 / 3.0).ln(); 3];
        let (mut value, mut eps) = (0.0, 0.0);
        assert_eq!(mops_omega(radii.as_ptr(), lp.as_ptr(), 3, 1.0, &mut value, &mut eps), MopsStatus::Ok);
        // Ball at ε = 0.5 holds two of three models: 0.5 − ln(2/3) beats ln 3.
        assert!((value - (0.5 - (2.0f64 / 3.0).ln())).abs() < 1e-12);
        assert_eq!(eps, 0.5);
        assert_eq!(mops_omega(radii.as_ptr(), lp.as_ptr(), 0, 1.0, &mut value, ptr::null_mut()), MopsStatus::InvalidArgument);
    }
}

#[test]
fn instance_run_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(instance_file(dir.path(), true).to_str().unwrap()).unwrap();
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(mops_instance_load(path.as_ptr(), &mut inst), MopsStatus::Ok);
        let (mut n, mut t) = (0usize, 0i64);
        assert_eq!(mops_instance_class_size(inst, &mut n), MopsStatus::Ok);
        assert_eq!(mops_instance_true_index(inst, &mut t), MopsStatus::Ok);
        assert_eq!(n, 4);
        assert!((0..4).contains(&t));

        let uniform = [0.25; 4];
        let mut residual = f64::NAN;
        assert_eq!(mops_simulation_lemma_residual(inst, uniform.as_ptr(), 4, &mut residual), MopsStatus::Ok);
        assert!(residual <= 1e-9);
        assert_eq!(mops_simulation_lemma_residual(inst, uniform.as_ptr(), 3, &mut residual), MopsStatus::InvalidArgument);

        let params = MopsRunParams {
            generator: MopsGenerator::QType,
            eta: 1.0 / 6.0,
            eta_prime: 1.0 / 6.0,
            gamma: 0.0,
            rounds: 500,
            full_horizon: true,
            seed: 3,
        };
        let mut run = ptr::null_mut();
        assert_eq!(mops_run(inst, &params, &mut run), MopsStatus::Ok);
        let mut rounds = 0usize;
        assert_eq!(mops_run_rounds(run, &mut rounds), MopsStatus::Ok);
        assert_eq!(rounds, 500);
        let mut regret = vec![0.0; 500];
        assert_eq!(mops_run_realized_regret(run, regret.as_mut_ptr(), 500), MopsStatus::Ok);
        assert!(regret.iter().all(|r| (0.0..=1.0).contains(r)));
        let mut mass = 0.0;
        assert_eq!(mops_run_final_mass_true(run, &mut mass), MopsStatus::Ok);
        let mut w = [0.0; 4];
        assert_eq!(mops_run_final_weights(run, w.as_mut_ptr(), 4), MopsStatus::Ok);
        assert_eq!(w[t as usize], mass);
        mops_run_free(run);

        let bad = MopsRunParams { rounds: 0, ..params };
        let mut run = ptr::null_mut();
        assert_eq!(mops_run(inst, &bad, &mut run), MopsStatus::InvalidArgument);
        assert!(run.is_null());
        mops_instance_free(inst);
        mops_instance_free(ptr::null_mut());
    }
}

#[test]
fn error_statuses() {
    unsafe {
        let mut inst = ptr::null_mut();
        let missing = CString::new("/nonexistent/instance.json").unwrap();
        assert_eq!(mops_instance_load(missing.as_ptr(), &mut inst), MopsStatus::Io);
        let garbage = CString::new("{\"schema_version\": 1").unwrap();
        assert_eq!(mops_instance_from_json(garbage.as_ptr(), &mut inst), MopsStatus::Parse);
        let invalid = [0xffu8, 0];
        assert_eq!(mops_instance_load(invalid.as_ptr().cast(), &mut inst), MopsStatus::InvalidUtf8);
        assert_eq!(mops_instance_load(ptr::null(), &mut inst), MopsStatus::NullPointer);
        assert!(inst.is_null());
        assert_eq!(mops_run_rounds(ptr::null(), ptr::null_mut()), MopsStatus::NullPointer);
        assert!(CStr::from_ptr(mops_version()).to_str().unwrap().starts_with("0."));
    }
}

#[test]
fn check_config_reports_realizability() {
    let dir = tempfile::tempdir().unwrap();
    for truth in [true, false] {
        let inst = instance_file(dir.path(), truth);
        let cfg = serde_json::json!({
            "schema_version": 1,
            "instance": {"family": "tabular", "file": inst},
            "class": {"size": 4, "include_true_model": truth, "misspecified": !truth},
            "algorithm": {"generator": "v_type_uniform", "gamma": 0.1, "rounds": 200}
        });
        let cfg_path = dir.path().join(format!("cfg_{truth}.json"));
        std::fs::write(&cfg_path, cfg.to_string()).unwrap();
        let c = CString::new(cfg_path.to_str().unwrap()).unwrap();
        let (mut json, mut pass) = (ptr::null_mut(), false);
        unsafe {
            assert_eq!(mops_check_config(c.as_ptr(), &mut json, &mut pass), MopsStatus::Ok);
            let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
            mops_string_free(json);
            assert_eq!(pass, truth);
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["schema_version"], 1);
            assert_eq!(v["checks"][0]["name"], "realizability");
            assert_eq!(v["checks"][0]["pass"], truth);
        }
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let target = exe.parent().and_then(Path::parent).unwrap();
    let lib = target.join("libmops_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let inst = instance_file(dir.path(), true);
    let out = Command::new(&bin).arg(&inst).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0."));
}
