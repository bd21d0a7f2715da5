use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ftte::experiment::{run_repeat, ExperimentConfig};
use ftte_ffi::*;

const CONFIG: &str = r#"{
  "strategy": "ftte",
  "buffer": 3,
  "num_clients": 6,
  "dataset": {"dim": 6, "train_per_class": 120, "test_per_class": 40, "calibration_per_class": 16},
  "hidden_layers": [8],
  "local_epochs": 1,
  "memory_budget_bytes": 1000,
  "target_accuracy": 0.85,
  "max_steps": 300,
  "repeats": 2,
  "seed": 4
}"#;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ftte_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn take_string(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    ftte_string_free(p);
    s
}

fn experiment(json: &str) -> *mut FtteExperiment {
    let mut exp = ptr::null_mut();
    let status = unsafe { ftte_experiment_from_json(cstr(json).as_ptr(), &mut exp) };
    assert_eq!(status, FtteStatus::Ok);
    assert!(ftte_last_error().is_null());
    exp
}

#[test]
fn run_matches_the_library() {
    let exp = experiment(CONFIG);
    assert_eq!(unsafe { ftte_experiment_repeats(exp) }, 2);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { ftte_run(exp, 1, &mut run) }, FtteStatus::Ok);

    let direct = run_repeat(&ExperimentConfig::from_json(CONFIG).unwrap(), 1).unwrap();
    let records = &direct.trace.records;

    unsafe {
        assert_eq!(ftte_run_trace_len(run), records.len());
        let mut csv = ptr::null_mut();
        assert_eq!(ftte_run_trace_csv(run, &mut csv), FtteStatus::Ok);
        assert_eq!(take_string(csv), direct.trace.to_csv());

        for (i, want) in records.iter().enumerate() {
            let mut rec = std::mem::zeroed::<FtteTraceRecord>();
            assert_eq!(ftte_run_trace_record(run, i, &mut rec), FtteStatus::Ok);
            assert_eq!(rec.step, want.step);
            assert_eq!(rec.sim_time_s, want.sim_time_s);
            assert_eq!(rec.version, want.version);
            assert_eq!(rec.upload_bytes_cum, want.upload_bytes_cum);
            assert_eq!(rec.download_bytes_cum, want.download_bytes_cum);
            match want.accuracy {
                Some(a) => {
                    assert_eq!(rec.event, FtteEvent::Eval);
                    assert_eq!(rec.accuracy, a);
                }
                None => assert!(rec.accuracy.is_nan() && rec.loss.is_nan()),
            }
        }

        let mut m = std::mem::zeroed::<FtteRunMetrics>();
        assert_eq!(ftte_run_metrics(run, &mut m), FtteStatus::Ok);
        let dm = &direct.summary.metrics;
        assert_eq!(m.reached, dm.reached);
        assert_eq!(m.steps_to_target, dm.steps_to_target.unwrap_or(0));
        assert_eq!(m.final_step, records.last().unwrap().step);
        assert_eq!(m.upload_bytes, records.last().unwrap().upload_bytes_cum);
        assert_eq!(m.aggregations as usize, dm.aggregations);

        let mut json = ptr::null_mut();
        assert_eq!(ftte_run_summary_json(run, &mut json), FtteStatus::Ok);
        let summary: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(summary["strategy"], "ftte");
        assert_eq!(summary["repeat"], 1);
        assert_eq!(summary["trace_file"], "trace_ftte_r1.csv");

        ftte_run_free(run);
        ftte_experiment_free(exp);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut exp = ptr::null_mut();
    unsafe {
        let bad = cstr("{\"strategy\": \"ftte\",\n \"bogus\": 1}");
        assert_eq!(
            ftte_experiment_from_json(bad.as_ptr(), &mut exp),
            FtteStatus::Config
        );
        assert!(exp.is_null());
        assert!(last_error().contains("line 2"), "{}", last_error());

        let no_buffer = cstr(r#"{"strategy": "fedbuff"}"#);
        assert_eq!(
            ftte_experiment_from_json(no_buffer.as_ptr(), &mut exp),
            FtteStatus::Config
        );
        assert!(last_error().contains("buffer"));

        assert_eq!(
            ftte_experiment_from_json(ptr::null(), &mut exp),
            FtteStatus::NullPointer
        );
        let ok = cstr(CONFIG);
        assert_eq!(
            ftte_experiment_from_json(ok.as_ptr(), ptr::null_mut()),
            FtteStatus::NullPointer
        );

        let invalid_utf8 = [0x7b_u8, 0xff, 0x7d, 0];
        assert_eq!(
            ftte_experiment_from_json(invalid_utf8.as_ptr().cast(), &mut exp),
            FtteStatus::InvalidUtf8
        );

        let missing = cstr("/nonexistent/ftte/config.json");
        assert_eq!(
            ftte_experiment_load(missing.as_ptr(), &mut exp),
            FtteStatus::Io
        );
        assert!(last_error().contains("/nonexistent/ftte/config.json"));

        let exp = experiment(CONFIG);
        let mut run = ptr::null_mut();
        assert_eq!(ftte_run(exp, 2, &mut run), FtteStatus::OutOfRange);
        assert!(run.is_null());
        assert_eq!(ftte_run(ptr::null(), 0, &mut run), FtteStatus::NullPointer);

        let tiny = cstr("memory_budget_bytes=10");
        assert_eq!(ftte_experiment_set(exp, tiny.as_ptr()), FtteStatus::Ok);
        assert_eq!(ftte_run(exp, 0, &mut run), FtteStatus::InfeasibleBudget);
        assert!(last_error().contains("infeasible memory budget"));
        ftte_experiment_free(exp);

        let mut rec = std::mem::zeroed::<FtteTraceRecord>();
        assert_eq!(
            ftte_run_trace_record(ptr::null(), 0, &mut rec),
            FtteStatus::NullPointer
        );
        assert_eq!(ftte_run_trace_len(ptr::null()), 0);
        assert_eq!(ftte_experiment_repeats(ptr::null()), 0);
        ftte_run_free(ptr::null_mut());
        ftte_experiment_free(ptr::null_mut());
        ftte_string_free(ptr::null_mut());
    }
}

#[test]
fn rejected_override_leaves_experiment_unchanged() {
    let exp = experiment(CONFIG);
    unsafe {
        let mut before = ptr::null_mut();
        assert_eq!(ftte_experiment_to_json(exp, &mut before), FtteStatus::Ok);
        let before = take_string(before);

        let bad = cstr("strategy=fedbuff");
        let cleared = cstr("buffer=null");
        assert_eq!(
            ftte_experiment_set(exp, cleared.as_ptr()),
            FtteStatus::Config
        );
        assert_eq!(
            ftte_experiment_set(exp, cstr("no_equals").as_ptr()),
            FtteStatus::Config
        );
        let mut after = ptr::null_mut();
        assert_eq!(ftte_experiment_to_json(exp, &mut after), FtteStatus::Ok);
        assert_eq!(take_string(after), before);

        assert_eq!(ftte_experiment_set(exp, bad.as_ptr()), FtteStatus::Ok);
        assert_eq!(
            ftte_experiment_set(exp, cstr("dataset.dim=9").as_ptr()),
            FtteStatus::Ok
        );
        let mut json = ptr::null_mut();
        ftte_experiment_to_json(exp, &mut json);
        let cfg = ExperimentConfig::from_json(&take_string(json)).unwrap();
        assert_eq!(cfg.strategy.name(), "fedbuff");
        assert_eq!(cfg.dataset.dim, 9);
        ftte_experiment_free(exp);
    }
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    std::fs::write(&path, CONFIG).unwrap();
    let mut exp = ptr::null_mut();
    let p = cstr(path.to_str().unwrap());
    unsafe {
        assert_eq!(ftte_experiment_load(p.as_ptr(), &mut exp), FtteStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(ftte_experiment_to_json(exp, &mut json), FtteStatus::Ok);
        let back = ExperimentConfig::from_json(&take_string(json)).unwrap();
        assert_eq!(
            back.to_json(),
            ExperimentConfig::from_json(CONFIG).unwrap().to_json()
        );
        ftte_experiment_free(exp);
    }
}

#[test]
fn staleness_weight_values() {
    for (age, var) in [(0, 0.0), (0, 5.0), (3, 0.0), (1, 1.0), (4, 0.25), (10, 0.3)] {
        let want = 1.0 / (1.0 + age as f64 * var);
        assert!((ftte_staleness_weight(age, var) - want).abs() <= 1e-12 * want);
    }
    assert_eq!(ftte_staleness_weight(7, 0.0), 1.0);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ftte_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/ftte.h");
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn header_declares_every_export() {
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs"))
        .unwrap();
    let h = header();
    let mut n = 0;
    for line in src.lines() {
        let Some(rest) = line.split("extern \"C\" fn ").nth(1) else {
            continue;
        };
        let name = rest.split('(').next().unwrap();
        assert!(
            h.contains(&format!("{name}(")),
            "{name} missing from header"
        );
        n += 1;
    }
    assert!(n >= 15, "{n}");
    for ty in [
        "typedef struct FtteExperiment FtteExperiment;",
        "typedef struct FtteRun FtteRun;",
        "FTTE_STATUS_INFEASIBLE_BUDGET = 5",
    ] {
        assert!(h.contains(ty), "{ty}");
    }
}

const C_PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "ftte.h"

int main(int argc, char **argv) {
    FtteExperiment *exp = NULL;
    if (ftte_experiment_from_json("{\"strategy\": \"fedbuff\"}", &exp) != FTTE_STATUS_CONFIG) return 10;
    if (strstr(ftte_last_error(), "buffer") == NULL) return 11;
    if (ftte_experiment_from_json(argv[1], &exp) != FTTE_STATUS_OK) return 12;
    FtteRun *run = NULL;
    if (ftte_run(exp, 0, &run) != FTTE_STATUS_OK) return 13;
    FtteRunMetrics m;
    if (ftte_run_metrics(run, &m) != FTTE_STATUS_OK) return 14;
    FtteTraceRecord last;
    if (ftte_run_trace_record(run, ftte_run_trace_len(run) - 1, &last) != FTTE_STATUS_OK) return 15;
    if (last.step != m.final_step) return 16;
    if (fabs(ftte_staleness_weight(4, 0.25) - 0.5) > 1e-12) return 17;
    printf("%llu %d\n", (unsigned long long)m.final_step, (int)m.reached);
    ftte_run_free(run);
    ftte_experiment_free(exp);
    return 0;
}
"#;

#[test]
fn c_program_links_against_static_library() {
    let target_tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let profile_dir = target_tmp
        .parent()
        .unwrap()
        .join(if cfg!(debug_assertions) {
            "debug"
        } else {
            "release"
        });
    let lib = profile_dir.join("libftte_ffi.a");
    let have_cc = Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success());
    if !cfg!(target_os = "linux") || !have_cc || !lib.exists() {
        eprintln!("skipping: needs cc and {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(
        cc.status.success(),
        "{}",
        String::from_utf8_lossy(&cc.stderr)
    );

    let out = Command::new(&exe).arg(CONFIG).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let direct = run_repeat(&ExperimentConfig::from_json(CONFIG).unwrap(), 0).unwrap();
    let want = format!(
        "{} {}\n",
        direct.trace.final_step(),
        direct.summary.metrics.reached as i32
    );
    assert_eq!(String::from_utf8(out.stdout).unwrap(), want);
}
