use std::path::{Path, PathBuf};
use std::process::Command;

const HEADER: &str = include_str!("../include/poisson_barrier.h");

#[test]
fn header_declares_the_api() {
    for symbol in [
        "pb_last_error_message",
        "pb_status_name",
        "pb_plan_reference",
        "pb_model_reference",
        "pb_model_new",
        "pb_model_free",
        "pb_simulate",
        "pb_bundle_free",
        "pb_bundle_shape",
        "pb_bundle_path",
        "pb_cost_builtin",
        "pb_cost_custom",
        "pb_cost_free",
        "pb_estimate_rho",
        "pb_estimate_value",
        "pb_estimate_value_derivative",
        "pb_find_optimal_barrier",
    ] {
        assert!(HEADER.contains(&format!("{symbol}(")), "{symbol} missing from header");
    }
    for opaque in ["typedef struct PbModel PbModel;", "typedef struct PbBundle PbBundle;", "typedef struct PbCost PbCost;"] {
        assert!(HEADER.contains(opaque), "{opaque}");
    }
    assert!(HEADER.contains("PB_STATUS_OK = 0"));
    assert!(HEADER.contains("typedef double (*PbScalarFn)(double x, void *user_data);"));
}

fn c_compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()))
}

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "poisson_barrier.h"

static double square(double x, void *data) { (void)data; return x * x; }
static double twice(double x, void *data) { (void)data; return 2.0 * x; }

int main(void) {
    PbModel *model = NULL;
    PbBundle *bundle = NULL;
    PbCost *cost = NULL;
    PbPlan plan = pb_plan_reference(5);
    plan.horizon = 5.0;
    plan.steps = 500;
    plan.paths = 50;
    if (pb_model_reference(&model) != PB_STATUS_OK) return 1;
    if (pb_simulate(model, &plan, &bundle) != PB_STATUS_OK) return 2;
    if (pb_cost_custom(square, twice, NULL, 1.0, &cost) != PB_STATUS_OK) return 3;
    PbBarrier found;
    if (pb_find_optimal_barrier(bundle, cost, 1e-3, &found) != PB_STATUS_OK) return 4;
    if (!(found.bracket_hi - found.bracket_lo <= 1e-3)) return 5;
    if (pb_simulate(NULL, &plan, &bundle) != PB_STATUS_NULL_POINTER) return 6;
    if (pb_last_error_message() == NULL) return 7;
    printf("%.6f\n", found.b_star);
    pb_cost_free(cost);
    pb_bundle_free(bundle);
    pb_model_free(model);
    return 0;
}
"#;

/// Directory holding this test's build artifacts (`target/<profile>`).
fn profile_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn c_program_links_against_static_library() {
    let Some(cc) = c_compiler() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let lib = profile_dir().join("libpoisson_barrier_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    let exe = dir.path().join("check");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .args(["-std=c99", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let b_star: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(b_star.is_finite());
}
