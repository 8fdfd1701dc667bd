use std::fs;
use std::path::Path;

use poisson_barrier::cli::{run, EXIT_OK};
use poisson_barrier::{estimate_value, simulate_paths, CostCase, CostSpec, LevyModelSpec, SimulationPlan};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn bundle_and_estimates_ignore_thread_count() {
    let plan = SimulationPlan {
        horizon: 10.0,
        steps: 1000,
        paths: 64,
        ..SimulationPlan::reference(77)
    };
    let spec = LevyModelSpec::reference();
    let cost = CostSpec::builtin(CostCase::F3, 1.0);
    let run = || {
        let bundle = simulate_paths(&spec, &plan).unwrap();
        let v = estimate_value(&bundle, &cost, -0.5, 0.25).unwrap();
        (bundle, v)
    };
    let (one, v1) = in_pool(1, run);
    let (many, v4) = in_pool(4, run);
    assert_eq!(one.x_values(), many.x_values());
    assert_eq!(**one.obs_mask(), **many.obs_mask());
    assert_eq!(v1.mean.to_bits(), v4.mean.to_bits());
    assert_eq!(v1.std_error.to_bits(), v4.std_error.to_bits());
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for case in fs::read_dir(dir).unwrap() {
        let case = case.unwrap().path();
        for f in fs::read_dir(&case).unwrap() {
            let f = f.unwrap().path();
            files.push((f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap()));
        }
    }
    files.sort();
    files
}

#[test]
fn cli_outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let args = [
            "pbarrier", "value-curves", "--paths", "30", "--steps", "1000", "--threads", threads, "--out",
            out.to_str().unwrap(),
        ];
        assert_eq!(run(args), EXIT_OK);
        trees.push(tree_bytes(&out));
    }
    assert_eq!(trees[0].len(), 6);
    assert_eq!(trees[0], trees[1]);
}
