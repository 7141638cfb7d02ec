#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sabm::appshell::{cmd_simulate, layout, PipelineConfig};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

pub fn fixture_config() -> PipelineConfig {
    PipelineConfig::read(&data("replicate.conf")).expect("fixture config")
}

/// Renders the two-plane fixture into `dir` and returns a configuration that
/// reads it and writes under `dir/out`.
pub fn simulate_fixture(dir: &Path) -> PipelineConfig {
    let mut cfg = fixture_config();
    let sim = dir.join("sim");
    cmd_simulate(&data("two_plane.scene"), &data("shuttle.traj"), &sim, &cfg).expect("simulate fixture");
    cfg.frames = sim.join(layout::FRAMES_DIR);
    cfg.trace = sim.join(layout::TRACE_FILE);
    cfg.out = dir.join("out");
    cfg
}

/// Every file under `dir`, relative path and contents, in path order.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}
