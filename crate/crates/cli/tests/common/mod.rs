#![allow(dead_code)]

use std::path::{Path, PathBuf};

use idm_fpr::synthdata::{generate_scenario, ScenarioSpec};
use idm_fpr_cli::{InputPaths, RunConfig};

/// Reference scenario written to a fresh temporary directory.
pub fn scenario_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    generate_scenario(&ScenarioSpec::reference()).unwrap().write_to(dir.path()).unwrap();
    dir
}

pub fn small_run(data: &Path, out: &Path, draws: usize) -> RunConfig {
    let mut cfg = RunConfig::new(InputPaths::from_dir(data), out);
    cfg.mc.n_draws = draws;
    cfg
}

/// Relative paths of all regular files below `dir`, sorted.
pub fn files_below(dir: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_owned());
            }
        }
    }
    let mut out = Vec::new();
    if dir.exists() {
        walk(dir, dir, &mut out);
    }
    out.sort();
    out
}
