#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const LG_A: &str = r#"{"type":"leslie_gower","lambda":[2,2,2],"a":[[1,1,1],[1,1,1],[1,1,1]]}"#;
pub const LG_B: &str = r#"{"type":"leslie_gower","lambda":[3,3,3],"a":[[1,0.5,0.5],[0.5,1,0.5],[0.5,0.5,1]]}"#;
pub const LG_C: &str = r#"{"type":"leslie_gower","lambda":[2,2,2],"a":[[1,2,2],[2,1,2],[2,2,1]]}"#;

pub struct Run {
    pub out: PathBuf,
    pub output: Output,
}

impl Run {
    pub fn code(&self) -> i32 {
        self.output.status.code().unwrap_or(-1)
    }

    pub fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    pub fn json(&self, name: &str) -> Value {
        let text = std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        serde_json::from_str(&text).unwrap()
    }

    pub fn text(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

/// Writes `config` into `dir` and runs `cslab <command>` with output in
/// `dir/out`.
pub fn run_in(dir: &Path, command: &str, config: &str, extra: &[&str], env: &[(&str, &str)]) -> Run {
    std::fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cslab"));
    cmd.arg(command).arg("--config").arg(&cfg).arg("--out").arg(&out).args(extra);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let output = cmd.output().expect("cslab runs");
    Run { out, output }
}

pub fn model_config(model: &str, level: usize) -> String {
    format!(r#"{{"model":{model},"grid":{{"level":{level}}}}}"#)
}

pub fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}
