//! External models evaluated by a child process.
//!
//! The plugin reads one JSON request per line on stdin and answers with one
//! JSON line on stdout:
//!
//! ```text
//! {"op":"eval","points":[[x1,x2,x3],...]}      -> {"images":[[y1,y2,y3],...]}
//! {"op":"jacobian","points":[[x1,x2,x3],...]}  -> {"jacobians":[[[..],[..],[..]],...]}
//! ```
//!
//! A reply of the form `{"error":"..."}` fails the request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use cslab_core::models::ExternalMap;
use cslab_core::{Matrix3, ModelError, Point3};
use serde::{Deserialize, Serialize};

use crate::config::ExternalSpec;

#[derive(Serialize)]
struct Request<'a> {
    op: &'a str,
    points: Vec<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reply {
    #[serde(default)]
    images: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    jacobians: Option<Vec<[[f64; 3]; 3]>>,
    #[serde(default)]
    error: Option<String>,
}

struct Pipes {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct PluginMap {
    name: String,
    jacobian: bool,
    child: Mutex<Child>,
    pipes: Mutex<Pipes>,
}

impl PluginMap {
    pub fn spawn(spec: &ExternalSpec) -> std::io::Result<Self> {
        let mut child = Command::new(&spec.command)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut name = spec.command.clone();
        for a in &spec.args {
            name.push(' ');
            name.push_str(a);
        }
        Ok(PluginMap {
            name,
            jacobian: spec.jacobian,
            child: Mutex::new(child),
            pipes: Mutex::new(Pipes { stdin, stdout }),
        })
    }

    fn request(&self, op: &str, points: Vec<[f64; 3]>) -> Result<Reply, ModelError> {
        let err = |m: String| ModelError::External(format!("{}: {m}", self.name));
        let mut line = serde_json::to_string(&Request { op, points }).map_err(|e| err(e.to_string()))?;
        line.push('\n');
        let mut pipes = self.pipes.lock().unwrap_or_else(|p| p.into_inner());
        pipes.stdin.write_all(line.as_bytes()).and_then(|_| pipes.stdin.flush()).map_err(|e| err(e.to_string()))?;
        let mut answer = String::new();
        let n = pipes.stdout.read_line(&mut answer).map_err(|e| err(e.to_string()))?;
        if n == 0 {
            return Err(err("plugin closed its output".into()));
        }
        let reply: Reply = serde_json::from_str(&answer).map_err(|e| err(format!("bad reply: {e}")))?;
        match reply.error {
            Some(m) => Err(err(m)),
            None => Ok(reply),
        }
    }

    /// Images of a batch of points in one round trip.
    pub fn eval_batch(&self, points: &[Point3]) -> Result<Vec<Point3>, ModelError> {
        let reply = self.request("eval", points.iter().map(|p| p.0).collect())?;
        match reply.images {
            Some(v) if v.len() == points.len() => Ok(v.into_iter().map(Point3).collect()),
            _ => Err(ModelError::External(format!("{}: eval reply has the wrong shape", self.name))),
        }
    }
}

impl ExternalMap for PluginMap {
    fn eval(&self, x: Point3) -> Result<Point3, ModelError> {
        Ok(self.eval_batch(&[x])?[0])
    }

    fn jacobian(&self, x: Point3) -> Option<Result<Matrix3, ModelError>> {
        if !self.jacobian {
            return None;
        }
        let r = self.request("jacobian", vec![x.0]).and_then(|reply| match reply.jacobians {
            Some(v) if v.len() == 1 => Ok(Matrix3(v[0])),
            _ => Err(ModelError::External(format!("{}: jacobian reply has the wrong shape", self.name))),
        });
        Some(r)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

impl Drop for PluginMap {
    fn drop(&mut self) {
        let child = self.child.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = child.kill();
        let _ = child.wait();
    }
}
