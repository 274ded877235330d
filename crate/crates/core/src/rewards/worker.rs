//! External reward worker protocol.
//!
//! The worker is a subprocess speaking line-delimited JSON over its standard
//! streams. On startup it writes one handshake line
//! `{"protocol":"fksteer-reward/1"}`. Each request is one line
//!
//! ```text
//! {"run_id":"..","particle_id":3,"t":12,"eval_index":0,"payload":{"coords":[[x,y],..],"tokens":"KRDE.."}}
//! ```
//!
//! (or `"payload":{"state":[..]}` for real-vector proxies) and is answered
//! by exactly one line
//!
//! ```text
//! {"particle_id":3,"t":12,"eval_index":0,"reward":-1.5}
//! ```

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chain::charge_reward_of;
use super::refine::{refine, Token};
use super::{EvalContext, RewardFunction, Scored};
use crate::error::{Error, Result, WorkerFailure};
use crate::geometry::Point;
use crate::scalar::Real;

pub const PROTOCOL: &str = "fksteer-reward/1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WirePayload {
    Pair { coords: Vec<[f64; 2]>, tokens: String },
    Raw { state: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerRequest {
    pub run_id: String,
    pub particle_id: usize,
    pub t: usize,
    pub eval_index: usize,
    pub payload: WirePayload,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerReply {
    pub particle_id: usize,
    pub t: usize,
    pub eval_index: usize,
    pub reward: f64,
}

/// A running worker process.
pub struct WorkerHandle {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
    timeout: Duration,
    poisoned: bool,
}

impl WorkerHandle {
    /// Spawn `command[0]` with the remaining arguments and wait for the handshake.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::config("worker command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::WorkerStartup(format!("{program}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut handle = Self {
            child,
            stdin,
            lines: rx,
            timeout,
            poisoned: false,
        };
        let first = handle
            .next_line()
            .map_err(|(kind, detail)| Error::WorkerStartup(format!("handshake {kind}: {detail}")))?;
        match serde_json::from_str::<Handshake>(&first) {
            Ok(h) if h.protocol == PROTOCOL => Ok(handle),
            _ => Err(Error::WorkerStartup(format!("unexpected handshake line {first:?}"))),
        }
    }

    fn next_line(&mut self) -> Result<String, (WorkerFailure, String)> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err((WorkerFailure::Transport, e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                self.poisoned = true;
                Err((WorkerFailure::Timeout, format!("no reply within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err((WorkerFailure::Transport, "worker closed its output".into()))
            }
        }
    }

    /// Send one request and block for its reply.
    pub fn request(&mut self, req: &WorkerRequest) -> Result<f64, (WorkerFailure, String)> {
        if self.poisoned {
            return Err((WorkerFailure::Transport, "worker unusable after an earlier timeout".into()));
        }
        let mut line = serde_json::to_string(req)
            .map_err(|e| (WorkerFailure::Malformed, e.to_string()))?;
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or((WorkerFailure::Transport, "worker input closed".to_string()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| (WorkerFailure::Transport, e.to_string()))?;
        let reply_line = self.next_line()?;
        let reply: WorkerReply = serde_json::from_str(&reply_line)
            .map_err(|e| (WorkerFailure::Malformed, format!("{e}: {reply_line:?}")))?;
        if (reply.particle_id, reply.t, reply.eval_index) != (req.particle_id, req.t, req.eval_index) {
            return Err((
                WorkerFailure::Malformed,
                format!(
                    "reply for (particle {}, t {}, eval {}) does not match the request",
                    reply.particle_id, reply.t, reply.eval_index
                ),
            ));
        }
        Ok(reply.reward)
    }

    /// Terminate the worker process.
    pub fn kill(&mut self) -> io::Result<()> {
        self.stdin = None;
        self.child.kill()?;
        self.child.wait().map(|_| ())
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Reward computed by an external worker. Chain proxies are refined in
/// process and sent as coordinates plus tokens; real-vector proxies are sent
/// raw.
pub struct ExternalReward<F> {
    worker: Mutex<WorkerHandle>,
    run_id: String,
    temperature: F,
}

impl<F: Real> ExternalReward<F> {
    pub fn new(worker: WorkerHandle, run_id: impl Into<String>, temperature: F) -> Self {
        Self {
            worker: Mutex::new(worker),
            run_id: run_id.into(),
            temperature,
        }
    }

    pub fn with_worker<T>(&self, f: impl FnOnce(&mut WorkerHandle) -> T) -> T {
        let mut guard = self.worker.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    }

    fn call(&self, ctx: &EvalContext, payload: WirePayload) -> Result<F> {
        let req = WorkerRequest {
            run_id: self.run_id.clone(),
            particle_id: ctx.particle,
            t: ctx.t,
            eval_index: ctx.eval_index,
            payload,
        };
        self.with_worker(|w| w.request(&req))
            .map(F::lit)
            .map_err(|(kind, detail)| Error::Worker {
                kind,
                particle: ctx.particle,
                t: ctx.t,
                detail,
            })
    }
}

impl<F: Real> RewardFunction<F, Vec<F>> for ExternalReward<F> {
    fn score(&self, proxy: &Vec<F>, ctx: &EvalContext, _rng: &mut ChaCha8Rng) -> Result<Scored<F>> {
        let state = proxy.iter().map(|x| x.as_f64()).collect();
        Ok(Scored::plain(self.call(ctx, WirePayload::Raw { state })?))
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

impl<F: Real> RewardFunction<F, Vec<Point<F>>> for ExternalReward<F> {
    fn score(&self, proxy: &Vec<Point<F>>, ctx: &EvalContext, rng: &mut ChaCha8Rng) -> Result<Scored<F>> {
        let pair = refine(proxy, self.temperature, rng)?;
        let tokens = pair.sequence();
        let coords = pair.coords.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect();
        let value = self.call(ctx, WirePayload::Pair { coords, tokens: tokens.clone() })?;
        Ok(Scored {
            value,
            tokens: Some(tokens),
        })
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

/// What the bundled echo worker computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EchoMode {
    /// Always 0.0.
    Zero,
    /// `-|Q - Q*|` over the sent tokens.
    Charge { q_star: i32 },
}

/// Serve the protocol on `input`/`output` until EOF. With `die_after =
/// Some(n)` the worker exits without replying once `n` requests have been
/// answered.
pub fn serve_echo<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    mode: EchoMode,
    die_after: Option<usize>,
) -> io::Result<()> {
    let hello = Handshake {
        protocol: PROTOCOL.into(),
    };
    writeln!(output, "{}", serde_json::to_string(&hello)?)?;
    output.flush()?;
    let mut answered = 0usize;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if die_after.is_some_and(|n| answered >= n) {
            return Ok(());
        }
        let req: WorkerRequest = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                writeln!(output, "{}", serde_json::json!({ "error": e.to_string() }))?;
                output.flush()?;
                continue;
            }
        };
        let reward = match (mode, &req.payload) {
            (EchoMode::Zero, _) => Some(0.0),
            (EchoMode::Charge { q_star }, WirePayload::Pair { tokens, .. }) => tokens
                .chars()
                .map(Token::from_char)
                .collect::<Option<Vec<_>>>()
                .map(|toks| charge_reward_of::<f64>(&toks, q_star)),
            (EchoMode::Charge { .. }, WirePayload::Raw { .. }) => None,
        };
        match reward {
            Some(reward) => {
                let reply = WorkerReply {
                    particle_id: req.particle_id,
                    t: req.t,
                    eval_index: req.eval_index,
                    reward,
                };
                writeln!(output, "{}", serde_json::to_string(&reply)?)?;
            }
            None => writeln!(output, "{}", serde_json::json!({ "error": "unsupported payload" }))?,
        }
        output.flush()?;
        answered += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(tokens: &str) -> WorkerRequest {
        WorkerRequest {
            run_id: "r".into(),
            particle_id: 4,
            t: 7,
            eval_index: 1,
            payload: WirePayload::Pair {
                coords: vec![[0.0, 0.0], [1.0, 0.0]],
                tokens: tokens.into(),
            },
        }
    }

    #[test]
    fn wire_field_names() {
        let json = serde_json::to_value(request("KD")).unwrap();
        for key in ["run_id", "particle_id", "t", "eval_index", "payload"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json["payload"].get("coords").is_some() && json["payload"].get("tokens").is_some());
        let raw = serde_json::to_value(WirePayload::Raw { state: vec![1.5] }).unwrap();
        assert_eq!(raw, serde_json::json!({ "state": [1.5] }));
        let reply = serde_json::to_value(WorkerReply { particle_id: 1, t: 2, eval_index: 3, reward: -0.5 }).unwrap();
        assert_eq!(reply, serde_json::json!({"particle_id":1,"t":2,"eval_index":3,"reward":-0.5}));
    }

    #[test]
    fn echo_loop_in_memory() {
        let input = format!("{}\n{}\n", serde_json::to_string(&request("KKK")).unwrap(), serde_json::to_string(&request("DDG")).unwrap());
        let mut out = Vec::new();
        serve_echo(input.as_bytes(), &mut out, EchoMode::Charge { q_star: -2 }, None).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(serde_json::from_str::<Handshake>(lines[0]).unwrap().protocol, PROTOCOL);
        let r1: WorkerReply = serde_json::from_str(lines[1]).unwrap();
        let r2: WorkerReply = serde_json::from_str(lines[2]).unwrap();
        assert_eq!((r1.reward, r2.reward), (-5.0, 0.0));
        assert_eq!((r1.particle_id, r1.t, r1.eval_index), (4, 7, 1));
    }

    #[test]
    fn echo_dies_after_budget() {
        let line = serde_json::to_string(&request("K")).unwrap();
        let input = format!("{line}\n{line}\n{line}\n");
        let mut out = Vec::new();
        serve_echo(input.as_bytes(), &mut out, EchoMode::Zero, Some(2)).unwrap();
        assert_eq!(std::str::from_utf8(&out).unwrap().lines().count(), 3);
    }

    #[test]
    fn missing_program_is_a_startup_error() {
        let cmd = vec!["/nonexistent/worker-binary".to_string()];
        assert!(matches!(WorkerHandle::spawn(&cmd, DEFAULT_TIMEOUT), Err(Error::WorkerStartup(_))));
    }
}
