//! Client for black-box models served over line-delimited JSON.
//!
//! The evaluator is a child process started with `GPC_SENSE_MODE` set to
//! `numeric` or `image`. Requests go to its stdin one per line:
//!
//! ```text
//! {"id":0,"xi":[0.5,-1.25]}        numeric mode
//! {"id":0,"path":"images/x.png"}   image mode
//! ```
//!
//! and responses come back on stdout, in any order:
//!
//! ```text
//! {"id":0,"y":1.5}
//! {"id":0,"probs":[0.1,0.9]}
//! {"id":0,"error":"message"}
//! ```
//!
//! At most `max_inflight` requests are unanswered at any time.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, EvaluatorFailure, Result};
use crate::perturb::Image;
use crate::surrogate::{logit, LinkSpec};

/// Environment variable telling the child which protocol mode to speak.
pub const MODE_ENV: &str = "GPC_SENSE_MODE";

/// Tolerance on the sum of a returned probability vector.
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Numeric,
    Image,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Numeric => "numeric",
            Self::Image => "image",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorConfig {
    /// Executable followed by its arguments.
    pub command: Vec<String>,
    pub mode: EvalMode,
    /// Expected probability vector length in image mode.
    pub n_classes: Option<usize>,
    /// Per-request deadline, measured from when the request was written.
    pub timeout: Duration,
    pub max_inflight: usize,
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() {
            return Err(Error::invalid("evaluator command is empty"));
        }
        if self.timeout.is_zero() {
            return Err(Error::invalid("evaluator timeout must be positive"));
        }
        if self.max_inflight == 0 {
            return Err(Error::invalid("max_inflight must be at least 1"));
        }
        if self.n_classes == Some(0) {
            return Err(Error::invalid("n_classes must be positive"));
        }
        Ok(())
    }
}

/// One evaluation to perform. `image` must be set in image mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub index: usize,
    pub xi: Vec<f64>,
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub xi_phys: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_value: Option<f64>,
}

impl EvalRecord {
    /// Value the surrogate is fitted to: the logit in image mode, `y` otherwise.
    pub fn target(&self) -> Option<f64> {
        self.logit_value.or(self.y)
    }
}

/// Anything that turns requests into records, in request order.
pub trait Evaluator {
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<EvalRecord>>;
}

/// In-process numeric evaluator wrapping a closure.
pub struct FnEvaluator<F>(pub F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: FnMut(&[f64]) -> f64,
{
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<EvalRecord>> {
        check_unique(requests)?;
        let mut records: Vec<EvalRecord> = requests
            .iter()
            .map(|r| EvalRecord {
                index: r.index,
                xi_phys: r.xi.clone(),
                probs: None,
                y: Some((self.0)(&r.xi)),
                target_class: None,
                logit_value: None,
            })
            .collect();
        records.sort_by_key(|r| r.index);
        Ok(records)
    }
}

/// In-process image evaluator: loads each request's PNG and returns the
/// closure's class probabilities, checked like a child's response.
pub struct ImageFnEvaluator<F> {
    pub classify: F,
    pub n_classes: Option<usize>,
}

impl<F> Evaluator for ImageFnEvaluator<F>
where
    F: FnMut(&Image) -> Vec<f64>,
{
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<EvalRecord>> {
        check_unique(requests)?;
        let mut records = Vec::with_capacity(requests.len());
        for r in requests {
            let path = r.image.as_ref().ok_or_else(|| {
                Error::invalid(format!("request {} has no image path", r.index))
            })?;
            let img = Image::read_png(path)?;
            let probs = (self.classify)(&img);
            check_probs(r.index, &probs, self.n_classes)?;
            records.push(EvalRecord {
                index: r.index,
                xi_phys: r.xi.clone(),
                probs: Some(probs),
                y: None,
                target_class: None,
                logit_value: None,
            });
        }
        records.sort_by_key(|r| r.index);
        Ok(records)
    }
}

/// Evaluator speaking the line protocol with a child process.
pub struct ProcessEvaluator {
    config: EvaluatorConfig,
}

impl ProcessEvaluator {
    pub fn new(config: EvaluatorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Evaluator for ProcessEvaluator {
    fn evaluate(&mut self, requests: &[EvalRequest]) -> Result<Vec<EvalRecord>> {
        evaluate_batch(&self.config, requests)
    }
}

fn failure(index: Option<usize>, kind: EvaluatorFailure, message: impl Into<String>) -> Error {
    Error::Evaluator {
        index,
        kind,
        message: message.into(),
    }
}

fn check_unique(requests: &[EvalRequest]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in requests {
        if !seen.insert(r.index) {
            return Err(failure(
                Some(r.index),
                EvaluatorFailure::DuplicateId,
                "request index used twice",
            ));
        }
    }
    Ok(())
}

enum ReaderMsg {
    Line(String),
    Eof,
    Failed(String),
}

struct ChildGuard {
    child: Child,
    stderr: Arc<Mutex<Vec<u8>>>,
}

impl ChildGuard {
    fn stderr_tail(&self) -> String {
        let buf = self.stderr.lock().map(|b| b.clone()).unwrap_or_default();
        let text = String::from_utf8_lossy(&buf);
        let tail: Vec<&str> = text.lines().rev().take(5).collect();
        tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
    }

    fn finish(mut self, grace: Duration) {
        let deadline = Instant::now() + grace;
        loop {
            match self.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                _ => break,
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ChildGuard {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

fn spawn(cfg: &EvaluatorConfig) -> Result<(ChildGuard, ChildStdin, Receiver<ReaderMsg>)> {
    let mut child = Command::new(&cfg.command[0])
        .args(&cfg.command[1..])
        .env(MODE_ENV, cfg.mode.as_str())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| failure(None, EvaluatorFailure::Spawn, format!("{}: {e}", cfg.command[0])))?;
    let stdin = child.stdin.take().expect("stdin was piped");
    let stdout = child.stdout.take().expect("stdout was piped");
    let mut stderr = child.stderr.take().expect("stderr was piped");

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let reader = BufReader::new(stdout);
        for line in reader.lines() {
            let msg = match line {
                Ok(l) => ReaderMsg::Line(l),
                Err(e) => ReaderMsg::Failed(e.to_string()),
            };
            let stop = matches!(msg, ReaderMsg::Failed(_));
            if tx.send(msg).is_err() || stop {
                return;
            }
        }
        let _ = tx.send(ReaderMsg::Eof);
    });

    let stderr_buf = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&stderr_buf);
    thread::spawn(move || {
        let mut chunk = [0u8; 4096];
        while let Ok(n) = stderr.read(&mut chunk) {
            if n == 0 {
                break;
            }
            if let Ok(mut b) = sink.lock() {
                b.extend_from_slice(&chunk[..n]);
            }
        }
    });

    Ok((
        ChildGuard {
            child,
            stderr: stderr_buf,
        },
        stdin,
        rx,
    ))
}

fn request_line(mode: EvalMode, r: &EvalRequest) -> Result<String> {
    #[derive(Serialize)]
    struct NumericReq<'a> {
        id: usize,
        xi: &'a [f64],
    }
    #[derive(Serialize)]
    struct ImageReq<'a> {
        id: usize,
        path: &'a str,
    }
    let line = match mode {
        EvalMode::Numeric => serde_json::to_string(&NumericReq {
            id: r.index,
            xi: &r.xi,
        })?,
        EvalMode::Image => {
            let path = r.image.as_ref().ok_or_else(|| {
                Error::invalid(format!("image-mode request {} has no image path", r.index))
            })?;
            let path = path.to_str().ok_or_else(|| {
                Error::invalid(format!("image path {} is not valid UTF-8", path.display()))
            })?;
            serde_json::to_string(&ImageReq { id: r.index, path })?
        }
    };
    Ok(line)
}

/// Parsed response body before matching against the outstanding requests.
enum Answer {
    Y(f64),
    Probs(Vec<f64>),
}

fn parse_response(line: &str, cfg: &EvaluatorConfig) -> Result<(usize, Answer)> {
    let value: Value = serde_json::from_str(line).map_err(|e| {
        failure(
            None,
            EvaluatorFailure::MalformedResponse,
            format!("not JSON ({e}): {line}"),
        )
    })?;
    let id = value
        .get("id")
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| {
            failure(
                None,
                EvaluatorFailure::MalformedResponse,
                format!("response without integer id: {line}"),
            )
        })?;
    let malformed = |what: &str| failure(Some(id), EvaluatorFailure::MalformedResponse, format!("{what}: {line}"));
    if let Some(msg) = value.get("error") {
        let msg = msg.as_str().map_or_else(|| msg.to_string(), str::to_string);
        return Err(failure(Some(id), EvaluatorFailure::ReportedError, msg));
    }
    match cfg.mode {
        EvalMode::Numeric => {
            let y = value
                .get("y")
                .and_then(Value::as_f64)
                .ok_or_else(|| malformed("missing numeric `y`"))?;
            if !y.is_finite() {
                return Err(malformed("non-finite `y`"));
            }
            Ok((id, Answer::Y(y)))
        }
        EvalMode::Image => {
            let probs = value
                .get("probs")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed("missing `probs` array"))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| malformed("non-numeric probability")))
                .collect::<Result<Vec<f64>>>()?;
            check_probs(id, &probs, cfg.n_classes)?;
            Ok((id, Answer::Probs(probs)))
        }
    }
}

fn check_probs(id: usize, probs: &[f64], n_classes: Option<usize>) -> Result<()> {
    let bad = |msg: String| failure(Some(id), EvaluatorFailure::InvalidProbabilities, msg);
    if probs.is_empty() {
        return Err(bad("empty probability vector".into()));
    }
    if let Some(k) = n_classes {
        if probs.len() != k {
            return Err(bad(format!("expected {k} probabilities, got {}", probs.len())));
        }
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(bad(format!("probability {p} outside [0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(bad(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

/// Sends every request through a freshly started evaluator process and
/// returns one record per request, ordered by request index.
pub fn evaluate_batch(cfg: &EvaluatorConfig, requests: &[EvalRequest]) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    check_unique(requests)?;
    let lines = requests
        .iter()
        .map(|r| request_line(cfg.mode, r))
        .collect::<Result<Vec<_>>>()?;
    if requests.is_empty() {
        return Ok(Vec::new());
    }

    let (guard, stdin, rx) = spawn(cfg)?;
    let position: HashMap<usize, usize> = requests.iter().enumerate().map(|(p, r)| (r.index, p)).collect();
    let with_stderr = |e: Error, guard: &ChildGuard| match e {
        Error::Evaluator { index, kind, message } => {
            let tail = guard.stderr_tail();
            let message = if tail.is_empty() {
                message
            } else {
                format!("{message} [stderr: {tail}]")
            };
            failure(index, kind, message)
        }
        other => other,
    };

    match drive(cfg, requests, &lines, &position, stdin, &rx) {
        Ok(answers) => {
            guard.finish(Duration::from_secs(2));
            let mut records: Vec<EvalRecord> = requests
                .iter()
                .zip(answers)
                .map(|(r, a)| {
                    let (probs, y) = match a {
                        Answer::Y(y) => (None, Some(y)),
                        Answer::Probs(p) => (Some(p), None),
                    };
                    EvalRecord {
                        index: r.index,
                        xi_phys: r.xi.clone(),
                        probs,
                        y,
                        target_class: None,
                        logit_value: None,
                    }
                })
                .collect();
            records.sort_by_key(|r| r.index);
            Ok(records)
        }
        Err(e) => {
            // give the reader a moment so stderr from a crashing child is captured
            thread::sleep(Duration::from_millis(20));
            Err(with_stderr(e, &guard))
        }
    }
}

fn drive(
    cfg: &EvaluatorConfig,
    requests: &[EvalRequest],
    lines: &[String],
    position: &HashMap<usize, usize>,
    stdin: ChildStdin,
    rx: &Receiver<ReaderMsg>,
) -> Result<Vec<Answer>> {
    let n = requests.len();
    let mut stdin = Some(stdin);
    let mut answers: Vec<Option<Answer>> = (0..n).map(|_| None).collect();
    let mut pending: HashMap<usize, Instant> = HashMap::new();
    let mut next = 0;

    loop {
        while pending.len() < cfg.max_inflight && next < n {
            let r = &requests[next];
            let pipe = stdin.as_mut().expect("stdin open while requests remain");
            let sent = writeln!(pipe, "{}", lines[next]).and_then(|_| pipe.flush());
            if let Err(e) = sent {
                return Err(failure(
                    Some(r.index),
                    EvaluatorFailure::ChildExited,
                    format!("writing request failed: {e}"),
                ));
            }
            pending.insert(r.index, Instant::now());
            next += 1;
        }
        if next == n {
            // EOF lets the child flush anything it buffers
            stdin.take();
        }
        if pending.is_empty() {
            break;
        }

        let (&oldest, &sent_at) = pending
            .iter()
            .min_by_key(|(&idx, &t)| (t, idx))
            .expect("pending is non-empty");
        let wait = (sent_at + cfg.timeout).saturating_duration_since(Instant::now());
        match rx.recv_timeout(wait) {
            Ok(ReaderMsg::Line(line)) => {
                if line.trim().is_empty() {
                    continue;
                }
                let (id, answer) = parse_response(&line, cfg)?;
                let Some(&pos) = position.get(&id) else {
                    return Err(failure(Some(id), EvaluatorFailure::UnknownId, format!("no request with id {id}")));
                };
                if pending.remove(&id).is_none() {
                    let kind = if answers[pos].is_some() {
                        EvaluatorFailure::DuplicateId
                    } else {
                        EvaluatorFailure::UnknownId
                    };
                    return Err(failure(Some(id), kind, format!("unexpected response for id {id}")));
                }
                answers[pos] = Some(answer);
            }
            Ok(ReaderMsg::Eof) | Err(RecvTimeoutError::Disconnected) => {
                let first = pending.keys().min().copied();
                return Err(failure(
                    first,
                    EvaluatorFailure::ChildExited,
                    format!("{} request(s) unanswered", pending.len()),
                ));
            }
            Ok(ReaderMsg::Failed(e)) => {
                return Err(failure(Some(oldest), EvaluatorFailure::Io, e));
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(failure(
                    Some(oldest),
                    EvaluatorFailure::Timeout,
                    format!("no response within {:?}", cfg.timeout),
                ));
            }
        }
    }
    Ok(answers.into_iter().map(|a| a.expect("every request answered")).collect())
}

/// Fills `target_class` and `logit_value` from each record's probabilities.
pub fn attach_logits(records: &mut [EvalRecord], target_class: usize, link: &LinkSpec) -> Result<()> {
    for r in records.iter_mut() {
        let probs = r.probs.as_ref().ok_or_else(|| {
            Error::invalid(format!("record {} has no probabilities", r.index))
        })?;
        let p = *probs.get(target_class).ok_or_else(|| {
            Error::invalid(format!(
                "target class {target_class} out of range for {} classes (record {})",
                probs.len(),
                r.index
            ))
        })?;
        r.logit_value = Some(logit(p, link)?);
        r.target_class = Some(target_class);
    }
    Ok(())
}
