//! Scriptable evaluator speaking the line protocol, for tests and demos.
//!
//! ```text
//! gpc-stub-evaluator [--mode numeric|image] [--function ishigami|gfunction|sum]
//!                    [--probs 0.3,0.7] [--mean-intensity W]
//!                    [--reverse-chunk K] [--hold-ms MS] [--record-inflight PATH]
//!                    [--bad-sum-at ID] [--malformed-at ID] [--error-at ID]
//!                    [--duplicate-at ID] [--exit-at ID] [--silent-at ID]
//! ```
//!
//! The mode defaults to `GPC_SENSE_MODE`. Numeric mode evaluates the named
//! function; image mode answers fixed `--probs`, or with `--mean-intensity W`
//! a two-class softmax where `p1 = logistic(W (2m - 1))` and `m` is the mean
//! intensity of the PNG scaled to `[0, 1]`.

use std::io::{self, BufRead, Write};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use gpc_sense::benchmarks::BenchmarkKind;
use gpc_sense::perturb::Image;
use gpc_sense::surrogate::logistic;
use serde_json::{json, Value};

#[derive(Default)]
struct Options {
    image_mode: bool,
    function: Option<String>,
    probs: Option<Vec<f64>>,
    mean_intensity: Option<f64>,
    reverse_chunk: usize,
    hold_ms: Option<u64>,
    record_inflight: Option<String>,
    bad_sum_at: Option<u64>,
    malformed_at: Option<u64>,
    error_at: Option<u64>,
    duplicate_at: Option<u64>,
    exit_at: Option<u64>,
    silent_at: Option<u64>,
}

fn parse_args() -> Result<Options, String> {
    let mut o = Options {
        image_mode: std::env::var("GPC_SENSE_MODE").is_ok_and(|m| m == "image"),
        ..Default::default()
    };
    let mut args = std::env::args().skip(1);
    while let Some(flag) = args.next() {
        let mut value = || args.next().ok_or_else(|| format!("{flag} needs a value"));
        let id = |v: String| v.parse::<u64>().map_err(|e| format!("bad id `{v}`: {e}"));
        match flag.as_str() {
            "--mode" => o.image_mode = value()? == "image",
            "--function" => o.function = Some(value()?),
            "--probs" => {
                let v = value()?;
                let parsed = v
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad probability `{s}`: {e}")))
                    .collect::<Result<Vec<_>, _>>()?;
                o.probs = Some(parsed);
            }
            "--mean-intensity" => {
                o.mean_intensity = Some(value()?.parse().map_err(|e| format!("bad weight: {e}"))?)
            }
            "--reverse-chunk" => o.reverse_chunk = value()?.parse().map_err(|e| format!("bad chunk: {e}"))?,
            "--hold-ms" => o.hold_ms = Some(value()?.parse().map_err(|e| format!("bad hold: {e}"))?),
            "--record-inflight" => o.record_inflight = Some(value()?),
            "--bad-sum-at" => o.bad_sum_at = Some(id(value()?)?),
            "--malformed-at" => o.malformed_at = Some(id(value()?)?),
            "--error-at" => o.error_at = Some(id(value()?)?),
            "--duplicate-at" => o.duplicate_at = Some(id(value()?)?),
            "--exit-at" => o.exit_at = Some(id(value()?)?),
            "--silent-at" => o.silent_at = Some(id(value()?)?),
            other => return Err(format!("unknown flag {other}")),
        }
    }
    Ok(o)
}

fn answer(o: &Options, request: &Value) -> Result<Vec<String>, String> {
    let id = request
        .get("id")
        .and_then(Value::as_u64)
        .ok_or("request without id")?;
    if o.exit_at == Some(id) {
        std::process::exit(7);
    }
    if o.silent_at == Some(id) {
        return Ok(vec![]);
    }
    if o.error_at == Some(id) {
        return Ok(vec![json!({"id": id, "error": "injected failure"}).to_string()]);
    }
    if o.malformed_at == Some(id) {
        return Ok(vec![json!({"id": id, "value": "oops"}).to_string()]);
    }
    let body = if o.image_mode {
        let probs = if o.bad_sum_at == Some(id) {
            vec![0.5, 0.3]
        } else if let Some(w) = o.mean_intensity {
            let path = request.get("path").and_then(Value::as_str).ok_or("missing path")?;
            let img = Image::read_png(path.as_ref()).map_err(|e| e.to_string())?;
            let px = img.pixels();
            let m = px.iter().map(|&p| p as f64).sum::<f64>() / (px.len() as f64 * 255.0);
            let p1 = logistic(w * (2.0 * m - 1.0));
            vec![1.0 - p1, p1]
        } else {
            o.probs.clone().unwrap_or_else(|| vec![1.0, 0.0])
        };
        json!({"id": id, "probs": probs})
    } else {
        let xi: Vec<f64> = request
            .get("xi")
            .and_then(Value::as_array)
            .ok_or("missing xi")?
            .iter()
            .map(|v| v.as_f64().ok_or("non-numeric xi"))
            .collect::<Result<_, _>>()?;
        let y = match o.function.as_deref() {
            Some("sum") | None => xi.iter().sum(),
            Some(name) => name.parse::<BenchmarkKind>().map_err(|e| e.to_string())?.eval(&xi),
        };
        json!({"id": id, "y": y})
    };
    let mut lines = vec![body.to_string()];
    if o.duplicate_at == Some(id) {
        lines.push(body.to_string());
    }
    Ok(lines)
}

fn main() {
    let opts = match parse_args() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("gpc-stub-evaluator: {e}");
            std::process::exit(2);
        }
    };

    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in io::stdin().lock().lines().map_while(Result::ok) {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut buffered: Vec<Value> = Vec::new();
    let mut max_inflight = 0usize;
    let hold = opts.hold_ms.map(Duration::from_millis);

    let flush = |buffered: &mut Vec<Value>, out: &mut io::StdoutLock<'_>| {
        if opts.reverse_chunk > 0 {
            buffered.reverse();
        }
        for req in buffered.drain(..) {
            match answer(&opts, &req) {
                Ok(lines) => {
                    for l in lines {
                        let _ = writeln!(out, "{l}");
                    }
                }
                Err(e) => eprintln!("gpc-stub-evaluator: {e}"),
            }
        }
        let _ = out.flush();
    };

    loop {
        let next = match hold {
            Some(h) => match rx.recv_timeout(h) {
                Ok(l) => Some(l),
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    flush(&mut buffered, &mut out);
                    continue;
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => None,
            },
            None => rx.recv().ok(),
        };
        let Some(line) = next else { break };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(&line) {
            Ok(v) => buffered.push(v),
            Err(e) => {
                eprintln!("gpc-stub-evaluator: bad request: {e}");
                continue;
            }
        }
        max_inflight = max_inflight.max(buffered.len());
        let chunk_full = opts.reverse_chunk > 0 && buffered.len() >= opts.reverse_chunk;
        if chunk_full || (opts.reverse_chunk == 0 && hold.is_none()) {
            flush(&mut buffered, &mut out);
        }
    }
    flush(&mut buffered, &mut out);
    if let Some(path) = &opts.record_inflight {
        let _ = std::fs::write(path, max_inflight.to_string());
    }
}
