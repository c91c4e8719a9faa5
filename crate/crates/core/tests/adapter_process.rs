use std::time::Duration;

use gpc_sense::adapter::{evaluate_batch, EvalMode, EvalRequest, EvaluatorConfig};
use gpc_sense::benchmarks::BenchmarkKind;
use gpc_sense::perturb::Image;
use gpc_sense::{Error, EvaluatorFailure};

const STUB: &str = env!("CARGO_BIN_EXE_gpc-stub-evaluator");

fn config(mode: EvalMode, args: &[&str]) -> EvaluatorConfig {
    let mut command = vec![STUB.to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    EvaluatorConfig {
        command,
        mode,
        n_classes: if mode == EvalMode::Image { Some(2) } else { None },
        timeout: Duration::from_secs(10),
        max_inflight: 8,
    }
}

fn numeric_requests(n: usize) -> Vec<EvalRequest> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            EvalRequest {
                index: i,
                xi: vec![-3.0 + 6.0 * t, 2.0 - 4.0 * t, (7.0 * t).sin()],
                image: None,
            }
        })
        .collect()
}

fn failure_of(e: Error) -> (Option<usize>, EvaluatorFailure, String) {
    match e {
        Error::Evaluator { index, kind, message } => (index, kind, message),
        other => panic!("expected evaluator failure, got {other:?}"),
    }
}

#[test]
fn numeric_loopback_matches_direct_formula() {
    let reqs = numeric_requests(120);
    let records = evaluate_batch(&config(EvalMode::Numeric, &["--function", "ishigami"]), &reqs).unwrap();
    assert_eq!(records.len(), 120);
    for (r, q) in records.iter().zip(&reqs) {
        assert_eq!(r.index, q.index);
        let direct = BenchmarkKind::Ishigami.eval(&q.xi);
        assert!((r.y.unwrap() - direct).abs() <= 1e-12);
    }
}

#[test]
fn out_of_order_responses_are_reordered() {
    let reqs = numeric_requests(500);
    let cfg = EvaluatorConfig {
        max_inflight: 16,
        ..config(EvalMode::Numeric, &["--reverse-chunk", "16"])
    };
    let records = evaluate_batch(&cfg, &reqs).unwrap();
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.index, i);
        assert!((r.y.unwrap() - reqs[i].xi.iter().sum::<f64>()).abs() < 1e-12);
    }
}

#[test]
fn in_flight_window_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("inflight.txt");
    let cfg = EvaluatorConfig {
        max_inflight: 3,
        ..config(
            EvalMode::Numeric,
            &["--hold-ms", "30", "--record-inflight", record.to_str().unwrap()],
        )
    };
    evaluate_batch(&cfg, &numeric_requests(20)).unwrap();
    let seen: usize = std::fs::read_to_string(&record).unwrap().trim().parse().unwrap();
    assert!(seen >= 1 && seen <= 3, "child saw {seen} requests at once");
}

#[test]
fn image_mode_echoes_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let reqs: Vec<EvalRequest> = (0..5)
        .map(|i| {
            let path = dir.path().join(format!("sample_{i}.png"));
            Image::filled(4, 4, 1, (i * 60) as u8).unwrap().write_png(&path).unwrap();
            EvalRequest { index: i, xi: vec![i as f64], image: Some(path) }
        })
        .collect();
    let fixed = evaluate_batch(&config(EvalMode::Image, &["--probs", "0.25,0.75"]), &reqs).unwrap();
    assert!(fixed.iter().all(|r| r.probs.as_deref() == Some(&[0.25, 0.75][..])));

    let weighted = evaluate_batch(&config(EvalMode::Image, &["--mean-intensity", "4"]), &reqs).unwrap();
    let p_black = weighted[0].probs.as_ref().unwrap()[1];
    assert!((p_black - 1.0 / (1.0 + 4f64.exp())).abs() < 1e-12);
}

#[test]
fn mode_is_passed_through_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    Image::filled(2, 2, 1, 0).unwrap().write_png(&path).unwrap();
    // no --mode flag: the stub picks image mode from the environment only
    let reqs = vec![EvalRequest { index: 0, xi: vec![0.0], image: Some(path) }];
    let r = evaluate_batch(&config(EvalMode::Image, &["--probs", "0.6,0.4"]), &reqs).unwrap();
    assert_eq!(r[0].probs.as_deref(), Some(&[0.6, 0.4][..]));
}

#[test]
fn bad_probability_sum_names_the_request() {
    let dir = tempfile::tempdir().unwrap();
    let reqs: Vec<EvalRequest> = (0..4)
        .map(|i| {
            let path = dir.path().join(format!("s{i}.png"));
            Image::filled(2, 2, 1, 9).unwrap().write_png(&path).unwrap();
            EvalRequest { index: i, xi: vec![], image: Some(path) }
        })
        .collect();
    let e = evaluate_batch(&config(EvalMode::Image, &["--probs", "0.5,0.5", "--bad-sum-at", "2"]), &reqs).unwrap_err();
    let (index, kind, _) = failure_of(e);
    assert_eq!(index, Some(2));
    assert_eq!(kind, EvaluatorFailure::InvalidProbabilities);
}

#[test]
fn malformed_response_names_the_request() {
    let e = evaluate_batch(&config(EvalMode::Numeric, &["--malformed-at", "7"]), &numeric_requests(10)).unwrap_err();
    let (index, kind, _) = failure_of(e);
    assert_eq!(index, Some(7));
    assert_eq!(kind, EvaluatorFailure::MalformedResponse);
}

#[test]
fn reported_error_is_surfaced() {
    let e = evaluate_batch(&config(EvalMode::Numeric, &["--error-at", "3"]), &numeric_requests(10)).unwrap_err();
    let (index, kind, message) = failure_of(e);
    assert_eq!(index, Some(3));
    assert_eq!(kind, EvaluatorFailure::ReportedError);
    assert!(message.contains("injected failure"));
}

#[test]
fn duplicate_response_is_rejected() {
    let e = evaluate_batch(&config(EvalMode::Numeric, &["--duplicate-at", "4"]), &numeric_requests(10)).unwrap_err();
    let (index, kind, _) = failure_of(e);
    assert_eq!(index, Some(4));
    assert_eq!(kind, EvaluatorFailure::DuplicateId);
}

#[test]
fn child_exit_is_reported() {
    let e = evaluate_batch(&config(EvalMode::Numeric, &["--exit-at", "5"]), &numeric_requests(10)).unwrap_err();
    let (index, kind, _) = failure_of(e);
    assert_eq!(kind, EvaluatorFailure::ChildExited);
    assert_eq!(index, Some(5));
}

#[test]
fn silent_child_times_out() {
    let cfg = EvaluatorConfig {
        timeout: Duration::from_millis(300),
        max_inflight: 1,
        ..config(EvalMode::Numeric, &["--silent-at", "2"])
    };
    let start = std::time::Instant::now();
    let e = evaluate_batch(&cfg, &numeric_requests(6)).unwrap_err();
    let (index, kind, _) = failure_of(e);
    assert_eq!(kind, EvaluatorFailure::Timeout);
    assert_eq!(index, Some(2));
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn missing_executable_fails_to_spawn() {
    let cfg = EvaluatorConfig {
        command: vec!["/nonexistent/evaluator".into()],
        ..config(EvalMode::Numeric, &[])
    };
    let (_, kind, _) = failure_of(evaluate_batch(&cfg, &numeric_requests(1)).unwrap_err());
    assert_eq!(kind, EvaluatorFailure::Spawn);
}
