//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use ensemblex::agents::{aggregate_context, count_tokens, EvidenceItem, ExecutorTrace, ToolObservation};
use ensemblex::domain::ArgValue;
use ensemblex::postprocess::{parse_golden, run_golden, GOLDEN_CORPUS};
use ensemblex::simkit::{
    exact_accuracy, pipeline_accuracy, sc_curve, EstimateMethod, SimAnalystBackend, SimExecutorBackend,
    SimParams, TruthTable,
};
use ensemblex::{
    deduplicate, plurality_vote, AnswerLabel, Calibrator, CanonicalToolCall, ContextBudget, Decision,
    Orchestrator, Question, ToolCall, TopologyConfig, TopologyMode,
};
use ensemblex_cli::config::RunConfig;
use ensemblex_cli::runner::{run, RunOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn letter(i: usize) -> AnswerLabel {
    AnswerLabel::Choice((b'A' + i as u8) as char)
}

// ---------------------------------------------------------------- 1

/// Mode of the letter ballots, smallest letter on ties, ABSTAIN if none.
fn vote_oracle(ballots: &[AnswerLabel]) -> (AnswerLabel, usize) {
    let mut counts = [0usize; 4];
    let mut abstain = 0;
    for b in ballots {
        match b.letter() {
            Some(c) => counts[(c as u8 - b'A') as usize] += 1,
            None => abstain += 1,
        }
    }
    let best = *counts.iter().max().unwrap();
    if best == 0 {
        return (AnswerLabel::Abstain, abstain);
    }
    (letter(counts.iter().position(|&c| c == best).unwrap()), abstain)
}

fn multisets(max_len: usize, symbols: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, symbols: usize, left: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if !cur.is_empty() {
            visit(cur);
        }
        if left == 0 {
            return;
        }
        for s in start..symbols {
            cur.push(s);
            rec(s, symbols, left - 1, cur, visit);
            cur.pop();
        }
    }
    rec(0, symbols, max_len, &mut Vec::new(), visit);
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    // Symbol 4 is ABSTAIN; the first pass uses letters only.
    for symbols in [4, 5] {
        multisets(6, symbols, &mut |ms| {
            let labels: Vec<AnswerLabel> = ms
                .iter()
                .map(|&s| if s == 4 { AnswerLabel::Abstain } else { letter(s) })
                .collect();
            let expected = vote_oracle(&labels);
            let mut orders = vec![labels.clone()];
            orders.push(labels.iter().rev().copied().collect());
            let mut rotated = labels.clone();
            rotated.rotate_left(labels.len() / 2);
            orders.push(rotated);
            for order in orders {
                let got = plurality_vote(&order).unwrap();
                checked += 1;
                if (got.winner, got.abstentions) != expected || got.ballots() != order.len() {
                    mismatches.push(format!("{order:?}: got {}, expected {}", got.winner, expected.0));
                }
            }
        });
    }
    let elapsed = start.elapsed();
    ensure(mismatches.is_empty(), || format!("{} mismatches, first {}", mismatches.len(), mismatches[0]))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("{checked} ballot orderings, 0 mismatches, {elapsed:?}"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let ns = [1, 3, 5, 10, 15, 20, 40, 60];
    let curve = sc_curve(&ns, 0.7, 4, 100_000, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let acc: BTreeMap<usize, f64> = curve.points.iter().map(|p| (p.n, p.estimate.value)).collect();
    for p in &curve.points {
        match p.estimate.method {
            EstimateMethod::Exact => ensure(p.n <= 9, || format!("n={} should be sampled", p.n))?,
            EstimateMethod::MonteCarlo => ensure(
                p.estimate.trials >= 100_000 && p.estimate.stderr.is_finite() && p.estimate.stderr >= 0.0,
                || format!("n={} has {} trials, stderr {}", p.n, p.estimate.trials, p.estimate.stderr),
            )?,
        }
    }
    ensure((acc[&1] - 0.7).abs() < 1e-12, || format!("acc(1) = {}", acc[&1]))?;
    for w in curve.points.windows(2) {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        let slack = 4.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        ensure(b.value >= a.value - slack, || {
            format!("acc({}) = {} drops below acc({}) = {}", w[1].n, b.value, w[0].n, a.value)
        })?;
    }
    let early = acc[&15] - acc[&1];
    let late = acc[&60] - acc[&20];
    ensure(early > late, || format!("gain 1->15 {early:.4} not above gain 20->60 {late:.4}"))?;
    within(elapsed, Duration::from_secs(30))?;
    let row: Vec<String> = curve
        .points
        .iter()
        .map(|p| format!("{}:{:.4}±{:.4}", p.n, p.estimate.value, p.estimate.stderr))
        .collect();
    Ok(format!("{} | gains {early:.4} > {late:.4}, {elapsed:?}", row.join(" ")))
}

// ---------------------------------------------------------------- 3

fn sequences(len: usize, symbols: usize, visit: &mut impl FnMut(&[usize])) {
    let mut seq = vec![0; len];
    loop {
        visit(&seq);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            seq[i] += 1;
            if seq[i] < symbols {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

/// Accuracy by enumerating every evidence draw and ballot sequence.
fn fusion_oracle(mode: TopologyMode, n1: usize, n2: usize, k: usize, p: &SimParams) -> f64 {
    let m = p.options;
    let items = p.distractors + 1;
    let runs = match mode {
        TopologyMode::GlobalPooling => n1 * n2,
        TopologyMode::StratifiedEnsemble => n1,
    };
    let draw = |i: usize| if i == 0 { p.q } else { (1.0 - p.q) / p.distractors as f64 };
    let mut kept = 0.0;
    sequences(runs, items, &mut |seq| {
        let mut order: Vec<(usize, usize)> = Vec::new();
        for &item in seq {
            match order.iter_mut().find(|(i, _)| *i == item) {
                Some(e) => e.1 += 1,
                None => order.push((item, 1)),
            }
        }
        order.sort_by(|a, b| b.1.cmp(&a.1));
        if order.iter().take(k).any(|(i, _)| *i == 0) {
            kept += seq.iter().map(|&i| draw(i)).product::<f64>();
        }
    });
    let vote = |accs: &[f64]| {
        // Truth is option 0 without loss of generality.
        let mut win = 0.0;
        sequences(accs.len(), m, &mut |ballots| {
            let w: f64 = ballots
                .iter()
                .zip(accs)
                .map(|(&b, &a)| if b == 0 { a } else { (1.0 - a) / (m - 1) as f64 })
                .product();
            let mut counts = vec![0; m];
            ballots.iter().for_each(|&b| counts[b] += 1);
            let top = *counts.iter().max().unwrap();
            let leaders = counts.iter().filter(|&&c| c == top).count();
            if counts[0] == top {
                // Truth position is uniform, so it wins a tie with 1/leaders.
                win += w / leaders as f64;
            }
        });
        win
    };
    match mode {
        TopologyMode::GlobalPooling => kept * vote(&vec![p.a_with; n2]) + (1.0 - kept) * vote(&vec![p.a_without; n2]),
        TopologyMode::StratifiedEnsemble => vote(&vec![kept * p.a_with + (1.0 - kept) * p.a_without; n2]),
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let params = SimParams::default();
    ensure(
        (params.options, params.distractors, params.q, params.a_with, params.a_without) == (4, 2, 0.2, 0.95, 0.25),
        || "unexpected default simulation parameters".into(),
    )?;
    let pooled = TopologyConfig::new(TopologyMode::GlobalPooling, 6, 1).with_k(1);
    let strat = TopologyConfig::new(TopologyMode::StratifiedEnsemble, 2, 3).with_k(1);
    ensure(pooled.n_total() == 6 && strat.n_total() == 6, || "budgets differ".into())?;

    let a = exact_accuracy(&pooled, &params).map_err(|e| e.to_string())?.value;
    let b = exact_accuracy(&strat, &params).map_err(|e| e.to_string())?.value;
    let oa = fusion_oracle(pooled.mode, 6, 1, 1, &params);
    let ob = fusion_oracle(strat.mode, 2, 3, 1, &params);
    ensure((a - oa).abs() < 1e-12 && (b - ob).abs() < 1e-12, || {
        format!("exact ({a}, {b}) disagrees with the oracle ({oa}, {ob})")
    })?;
    ensure(b > a, || format!("stratified {b} is not above pooled {a}"))?;

    let rt = runtime();
    let mut report = Vec::new();
    for (cfg, exact, seed) in [(&pooled, a, 11), (&strat, b, 12)] {
        let p = SimParams { seed, ..params };
        let est = rt
            .block_on(pipeline_accuracy(cfg, &p, 10_000, 256))
            .map_err(|e| e.to_string())?;
        ensure((est.value - exact).abs() <= 4.0 * est.stderr, || {
            format!("{}: pipeline {} vs exact {exact} (stderr {})", cfg.mode.short_name(), est.value, est.stderr)
        })?;
        report.push(format!("{} {:.4}±{:.4}", cfg.mode.short_name(), est.value, est.stderr));
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!(
        "exact pooled {a:.6} < stratified {b:.6} (margin {:.6}); pipeline {}; {elapsed:?}",
        b - a,
        report.join(", ")
    ))
}

// ---------------------------------------------------------------- 4

fn normalized(mut decisions: Vec<Decision>) -> Vec<Decision> {
    for d in &mut decisions {
        d.mode = TopologyMode::GlobalPooling;
    }
    decisions
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for a in [0.0, 0.25, 0.6, 0.95, 1.0] {
        for q in [0.0, 0.2, 0.7] {
            for (n1, n2, k) in [(2, 3, 1), (6, 1, 1), (3, 3, 2), (1, 5, 10), (4, 2, 3)] {
                let p = SimParams {
                    q,
                    a_with: a,
                    a_without: a,
                    ..SimParams::default()
                };
                let pooled = TopologyConfig::new(TopologyMode::GlobalPooling, n1, n2).with_k(k);
                let strat = TopologyConfig::new(TopologyMode::StratifiedEnsemble, n1, n2).with_k(k);
                let x = exact_accuracy(&pooled, &p).map_err(|e| e.to_string())?.value;
                let y = exact_accuracy(&strat, &p).map_err(|e| e.to_string())?.value;
                worst = worst.max((x - y).abs());
                pairs += 1;
            }
        }
    }
    ensure(worst < 1e-12, || format!("exact accuracies differ by {worst:e}"))?;

    // n2 = 1: both modes must produce the same decisions and submission.
    let rt = runtime();
    let params = SimParams::default();
    let questions = ensemblex::simkit::simulated_questions(300, &params);
    let run_mode = |mode| {
        let truth = Arc::new(TruthTable::new(5));
        let orch = Orchestrator::new(
            Arc::new(SimExecutorBackend { params, truth: truth.clone() }),
            Arc::new(SimAnalystBackend { params, truth }),
            Arc::new(Calibrator::default()),
            5,
        );
        let cfg = TopologyConfig::new(mode, 4, 1).with_k(2);
        rt.block_on(orch.run_batch(&questions, &cfg, 32)).map_err(|e| e.to_string())
    };
    let pooled = normalized(run_mode(TopologyMode::GlobalPooling)?);
    let strat = normalized(run_mode(TopologyMode::StratifiedEnsemble)?);
    ensure(pooled == strat, || "n2=1 decisions differ between modes".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for mode in [TopologyMode::GlobalPooling, TopologyMode::StratifiedEnsemble] {
        let mut cfg = RunConfig::load(&data("simulated.toml")).map_err(|e| e.to_string())?;
        cfg.topology.mode = mode;
        cfg.topology.n1 = 6;
        cfg.topology.n2 = 1;
        let out = dir.path().join(format!("{}.csv", mode.short_name()));
        cfg.out = Some(out.clone());
        rt.block_on(run(&cfg, &RunOptions::default(), None)).map_err(|e| e.to_string())?;
        files.push(std::fs::read(out).map_err(|e| e.to_string())?);
    }
    ensure(files[0] == files[1], || "n2=1 submissions differ between modes".into())?;
    Ok(format!(
        "{pairs} parameter pairs, max |A-B| = {worst:e}; n2=1 outputs identical over 300 questions and toy10"
    ))
}

// ---------------------------------------------------------------- 5

fn random_words(rng: &mut ChaCha8Rng, n: usize) -> String {
    const WORDS: [&str; 8] = ["dose", "renal", "label", "warning", "hepatic", "adult", "contra", "trial"];
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn random_call(rng: &mut ChaCha8Rng) -> CanonicalToolCall {
    let tools = ["fda_label", "drug_interactions", "pubmed_search"];
    let tool = tools[rng.random_range(0..tools.len())];
    let arg = match rng.random_range(0..3) {
        0 => ArgValue::Str(format!("  Drug{} ", rng.random_range(0..3))),
        1 => ArgValue::Int(rng.random_range(0..3)),
        _ => ArgValue::Bool(rng.random_bool(0.5)),
    };
    ToolCall::new(tool, vec![("query".into(), arg)]).unwrap().canonicalize()
}

/// Top-k by a flat recount over all calls, in run order, first occurrence
/// breaking count ties.
fn recount_top_k(traces: &[ExecutorTrace], k: usize) -> Vec<EvidenceItem> {
    let mut ordered: Vec<&ExecutorTrace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.run_index);
    let mut items: Vec<EvidenceItem> = Vec::new();
    for obs in ordered.iter().flat_map(|t| &t.tool_calls) {
        match items.iter_mut().find(|e| e.call == obs.call) {
            Some(e) => e.count += 1,
            None => items.push(EvidenceItem {
                call: obs.call.clone(),
                observation: obs.observation.clone(),
                count: 1,
            }),
        }
    }
    items.sort_by(|a, b| b.count.cmp(&a.count));
    items.truncate(k);
    items
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut truncated = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=12);
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut rng);
        let traces: Vec<ExecutorTrace> = indices
            .into_iter()
            .map(|run_index| {
                let calls = rng.random_range(0..=6);
                let reasoning_len = rng.random_range(0..=40);
                ExecutorTrace {
                    run_index,
                    tool_calls: (0..calls)
                        .map(|_| {
                            let call = random_call(&mut rng);
                            let len = rng.random_range(1..=8);
                            ToolObservation {
                                call,
                                observation: random_words(&mut rng, len),
                            }
                        })
                        .collect(),
                    reasoning: random_words(&mut rng, reasoning_len),
                    chosen: letter(rng.random_range(0..4)),
                    token_count: rng.random_range(1..500),
                    flagged: None,
                }
            })
            .collect();
        let k = rng.random_range(1..=12);
        let max_tokens = match rng.random_range(0..4) {
            0 => ContextBudget::DEFAULT_MAX_TOKENS,
            _ => rng.random_range(1..=120),
        };
        let budget = ContextBudget::new(max_tokens).unwrap();
        let ctx = aggregate_context("q", &traces, k, budget).map_err(|e| e.to_string())?;
        let full = recount_top_k(&traces, k);
        let kept = ctx.evidence.len();
        ensure(kept <= full.len() && ctx.evidence[..] == full[..kept], || {
            format!("case {case}: evidence is not a prefix of the recount")
        })?;
        ensure(ctx.truncated || kept == full.len(), || format!("case {case}: evidence dropped silently"))?;
        ensure(ctx.total_tokens <= max_tokens, || {
            format!("case {case}: {} tokens over budget {max_tokens}", ctx.total_tokens)
        })?;
        ensure(ctx.total_tokens == count_tokens(&ctx.render()), || format!("case {case}: token count mismatch"))?;
        if kept < full.len() {
            let mut bigger = ctx.clone();
            bigger.evidence = full[..=kept].to_vec();
            ensure(count_tokens(&bigger.render()) > max_tokens, || {
                format!("case {case}: dropped evidence that fit the budget")
            })?;
        }
        truncated += usize::from(ctx.truncated);
    }
    Ok(format!("1000 trace sets, 0 mismatches, {truncated} truncated, budgets respected"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let calibrator = Calibrator::default();
    let cases = parse_golden(GOLDEN_CORPUS)?;
    ensure(cases.len() == 20, || format!("golden corpus has {} cases", cases.len()))?;
    let failures = run_golden(&calibrator, &cases);
    ensure(failures.is_empty(), || format!("golden failures: {failures:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    const BODIES: [&str; 8] = ["Aspirin", "Ibuprofen", "None of the above", "B", "renal failure", "10 mg", "Yes", "No"];
    let fragments = [
        "Final answer: ", "The answer is ", "answer:", "**", "(", ")", "Option ", "I think", "\n", " ",
        "not ", "ABSTAIN", "final ANSWER - ", "é", "選択", "{\"answer\": \"", "\"}", ".",
    ];
    let mut emitted = 0;
    for i in 0..10_000 {
        let count = rng.random_range(2..=8);
        let bodies: Vec<String> = (0..count).map(|_| BODIES[rng.random_range(0..BODIES.len())].to_string()).collect();
        let q = Question::multi_choice(format!("fuzz-{i}"), "?", bodies.clone()).map_err(|e| e.to_string())?;
        let mut text = String::new();
        for _ in 0..rng.random_range(0..12) {
            match rng.random_range(0..4) {
                0 => text.push_str(fragments[rng.random_range(0..fragments.len())]),
                1 => text.push((b'A' + rng.random_range(0..26u8)) as char),
                2 => text.push((b'a' + rng.random_range(0..26u8)) as char),
                _ => text.push_str(&bodies[rng.random_range(0..bodies.len())]),
            }
        }
        let out = calibrator.calibrate_format(&text, &q);
        match out.label {
            AnswerLabel::Abstain => {}
            AnswerLabel::Choice(c) => {
                ensure(q.has_label(c), || format!("`{text}` gave {c} outside {count} options"))?;
                emitted += 1;
            }
        }
    }
    Ok(format!("20/20 golden cases; 10000 fuzzed inputs, {emitted} labelled, none out of range"))
}

// ---------------------------------------------------------------- 7

async fn mock_chat(State(counter): State<Arc<AtomicU64>>, Json(body): Json<Value>) -> Json<Value> {
    let n = counter.fetch_add(1, Ordering::SeqCst);
    let pick = ["A", "B", "C", "D"][(n % 4) as usize];
    let system = body["messages"][0]["content"].as_str().unwrap_or_default();
    let content = if system.contains("tool-use agent") {
        json!({
            "tool_calls": [{"tool": "fda_label", "arguments": {"drug": format!("d{}", n % 3)}, "observation": format!("label text {n}")}],
            "reasoning": format!("reply number {n}"),
            "answer": pick,
        })
        .to_string()
    } else {
        format!("Weighing the evidence, reply {n}.\nFinal answer: {pick}")
    };
    Json(json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"total_tokens": 20 + n % 7},
    }))
}

fn criterion_7() -> Outcome {
    let rt = runtime();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let simulated = |name: &str| -> Result<Vec<u8>, String> {
        let mut cfg = RunConfig::load(&data("simulated.toml")).map_err(|e| e.to_string())?;
        let out = dir.path().join(name);
        cfg.out = Some(out.clone());
        rt.block_on(run(&cfg, &RunOptions::default(), None)).map_err(|e| e.to_string())?;
        std::fs::read(out).map_err(|e| e.to_string())
    };
    let first = simulated("sim-1.csv")?;
    let second = simulated("sim-2.csv")?;
    ensure(first == second, || "simulated submissions differ".into())?;
    ensure(first.iter().filter(|&&b| b == b'\n').count() >= 11, || "toy submission is short".into())?;

    let counter = Arc::new(AtomicU64::new(0));
    let app = Router::new()
        .route("/chat/completions", post(mock_chat))
        .with_state(counter.clone());
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    rt.spawn(async move { axum::serve(listener, app).await });

    std::env::set_var("ENSEMBLEX_API_KEY_MOCK", "test-key");
    let config = format!(
        r#"
seed = 3
dataset = "{dataset}"
parallelism = 4
[topology]
mode = "stratified"
n1 = 2
n2 = 3
[backend]
kind = "live"
executor_endpoint = "mock"
analyst_endpoint = "mock"
cache_dir = "{cache}"
cache_mode = "record"
[[endpoints]]
id = "mock"
base_url = "http://{addr}"
model = "mock-model"
rpm = 100000
concurrency = 8
"#,
        dataset = data("toy10.jsonl").display(),
        cache = dir.path().join("cache").display(),
    );
    let live = |name: &str, strict_replay: bool| -> Result<(Vec<u8>, u64), String> {
        let mut cfg = RunConfig::from_toml(&config).map_err(|e| e.to_string())?;
        let out = dir.path().join(name);
        cfg.out = Some(out.clone());
        let opts = RunOptions {
            strict_replay,
            ..RunOptions::default()
        };
        let outcome = rt.block_on(run(&cfg, &opts, None)).map_err(|e| e.to_string())?;
        Ok((std::fs::read(out).map_err(|e| e.to_string())?, outcome.network_operations))
    };
    let (recorded, record_ops) = live("record.csv", false)?;
    let served = counter.load(Ordering::SeqCst);
    ensure(record_ops == served && served == 90, || format!("recording made {record_ops} requests, mock saw {served}"))?;
    let (replayed, replay_ops) = live("replay.csv", true)?;
    ensure(replay_ops == 0 && counter.load(Ordering::SeqCst) == served, || {
        format!("strict replay made {replay_ops} network operations")
    })?;
    ensure(recorded == replayed, || "replayed submission differs from the recording".into())?;
    Ok(format!(
        "simulated toy10 runs byte-identical; recorded {served} requests, strict replay made 0 and matched byte for byte"
    ))
}

// ---------------------------------------------------------------- 8

fn respaced(text: &str, rng: &mut ChaCha8Rng) -> String {
    text.split(' ')
        .map(|w| format!("{w}{}", [" ", "  ", "\t", " \n "][rng.random_range(0..4)]))
        .collect()
}

fn random_batch(rng: &mut ChaCha8Rng, batch: usize) -> Vec<Question> {
    let distinct = rng.random_range(1..=batch);
    let bases: Vec<Question> = (0..distinct)
        .map(|j| {
            Question::multi_choice(
                format!("base-{j}"),
                format!("Which agent fits case {j} of {}?", rng.random_range(0..1000)),
                ["alpha", "beta", "gamma", "delta"],
            )
            .unwrap()
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..batch {
        let base = &bases[if i < distinct { i } else { rng.random_range(0..distinct) }];
        let mut q = base.clone();
        q.id = format!("q-{i}");
        if i >= distinct {
            q.text = respaced(&q.text, rng);
        }
        out.push(q);
    }
    out.shuffle(rng);
    out
}

fn check_groups(decisions: &[Decision]) -> Result<usize, String> {
    let mut answers: HashMap<&str, AnswerLabel> = HashMap::new();
    for d in decisions {
        let a = *answers.entry(d.query_key.as_str()).or_insert(d.answer);
        ensure(a == d.answer, || format!("group of {} has answers {a} and {}", d.question_id, d.answer))?;
    }
    Ok(decisions.len() - answers.len())
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let rt = runtime();
    let params = SimParams::default();
    let mut duplicates = 0;
    for round in 0..20 {
        let size = rng.random_range(2..=25);
        let batch = random_batch(&mut rng, size);
        let truth = Arc::new(TruthTable::new(round));
        let orch = Orchestrator::new(
            Arc::new(SimExecutorBackend { params, truth: truth.clone() }),
            Arc::new(SimAnalystBackend { params, truth }),
            Arc::new(Calibrator::default()),
            round,
        );
        let cfg = TopologyConfig::new(TopologyMode::StratifiedEnsemble, 2, 3);
        let out = rt.block_on(orch.run_batch(&batch, &cfg, 8)).map_err(|e| e.to_string())?;
        duplicates += check_groups(&out)?;
        ensure(deduplicate(out.clone()) == out, || format!("round {round}: run_batch output not idempotent"))?;
    }

    for round in 0..500 {
        let size = rng.random_range(1..=30);
        let batch = random_batch(&mut rng, size);
        let input: Vec<Decision> = batch
            .iter()
            .map(|q| {
                let mut d = Decision::failed(q, TopologyMode::StratifiedEnsemble, "seeded");
                d.answer = match rng.random_range(0..5) {
                    4 => AnswerLabel::Abstain,
                    i => letter(i),
                };
                d.rationale = format!("because {}", d.answer);
                d
            })
            .collect();
        let once = deduplicate(input.clone());
        duplicates += check_groups(&once)?;
        ensure(deduplicate(once.clone()) == once, || format!("round {round}: not idempotent"))?;
        // Each group settles on the plurality of its original answers.
        let mut groups: BTreeMap<&str, Vec<AnswerLabel>> = BTreeMap::new();
        for d in &input {
            groups.entry(d.query_key.as_str()).or_default().push(d.answer);
        }
        for (d, orig) in once.iter().zip(&input) {
            ensure(d.question_id == orig.question_id, || "order changed".into())?;
            let expected = plurality_vote(&groups[d.query_key.as_str()]).unwrap().winner;
            ensure(d.answer == expected, || format!("round {round}: {} got {}, expected {expected}", d.question_id, d.answer))?;
        }
    }
    Ok(format!("520 batches, {duplicates} duplicate rows unified, idempotent"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("voting oracle equivalence", criterion_1),
        ("self-consistency curve", criterion_2),
        ("fusion ordering", criterion_3),
        ("degenerate equivalence", criterion_4),
        ("aggregation recount", criterion_5),
        ("calibration golden corpus and fuzz", criterion_6),
        ("determinism and replay", criterion_7),
        ("dedup idempotence and consistency", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("[PASS] criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {} ({name}): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
