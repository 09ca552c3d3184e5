//! Acceptance suite. Prints one [PASS]/[FAIL] line per criterion and exits
//! non-zero if any fails. Runs offline.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use duanzai_core::corpus::Span;
use duanzai_core::crf::inference::viterbi;
use duanzai_core::crf::{forward_log_partition, train, train_with_report, TrainConfig};
use duanzai_core::eval::{run_per_benchmark, span_metrics, GoldSpan, SpanPrediction};
use duanzai_core::pinyin::{parse_syllable, FuzzyCostTable, PinyinLexicon};
use duanzai_core::prompt::{build_prompt, Clue, Exemplar, ExemplarSet, PromptMode, Role, TemplateSet, FIVE_SHOT};
use duanzai_core::retrieval::{decode_topk, retrieve_original, train_bigram_lm, Lattice, LatticeArc, RetrievalConfig};
use duanzai_core::fixtures;
use duanzai_gateway::MockBackend;
use duanzai_service::{AppState, Resources, SessionStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(
        elapsed < Duration::from_secs(limit_secs),
        format!("took {:.2}s, limit {limit_secs}s", elapsed.as_secs_f64()),
    )
}

fn crf_gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let len = rng.gen_range(1..=5);
        let n_features = rng.gen_range(1..=20);
        let (model, feats, tags) = oracles::random_instance(&mut rng, len, n_features);
        let l2 = if rng.gen_bool(0.5) { 0.0 } else { 0.5 };
        worst = worst.max(oracles::gradient_check(&model, &[(feats, tags)], l2, 1e-5, 1e-6));
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.3e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("50 instances, max relative error {worst:.2e}"))
}

fn crf_normalizer_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let (mut z_err, mut v_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let n_features = rng.gen_range(1..=20);
        let (model, feats, _) = oracles::random_instance(&mut rng, n, n_features);
        let em = model.emissions_for(&feats);
        z_err = z_err.max((forward_log_partition(&model, &feats) - oracles::brute_log_partition(&em, &model.transition)).abs());
        let (_, score) = viterbi(&em, &model.transition);
        v_err = v_err.max((score - oracles::brute_max(&em, &model.transition)).abs());
    }
    ensure(z_err < 1e-8, format!("log-partition error {z_err:.3e}"))?;
    ensure(v_err < 1e-9, format!("viterbi score error {v_err:.3e}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!("200 models, |dZ| {z_err:.1e}, |dV| {v_err:.1e}"))
}

fn training_behavior() -> Outcome {
    let corpus = fixtures::training_corpus();
    let lex = PinyinLexicon::bundled();
    let config = TrainConfig {
        seed: fixtures::SEED,
        ..TrainConfig::default()
    };
    let (model, report) = train_with_report(&corpus, lex, &config).map_err(|e| e.to_string())?;
    for (i, w) in report.losses.windows(2).enumerate() {
        ensure(w[1] <= w[0], format!("loss rose at step {}: {} -> {}", i + 1, w[0], w[1]))?;
    }
    let heavy = TrainConfig {
        l2_lambda: 1e6,
        ..config.clone()
    };
    let pinned = train(&corpus, lex, &heavy).map_err(|e| e.to_string())?;
    let max_w = pinned.weights().iter().fold(0.0f64, |a, w| a.max(w.abs()));
    ensure(max_w < 1e-2, format!("|w|inf {max_w:.3e} at lambda 1e6"))?;
    let again = train(&corpus, lex, &config).map_err(|e| e.to_string())?;
    ensure(model.to_json() == again.to_json(), "retraining produced a different model file")?;
    Ok(format!(
        "{} accepted steps monotone, |w|inf {max_w:.1e} at lambda 1e6, model files identical",
        report.losses.len() - 1
    ))
}

fn end_to_end_per() -> Outcome {
    let start = Instant::now();
    let lex = PinyinLexicon::bundled();
    let train_set = fixtures::training_corpus();
    let held_out = fixtures::held_out_corpus();
    ensure(train_set.len() == 96, format!("training corpus has {} instances", train_set.len()))?;
    ensure(held_out.len() == 24, format!("held-out split has {} instances", held_out.len()))?;
    let config = TrainConfig {
        seed: fixtures::SEED,
        ..TrainConfig::default()
    };
    let model = train(&train_set, lex, &config).map_err(|e| e.to_string())?;
    let tr = run_per_benchmark(&model, &train_set, lex, None).map_err(|e| e.to_string())?;
    let ho = run_per_benchmark(&model, &held_out, lex, None).map_err(|e| e.to_string())?;
    ensure(tr.ema == 1.0, format!("training EMA {:.3}", tr.ema))?;
    ensure(ho.ema >= 0.80, format!("held-out EMA {:.3}", ho.ema))?;
    ensure(tr.sma >= tr.ema && ho.sma >= ho.ema, "SMA below EMA")?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "train EMA {:.2} SMA {:.2}, held-out EMA {:.2} SMA {:.2}",
        tr.ema, tr.sma, ho.ema, ho.sma
    ))
}

const POOL: [char; 10] = ['一', '人', '大', '天', '好', '我', '是', '的', '难', '蓝'];

fn retrieval_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let reading = parse_syllable("a").map_err(|e| e.to_string())?;
    for trial in 0..100 {
        let texts: Vec<String> = (0..rng.gen_range(1..8))
            .map(|_| (0..rng.gen_range(1..6)).map(|_| *POOL.choose(&mut rng).unwrap()).collect())
            .collect();
        let lm = train_bigram_lm(&texts, rng.gen_range(0.05..1.0)).map_err(|e| e.to_string())?;
        let positions = (0..rng.gen_range(1..=4))
            .map(|_| {
                let n = rng.gen_range(1..=6);
                let mut chars: Vec<char> = POOL.choose_multiple(&mut rng, n).copied().collect();
                chars.sort_unstable();
                chars
                    .into_iter()
                    .map(|hanzi| LatticeArc {
                        hanzi,
                        reading,
                        distance: f64::from(rng.gen_range(0..4u8)) * 0.5,
                    })
                    .collect()
            })
            .collect();
        let lattice = Lattice { positions };
        let beta = rng.gen_range(0.0..4.0);
        let got = &decode_topk(&lattice, &lm, beta, 5)[0];
        let (want, score) = &oracles::enumerate_lattice(&lattice, &lm, beta)[0];
        ensure(&got.hanzi == want, format!("lattice {trial}: decoder {} vs enumeration {want}", got.hanzi))?;
        ensure((got.total_score - score).abs() < 1e-9, format!("lattice {trial}: score mismatch"))?;
    }

    let lex = PinyinLexicon::bundled();
    ensure(lex.len() <= 3000, format!("lexicon has {} characters", lex.len()))?;
    let lm = train_bigram_lm(&fixtures::lm_corpus(), 0.1).map_err(|e| e.to_string())?;
    let costs = FuzzyCostTable::default();
    let cfg = RetrievalConfig::default();
    let (mut top1, mut top5) = (0, 0);
    for (pun, original) in fixtures::pairs() {
        let out = retrieve_original(&pun, lex, &lm, &costs, &cfg).map_err(|e| format!("{pun}: {e}"))?;
        top1 += usize::from(out.first().is_some_and(|c| c.hanzi == original));
        top5 += usize::from(out.iter().any(|c| c.hanzi == original));
    }
    ensure(top1 >= 20, format!("top-1 {top1}/24"))?;
    ensure(top5 >= 23, format!("top-5 {top5}/24"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("100 lattices agree; fixture top-1 {top1}/24, top-5 {top5}/24"))
}

fn random_span<R: Rng>(rng: &mut R) -> Span {
    let s = rng.gen_range(0..8);
    Span::new(s, s + rng.gen_range(1..=4))
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    for trial in 0..1000 {
        let n = rng.gen_range(0..30);
        let (preds, golds): (Vec<_>, Vec<_>) = (0..n)
            .map(|i| {
                let id = format!("i{i}");
                let spans = (0..rng.gen_range(0..4)).map(|_| random_span(&mut rng)).collect();
                (SpanPrediction { id: id.clone(), spans }, GoldSpan { id, span: random_span(&mut rng) })
            })
            .unzip();
        let m = span_metrics(&preds, &golds).map_err(|e| e.to_string())?;
        let hm = if m.precision + m.recall == 0.0 {
            0.0
        } else {
            2.0 * m.precision * m.recall / (m.precision + m.recall)
        };
        let c = m.counts;
        ensure(m.sma >= m.ema, format!("trial {trial}: SMA < EMA"))?;
        ensure((m.f1 - hm).abs() < 1e-12, format!("trial {trial}: F1 is not the harmonic mean"))?;
        ensure(
            c.true_positives <= c.predicted.min(c.gold) && c.gold == n && c.n_instances == n,
            format!("trial {trial}: counts {c:?}"),
        )?;
        ensure(
            (m.precision * c.predicted as f64 - c.true_positives as f64).abs() < 1e-9
                && (m.recall * c.gold as f64 - c.true_positives as f64).abs() < 1e-9,
            format!("trial {trial}: P/R disagree with counts"),
        )?;
    }
    let preds = vec![
        SpanPrediction { id: "a".into(), spans: vec![Span::new(2, 6)] },
        SpanPrediction { id: "b".into(), spans: vec![Span::new(3, 6)] },
        SpanPrediction { id: "c".into(), spans: vec![] },
    ];
    let golds: Vec<GoldSpan> = ["a", "b", "c"]
        .iter()
        .map(|id| GoldSpan { id: id.to_string(), span: Span::new(2, 6) })
        .collect();
    let m = span_metrics(&preds, &golds).map_err(|e| e.to_string())?;
    ensure(m.ema == 1.0 / 3.0 && m.sma == 2.0 / 3.0, format!("fixture EMA {} SMA {}", m.ema, m.sma))?;
    Ok("1000 trials hold; fixture EMA 1/3, SMA 2/3".into())
}

fn random_text<R: Rng>(rng: &mut R, max: usize) -> String {
    const CHARS: &[char] = &['蓝', '瘦', '香', '菇', '{', '}', '「', '」', '\n', 'a', ' ', '😀', '了', 't'];
    (0..rng.gen_range(0..=max)).map(|_| *CHARS.choose(rng).unwrap()).collect()
}

fn prompt_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let templates = TemplateSet::default();
    let modes = [PromptMode::ZeroShot, PromptMode::FiveShot, PromptMode::ClueProvided];
    for trial in 0..1000 {
        let mode = *modes.choose(&mut rng).unwrap();
        let text = random_text(&mut rng, 30);
        let clue = Clue {
            punchline: format!("蓝{}", random_text(&mut rng, 5)),
            original: format!("难{}", random_text(&mut rng, 5)),
        };
        let ex = if rng.gen_bool(0.5) {
            fixtures::exemplars()
        } else {
            ExemplarSet(
                (0..rng.gen_range(5..9))
                    .map(|_| Exemplar {
                        text: random_text(&mut rng, 12),
                        explanation: random_text(&mut rng, 12),
                    })
                    .collect(),
            )
        };
        let b = build_prompt(mode, &text, Some(&clue), Some(&ex), &templates).map_err(|e| e.to_string())?;
        let fail = |what: &str| format!("trial {trial} ({mode}): {what}");
        let body: Vec<_> = b.messages.iter().skip_while(|m| m.role == Role::System).collect();
        ensure(body.iter().all(|m| m.role != Role::System), fail("system message after the start"))?;
        let Some(last) = body.last() else {
            return Err(fail("no messages"));
        };
        ensure(last.role == Role::User, fail("last message is not from the user"))?;
        let query = templates.zero_shot.render(&[("text", &text)]);
        match mode {
            PromptMode::ZeroShot => {
                ensure(body.len() == 1 && last.content == query && b.provenance.is_none(), fail("shape"))?;
            }
            PromptMode::FiveShot => {
                ensure(body.len() == 2 * FIVE_SHOT + 1 && last.content == query, fail("shape"))?;
                for (i, pair) in body[..2 * FIVE_SHOT].chunks(2).enumerate() {
                    ensure(
                        pair[0].role == Role::User
                            && pair[1].role == Role::Assistant
                            && pair[0].content.contains(&ex.0[i].text)
                            && pair[1].content.contains(&ex.0[i].explanation),
                        fail("exemplar pair"),
                    )?;
                }
            }
            PromptMode::ClueProvided => {
                ensure(body.len() == 1 && last.content.starts_with(&query), fail("shape"))?;
                ensure(
                    last.content.contains(&clue.punchline) && last.content.contains(&clue.original),
                    fail("clue strings missing"),
                )?;
                ensure(b.provenance.as_ref() == Some(&clue), fail("provenance"))?;
            }
        }
    }
    Ok("1000 calls satisfy the per-mode structure".into())
}

struct Server {
    base: String,
    client: reqwest::Client,
    _stop: tokio::sync::oneshot::Sender<()>,
}

impl Server {
    async fn start(resources: Resources) -> Result<Self, String> {
        let state = AppState::new(resources, Arc::new(MockBackend), SessionStore::new(Duration::from_secs(3600)));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let (stop, rx) = tokio::sync::oneshot::channel::<()>();
        tokio::spawn(duanzai_service::serve_on(listener, Arc::new(state), async {
            let _ = rx.await;
        }));
        Ok(Self {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
            _stop: stop,
        })
    }

    async fn chat(&self, session_id: Option<&str>, message: &str) -> Result<Value, String> {
        let r = self
            .client
            .post(format!("{}/api/chat", self.base))
            .json(&json!({"session_id": session_id, "message": message}))
            .send()
            .await
            .map_err(|e| e.to_string())?;
        ensure(r.status().is_success(), format!("/api/chat returned {}", r.status()))?;
        r.json().await.map_err(|e| e.to_string())
    }

    async fn transcript(&self, id: &str) -> Result<Value, String> {
        let r = self
            .client
            .get(format!("{}/api/session/{id}", self.base))
            .send()
            .await
            .map_err(|e| e.to_string())?;
        r.json().await.map_err(|e| e.to_string())
    }
}

/// The reply and analysis bytes, without the per-run session id.
fn stable_part(body: &Value) -> String {
    format!("{}\n{}", body["reply"], body["analysis"])
}

async fn offline_chat_inner() -> Outcome {
    let start = Instant::now();
    let resources = Resources::fixture();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let server = Server::start(resources.clone()).await?;
        let body = server.chat(None, "今天蓝瘦香菇了").await?;
        let reply = body["reply"].as_str().unwrap_or_default();
        ensure(
            reply.contains("「蓝瘦香菇」") && reply.contains("「难受想哭」"),
            format!("reply lacks the clue: {reply}"),
        )?;
        runs.push(stable_part(&body));
    }
    ensure(runs[0] == runs[1], "replies differ between runs")?;

    let server = Arc::new(Server::start(resources).await?);
    let first_a = server.chat(None, "甲-0").await?;
    let first_b = server.chat(None, "乙-0").await?;
    let ids = [
        first_a["session_id"].as_str().unwrap_or_default().to_string(),
        first_b["session_id"].as_str().unwrap_or_default().to_string(),
    ];
    let mut tasks = Vec::new();
    for (tag, id) in ["甲", "乙"].into_iter().zip(ids.clone()) {
        let server = server.clone();
        tasks.push(tokio::spawn(async move {
            for i in 1..20 {
                let body = server.chat(Some(&id), &format!("{tag}-{i}")).await?;
                ensure(body["session_id"] == id.as_str(), "reply routed to another session")?;
            }
            Ok::<_, String>(())
        }));
    }
    for t in tasks {
        t.await.map_err(|e| e.to_string())??;
    }
    for (tag, id) in ["甲", "乙"].into_iter().zip(ids) {
        let t = server.transcript(&id).await?;
        let turns = t["turns"].as_array().cloned().unwrap_or_default();
        ensure(turns.len() == 40, format!("session {tag} has {} turns", turns.len()))?;
        for (i, pair) in turns.chunks(2).enumerate() {
            ensure(
                pair[0]["role"] == "user" && pair[1]["role"] == "assistant",
                format!("session {tag} breaks alternation"),
            )?;
            ensure(pair[0]["text"] == format!("{tag}-{i}").as_str(), format!("session {tag} turn {i} is foreign"))?;
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "clued reply stable across runs; 2 sessions x 20 messages isolated ({:.2}s incl. model training)",
        start.elapsed().as_secs_f64()
    ))
}

fn offline_chat() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(offline_chat_inner())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("CRF gradient check", crf_gradient_check),
        ("CRF normalizer oracle", crf_normalizer_oracle),
        ("Training behavior", training_behavior),
        ("End-to-end PER at desk scale", end_to_end_per),
        ("Retrieval oracle", retrieval_oracle),
        ("Metric identities", metric_identities),
        ("Prompt invariants", prompt_invariants),
        ("Offline end-to-end chat", offline_chat),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why} ({secs:.2}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
