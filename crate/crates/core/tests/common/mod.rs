#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use atomic_reasoner::backend::{CallTag, Message};
use atomic_reasoner::checker::{CheckReport, ErrorKind, Verdict};
use atomic_reasoner::model::{
    AnswerSchema, AtomicAction, AtomicTree, Departure, NodeId, Problem, TerminationMode,
};
use atomic_reasoner::prompts::{PromptCatalog, TemplateName};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// What the stub server does with one request.
#[derive(Debug, Clone)]
pub enum Reply {
    Status { code: u16, body: String, headers: Vec<(String, String)> },
    /// Holds the connection open for the given time without answering.
    Stall(Duration),
    /// Waits, then sends the inner reply.
    Delayed(Duration, Box<Reply>),
}

impl Reply {
    pub fn ok(content: &str) -> Reply {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 1}
        });
        Reply::Status { code: 200, body: body.to_string(), headers: Vec::new() }
    }

    pub fn status(code: u16, body: &str) -> Reply {
        Reply::Status { code, body: body.into(), headers: Vec::new() }
    }

    pub fn rate_limited(retry_after_secs: Option<u64>) -> Reply {
        Reply::Status {
            code: 429,
            body: r#"{"error":"slow down"}"#.into(),
            headers: retry_after_secs.map(|s| ("Retry-After".to_string(), s.to_string())).into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).expect("request body is json")
    }
}

type Responder = dyn Fn(&Recorded) -> Reply + Send + Sync;

enum Plan {
    Queue(VecDeque<Reply>),
    Func(Box<Responder>),
}

/// Minimal HTTP/1.1 server on a loopback port. Each connection carries one
/// request and is closed after the reply.
pub struct StubServer {
    pub base_url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
    gauge: Arc<Gauge>,
}

#[derive(Default)]
struct Gauge {
    now: AtomicUsize,
    peak: AtomicUsize,
}

impl StubServer {
    pub fn scripted(replies: Vec<Reply>) -> StubServer {
        Self::start(Plan::Queue(replies.into()))
    }

    pub fn with_responder(f: impl Fn(&Recorded) -> Reply + Send + Sync + 'static) -> StubServer {
        Self::start(Plan::Func(Box::new(f)))
    }

    fn start(plan: Plan) -> StubServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        let plan = Arc::new(Mutex::new(plan));
        let gauge = Arc::new(Gauge::default());
        let g = gauge.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let log = log.clone();
                let plan = plan.clone();
                let g = g.clone();
                thread::spawn(move || {
                    let n = g.now.fetch_add(1, Ordering::SeqCst) + 1;
                    g.peak.fetch_max(n, Ordering::SeqCst);
                    serve(stream, &log, &plan);
                    g.now.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        StubServer { base_url: format!("http://{addr}/v1"), requests, gauge }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    /// Most connections open at the same time so far.
    pub fn peak_in_flight(&self) -> usize {
        self.gauge.peak.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Recorded>>, plan: &Mutex<Plan>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" || h == "\n" {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    let _ = reader.read_exact(&mut body);
    let rec = Recorded { method, path, headers, body: String::from_utf8_lossy(&body).into_owned() };
    log.lock().unwrap().push(rec.clone());
    let reply = match &mut *plan.lock().unwrap() {
        Plan::Queue(q) => q.pop_front().unwrap_or_else(|| Reply::status(503, "stub queue exhausted")),
        Plan::Func(f) => f(&rec),
    };
    respond(stream, reply);
}

fn respond(mut stream: TcpStream, reply: Reply) {
    match reply {
        Reply::Stall(d) => thread::sleep(d),
        Reply::Delayed(d, inner) => {
            thread::sleep(d);
            respond(stream, *inner);
        }
        Reply::Status { code, body, headers } => {
            let mut out = format!(
                "HTTP/1.1 {code} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n",
                body.len()
            );
            for (k, v) in headers {
                out.push_str(&format!("{k}: {v}\r\n"));
            }
            out.push_str("\r\n");
            out.push_str(&body);
            let _ = stream.write_all(out.as_bytes());
            let _ = stream.flush();
        }
    }
}

/// The call role a request was rendered for, recovered from its system prompt.
pub fn infer_tag(messages: &[Message], catalog: &PromptCatalog) -> Option<CallTag> {
    let system = &messages.first()?.content;
    let tag_of = |n: TemplateName| match n {
        TemplateName::Routing => CallTag::Routing,
        TemplateName::Solver => CallTag::Solve,
        TemplateName::Backtrack => CallTag::Backtrack,
        TemplateName::Checker => CallTag::Check,
        TemplateName::Revise => CallTag::Revise,
        TemplateName::Compress => CallTag::Compress,
        TemplateName::Summarize => CallTag::Summarize,
        TemplateName::Triage => CallTag::Triage,
    };
    TemplateName::ALL.iter().find_map(|&n| {
        let prefix: String = catalog.get(n).system.chars().take(40).collect();
        system.starts_with(&prefix).then(|| tag_of(n))
    })
}

pub fn word(rng: &mut impl Rng) -> String {
    const WORDS: [&str; 12] = [
        "alpha", "beta", "gamma", "delta", "clue", "house", "red", "owl", "left", "Ω", "naïve", "line\nbreak",
    ];
    let n = rng.gen_range(1..6);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_problem(rng: &mut impl Rng) -> Problem {
    let schema = match rng.gen_range(0..3) {
        0 => AnswerSchema::FreeText,
        1 => AnswerSchema::MultipleChoice { options: vec!["yes".into(), "no".into(), word(rng)] },
        _ => AnswerSchema::Numeric,
    };
    Problem::new(format!("p{}", rng.gen::<u16>()), format!("Question: {}?", word(rng)), schema)
}

/// A tree grown by random valid operations, optionally terminated.
pub fn random_tree(rng: &mut impl Rng, steps: usize) -> AtomicTree {
    let mut tree = AtomicTree::new(random_problem(rng)).unwrap();
    for _ in 0..steps {
        match rng.gen_range(0..10) {
            0..=5 => {
                let action = *AtomicAction::ALL.choose(rng).unwrap();
                if let Ok(id) = tree.append_node(action, word(rng), word(rng)) {
                    if rng.gen_bool(0.5) {
                        let report = if rng.gen_bool(0.3) {
                            CheckReport {
                                verdict: Verdict::Error,
                                kinds: vec![ErrorKind::ALL[rng.gen_range(0..ErrorKind::ALL.len())]],
                                rationale: word(rng),
                                suggestion: rng.gen_bool(0.5).then(|| word(rng)),
                            }
                        } else {
                            CheckReport::no_error(word(rng))
                        };
                        tree.record_check(id, report).unwrap();
                    }
                    if rng.gen_bool(0.1) {
                        tree.apply_revision(id, word(rng)).unwrap();
                    }
                }
            }
            6 | 7 => {
                let path = tree.active_path();
                if let Some(&target) = path.choose(rng) {
                    let departure = if rng.gen_bool(0.5) { Departure::Completed } else { Departure::Paused };
                    let left = tree.active_chain_id();
                    tree.branch_at(target, departure).unwrap();
                    if rng.gen_bool(0.5) {
                        tree.set_chain_summary(left, word(rng)).unwrap();
                    }
                }
            }
            8 => tree.add_usage(rng.gen_range(0..500), rng.gen_range(0..200), rng.gen_range(0..50)),
            _ => {
                let kinds = [
                    atomic_reasoner::model::NoteKind::RouterFallback,
                    atomic_reasoner::model::NoteKind::ActionCoerced,
                    atomic_reasoner::model::NoteKind::CheckerFailOpen,
                ];
                tree.note(*kinds.choose(rng).unwrap(), word(rng));
            }
        }
    }
    if rng.gen_bool(0.5) {
        let mode = if rng.gen_bool(0.5) { TerminationMode::ActiveSolved } else { TerminationMode::PassiveLimit };
        tree.set_termination(mode, word(rng)).unwrap();
    }
    tree
}

pub fn node_ids(tree: &AtomicTree) -> Vec<NodeId> {
    tree.nodes().iter().map(|n| n.id).collect()
}
