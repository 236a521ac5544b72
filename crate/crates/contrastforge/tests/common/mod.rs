#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use contrastforge::formats::{write_attributes, write_interactions};
use contrastforge_core::synthetic::{attribute_dataset, key_terms, AttributeDatasetConfig, SyntheticCorpus};

/// Minimal HTTP/1.1 server. `respond` maps a request body to
/// `(status, response body)`. Every request body is recorded.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    pub fn start<F>(respond: F) -> Self
    where
        F: Fn(usize, &str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; length];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                let body = String::from_utf8_lossy(&body).into_owned();
                let n = {
                    let mut r = seen.lock().unwrap();
                    r.push(body.clone());
                    r.len()
                };
                let (status, text) = respond(n, &body);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        Self { url, requests }
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

pub fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
}

pub fn prompt_of(body: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    let content = &v["messages"][0]["content"];
    match content {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(parts) => parts[0]["text"].as_str().unwrap().to_string(),
        _ => panic!("no content"),
    }
}

/// A well-behaved generation backend keyed on the prompt kind.
pub fn generation_backend(_n: usize, body: &str) -> (u16, String) {
    let prompt = prompt_of(body);
    let text = if prompt.contains("masking key feature words") {
        "A [MASK] cotton blanket"
    } else if prompt.contains("filling in the missing words") {
        "A blue cotton blanket"
    } else {
        "A red cotton blanket"
    };
    (200, completion(text))
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub corpus: SyntheticCorpus,
    pub config: PathBuf,
}

impl Fixture {
    pub fn run_dir(&self) -> PathBuf {
        self.dir.path().join("run")
    }
}

/// Writes a synthetic catalog, a lexicon, a swap table and a config that
/// points at them. `extra` is appended to the config.
pub fn fixture(users: usize, items: usize, extra: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = attribute_dataset(&AttributeDatasetConfig { users, items, field_dim: 16, seed: 7, ..Default::default() }).unwrap();
    write_interactions(&corpus.raw, &dir.path().join("interactions.tsv")).unwrap();
    write_attributes(&corpus.records, &dir.path().join("attributes.jsonl")).unwrap();
    write_key_terms(dir.path());
    let config = dir.path().join("config.toml");
    let text = format!(
        "[data]\ninteractions = \"interactions.tsv\"\nattributes = \"attributes.jsonl\"\nk_core = 1\nseed = 3\n\n\
         [base]\nd = 8\nL = 2\nlr = 0.01\nbatch_size = 128\nmax_epochs = 5\npatience = 3\n\n\
         [pipeline]\nstub = true\nd_enc = 16\nlexicon_path = \"lexicon.txt\"\nswap_table_path = \"swaps.tsv\"\n\n\
         [train]\nlr = 0.01\nbatch_size = 128\nmax_epochs = 4\npatience = 3\nseeds = [1, 2]\n\n\
         [eval]\nKs = [10, 20]\n{extra}"
    );
    std::fs::write(&config, text).unwrap();
    Fixture { dir, corpus, config }
}

pub fn write_key_terms(dir: &Path) {
    let (lexicon, swaps, _) = key_terms();
    let lex: String = lexicon.terms().map(|t| format!("{t}\n")).collect();
    std::fs::write(dir.join("lexicon.txt"), lex).unwrap();
    let table: String = lexicon.terms().map(|t| format!("{t}\t{}\n", swaps.get(t).unwrap())).collect();
    std::fs::write(dir.join("swaps.tsv"), table).unwrap();
}
