#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::Arc;
use std::thread;

use daedal_core::backend::{wire, ScriptedSuite};
use daedal_core::Backend;
use daedal_harness::prompts::{write_prompts, Prompt, TOKENIZE_PATH};

type Handler = dyn Fn(&str, &[u8]) -> (u16, String) + Send + Sync;

/// Minimal keep-alive HTTP/1.1 server answering every request with
/// `handler(path, body)`. Returns the base URL.
pub fn serve<F>(handler: F) -> String
where
    F: Fn(&str, &[u8]) -> (u16, String) + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    let handler: Arc<Handler> = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let handler = Arc::clone(&handler);
            thread::spawn(move || {
                let _ = connection(stream, &*handler);
            });
        }
    });
    format!("http://{addr}")
}

fn connection(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(());
        }
        let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
        let mut content_length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0; content_length];
        reader.read_exact(&mut body)?;
        let (status, out) = handler(&path, &body);
        let response = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{out}",
            out.len()
        );
        writer.write_all(response.as_bytes())?;
    }
}

/// Serves `backend` over the predict protocol with vocab and an identity
/// tokenize endpoint.
pub fn serve_backend<B: Backend + 'static>(backend: B) -> String {
    serve(move |path, body| match path {
        wire::VOCAB_PATH => {
            let v = wire::VocabBody::from(backend.vocab());
            (200, serde_json::to_string(&v).unwrap())
        }
        TOKENIZE_PATH => {
            let req: serde_json::Value = serde_json::from_slice(body).unwrap();
            let tokens: Vec<u32> = req["text"]
                .as_str()
                .unwrap()
                .split_whitespace()
                .map(|w| w.parse().unwrap())
                .collect();
            (200, serde_json::json!({ "tokens": tokens }).to_string())
        }
        _ => wire::handle_predict(&backend, body),
    })
}

pub fn write_suite(dir: &Path, suite: &ScriptedSuite) -> String {
    let path = dir.join("suite.json");
    std::fs::write(&path, serde_json::to_string(suite).unwrap()).unwrap();
    format!("scripted:{}", path.display())
}

pub fn write_prompt_file(dir: &Path, name: &str, prompts: &[Prompt]) -> String {
    let path = dir.join(name);
    write_prompts(&path, prompts).unwrap();
    path.display().to_string()
}

/// Runs the CLI in-process.
pub fn cli(args: &[&str]) -> i32 {
    daedal_harness::cli_run(std::iter::once("daedal").chain(args.iter().copied()))
}
