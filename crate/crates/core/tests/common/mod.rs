#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use daedal_core::backend::wire;
use daedal_core::Backend;

type Handler = dyn Fn(&str, &[u8]) -> (u16, String) + Send + Sync;

/// Minimal keep-alive HTTP/1.1 server answering every request with
/// `handler(path, body)`. Returns the base URL; serving threads live for the
/// rest of the test process.
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

/// Serves `backend` over the predict protocol, plus the vocab endpoint.
pub fn serve_backend<B: Backend + 'static>(backend: B) -> String {
    serve(move |path, body| {
        if path == wire::VOCAB_PATH {
            let v = wire::VocabBody::from(backend.vocab());
            (200, serde_json::to_string(&v).unwrap())
        } else {
            wire::handle_predict(&backend, body)
        }
    })
}
