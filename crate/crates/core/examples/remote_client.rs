//! The chat-completion client against a tiny in-process server that rejects
//! `top_k` once, the way some hosted APIs do.
//!
//!     cargo run --example remote_client
//!
//! A real endpoint is described by a JSON file (see `data/endpoint.example.json`);
//! its API token is read from the environment variable named there.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use hag::backends::{Backend, EndpointSpec, GenerationRequest, RemoteBackend};
use hag::space::TOY_DEFAULT;

fn serve(listener: TcpListener) {
    for (i, stream) in listener.incoming().enumerate() {
        let Ok(mut stream) = stream else { break };
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut length = 0;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 || line.trim().is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
        let mut body = vec![0; length];
        let _ = reader.read_exact(&mut body);
        let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
        let (status, reply) = if i == 0 {
            (
                400,
                serde_json::json!({"error": "Unrecognized request argument supplied: top_k"}),
            )
        } else {
            let content = format!("echo at temperature {}", request["temperature"]);
            (
                200,
                serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}),
            )
        };
        let text = reply.to_string();
        let _ = write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
            text.len()
        );
    }
}

fn main() -> anyhow::Result<()> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}", listener.local_addr()?);
    thread::spawn(move || serve(listener));

    let client = RemoteBackend::with_default(EndpointSpec::new(&url, "demo-model"), TOY_DEFAULT);
    for seed in 0..2 {
        let out = client.generate(&GenerationRequest::new("Is the coin heads up?", TOY_DEFAULT, 16, seed))?;
        println!("{:?} warnings={:?}", out.text, out.warnings);
    }
    Ok(())
}
