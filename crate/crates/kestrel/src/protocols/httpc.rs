//! Minimal HTTP/1.1 client over `TcpStream`: enough to POST one JSON body
//! per request and read a content-length framed response. Used by the HTTP
//! transport and the OpenAI-compatible completion backend.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("connect failed: {0}")]
    Connect(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// POST a body to `http://host:port/path` and read the response. `headers`
/// are extra request headers (name, value).
pub fn post(
    host: &str,
    port: u16,
    path: &str,
    content_type: &str,
    body: &str,
    headers: &[(String, String)],
    timeout: Duration,
) -> Result<HttpResponse, HttpError> {
    let stream = TcpStream::connect((host, port)).map_err(|e| HttpError::Connect(e.to_string()))?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    let mut writer = stream.try_clone()?;
    let mut request = format!(
        "POST {path} HTTP/1.1\r\nHost: {host}:{port}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n",
        body.len()
    );
    for (name, value) in headers {
        request.push_str(&format!("{name}: {value}\r\n"));
    }
    request.push_str("\r\n");
    writer.write_all(request.as_bytes())?;
    writer.write_all(body.as_bytes())?;
    writer.flush()?;

    let mut reader = BufReader::new(stream);
    let mut status_line = String::new();
    reader.read_line(&mut status_line)?;
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| HttpError::Malformed(format!("bad status line: {status_line:?}")))?;

    let mut content_length: Option<usize> = None;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some((name, value)) = trimmed.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().ok();
            }
        }
    }

    let body = match content_length {
        Some(len) => {
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf)?;
            String::from_utf8_lossy(&buf).into_owned()
        }
        None => {
            let mut buf = String::new();
            reader.read_to_string(&mut buf)?;
            buf
        }
    };
    Ok(HttpResponse { status, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    /// One-shot test server: answers `responses.len()` requests then stops.
    fn spawn_server(responses: Vec<(u16, String)>) -> (u16, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, reply) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let mut content_length = 0usize;
                loop {
                    let mut header = String::new();
                    reader.read_line(&mut header).unwrap();
                    if header.trim().is_empty() {
                        break;
                    }
                    if let Some((name, value)) = header.trim().split_once(':') {
                        if name.eq_ignore_ascii_case("content-length") {
                            content_length = value.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; content_length];
                reader.read_exact(&mut body).unwrap();
                bodies.push(String::from_utf8_lossy(&body).into_owned());
                let mut stream = stream;
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
            bodies
        });
        (port, handle)
    }

    #[test]
    fn post_round_trip() {
        let (port, handle) = spawn_server(vec![(200, r#"{"ok":true}"#.to_string())]);
        let response = post(
            "127.0.0.1",
            port,
            "/rpc",
            "application/json",
            r#"{"q":1}"#,
            &[],
            Duration::from_secs(5),
        )
        .unwrap();
        assert_eq!(response.status, 200);
        assert_eq!(response.body, r#"{"ok":true}"#);
        let bodies = handle.join().unwrap();
        assert_eq!(bodies, vec![r#"{"q":1}"#.to_string()]);
    }

    #[test]
    fn server_error_status_is_visible() {
        let (port, handle) = spawn_server(vec![(500, "boom".to_string())]);
        let response = post(
            "127.0.0.1",
            port,
            "/rpc",
            "application/json",
            "{}",
            &[],
            Duration::from_secs(5),
        )
        .unwrap();
        assert_eq!(response.status, 500);
        handle.join().unwrap();
    }
}
