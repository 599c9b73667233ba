//! Session server. Each connection gets its own session and worker thread.
//! A connection that opens with an HTTP `GET` is upgraded to a WebSocket
//! carrying one JSON message per text frame; anything else is read as JSON
//! lines.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::channel;
use std::time::Duration;

use anyhow::Result;
use rvlive_core::protocol::Connection;
use tungstenite::Message;

const POLL: Duration = Duration::from_millis(10);

pub fn serve(host: &str, port: u16) -> Result<()> {
    let listener = TcpListener::bind((host, port))?;
    eprintln!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            if let Err(e) = handle(stream) {
                eprintln!("{peer}: {e:#}");
            }
        });
    }
    Ok(())
}

fn handle(stream: TcpStream) -> Result<()> {
    let mut head = [0u8; 4];
    let n = loop {
        let n = stream.peek(&mut head)?;
        if n == 0 || n == head.len() || head[..n] != b"GET "[..n] {
            break n;
        }
        std::thread::sleep(POLL);
    };
    if n == 4 && &head == b"GET " {
        websocket(stream)
    } else {
        json_lines(stream)
    }
}

fn json_lines(stream: TcpStream) -> Result<()> {
    let mut writer = stream.try_clone()?;
    let conn = Connection::spawn(move |line| {
        let _ = writeln!(writer, "{line}").and_then(|()| writer.flush());
    });
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            conn.submit(line);
        }
    }
    conn.finish();
    Ok(())
}

fn websocket(stream: TcpStream) -> Result<()> {
    let mut ws = tungstenite::accept(stream)?;
    // short reads let this one thread also forward replies from the worker
    ws.get_mut().set_read_timeout(Some(POLL))?;
    let (tx, rx) = channel::<String>();
    let conn = Connection::spawn(move |line| {
        let _ = tx.send(line);
    });
    loop {
        while let Ok(line) = rx.try_recv() {
            ws.send(Message::text(line))?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => conn.submit(text.to_string()),
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e.into()),
        }
    }
    conn.finish();
    for line in rx.try_iter() {
        if ws.send(Message::text(line)).is_err() {
            break;
        }
    }
    Ok(())
}
