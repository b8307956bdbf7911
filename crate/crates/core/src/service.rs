//! Sessions and transports. A session is one engine driven by a coordinator
//! thread; transports feed it lines and forward its outbound lines through a
//! single writer.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{never, select, unbounded, Receiver, Sender};

use crate::engine::{Engine, EngineStats, TaskKey};
use crate::scheduler::{LogEvent, SchedulerError};

pub enum Inbound {
    Line(String),
    /// Lines handled as one unit, with dispatch held until the last one.
    Batch(Vec<String>),
    /// Answered once the engine is quiescent.
    WaitQuiescent(Sender<()>),
    /// The client went away; the session drains and ends.
    Close,
}

/// What a finished session leaves behind.
pub struct SessionReport {
    pub stats: EngineStats,
    pub log: Vec<LogEvent<TaskKey>>,
}

pub struct Session {
    pub inbox: Sender<Inbound>,
    pub outbound: Receiver<String>,
    pub coordinator: JoinHandle<SessionReport>,
}

/// Starts a coordinator thread owning a fresh engine with `workers` workers.
pub fn spawn_session(workers: usize) -> Result<Session, SchedulerError> {
    let engine = Engine::new(workers)?;
    let (in_tx, in_rx) = unbounded();
    let (out_tx, out_rx) = unbounded();
    let coordinator = std::thread::Builder::new()
        .name("proofdoc-coordinator".into())
        .spawn(move || coordinate(engine, in_rx, out_tx))
        .expect("spawn coordinator");
    Ok(Session {
        inbox: in_tx,
        outbound: out_rx,
        coordinator,
    })
}

fn coordinate(mut engine: Engine, inbox: Receiver<Inbound>, out: Sender<String>) -> SessionReport {
    let done = engine.completions().clone();
    let mut inbox = inbox;
    let mut waiters: Vec<Sender<()>> = Vec::new();
    let mut closed = false;
    loop {
        for msg in engine.take_outbox() {
            let _ = out.send(msg.to_line());
        }
        if engine.is_quiescent() {
            for w in waiters.drain(..) {
                let _ = w.send(());
            }
            if closed || engine.shutdown_requested() {
                break;
            }
        }
        select! {
            recv(inbox) -> m => match m {
                Ok(Inbound::Line(line)) => engine.handle_line(&line),
                Ok(Inbound::Batch(lines)) => engine.handle_batch(lines.iter().map(String::as_str)),
                Ok(Inbound::WaitQuiescent(w)) => waiters.push(w),
                Ok(Inbound::Close) | Err(_) => {
                    closed = true;
                    inbox = never();
                }
            },
            recv(done) -> c => engine.on_completion(c.expect("workers alive while engine exists")),
        }
    }
    SessionReport {
        stats: engine.stats(),
        log: engine.scheduler_log().to_vec(),
    }
}

fn is_control(line: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(|t| t == "wait_quiescent"))
        .unwrap_or(false)
}

/// Feeds an NDJSON script to a fresh session and writes every server line
/// to `out` in arrival order. Lines between control lines
/// `{"type":"wait_quiescent"}` form one batch; the script ends with an
/// implicit wait.
pub fn replay(script: &str, workers: usize, out: &mut impl Write) -> io::Result<SessionReport> {
    let session = spawn_session(workers).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut batches: Vec<Vec<String>> = vec![Vec::new()];
    for line in script.lines().filter(|l| !l.trim().is_empty()) {
        if is_control(line) {
            batches.push(Vec::new());
        } else {
            batches.last_mut().expect("non-empty").push(line.to_string());
        }
    }
    let mut write_err = None;
    let mut write = |line: String, out: &mut dyn Write| {
        if write_err.is_none() {
            if let Err(e) = writeln!(out, "{line}") {
                write_err = Some(e);
            }
        }
    };
    for batch in batches {
        let (tx, rx) = unbounded();
        if !batch.is_empty() {
            let _ = session.inbox.send(Inbound::Batch(batch));
        }
        let _ = session.inbox.send(Inbound::WaitQuiescent(tx));
        loop {
            select! {
                recv(session.outbound) -> l => match l {
                    Ok(l) => write(l, out),
                    Err(_) => break,
                },
                recv(rx) -> _ => break,
            }
        }
    }
    let _ = session.inbox.send(Inbound::Close);
    let report = session.coordinator.join().expect("coordinator panicked");
    for l in session.outbound.try_iter() {
        write(l, out);
    }
    match write_err {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Runs one session over a line-oriented byte stream pair.
pub fn serve_lines(
    workers: usize,
    reader: impl BufRead + Send + 'static,
    mut writer: impl Write + Send + 'static,
) -> Result<SessionReport, SchedulerError> {
    let session = spawn_session(workers)?;
    let inbox = session.inbox.clone();
    std::thread::spawn(move || {
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            if inbox.send(Inbound::Line(line)).is_err() {
                return;
            }
        }
        let _ = inbox.send(Inbound::Close);
    });
    let outbound = session.outbound.clone();
    let writer_thread = std::thread::spawn(move || {
        for line in outbound {
            if writeln!(writer, "{line}").and_then(|_| writer.flush()).is_err() {
                break;
            }
        }
    });
    drop(session.outbound);
    let report = session.coordinator.join().expect("coordinator panicked");
    let _ = writer_thread.join();
    Ok(report)
}

pub fn serve_stdio(workers: usize) -> Result<SessionReport, SchedulerError> {
    serve_lines(workers, BufReader::new(io::stdin()), io::stdout())
}

/// Accepts one NDJSON connection at a time, each with a fresh engine.
pub fn serve_tcp(listener: TcpListener, workers: usize) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = BufReader::new(stream.try_clone()?);
        let closer = stream.try_clone()?;
        serve_lines(workers, reader, stream).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        // After a shutdown the reader thread may still be blocked on the socket.
        let _ = closer.shutdown(std::net::Shutdown::Both);
    }
    Ok(())
}

/// One WebSocket connection: each text frame carries NDJSON lines, each
/// server message goes out as one text frame.
pub fn serve_ws_connection(stream: TcpStream, workers: usize) -> io::Result<SessionReport> {
    use tungstenite::{Error as WsError, Message};

    let mut ws = tungstenite::accept(stream.try_clone()?).map_err(|e| io::Error::other(e.to_string()))?;
    stream.set_read_timeout(Some(Duration::from_millis(5)))?;
    let session = spawn_session(workers).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut client_open = true;
    loop {
        if client_open {
            match ws.read() {
                Ok(Message::Text(t)) => {
                    for line in t.as_str().lines().filter(|l| !l.trim().is_empty()) {
                        let _ = session.inbox.send(Inbound::Line(line.to_string()));
                    }
                }
                Ok(Message::Close(_)) => {
                    client_open = false;
                    let _ = session.inbox.send(Inbound::Close);
                }
                Ok(_) => {}
                Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(_) => {
                    client_open = false;
                    let _ = session.inbox.send(Inbound::Close);
                }
            }
        }
        let mut finished = false;
        loop {
            match session.outbound.try_recv() {
                Ok(line) => {
                    if client_open && ws.send(Message::text(line)).is_err() {
                        client_open = false;
                        let _ = session.inbox.send(Inbound::Close);
                    }
                }
                Err(crossbeam_channel::TryRecvError::Empty) => break,
                Err(crossbeam_channel::TryRecvError::Disconnected) => {
                    finished = true;
                    break;
                }
            }
        }
        if finished {
            break;
        }
        if !client_open {
            std::thread::sleep(Duration::from_millis(5));
        }
    }
    if client_open {
        let _ = ws.close(None);
        let _ = ws.flush();
    }
    Ok(session.coordinator.join().expect("coordinator panicked"))
}

pub fn serve_ws(listener: TcpListener, workers: usize) -> io::Result<()> {
    for stream in listener.incoming() {
        serve_ws_connection(stream?, workers)?;
    }
    Ok(())
}
