use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proofdoc::report::{bench, check_text};
use proofdoc::service::{replay, serve_stdio, serve_tcp, serve_ws};

#[derive(Parser)]
#[command(name = "proofdoc", version, about = "Incremental, parallel checker for proof documents")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Args)]
struct Workers {
    /// Size of the worker pool.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
}

impl Workers {
    fn get(&self, default: usize) -> usize {
        self.workers.map(|w| w as usize).unwrap_or(default)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a file from scratch and report per-span statuses.
    Check {
        file: PathBuf,
        #[command(flatten)]
        workers: Workers,
        #[arg(long)]
        json: bool,
    },
    /// Run the NDJSON protocol over stdio, TCP and/or WebSocket.
    Serve {
        #[arg(long, conflicts_with = "port")]
        stdio: bool,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        ws_port: Option<u16>,
        #[command(flatten)]
        workers: Workers,
    },
    /// Feed an NDJSON script to a fresh engine and print every server message.
    Replay {
        script: PathBuf,
        #[command(flatten)]
        workers: Workers,
    },
    /// Time the check of K dn(N) lemmas.
    Bench {
        #[arg(long)]
        lemmas: usize,
        #[arg(long)]
        neg: usize,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        workers: u32,
        #[arg(long)]
        json: bool,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("proofdoc: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Check { file, workers, json } => {
            let text = match std::fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => return fail(format!("{}: {e}", file.display())),
            };
            let report = match check_text(&text, workers.get(default_workers())) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{}", report.render());
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Serve {
            stdio,
            port,
            ws_port,
            workers,
        } => {
            let workers = workers.get(default_workers());
            let mut threads = Vec::new();
            if let Some(p) = ws_port {
                let listener = match TcpListener::bind(("127.0.0.1", p)) {
                    Ok(l) => l,
                    Err(e) => return fail(format!("ws port {p}: {e}")),
                };
                eprintln!("proofdoc: websocket on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
                threads.push(std::thread::spawn(move || serve_ws(listener, workers)));
            }
            if let Some(p) = port {
                let listener = match TcpListener::bind(("127.0.0.1", p)) {
                    Ok(l) => l,
                    Err(e) => return fail(format!("port {p}: {e}")),
                };
                eprintln!("proofdoc: ndjson on {}", listener.local_addr().map(|a| a.to_string()).unwrap_or_default());
                threads.push(std::thread::spawn(move || serve_tcp(listener, workers)));
            }
            if stdio || threads.is_empty() {
                return match serve_stdio(workers) {
                    Ok(_) => ExitCode::SUCCESS,
                    Err(e) => fail(e),
                };
            }
            for t in threads {
                match t.join() {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => return fail(e),
                    Err(_) => return fail("server thread panicked"),
                }
            }
            ExitCode::SUCCESS
        }
        Cmd::Replay { script, workers } => {
            let text = match std::fs::read_to_string(&script) {
                Ok(t) => t,
                Err(e) => return fail(format!("{}: {e}", script.display())),
            };
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            match replay(&text, workers.get(1), &mut out) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Cmd::Bench {
            lemmas,
            neg,
            workers,
            json,
        } => {
            let report = match bench(lemmas, neg, workers as usize) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if json {
                println!("{}", serde_json::to_string(&report).expect("report serializes"));
            } else {
                println!(
                    "{} lemmas dn({neg}) on {} workers: wall {:.1} ms, cpu {:.1} ms, {} proved",
                    report.lemmas, report.workers, report.wall_ms, report.cpu_ms, report.proved
                );
            }
            if report.proved == lemmas {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
