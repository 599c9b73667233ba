//! Line-oriented front end to the session protocol. Shorthand commands are
//! translated to protocol requests and handled in-process, so the REPL
//! behaves exactly like a server connection.

use std::io::{BufRead, Write};
use std::sync::Arc;

use anyhow::Result;
use rvlive_core::incremental::EditEvent;
use rvlive_core::protocol::{Handler, Outgoing, Request, RequestEnvelope, PROTOCOL_VERSION};
use rvlive_core::session::{Control, ExplainRequest, Mode, Query};

const HELP: &str = "\
commands (lines and columns are 0-based):
  type LINE COL TEXT        insert TEXT one character at a time
  newline LINE COL          split a line
  delete L1 C1 L2 C2        delete a range
  paste LINE COL TEXT       paste TEXT (\\n for newlines)
  reset | step | run [N] | animate [N]
  input N                   answer a read request
  regs | mem ADDR LEN | disasm ADDR COUNT
  diag | symbols | lines | text | dump
  explain line N | explain instr W | explain int W | explain double BITS
  mode full|incremental
  {...}                     send a raw protocol request
  help | quit";

fn num<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T, String> {
    let s = s.ok_or(format!("missing {what}"))?;
    let parsed = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok().and_then(|v| v.to_string().parse().ok()),
        None => s.parse().ok(),
    };
    parsed.ok_or(format!("bad {what}: {s}"))
}

/// Turns one command line into the requests it stands for.
pub fn translate(line: &str) -> Result<Vec<Request>, String> {
    let line = line.trim();
    if line.starts_with('{') {
        let envelope: RequestEnvelope = serde_json::from_str(line).map_err(|e| e.to_string())?;
        return Ok(vec![envelope.request]);
    }
    let mut words = line.splitn(2, ' ');
    let command = words.next().unwrap_or("");
    let rest = words.next().unwrap_or("").trim();
    let mut args = rest.split_whitespace();
    let query = |q: Query| Ok(vec![Request::Query { query: q }]);
    let control = |c: Control| Ok(vec![Request::Control { control: c }]);
    match command {
        "type" | "paste" => {
            let mut parts = rest.splitn(3, ' ');
            let line: usize = num(parts.next(), "line")?;
            let col: usize = num(parts.next(), "column")?;
            let text = parts.next().unwrap_or("");
            if command == "paste" {
                let text = text.replace("\\n", "\n");
                return Ok(vec![Request::Edit { event: EditEvent::Paste { line, col, text } }]);
            }
            Ok(text
                .chars()
                .enumerate()
                .map(|(i, ch)| Request::Edit { event: EditEvent::InsertChar { line, col: col + i, ch } })
                .collect())
        }
        "newline" => {
            let event = EditEvent::InsertNewline { line: num(args.next(), "line")?, col: num(args.next(), "column")? };
            Ok(vec![Request::Edit { event }])
        }
        "delete" => {
            let event = EditEvent::DeleteRange {
                start_line: num(args.next(), "start line")?,
                start_col: num(args.next(), "start column")?,
                end_line: num(args.next(), "end line")?,
                end_col: num(args.next(), "end column")?,
            };
            Ok(vec![Request::Edit { event }])
        }
        "reset" => control(Control::Reset),
        "step" => control(Control::Step),
        "run" => control(Control::Run { max_steps: args.next().map_or(Ok(10_000_000), |s| num(Some(s), "steps"))? }),
        "animate" => control(Control::Animate { max_steps: args.next().map_or(Ok(100), |s| num(Some(s), "steps"))? }),
        "input" => Ok(vec![Request::Input { value: num(args.next(), "value")? }]),
        "regs" => query(Query::Registers),
        "mem" => query(Query::Memory { address: num(args.next(), "address")?, length: num(args.next(), "length")? }),
        "disasm" => query(Query::Disassembly { address: num(args.next(), "address")?, count: num(args.next(), "count")? }),
        "diag" => query(Query::Diagnostics),
        "symbols" => query(Query::Symbols),
        "lines" => query(Query::Lines),
        "text" => query(Query::Text),
        "dump" => query(Query::Dump),
        "explain" => {
            let request = match args.next() {
                Some("line") => ExplainRequest::Line { line: num(args.next(), "line")? },
                Some("instr") => ExplainRequest::Instruction { word: num(args.next(), "word")? },
                Some("int") => ExplainRequest::SignedInt { word: num(args.next(), "word")? },
                Some("double") => ExplainRequest::Double { bits: args.next().ok_or("missing bits")?.to_string() },
                _ => return Err("explain line|instr|int|double VALUE".into()),
            };
            query(Query::Explain { request })
        }
        "mode" => {
            let mode = match args.next() {
                Some("full") => Mode::Full,
                Some("incremental") => Mode::Incremental,
                _ => return Err("mode full|incremental".into()),
            };
            Ok(vec![Request::SetMode { mode }])
        }
        other => Err(format!("unknown command {other:?}; try help")),
    }
}

/// Drives a session from `input`, writing protocol replies to `out`. A
/// multi-keystroke command prints the reply to its last keystroke and any
/// errors along the way.
pub fn run_script(text: &str, input: impl BufRead, out: &mut impl Write, prompt: bool) -> Result<()> {
    let mut handler = Handler::new(Arc::default());
    let mut id = 0;
    let mut send = |handler: &mut Handler, request: Request, echo: bool, out: &mut dyn Write| -> Result<()> {
        id += 1;
        let mut lines = Vec::new();
        handler.handle(RequestEnvelope { v: PROTOCOL_VERSION, id, request }, &mut |o: Outgoing| lines.push(o));
        for o in lines {
            let failed = matches!(&o, Outgoing::Response(r) if !r.ok);
            if echo || failed {
                writeln!(out, "{}", o.to_line())?;
            }
        }
        Ok(())
    };
    send(&mut handler, Request::Open { text: text.to_string(), mode: Mode::Incremental }, true, out)?;
    if prompt {
        write!(out, "> ")?;
        out.flush()?;
    }
    for line in input.lines() {
        let line = line?;
        match line.trim() {
            "" => {}
            "quit" | "exit" => break,
            "help" => writeln!(out, "{HELP}")?,
            command => match translate(command) {
                Ok(requests) => {
                    let last = requests.len().saturating_sub(1);
                    for (i, request) in requests.into_iter().enumerate() {
                        send(&mut handler, request, i == last, out)?;
                    }
                }
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
        if prompt {
            write!(out, "> ")?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn run(text: &str) -> Result<()> {
    let stdin = std::io::stdin();
    run_script(text, stdin.lock(), &mut std::io::stdout(), true)
}
