mod repl;
mod serve;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rvlive_core::bench::{run_benchmark, DEFAULT_SIZES, REPETITIONS};
use rvlive_core::disasm::disassemble_word;
use rvlive_core::explain::{explain_double, explain_instruction, explain_signed_int};
use rvlive_core::sim::{Io, MachineState, StopReason};
use rvlive_core::{apply_edit, assemble_full, read_trace, AssemblyState, Document};

#[derive(Parser)]
#[command(name = "asm", version, about = "Live RV32IM assembler and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a file and report diagnostics
    Build {
        file: PathBuf,
        /// Print the line table, symbol table and image
        #[arg(long)]
        dump_state: bool,
        /// Write the raw text segment to this file
        #[arg(long)]
        emit_bin: Option<PathBuf>,
        /// Apply an edit trace (one JSON event per line) incrementally
        /// before reporting
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Assemble and execute a file
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000_000)]
        max_steps: u64,
        /// Print pc, word, disassembly and writes for every instruction
        #[arg(long)]
        trace: bool,
    },
    /// Disassemble a raw little-endian binary
    Disasm {
        file: PathBuf,
        /// Address of the first byte
        #[arg(long, default_value = "0", value_parser = parse_u32)]
        base: u32,
    },
    /// Break down an instruction word, integer or double as JSON
    Explain(ExplainArgs),
    /// Time full and incremental insertion over program sizes
    Bench {
        /// Comma-separated line counts
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also print the operation counters of every row
        #[arg(long)]
        counters: bool,
        #[arg(long, default_value_t = REPETITIONS)]
        repetitions: usize,
    },
    /// Interactive session on a file
    Repl { file: Option<PathBuf> },
    /// Serve sessions over TCP (JSON lines) and WebSocket on one port
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ExplainArgs {
    #[arg(long, value_parser = parse_u32)]
    instr: Option<u32>,
    #[arg(long, value_parser = parse_u32)]
    int: Option<u32>,
    #[arg(long, value_parser = parse_u64)]
    double: Option<u64>,
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.trim().replace('_', "");
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("{s:?}: {e}"))
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let v = parse_u64(s)?;
    u32::try_from(v).map_err(|_| format!("{s:?} does not fit in 32 bits"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_source(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn report_diagnostics(path: &Path, state: &AssemblyState) -> bool {
    let mut any = false;
    for d in state.diagnostics() {
        any = true;
        eprintln!(
            "{}:{}:{}: {}: {}",
            path.display(),
            d.line_number + 1,
            d.column_span.start + 1,
            serde_json::to_value(d.code).unwrap().as_str().unwrap_or("error"),
            d.message
        );
    }
    any
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Build { file, dump_state, emit_bin, replay } => {
            let source = read_source(&file)?;
            let mut state = assemble_full(&source);
            if let Some(trace) = replay {
                let events = read_trace(&read_source(&trace)?)?;
                let mut doc = Document::from_text(&source);
                for (i, event) in events.iter().enumerate() {
                    apply_edit(&mut state, &mut doc, event).with_context(|| format!("{}: event {}", trace.display(), i + 1))?;
                }
            }
            let failed = report_diagnostics(&file, &state);
            if dump_state {
                print!("{}", state.dump());
            }
            if let Some(out) = emit_bin {
                std::fs::write(&out, &state.image.text).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Run { file, max_steps, trace } => run_file(&file, max_steps, trace),
        Command::Disasm { file, base } => {
            let bytes = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            if bytes.len() % 4 != 0 {
                eprintln!("warning: ignoring {} trailing bytes", bytes.len() % 4);
            }
            for (i, chunk) in bytes.chunks_exact(4).enumerate() {
                let address = base.wrapping_add(4 * i as u32);
                let word = u32::from_le_bytes(chunk.try_into().unwrap());
                println!("{address:08x}: {word:08x}  {}", disassemble_word(word, address));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Explain(args) => {
            let value = if let Some(word) = args.instr {
                serde_json::to_value(explain_instruction(word)?)?
            } else if let Some(word) = args.int {
                serde_json::to_value(explain_signed_int(word))?
            } else if let Some(bits) = args.double {
                serde_json::to_value(explain_double(bits))?
            } else {
                bail!("nothing to explain")
            };
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { sizes, csv, counters, repetitions } => {
            let sizes = sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
            if sizes.is_empty() || repetitions == 0 {
                bail!("need at least one size and one repetition");
            }
            let report = run_benchmark(&sizes, repetitions);
            match csv {
                Some(path) => std::fs::write(&path, report.csv()).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", report.csv()),
            }
            match report.full_fit {
                Some(fit) => eprintln!(
                    "full per keystroke: {:.4} us/line * n + {:.2} us, R^2 = {:.4}",
                    fit.c1, fit.c2, fit.r_squared
                ),
                None => eprintln!("full per keystroke: fit degenerate (need two distinct sizes)"),
            }
            if let Some(slope) = report.incremental_slope {
                eprintln!("incremental per keystroke slope: {slope:.6} us/line");
            }
            if counters {
                for row in &report.rows {
                    let value = serde_json::json!({
                        "lines": row.lines,
                        "full": row.full_counters,
                        "insert": row.insert_counters,
                        "change": row.change_counters,
                    });
                    eprintln!("{value}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Repl { file } => {
            let text = match file {
                Some(path) => read_source(&path)?,
                None => String::new(),
            };
            repl::run(&text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { port, host } => {
            serve::serve(&host, port)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Console services on the process's stdin and stdout. Input is one
/// integer per line.
struct StdIo;

impl Io for StdIo {
    fn read_integer(&mut self) -> Option<i32> {
        let _ = std::io::stdout().flush();
        let mut line = String::new();
        loop {
            line.clear();
            if std::io::stdin().lock().read_line(&mut line).ok()? == 0 {
                return None;
            }
            match line.trim().parse() {
                Ok(v) => return Some(v),
                Err(_) => eprintln!("expected an integer, got {:?}", line.trim()),
            }
        }
    }

    fn write_text(&mut self, text: &str) {
        print!("{text}");
    }
}

fn run_file(file: &Path, max_steps: u64, trace: bool) -> Result<ExitCode> {
    let state = assemble_full(&read_source(file)?);
    if report_diagnostics(file, &state) {
        eprintln!("warning: running with errors; invalid lines hold the placeholder word and trap");
    }
    let mut machine = MachineState::reset(&state.image);
    let mut io = StdIo;
    let stop = if trace {
        machine.animate(&mut io, max_steps, |m, changes| {
            let word = m.memory.read(changes.pc_before, 4).unwrap_or(0);
            let regs: Vec<String> = changes.registers_written.iter().map(|&r| format!("x{r}=0x{:08x}", m.regs[r])).collect();
            let mem = match (changes.memory_bytes_written.first(), changes.memory_bytes_written.len()) {
                (Some(a), n) => format!(" mem[0x{a:08x}..+{n}]"),
                (None, _) => String::new(),
            };
            println!(
                "0x{:08x} {word:08x} {:<24} | {}{mem}",
                changes.pc_before,
                disassemble_word(word, changes.pc_before),
                regs.join(" ")
            );
        })
    } else {
        machine.run(&mut io, max_steps)
    };
    let _ = std::io::stdout().flush();
    match stop {
        StopReason::Halted => Ok(ExitCode::SUCCESS),
        StopReason::StepLimit => {
            eprintln!("stopped after {} steps (limit)", machine.steps_executed);
            Ok(ExitCode::FAILURE)
        }
        StopReason::Fault { fault } => {
            eprintln!("fault after {} steps: {fault}", machine.steps_executed);
            Ok(ExitCode::FAILURE)
        }
        StopReason::InputRequired => {
            eprintln!("program wanted input but stdin is closed");
            Ok(ExitCode::FAILURE)
        }
        StopReason::Interrupted => Ok(ExitCode::FAILURE),
    }
}
