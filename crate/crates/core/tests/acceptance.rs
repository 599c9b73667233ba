//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvlive_core::bench::{generate_program, linear_fit, prepared, run_benchmark, DEFAULT_SIZES, INSERTED, REPETITIONS};
use rvlive_core::explain::{explain_double, explain_signed_int};
use rvlive_core::isa::{decode, encode, INSTRUCTIONS};
use rvlive_core::program::OpCounters;
use rvlive_core::sim::StopReason;
use rvlive_core::{apply_edit, assemble_full, AssemblyState, Document, EditClass, EditEvent};

type Outcome = Result<String, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn equivalence() -> Outcome {
    let traces: Vec<_> = (0..1000).map(support::trace).collect();
    let fraction = support::char_insert_fraction(&traces);
    ensure(fraction >= 0.6, || format!("character inserts are only {:.1}% of events", 100.0 * fraction))?;
    for t in &traces {
        ensure(t.initial.split('\n').count() <= support::MAX_LINES, || format!("seed {} too long", t.seed))?;
        ensure(t.events.len() <= support::MAX_EVENTS, || format!("seed {} too many events", t.seed))?;
        support::replay(t, true)?;
    }
    let events: usize = traces.iter().map(|t| t.events.len()).sum();
    Ok(format!("1000 traces, {events} events, {:.1}% char inserts, zero divergences", 100.0 * fraction))
}

fn timing_trend() -> Outcome {
    let report = run_benchmark(&DEFAULT_SIZES, REPETITIONS);
    let row = |n| report.rows.iter().find(|r| r.lines == n).unwrap();
    let fit = report.full_fit.ok_or("degenerate fit")?;
    let paper: Vec<(f64, f64)> = [
        (1, 110), (10, 654), (100, 4544), (1000, 35712), (2000, 69889), (3000, 98084), (4000, 128727),
        (5000, 154417), (6000, 175045), (7000, 199652), (8000, 220164), (9000, 239106), (10000, 261555),
    ]
    .iter()
    .map(|&(n, us)| (n as f64, us as f64))
    .collect();
    let paper_fit = linear_fit(&paper).unwrap();
    let growth = row(10000).incremental_us / row(100).incremental_us;
    let speedup = row(10000).full_us / row(10000).incremental_us;
    let detail = format!(
        "full R^2 {:.4} (published table {:.4}), incremental n=10000/n=100 {growth:.2}x, speedup at n=10000 {speedup:.0}x",
        fit.r_squared, paper_fit.r_squared
    );
    ensure(fit.r_squared >= 0.95, || format!("R^2 below 0.95: {detail}"))?;
    ensure(growth < 5.0, || format!("incremental growth too steep: {detail}"))?;
    ensure(speedup >= 50.0, || format!("speedup too small: {detail}"))?;
    Ok(detail)
}

/// Counters for the first keystroke (line insert) and the last keystroke
/// (line change) of typing the benchmark instruction at n/2.
fn keystroke_counters(n: usize) -> (OpCounters, OpCounters, usize) {
    let (mut state, mut doc, line) = prepared(n);
    let mut counters = Vec::new();
    for (col, ch) in INSERTED.chars().enumerate() {
        let delta = apply_edit(&mut state, &mut doc, &EditEvent::InsertChar { line, col, ch }).unwrap();
        counters.push((delta.class, delta.counters));
    }
    assert_eq!(counters[0].0, EditClass::IncrementalLineInsert);
    assert_eq!(counters.last().unwrap().0, EditClass::IncrementalLineChange);
    (counters[0].1, counters.last().unwrap().1, state.symbols.len())
}

fn complexity_counters() -> Outcome {
    let (insert_small, change_small, m) = keystroke_counters(100);
    let (insert_large, change_large, _) = keystroke_counters(10000);
    ensure(change_small == change_large, || format!("line change counters differ: {change_small:?} vs {change_large:?}"))?;
    ensure(change_small.lines_assembled == 1, || format!("line change assembled {} lines", change_small.lines_assembled))?;
    ensure(change_small.symbol_entries_scanned <= m as u64, || {
        format!("line change scanned {} symbols with m = {m}", change_small.symbol_entries_scanned)
    })?;
    let ratio = insert_large.bytes_moved as f64 / insert_small.bytes_moved as f64 / 100.0;
    ensure((0.8..=1.2).contains(&ratio), || {
        format!("byte shift {} -> {} is {ratio:.2} of the size ratio", insert_small.bytes_moved, insert_large.bytes_moved)
    })?;
    for n in [1, 100, 10000] {
        let full = assemble_full(&generate_program(n)).counters.lines_assembled;
        ensure(full == n as u64, || format!("full assembly of {n} lines assembled {full}"))?;
    }
    Ok(format!(
        "change: {} line, {} symbol scans at n=100 and n=10000; insert bytes moved {} -> {} (ratio {ratio:.2}); full assembles n lines",
        change_small.lines_assembled, change_small.symbol_entries_scanned, insert_small.bytes_moved, insert_large.bytes_moved
    ))
}

fn encoding() -> Outcome {
    let vectors = support::golden();
    ensure(vectors.iter().any(|(w, s)| *w == 0xF871_0093 && s == "addi x1, x2, -121"), || "missing addi x1, x2, -121".into())?;
    for (word, src) in &vectors {
        let state = assemble_full(src);
        let got = state.image.read_word(0);
        ensure(!state.has_errors() && got == *word, || format!("{src}: expected {word:#010x}, got {got:#010x}"))?;
    }
    for spec in INSTRUCTIONS {
        let mut words: Vec<u32> =
            vectors.iter().map(|(w, _)| *w).filter(|w| decode(*w).is_some_and(|i| i.mnemonic() == spec.mnemonic)).collect();
        words.sort_unstable();
        words.dedup();
        let needed = if matches!(spec.mnemonic, "ecall" | "ebreak") { 1 } else { 2 };
        ensure(words.len() >= needed, || format!("{} has {} golden vectors", spec.mnemonic, words.len()))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100_000 {
        let word = support::random_word(&mut rng);
        let back = decode(word).and_then(|i| encode(&i).ok());
        ensure(back == Some(word), || format!("{word:#010x} round-trips to {back:?}"))?;
    }
    Ok(format!("{} golden vectors bit-exact over {} mnemonics; 100000 round-trips", vectors.len(), INSTRUCTIONS.len()))
}

fn type_line(state: &mut AssemblyState, doc: &mut Document, line: usize, text: &str) {
    for (col, ch) in text.chars().enumerate() {
        apply_edit(state, doc, &EditEvent::InsertChar { line, col, ch }).unwrap();
    }
}

/// Types `text` into blank line `line` of `src` and returns the word at
/// `address`, after checking the result against a full reassembly.
fn insert_and_read(src: &str, line: usize, text: &str, address: u32) -> Result<u32, String> {
    let mut state = assemble_full(src);
    let mut doc = Document::from_text(src);
    type_line(&mut state, &mut doc, line, text);
    let full = assemble_full(&doc.text());
    ensure(state.observable() == full.observable(), || format!("{src:?}: incremental state diverges from full reassembly"))?;
    Ok(state.image.read_word(address))
}

fn insertion_crossing() -> Outcome {
    let imm = |w: u32| decode(w).map(|i| i.imm);
    let backward = insert_and_read("loop:\naddi x1, x1, -1\n\nbne x1, x0, loop", 2, "add x2, x2, x2", 8)?;
    ensure(imm(backward) == Some(-8), || format!("backward branch offset {:?}", imm(backward)))?;
    let forward = insert_and_read("beq x1, x2, done\n\nnop\ndone:\necall", 1, "nop", 0)?;
    ensure(imm(forward) == Some(12), || format!("forward branch offset {:?}", imm(forward)))?;
    let outside = insert_and_read("loop:\naddi x1, x1, -1\nbne x1, x0, loop\n", 3, "nop", 4)?;
    ensure(imm(outside) == Some(-4), || format!("branch outside the interval moved to {:?}", imm(outside)))?;
    let before = insert_and_read("\nloop:\naddi x1, x1, -1\nbne x1, x0, loop", 0, "nop", 8)?;
    ensure(imm(before) == Some(-4), || format!("insertion before both changed the offset to {:?}", imm(before)))?;
    Ok("backward -8, forward +12, insertions outside the interval leave offsets unchanged".into())
}

fn simulator() -> Outcome {
    let (m, out, stop) = support::run_fixture("sum.s", &[]);
    ensure(stop == StopReason::Halted && m.regs[10] == 55 && out == "55", || format!("sum: {stop:?} a0={} {out:?}", m.regs[10]))?;
    let (_, out, stop) = support::run_fixture("hello.s", &[]);
    ensure(stop == StopReason::Halted && out == "Hello, RISC-V!\n", || format!("hello: {stop:?} {out:?}"))?;
    let (_, out, stop) = support::run_fixture("echo.s", &[5, -3]);
    ensure(stop == StopReason::Halted && out == "5 10\n-3 -6\n", || format!("echo: {stop:?} {out:?}"))?;
    let (m, _, stop) = support::run_fixture("divzero.s", &[]);
    let expected = [u32::MAX, u32::MAX, 7, 7, 0x8000_0000, 0, -3i32 as u32, u32::MAX];
    let got = [9, 18, 19, 20, 21, 22, 23, 24].map(|r| m.regs[r]);
    ensure(stop == StopReason::Halted && got == expected, || format!("divzero: {stop:?} {got:x?}"))?;
    let steps = support::check_random_sequences(7, 10_000);
    Ok(format!("4 fixtures match; x0 and change-set replay hold over 10000 sequences ({steps} steps)"))
}

fn explainers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let boundaries = [0u32, 1, 0x7FFF_FFFF, 0x8000_0000, 0x8000_0001, 0xFFFF_FFFF, 0xFFFF_FFFE];
    let words = boundaries.into_iter().chain((0..100_000).map(|_| rng.gen::<u32>()));
    for word in words {
        let value = explain_signed_int(word).decimal_value;
        ensure(value == word as i32 as i64, || format!("{word:#010x} explained as {value}"))?;
    }
    let specials = [0.0f64, -0.0, 1.0, 0.1, f64::MIN_POSITIVE, f64::MAX, f64::INFINITY, f64::NEG_INFINITY].map(f64::to_bits);
    let mut checked = 0;
    for bits in specials.into_iter().chain([1, 0x800F_FFFF_FFFF_FFFF]).chain((0..100_000).map(|_| rng.gen::<u64>())) {
        if f64::from_bits(bits).is_nan() {
            continue;
        }
        let back = explain_double(bits).reconstruct().to_bits();
        ensure(back == bits, || format!("{bits:#018x} reconstructs to {back:#018x}"))?;
        checked += 1;
    }
    Ok(format!("100007 integers agree; {checked} non-NaN doubles reconstruct bit-exactly"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("incremental/full equivalence", equivalence),
        ("timing trend", timing_trend),
        ("complexity counters", complexity_counters),
        ("encoding golden suite", encoding),
        ("insertion crossing", insertion_crossing),
        ("simulator fixtures and properties", simulator),
        ("explainers", explainers),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let text = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", text.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
