//! Random programs and edit traces shared by the property tests and the
//! acceptance suite.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rvlive_core::incremental::{apply_edit, Document, EditEvent};
use rvlive_core::program::{MachineImage, DATA_BASE};
use rvlive_core::sim::{ChangeSet, MachineState, ScriptedIo, StopReason};
use rvlive_core::{assemble_full, AssemblyState};

pub const MAX_LINES: usize = 300;
pub const MAX_EVENTS: usize = 200;

const REGS: &[&str] = &["x0", "x1", "x2", "x5", "a0", "a1", "t0", "s1", "sp", "ra"];

fn reg(rng: &mut ChaCha8Rng) -> &'static str {
    REGS.choose(rng).unwrap()
}

fn label_name(rng: &mut ChaCha8Rng, labels: &[String]) -> String {
    if !labels.is_empty() && rng.gen_bool(0.85) {
        labels.choose(rng).unwrap().clone()
    } else {
        format!("l{}", rng.gen_range(0..40))
    }
}

/// One random instruction line, mostly valid.
pub fn instruction(rng: &mut ChaCha8Rng, labels: &[String]) -> String {
    match rng.gen_range(0..14) {
        0 => format!("add {}, {}, {}", reg(rng), reg(rng), reg(rng)),
        1 => format!("addi {}, {}, {}", reg(rng), reg(rng), rng.gen_range(-2048..2048)),
        2 => format!("lw {}, {}({})", reg(rng), 4 * rng.gen_range(-8..8), reg(rng)),
        3 => format!("sw {}, {}({})", reg(rng), 4 * rng.gen_range(-8..8), reg(rng)),
        4 => format!("bne {}, {}, {}", reg(rng), reg(rng), label_name(rng, labels)),
        5 => format!("beqz {}, {}", reg(rng), label_name(rng, labels)),
        6 => format!("j {}", label_name(rng, labels)),
        7 => format!("jal ra, {}", label_name(rng, labels)),
        8 => format!("mul {}, {}, {}", reg(rng), reg(rng), reg(rng)),
        9 => format!("slli {}, {}, {}", reg(rng), reg(rng), rng.gen_range(0..32)),
        10 => format!("li {}, {}", reg(rng), rng.gen_range(-100..100)),
        11 => "ecall".to_string(),
        12 => format!("addi x1, x2, -121  # c{}", rng.gen_range(0..9)),
        _ => ["nop", "ret", "mv a0, a1", "addq x1, x2, 3", "lui t0, 0x12345", "bad line"]
            .choose(rng)
            .unwrap()
            .to_string(),
    }
}

/// A random program of at most `max_lines` lines.
pub fn program(rng: &mut ChaCha8Rng, max_lines: usize) -> String {
    let n = rng.gen_range(0..=max_lines);
    let labels: Vec<String> = (0..rng.gen_range(0..12)).map(|i| format!("l{i}")).collect();
    let mut lines = Vec::with_capacity(n);
    let mut declared = Vec::new();
    while lines.len() < n {
        let line = match rng.gen_range(0..20) {
            0 | 1 if declared.len() < labels.len() => {
                let l = labels[declared.len()].clone();
                declared.push(l.clone());
                format!("{l}:")
            }
            2 => String::new(),
            3 => "# comment".to_string(),
            4 => format!(".word {}, {}", rng.gen_range(-5..5), rng.gen_range(0..1000)),
            5 if rng.gen_bool(0.3) => ".string \"hi there\"".to_string(),
            5 => ".double 2.5".to_string(),
            _ => instruction(rng, &labels),
        };
        lines.push(line);
    }
    lines.join("\n")
}

fn random_position(rng: &mut ChaCha8Rng, doc: &Document) -> (usize, usize) {
    if doc.line_count() == 0 {
        return (0, 0);
    }
    let line = rng.gen_range(0..doc.line_count());
    let len = doc.line(line).unwrap().chars().count();
    (line, rng.gen_range(0..=len))
}

fn labels_in(doc: &Document) -> Vec<String> {
    doc.lines()
        .iter()
        .filter_map(|l| l.trim().strip_suffix(':').map(str::to_string))
        .collect()
}

/// Produces the next burst of events against the current document. Most
/// bursts type a whole instruction into a fresh blank line, which is the
/// edit the incremental engine is built for.
fn burst(rng: &mut ChaCha8Rng, doc: &Document) -> Vec<EditEvent> {
    let (line, col) = random_position(rng, doc);
    match rng.gen_range(0..100) {
        0..=54 => {
            // open a blank line (at the start or end of an existing one) and type into it
            let line_len = doc.line(line).map_or(0, |l| l.chars().count());
            let at_end = rng.gen_bool(0.5);
            let target = if doc.line_count() == 0 { 0 } else if at_end { line + 1 } else { line };
            let mut events = Vec::new();
            if doc.line_count() > 0 {
                events.push(EditEvent::InsertNewline { line, col: if at_end { line_len } else { 0 } });
            }
            let mut text = instruction(rng, &labels_in(doc));
            if rng.gen_bool(0.05) {
                text = format!("l{}:", rng.gen_range(0..20));
            }
            events.extend(text.chars().enumerate().map(|(i, ch)| EditEvent::InsertChar { line: target, col: i, ch }));
            events
        }
        55..=79 => {
            let ch = *b"abdeijlnopqrstwx0123456789, -()#.:\t"
                .choose(rng)
                .unwrap() as char;
            vec![EditEvent::InsertChar { line, col, ch }]
        }
        80..=88 => vec![EditEvent::InsertNewline { line, col }],
        89..=95 => {
            let (end_line, end_col) = random_position(rng, doc);
            let (start, end) = if (end_line, end_col) < (line, col) {
                ((end_line, end_col), (line, col))
            } else {
                ((line, col), (end_line, end_col))
            };
            // keep deletes small
            let end = if end.0 > start.0 + 3 { start } else { end };
            vec![EditEvent::DeleteRange { start_line: start.0, start_col: start.1, end_line: end.0, end_col: end.1 }]
        }
        _ => {
            let text = if rng.gen_bool(0.5) {
                instruction(rng, &labels_in(doc))
            } else {
                format!("{}\n{}", instruction(rng, &[]), instruction(rng, &[]))
            };
            vec![EditEvent::Paste { line, col, text }]
        }
    }
}

pub struct Trace {
    pub seed: u64,
    pub initial: String,
    pub events: Vec<EditEvent>,
}

/// A seeded trace of at most `MAX_EVENTS` events. Events are generated
/// against a document that is edited along the way so every position is valid.
pub fn trace(seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = program(&mut rng, MAX_LINES);
    let mut doc = Document::from_text(&initial);
    let mut events = Vec::new();
    let target = rng.gen_range(1..=MAX_EVENTS);
    while events.len() < target {
        for e in burst(&mut rng, &doc) {
            if events.len() == target {
                break;
            }
            doc.apply(&e).expect("generated events are valid");
            events.push(e);
        }
    }
    Trace { seed, initial, events }
}

pub fn char_insert_fraction(traces: &[Trace]) -> f64 {
    let total: usize = traces.iter().map(|t| t.events.len()).sum();
    let chars: usize = traces
        .iter()
        .flat_map(|t| &t.events)
        .filter(|e| matches!(e, EditEvent::InsertChar { .. }))
        .count();
    chars as f64 / total as f64
}

/// Replays a trace incrementally. With `check_each`, compares against a
/// full reassembly after every event; otherwise only at the end. Returns a
/// description of the first divergence.
pub fn replay(trace: &Trace, check_each: bool) -> Result<(), String> {
    let mut doc = Document::from_text(&trace.initial);
    let mut state: AssemblyState = assemble_full(&trace.initial);
    for (i, event) in trace.events.iter().enumerate() {
        let delta = apply_edit(&mut state, &mut doc, event).map_err(|e| format!("seed {}: event {i} rejected: {e}", trace.seed))?;
        if check_each || i + 1 == trace.events.len() {
            let expected = assemble_full(&doc.text()).observable();
            let actual = state.observable();
            if expected != actual {
                return Err(describe(trace.seed, i, event, &delta.class, &doc, &state, &expected, &actual));
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn describe(
    seed: u64,
    index: usize,
    event: &EditEvent,
    class: &rvlive_core::EditClass,
    doc: &Document,
    state: &AssemblyState,
    expected: &rvlive_core::program::ObservableState,
    actual: &rvlive_core::program::ObservableState,
) -> String {
    let mut out = format!("seed {seed}: divergence after event {index} {event:?} ({class:?})\n");
    if expected.text != actual.text {
        out += &format!("text differs: expected {} bytes, got {}\n", expected.text.len(), actual.text.len());
    }
    for (i, (e, a)) in expected.lines.iter().zip(&actual.lines).enumerate() {
        if e != a {
            out += &format!("line {i} {:?}: expected {e:?}, got {a:?}\n", doc.line(i));
        }
    }
    if expected.lines.len() != actual.lines.len() {
        out += &format!("line count {} vs {}\n", expected.lines.len(), actual.lines.len());
    }
    if expected.symbols != actual.symbols {
        out += &format!("symbols expected {:?}\n got {:?}\n", expected.symbols, actual.symbols);
    }
    if expected.references != actual.references {
        let missing: Vec<_> = expected.references.difference(&actual.references).collect();
        let extra: Vec<_> = actual.references.difference(&expected.references).collect();
        out += &format!("references missing {missing:?} extra {extra:?}\n");
    }
    let _ = state;
    out
}

/// A random word that decodes: any supported instruction with random
/// registers and an in-range immediate.
pub fn random_word(rng: &mut impl Rng) -> u32 {
    use rvlive_core::isa::{encode, immediate_range, Instruction, Reg, INSTRUCTIONS};
    let spec = INSTRUCTIONS.choose(rng).unwrap();
    let mut insn = Instruction::new(spec);
    let mut reg = || Reg::new(rng.gen_range(0..32)).unwrap();
    insn.rd = reg();
    insn.rs1 = reg();
    insn.rs2 = reg();
    if spec.fixed_imm.is_none() {
        let (lo, hi, even) = immediate_range(spec);
        let mut imm = rng.gen_range(lo..=hi);
        if even {
            imm &= !1;
        }
        insn.imm = imm as i32;
    }
    let word = encode(&insn).expect("in-range fields encode");
    // encode ignores fields the format lacks, so decode to normalize
    rvlive_core::isa::decode(word).map(|i| encode(&i).unwrap()).unwrap_or(word)
}

/// `(word, source)` pairs assembled by clang, one instruction at address 0.
pub fn golden() -> Vec<(u32, String)> {
    include_str!("../data/golden.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (word, src) = l.split_once('|').expect("word|source");
            (u32::from_str_radix(word.trim_start_matches("0x"), 16).unwrap(), src.to_string())
        })
        .collect()
}

pub fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn run_fixture(name: &str, input: &[i32]) -> (MachineState, String, StopReason) {
    let state = assemble_full(&fixture(name));
    assert!(!state.has_errors(), "{name}: {:?}", state.diagnostics().collect::<Vec<_>>());
    let mut machine = MachineState::reset(&state.image);
    let mut io = ScriptedIo::new(input.iter().copied());
    let stop = machine.run(&mut io, 1_000_000);
    (machine, io.output, stop)
}

/// A machine over `len` random decodable words, random data, and registers
/// that often point into mapped memory so loads and stores land.
pub fn random_machine(rng: &mut ChaCha8Rng, len: usize) -> MachineState {
    let mut image = MachineImage::default();
    for _ in 0..len {
        image.text.extend_from_slice(&random_word(rng).to_le_bytes());
    }
    image.data = (0..64).map(|_| rng.gen()).collect();
    let mut m = MachineState::reset(&image);
    for r in 1..32 {
        m.regs[r] = match rng.gen_range(0..4) {
            0 => DATA_BASE + 4 * rng.gen_range(0..16),
            1 => 0x7FFF_FF00 + 4 * rng.gen_range(0..32),
            2 => rng.gen_range(0..16),
            _ => rng.gen(),
        };
    }
    m
}

/// Copies exactly the declared writes from `after` onto `before`.
pub fn replay_changes(before: &MachineState, after: &MachineState, changes: &ChangeSet) -> MachineState {
    let mut m = before.clone();
    for &r in &changes.registers_written {
        m.regs[r] = after.regs[r];
    }
    for &a in &changes.memory_bytes_written {
        m.memory.write_byte(a, after.memory.read_byte(a).unwrap()).unwrap();
    }
    m.pc = changes.pc_after;
    m.steps_executed = after.steps_executed;
    m.halted = after.halted;
    m
}

/// Steps `sequences` random machines up to 16 instructions each, checking
/// that x0 stays zero and that replaying only the declared writes
/// reproduces every post-step state. Returns the number of steps executed.
pub fn check_random_sequences(seed: u64, sequences: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = 0;
    for _ in 0..sequences {
        let mut m = random_machine(&mut rng, 16);
        let mut io = ScriptedIo::new([3, -4, 5]);
        for _ in 0..16 {
            let before = m.clone();
            match m.step(&mut io) {
                Ok(changes) => {
                    steps += 1;
                    assert_eq!(m.regs[0], 0);
                    assert!(!changes.registers_written.contains(&0));
                    assert_eq!(replay_changes(&before, &m, &changes), m);
                    assert!(m.halted || m.pc % 4 == 0);
                }
                Err(_) => {
                    assert_eq!(m.regs, before.regs);
                    assert_eq!(m.memory, before.memory);
                    break;
                }
            }
            if m.halted {
                break;
            }
        }
    }
    steps
}
