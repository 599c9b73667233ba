//! Times the insertion of one instruction into the middle of programs of
//! growing size, in full and incremental mode.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::incremental::{apply_edit, Document, EditEvent};
use crate::program::OpCounters;
use crate::{assemble_full, AssemblyState};

pub const DEFAULT_SIZES: [usize; 13] = [1, 10, 100, 1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000, 10000];
pub const INSERTED: &str = "addi x1, x2, -121";
pub const REPETITIONS: usize = 31;
pub const WARMUP: usize = 3;
pub const BLOCK: usize = 50;
const SEED: u64 = 0x5eed;

pub const CSV_HEADER: &str = "lines,full_us,incremental_us,full_us_per_keystroke,incr_us_per_keystroke";

/// A reproducible program of exactly `n` lines. Every block of 50 lines
/// holds a label on its second line and a branch back to it on its last,
/// so labels and references grow with `n`.
pub fn generate_program(n: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let regs = ["x5", "x6", "x7", "x28", "x29", "x30", "x31"];
    let mut lines = Vec::with_capacity(n);
    for i in 0..n {
        let block = i / BLOCK;
        let line = match i % BLOCK {
            1 => format!("L{block}:"),
            49 => format!("bne x5, x6, L{block}"),
            _ => {
                let rd = regs.choose(&mut rng).unwrap();
                let rs1 = regs.choose(&mut rng).unwrap();
                match rng.gen_range(0..4) {
                    0 => format!("addi {rd}, {rs1}, {}", rng.gen_range(-2048..2048)),
                    1 => format!("add {rd}, {rs1}, {}", regs.choose(&mut rng).unwrap()),
                    2 => format!("xor {rd}, {rs1}, {}", regs.choose(&mut rng).unwrap()),
                    _ => format!("slli {rd}, {rs1}, {}", rng.gen_range(0..32)),
                }
            }
        };
        lines.push(line);
    }
    lines.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub lines: usize,
    /// One full reassembly per keystroke, summed over the insertion.
    pub full_us: f64,
    /// The 17 incremental keystrokes of the insertion, summed.
    pub incremental_us: f64,
    pub full_us_per_keystroke: f64,
    pub incr_us_per_keystroke: f64,
    /// Counters of one full reassembly.
    pub full_counters: OpCounters,
    /// Counters of the keystroke that gives the line its word.
    pub insert_counters: OpCounters,
    /// Counters of the last keystroke, which only changes the line.
    pub change_counters: OpCounters,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3},{:.3}",
            self.lines, self.full_us, self.incremental_us, self.full_us_per_keystroke, self.incr_us_per_keystroke
        )
    }
}

/// Program `n` with a blank line opened at `n / 2`, ready for typing.
pub fn prepared(n: usize) -> (AssemblyState, Document, usize) {
    let src = generate_program(n);
    let mut state = assemble_full(&src);
    let mut doc = Document::from_text(&src);
    let line = n / 2;
    apply_edit(&mut state, &mut doc, &EditEvent::InsertNewline { line, col: 0 }).expect("line exists");
    (state, doc, line)
}

fn keystrokes(line: usize) -> Vec<EditEvent> {
    INSERTED.chars().enumerate().map(|(col, ch)| EditEvent::InsertChar { line, col, ch }).collect()
}

fn median(mut samples: Vec<Duration>) -> f64 {
    samples.sort();
    samples[samples.len() / 2].as_secs_f64() * 1e6
}

/// One program size, ready to be sampled in either mode.
struct Subject {
    n: usize,
    state: AssemblyState,
    doc: Document,
    events: Vec<EditEvent>,
    /// The source with the instruction already inserted.
    full_text: String,
    full_samples: Vec<Duration>,
    incremental_samples: Vec<Duration>,
    full_counters: OpCounters,
    insert_counters: OpCounters,
    change_counters: OpCounters,
}

impl Subject {
    fn new(n: usize) -> Subject {
        let (state, doc, line) = prepared(n);
        let mut lines: Vec<String> = generate_program(n).split('\n').map(str::to_string).collect();
        lines.insert(line.min(lines.len()), INSERTED.to_string());
        Subject {
            n,
            state,
            doc,
            events: keystrokes(line),
            full_text: lines.join("\n"),
            full_samples: Vec::new(),
            incremental_samples: Vec::new(),
            full_counters: OpCounters::default(),
            insert_counters: OpCounters::default(),
            change_counters: OpCounters::default(),
        }
    }

    fn sample_full(&mut self, keep: bool) {
        let start = Instant::now();
        let state = assemble_full(&self.full_text);
        let elapsed = start.elapsed();
        self.full_counters = state.counters;
        std::hint::black_box(state);
        if keep {
            self.full_samples.push(elapsed);
        }
    }

    /// Times the 17 keystrokes against a fresh copy of the prepared state.
    fn sample_incremental(&mut self, keep: bool) {
        let (mut s, mut d) = (self.state.clone(), self.doc.clone());
        let mut counters = Vec::with_capacity(self.events.len());
        let start = Instant::now();
        for e in &self.events {
            counters.push(apply_edit(&mut s, &mut d, e).expect("keystroke applies").counters);
        }
        let elapsed = start.elapsed();
        self.insert_counters = counters[0];
        self.change_counters = *counters.last().unwrap();
        if keep {
            self.incremental_samples.push(elapsed);
        }
    }

    fn row(self) -> BenchRow {
        let keys = self.events.len() as f64;
        let full = median(self.full_samples);
        let incremental = median(self.incremental_samples);
        BenchRow {
            lines: self.n,
            full_us: full * keys,
            incremental_us: incremental,
            full_us_per_keystroke: full,
            incr_us_per_keystroke: incremental / keys,
            full_counters: self.full_counters,
            insert_counters: self.insert_counters,
            change_counters: self.change_counters,
        }
    }
}

/// Samples every size round-robin, so a slow stretch of machine time
/// lands on all sizes alike instead of skewing one of them. Each kept
/// sample directly follows an identical untimed one, so caches are warm.
fn sample_sizes(sizes: &[usize], repetitions: usize) -> Vec<BenchRow> {
    let mut subjects: Vec<Subject> = sizes.iter().map(|&n| Subject::new(n)).collect();
    for rep in 0..WARMUP + repetitions {
        for subject in &mut subjects {
            subject.sample_full(false);
            subject.sample_full(rep >= WARMUP);
            subject.sample_incremental(false);
            subject.sample_incremental(rep >= WARMUP);
        }
    }
    subjects.into_iter().map(Subject::row).collect()
}

/// Medians over `repetitions` runs for one size: one full reassembly counts
/// once per keystroke, the incremental time is the sum over the keystrokes.
pub fn time_insertion(n: usize, repetitions: usize) -> BenchRow {
    sample_sizes(&[n], repetitions).remove(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
}

/// Least-squares line through the points, or `None` when fewer than two
/// distinct x values make the fit degenerate.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if points.len() < 2 || sxx == 0.0 {
        return None;
    }
    let c1 = sxy / sxx;
    let c2 = mean_y - c1 * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { c1, c2, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
    /// Full-mode per-keystroke time against n.
    pub full_fit: Option<LinearFit>,
    /// Slope of incremental per-keystroke time against n.
    pub incremental_slope: Option<f64>,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        let mut out = format!("# median of {} interleaved runs per size; full_us counts one reassembly per keystroke\n", self.repetitions);
        out += CSV_HEADER;
        out.push('\n');
        for row in &self.rows {
            out += &row.csv();
            out.push('\n');
        }
        out
    }
}

pub fn run_benchmark(sizes: &[usize], repetitions: usize) -> BenchReport {
    let rows = sample_sizes(sizes, repetitions);
    let points = |f: fn(&BenchRow) -> f64| rows.iter().map(|r| (r.lines as f64, f(r))).collect::<Vec<_>>();
    let full_fit = linear_fit(&points(|r| r.full_us_per_keystroke));
    let incremental_slope = linear_fit(&points(|r| r.incr_us_per_keystroke)).map(|f| f.c1);
    BenchReport { repetitions, rows, full_fit, incremental_slope }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_program_shape() {
        assert_eq!(generate_program(1).lines().count(), 1);
        assert!(generate_program(1).starts_with("addi"));
        let state = assemble_full(&generate_program(100));
        assert_eq!(state.lines.len(), 100);
        assert_eq!(state.symbols.len(), 2);
        assert_eq!(state.symbols.iter().map(|s| s.references.len()).sum::<usize>(), 2);
        let big = assemble_full(&generate_program(10_000));
        assert!(!big.has_errors());
        assert_eq!(big.symbols.len(), 200);
        assert_eq!(generate_program(300), generate_program(300));
    }

    #[test]
    fn fit() {
        let f = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((f.c1 - 2.0).abs() < 1e-12 && (f.c2 - 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(linear_fit(&[(1.0, 5.0)]), None);
    }

    #[test]
    fn single_size_report_is_degenerate() {
        let report = run_benchmark(&[1], 1);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.full_fit, None);
        assert!(report.csv().lines().nth(1) == Some(CSV_HEADER));
    }

    #[test]
    fn counters_of_an_insertion() {
        let row = time_insertion(100, 1);
        assert_eq!(row.full_counters.lines_assembled, 101);
        assert_eq!(row.insert_counters.lines_assembled, 1);
        assert_eq!(row.change_counters.lines_assembled, 1);
        assert_eq!(row.change_counters.bytes_moved, 0);
    }
}
