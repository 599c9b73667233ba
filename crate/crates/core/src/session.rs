//! An editing and execution session: a document, its assembled state and
//! an optional machine, with queries for every pane a frontend shows.

use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disasm::{disassemble_word, DisassemblyRow};
use crate::explain::{
    explain_double, explain_instruction, explain_signed_int, DoubleExplanation, InstructionExplanation, IntExplanation,
};
use crate::incremental::{apply_edit, apply_edit_full, Delta, Document, EditError, EditEvent};
use crate::parser::Diagnostic;
use crate::program::{LineTableEntry, Reference};
use crate::sim::{ChangeSet, MachineState, ScriptedIo, StopReason};
use crate::{assemble_full, AssemblyState};

/// Largest memory or disassembly range a single query may ask for.
pub const QUERY_LIMIT: u32 = 4096;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    #[default]
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Control {
    Reset,
    Step,
    Run { max_steps: u64 },
    Animate { max_steps: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "what", rename_all = "snake_case")]
pub enum ExplainRequest {
    Instruction { word: u32 },
    /// The instruction assembled from a source line.
    Line { line: usize },
    SignedInt { word: u32 },
    /// Hex digits of the 64-bit pattern, with or without `0x`. A string so
    /// that JavaScript clients keep all 64 bits.
    Double { bits: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pane", rename_all = "snake_case")]
pub enum Query {
    Registers,
    Memory { address: u32, length: u32 },
    Disassembly { address: u32, count: u32 },
    Diagnostics,
    Symbols,
    Lines,
    Text,
    Dump,
    Explain { request: ExplainRequest },
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum SessionError {
    #[error("the program changed since the last reset")]
    StaleMachine,
    #[error("no machine yet; reset first")]
    NoMachine,
    #[error("the machine has halted; reset to run again")]
    AlreadyHalted,
    #[error("range of {requested} bytes exceeds the {limit}-byte limit")]
    RangeTooLarge { requested: u64, limit: u32 },
    #[error("range start 0x{address:08x} is not word aligned")]
    MisalignedRange { address: u32 },
    #[error("address 0x{address:08x} is not mapped")]
    Unmapped { address: u32 },
    #[error("nothing to explain: {reason}")]
    NotExplainable { reason: String },
    #[error("{error}")]
    Edit { error: EditError },
    #[error("no suspended run is waiting for input")]
    NotWaitingForInput,
}

impl From<EditError> for SessionError {
    fn from(error: EditError) -> Self {
        SessionError::Edit { error }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExecutionReport {
    /// Why execution stopped; `None` after a reset or an ordinary step.
    pub stop: Option<StopReason>,
    /// Writes of the last instruction executed by this command.
    pub changes: Option<ChangeSet>,
    pub pc: u32,
    pub registers: Vec<u32>,
    pub steps_executed: u64,
    pub halted: bool,
    /// Console output produced by this command.
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolRow {
    pub label: String,
    pub declaration_line: usize,
    pub address: Option<u32>,
    pub references: Vec<Reference>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "pane", rename_all = "snake_case")]
pub enum Pane {
    Registers {
        registers: Vec<u32>,
        pc: u32,
        /// Writes of the last executed instruction, for highlighting.
        changed: Option<ChangeSet>,
        /// False when no reset has happened yet and the values are the
        /// ones a reset would produce.
        machine: bool,
        stale: bool,
        halted: bool,
    },
    Memory { address: u32, bytes: Vec<u8> },
    Disassembly { rows: Vec<DisassemblyRow> },
    Diagnostics { diagnostics: Vec<Diagnostic> },
    Symbols { symbols: Vec<SymbolRow> },
    Lines { lines: Vec<LineTableEntry> },
    Text { text: String },
    Dump { dump: String },
    ExplainInstruction { explanation: InstructionExplanation },
    ExplainInt { explanation: IntExplanation },
    ExplainDouble { explanation: DoubleExplanation },
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub mode: Mode,
    document: Document,
    state: AssemblyState,
    machine: Option<MachineState>,
    stale: bool,
    last_changes: Option<ChangeSet>,
    io: ScriptedIo,
    /// Step budget left in a run that stopped for input.
    suspended: Option<u64>,
}

impl Session {
    pub fn create(id: impl Into<String>, text: &str, mode: Mode) -> Session {
        Session {
            id: id.into(),
            mode,
            document: Document::from_text(text),
            state: assemble_full(text),
            machine: None,
            stale: false,
            last_changes: None,
            io: ScriptedIo::default(),
            suspended: None,
        }
    }

    pub fn state(&self) -> &AssemblyState {
        &self.state
    }

    pub fn document(&self) -> &Document {
        &self.document
    }

    pub fn machine(&self) -> Option<&MachineState> {
        self.machine.as_ref()
    }

    pub fn is_stale(&self) -> bool {
        self.stale
    }

    pub fn is_waiting_for_input(&self) -> bool {
        self.suspended.is_some()
    }

    pub fn apply_edit(&mut self, event: &EditEvent) -> Result<Delta, SessionError> {
        let delta = match self.mode {
            Mode::Incremental => apply_edit(&mut self.state, &mut self.document, event)?,
            Mode::Full => apply_edit_full(&mut self.state, &mut self.document, event)?,
        };
        if self.machine.is_some() {
            self.stale = true;
            self.suspended = None;
        }
        Ok(delta)
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        self.state.diagnostics().cloned().collect()
    }

    /// Runs a control command. `Animate` calls `observer` with a report
    /// after every instruction; the other commands never call it.
    pub fn control(
        &mut self,
        command: Control,
        interrupt: &AtomicBool,
        mut observer: impl FnMut(&ExecutionReport),
    ) -> Result<ExecutionReport, SessionError> {
        if command == Control::Reset {
            self.machine = Some(MachineState::reset(&self.state.image));
            self.stale = false;
            self.last_changes = None;
            self.suspended = None;
            self.io = ScriptedIo::default();
            return Ok(self.report(None, None));
        }
        self.runnable()?;
        match command {
            Control::Reset => unreachable!(),
            Control::Step => Ok(self.execute(1, false, interrupt, &mut |_| {})),
            Control::Run { max_steps } => Ok(self.execute(max_steps, true, interrupt, &mut |_| {})),
            Control::Animate { max_steps } => Ok(self.execute(max_steps, true, interrupt, &mut observer)),
        }
    }

    /// Queues an integer for the read service and resumes a run that was
    /// waiting for it.
    pub fn provide_input(&mut self, value: i32, interrupt: &AtomicBool) -> Result<ExecutionReport, SessionError> {
        let budget = self.suspended.ok_or(SessionError::NotWaitingForInput)?;
        self.runnable()?;
        self.io.input.push_back(value);
        Ok(self.execute(budget, true, interrupt, &mut |_| {}))
    }

    fn runnable(&self) -> Result<(), SessionError> {
        match &self.machine {
            None => Err(SessionError::NoMachine),
            Some(_) if self.stale => Err(SessionError::StaleMachine),
            Some(m) if m.halted => Err(SessionError::AlreadyHalted),
            Some(_) => Ok(()),
        }
    }

    /// Steps up to `max_steps` times. With `limit_stops`, running out of
    /// steps is reported as `StepLimit`; a single step reports no stop.
    fn execute(
        &mut self,
        max_steps: u64,
        limit_stops: bool,
        interrupt: &AtomicBool,
        observer: &mut dyn FnMut(&ExecutionReport),
    ) -> ExecutionReport {
        let machine = self.machine.as_mut().expect("checked by runnable");
        let mut last = None;
        let mut stop = None;
        let mut executed = 0;
        while executed < max_steps {
            if interrupt.load(std::sync::atomic::Ordering::Relaxed) {
                stop = Some(StopReason::Interrupted);
                break;
            }
            match machine.step(&mut self.io) {
                Ok(changes) => {
                    executed += 1;
                    self.last_changes = Some(changes.clone());
                    last = Some(changes);
                    let halted = machine.halted;
                    let report = Self::report_of(machine, None, last.clone(), std::mem::take(&mut self.io.output));
                    observer(&report);
                    self.io.output = report.output;
                    if halted {
                        stop = Some(StopReason::Halted);
                        break;
                    }
                }
                Err(reason) => {
                    stop = Some(reason);
                    break;
                }
            }
        }
        if stop.is_none() && limit_stops {
            stop = Some(StopReason::StepLimit);
        }
        self.suspended = (stop == Some(StopReason::InputRequired)).then_some(max_steps - executed);
        self.report(stop, last)
    }

    fn report(&mut self, stop: Option<StopReason>, changes: Option<ChangeSet>) -> ExecutionReport {
        let machine = self.machine.as_ref().expect("reports follow a reset");
        Self::report_of(machine, stop, changes, std::mem::take(&mut self.io.output))
    }

    fn report_of(m: &MachineState, stop: Option<StopReason>, changes: Option<ChangeSet>, output: String) -> ExecutionReport {
        ExecutionReport {
            stop,
            changes,
            pc: m.pc,
            registers: m.regs.to_vec(),
            steps_executed: m.steps_executed,
            halted: m.halted,
            output,
        }
    }

    pub fn query(&self, query: &Query) -> Result<Pane, SessionError> {
        Ok(match query {
            Query::Registers => {
                let fresh;
                let m = match &self.machine {
                    Some(m) => m,
                    None => {
                        fresh = MachineState::reset(&self.state.image);
                        &fresh
                    }
                };
                Pane::Registers {
                    registers: m.regs.to_vec(),
                    pc: m.pc,
                    changed: self.last_changes.clone(),
                    machine: self.machine.is_some(),
                    stale: self.stale,
                    halted: m.halted,
                }
            }
            Query::Memory { address, length } => {
                check_length(*length as u64)?;
                let bytes = (0..*length)
                    .map(|i| self.read_byte(address.wrapping_add(i)))
                    .collect::<Result<Vec<u8>, _>>()?;
                Pane::Memory { address: *address, bytes }
            }
            Query::Disassembly { address, count } => {
                check_length(*count as u64 * 4)?;
                if address % 4 != 0 {
                    return Err(SessionError::MisalignedRange { address: *address });
                }
                let rows = (0..*count)
                    .map(|i| {
                        let a = address.wrapping_add(4 * i);
                        let word = self.read_word(a)?;
                        Ok(DisassemblyRow { address: a, word, text: disassemble_word(word, a) })
                    })
                    .collect::<Result<Vec<_>, SessionError>>()?;
                Pane::Disassembly { rows }
            }
            Query::Diagnostics => Pane::Diagnostics { diagnostics: self.diagnostics() },
            Query::Symbols => Pane::Symbols { symbols: self.symbol_rows() },
            Query::Lines => Pane::Lines { lines: self.state.lines.clone() },
            Query::Text => Pane::Text { text: self.document.text() },
            Query::Dump => Pane::Dump { dump: self.state.dump() },
            Query::Explain { request } => self.explain(request)?,
        })
    }

    /// Declared symbols in label order with their live references.
    pub fn symbol_rows(&self) -> Vec<SymbolRow> {
        let mut rows: Vec<SymbolRow> = self
            .state
            .symbols
            .iter()
            .filter_map(|s| {
                let declaration_line = s.declaration_line?;
                let mut references: Vec<Reference> =
                    s.references.iter().filter(|r| !self.state.is_stale(&s.label, r)).copied().collect();
                references.sort();
                Some(SymbolRow { label: s.label.clone(), declaration_line, address: s.address, references })
            })
            .collect();
        rows.sort_by(|a, b| a.label.cmp(&b.label));
        rows
    }

    /// Reads from the machine once there is one, otherwise from the image.
    fn read_byte(&self, address: u32) -> Result<u8, SessionError> {
        match &self.machine {
            Some(m) => m.memory.read_byte(address).map_err(|_| SessionError::Unmapped { address }),
            None if crate::sim::is_mapped(address) => Ok(self.state.image.read_byte(address)),
            None => Err(SessionError::Unmapped { address }),
        }
    }

    fn read_word(&self, address: u32) -> Result<u32, SessionError> {
        let mut bytes = [0; 4];
        for (k, b) in bytes.iter_mut().enumerate() {
            *b = self.read_byte(address.wrapping_add(k as u32))?;
        }
        Ok(u32::from_le_bytes(bytes))
    }

    fn explain(&self, request: &ExplainRequest) -> Result<Pane, SessionError> {
        let not = |reason: String| SessionError::NotExplainable { reason };
        Ok(match request {
            ExplainRequest::Instruction { word } => Pane::ExplainInstruction {
                explanation: explain_instruction(*word).map_err(|e| not(e.to_string()))?,
            },
            ExplainRequest::Line { line } => {
                let entry = self.state.lines.get(*line).ok_or_else(|| not(format!("line {line} does not exist")))?;
                let word = entry
                    .instruction
                    .filter(|_| entry.kind.bears_word() && !entry.error())
                    .ok_or_else(|| not(format!("line {line} holds no valid instruction")))?;
                Pane::ExplainInstruction { explanation: explain_instruction(word).map_err(|e| not(e.to_string()))? }
            }
            ExplainRequest::SignedInt { word } => Pane::ExplainInt { explanation: explain_signed_int(*word) },
            ExplainRequest::Double { bits } => {
                let digits = bits.trim().trim_start_matches("0x").trim_start_matches("0X");
                let bits = u64::from_str_radix(digits, 16).map_err(|_| not(format!("{bits:?} is not a 64-bit hex value")))?;
                Pane::ExplainDouble { explanation: explain_double(bits) }
            }
        })
    }
}

fn check_length(length: u64) -> Result<(), SessionError> {
    if length > QUERY_LIMIT as u64 {
        return Err(SessionError::RangeTooLarge { requested: length, limit: QUERY_LIMIT });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_interrupt() -> AtomicBool {
        AtomicBool::new(false)
    }

    const SUM: &str = "li a0, 0\nli t0, 1\nli t1, 11\nloop:\nadd a0, a0, t0\naddi t0, t0, 1\nbne t0, t1, loop\nli a7, 10\necall";

    #[test]
    fn create_examples() {
        let s = Session::create("a", "", Mode::default());
        assert_eq!(s.mode, Mode::Incremental);
        assert!(s.state().image.text.is_empty());
        let s = Session::create("b", "nop\nnop\nnop", Mode::Full);
        assert!(s.diagnostics().is_empty());
        assert_eq!(s.state().image.text.len(), 12);
        let s = Session::create("c", "frob x1", Mode::Incremental);
        assert_eq!(s.diagnostics().len(), 1);
        assert_eq!(s.state().image.read_word(0), 0);
    }

    #[test]
    fn edit_examples() {
        let mut s = Session::create("a", "nop\n\nnop", Mode::Incremental);
        let d = s.apply_edit(&EditEvent::InsertChar { line: 0, col: 3, ch: ':' }).unwrap();
        assert!(d.full_reassembly);
        let d = s.apply_edit(&EditEvent::InsertNewline { line: 1, col: 0 }).unwrap();
        assert!(!d.image_changed);
        let d = s.apply_edit(&EditEvent::InsertChar { line: 1, col: 0, ch: 'a' }).unwrap();
        assert_eq!(d.inserted_word_address, Some(0));
        assert!(matches!(
            s.apply_edit(&EditEvent::InsertChar { line: 40, col: 0, ch: 'a' }),
            Err(SessionError::Edit { error: EditError::PositionOutOfBounds { .. } })
        ));
    }

    #[test]
    fn control_examples() {
        let flag = no_interrupt();
        let mut s = Session::create("a", "addi x1, x0, 5", Mode::Incremental);
        assert_eq!(s.control(Control::Step, &flag, |_| {}), Err(SessionError::NoMachine));
        s.control(Control::Reset, &flag, |_| {}).unwrap();
        let r = s.control(Control::Step, &flag, |_| {}).unwrap();
        assert_eq!(r.changes.unwrap().registers_written.into_iter().collect::<Vec<_>>(), vec![1]);
        s.apply_edit(&EditEvent::InsertChar { line: 0, col: 14, ch: '1' }).unwrap();
        assert_eq!(s.control(Control::Step, &flag, |_| {}), Err(SessionError::StaleMachine));

        let mut s = Session::create("b", SUM, Mode::Incremental);
        s.control(Control::Reset, &flag, |_| {}).unwrap();
        let r = s.control(Control::Run { max_steps: 1000 }, &flag, |_| {}).unwrap();
        assert_eq!((r.stop, r.halted, r.registers[10]), (Some(StopReason::Halted), true, 55));
        assert_eq!(s.control(Control::Run { max_steps: 1 }, &flag, |_| {}), Err(SessionError::AlreadyHalted));
    }

    #[test]
    fn animate_reports_every_step() {
        let flag = no_interrupt();
        let mut s = Session::create("a", SUM, Mode::Incremental);
        s.control(Control::Reset, &flag, |_| {}).unwrap();
        let mut seen = 0;
        let r = s.control(Control::Animate { max_steps: 5 }, &flag, |_| seen += 1).unwrap();
        assert_eq!((seen, r.stop), (5, Some(StopReason::StepLimit)));
    }

    #[test]
    fn input_suspends_the_run() {
        let flag = no_interrupt();
        let src = "li a7, 5\necall\nli a7, 1\necall\nli a7, 10\necall";
        let mut s = Session::create("a", src, Mode::Incremental);
        s.control(Control::Reset, &flag, |_| {}).unwrap();
        let r = s.control(Control::Run { max_steps: 100 }, &flag, |_| {}).unwrap();
        assert_eq!(r.stop, Some(StopReason::InputRequired));
        assert!(s.is_waiting_for_input());
        let r = s.provide_input(-3, &flag).unwrap();
        assert_eq!((r.stop, r.output.as_str()), (Some(StopReason::Halted), "-3"));
        assert_eq!(s.provide_input(1, &flag), Err(SessionError::NotWaitingForInput));
    }

    #[test]
    fn query_examples() {
        let flag = no_interrupt();
        let mut s = Session::create("a", "nop\nadd x1, x2, x3\necall\n.word 7", Mode::Incremental);
        s.control(Control::Reset, &flag, |_| {}).unwrap();
        let Pane::Registers { registers, changed, .. } = s.query(&Query::Registers).unwrap() else { panic!() };
        assert_eq!((registers.len(), registers[2], changed), (32, 0x7FFF_FFF0, None));
        let Pane::Disassembly { rows } = s.query(&Query::Disassembly { address: 0, count: 3 }).unwrap() else { panic!() };
        assert_eq!(rows, crate::disasm::disassemble_range(&s.state().image, 0, 3).unwrap());
        let Pane::Memory { bytes, .. } = s.query(&Query::Memory { address: 0x1000_0000, length: 4 }).unwrap() else { panic!() };
        assert_eq!(bytes, vec![7, 0, 0, 0]);
        assert!(matches!(s.query(&Query::Memory { address: 0, length: 4097 }), Err(SessionError::RangeTooLarge { .. })));
        assert!(matches!(s.query(&Query::Disassembly { address: 2, count: 1 }), Err(SessionError::MisalignedRange { .. })));
        let e = s.query(&Query::Explain { request: ExplainRequest::Line { line: 1 } }).unwrap();
        assert!(matches!(e, Pane::ExplainInstruction { explanation } if explanation.mnemonic == "add"));
        let e = s.query(&Query::Explain { request: ExplainRequest::Double { bits: "0xC004000000000000".into() } }).unwrap();
        assert!(matches!(e, Pane::ExplainDouble { explanation } if explanation.decimal_value == "-2.5"));
    }
}
