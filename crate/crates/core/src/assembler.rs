//! Whole-program assembly: one forward pass with backpatching.
//!
//! This is the unoptimized mode and also the reference the incremental
//! engine is checked against.

use crate::isa::{Format, Instruction};
use crate::parser::{parse_line, Diagnostic, DiagnosticCode, ImmOperand, LoweredInstruction, Span, Statement};
use crate::program::{AssemblyState, LineTableEntry, OpCounters, SymbolTable, DATA_BASE};

/// Result of encoding one instruction at a known address.
pub(crate) enum Encoded {
    Word(Instruction, u32),
    /// The referenced label has no address yet.
    Pending(String),
    Failed(Diagnostic),
}

/// Splits source text into editor lines. The empty string has no lines.
pub fn split_lines(source: &str) -> impl Iterator<Item = &str> {
    let mut lines = source.split('\n');
    if source.is_empty() {
        lines.next();
    }
    lines
}

pub(crate) fn encode_at(
    insn: &LoweredInstruction,
    address: u32,
    line_number: usize,
    symbols: &SymbolTable,
    counters: &mut OpCounters,
) -> Encoded {
    let imm = match &insn.imm {
        ImmOperand::Value(v) => *v,
        ImmOperand::Address(target) => target.wrapping_sub(address) as i32,
        ImmOperand::Label(name) => {
            let target = symbols.position(name, counters).and_then(|i| symbols.entry(i).address);
            match target {
                Some(target) => target.wrapping_sub(address) as i32,
                None => return Encoded::Pending(name.clone()),
            }
        }
    };
    let resolved = Instruction {
        spec: insn.spec,
        rd: insn.rd,
        rs1: insn.rs1,
        rs2: insn.rs2,
        imm,
    };
    match resolved.encode() {
        Ok(word) => Encoded::Word(resolved, word),
        Err(err) => {
            let relative = matches!(insn.spec.format, Format::B | Format::J);
            let (code, message) = match &insn.imm {
                ImmOperand::Label(name) if relative => (
                    DiagnosticCode::BranchOffsetOutOfRange,
                    format!(
                        "'{name}' is beyond the {} reach of {}",
                        if insn.spec.format == Format::B { "4 KiB" } else { "1 MiB" },
                        insn.pseudo.unwrap_or(insn.spec.mnemonic)
                    ),
                ),
                _ if relative => (DiagnosticCode::BranchOffsetOutOfRange, format!("target offset {imm}: {err}")),
                _ => (DiagnosticCode::ImmediateOutOfRange, err.to_string()),
            };
            Encoded::Failed(Diagnostic {
                line_number,
                column_span: insn.imm_span,
                code,
                message,
            })
        }
    }
}

pub(crate) fn undefined_label(line_number: usize, insn: &LoweredInstruction, label: &str) -> Diagnostic {
    Diagnostic {
        line_number,
        column_span: insn.imm_span,
        code: DiagnosticCode::UndefinedLabel,
        message: format!("label '{label}' is not declared"),
    }
}

/// Re-parses and re-encodes the instruction on `line` at its existing
/// address, using the current symbol addresses. References to labels that
/// are still unbound become `UndefinedLabel` errors.
pub(crate) fn reencode_line(state: &mut AssemblyState, line: usize) {
    let entry = &state.lines[line];
    let Some(address) = entry.address.filter(|_| entry.kind.bears_word()) else {
        return;
    };
    state.counters.lines_reencoded += 1;
    let parsed = parse_line(&entry.source_line, line);
    let mut diagnostics = parsed.diagnostics;
    let outcome = parsed
        .statement
        .instruction()
        .map(|insn| (encode_at(insn, address, line, &state.symbols, &mut state.counters), insn));
    let entry = &mut state.lines[line];
    entry.absolute_target = outcome.as_ref().is_some_and(|(_, insn)| matches!(insn.imm, ImmOperand::Address(_)));
    match outcome {
        Some((Encoded::Word(insn, word), _)) => entry.set_word(&insn, word),
        Some((Encoded::Pending(label), insn)) => {
            diagnostics.push(undefined_label(line, insn, &label));
            entry.set_placeholder();
        }
        Some((Encoded::Failed(d), _)) => {
            diagnostics.push(d);
            entry.set_placeholder();
        }
        None => entry.set_placeholder(),
    }
    diagnostics.sort_by_key(|d| (d.column_span.start, d.column_span.end));
    entry.diagnostics = diagnostics;
    let word = entry.instruction.unwrap_or_default();
    state.image.write_text_word(address, word);
}

/// Re-encodes every reference to `label` after its address was bound or
/// changed.
pub fn resolve_references(state: &mut AssemblyState, label: &str) {
    let mut counters = state.counters;
    if let Some(index) = state.symbols.position(label, &mut counters) {
        state.counters = counters;
        resolve_symbol(state, index);
    }
}

fn resolve_symbol(state: &mut AssemblyState, index: usize) {
    let lines: Vec<usize> = state.symbols.entry(index).references.iter().map(|r| r.line_number).collect();
    for line in lines {
        state.counters.references_examined += 1;
        reencode_line(state, line);
    }
}

struct FullAssembler {
    state: AssemblyState,
    /// Labels declared since the last byte-bearing line.
    pending_labels: Vec<usize>,
}

impl FullAssembler {
    fn bind_pending(&mut self, address: u32) {
        for index in std::mem::take(&mut self.pending_labels) {
            self.state.symbols.entry_mut(index).address = Some(address);
            resolve_symbol(&mut self.state, index);
        }
    }

    fn line(&mut self, n: usize, text: &str) {
        self.state.counters.lines_assembled += 1;
        let parsed = parse_line(text, n);
        let mut entry = LineTableEntry::new(n, text, parsed.kind(), parsed.diagnostics);
        match parsed.statement {
            Statement::Empty | Statement::Comment | Statement::Label(None) | Statement::Data(None) => {}
            Statement::Label(Some(name)) => {
                let index = self.state.symbols.ensure(&name, &mut self.state.counters);
                let symbol = self.state.symbols.entry_mut(index);
                if symbol.declaration_line.is_some() {
                    let start = text.find(name.as_str()).map_or(0, |b| text[..b].chars().count());
                    entry.diagnostics.push(Diagnostic {
                        line_number: n,
                        column_span: Span::new(start, start + name.chars().count()),
                        code: DiagnosticCode::DuplicateLabel,
                        message: format!("label '{name}' is already declared above"),
                    });
                } else {
                    symbol.declaration_line = Some(n);
                    self.pending_labels.push(index);
                }
            }
            Statement::Data(Some(item)) => {
                if item.byte_length > 0 {
                    let address = DATA_BASE + self.state.image.data.len() as u32;
                    self.bind_pending(address);
                    self.state.image.data.extend_from_slice(&item.bytes());
                    entry.address = Some(address);
                    entry.length = item.byte_length;
                }
            }
            Statement::Meta(insn) | Statement::Instruction(insn) => {
                let address = self.state.image.text.len() as u32;
                self.bind_pending(address);
                entry.address = Some(address);
                entry.length = 4;
                entry.set_placeholder();
                if let Some(insn) = insn {
                    entry.absolute_target = matches!(insn.imm, ImmOperand::Address(_));
                    if let Some(label) = insn.label() {
                        self.state.record_reference(label, n, address);
                    }
                    match encode_at(&insn, address, n, &self.state.symbols, &mut self.state.counters) {
                        Encoded::Word(resolved, word) => entry.set_word(&resolved, word),
                        Encoded::Pending(_) => {
                            // patched once the label binds
                            let mut provisional = insn.clone();
                            provisional.imm = ImmOperand::Value(0);
                            if let Encoded::Word(resolved, word) = encode_at(&provisional, address, n, &self.state.symbols, &mut self.state.counters)
                            {
                                entry.set_word(&resolved, word);
                            }
                        }
                        Encoded::Failed(d) => entry.diagnostics.push(d),
                    }
                }
                let word = entry.instruction.unwrap_or_default();
                self.state.image.text.extend_from_slice(&word.to_le_bytes());
            }
        }
        entry.diagnostics.sort_by_key(|d| (d.column_span.start, d.column_span.end));
        self.state.lines.push(entry);
    }

    fn finish(mut self) -> AssemblyState {
        let end = self.state.image.text.len() as u32;
        self.bind_pending(end);
        let undeclared: Vec<usize> = self
            .state
            .symbols
            .iter()
            .filter(|s| s.declaration_line.is_none())
            .flat_map(|s| s.references.iter().map(|r| r.line_number))
            .collect();
        for line in undeclared {
            reencode_line(&mut self.state, line);
        }
        self.state
    }
}

/// Assembles `source` from scratch. Never fails; problems are reported as
/// diagnostics and invalid instruction lines hold placeholder words.
pub fn assemble_full(source: &str) -> AssemblyState {
    let mut asm = FullAssembler {
        state: AssemblyState::default(),
        pending_labels: Vec::new(),
    };
    for (n, text) in split_lines(source).enumerate() {
        asm.line(n, text);
    }
    asm.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Reference;

    #[test]
    fn empty_source_has_no_lines() {
        let state = assemble_full("");
        assert!(state.lines.is_empty());
        assert!(state.image.text.is_empty());
        assert!(state.symbols.is_empty());
    }

    #[test]
    fn single_instruction() {
        let state = assemble_full("addi x1, x2, -121");
        assert_eq!(state.lines.len(), 1);
        assert_eq!(state.image.text_words().collect::<Vec<_>>(), vec![0xF871_0093]);
    }

    #[test]
    fn backward_branch_loop() {
        let state = assemble_full("loop:\naddi x1, x1, -1\nbnez x1, loop");
        let words: Vec<u32> = state.image.text_words().collect();
        // bne x1, x0, -4
        let bne = crate::isa::decode(words[1]).unwrap();
        assert_eq!((bne.mnemonic(), bne.rs1.index(), bne.rs2.index(), bne.imm), ("bne", 1, 0, -4));
        let loop_sym = state.find_symbol("loop").unwrap();
        assert_eq!(loop_sym.address, Some(0));
        assert_eq!(loop_sym.declaration_line, Some(0));
        assert_eq!(loop_sym.references, vec![Reference { line_number: 2, address: 4 }]);
    }

    #[test]
    fn forward_reference_is_backpatched() {
        let state = assemble_full("beq x1, x2, done\naddi x1, x1, 1\ndone:\necall");
        let first = crate::isa::decode(state.image.read_word(0)).unwrap();
        assert_eq!(first.imm, 8);
        assert!(!state.has_errors());
    }

    #[test]
    fn undefined_label_is_a_placeholder_error() {
        let state = assemble_full("j nowhere");
        assert_eq!(state.image.read_word(0), 0);
        assert_eq!(state.lines[0].diagnostics[0].code, DiagnosticCode::UndefinedLabel);
    }

    #[test]
    fn duplicate_label_keeps_first() {
        let state = assemble_full("a:\nnop\na:\nnop\nj a");
        assert_eq!(state.find_symbol("a").unwrap().address, Some(0));
        assert_eq!(state.lines[2].diagnostics[0].code, DiagnosticCode::DuplicateLabel);
        let j = crate::isa::decode(state.image.read_word(8)).unwrap();
        assert_eq!(j.imm, -8);
    }

    #[test]
    fn label_binds_to_data_or_end_of_text() {
        let state = assemble_full("msg:\n.string \"hi\"\nnop\nend:");
        assert_eq!(state.find_symbol("msg").unwrap().address, Some(DATA_BASE));
        assert_eq!(state.find_symbol("end").unwrap().address, Some(4));
    }

    #[test]
    fn resolve_with_no_pending_refs_changes_nothing() {
        let mut state = assemble_full("x:\nnop");
        let before = state.dump();
        resolve_references(&mut state, "x");
        assert_eq!(state.dump(), before);
    }

    #[test]
    fn branch_too_far_is_reported() {
        let mut src = String::from("beq x0, x0, far\n");
        for _ in 0..1100 {
            src.push_str("nop\n");
        }
        src.push_str("far:\nnop");
        let state = assemble_full(&src);
        assert_eq!(state.lines[0].diagnostics[0].code, DiagnosticCode::BranchOffsetOutOfRange);
        assert_eq!(state.image.read_word(0), 0);
    }

    #[test]
    fn full_mode_assembles_each_line_once() {
        let src = "a:\nnop\n# c\n\nj a\n.word 1";
        let state = assemble_full(src);
        assert_eq!(state.counters.lines_assembled, 6);
    }

    #[test]
    fn idempotent() {
        let src = "start:\nli a0, 5\nloop:\naddi a0, a0, -1\nbnez a0, loop\nj start\n.word 7";
        assert_eq!(assemble_full(src).dump(), assemble_full(src).dump());
    }
}
