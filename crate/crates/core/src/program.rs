//! Assembly state shared by the full and incremental assemblers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::isa::{split_immediate, Format, Instruction};
use crate::parser::{parse_line, Diagnostic, LineKind, SOURCE_LINE_MAX};

pub const TEXT_BASE: u32 = 0x0000_0000;
pub const DATA_BASE: u32 = 0x1000_0000;
pub const STACK_TOP: u32 = 0x7FFF_FFF0;

/// Word stored for an instruction line that does not assemble.
pub const PLACEHOLDER: u32 = 0x0000_0000;

pub fn is_text_address(address: u32) -> bool {
    address < DATA_BASE
}

/// Decoded fields of an assembled instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstructionFields {
    pub opcode: u8,
    pub funct3: Option<u8>,
    pub funct7: Option<u8>,
    pub rd: Option<u8>,
    pub rs1: Option<u8>,
    pub rs2: Option<u8>,
    pub imm_full: Option<i32>,
    pub imm_hi: Option<u32>,
    pub imm_lo: Option<u32>,
}

impl InstructionFields {
    pub fn of(insn: &Instruction, word: u32) -> InstructionFields {
        let (imm_hi, imm_lo) = split_immediate(word, insn.format());
        InstructionFields {
            opcode: insn.spec.opcode,
            funct3: insn.spec.funct3,
            funct7: insn.spec.funct7,
            rd: insn.rd().map(|r| r.index() as u8),
            rs1: insn.rs1().map(|r| r.index() as u8),
            rs2: insn.rs2().map(|r| r.index() as u8),
            imm_full: insn.immediate(),
            imm_hi,
            imm_lo,
        }
    }
}

/// One row per source line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineTableEntry {
    pub source_line_number: usize,
    pub kind: LineKind,
    pub diagnostics: Vec<Diagnostic>,
    /// Byte address of the code or data this line contributes.
    pub address: Option<u32>,
    /// Bytes contributed: 0 or 4 for text lines, the item size for data.
    pub length: u32,
    /// Capped at `SOURCE_LINE_MAX` characters.
    pub source_line: String,
    pub mnemonic: Option<&'static str>,
    pub format: Option<Format>,
    /// The word stored at `address` (the placeholder for invalid lines).
    pub instruction: Option<u32>,
    pub fields: Option<InstructionFields>,
    /// Branch or jump written with a numeric target address. Its word
    /// depends on its own address, so it is re-encoded whenever it moves.
    #[serde(skip)]
    pub absolute_target: bool,
}

impl LineTableEntry {
    pub fn new(source_line_number: usize, text: &str, kind: LineKind, diagnostics: Vec<Diagnostic>) -> LineTableEntry {
        let source_line = match text.char_indices().nth(SOURCE_LINE_MAX) {
            Some((cut, _)) => text[..cut].to_string(),
            None => text.to_string(),
        };
        LineTableEntry {
            source_line_number,
            kind,
            diagnostics,
            address: None,
            length: 0,
            source_line,
            mnemonic: None,
            format: None,
            instruction: None,
            fields: None,
            absolute_target: false,
        }
    }

    pub fn error(&self) -> bool {
        !self.diagnostics.is_empty()
    }

    pub fn error_message(&self) -> Option<String> {
        if self.diagnostics.is_empty() {
            return None;
        }
        Some(self.diagnostics.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))
    }

    pub(crate) fn set_word(&mut self, insn: &Instruction, word: u32) {
        self.mnemonic = Some(insn.mnemonic());
        self.format = Some(insn.format());
        self.instruction = Some(word);
        self.fields = Some(InstructionFields::of(insn, word));
    }

    pub(crate) fn set_placeholder(&mut self) {
        self.mnemonic = None;
        self.format = None;
        self.instruction = Some(PLACEHOLDER);
        self.fields = None;
    }

    pub(crate) fn renumber(&mut self, line: usize) {
        self.source_line_number = line;
        for d in &mut self.diagnostics {
            d.line_number = line;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Reference {
    pub line_number: usize,
    pub address: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolEntry {
    pub label: String,
    pub declaration_line: Option<usize>,
    pub address: Option<u32>,
    pub references: Vec<Reference>,
}

/// Operation counts for the most recent assembly event. They make the cost
/// model observable without timing anything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    /// Lines parsed and encoded from source text.
    pub lines_assembled: u64,
    /// Lines re-encoded because a symbol they reference moved.
    pub lines_reencoded: u64,
    /// Line-table entries visited while shifting addresses or line numbers.
    pub line_entries_updated: u64,
    /// Symbol-table entries compared during lookups and adjustments.
    pub symbol_entries_scanned: u64,
    /// Reference records examined during adjustments.
    pub references_examined: u64,
    /// Text-segment bytes moved to open a slot for a new word.
    pub bytes_moved: u64,
}

/// Unsorted symbol table with linear lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SymbolTable {
    entries: Vec<SymbolEntry>,
}

impl SymbolTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SymbolEntry> {
        self.entries.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut SymbolEntry> {
        self.entries.iter_mut()
    }

    pub fn get(&self, label: &str) -> Option<&SymbolEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub(crate) fn entry(&self, index: usize) -> &SymbolEntry {
        &self.entries[index]
    }

    pub(crate) fn entry_mut(&mut self, index: usize) -> &mut SymbolEntry {
        &mut self.entries[index]
    }

    pub(crate) fn position(&self, label: &str, counters: &mut OpCounters) -> Option<usize> {
        for (i, e) in self.entries.iter().enumerate() {
            counters.symbol_entries_scanned += 1;
            if e.label == label {
                return Some(i);
            }
        }
        None
    }

    pub(crate) fn ensure(&mut self, label: &str, counters: &mut OpCounters) -> usize {
        match self.position(label, counters) {
            Some(i) => i,
            None => {
                self.entries.push(SymbolEntry {
                    label: label.to_string(),
                    declaration_line: None,
                    address: None,
                    references: Vec::new(),
                });
                self.entries.len() - 1
            }
        }
    }
}

/// Text and data segments as little-endian byte arrays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MachineImage {
    pub text: Vec<u8>,
    pub data: Vec<u8>,
}

impl MachineImage {
    pub fn text_base(&self) -> u32 {
        TEXT_BASE
    }

    pub fn data_base(&self) -> u32 {
        DATA_BASE
    }

    /// Reads a byte from either segment; bytes outside both read as zero.
    pub fn read_byte(&self, address: u32) -> u8 {
        let lookup = |base: u32, bytes: &[u8]| address.checked_sub(base).and_then(|off| bytes.get(off as usize).copied());
        lookup(DATA_BASE, &self.data).or_else(|| lookup(TEXT_BASE, &self.text)).unwrap_or(0)
    }

    pub fn read_word(&self, address: u32) -> u32 {
        u32::from_le_bytes(std::array::from_fn(|i| self.read_byte(address.wrapping_add(i as u32))))
    }

    pub fn text_words(&self) -> impl Iterator<Item = u32> + '_ {
        self.text.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
    }

    pub(crate) fn write_text_word(&mut self, address: u32, word: u32) {
        let at = (address - TEXT_BASE) as usize;
        self.text[at..at + 4].copy_from_slice(&word.to_le_bytes());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line} is out of range (document has {count} lines)")]
pub struct LineOutOfRange {
    pub line: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AssemblyState {
    pub lines: Vec<LineTableEntry>,
    pub symbols: SymbolTable,
    pub image: MachineImage,
    /// Counters for the most recent event only.
    pub counters: OpCounters,
}

impl AssemblyState {
    pub fn address_for_line(&self, line_number: usize) -> Result<Option<u32>, LineOutOfRange> {
        self.lines.get(line_number).map(|e| e.address).ok_or(LineOutOfRange {
            line: line_number,
            count: self.lines.len(),
        })
    }

    pub fn find_symbol(&self, label: &str) -> Option<&SymbolEntry> {
        self.symbols.get(label)
    }

    /// Appends a reference, creating the symbol if needed. Identical
    /// `(line, address)` pairs are not stored twice.
    pub fn record_reference(&mut self, label: &str, line_number: usize, address: u32) {
        let index = self.symbols.ensure(label, &mut self.counters);
        let refs = &mut self.symbols.entry_mut(index).references;
        let reference = Reference { line_number, address };
        if !refs.contains(&reference) {
            refs.push(reference);
        }
    }

    /// All diagnostics in line order, then column order.
    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.lines.iter().flat_map(|e| e.diagnostics.iter())
    }

    pub fn has_errors(&self) -> bool {
        self.lines.iter().any(LineTableEntry::error)
    }

    /// Line whose word sits at `address`, if any (linear scan).
    pub fn line_at_address(&self, address: u32) -> Option<usize> {
        self.lines.iter().position(|e| e.kind.bears_word() && e.address == Some(address))
    }

    /// Deterministic text serialization used by golden tests and `--dump-state`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let opt_hex = |v: Option<u32>| v.map_or_else(|| "-".to_string(), |v| format!("{v:#010x}"));
        let _ = writeln!(out, "lines {}", self.lines.len());
        for e in &self.lines {
            let _ = writeln!(
                out,
                "{} {} addr={} len={} word={} err={} {}",
                e.source_line_number,
                serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
                opt_hex(e.address),
                e.length,
                opt_hex(e.instruction),
                u8::from(e.error()),
                serde_json::to_string(&e.source_line).unwrap_or_default(),
            );
            for d in &e.diagnostics {
                let code = serde_json::to_value(d.code).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
                let _ = writeln!(out, "  ! {} {}..{} {}", code, d.column_span.start, d.column_span.end, d.message);
            }
        }
        // live references only, so both assemblers dump the same text
        let mut rows: Vec<(&str, Option<usize>, Option<u32>, Vec<Reference>)> = self
            .symbols
            .iter()
            .map(|s| {
                let mut refs: Vec<Reference> = s.references.iter().filter(|r| !self.is_stale(&s.label, r)).copied().collect();
                refs.sort();
                (s.label.as_str(), s.declaration_line, s.address, refs)
            })
            .filter(|(_, decl, _, refs)| decl.is_some() || !refs.is_empty())
            .collect();
        rows.sort_by_key(|r| r.0);
        let _ = writeln!(out, "symbols {}", rows.len());
        for (label, decl, address, refs) in rows {
            let refs: Vec<String> = refs.iter().map(|r| format!("{}@{:#010x}", r.line_number, r.address)).collect();
            let _ = writeln!(
                out,
                "{} decl={} addr={} refs=[{}]",
                label,
                decl.map_or_else(|| "-".to_string(), |l| l.to_string()),
                opt_hex(address),
                refs.join(",")
            );
        }
        dump_bytes(&mut out, "text", TEXT_BASE, &self.image.text);
        dump_bytes(&mut out, "data", DATA_BASE, &self.image.data);
        out
    }

    /// The parts of the state that must agree between the two assemblers.
    pub fn observable(&self) -> ObservableState {
        let lines = self.lines.iter().map(|e| (e.address, e.length, e.instruction, e.error())).collect();
        let mut symbols = BTreeMap::new();
        let mut references = BTreeSet::new();
        for s in self.symbols.iter() {
            if let Some(line) = s.declaration_line {
                symbols.insert(s.label.clone(), (line, s.address));
            }
            for r in &s.references {
                if !self.is_stale(&s.label, r) {
                    references.insert((s.label.clone(), r.line_number, r.address));
                }
            }
        }
        ObservableState {
            text: self.image.text.clone(),
            data: self.image.data.clone(),
            lines,
            symbols,
            references,
        }
    }

    /// A reference is stale when its line no longer parses as an instruction
    /// naming the label.
    pub fn is_stale(&self, label: &str, reference: &Reference) -> bool {
        let Some(entry) = self.lines.get(reference.line_number) else {
            return true;
        };
        let parsed = parse_line(&entry.source_line, reference.line_number);
        parsed.statement.instruction().and_then(|i| i.label()) != Some(label)
    }
}

fn dump_bytes(out: &mut String, name: &str, base: u32, bytes: &[u8]) {
    let _ = writeln!(out, "{name} {}", bytes.len());
    for (i, chunk) in bytes.chunks(16).enumerate() {
        let hex: Vec<String> = chunk.iter().map(|b| format!("{b:02x}")).collect();
        let _ = writeln!(out, "{:08x}: {}", base as usize + i * 16, hex.join(" "));
    }
}

/// Everything the equivalence check compares: image bytes, per-line
/// `(address, length, instruction, error)` tuples, declared symbol
/// addresses, and non-stale references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservableState {
    pub text: Vec<u8>,
    pub data: Vec<u8>,
    pub lines: Vec<(Option<u32>, u32, Option<u32>, bool)>,
    pub symbols: BTreeMap<String, (usize, Option<u32>)>,
    pub references: BTreeSet<(String, usize, u32)>,
}
