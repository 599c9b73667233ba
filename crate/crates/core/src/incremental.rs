//! Incremental assembly driven by editor events.
//!
//! Most keystrokes touch one line: the engine re-assembles only that line,
//! or opens a one-word slot in the text segment when a line starts carrying
//! an instruction. Deletes, pastes, colons and edits to label or data lines
//! fall back to [`assemble_full`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembler::{assemble_full, encode_at, reencode_line, split_lines, undefined_label, Encoded};
use crate::parser::{classify_line, parse_line, LineKind, SOURCE_LINE_MAX};
use crate::program::{is_text_address, AssemblyState, LineTableEntry, OpCounters};

/// A single editor mutation. Positions are 0-based lines and character
/// columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditEvent {
    InsertChar { line: usize, col: usize, ch: char },
    InsertNewline { line: usize, col: usize },
    DeleteRange { start_line: usize, start_col: usize, end_line: usize, end_col: usize },
    Paste { line: usize, col: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    Delete,
    Paste,
    Colon,
    DataStatement,
    LabelLine,
    LineTooLong,
    /// The edit turns a line into (or out of) a different kind of statement.
    KindChange,
    /// A newline splits a line into two non-blank halves.
    LineSplit,
    /// The new instruction would capture a label currently bound to data.
    LabelRebind,
    /// Full-assembly mode: every edit reassembles.
    FullMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "class", content = "reason", rename_all = "snake_case")]
pub enum EditClass {
    IncrementalLineChange,
    IncrementalLineInsert,
    IncrementalEmptyLineInsert,
    FullFallback(FallbackReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EditError {
    #[error("position {line}:{col} is outside the document")]
    PositionOutOfBounds { line: usize, col: usize },
    #[error("newlines must be sent as insert_newline or paste events")]
    NewlineInInsertChar,
    #[error("delete range ends before it starts")]
    InvertedRange,
}

/// What an edit changed, for the UI and for tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub class: EditClass,
    pub full_reassembly: bool,
    pub image_changed: bool,
    /// Lines whose entries were rewritten (all lines after a fallback).
    pub changed_lines: Vec<usize>,
    /// Address of a newly inserted word; later words moved down by 4.
    pub inserted_word_address: Option<u32>,
    /// Lines re-encoded because a reference crossed the inserted word.
    pub reencoded_lines: Vec<usize>,
    pub changed_symbols: Vec<String>,
    pub counters: OpCounters,
}

impl Delta {
    fn new(class: EditClass) -> Delta {
        Delta {
            class,
            full_reassembly: matches!(class, EditClass::FullFallback(_)),
            image_changed: false,
            changed_lines: Vec::new(),
            inserted_word_address: None,
            reencoded_lines: Vec::new(),
            changed_symbols: Vec::new(),
            counters: OpCounters::default(),
        }
    }
}

/// Editor buffer as a list of lines. The empty document has zero lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Document {
    lines: Vec<String>,
}

fn byte_index(text: &str, col: usize) -> usize {
    text.char_indices().nth(col).map_or(text.len(), |(i, _)| i)
}

impl Document {
    pub fn from_text(text: &str) -> Document {
        Document {
            lines: split_lines(text).map(str::to_string).collect(),
        }
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn line(&self, line: usize) -> Option<&str> {
        self.lines.get(line).map(String::as_str)
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// Text of `line`, treating position 0 of an empty document as an empty line.
    fn line_or_virtual(&self, line: usize) -> Option<&str> {
        match self.lines.get(line) {
            Some(l) => Some(l),
            None if line == 0 && self.lines.is_empty() => Some(""),
            None => None,
        }
    }

    fn check_position(&self, line: usize, col: usize) -> Result<(), EditError> {
        match self.line_or_virtual(line) {
            Some(text) if col <= text.chars().count() => Ok(()),
            _ => Err(EditError::PositionOutOfBounds { line, col }),
        }
    }

    pub fn validate(&self, event: &EditEvent) -> Result<(), EditError> {
        match *event {
            EditEvent::InsertChar { line, col, ch } => {
                if ch == '\n' || ch == '\r' {
                    return Err(EditError::NewlineInInsertChar);
                }
                self.check_position(line, col)
            }
            EditEvent::InsertNewline { line, col } | EditEvent::Paste { line, col, .. } => self.check_position(line, col),
            EditEvent::DeleteRange { start_line, start_col, end_line, end_col } => {
                self.check_position(start_line, start_col)?;
                self.check_position(end_line, end_col)?;
                if (end_line, end_col) < (start_line, start_col) {
                    return Err(EditError::InvertedRange);
                }
                Ok(())
            }
        }
    }

    /// Applies a validated event to the text.
    pub fn apply(&mut self, event: &EditEvent) -> Result<(), EditError> {
        self.validate(event)?;
        if self.lines.is_empty() {
            self.lines.push(String::new());
        }
        match event {
            EditEvent::InsertChar { line, col, ch } => {
                let text = &mut self.lines[*line];
                let at = byte_index(text, *col);
                text.insert(at, *ch);
            }
            EditEvent::InsertNewline { line, col } => {
                let text = &mut self.lines[*line];
                let at = byte_index(text, *col);
                let rest = text.split_off(at);
                self.lines.insert(line + 1, rest);
            }
            EditEvent::DeleteRange { start_line, start_col, end_line, end_col } => {
                let start = byte_index(&self.lines[*start_line], *start_col);
                let end = byte_index(&self.lines[*end_line], *end_col);
                let tail = self.lines[*end_line][end..].to_string();
                self.lines[*start_line].truncate(start);
                self.lines[*start_line].push_str(&tail);
                self.lines.drain(start_line + 1..=*end_line);
            }
            EditEvent::Paste { line, col, text } => {
                let current = &self.lines[*line];
                let at = byte_index(current, *col);
                let combined = format!("{}{}{}", &current[..at], text, &current[at..]);
                let replacement: Vec<String> = combined.split('\n').map(str::to_string).collect();
                self.lines.splice(*line..=*line, replacement);
            }
        }
        // the empty buffer is represented by zero lines
        if self.lines.len() == 1 && self.lines[0].is_empty() {
            self.lines.clear();
        }
        Ok(())
    }
}

fn line_kind(state: &AssemblyState, line: usize) -> LineKind {
    state.lines.get(line).map_or(LineKind::Empty, |e| e.kind)
}

/// Whether a word inserted at `line` would become the target of a label
/// that is currently bound into the data segment.
fn captures_data_label(state: &AssemblyState, line: usize) -> bool {
    for entry in state.lines[..line.min(state.lines.len())].iter().rev() {
        match entry.kind {
            LineKind::Empty | LineKind::Comment => {}
            LineKind::DataDirective if entry.length == 0 => {}
            LineKind::LabelDecl => {
                let bound_to_data = state
                    .symbols
                    .iter()
                    .any(|s| s.declaration_line == Some(entry.source_line_number) && s.address.is_some_and(|a| !is_text_address(a)));
                if bound_to_data {
                    return true;
                }
            }
            _ => return false,
        }
    }
    false
}

/// Decides how an event will be processed. Pure in the pre-edit document and
/// state.
pub fn classify_edit(state: &AssemblyState, document: &Document, event: &EditEvent) -> Result<EditClass, EditError> {
    use EditClass::*;
    document.validate(event)?;
    match *event {
        EditEvent::DeleteRange { .. } => Ok(FullFallback(FallbackReason::Delete)),
        EditEvent::Paste { .. } => Ok(FullFallback(FallbackReason::Paste)),
        EditEvent::InsertNewline { line, col } => {
            let text = document.line_or_virtual(line).unwrap_or("");
            let at = byte_index(text, col);
            let (left, right) = text.split_at(at);
            if !left.trim().is_empty() && !right.trim().is_empty() {
                return Ok(FullFallback(FallbackReason::LineSplit));
            }
            // the non-blank half loses surrounding whitespace; label and data
            // lines are only ever rebuilt by a full pass
            let reshaped = !left.is_empty() && !right.is_empty();
            let kind = line_kind(state, line);
            if reshaped && matches!(kind, LineKind::LabelDecl | LineKind::DataDirective) {
                return Ok(FullFallback(FallbackReason::LineSplit));
            }
            Ok(IncrementalEmptyLineInsert)
        }
        EditEvent::InsertChar { line, col, ch } => {
            if ch == ':' {
                return Ok(FullFallback(FallbackReason::Colon));
            }
            let old_kind = line_kind(state, line);
            match old_kind {
                LineKind::LabelDecl => return Ok(FullFallback(FallbackReason::LabelLine)),
                LineKind::DataDirective => return Ok(FullFallback(FallbackReason::DataStatement)),
                _ => {}
            }
            let old_text = document.line_or_virtual(line).unwrap_or("");
            if old_text.chars().count() + 1 > SOURCE_LINE_MAX {
                return Ok(FullFallback(FallbackReason::LineTooLong));
            }
            let mut new_text = old_text.to_string();
            new_text.insert(byte_index(old_text, col), ch);
            let new_kind = classify_line(&new_text);
            match (old_kind.bears_word(), new_kind.bears_word()) {
                (true, true) => Ok(IncrementalLineChange),
                (false, true) if captures_data_label(state, line) => Ok(FullFallback(FallbackReason::LabelRebind)),
                (false, true) => Ok(IncrementalLineInsert),
                (false, false) if matches!(new_kind, LineKind::Empty | LineKind::Comment) => Ok(IncrementalLineChange),
                (false, false) if new_kind == LineKind::DataDirective => Ok(FullFallback(FallbackReason::DataStatement)),
                _ => Ok(FullFallback(FallbackReason::KindChange)),
            }
        }
    }
}

/// Re-parses one line in place. Word-bearing lines keep their address and
/// overwrite their word; nothing else moves. Old references stay in the
/// symbol table even if the line no longer names the label.
pub fn reassemble_line(state: &mut AssemblyState, line: usize, text: &str) {
    state.counters.lines_assembled += 1;
    let parsed = parse_line(text, line);
    let kind = parsed.kind();
    let entry = &state.lines[line];
    let address = entry.address.filter(|_| entry.kind.bears_word() && kind.bears_word());
    let mut fresh = LineTableEntry::new(line, text, kind, parsed.diagnostics);
    if let Some(address) = address {
        fresh.address = Some(address);
        fresh.length = 4;
        assemble_into(state, &mut fresh, parsed.statement.instruction(), line, address);
        state.image.write_text_word(address, fresh.instruction.unwrap_or_default());
    }
    state.lines[line] = fresh;
}

/// Encodes an instruction for `entry`, recording its label reference.
fn assemble_into(
    state: &mut AssemblyState,
    entry: &mut LineTableEntry,
    insn: Option<&crate::parser::LoweredInstruction>,
    line: usize,
    address: u32,
) {
    entry.set_placeholder();
    let Some(insn) = insn else {
        return;
    };
    entry.absolute_target = matches!(insn.imm, crate::parser::ImmOperand::Address(_));
    if let Some(label) = insn.label() {
        state.record_reference(label, line, address);
    }
    match encode_at(insn, address, line, &state.symbols, &mut state.counters) {
        Encoded::Word(resolved, word) => entry.set_word(&resolved, word),
        Encoded::Pending(label) => entry.diagnostics.push(undefined_label(line, insn, &label)),
        Encoded::Failed(d) => entry.diagnostics.push(d),
    }
    entry.diagnostics.sort_by_key(|d| (d.column_span.start, d.column_span.end));
}

/// Text-segment address the word for `line` gets when the line starts
/// carrying an instruction: just after the nearest word-bearing line above.
fn slot_address(state: &AssemblyState, line: usize) -> u32 {
    state.lines[..line]
        .iter()
        .rev()
        .find(|e| e.kind.bears_word())
        .and_then(|e| e.address)
        .map_or(0, |a| a + 4)
}

/// Gives `line` (which just became an instruction line) a word of its own.
///
/// 1. Assemble the line and record its label reference, if any.
/// 2. Insert the word into the text segment, moving later bytes down 4.
/// 3. Add 4 to the address of every later word-bearing line.
/// 4. Add 4 to text symbols declared after the line and to references
///    located after it.
/// 5. Re-encode every reference whose span between symbol and use covers
///    the inserted word, forward or backward.
///
/// Returns the inserted address and the re-encoded lines.
pub fn insert_instruction_word(state: &mut AssemblyState, line: usize, text: &str) -> (u32, Vec<usize>) {
    let address = slot_address(state, line);

    // 1
    state.counters.lines_assembled += 1;
    let parsed = parse_line(text, line);
    let mut entry = LineTableEntry::new(line, text, parsed.kind(), parsed.diagnostics);
    entry.address = Some(address);
    entry.length = 4;
    assemble_into(state, &mut entry, parsed.statement.instruction(), line, address);
    let word = entry.instruction.unwrap_or_default();
    state.lines[line] = entry;

    // 2
    let at = address as usize;
    state.counters.bytes_moved += (state.image.text.len() - at) as u64;
    state.image.text.splice(at..at, word.to_le_bytes());

    // 3
    let mut moved_absolute = Vec::new();
    for (offset, entry) in state.lines[line + 1..].iter_mut().enumerate() {
        state.counters.line_entries_updated += 1;
        if entry.kind.bears_word() {
            if let Some(a) = entry.address.as_mut() {
                *a += 4;
                if entry.absolute_target {
                    moved_absolute.push(line + 1 + offset);
                }
            }
        }
    }

    // 4
    let counters = &mut state.counters;
    for symbol in state.symbols.iter_mut() {
        counters.symbol_entries_scanned += 1;
        if symbol.declaration_line.is_some_and(|d| d > line) {
            if let Some(a) = symbol.address.as_mut().filter(|a| is_text_address(**a)) {
                *a += 4;
            }
        }
        for r in &mut symbol.references {
            counters.references_examined += 1;
            if r.line_number > line {
                r.address += 4;
            }
        }
    }

    // 5
    let mut crossing = moved_absolute;
    for symbol in state.symbols.iter() {
        counters.symbol_entries_scanned += 1;
        let Some(target) = symbol.address else {
            for _ in &symbol.references {
                counters.references_examined += 1;
            }
            continue;
        };
        for r in &symbol.references {
            counters.references_examined += 1;
            if target.min(r.address) <= address && address <= target.max(r.address) && !crossing.contains(&r.line_number) {
                crossing.push(r.line_number);
            }
        }
    }
    for &l in &crossing {
        reencode_line(state, l);
    }
    (address, crossing)
}

/// Adds an empty entry at `line`, shifting later line numbers by one.
fn insert_empty_line(state: &mut AssemblyState, line: usize, text: &str) {
    state.lines.insert(line, LineTableEntry::new(line, text, LineKind::Empty, Vec::new()));
    for (offset, entry) in state.lines[line + 1..].iter_mut().enumerate() {
        state.counters.line_entries_updated += 1;
        entry.renumber(line + 1 + offset);
    }
    let counters = &mut state.counters;
    for symbol in state.symbols.iter_mut() {
        counters.symbol_entries_scanned += 1;
        if let Some(d) = symbol.declaration_line.as_mut().filter(|d| **d >= line) {
            *d += 1;
        }
        for r in &mut symbol.references {
            counters.references_examined += 1;
            if r.line_number >= line {
                r.line_number += 1;
            }
        }
    }
}

/// Applies `event` to the document and brings `state` up to date,
/// incrementally where possible.
pub fn apply_edit(state: &mut AssemblyState, document: &mut Document, event: &EditEvent) -> Result<Delta, EditError> {
    let class = classify_edit(state, document, event)?;
    apply_classified(state, document, event, class)
}

/// Full-assembly mode: every edit rebuilds the state from the text.
pub fn apply_edit_full(state: &mut AssemblyState, document: &mut Document, event: &EditEvent) -> Result<Delta, EditError> {
    apply_classified(state, document, event, EditClass::FullFallback(FallbackReason::FullMode))
}

pub(crate) fn apply_classified(
    state: &mut AssemblyState,
    document: &mut Document,
    event: &EditEvent,
    class: EditClass,
) -> Result<Delta, EditError> {
    document.apply(event)?;
    state.counters = OpCounters::default();
    let mut delta = Delta::new(class);
    match class {
        EditClass::FullFallback(_) => {
            let before = (state.image.text.clone(), state.image.data.clone());
            *state = assemble_full(&document.text());
            delta.image_changed = before != (state.image.text.clone(), state.image.data.clone());
            delta.changed_lines = (0..state.lines.len()).collect();
            delta.changed_symbols = state.symbols.iter().map(|s| s.label.clone()).collect();
        }
        EditClass::IncrementalEmptyLineInsert => {
            let EditEvent::InsertNewline { line, .. } = *event else {
                unreachable!("only newlines are classified as empty-line inserts")
            };
            if state.lines.is_empty() {
                state.lines.push(LineTableEntry::new(0, "", LineKind::Empty, Vec::new()));
            }
            let upper = &document.lines[line];
            let lower = &document.lines[line + 1];
            if upper.trim().is_empty() {
                // new blank line above; the old line moves down
                insert_empty_line(state, line, upper);
                delta.changed_lines.push(line);
                if state.lines[line + 1].source_line != *lower {
                    reassemble_line(state, line + 1, lower);
                    delta.changed_lines.push(line + 1);
                }
            } else {
                insert_empty_line(state, line + 1, lower);
                delta.changed_lines.push(line + 1);
                if state.lines[line].source_line != *upper {
                    reassemble_line(state, line, upper);
                    delta.changed_lines.push(line);
                }
            }
        }
        EditClass::IncrementalLineInsert => {
            let EditEvent::InsertChar { line, .. } = *event else {
                unreachable!("only character inserts open a word")
            };
            if state.lines.is_empty() {
                state.lines.push(LineTableEntry::new(0, "", LineKind::Empty, Vec::new()));
            }
            let (address, reencoded) = insert_instruction_word(state, line, &document.lines[line]);
            delta.image_changed = true;
            delta.inserted_word_address = Some(address);
            delta.changed_lines.push(line);
            delta.changed_lines.extend(reencoded.iter().copied());
            delta.reencoded_lines = reencoded;
        }
        EditClass::IncrementalLineChange => {
            let EditEvent::InsertChar { line, .. } = *event else {
                unreachable!("only character inserts change a line in place")
            };
            if state.lines.is_empty() {
                state.lines.push(LineTableEntry::new(0, "", LineKind::Empty, Vec::new()));
            }
            let before = state.lines[line].instruction;
            reassemble_line(state, line, &document.lines[line]);
            delta.image_changed = before != state.lines[line].instruction;
            delta.changed_lines.push(line);
        }
    }
    if !delta.full_reassembly {
        // symbols whose reference lists grew on this line
        for symbol in state.symbols.iter() {
            if symbol.references.iter().any(|r| delta.changed_lines.contains(&r.line_number)) {
                delta.changed_symbols.push(symbol.label.clone());
            }
        }
    }
    delta.counters = state.counters;
    Ok(delta)
}

/// A malformed line in an edit-trace file.
#[derive(Debug, Error)]
#[error("trace line {line}: {source}")]
pub struct TraceError {
    pub line: usize,
    pub source: serde_json::Error,
}

/// Parses an edit trace: one JSON event per line. Blank lines and lines
/// starting with `#` are skipped; `line` in errors is 1-based.
pub fn read_trace(text: &str) -> Result<Vec<EditEvent>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| TraceError { line: i + 1, source }))
        .collect()
}

pub fn write_trace(events: &[EditEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode;

    fn insert_char(line: usize, col: usize, ch: char) -> EditEvent {
        EditEvent::InsertChar { line, col, ch }
    }

    fn type_line(state: &mut AssemblyState, doc: &mut Document, line: usize, text: &str) -> Vec<Delta> {
        text.chars()
            .enumerate()
            .map(|(col, ch)| apply_edit(state, doc, &insert_char(line, col, ch)).unwrap())
            .collect()
    }

    fn setup(src: &str) -> (AssemblyState, Document) {
        (assemble_full(src), Document::from_text(src))
    }

    #[test]
    fn classification_examples() {
        let src = "a:\naddi x1, x1, 1\n.word 5\n\n\nnop";
        let (state, doc) = setup(src);
        let class = |e: EditEvent| classify_edit(&state, &doc, &e).unwrap();
        assert_eq!(class(insert_char(5, 3, ':')), EditClass::FullFallback(FallbackReason::Colon));
        assert_eq!(
            class(EditEvent::DeleteRange { start_line: 1, start_col: 0, end_line: 1, end_col: 1 }),
            EditClass::FullFallback(FallbackReason::Delete)
        );
        assert_eq!(class(insert_char(4, 0, 'a')), EditClass::IncrementalLineInsert);
        assert_eq!(class(insert_char(1, 3, 'x')), EditClass::IncrementalLineChange);
        assert_eq!(class(insert_char(2, 7, '6')), EditClass::FullFallback(FallbackReason::DataStatement));
        assert_eq!(class(insert_char(0, 0, 'b')), EditClass::FullFallback(FallbackReason::LabelLine));
        assert_eq!(class(EditEvent::InsertNewline { line: 1, col: 0 }), EditClass::IncrementalEmptyLineInsert);
        assert_eq!(class(EditEvent::InsertNewline { line: 1, col: 4 }), EditClass::FullFallback(FallbackReason::LineSplit));
        assert_eq!(class(insert_char(1, 0, '#')), EditClass::FullFallback(FallbackReason::KindChange));
        assert_eq!(class(insert_char(3, 0, '#')), EditClass::IncrementalLineChange);
        assert_eq!(class(insert_char(3, 0, '.')), EditClass::FullFallback(FallbackReason::DataStatement));
        assert_eq!(
            class(EditEvent::Paste { line: 0, col: 0, text: "x".into() }),
            EditClass::FullFallback(FallbackReason::Paste)
        );
        assert_eq!(
            classify_edit(&state, &doc, &insert_char(9, 0, 'a')),
            Err(EditError::PositionOutOfBounds { line: 9, col: 0 })
        );
    }

    #[test]
    fn typing_the_instruction_into_a_blank_line() {
        let (mut state, mut doc) = setup("addi x1, x1, 1\n\naddi x3, x3, 3");
        let deltas = type_line(&mut state, &mut doc, 1, "addi x1, x2, -121");
        assert_eq!(deltas.len(), 17);
        assert_eq!(deltas[0].class, EditClass::IncrementalLineInsert);
        assert!(deltas[1..].iter().all(|d| d.class == EditClass::IncrementalLineChange));
        assert_eq!(state.image.read_word(4), 0xF871_0093);
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn newline_leaves_image_untouched() {
        let (mut state, mut doc) = setup("loop:\naddi x1, x1, -1\nbnez x1, loop");
        let before = state.image.clone();
        let delta = apply_edit(&mut state, &mut doc, &EditEvent::InsertNewline { line: 1, col: 0 }).unwrap();
        assert_eq!(delta.class, EditClass::IncrementalEmptyLineInsert);
        assert!(!delta.image_changed);
        assert_eq!(state.image, before);
        assert_eq!(state.find_symbol("loop").unwrap().references[0].line_number, 3);
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn insertion_inside_a_backward_branch() {
        let (mut state, mut doc) = setup("loop:\naddi x1, x1, -1\nbne x1, x0, loop");
        apply_edit(&mut state, &mut doc, &EditEvent::InsertNewline { line: 1, col: 15 }).unwrap();
        type_line(&mut state, &mut doc, 2, "add x2, x2, x2");
        let bne = decode(state.image.read_word(8)).unwrap();
        assert_eq!((bne.mnemonic(), bne.imm), ("bne", -8));
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn insertion_inside_a_forward_branch() {
        let (mut state, mut doc) = setup("beq x1, x2, done\n\nnop\ndone:\necall");
        type_line(&mut state, &mut doc, 1, "nop");
        let beq = decode(state.image.read_word(0)).unwrap();
        assert_eq!(beq.imm, 12);
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn insertion_outside_the_interval_only_shifts() {
        let (mut state, mut doc) = setup("loop:\naddi x1, x1, -1\nbne x1, x0, loop\n");
        let words_before: Vec<u32> = state.image.text_words().collect();
        let delta = type_line(&mut state, &mut doc, 3, "nop");
        assert!(delta[0].reencoded_lines.is_empty());
        let words_after: Vec<u32> = state.image.text_words().collect();
        assert_eq!(&words_after[..2], &words_before[..]);
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn moved_numeric_branch_keeps_its_target() {
        let (mut state, mut doc) = setup("\nnop\nj 0");
        type_line(&mut state, &mut doc, 0, "nop");
        let j = decode(state.image.read_word(8)).unwrap();
        assert_eq!((j.mnemonic(), j.imm), ("jal", -8));
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn new_line_referencing_a_label_adds_a_reference() {
        let (mut state, mut doc) = setup("loop:\naddi x1, x1, -1\n");
        type_line(&mut state, &mut doc, 2, "j loop");
        assert_eq!(state.find_symbol("loop").unwrap().references.len(), 1);
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn stale_references_are_kept() {
        let (mut state, mut doc) = setup("a:\nnop\nb:\nnop\nj a");
        apply_edit(&mut state, &mut doc, &insert_char(4, 2, 'b')).unwrap();
        // "j ba" now references an undeclared label; the old reference to a stays
        assert_eq!(state.find_symbol("a").unwrap().references.len(), 1);
        assert!(state.is_stale("a", &state.find_symbol("a").unwrap().references[0]));
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn invalid_line_keeps_placeholder() {
        let (mut state, mut doc) = setup("nop\n");
        type_line(&mut state, &mut doc, 1, "ad");
        assert_eq!(state.image.read_word(4), 0);
        assert!(state.lines[1].error());
    }

    #[test]
    fn editing_into_a_comment_falls_back() {
        let (mut state, mut doc) = setup("nop\nnop");
        let delta = apply_edit(&mut state, &mut doc, &insert_char(0, 0, '#')).unwrap();
        assert_eq!(delta.class, EditClass::FullFallback(FallbackReason::KindChange));
        assert_eq!(state.image.text.len(), 4);
    }

    #[test]
    fn data_label_capture_falls_back() {
        let (mut state, mut doc) = setup("d:\n\n.word 5");
        let delta = apply_edit(&mut state, &mut doc, &insert_char(1, 0, 'n')).unwrap();
        assert_eq!(delta.class, EditClass::FullFallback(FallbackReason::LabelRebind));
        assert_eq!(state.observable(), assemble_full(&doc.text()).observable());
    }

    #[test]
    fn typing_into_an_empty_document() {
        let mut state = assemble_full("");
        let mut doc = Document::from_text("");
        type_line(&mut state, &mut doc, 0, "nop");
        assert_eq!(doc.text(), "nop");
        assert_eq!(state.image.read_word(0), 0x13);
        assert_eq!(state.observable(), assemble_full("nop").observable());
    }

    #[test]
    fn line_change_counts() {
        let (mut state, mut doc) = setup("a:\nnop\naddi x1, x1, 1");
        let d = apply_edit(&mut state, &mut doc, &insert_char(2, 14, '2')).unwrap();
        assert_eq!(d.class, EditClass::IncrementalLineChange);
        assert_eq!(d.counters.lines_assembled, 1);
        assert_eq!(d.counters.bytes_moved, 0);
        assert_eq!(state.image.text.len(), 8);
    }

    #[test]
    fn document_edits() {
        let mut doc = Document::from_text("abc\ndef");
        doc.apply(&EditEvent::DeleteRange { start_line: 0, start_col: 1, end_line: 1, end_col: 2 }).unwrap();
        assert_eq!(doc.text(), "af");
        doc.apply(&EditEvent::Paste { line: 0, col: 1, text: "x\ny".into() }).unwrap();
        assert_eq!(doc.text(), "ax\nyf");
        doc.apply(&EditEvent::InsertNewline { line: 1, col: 2 }).unwrap();
        assert_eq!(doc.lines(), &["ax", "yf", ""]);
        assert_eq!(
            doc.apply(&EditEvent::InsertChar { line: 0, col: 0, ch: '\n' }),
            Err(EditError::NewlineInInsertChar)
        );
    }

    #[test]
    fn edit_trace_json_shape() {
        let e: EditEvent = serde_json::from_str(r#"{"op":"insert_char","line":3,"col":1,"ch":"x"}"#).unwrap();
        assert_eq!(e, insert_char(3, 1, 'x'));
        let json = serde_json::to_string(&EditEvent::InsertNewline { line: 1, col: 2 }).unwrap();
        assert_eq!(json, r#"{"op":"insert_newline","line":1,"col":2}"#);
    }

    #[test]
    fn trace_files_round_trip() {
        let events = vec![
            insert_char(0, 0, '"'),
            EditEvent::Paste { line: 0, col: 1, text: "a\nb".into() },
            EditEvent::DeleteRange { start_line: 0, start_col: 0, end_line: 1, end_col: 1 },
        ];
        let text = write_trace(&events);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_trace(&format!("# header\n\n{text}")).unwrap(), events);
        assert_eq!(read_trace("{\"op\":\"insert_char\"}\n\nnope").unwrap_err().line, 1);
    }
}
