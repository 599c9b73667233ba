//! Line-level parsing of assembly source.
//!
//! Every source line is parsed on its own: the incremental engine re-parses
//! single lines as they are edited, so nothing here may depend on the
//! surrounding text.

use serde::{Deserialize, Serialize};

use crate::isa::{self, check_immediate, InstructionSpec, OperandSchema, Reg};

/// Longer lines are rejected with a diagnostic.
pub const SOURCE_LINE_MAX: usize = 255;

/// Half-open column range `[start, end)`, counted in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        Span { start, end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    UnknownMnemonic,
    BadOperand,
    OperandArity,
    ImmediateOutOfRange,
    RegisterOutOfRange,
    BadDirective,
    UnterminatedString,
    DuplicateColon,
    BadLabel,
    LabelWithInstruction,
    LineTooLong,
    UndefinedLabel,
    DuplicateLabel,
    BranchOffsetOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line_number: usize,
    pub column_span: Span,
    pub code: DiagnosticCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Empty,
    Comment,
    LabelDecl,
    DataDirective,
    Meta,
    Instruction,
}

impl LineKind {
    /// Instruction and meta lines each occupy one text-segment word, valid
    /// or not.
    pub fn bears_word(self) -> bool {
        matches!(self, LineKind::Instruction | LineKind::Meta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Word,
    Double,
    String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataValues {
    Words(Vec<i32>),
    Doubles(Vec<f64>),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataItem {
    pub directive: Directive,
    pub values: DataValues,
    pub byte_length: u32,
}

impl DataItem {
    fn new(directive: Directive, values: DataValues) -> DataItem {
        let byte_length = match &values {
            DataValues::Words(w) => 4 * w.len(),
            DataValues::Doubles(d) => 8 * d.len(),
            DataValues::Bytes(b) => (b.len() + 1).div_ceil(4) * 4,
        } as u32;
        DataItem { directive, values, byte_length }
    }

    /// Little-endian memory image, including the NUL terminator and padding
    /// for strings.
    pub fn bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_length as usize);
        match &self.values {
            DataValues::Words(words) => words.iter().for_each(|w| out.extend_from_slice(&w.to_le_bytes())),
            DataValues::Doubles(ds) => ds.iter().for_each(|d| out.extend_from_slice(&d.to_bits().to_le_bytes())),
            DataValues::Bytes(bytes) => out.extend_from_slice(bytes),
        }
        out.resize(self.byte_length as usize, 0);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OperandValue {
    Reg(Reg),
    Int(i64),
    Mem { offset: i64, base: Reg },
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub value: OperandValue,
    pub span: Span,
}

/// An instruction as written: mnemonic plus syntactic operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub mnemonic: String,
    pub mnemonic_span: Span,
    pub operands: Vec<Operand>,
}

/// The immediate slot of a lowered instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImmOperand {
    Value(i32),
    /// Numeric branch/jump operand: an absolute target address.
    Address(u32),
    Label(String),
}

/// A base instruction with operands checked against its schema; only label
/// targets remain to be resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoweredInstruction {
    pub spec: &'static InstructionSpec,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    pub imm: ImmOperand,
    pub imm_span: Span,
    /// Set when the source used a pseudoinstruction.
    pub pseudo: Option<&'static str>,
}

impl LoweredInstruction {
    pub fn label(&self) -> Option<&str> {
        match &self.imm {
            ImmOperand::Label(name) => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Empty,
    Comment,
    /// `None` when the declaration is malformed.
    Label(Option<String>),
    Data(Option<DataItem>),
    Meta(Option<LoweredInstruction>),
    Instruction(Option<LoweredInstruction>),
}

impl Statement {
    pub fn kind(&self) -> LineKind {
        match self {
            Statement::Empty => LineKind::Empty,
            Statement::Comment => LineKind::Comment,
            Statement::Label(_) => LineKind::LabelDecl,
            Statement::Data(_) => LineKind::DataDirective,
            Statement::Meta(_) => LineKind::Meta,
            Statement::Instruction(_) => LineKind::Instruction,
        }
    }

    pub fn instruction(&self) -> Option<&LoweredInstruction> {
        match self {
            Statement::Meta(Some(insn)) | Statement::Instruction(Some(insn)) => Some(insn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLine {
    pub statement: Statement,
    pub source_text: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedLine {
    pub fn kind(&self) -> LineKind {
        self.statement.kind()
    }
}

/// Byte offset of the comment start, ignoring `#` inside string literals.
fn comment_start(text: &str) -> Option<usize> {
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
        } else if c == '"' {
            in_string = true;
        } else if c == '#' {
            return Some(i);
        }
    }
    None
}

fn code_part(text: &str) -> &str {
    match comment_start(text) {
        Some(i) => &text[..i],
        None => text,
    }
}

fn first_word(code: &str) -> &str {
    code.split(|c: char| c.is_whitespace()).next().unwrap_or("")
}

pub fn classify_line(text: &str) -> LineKind {
    if text.trim().is_empty() {
        return LineKind::Empty;
    }
    let code = code_part(text).trim();
    if code.is_empty() {
        LineKind::Comment
    } else if code.ends_with(':') {
        LineKind::LabelDecl
    } else if code.starts_with('.') {
        LineKind::DataDirective
    } else if first_word(code).eq_ignore_ascii_case("ecall") {
        LineKind::Meta
    } else {
        LineKind::Instruction
    }
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3", "s4",
    "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

enum RegParse {
    Reg(Reg),
    OutOfRange,
    NotARegister,
}

fn parse_register(token: &str) -> RegParse {
    let lower = token.to_ascii_lowercase();
    if let Some(i) = ABI_NAMES.iter().position(|n| *n == lower) {
        return RegParse::Reg(Reg::new(i as u8).unwrap());
    }
    if lower == "fp" {
        return RegParse::Reg(Reg::new(8).unwrap());
    }
    if let Some(digits) = lower.strip_prefix('x') {
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return match digits.parse::<u32>().ok().and_then(|n| u8::try_from(n).ok()).and_then(Reg::new) {
                Some(r) => RegParse::Reg(r),
                None => RegParse::OutOfRange,
            };
        }
    }
    RegParse::NotARegister
}

pub fn is_register_name(token: &str) -> bool {
    !matches!(parse_register(token), RegParse::NotARegister)
}

/// Decimal with optional sign, or non-negative `0x` hex.
pub fn parse_int(token: &str) -> Option<i64> {
    let t = token.trim();
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        if hex.is_empty() || hex.len() > 8 {
            return None;
        }
        return i64::from_str_radix(hex, 16).ok();
    }
    let digits = t.strip_prefix(['-', '+']).unwrap_or(t);
    if digits.is_empty() || digits.len() > 12 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    t.parse::<i64>().ok()
}

/// Accumulates diagnostics for one line, converting byte offsets to columns.
struct LineParser<'a> {
    text: &'a str,
    line_number: usize,
    diagnostics: Vec<Diagnostic>,
}

impl<'a> LineParser<'a> {
    fn col(&self, byte: usize) -> usize {
        self.text[..byte].chars().count()
    }

    fn span(&self, start: usize, end: usize) -> Span {
        let (s, e) = (self.col(start), self.col(end));
        // spans are never empty; an empty range widens to the next column
        // (or the previous one at end of line)
        let len = self.text.chars().count().max(1);
        if e > s {
            Span::new(s, e)
        } else if s < len {
            Span::new(s, s + 1)
        } else {
            Span::new(len - 1, len)
        }
    }

    fn error(&mut self, span: Span, code: DiagnosticCode, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            line_number: self.line_number,
            column_span: span,
            code,
            message: message.into(),
        });
    }

    /// Byte offset of `part` within the line; `part` must be a subslice.
    fn offset_of(&self, part: &str) -> usize {
        part.as_ptr() as usize - self.text.as_ptr() as usize
    }

    fn span_of(&self, part: &str) -> Span {
        let start = self.offset_of(part);
        self.span(start, start + part.len())
    }

    fn parse(mut self) -> ParsedLine {
        let text = self.text;
        let statement = match classify_line(text) {
            LineKind::Empty => Statement::Empty,
            LineKind::Comment => Statement::Comment,
            LineKind::LabelDecl => self.parse_label(),
            LineKind::DataDirective => self.parse_data(),
            LineKind::Meta => Statement::Meta(self.parse_instruction()),
            LineKind::Instruction => Statement::Instruction(self.parse_instruction()),
        };
        let char_len = text.chars().count();
        let statement = if char_len > SOURCE_LINE_MAX {
            self.error(
                Span::new(SOURCE_LINE_MAX, char_len),
                DiagnosticCode::LineTooLong,
                format!("line is {char_len} characters long; the limit is {SOURCE_LINE_MAX}"),
            );
            match statement {
                Statement::Label(_) => Statement::Label(None),
                Statement::Data(_) => Statement::Data(None),
                Statement::Meta(_) => Statement::Meta(None),
                Statement::Instruction(_) => Statement::Instruction(None),
                other => other,
            }
        } else {
            statement
        };
        self.diagnostics.sort_by_key(|d| (d.column_span.start, d.column_span.end));
        ParsedLine {
            statement,
            source_text: text.to_string(),
            diagnostics: self.diagnostics,
        }
    }

    fn parse_label(&mut self) -> Statement {
        let code = code_part(self.text).trim();
        let name = code[..code.len() - 1].trim_end();
        if let Some(stripped) = name.strip_suffix(':') {
            let start = self.offset_of(stripped.trim_end_matches(':')) + stripped.trim_end_matches(':').len();
            let end = self.offset_of(code) + code.len();
            self.error(self.span(start, end), DiagnosticCode::DuplicateColon, "label declaration has more than one ':'");
            return Statement::Label(None);
        }
        if name.is_empty() {
            let at = self.offset_of(code);
            self.error(self.span(at, at + code.len()), DiagnosticCode::BadLabel, "missing label name before ':'");
            return Statement::Label(None);
        }
        if name.contains(char::is_whitespace) || !is_identifier(name) {
            let message = if name.split_whitespace().count() > 1 {
                "a label and an instruction cannot share a line".to_string()
            } else {
                format!("'{name}' is not a valid label name")
            };
            self.error(self.span_of(name), DiagnosticCode::BadLabel, message);
            return Statement::Label(None);
        }
        if is_register_name(name) {
            self.error(self.span_of(name), DiagnosticCode::BadLabel, format!("'{name}' is a register name"));
            return Statement::Label(None);
        }
        Statement::Label(Some(name.to_string()))
    }

    fn parse_data(&mut self) -> Statement {
        let code = code_part(self.text).trim();
        let directive = first_word(code);
        let args = code[directive.len()..].trim();
        match directive {
            ".word" => self.parse_words(directive, args),
            ".double" => self.parse_doubles(directive, args),
            ".string" => self.parse_string(directive, args),
            _ => {
                self.error(
                    self.span_of(directive),
                    DiagnosticCode::BadDirective,
                    format!("unknown directive '{directive}' (expected .word, .double or .string)"),
                );
                Statement::Data(None)
            }
        }
    }

    fn split_args<'b>(&mut self, directive: &'b str, args: &'b str) -> Option<Vec<&'b str>> {
        if args.is_empty() {
            self.error(self.span_of(directive), DiagnosticCode::BadDirective, format!("{directive} needs at least one value"));
            return None;
        }
        Some(args.split(',').map(str::trim).collect())
    }

    fn parse_words(&mut self, directive: &str, args: &str) -> Statement {
        let Some(parts) = self.split_args(directive, args) else {
            return Statement::Data(None);
        };
        let mut words = Vec::with_capacity(parts.len());
        for part in parts {
            match parse_int(part) {
                Some(v) if (i32::MIN as i64..=u32::MAX as i64).contains(&v) => words.push(v as u32 as i32),
                Some(_) => {
                    let span = self.arg_span(part, args);
                    self.error(span, DiagnosticCode::ImmediateOutOfRange, format!("'{part}' does not fit in 32 bits"));
                }
                None => {
                    let span = self.arg_span(part, args);
                    self.error(span, DiagnosticCode::BadDirective, format!("'{part}' is not an integer"));
                }
            }
        }
        if self.diagnostics.is_empty() {
            Statement::Data(Some(DataItem::new(Directive::Word, DataValues::Words(words))))
        } else {
            Statement::Data(None)
        }
    }

    fn parse_doubles(&mut self, directive: &str, args: &str) -> Statement {
        let Some(parts) = self.split_args(directive, args) else {
            return Statement::Data(None);
        };
        let mut values = Vec::with_capacity(parts.len());
        for part in parts {
            match part.parse::<f64>() {
                Ok(v) if !part.is_empty() => values.push(v),
                _ => {
                    let span = self.arg_span(part, args);
                    self.error(span, DiagnosticCode::BadDirective, format!("'{part}' is not a floating-point number"));
                }
            }
        }
        if self.diagnostics.is_empty() {
            Statement::Data(Some(DataItem::new(Directive::Double, DataValues::Doubles(values))))
        } else {
            Statement::Data(None)
        }
    }

    /// Span for a (possibly empty) argument slice inside `args`.
    fn arg_span(&self, part: &str, args: &str) -> Span {
        if part.is_empty() {
            self.span_of(args)
        } else {
            self.span_of(part)
        }
    }

    fn parse_string(&mut self, directive: &str, args: &str) -> Statement {
        if args.is_empty() {
            self.error(self.span_of(directive), DiagnosticCode::BadDirective, ".string needs a quoted string");
            return Statement::Data(None);
        }
        let Some(body) = args.strip_prefix('"') else {
            self.error(self.span_of(args), DiagnosticCode::BadDirective, ".string needs a quoted string");
            return Statement::Data(None);
        };
        let mut bytes = Vec::new();
        let mut chars = body.char_indices();
        let mut closed_at = None;
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    closed_at = Some(i);
                    break;
                }
                '\\' => {
                    let escaped = match chars.next().map(|(_, e)| e) {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('0') => '\0',
                        Some('\\') => '\\',
                        Some('"') => '"',
                        Some(other) => {
                            let at = self.offset_of(body) + i;
                            let span = self.span(at, at + 1 + other.len_utf8());
                            self.error(span, DiagnosticCode::BadDirective, format!("unknown escape '\\{other}'"));
                            other
                        }
                        None => break,
                    };
                    let mut buf = [0u8; 4];
                    bytes.extend_from_slice(escaped.encode_utf8(&mut buf).as_bytes());
                }
                other => {
                    let mut buf = [0u8; 4];
                    bytes.extend_from_slice(other.encode_utf8(&mut buf).as_bytes());
                }
            }
        }
        let Some(close) = closed_at else {
            self.error(self.span_of(args), DiagnosticCode::UnterminatedString, "string literal is not terminated");
            return Statement::Data(None);
        };
        let rest = body[close + 1..].trim();
        if !rest.is_empty() {
            self.error(self.span_of(rest), DiagnosticCode::BadDirective, "unexpected text after string literal");
        }
        if self.diagnostics.is_empty() {
            Statement::Data(Some(DataItem::new(Directive::String, DataValues::Bytes(bytes))))
        } else {
            Statement::Data(None)
        }
    }

    fn parse_operand(&mut self, raw: &str) -> Option<Operand> {
        let token = raw.trim();
        if token.is_empty() {
            let span = self.span_of(raw);
            self.error(span, DiagnosticCode::BadOperand, "missing operand");
            return None;
        }
        let span = self.span_of(token);
        if let Some(open) = token.find('(') {
            let offset_text = token[..open].trim();
            let Some(inner) = token[open + 1..].strip_suffix(')') else {
                self.error(span, DiagnosticCode::BadOperand, format!("expected offset(register), found '{token}'"));
                return None;
            };
            let offset = if offset_text.is_empty() {
                0
            } else {
                match parse_int(offset_text) {
                    Some(v) => v,
                    None => {
                        self.error(self.span_of(offset_text), DiagnosticCode::BadOperand, format!("'{offset_text}' is not an integer offset"));
                        return None;
                    }
                }
            };
            let base_text = inner.trim();
            return match parse_register(base_text) {
                RegParse::Reg(base) => Some(Operand {
                    value: OperandValue::Mem { offset, base },
                    span,
                }),
                RegParse::OutOfRange => {
                    self.error(self.span_of(base_text), DiagnosticCode::RegisterOutOfRange, format!("no register named '{base_text}'"));
                    None
                }
                RegParse::NotARegister => {
                    let s = if base_text.is_empty() { span } else { self.span_of(base_text) };
                    self.error(s, DiagnosticCode::BadOperand, format!("'{base_text}' is not a register"));
                    None
                }
            };
        }
        match parse_register(token) {
            RegParse::Reg(r) => {
                return Some(Operand {
                    value: OperandValue::Reg(r),
                    span,
                })
            }
            RegParse::OutOfRange => {
                self.error(span, DiagnosticCode::RegisterOutOfRange, format!("no register named '{token}' (x0..x31)"));
                return None;
            }
            RegParse::NotARegister => {}
        }
        if let Some(v) = parse_int(token) {
            return Some(Operand {
                value: OperandValue::Int(v),
                span,
            });
        }
        if is_identifier(token) {
            return Some(Operand {
                value: OperandValue::Label(token.to_string()),
                span,
            });
        }
        self.error(span, DiagnosticCode::BadOperand, format!("cannot parse operand '{token}'"));
        None
    }

    fn parse_instruction(&mut self) -> Option<LoweredInstruction> {
        let code = code_part(self.text).trim();
        let mnemonic_text = first_word(code);
        let mnemonic_span = self.span_of(mnemonic_text);
        let rest = &code[mnemonic_text.len()..];
        let mnemonic = mnemonic_text.to_ascii_lowercase();

        if mnemonic_text.contains(':') {
            self.error(mnemonic_span, DiagnosticCode::LabelWithInstruction, "a label and an instruction cannot share a line");
            return None;
        }
        let known = isa::lookup(&mnemonic).is_some() || isa::is_pseudo(&mnemonic);
        if !known {
            self.error(mnemonic_span, DiagnosticCode::UnknownMnemonic, format!("unknown instruction '{mnemonic_text}'"));
            return None;
        }

        let mut operands = Vec::new();
        let mut ok = true;
        if !rest.trim().is_empty() {
            for raw in rest.split(',') {
                match self.parse_operand(raw) {
                    Some(op) => operands.push(op),
                    None => ok = false,
                }
            }
        }
        if !ok {
            return None;
        }
        let operands_span = match (operands.first(), operands.last()) {
            (Some(a), Some(b)) => Span::new(a.span.start, b.span.end),
            _ => mnemonic_span,
        };
        let parsed = ParsedInstruction {
            mnemonic,
            mnemonic_span,
            operands,
        };
        let (base, pseudo) = if isa::is_pseudo(&parsed.mnemonic) {
            match isa::expand_pseudo(&parsed) {
                Ok(mut expanded) => (expanded.remove(0), isa::pseudo_name(&parsed.mnemonic)),
                Err(err) => {
                    self.error(operands_span, DiagnosticCode::OperandArity, err.to_string());
                    return None;
                }
            }
        } else {
            (parsed, None)
        };
        self.lower(base, pseudo, operands_span)
    }

    fn lower(&mut self, parsed: ParsedInstruction, pseudo: Option<&'static str>, operands_span: Span) -> Option<LoweredInstruction> {
        let spec = isa::lookup(&parsed.mnemonic)?;
        let expected = match spec.operands {
            OperandSchema::RegRegReg | OperandSchema::RegRegImm | OperandSchema::RegRegShamt | OperandSchema::Branch => 3,
            OperandSchema::Load | OperandSchema::Store | OperandSchema::Upper | OperandSchema::Jump => 2,
            OperandSchema::JumpReg => {
                if parsed.operands.len() == 3 {
                    3
                } else {
                    2
                }
            }
            OperandSchema::Nullary => 0,
        };
        let name = pseudo.unwrap_or(spec.mnemonic);
        if parsed.operands.len() != expected {
            self.error(
                operands_span,
                DiagnosticCode::OperandArity,
                format!("{name} takes {expected} operand(s), found {}", parsed.operands.len()),
            );
            return None;
        }
        let mut insn = LoweredInstruction {
            spec,
            rd: Reg::ZERO,
            rs1: Reg::ZERO,
            rs2: Reg::ZERO,
            imm: ImmOperand::Value(spec.fixed_imm.unwrap_or(0)),
            imm_span: parsed.mnemonic_span,
            pseudo,
        };
        let ops = &parsed.operands;
        let reg = |this: &mut Self, i: usize| -> Option<Reg> {
            match ops[i].value {
                OperandValue::Reg(r) => Some(r),
                _ => {
                    this.error(ops[i].span, DiagnosticCode::BadOperand, format!("operand {} of {name} must be a register", i + 1));
                    None
                }
            }
        };
        let int = |this: &mut Self, i: usize| -> Option<i64> {
            match ops[i].value {
                OperandValue::Int(v) => Some(v),
                _ => {
                    this.error(ops[i].span, DiagnosticCode::BadOperand, format!("operand {} of {name} must be an integer", i + 1));
                    None
                }
            }
        };
        let mem = |this: &mut Self, i: usize| -> Option<(i64, Reg)> {
            match ops[i].value {
                OperandValue::Mem { offset, base } => Some((offset, base)),
                _ => {
                    this.error(ops[i].span, DiagnosticCode::BadOperand, format!("operand {} of {name} must be offset(register)", i + 1));
                    None
                }
            }
        };
        let target = |this: &mut Self, i: usize| -> Option<ImmOperand> {
            match &ops[i].value {
                OperandValue::Label(l) => Some(ImmOperand::Label(l.clone())),
                OperandValue::Int(v) if (i32::MIN as i64..=u32::MAX as i64).contains(v) => Some(ImmOperand::Address(*v as u32)),
                OperandValue::Int(_) => {
                    this.error(ops[i].span, DiagnosticCode::ImmediateOutOfRange, "target address does not fit in 32 bits");
                    None
                }
                _ => {
                    this.error(ops[i].span, DiagnosticCode::BadOperand, format!("operand {} of {name} must be a label or address", i + 1));
                    None
                }
            }
        };

        let mut imm_value: Option<(i64, Span)> = None;
        match spec.operands {
            OperandSchema::RegRegReg => {
                let (rd, rs1, rs2) = (reg(self, 0), reg(self, 1), reg(self, 2));
                insn.rd = rd?;
                insn.rs1 = rs1?;
                insn.rs2 = rs2?;
            }
            OperandSchema::RegRegImm | OperandSchema::RegRegShamt => {
                let (rd, rs1, imm) = (reg(self, 0), reg(self, 1), int(self, 2));
                insn.rd = rd?;
                insn.rs1 = rs1?;
                imm_value = Some((imm?, ops[2].span));
            }
            OperandSchema::Load | OperandSchema::JumpReg if ops.len() == 2 => {
                let (rd, m) = (reg(self, 0), mem(self, 1));
                insn.rd = rd?;
                let (offset, base) = m?;
                insn.rs1 = base;
                imm_value = Some((offset, ops[1].span));
            }
            OperandSchema::JumpReg => {
                let (rd, rs1, imm) = (reg(self, 0), reg(self, 1), int(self, 2));
                insn.rd = rd?;
                insn.rs1 = rs1?;
                imm_value = Some((imm?, ops[2].span));
            }
            OperandSchema::Load => unreachable!("arity checked above"),
            OperandSchema::Store => {
                let (rs2, m) = (reg(self, 0), mem(self, 1));
                insn.rs2 = rs2?;
                let (offset, base) = m?;
                insn.rs1 = base;
                imm_value = Some((offset, ops[1].span));
            }
            OperandSchema::Branch => {
                let (rs1, rs2, t) = (reg(self, 0), reg(self, 1), target(self, 2));
                insn.rs1 = rs1?;
                insn.rs2 = rs2?;
                insn.imm = t?;
                insn.imm_span = ops[2].span;
            }
            OperandSchema::Upper => {
                let (rd, imm) = (reg(self, 0), int(self, 1));
                insn.rd = rd?;
                imm_value = Some((imm?, ops[1].span));
            }
            OperandSchema::Jump => {
                let (rd, t) = (reg(self, 0), target(self, 1));
                insn.rd = rd?;
                insn.imm = t?;
                insn.imm_span = ops[1].span;
            }
            OperandSchema::Nullary => {}
        }
        if let Some((value, span)) = imm_value {
            if let Err(err) = check_immediate(spec, value) {
                let message = match pseudo {
                    Some(p) => format!("{p}: {err}"),
                    None => err.to_string(),
                };
                self.error(span, DiagnosticCode::ImmediateOutOfRange, message);
                return None;
            }
            insn.imm = ImmOperand::Value(value as i32);
            insn.imm_span = span;
        }
        Some(insn)
    }
}

/// Parses one line (no newline characters). Never fails: problems are
/// reported as diagnostics on the returned line.
pub fn parse_line(text: &str, line_number: usize) -> ParsedLine {
    LineParser {
        text,
        line_number,
        diagnostics: Vec::new(),
    }
    .parse()
}
