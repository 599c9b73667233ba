//! Bit-exact encoding and decoding of 32-bit instruction words.

use serde::Serialize;
use thiserror::Error;

use super::table::{Format, InstructionSpec, OperandSchema, INSTRUCTIONS};

/// An integer register index, 0..=31.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(1);
    pub const SP: Reg = Reg(2);
    pub const A0: Reg = Reg(10);
    pub const A7: Reg = Reg(17);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn from_bits(bits: u32) -> Reg {
        Reg((bits & 0x1f) as u8)
    }
}

impl std::fmt::Display for Reg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// A fully resolved instruction: every operand is a concrete value.
///
/// Registers and the immediate that the format does not use are zero. For
/// U-type the immediate is the 20-bit field value; for B/J-type it is the
/// pc-relative byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub spec: &'static InstructionSpec,
    pub rd: Reg,
    pub rs1: Reg,
    pub rs2: Reg,
    pub imm: i32,
}

impl Instruction {
    pub fn new(spec: &'static InstructionSpec) -> Self {
        Instruction {
            spec,
            rd: Reg::ZERO,
            rs1: Reg::ZERO,
            rs2: Reg::ZERO,
            imm: spec.fixed_imm.unwrap_or(0),
        }
    }

    pub fn mnemonic(&self) -> &'static str {
        self.spec.mnemonic
    }

    pub fn format(&self) -> Format {
        self.spec.format
    }

    pub fn rd(&self) -> Option<Reg> {
        match self.spec.format {
            Format::S | Format::B => None,
            _ if self.spec.fixed_imm.is_some() => None,
            _ => Some(self.rd),
        }
    }

    pub fn rs1(&self) -> Option<Reg> {
        match self.spec.format {
            Format::U | Format::J => None,
            _ if self.spec.fixed_imm.is_some() => None,
            _ => Some(self.rs1),
        }
    }

    pub fn rs2(&self) -> Option<Reg> {
        match self.spec.format {
            Format::R | Format::S | Format::B => Some(self.rs2),
            _ => None,
        }
    }

    pub fn immediate(&self) -> Option<i32> {
        match self.spec.format {
            Format::R => None,
            _ if self.spec.fixed_imm.is_some() => None,
            _ => Some(self.imm),
        }
    }

    pub fn encode(&self) -> Result<u32, EncodeError> {
        encode(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("immediate {value} out of range for {mnemonic} (allowed {min}..={max}{})", if *.even { ", even" } else { "" })]
    ImmediateOutOfRange {
        mnemonic: &'static str,
        value: i64,
        min: i64,
        max: i64,
        even: bool,
    },
}

/// Inclusive immediate range accepted by an instruction, and whether the
/// value must be even.
pub fn immediate_range(spec: &InstructionSpec) -> (i64, i64, bool) {
    match (spec.format, spec.operands) {
        (_, OperandSchema::RegRegShamt) => (0, 31, false),
        (Format::I, _) | (Format::S, _) => (-2048, 2047, false),
        (Format::B, _) => (-4096, 4094, true),
        (Format::U, _) => (0, 0xf_ffff, false),
        (Format::J, _) => (-1_048_576, 1_048_574, true),
        (Format::R, _) => (0, 0, false),
    }
}

pub fn check_immediate(spec: &'static InstructionSpec, value: i64) -> Result<(), EncodeError> {
    if spec.format == Format::R || spec.fixed_imm.is_some() {
        return Ok(());
    }
    let (min, max, even) = immediate_range(spec);
    if value < min || value > max || (even && value % 2 != 0) {
        return Err(EncodeError::ImmediateOutOfRange {
            mnemonic: spec.mnemonic,
            value,
            min,
            max,
            even,
        });
    }
    Ok(())
}

fn bits(value: u32, high: u32, low: u32) -> u32 {
    (value >> low) & ((1u32 << (high - low + 1)) - 1)
}

fn sign_extend(value: u32, width: u32) -> i32 {
    let shift = 32 - width;
    ((value << shift) as i32) >> shift
}

/// Encodes a resolved instruction into its little-endian-stored word value.
pub fn encode(insn: &Instruction) -> Result<u32, EncodeError> {
    let spec = insn.spec;
    check_immediate(spec, insn.imm as i64)?;
    let opcode = spec.opcode as u32;
    let rd = (insn.rd.0 as u32) << 7;
    let rs1 = (insn.rs1.0 as u32) << 15;
    let rs2 = (insn.rs2.0 as u32) << 20;
    let funct3 = (spec.funct3.unwrap_or(0) as u32) << 12;
    let funct7 = (spec.funct7.unwrap_or(0) as u32) << 25;
    let imm = insn.imm as u32;
    let word = match spec.format {
        Format::R => funct7 | rs2 | rs1 | funct3 | rd | opcode,
        Format::I if spec.fixed_imm.is_some() => (imm << 20) | funct3 | opcode,
        Format::I if spec.is_shift_immediate() => funct7 | ((imm & 0x1f) << 20) | rs1 | funct3 | rd | opcode,
        Format::I => ((imm & 0xfff) << 20) | rs1 | funct3 | rd | opcode,
        Format::S => (bits(imm, 11, 5) << 25) | rs2 | rs1 | funct3 | (bits(imm, 4, 0) << 7) | opcode,
        Format::B => {
            (bits(imm, 12, 12) << 31)
                | (bits(imm, 10, 5) << 25)
                | rs2
                | rs1
                | funct3
                | (bits(imm, 4, 1) << 8)
                | (bits(imm, 11, 11) << 7)
                | opcode
        }
        Format::U => ((imm & 0xf_ffff) << 12) | rd | opcode,
        Format::J => {
            (bits(imm, 20, 20) << 31)
                | (bits(imm, 10, 1) << 21)
                | (bits(imm, 11, 11) << 20)
                | (bits(imm, 19, 12) << 12)
                | rd
                | opcode
        }
    };
    Ok(word)
}

fn matches(spec: &InstructionSpec, word: u32) -> bool {
    if spec.opcode as u32 != bits(word, 6, 0) {
        return false;
    }
    if let Some(funct3) = spec.funct3 {
        if funct3 as u32 != bits(word, 14, 12) {
            return false;
        }
    }
    if let Some(funct7) = spec.funct7 {
        if funct7 as u32 != bits(word, 31, 25) {
            return false;
        }
    }
    if let Some(imm) = spec.fixed_imm {
        // rd and rs1 must be zero as well
        return word >> 20 == imm as u32 && bits(word, 19, 15) == 0 && bits(word, 11, 7) == 0;
    }
    true
}

/// Decodes a word, returning `None` for anything outside the supported set
/// (including the all-zero placeholder).
pub fn decode(word: u32) -> Option<Instruction> {
    let spec = INSTRUCTIONS.iter().find(|spec| matches(spec, word))?;
    let mut insn = Instruction::new(spec);
    insn.rd = Reg::from_bits(word >> 7);
    insn.rs1 = Reg::from_bits(word >> 15);
    insn.rs2 = Reg::from_bits(word >> 20);
    insn.imm = match spec.format {
        Format::R => 0,
        Format::I if spec.fixed_imm.is_some() => spec.fixed_imm.unwrap_or(0),
        Format::I if spec.is_shift_immediate() => bits(word, 24, 20) as i32,
        Format::I => sign_extend(bits(word, 31, 20), 12),
        Format::S => sign_extend((bits(word, 31, 25) << 5) | bits(word, 11, 7), 12),
        Format::B => sign_extend(
            (bits(word, 31, 31) << 12) | (bits(word, 7, 7) << 11) | (bits(word, 30, 25) << 5) | (bits(word, 11, 8) << 1),
            13,
        ),
        Format::U => bits(word, 31, 12) as i32,
        Format::J => sign_extend(
            (bits(word, 31, 31) << 20) | (bits(word, 19, 12) << 12) | (bits(word, 20, 20) << 11) | (bits(word, 30, 21) << 1),
            21,
        ),
    };
    // Clear the slots this format does not use so decode(encode(x)) == x.
    match spec.format {
        Format::S | Format::B => insn.rd = Reg::ZERO,
        Format::U | Format::J => {
            insn.rs1 = Reg::ZERO;
            insn.rs2 = Reg::ZERO;
        }
        Format::I => {
            insn.rs2 = Reg::ZERO;
            if spec.fixed_imm.is_some() {
                insn.rd = Reg::ZERO;
                insn.rs1 = Reg::ZERO;
            }
        }
        Format::R => {}
    }
    Some(insn)
}

/// One named bit range of an instruction word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldSlice {
    pub name: &'static str,
    pub high_bit: u8,
    pub low_bit: u8,
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("word {0:#010x} does not decode to a supported instruction")]
pub struct Undecodable(pub u32);

/// Splits a word into its format's named fields, most significant first.
pub fn bitfields(word: u32) -> Result<Vec<FieldSlice>, Undecodable> {
    let insn = decode(word).ok_or(Undecodable(word))?;
    let layout: &[(&'static str, u8, u8)] = match insn.spec.format {
        Format::R => &[("funct7", 31, 25), ("rs2", 24, 20), ("rs1", 19, 15), ("funct3", 14, 12), ("rd", 11, 7), ("opcode", 6, 0)],
        Format::I if insn.spec.is_shift_immediate() => &[
            ("funct7", 31, 25),
            ("shamt", 24, 20),
            ("rs1", 19, 15),
            ("funct3", 14, 12),
            ("rd", 11, 7),
            ("opcode", 6, 0),
        ],
        Format::I => &[("imm[11:0]", 31, 20), ("rs1", 19, 15), ("funct3", 14, 12), ("rd", 11, 7), ("opcode", 6, 0)],
        Format::S => &[
            ("imm[11:5]", 31, 25),
            ("rs2", 24, 20),
            ("rs1", 19, 15),
            ("funct3", 14, 12),
            ("imm[4:0]", 11, 7),
            ("opcode", 6, 0),
        ],
        Format::B => &[
            ("imm[12]", 31, 31),
            ("imm[10:5]", 30, 25),
            ("rs2", 24, 20),
            ("rs1", 19, 15),
            ("funct3", 14, 12),
            ("imm[4:1]", 11, 8),
            ("imm[11]", 7, 7),
            ("opcode", 6, 0),
        ],
        Format::U => &[("imm[31:12]", 31, 12), ("rd", 11, 7), ("opcode", 6, 0)],
        Format::J => &[
            ("imm[20]", 31, 31),
            ("imm[10:1]", 30, 21),
            ("imm[11]", 20, 20),
            ("imm[19:12]", 19, 12),
            ("rd", 11, 7),
            ("opcode", 6, 0),
        ],
    };
    Ok(layout
        .iter()
        .map(|&(name, high_bit, low_bit)| FieldSlice {
            name,
            high_bit,
            low_bit,
            value: bits(word, high_bit as u32, low_bit as u32),
        })
        .collect())
}

/// The immediate as physically stored in the word, split into its upper and
/// lower parts (`imm_hi`, `imm_lo`). Formats without a split store the whole
/// field in `imm_lo`.
pub fn split_immediate(word: u32, format: Format) -> (Option<u32>, Option<u32>) {
    match format {
        Format::R => (None, None),
        Format::I => (None, Some(bits(word, 31, 20))),
        Format::S | Format::B => (Some(bits(word, 31, 25)), Some(bits(word, 11, 7))),
        Format::U => (None, Some(bits(word, 31, 12))),
        Format::J => (Some(bits(word, 31, 20)), Some(bits(word, 19, 12))),
    }
}
