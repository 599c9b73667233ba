//! The RV32IM instruction table.

use serde::Serialize;

/// The six base encoding formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Format {
    R,
    I,
    S,
    B,
    U,
    J,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::R => "R",
            Format::I => "I",
            Format::S => "S",
            Format::B => "B",
            Format::U => "U",
            Format::J => "J",
        }
    }
}

/// Operand shape expected in source text, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OperandSchema {
    /// `rd, rs1, rs2`
    RegRegReg,
    /// `rd, rs1, imm12`
    RegRegImm,
    /// `rd, rs1, shamt`
    RegRegShamt,
    /// `rd, imm(rs1)`
    Load,
    /// `rs2, imm(rs1)`
    Store,
    /// `rs1, rs2, target`
    Branch,
    /// `rd, imm20`
    Upper,
    /// `rd, target`
    Jump,
    /// `rd, imm(rs1)` or `rd, rs1, imm`
    JumpReg,
    /// no operands
    Nullary,
}

#[derive(Debug, PartialEq, Eq, Hash, Serialize)]
pub struct InstructionSpec {
    pub mnemonic: &'static str,
    pub format: Format,
    pub opcode: u8,
    pub funct3: Option<u8>,
    /// Present for R-type, and for the I-type shift-immediate forms where it
    /// occupies bits 31..25.
    pub funct7: Option<u8>,
    /// The whole 12-bit immediate, for system instructions distinguished by it.
    pub fixed_imm: Option<i32>,
    pub operands: OperandSchema,
}

impl InstructionSpec {
    pub fn is_shift_immediate(&self) -> bool {
        self.operands == OperandSchema::RegRegShamt
    }
}

pub const OP: u8 = 0b011_0011;
pub const OP_IMM: u8 = 0b001_0011;
pub const LOAD: u8 = 0b000_0011;
pub const STORE: u8 = 0b010_0011;
pub const BRANCH: u8 = 0b110_0011;
pub const JALR: u8 = 0b110_0111;
pub const JAL: u8 = 0b110_1111;
pub const LUI: u8 = 0b011_0111;
pub const AUIPC: u8 = 0b001_0111;
pub const SYSTEM: u8 = 0b111_0011;

const fn r(mnemonic: &'static str, funct3: u8, funct7: u8) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::R,
        opcode: OP,
        funct3: Some(funct3),
        funct7: Some(funct7),
        fixed_imm: None,
        operands: OperandSchema::RegRegReg,
    }
}

const fn i(mnemonic: &'static str, opcode: u8, funct3: u8, operands: OperandSchema) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::I,
        opcode,
        funct3: Some(funct3),
        funct7: None,
        fixed_imm: None,
        operands,
    }
}

const fn shift(mnemonic: &'static str, funct3: u8, funct7: u8) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::I,
        opcode: OP_IMM,
        funct3: Some(funct3),
        funct7: Some(funct7),
        fixed_imm: None,
        operands: OperandSchema::RegRegShamt,
    }
}

const fn system(mnemonic: &'static str, imm: i32) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::I,
        opcode: SYSTEM,
        funct3: Some(0),
        funct7: None,
        fixed_imm: Some(imm),
        operands: OperandSchema::Nullary,
    }
}

const fn s(mnemonic: &'static str, funct3: u8) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::S,
        opcode: STORE,
        funct3: Some(funct3),
        funct7: None,
        fixed_imm: None,
        operands: OperandSchema::Store,
    }
}

const fn b(mnemonic: &'static str, funct3: u8) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::B,
        opcode: BRANCH,
        funct3: Some(funct3),
        funct7: None,
        fixed_imm: None,
        operands: OperandSchema::Branch,
    }
}

const fn u(mnemonic: &'static str, opcode: u8) -> InstructionSpec {
    InstructionSpec {
        mnemonic,
        format: Format::U,
        opcode,
        funct3: None,
        funct7: None,
        fixed_imm: None,
        operands: OperandSchema::Upper,
    }
}

/// Every supported base instruction. Pseudoinstructions live in `pseudo`.
pub static INSTRUCTIONS: &[InstructionSpec] = &[
    // RV32I register-register
    r("add", 0b000, 0b000_0000),
    r("sub", 0b000, 0b010_0000),
    r("sll", 0b001, 0b000_0000),
    r("slt", 0b010, 0b000_0000),
    r("sltu", 0b011, 0b000_0000),
    r("xor", 0b100, 0b000_0000),
    r("srl", 0b101, 0b000_0000),
    r("sra", 0b101, 0b010_0000),
    r("or", 0b110, 0b000_0000),
    r("and", 0b111, 0b000_0000),
    // M extension
    r("mul", 0b000, 0b000_0001),
    r("mulh", 0b001, 0b000_0001),
    r("mulhsu", 0b010, 0b000_0001),
    r("mulhu", 0b011, 0b000_0001),
    r("div", 0b100, 0b000_0001),
    r("divu", 0b101, 0b000_0001),
    r("rem", 0b110, 0b000_0001),
    r("remu", 0b111, 0b000_0001),
    // register-immediate
    i("addi", OP_IMM, 0b000, OperandSchema::RegRegImm),
    i("slti", OP_IMM, 0b010, OperandSchema::RegRegImm),
    i("sltiu", OP_IMM, 0b011, OperandSchema::RegRegImm),
    i("xori", OP_IMM, 0b100, OperandSchema::RegRegImm),
    i("ori", OP_IMM, 0b110, OperandSchema::RegRegImm),
    i("andi", OP_IMM, 0b111, OperandSchema::RegRegImm),
    shift("slli", 0b001, 0b000_0000),
    shift("srli", 0b101, 0b000_0000),
    shift("srai", 0b101, 0b010_0000),
    // loads
    i("lb", LOAD, 0b000, OperandSchema::Load),
    i("lh", LOAD, 0b001, OperandSchema::Load),
    i("lw", LOAD, 0b010, OperandSchema::Load),
    i("lbu", LOAD, 0b100, OperandSchema::Load),
    i("lhu", LOAD, 0b101, OperandSchema::Load),
    // stores
    s("sb", 0b000),
    s("sh", 0b001),
    s("sw", 0b010),
    // branches
    b("beq", 0b000),
    b("bne", 0b001),
    b("blt", 0b100),
    b("bge", 0b101),
    b("bltu", 0b110),
    b("bgeu", 0b111),
    // jumps
    InstructionSpec {
        mnemonic: "jal",
        format: Format::J,
        opcode: JAL,
        funct3: None,
        funct7: None,
        fixed_imm: None,
        operands: OperandSchema::Jump,
    },
    i("jalr", JALR, 0b000, OperandSchema::JumpReg),
    // upper immediates
    u("lui", LUI),
    u("auipc", AUIPC),
    // system
    system("ecall", 0),
    system("ebreak", 1),
];

pub fn lookup(mnemonic: &str) -> Option<&'static InstructionSpec> {
    INSTRUCTIONS.iter().find(|spec| spec.mnemonic == mnemonic)
}
