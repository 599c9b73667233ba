//! Renders machine words back to assembly text.
//!
//! Output uses base mnemonics and x-register names, and prints branch and
//! jump targets as absolute addresses, so pseudoinstructions and relative
//! offsets show up as the machine sees them. Every line assembles back to
//! the same word at the same address.

use serde::Serialize;
use thiserror::Error;

use crate::isa::{decode, Instruction, OperandSchema};
use crate::program::MachineImage;

pub fn disassemble_word(word: u32, address: u32) -> String {
    match decode(word) {
        Some(insn) => render(&insn, address),
        None => format!(".word 0x{word:08x}"),
    }
}

fn render(insn: &Instruction, address: u32) -> String {
    let m = insn.mnemonic();
    let (rd, rs1, rs2, imm) = (insn.rd, insn.rs1, insn.rs2, insn.imm);
    let target = || format!("0x{:x}", address.wrapping_add(imm as u32));
    match insn.spec.operands {
        OperandSchema::RegRegReg => format!("{m} {rd}, {rs1}, {rs2}"),
        OperandSchema::RegRegImm | OperandSchema::RegRegShamt => format!("{m} {rd}, {rs1}, {imm}"),
        OperandSchema::Load | OperandSchema::JumpReg => format!("{m} {rd}, {imm}({rs1})"),
        OperandSchema::Store => format!("{m} {rs2}, {imm}({rs1})"),
        OperandSchema::Branch => format!("{m} {rs1}, {rs2}, {}", target()),
        OperandSchema::Upper => format!("{m} {rd}, 0x{imm:x}"),
        OperandSchema::Jump => format!("{m} {rd}, {}", target()),
        OperandSchema::Nullary => m.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisassemblyRow {
    pub address: u32,
    pub word: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("disassembly must start on a word boundary, got 0x{0:08x}")]
pub struct MisalignedStart(pub u32);

/// `count` consecutive words from the text segment. Words past the end of
/// the image read as zero.
pub fn disassemble_range(image: &MachineImage, start: u32, count: usize) -> Result<Vec<DisassemblyRow>, MisalignedStart> {
    if start % 4 != 0 {
        return Err(MisalignedStart(start));
    }
    Ok((0..count as u32)
        .map(|i| {
            let address = start.wrapping_add(4 * i);
            let word = image.read_word(address);
            DisassemblyRow { address, word, text: disassemble_word(word, address) }
        })
        .collect())
}
