//! Single-instruction pseudoinstruction expansion.

use thiserror::Error;

use super::codec::Reg;
use crate::parser::{Operand, OperandValue, ParsedInstruction};

/// Supported pseudoinstructions, each with its operand count.
pub const PSEUDOS: &[(&str, usize, &str)] = &[
    ("mv", 2, "addi rd, rs, 0"),
    ("j", 1, "jal x0, target"),
    ("li", 2, "addi rd, x0, imm (12-bit signed imm only)"),
    ("nop", 0, "addi x0, x0, 0"),
    ("ret", 0, "jalr x0, 0(x1)"),
    ("beqz", 2, "beq rs, x0, target"),
    ("bnez", 2, "bne rs, x0, target"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PseudoError {
    #[error("'{0}' is not a pseudoinstruction")]
    NotAPseudo(String),
    #[error("{mnemonic} takes {expected} operand(s), found {found}")]
    OperandArity { mnemonic: &'static str, expected: usize, found: usize },
}

pub fn is_pseudo(mnemonic: &str) -> bool {
    pseudo_name(mnemonic).is_some()
}

pub fn pseudo_name(mnemonic: &str) -> Option<&'static str> {
    PSEUDOS.iter().find(|p| p.0 == mnemonic).map(|p| p.0)
}

/// Expands a pseudoinstruction into its base-instruction sequence (always a
/// single instruction here). Immediate ranges are checked when the result is
/// lowered, so `li x1, 5000` expands fine and fails afterwards.
pub fn expand_pseudo(parsed: &ParsedInstruction) -> Result<Vec<ParsedInstruction>, PseudoError> {
    let &(name, arity, _) = PSEUDOS
        .iter()
        .find(|p| p.0 == parsed.mnemonic)
        .ok_or_else(|| PseudoError::NotAPseudo(parsed.mnemonic.clone()))?;
    if parsed.operands.len() != arity {
        return Err(PseudoError::OperandArity {
            mnemonic: name,
            expected: arity,
            found: parsed.operands.len(),
        });
    }
    let span = parsed.mnemonic_span;
    let synth = |value: OperandValue| Operand { value, span };
    let zero = || synth(OperandValue::Reg(Reg::ZERO));
    let ops = &parsed.operands;
    let (mnemonic, operands) = match name {
        "mv" => ("addi", vec![ops[0].clone(), ops[1].clone(), synth(OperandValue::Int(0))]),
        "j" => ("jal", vec![zero(), ops[0].clone()]),
        "li" => ("addi", vec![ops[0].clone(), zero(), ops[1].clone()]),
        "nop" => ("addi", vec![zero(), zero(), synth(OperandValue::Int(0))]),
        "ret" => ("jalr", vec![zero(), synth(OperandValue::Mem { offset: 0, base: Reg::RA })]),
        "beqz" => ("beq", vec![ops[0].clone(), zero(), ops[1].clone()]),
        "bnez" => ("bne", vec![ops[0].clone(), zero(), ops[1].clone()]),
        _ => unreachable!("PSEUDOS table and match are in sync"),
    };
    Ok(vec![ParsedInstruction {
        mnemonic: mnemonic.to_string(),
        mnemonic_span: span,
        operands,
    }])
}
