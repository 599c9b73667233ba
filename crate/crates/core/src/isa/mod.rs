//! RV32IM instruction set: table, encoding, decoding, pseudoinstructions.

mod codec;
mod pseudo;
mod table;

pub use codec::{
    bitfields, check_immediate, decode, encode, immediate_range, split_immediate, EncodeError, FieldSlice, Instruction, Reg,
    Undecodable,
};
pub use pseudo::{expand_pseudo, is_pseudo, pseudo_name, PseudoError, PSEUDOS};
pub use table::{lookup, Format, InstructionSpec, OperandSchema, INSTRUCTIONS};
