//! Structured breakdowns of an instruction word, a two's-complement integer
//! and an IEEE 754 double. All results are plain data for a UI to present.

use num_bigint::BigUint;
use serde::Serialize;

use crate::disasm::disassemble_word;
use crate::isa::{bitfields, decode, FieldSlice, Format, Undecodable};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstructionExplanation {
    pub word: u32,
    pub mnemonic: &'static str,
    pub format: &'static str,
    /// The word's fields, most significant first.
    pub fields: Vec<FieldSlice>,
    /// One note per entry of `fields`.
    pub notes: Vec<String>,
    /// The instruction as the disassembler prints it at address 0.
    pub operand_summary: String,
    pub immediate_decimal: Option<i32>,
}

pub fn explain_instruction(word: u32) -> Result<InstructionExplanation, Undecodable> {
    let insn = decode(word).ok_or(Undecodable(word))?;
    let fields = bitfields(word)?;
    let immediate = insn.immediate();
    let notes = fields
        .iter()
        .map(|f| {
            let width = (f.high_bit - f.low_bit + 1) as usize;
            let bits = format!("{:0width$b}", f.value);
            match f.name {
                "opcode" => format!("opcode = 0b{bits} ({})", insn.format().as_str()),
                "rd" | "rs1" | "rs2" => format!("{} = x{}", f.name, f.value),
                "funct3" | "funct7" => format!("{} = 0b{bits}", f.name),
                "shamt" => format!("shift amount = {}", f.value),
                "imm[11:0]" => format!("imm[11:0] = 0x{:03X} -> sign-extended {}", f.value, insn.imm),
                "imm[31:12]" => format!("imm[31:12] = 0x{:05X} -> value 0x{:08X}", f.value, f.value << 12),
                _ => format!("{} = 0b{bits}", f.name),
            }
        })
        .collect();
    Ok(InstructionExplanation {
        word,
        mnemonic: insn.mnemonic(),
        format: insn.format().as_str(),
        fields,
        notes,
        operand_summary: disassemble_word(word, 0),
        immediate_decimal: immediate.map(|imm| if insn.format() == Format::U { (imm as u32) << 12 } else { imm as u32 } as i32),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntExplanation {
    pub word: u32,
    /// Most significant bit first.
    pub bits: String,
    pub sign_bit: u8,
    /// For negative values: the bits after inverting, before adding one.
    pub inverted: Option<String>,
    /// Absolute value of the number.
    pub magnitude: u64,
    pub magnitude_rule: String,
    pub decimal_value: i64,
}

pub fn explain_signed_int(word: u32) -> IntExplanation {
    let value = word as i32 as i64;
    let sign_bit = (word >> 31) as u8;
    let magnitude = value.unsigned_abs();
    let (inverted, rule) = if sign_bit == 1 {
        (
            Some(format!("{:032b}", !word)),
            format!("sign bit is 1: invert all bits and add one to get the magnitude {magnitude}, so the value is -{magnitude}"),
        )
    } else {
        (None, format!("sign bit is 0: the remaining bits are the magnitude {magnitude}"))
    };
    IntExplanation { word, bits: format!("{word:032b}"), sign_bit, inverted, magnitude, magnitude_rule: rule, decimal_value: value }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleClass {
    Zero,
    Subnormal,
    Normal,
    Infinite,
    Nan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DoubleExplanation {
    pub bits: u64,
    pub sign: u8,
    /// Bits 62..52 as stored.
    pub exponent_bits: u16,
    pub biased_exponent: i32,
    /// The power of two actually applied: `biased - 1023`, or -1022 for
    /// subnormals and zero. `None` for infinities and NaNs.
    pub unbiased_exponent: Option<i32>,
    /// Bits 51..0 as stored.
    pub mantissa_bits: u64,
    /// Exact decimal value of the significand including its leading bit.
    pub significand: Option<String>,
    /// Exact decimal value of the number, every digit included.
    pub decimal_value: String,
    pub class: DoubleClass,
}

const MANTISSA_BITS: u32 = 52;
const MANTISSA_MASK: u64 = (1 << MANTISSA_BITS) - 1;
const BIAS: i32 = 1023;

pub fn explain_double(bits: u64) -> DoubleExplanation {
    let sign = (bits >> 63) as u8;
    let exponent_bits = ((bits >> MANTISSA_BITS) & 0x7FF) as u16;
    let mantissa_bits = bits & MANTISSA_MASK;
    let class = match (exponent_bits, mantissa_bits) {
        (0, 0) => DoubleClass::Zero,
        (0, _) => DoubleClass::Subnormal,
        (0x7FF, 0) => DoubleClass::Infinite,
        (0x7FF, _) => DoubleClass::Nan,
        _ => DoubleClass::Normal,
    };
    let minus = if sign == 1 { "-" } else { "" };
    let (unbiased, significand, decimal) = match class {
        DoubleClass::Infinite => (None, None, format!("{minus}inf")),
        DoubleClass::Nan => (None, None, "NaN".to_string()),
        _ => {
            let (exponent, integer) = if class == DoubleClass::Normal {
                (exponent_bits as i32 - BIAS, mantissa_bits | 1 << MANTISSA_BITS)
            } else {
                (1 - BIAS, mantissa_bits)
            };
            let value = exact_decimal(integer, exponent - MANTISSA_BITS as i32);
            (Some(exponent), Some(exact_decimal(integer, -(MANTISSA_BITS as i32))), format!("{minus}{value}"))
        }
    };
    DoubleExplanation {
        bits,
        sign,
        exponent_bits,
        biased_exponent: exponent_bits as i32,
        unbiased_exponent: unbiased,
        mantissa_bits,
        significand,
        decimal_value: decimal,
        class,
    }
}

impl DoubleExplanation {
    /// Rebuilds the number from the explained fields alone.
    pub fn reconstruct(&self) -> f64 {
        let magnitude = match self.class {
            DoubleClass::Infinite => f64::INFINITY,
            DoubleClass::Nan => f64::NAN,
            _ => {
                let hidden = if self.class == DoubleClass::Normal { 1u64 << MANTISSA_BITS } else { 0 };
                let power = self.unbiased_exponent.unwrap() - MANTISSA_BITS as i32;
                // split the scaling so neither factor leaves the f64 range
                let half = power / 2;
                (hidden | self.mantissa_bits) as f64 * 2f64.powi(half) * 2f64.powi(power - half)
            }
        };
        if self.sign == 1 {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// Renders `integer * 2^power` exactly in decimal, with at least one digit
/// after the point.
fn exact_decimal(integer: u64, power: i32) -> String {
    let integer = BigUint::from(integer);
    if power >= 0 {
        return format!("{}.0", integer << power as usize);
    }
    // integer / 2^k == integer * 5^k / 10^k
    let k = power.unsigned_abs() as usize;
    let digits = (integer * BigUint::from(5u32).pow(k as u32)).to_string();
    let digits = format!("{digits:0>width$}", width = k + 1);
    let (whole, fraction) = digits.split_at(digits.len() - k);
    let fraction = fraction.trim_end_matches('0');
    format!("{whole}.{}", if fraction.is_empty() { "0" } else { fraction })
}
