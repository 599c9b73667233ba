//! Fetch, decode and execute for RV32IM plus the ecall services.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::Serialize;

use crate::isa::{decode, Reg};
use crate::program::{MachineImage, DATA_BASE, STACK_TOP, TEXT_BASE};

pub const PAGE_SIZE: u32 = 4096;
pub const DATA_LIMIT: u32 = 0x2000_0000;
pub const STACK_FLOOR: u32 = 0x7000_0000;
pub const STACK_LIMIT: u32 = 0x7FFF_FFFF;
/// Longest string the print-string service will read before giving up.
pub const STRING_LIMIT: u32 = 1 << 16;

pub const SERVICE_PRINT_INT: u32 = 1;
pub const SERVICE_PRINT_STRING: u32 = 4;
pub const SERVICE_READ_INT: u32 = 5;
pub const SERVICE_EXIT: u32 = 10;

/// Whether `address` lies in the text, data or stack region.
pub fn is_mapped(address: u32) -> bool {
    address < DATA_LIMIT || (STACK_FLOOR..=STACK_LIMIT).contains(&address)
}

/// Sparse byte-addressable memory. Pages appear on first write; untouched
/// mapped bytes read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    pages: BTreeMap<u32, Box<[u8]>>,
}

impl Memory {
    pub fn read_byte(&self, address: u32) -> Result<u8, Fault> {
        if !is_mapped(address) {
            return Err(Fault::MemoryOutOfRange { address });
        }
        let page = self.pages.get(&(address / PAGE_SIZE));
        Ok(page.map_or(0, |p| p[(address % PAGE_SIZE) as usize]))
    }

    pub fn write_byte(&mut self, address: u32, value: u8) -> Result<(), Fault> {
        if !is_mapped(address) {
            return Err(Fault::MemoryOutOfRange { address });
        }
        let page = self
            .pages
            .entry(address / PAGE_SIZE)
            .or_insert_with(|| vec![0; PAGE_SIZE as usize].into_boxed_slice());
        page[(address % PAGE_SIZE) as usize] = value;
        Ok(())
    }

    /// Little-endian read of `size` bytes (1, 2 or 4) at an aligned address.
    pub fn read(&self, address: u32, size: u32) -> Result<u32, Fault> {
        if address % size != 0 {
            return Err(Fault::MisalignedAccess { address, size });
        }
        let mut value = 0u32;
        for i in (0..size).rev() {
            value = value << 8 | self.read_byte(address.wrapping_add(i))? as u32;
        }
        Ok(value)
    }

    pub fn write(&mut self, address: u32, size: u32, value: u32) -> Result<(), Fault> {
        if address % size != 0 {
            return Err(Fault::MisalignedAccess { address, size });
        }
        // check the whole range first so a fault leaves memory untouched
        for i in 0..size {
            if !is_mapped(address.wrapping_add(i)) {
                return Err(Fault::MemoryOutOfRange { address: address.wrapping_add(i) });
            }
        }
        for i in 0..size {
            self.write_byte(address + i, (value >> (8 * i)) as u8)?;
        }
        Ok(())
    }

    pub fn pages_allocated(&self) -> usize {
        self.pages.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum Fault {
    #[error("illegal instruction 0x{word:08x} at 0x{pc:08x}")]
    IllegalInstruction { pc: u32, word: u32 },
    #[error("misaligned fetch from 0x{pc:08x}")]
    MisalignedFetch { pc: u32 },
    #[error("misaligned {size}-byte access at 0x{address:08x}")]
    MisalignedAccess { address: u32, size: u32 },
    #[error("address 0x{address:08x} is outside text, data and stack")]
    MemoryOutOfRange { address: u32 },
    #[error("unknown ecall service {code}")]
    UnknownService { code: u32 },
    #[error("breakpoint at 0x{pc:08x}")]
    Breakpoint { pc: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Halted,
    StepLimit,
    Fault { fault: Fault },
    /// A read-integer ecall found no input. The ecall has not executed, so
    /// stepping again after input arrives resumes the program.
    InputRequired,
    /// The caller's interrupt flag was raised between two instructions.
    Interrupted,
}

/// What the last executed instruction wrote.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChangeSet {
    pub registers_written: BTreeSet<usize>,
    pub memory_bytes_written: BTreeSet<u32>,
    pub pc_before: u32,
    pub pc_after: u32,
}

/// Console hooks for the ecall services.
pub trait Io {
    /// `None` when no input is available yet; the simulator then stops with
    /// [`StopReason::InputRequired`] instead of blocking.
    fn read_integer(&mut self) -> Option<i32>;
    fn write_text(&mut self, text: &str);
}

/// Queued input and captured output, for tests and batch runs.
#[derive(Debug, Clone, Default)]
pub struct ScriptedIo {
    pub input: VecDeque<i32>,
    pub output: String,
}

impl ScriptedIo {
    pub fn new(input: impl IntoIterator<Item = i32>) -> Self {
        ScriptedIo { input: input.into_iter().collect(), output: String::new() }
    }
}

impl Io for ScriptedIo {
    fn read_integer(&mut self) -> Option<i32> {
        self.input.pop_front()
    }

    fn write_text(&mut self, text: &str) {
        self.output.push_str(text);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub regs: [u32; 32],
    pub pc: u32,
    pub memory: Memory,
    pub halted: bool,
    pub fault: Option<Fault>,
    pub steps_executed: u64,
}

impl MachineState {
    pub fn reset(image: &MachineImage) -> MachineState {
        let mut memory = Memory::default();
        for (i, b) in image.text.iter().enumerate() {
            memory.write_byte(TEXT_BASE + i as u32, *b).expect("text fits its region");
        }
        for (i, b) in image.data.iter().enumerate() {
            memory.write_byte(DATA_BASE + i as u32, *b).expect("data fits its region");
        }
        let mut regs = [0; 32];
        regs[Reg::SP.index()] = STACK_TOP;
        MachineState { regs, pc: TEXT_BASE, memory, halted: false, fault: None, steps_executed: 0 }
    }

    pub fn reg(&self, r: usize) -> u32 {
        self.regs[r]
    }

    /// Executes one instruction. Faults halt the machine and leave every
    /// register and memory byte as it was before the instruction.
    pub fn step(&mut self, io: &mut dyn Io) -> Result<ChangeSet, StopReason> {
        if self.halted {
            return Err(match self.fault {
                Some(fault) => StopReason::Fault { fault },
                None => StopReason::Halted,
            });
        }
        let mut changes = ChangeSet { pc_before: self.pc, pc_after: self.pc, ..ChangeSet::default() };
        match self.execute(io, &mut changes) {
            Ok(next) => {
                self.pc = next;
                changes.pc_after = next;
                self.steps_executed += 1;
                Ok(changes)
            }
            Err(StopReason::InputRequired) => Err(StopReason::InputRequired),
            Err(StopReason::Fault { fault }) => {
                self.halted = true;
                self.fault = Some(fault);
                Err(StopReason::Fault { fault })
            }
            Err(other) => Err(other),
        }
    }

    /// Steps until the machine stops or `max_steps` instructions have run.
    pub fn run(&mut self, io: &mut dyn Io, max_steps: u64) -> StopReason {
        self.animate(io, max_steps, |_, _| {})
    }

    /// Like [`run`](Self::run), checking `interrupt` before every
    /// instruction so another thread can cut a long run short.
    pub fn run_interruptible(&mut self, io: &mut dyn Io, max_steps: u64, interrupt: &AtomicBool) -> StopReason {
        for _ in 0..max_steps {
            if interrupt.load(Ordering::Relaxed) {
                return StopReason::Interrupted;
            }
            match self.step(io) {
                Ok(_) if self.halted => return StopReason::Halted,
                Ok(_) => {}
                Err(reason) => return reason,
            }
        }
        if self.halted {
            StopReason::Halted
        } else {
            StopReason::StepLimit
        }
    }

    /// Like [`run`](Self::run), calling `observer` after every executed
    /// instruction. Pacing is the caller's business.
    pub fn animate(
        &mut self,
        io: &mut dyn Io,
        max_steps: u64,
        mut observer: impl FnMut(&MachineState, &ChangeSet),
    ) -> StopReason {
        for _ in 0..max_steps {
            match self.step(io) {
                Ok(changes) => {
                    observer(self, &changes);
                    if self.halted {
                        return StopReason::Halted;
                    }
                }
                Err(reason) => return reason,
            }
        }
        if self.halted {
            StopReason::Halted
        } else {
            StopReason::StepLimit
        }
    }

    fn write_reg(&mut self, rd: Option<Reg>, value: u32, changes: &mut ChangeSet) {
        if let Some(rd) = rd.filter(|r| r.index() != 0) {
            self.regs[rd.index()] = value;
            changes.registers_written.insert(rd.index());
        }
    }

    fn store(&mut self, address: u32, size: u32, value: u32, changes: &mut ChangeSet) -> Result<(), StopReason> {
        self.memory.write(address, size, value).map_err(fault)?;
        changes.memory_bytes_written.extend((0..size).map(|i| address + i));
        Ok(())
    }

    /// Runs the instruction at pc and returns the next pc. Nothing is
    /// written unless the instruction completes.
    fn execute(&mut self, io: &mut dyn Io, changes: &mut ChangeSet) -> Result<u32, StopReason> {
        let pc = self.pc;
        if pc % 4 != 0 {
            return Err(fault(Fault::MisalignedFetch { pc }));
        }
        let word = self.memory.read(pc, 4).map_err(fault)?;
        let insn = decode(word).ok_or(fault(Fault::IllegalInstruction { pc, word }))?;
        let x = |r: Option<Reg>| r.map_or(0, |r| self.regs[r.index()]);
        let a = x(insn.rs1());
        let b = x(insn.rs2());
        let imm = insn.imm;
        let uimm = imm as u32;
        let next = pc.wrapping_add(4);
        let jump = |target: u32| {
            if target % 4 != 0 {
                Err(fault(Fault::MisalignedFetch { pc: target }))
            } else {
                Ok(target)
            }
        };
        let branch = |taken: bool| if taken { jump(pc.wrapping_add(uimm)) } else { Ok(next) };

        let value = match insn.mnemonic() {
            "add" => a.wrapping_add(b),
            "sub" => a.wrapping_sub(b),
            "sll" => a << (b & 31),
            "slt" => ((a as i32) < (b as i32)) as u32,
            "sltu" => (a < b) as u32,
            "xor" => a ^ b,
            "srl" => a >> (b & 31),
            "sra" => ((a as i32) >> (b & 31)) as u32,
            "or" => a | b,
            "and" => a & b,
            "mul" => a.wrapping_mul(b),
            "mulh" => ((a as i32 as i64 * b as i32 as i64) >> 32) as u32,
            "mulhsu" => ((a as i32 as i64).wrapping_mul(b as i64) >> 32) as u32,
            "mulhu" => ((a as u64 * b as u64) >> 32) as u32,
            "div" => div(a as i32, b as i32) as u32,
            "divu" => a.checked_div(b).unwrap_or(u32::MAX),
            "rem" => rem(a as i32, b as i32) as u32,
            "remu" => a.checked_rem(b).unwrap_or(a),
            "addi" => a.wrapping_add(uimm),
            "slti" => ((a as i32) < imm) as u32,
            "sltiu" => (a < uimm) as u32,
            "xori" => a ^ uimm,
            "ori" => a | uimm,
            "andi" => a & uimm,
            "slli" => a << uimm,
            "srli" => a >> uimm,
            "srai" => ((a as i32) >> uimm) as u32,
            "lui" => uimm << 12,
            "auipc" => pc.wrapping_add(uimm << 12),
            "lb" => self.memory.read(a.wrapping_add(uimm), 1).map_err(fault)? as i8 as u32,
            "lh" => self.memory.read(a.wrapping_add(uimm), 2).map_err(fault)? as i16 as u32,
            "lw" => self.memory.read(a.wrapping_add(uimm), 4).map_err(fault)?,
            "lbu" => self.memory.read(a.wrapping_add(uimm), 1).map_err(fault)?,
            "lhu" => self.memory.read(a.wrapping_add(uimm), 2).map_err(fault)?,
            "sb" | "sh" | "sw" => {
                let size = match insn.mnemonic() {
                    "sb" => 1,
                    "sh" => 2,
                    _ => 4,
                };
                let mask = if size == 4 { u32::MAX } else { (1 << (8 * size)) - 1 };
                self.store(a.wrapping_add(uimm), size, b & mask, changes)?;
                return Ok(next);
            }
            "beq" => return branch(a == b),
            "bne" => return branch(a != b),
            "blt" => return branch((a as i32) < (b as i32)),
            "bge" => return branch((a as i32) >= (b as i32)),
            "bltu" => return branch(a < b),
            "bgeu" => return branch(a >= b),
            "jal" => {
                let target = jump(pc.wrapping_add(uimm))?;
                self.write_reg(insn.rd(), next, changes);
                return Ok(target);
            }
            "jalr" => {
                let target = jump(a.wrapping_add(uimm) & !1)?;
                self.write_reg(insn.rd(), next, changes);
                return Ok(target);
            }
            "ecall" => return self.ecall(io, changes).map(|()| next),
            "ebreak" => return Err(fault(Fault::Breakpoint { pc })),
            other => unreachable!("decoder produced unknown mnemonic {other}"),
        };
        self.write_reg(insn.rd(), value, changes);
        Ok(next)
    }

    fn ecall(&mut self, io: &mut dyn Io, changes: &mut ChangeSet) -> Result<(), StopReason> {
        let a0 = self.regs[Reg::A0.index()];
        match self.regs[Reg::A7.index()] {
            SERVICE_PRINT_INT => io.write_text(&(a0 as i32).to_string()),
            SERVICE_PRINT_STRING => {
                let mut bytes = Vec::new();
                for i in 0..STRING_LIMIT {
                    match self.memory.read_byte(a0.wrapping_add(i)).map_err(fault)? {
                        0 => break,
                        b => bytes.push(b),
                    }
                }
                io.write_text(&String::from_utf8_lossy(&bytes));
            }
            SERVICE_READ_INT => {
                let value = io.read_integer().ok_or(StopReason::InputRequired)?;
                self.write_reg(Some(Reg::A0), value as u32, changes);
            }
            SERVICE_EXIT => self.halted = true,
            code => return Err(fault(Fault::UnknownService { code })),
        }
        Ok(())
    }
}

fn fault(fault: Fault) -> StopReason {
    StopReason::Fault { fault }
}

/// Signed division with the RISC-V conventions for zero and overflow.
pub fn div(a: i32, b: i32) -> i32 {
    if b == 0 {
        -1
    } else {
        a.wrapping_div(b)
    }
}

pub fn rem(a: i32, b: i32) -> i32 {
    if b == 0 {
        a
    } else {
        a.wrapping_rem(b)
    }
}
