//! A live RV32IM assembler and simulator.
//!
//! The assembler keeps a line table, a symbol table and a machine image in
//! step with an editor buffer. Two modes produce identical results:
//! [`assemble_full`] rebuilds everything from the text, while
//! [`incremental::apply_edit`] updates only what a keystroke touched.

pub mod assembler;
pub mod bench;
pub mod disasm;
pub mod explain;
pub mod incremental;
pub mod isa;
pub mod parser;
pub mod program;
pub mod protocol;
pub mod session;
pub mod sim;

pub use assembler::{assemble_full, resolve_references};
pub use incremental::{apply_edit, classify_edit, read_trace, write_trace, Delta, Document, EditClass, EditEvent};
pub use program::{AssemblyState, LineTableEntry, MachineImage, SymbolEntry};
