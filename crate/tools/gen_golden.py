#!/usr/bin/env python3
"""Regenerates crates/core/tests/data/golden.txt using clang's RISC-V assembler.

Each vector is assembled on its own at address 0 so that numeric branch and
jump operands mean the same thing to clang (offset) and to our assembler
(absolute target).
"""
import os
import struct
import subprocess
import sys
import tempfile

VECTORS = """
add x3, x1, x2
add x31, x0, x17
sub x5, x6, x7
sub x0, x31, x1
sll x1, x2, x3
sll x10, x11, x12
slt x4, x5, x6
slt x20, x21, x22
sltu x7, x8, x9
sltu x30, x29, x28
xor x1, x1, x1
xor x15, x16, x17
srl x2, x3, x4
srl x25, x26, x27
sra x6, x7, x8
sra x18, x19, x20
or x9, x10, x11
or x1, x0, x31
and x12, x13, x14
and x3, x3, x3
mul x1, x2, x3
mul x28, x29, x30
mulh x4, x5, x6
mulh x10, x20, x30
mulhsu x7, x8, x9
mulhsu x11, x12, x13
mulhu x10, x11, x12
mulhu x1, x31, x2
div x13, x14, x15
div x5, x0, x6
divu x16, x17, x18
divu x9, x8, x7
rem x19, x20, x21
rem x3, x4, x5
remu x22, x23, x24
remu x31, x30, x29
addi x1, x2, -121
addi x0, x0, 0
addi x31, x31, 2047
addi x5, x6, -2048
slti x1, x2, 5
slti x7, x8, -1
sltiu x3, x4, 100
sltiu x9, x10, 2047
xori x5, x6, -1
xori x11, x12, 255
ori x7, x8, 16
ori x13, x14, -2048
andi x9, x10, 15
andi x15, x16, 2047
slli x1, x2, 3
slli x17, x18, 31
srli x3, x4, 1
srli x19, x20, 31
srai x5, x6, 7
srai x21, x22, 31
lb x1, 0(x2)
lb x23, -1(x24)
lh x3, 2(x4)
lh x25, -2048(x26)
lw x5, 4(x6)
lw x27, 2047(x28)
lbu x7, 8(x8)
lbu x29, -100(x30)
lhu x9, 10(x10)
lhu x31, -6(x1)
sb x1, 0(x2)
sb x3, -1(x4)
sh x5, 2(x6)
sh x7, -2048(x8)
sw x9, 4(x10)
sw x11, 2047(x12)
beq x1, x2, 8
beq x3, x4, -4
bne x1, x0, -8
bne x5, x6, 4094
blt x7, x8, 16
blt x9, x10, -4096
bge x11, x12, 32
bge x13, x14, -32
bltu x15, x16, 64
bltu x17, x18, -64
bgeu x19, x20, 128
bgeu x21, x22, -128
jal x1, 2048
jal x0, -4
jal x5, 1048574
jal x6, -1048576
jalr x1, 0(x2)
jalr x0, -4(x5)
jalr x3, 2047(x4)
lui x1, 0x12345
lui x31, 0xfffff
lui x5, 0
auipc x2, 0x1
auipc x10, 0x80000
ecall
ebreak
mv x5, x6
mv x1, x31
nop
li x1, 42
li x2, -2048
li x3, 2047
ret
j 8
j -16
beqz x1, 12
beqz x5, -12
bnez x1, -4
bnez x7, 2000
"""


def assemble(line):
    with tempfile.TemporaryDirectory() as d:
        src = os.path.join(d, "t.s")
        obj = os.path.join(d, "t.o")
        with open(src, "w") as f:
            f.write(".option norvc\n.option norelax\n" + line + "\n")
        subprocess.run(
            ["clang", "--target=riscv32", "-march=rv32im", "-c", src, "-o", obj],
            check=True,
        )
        data = open(obj, "rb").read()
    shoff = struct.unpack_from("<I", data, 0x20)[0]
    shentsize, shnum, shstrndx = struct.unpack_from("<HHH", data, 0x2E)
    secs = [struct.unpack_from("<10I", data, shoff + i * shentsize) for i in range(shnum)]
    strtab = secs[shstrndx]
    for s in secs:
        name = data[strtab[4] + s[0]:].split(b"\0")[0]
        if name == b".text":
            text = data[s[4]:s[4] + s[5]]
            assert len(text) == 4, (line, text)
            return struct.unpack("<I", text)[0]
    raise RuntimeError("no .text in " + line)


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/data/golden.txt"
    with open(out, "w") as f:
        f.write("# word|source, assembled at address 0 by clang --target=riscv32 -march=rv32im\n")
        for line in VECTORS.strip().splitlines():
            f.write("0x%08x|%s\n" % (assemble(line), line))


if __name__ == "__main__":
    main()
