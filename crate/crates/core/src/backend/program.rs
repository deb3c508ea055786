//! Guarded register programs.

use std::fmt::Write as _;

use crate::ir::{Access, CmpOp, ExprId, Exponent, Offset, UnaryFn};

pub type Reg = u32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Const(u32),
    Param(u16),
    Load(u32),
    Coord(u8),
    InBounds(Offset),
    Add(Reg, Reg),
    Mul(Reg, Reg),
    Pow(Reg, u32),
    Unary(UnaryFn, Reg),
    Cmp(CmpOp, Reg, Reg),
    Not(Reg),
    And(Reg, Reg),
    Or(Reg, Reg),
    /// Eager select; condition assignment removes selects before scheduling.
    Select(Reg, Reg, Reg),
    /// `dst = guard holds ? src : 0`, the value of a product with boolean factors.
    Gate(u32, Reg),
    /// `dst = guard holds ? 1 : 0`, a product of booleans only.
    Truth(u32),
    /// `outs[k] = src`.
    Emit(u32, Reg),
}

impl Op {
    /// Registers read by the operation itself (guard literals excluded).
    pub fn operands(&self) -> Vec<Reg> {
        match *self {
            Op::Const(_) | Op::Param(_) | Op::Load(_) | Op::Coord(_) | Op::InBounds(_) | Op::Truth(_) => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::Cmp(_, a, b) | Op::And(a, b) | Op::Or(a, b) => vec![a, b],
            Op::Pow(a, _) | Op::Unary(_, a) | Op::Not(a) | Op::Gate(_, a) | Op::Emit(_, a) => vec![a],
            Op::Select(c, a, b) => vec![c, a, b],
        }
    }

    pub fn writes(&self) -> bool {
        !matches!(self, Op::Emit(..))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Instr {
    pub op: Op,
    pub dst: Reg,
    pub guard: u32,
}

/// Maximal run of instructions sharing one guard.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub guard: u32,
    pub start: u32,
    pub end: u32,
}

#[derive(Clone, Debug, Default)]
pub struct KernelProgram {
    pub instrs: Vec<Instr>,
    pub blocks: Vec<Block>,
    /// Literal registers of each guard (a conjunction); guard 0 is `true`.
    pub guards: Vec<Vec<Reg>>,
    /// Literal expressions of each guard, parallel to `guards`.
    pub guard_exprs: Vec<Vec<ExprId>>,
    pub consts: Vec<f64>,
    pub loads: Vec<Access>,
    pub exponents: Vec<Exponent>,
    pub n_regs: usize,
    pub n_outputs: usize,
}

impl KernelProgram {
    pub fn reads_direction(&self) -> bool {
        self.loads.iter().any(|a| matches!(a.source, crate::ir::Source::Direction(_)))
    }

    /// One instruction per line, `{` / `}` around guarded blocks.
    pub fn disassemble(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "; regs={} outputs={} guards={}", self.n_regs, self.n_outputs, self.guards.len());
        for b in &self.blocks {
            let guarded = b.guard != 0;
            if guarded {
                let lits: Vec<String> = self.guards[b.guard as usize].iter().map(|r| format!("r{r}")).collect();
                let _ = writeln!(s, "if g{} ({}) {{", b.guard, lits.join(" && "));
            }
            for ins in &self.instrs[b.start as usize..b.end as usize] {
                let pad = if guarded { "  " } else { "" };
                let _ = writeln!(s, "{pad}{}", self.format_instr(ins));
            }
            if guarded {
                let _ = writeln!(s, "}}");
            }
        }
        s
    }

    fn format_instr(&self, ins: &Instr) -> String {
        let d = ins.dst;
        match ins.op {
            Op::Const(k) => format!("r{d} = const {:?}", self.consts[k as usize]),
            Op::Param(p) => format!("r{d} = param #{p}"),
            Op::Load(k) => {
                let a = &self.loads[k as usize];
                let loc = match a.loc {
                    crate::ir::Loc::Offset(o) => format!("{o}"),
                    crate::ir::Loc::Slot { graph, slot } => format!("g{graph}.{slot}"),
                };
                format!("r{d} = load {:?}[{}]{loc}", a.source, a.channel)
            }
            Op::Coord(a) => format!("r{d} = index {a}"),
            Op::InBounds(o) => format!("r{d} = inbounds {o}"),
            Op::Add(a, b) => format!("r{d} = add r{a}, r{b}"),
            Op::Mul(a, b) => format!("r{d} = mul r{a}, r{b}"),
            Op::Pow(a, k) => format!("r{d} = pow r{a}, {}", self.exponents[k as usize]),
            Op::Unary(f, a) => format!("r{d} = {} r{a}", f.name()),
            Op::Cmp(op, a, b) => format!("r{d} = {} r{a}, r{b}", op.name()),
            Op::Not(a) => format!("r{d} = not r{a}"),
            Op::And(a, b) => format!("r{d} = and r{a}, r{b}"),
            Op::Or(a, b) => format!("r{d} = or r{a}, r{b}"),
            Op::Select(c, a, b) => format!("r{d} = select r{c}, r{a}, r{b}"),
            Op::Gate(g, a) => format!("r{d} = gate g{g}, r{a}"),
            Op::Truth(g) => format!("r{d} = truth g{g}"),
            Op::Emit(k, a) => format!("out{k} = r{a}"),
        }
    }

    /// Static guard-availability check: every register read (operand or guard
    /// literal) holds a value that is valid whenever the read happens.
    ///
    /// A register's validity condition is the guard of the instruction that last
    /// wrote it; an in-place update keeps the previous condition, since a skipped
    /// update leaves the old, still valid, value behind.
    pub fn check_guards(&self) -> Result<(), String> {
        let mut avail: Vec<Option<Vec<ExprId>>> = vec![None; self.n_regs];
        let subset = |a: &[ExprId], b: &[ExprId]| a.iter().all(|x| b.contains(x));
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 && self.blocks[i - 1].end != b.start {
                return Err(format!("block {i} is not contiguous"));
            }
        }
        for (pc, ins) in self.instrs.iter().enumerate() {
            let g = &self.guard_exprs[ins.guard as usize];
            let need = |r: Reg, under: &[ExprId], avail: &[Option<Vec<ExprId>>]| -> Result<(), String> {
                match &avail[r as usize] {
                    Some(v) if subset(v, under) => Ok(()),
                    Some(_) => Err(format!("instruction {pc} reads r{r} under a weaker guard than it was written")),
                    None => Err(format!("instruction {pc} reads r{r} before it is written")),
                }
            };
            // Guard tests short-circuit, so literal k is read only after 0..k held.
            let literals = |h: u32, base: &[ExprId], avail: &[Option<Vec<ExprId>>]| -> Result<Vec<ExprId>, String> {
                let mut under = base.to_vec();
                for (&r, &e) in self.guards[h as usize].iter().zip(&self.guard_exprs[h as usize]) {
                    need(r, &under, avail)?;
                    under.push(e);
                }
                Ok(under)
            };
            literals(ins.guard, &[], &avail)?;
            match ins.op {
                Op::Gate(h, a) => {
                    let under = literals(h, g, &avail)?;
                    need(a, &under, &avail)?;
                }
                Op::Truth(h) => {
                    literals(h, g, &avail)?;
                }
                op => {
                    for r in op.operands() {
                        need(r, g, &avail)?;
                    }
                }
            }
            if ins.op.writes() && !ins.op.operands().contains(&ins.dst) {
                avail[ins.dst as usize] = Some(g.clone());
            }
        }
        Ok(())
    }
}
