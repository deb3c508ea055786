//! Condition propagation, backward list scheduling and linear-scan register allocation.

use std::collections::HashMap;

use super::program::{Block, Instr, KernelProgram, Op, Reg};
use crate::error::{Error, Result};
use crate::ir::{BoolOp, ExprArena, ExprId, Node};
use crate::simplify::{guard_literals, ConditionedIr};

type Cond = Vec<ExprId>;

fn sort_cond(arena: &ExprArena, c: &mut Cond) {
    c.sort_by_key(|&x| (!matches!(arena.node(x), Node::InBounds(_)), x));
    c.dedup();
}

fn union(arena: &ExprArena, a: &[ExprId], b: &[ExprId]) -> Cond {
    let mut c: Cond = a.iter().chain(b).copied().collect();
    sort_cond(arena, &mut c);
    c
}

fn intersect(a: &[ExprId], b: &[ExprId]) -> Cond {
    a.iter().copied().filter(|x| b.contains(x)).collect()
}

/// Boolean and non-boolean factors of a product, in stored order.
fn split_product(arena: &ExprArena, children: &[ExprId]) -> (Vec<ExprId>, Vec<ExprId>) {
    children.iter().partition(|&&c| arena.is_boolean(c))
}

/// Conservative execution condition of every node: the intersection of the
/// conditions under which each of its uses runs.
fn propagate_conditions(arena: &ExprArena, cir: &ConditionedIr) -> HashMap<ExprId, Cond> {
    let mut cond: HashMap<ExprId, Cond> = HashMap::new();
    let use_at = |cond: &mut HashMap<ExprId, Cond>, n: ExprId, c: Cond| {
        cond.entry(n).and_modify(|old| *old = intersect(old, &c)).or_insert(c);
    };
    let mut roots = Vec::new();
    for o in &cir.outputs {
        for r in &o.reductions {
            let mut lits = guard_literals(arena, r.guard);
            sort_cond(arena, &mut lits);
            for (k, &l) in lits.iter().enumerate() {
                use_at(&mut cond, l, lits[..k].to_vec());
                roots.push(l);
            }
            use_at(&mut cond, r.value, lits.clone());
            roots.push(r.value);
        }
    }
    // A node's condition becomes the guard it runs under, and testing that guard
    // reads its literals in order; those reads are uses too. Conditions only
    // shrink, so repeating the pass reaches a fixpoint.
    let order: Vec<ExprId> = arena.reachable(&roots).into_iter().rev().collect();
    loop {
        let before = cond.clone();
        propagate_pass(arena, &order, &mut cond, &use_at);
        if cond == before {
            return cond;
        }
    }
}

fn propagate_pass(
    arena: &ExprArena,
    order: &[ExprId],
    cond: &mut HashMap<ExprId, Cond>,
    use_at: &dyn Fn(&mut HashMap<ExprId, Cond>, ExprId, Cond),
) {
    for &n in order {
        let c = cond[&n].clone();
        let mut lits = c.clone();
        sort_cond(arena, &mut lits);
        for (k, &l) in lits.iter().enumerate() {
            use_at(cond, l, lits[..k].to_vec());
        }
        match arena.node(n) {
            Node::Product(children) => {
                let (bools, _) = split_product(arena, children);
                if bools.is_empty() {
                    for &ch in children.iter() {
                        use_at(cond, ch, c.clone());
                    }
                    continue;
                }
                let bounds: Vec<ExprId> =
                    bools.iter().copied().filter(|&b| matches!(arena.node(b), Node::InBounds(_))).collect();
                let inner = union(arena, &c, &bools);
                let lit_cond = union(arena, &c, &bounds);
                // The chain of value factors is guarded by `inner`.
                let mut chain = inner.clone();
                sort_cond(arena, &mut chain);
                for (k, &l) in chain.iter().enumerate() {
                    use_at(cond, l, chain[..k].to_vec());
                }
                for &ch in children.iter() {
                    if matches!(arena.node(ch), Node::InBounds(_)) {
                        use_at(cond, ch, c.clone());
                    } else if arena.is_boolean(ch) {
                        use_at(cond, ch, lit_cond.clone());
                    } else {
                        use_at(cond, ch, inner.clone());
                    }
                }
            }
            other => {
                for ch in other.children() {
                    use_at(cond, ch, c.clone());
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
enum UnitKind {
    Node(ExprId),
    /// Product of the non-boolean factors of a gated product.
    Chain(ExprId),
    AccInit,
    Acc { value: usize },
    Emit(usize),
}

#[derive(Clone, Debug)]
struct Unit {
    kind: UnitKind,
    guard: Cond,
    /// Variables read, guard literals included.
    reads: Vec<usize>,
    def: Option<usize>,
    /// Units that must run before this one.
    preds: Vec<usize>,
}

struct Builder<'a> {
    arena: &'a ExprArena,
    cond: HashMap<ExprId, Cond>,
    units: Vec<Unit>,
    node_var: HashMap<ExprId, usize>,
    chain_var: HashMap<ExprId, usize>,
    var_unit: Vec<usize>,
    n_vars: usize,
}

impl<'a> Builder<'a> {
    fn new_var(&mut self, unit: usize) -> usize {
        self.var_unit.push(unit);
        self.n_vars += 1;
        self.n_vars - 1
    }

    fn push(&mut self, kind: UnitKind, guard: Cond, reads: Vec<usize>, defines: bool) -> (usize, Option<usize>) {
        let u = self.units.len();
        let def = defines.then(|| self.new_var(u));
        let mut preds: Vec<usize> = reads.iter().map(|&v| self.var_unit[v]).collect();
        preds.sort_unstable();
        preds.dedup();
        self.units.push(Unit { kind, guard, reads, def, preds });
        (u, def)
    }

    fn lit_vars(&self, lits: &[ExprId]) -> Vec<usize> {
        lits.iter().map(|l| self.node_var[l]).collect()
    }

    fn add_node(&mut self, n: ExprId) {
        let guard = self.cond[&n].clone();
        let mut reads = self.lit_vars(&guard);
        let children: Vec<ExprId> = match self.arena.node(n) {
            Node::Product(c) => {
                let (bools, vals) = split_product(self.arena, c);
                if !bools.is_empty() && vals.len() > 1 {
                    let inner = union(self.arena, &guard, &bools);
                    let mut chain_reads = self.lit_vars(&inner);
                    chain_reads.extend(vals.iter().map(|v| self.node_var[v]));
                    let (_, var) = self.push(UnitKind::Chain(n), inner, chain_reads, true);
                    self.chain_var.insert(n, var.unwrap());
                    reads.extend(bools.iter().map(|b| self.node_var[b]));
                    reads.push(var.unwrap());
                    let (_, v) = self.push(UnitKind::Node(n), guard, reads, true);
                    self.node_var.insert(n, v.unwrap());
                    return;
                }
                c.to_vec()
            }
            other => other.children(),
        };
        reads.extend(children.iter().map(|c| self.node_var[c]));
        let (_, v) = self.push(UnitKind::Node(n), guard, reads, true);
        self.node_var.insert(n, v.unwrap());
    }
}

/// Nodes ordered so that children and the literals of each node's condition come first.
fn dependency_order(arena: &ExprArena, cond: &HashMap<ExprId, Cond>, roots: &[ExprId]) -> Result<Vec<ExprId>> {
    // 0 = unvisited, 1 = on the stack, 2 = done.
    let mut state: HashMap<ExprId, u8> = HashMap::new();
    let mut out = Vec::new();
    for &r in roots {
        let mut stack = vec![(r, false)];
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                state.insert(n, 2);
                out.push(n);
                continue;
            }
            match state.get(&n) {
                Some(2) => continue,
                Some(1) => return Err(Error::CyclicIr),
                _ => {}
            }
            state.insert(n, 1);
            stack.push((n, true));
            let mut deps = arena.node(n).children();
            deps.extend(cond[&n].iter().copied());
            for d in deps.into_iter().rev() {
                match state.get(&d) {
                    Some(2) => {}
                    Some(1) => return Err(Error::CyclicIr),
                    _ => stack.push((d, false)),
                }
            }
        }
    }
    Ok(out)
}

/// Compiles a conditioned IR into a guarded register program. Output `k` of the
/// program is the accumulated value of `cir.outputs[k]`.
pub fn schedule(arena: &ExprArena, cir: &ConditionedIr) -> Result<KernelProgram> {
    let cond = propagate_conditions(arena, cir);
    let mut roots = Vec::new();
    for o in &cir.outputs {
        for r in &o.reductions {
            roots.extend(guard_literals(arena, r.guard));
            roots.push(r.value);
        }
    }
    let mut b = Builder {
        arena,
        cond,
        units: Vec::new(),
        node_var: HashMap::new(),
        chain_var: HashMap::new(),
        var_unit: Vec::new(),
        n_vars: 0,
    };
    for n in dependency_order(arena, &b.cond, &roots)? {
        b.add_node(n);
    }
    for (k, o) in cir.outputs.iter().enumerate() {
        let (mut last, acc) = b.push(UnitKind::AccInit, Vec::new(), Vec::new(), true);
        let acc = acc.unwrap();
        for r in &o.reductions {
            let mut lits = guard_literals(arena, r.guard);
            sort_cond(arena, &mut lits);
            let value = b.node_var[&r.value];
            let mut reads = b.lit_vars(&lits);
            reads.push(value);
            reads.push(acc);
            let (u, _) = b.push(UnitKind::Acc { value }, lits, reads, false);
            b.units[u].preds.push(last);
            last = u;
        }
        let (u, _) = b.push(UnitKind::Emit(k), Vec::new(), vec![acc], false);
        b.units[u].preds = vec![last];
    }
    let order = list_schedule(&b.units, b.n_vars)?;
    emit(arena, &b, &order, cir.outputs.len())
}

/// Backward greedy list scheduling. Among ready units (all consumers placed),
/// prefer the guard of the previously placed unit, then the smallest growth of the
/// live set, then the unit that has been ready longest, then the lowest index.
fn list_schedule(units: &[Unit], n_vars: usize) -> Result<Vec<usize>> {
    let n = units.len();
    let mut succ_left = vec![0usize; n];
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, unit) in units.iter().enumerate() {
        for &p in &unit.preds {
            succ_left[p] += 1;
            succs[u].push(p);
        }
    }
    let mut ready_since: Vec<Option<usize>> = vec![None; n];
    let mut ready: Vec<usize> = Vec::new();
    for u in 0..n {
        if succ_left[u] == 0 {
            ready_since[u] = Some(0);
            ready.push(u);
        }
    }
    let mut live = vec![false; n_vars];
    let mut placed = Vec::with_capacity(n);
    let mut last_guard: Option<&Cond> = None;
    let mut step = 0;
    while !ready.is_empty() {
        step += 1;
        let mut best: Option<(usize, (bool, i64, usize, usize))> = None;
        for (i, &u) in ready.iter().enumerate() {
            let unit = &units[u];
            let mut fresh: Vec<usize> = unit.reads.iter().copied().filter(|&v| !live[v]).collect();
            fresh.sort_unstable();
            fresh.dedup();
            let mut delta = fresh.len() as i64;
            let kills = match unit.kind {
                UnitKind::Acc { .. } | UnitKind::Emit(_) => false,
                _ => unit.def.is_some_and(|d| live[d]),
            };
            if kills {
                delta -= 1;
            }
            let same = last_guard.is_some_and(|g| *g == unit.guard);
            let key = (!same, delta, ready_since[u].unwrap(), u);
            if best.as_ref().is_none_or(|(_, k)| key < *k) {
                best = Some((i, key));
            }
        }
        let (i, _) = best.unwrap();
        let u = ready.swap_remove(i);
        let unit = &units[u];
        if !matches!(unit.kind, UnitKind::Acc { .. } | UnitKind::Emit(_)) {
            if let Some(d) = unit.def {
                live[d] = false;
            }
        }
        for &v in &unit.reads {
            live[v] = true;
        }
        last_guard = Some(&unit.guard);
        placed.push(u);
        for &p in &succs[u] {
            succ_left[p] -= 1;
            if succ_left[p] == 0 {
                ready_since[p] = Some(step);
                ready.push(p);
            }
        }
    }
    if placed.len() != n {
        return Err(Error::CyclicIr);
    }
    placed.reverse();
    Ok(placed)
}

struct Emitter {
    instrs: Vec<Instr>,
    guard_ids: HashMap<Cond, u32>,
    guard_list: Vec<Cond>,
    consts: Vec<f64>,
    const_ids: HashMap<u64, u32>,
    exponents: Vec<crate::ir::Exponent>,
    loads: Vec<crate::ir::Access>,
    load_ids: HashMap<crate::ir::Access, u32>,
}

impl Emitter {
    fn guard(&mut self, c: &Cond) -> u32 {
        if let Some(&g) = self.guard_ids.get(c) {
            return g;
        }
        let g = self.guard_list.len() as u32;
        self.guard_list.push(c.clone());
        self.guard_ids.insert(c.clone(), g);
        g
    }

    fn push(&mut self, op: Op, dst: usize, guard: u32) {
        self.instrs.push(Instr { op, dst: dst as Reg, guard });
    }

    fn chain(&mut self, dst: usize, guard: u32, vals: &[usize], f: fn(Reg, Reg) -> Op) {
        match vals {
            [] => unreachable!("empty chain"),
            [a] => unreachable!("chain of one value (r{a})"),
            [a, b, rest @ ..] => {
                self.push(f(*a as Reg, *b as Reg), dst, guard);
                for &c in rest {
                    self.push(f(dst as Reg, c as Reg), dst, guard);
                }
            }
        }
    }
}

/// Emits instructions (with variable numbers standing in for registers), then
/// allocates registers by linear scan.
fn emit(arena: &ExprArena, b: &Builder<'_>, order: &[usize], n_outputs: usize) -> Result<KernelProgram> {
    let mut e = Emitter {
        instrs: Vec::new(),
        guard_ids: HashMap::new(),
        guard_list: Vec::new(),
        consts: Vec::new(),
        const_ids: HashMap::new(),
        exponents: Vec::new(),
        loads: Vec::new(),
        load_ids: HashMap::new(),
    };
    e.guard(&Vec::new());
    for &u in order {
        let unit = &b.units[u];
        let g = e.guard(&unit.guard);
        let var = |x: &ExprId| b.node_var[x];
        match unit.kind {
            UnitKind::Node(n) => {
                let d = unit.def.unwrap();
                match arena.node(n) {
                    Node::Const(bits) => {
                        let next = e.consts.len() as u32;
                        let k = *e.const_ids.entry(*bits).or_insert(next);
                        if k == next {
                            e.consts.push(f64::from_bits(*bits));
                        }
                        e.push(Op::Const(k), d, g);
                    }
                    Node::Param(p) => e.push(Op::Param(*p), d, g),
                    Node::Access(a) => {
                        let next = e.loads.len() as u32;
                        let k = *e.load_ids.entry(*a).or_insert(next);
                        if k == next {
                            e.loads.push(*a);
                        }
                        e.push(Op::Load(k), d, g);
                    }
                    Node::IndexCoord(axis) => e.push(Op::Coord(*axis), d, g),
                    Node::InBounds(o) => e.push(Op::InBounds(*o), d, g),
                    Node::Sum(c) => {
                        let vals: Vec<usize> = c.iter().map(var).collect();
                        e.chain(d, g, &vals, Op::Add);
                    }
                    Node::Product(c) => {
                        let (bools, vals) = split_product(arena, c);
                        if bools.is_empty() {
                            let vals: Vec<usize> = vals.iter().map(var).collect();
                            e.chain(d, g, &vals, Op::Mul);
                        } else {
                            let mut lits = bools.clone();
                            sort_cond(arena, &mut lits);
                            let h = e.guard(&lits);
                            match vals.len() {
                                0 => e.push(Op::Truth(h), d, g),
                                1 => e.push(Op::Gate(h, var(&vals[0]) as Reg), d, g),
                                _ => e.push(Op::Gate(h, b.chain_var[&n] as Reg), d, g),
                            }
                        }
                    }
                    Node::Pow(base, ex) => {
                        e.exponents.push(*ex);
                        e.push(Op::Pow(var(base) as Reg, e.exponents.len() as u32 - 1), d, g);
                    }
                    Node::Unary(f, a) => e.push(Op::Unary(*f, var(a) as Reg), d, g),
                    Node::Compare(op, x, y) => e.push(Op::Cmp(*op, var(x) as Reg, var(y) as Reg), d, g),
                    Node::Bool(BoolOp::Not, a) => e.push(Op::Not(var(&a[0]) as Reg), d, g),
                    Node::Bool(BoolOp::And, c) => {
                        let vals: Vec<usize> = c.iter().map(var).collect();
                        e.chain(d, g, &vals, Op::And);
                    }
                    Node::Bool(BoolOp::Or, c) => {
                        let vals: Vec<usize> = c.iter().map(var).collect();
                        e.chain(d, g, &vals, Op::Or);
                    }
                    Node::Select(c, x, y) => e.push(Op::Select(var(c) as Reg, var(x) as Reg, var(y) as Reg), d, g),
                }
            }
            UnitKind::Chain(n) => {
                let Node::Product(c) = arena.node(n) else { unreachable!() };
                let (_, vals) = split_product(arena, c);
                let vals: Vec<usize> = vals.iter().map(var).collect();
                e.chain(unit.def.unwrap(), g, &vals, Op::Mul);
            }
            UnitKind::AccInit => {
                let zero = 0f64.to_bits();
                let next = e.consts.len() as u32;
                let k = *e.const_ids.entry(zero).or_insert(next);
                if k == next {
                    e.consts.push(0.0);
                }
                e.push(Op::Const(k), unit.def.unwrap(), g);
            }
            UnitKind::Acc { value, .. } => {
                let acc = *unit.reads.last().unwrap();
                e.push(Op::Add(acc as Reg, value as Reg), acc, g);
            }
            UnitKind::Emit(k) => e.push(Op::Emit(k as u32, unit.reads[0] as Reg), 0, g),
        }
    }

    // Guard literal variables.
    let guard_vars: Vec<Vec<usize>> = e.guard_list.iter().map(|c| c.iter().map(|l| b.node_var[l]).collect()).collect();

    // Live ranges over instruction positions.
    let n_vars = b.n_vars;
    let mut start = vec![usize::MAX; n_vars];
    let mut end = vec![0usize; n_vars];
    for (pc, ins) in e.instrs.iter().enumerate() {
        let mut reads: Vec<usize> = ins.op.operands().into_iter().map(|r| r as usize).collect();
        reads.extend(&guard_vars[ins.guard as usize]);
        if let Op::Gate(h, _) | Op::Truth(h) = ins.op {
            reads.extend(&guard_vars[h as usize]);
        }
        for v in reads {
            end[v] = end[v].max(pc);
        }
        if ins.op.writes() {
            let v = ins.dst as usize;
            start[v] = start[v].min(pc);
            end[v] = end[v].max(pc);
        }
    }
    let mut by_end: Vec<usize> = Vec::new();
    let mut reg_of = vec![Reg::MAX; n_vars];
    let mut free: std::collections::BTreeSet<Reg> = std::collections::BTreeSet::new();
    let mut n_regs: Reg = 0;
    for (pc, ins) in e.instrs.iter().enumerate() {
        by_end.retain(|&v| {
            if end[v] < pc {
                free.insert(reg_of[v]);
                false
            } else {
                true
            }
        });
        if ins.op.writes() {
            let v = ins.dst as usize;
            if reg_of[v] == Reg::MAX {
                let r = match free.pop_first() {
                    Some(r) => r,
                    None => {
                        n_regs += 1;
                        n_regs - 1
                    }
                };
                reg_of[v] = r;
                by_end.push(v);
            }
        }
    }
    let map = |r: Reg| reg_of[r as usize];
    let instrs: Vec<Instr> = e
        .instrs
        .iter()
        .map(|ins| {
            let op = match ins.op {
                Op::Add(a, c) => Op::Add(map(a), map(c)),
                Op::Mul(a, c) => Op::Mul(map(a), map(c)),
                Op::Pow(a, k) => Op::Pow(map(a), k),
                Op::Unary(f, a) => Op::Unary(f, map(a)),
                Op::Cmp(o, a, c) => Op::Cmp(o, map(a), map(c)),
                Op::Not(a) => Op::Not(map(a)),
                Op::And(a, c) => Op::And(map(a), map(c)),
                Op::Or(a, c) => Op::Or(map(a), map(c)),
                Op::Select(s, a, c) => Op::Select(map(s), map(a), map(c)),
                Op::Gate(h, a) => Op::Gate(h, map(a)),
                Op::Emit(k, a) => Op::Emit(k, map(a)),
                other => other,
            };
            let dst = if ins.op.writes() { map(ins.dst) } else { 0 };
            Instr { op, dst, guard: ins.guard }
        })
        .collect();
    let mut blocks: Vec<Block> = Vec::new();
    for (pc, ins) in instrs.iter().enumerate() {
        match blocks.last_mut() {
            Some(bl) if bl.guard == ins.guard => bl.end = pc as u32 + 1,
            _ => blocks.push(Block { guard: ins.guard, start: pc as u32, end: pc as u32 + 1 }),
        }
    }
    let guards = guard_vars.iter().map(|vs| vs.iter().map(|&v| reg_of[v]).collect()).collect();
    Ok(KernelProgram {
        instrs,
        blocks,
        guards,
        guard_exprs: e.guard_list,
        consts: e.consts,
        loads: e.loads,
        exponents: e.exponents,
        n_regs: n_regs as usize,
        n_outputs,
    })
}
