use super::problem::{ComputedMode, ProblemSpec, TemplateDomain};
use crate::error::{Error, Result};
use crate::ir::{ExprId, Loc, Node, Source};

/// Structural checks on a lowered spec. Returns non-fatal diagnostics.
pub fn validate(spec: &ProblemSpec) -> Result<Vec<String>> {
    let mut diags = Vec::new();
    let arena = &spec.arena;

    let check_expr = |root: ExprId, domain: TemplateDomain, what: &str| -> Result<()> {
        for id in arena.reachable(&[root]) {
            let a = match arena.node(id) {
                Node::Access(a) => a,
                _ => continue,
            };
            let (name, channels, dom) = spec.field(a.source).ok_or_else(|| {
                Error::DomainMismatch(format!("{what} reads undeclared data {:?}", a.source))
            })?;
            if a.channel as usize >= channels {
                return Err(Error::DomainMismatch(format!("{what} reads channel {} of `{name}` ({channels})", a.channel)));
            }
            match (a.loc, domain) {
                (Loc::Offset(_), TemplateDomain::Stencil(d)) if d == dom => {}
                (Loc::Offset(_), TemplateDomain::Stencil(d)) => {
                    return Err(Error::DomainMismatch(format!(
                        "{what} on {} reads `{name}` on {}",
                        spec.domain_name(d),
                        spec.domain_name(dom)
                    )))
                }
                (Loc::Slot { graph, slot }, TemplateDomain::Graph(g)) if graph as usize == g => {
                    let decl = spec
                        .graphs
                        .get(g)
                        .ok_or_else(|| Error::DomainMismatch(format!("{what} uses undeclared graph #{g}")))?;
                    match decl.slot_domains.get(slot as usize) {
                        Some(Some(sd)) if *sd == dom => {}
                        Some(_) => {
                            return Err(Error::DomainMismatch(format!(
                                "slot {} of graph `{}` does not index the domain of `{name}`",
                                slot, decl.name
                            )))
                        }
                        None => {
                            return Err(Error::DomainMismatch(format!(
                                "slot index {slot} out of range for graph `{}`",
                                decl.name
                            )))
                        }
                    }
                    if let Source::Computed(i) = a.source {
                        let c = &spec.computed[i as usize];
                        if c.mode == ComputedMode::Cache
                            && c.unknown_accesses.iter().any(|u| u.loc != Loc::Offset(crate::ir::Offset::ZERO))
                        {
                            return Err(Error::DomainMismatch(format!(
                                "cache array `{name}` read through a graph slot must only read unknowns at its origin"
                            )));
                        }
                    }
                }
                _ => return Err(Error::MixedDomain { pos: Default::default() }),
            }
        }
        Ok(())
    };

    for t in &spec.templates {
        check_expr(t.expr, t.domain, &format!("template `{}`", t.name))?;
    }
    for (i, c) in spec.computed.iter().enumerate() {
        for &d in &c.defs {
            check_expr(d, TemplateDomain::Stencil(c.domain), &format!("computed array `{}`", c.name))?;
            for a in arena.accesses(d) {
                if let Source::Computed(j) = a.source {
                    if j as usize >= i {
                        return Err(Error::CyclicComputedArray(c.name.clone()));
                    }
                }
            }
        }
    }
    for e in &spec.excludes {
        check_expr(e.predicate, TemplateDomain::Stencil(e.domain), "exclude predicate")?;
        if !arena.is_boolean(e.predicate) {
            return Err(Error::NonBooleanPredicate(spec.domain_name(e.domain)));
        }
    }

    let mut used = vec![false; spec.unknowns.len()];
    for t in &spec.templates {
        for a in arena.accesses(t.expr) {
            match a.source {
                Source::Unknown(u) => used[u as usize] = true,
                Source::Computed(c) => {
                    for u in &spec.computed[c as usize].unknown_accesses {
                        if let Source::Unknown(u) = u.source {
                            used[u as usize] = true;
                        }
                    }
                }
                _ => {}
            }
        }
    }
    for (u, used) in spec.unknowns.iter().zip(used) {
        if !used {
            diags.push(format!("unknown `{}` is not read by any energy term", u.name));
        }
    }
    for g in &spec.graphs {
        for (s, d) in g.slots.iter().zip(&g.slot_domains) {
            if d.is_none() {
                diags.push(format!("slot {}.{s} is never used", g.name));
            }
        }
    }
    Ok(diags)
}
