//! Lowered, scalarized problem description.

use crate::ir::{Access, ExprArena, ExprId, Loc, Source, MAX_RANK};

pub use super::ast::ComputedMode;

pub type DomainId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimDecl {
    pub name: String,
    pub extent: usize,
}

/// An ordered list of dimensions; fields declared over the same list share a domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    pub dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub channels: usize,
    pub domain: DomainId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphDecl {
    pub name: String,
    pub slots: Vec<String>,
    /// Vertex domain of each slot, inferred from the fields read through it.
    pub slot_domains: Vec<Option<DomainId>>,
}

#[derive(Clone, Debug)]
pub struct ComputedDecl {
    pub name: String,
    pub mode: ComputedMode,
    pub domain: DomainId,
    /// Defining expression per value channel, at the local origin.
    pub defs: Vec<ExprId>,
    /// Unknown accesses of the definitions; cache mode stores one partial per entry.
    pub unknown_accesses: Vec<Access>,
    /// `partials[c][k]` = d defs[c] / d unknown_accesses[k] (cache mode only).
    pub partials: Vec<Vec<ExprId>>,
}

impl ComputedDecl {
    pub fn value_channels(&self) -> usize {
        self.defs.len()
    }

    /// Stored channels: values, then the cached partials.
    pub fn stored_channels(&self) -> usize {
        match self.mode {
            ComputedMode::Freeze => self.defs.len(),
            ComputedMode::Cache => self.defs.len() * (1 + self.unknown_accesses.len()),
        }
    }

    pub fn partial_channel(&self, channel: usize, k: usize) -> usize {
        self.defs.len() + channel * self.unknown_accesses.len() + k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemplateDomain {
    Stencil(DomainId),
    Graph(usize),
}

/// One scalar residual, replicated over every element of its domain.
#[derive(Clone, Debug)]
pub struct Template {
    pub name: String,
    pub domain: TemplateDomain,
    pub expr: ExprId,
}

#[derive(Clone, Debug)]
pub struct Exclusion {
    pub domain: DomainId,
    pub predicate: ExprId,
}

#[derive(Clone, Debug, Default)]
pub struct ProblemSpec {
    pub arena: ExprArena,
    pub dims: Vec<DimDecl>,
    pub domains: Vec<Domain>,
    pub params: Vec<String>,
    pub unknowns: Vec<FieldDecl>,
    pub arrays: Vec<FieldDecl>,
    pub graphs: Vec<GraphDecl>,
    pub computed: Vec<ComputedDecl>,
    pub templates: Vec<Template>,
    pub excludes: Vec<Exclusion>,
}

impl ProblemSpec {
    pub fn domain_extents(&self, d: DomainId) -> Vec<usize> {
        self.domains[d].dims.iter().map(|&i| self.dims[i].extent).collect()
    }

    pub fn domain_len(&self, d: DomainId) -> usize {
        self.domain_extents(d).iter().product()
    }

    pub fn domain_name(&self, d: DomainId) -> String {
        let names: Vec<&str> = self.domains[d].dims.iter().map(|&i| self.dims[i].name.as_str()).collect();
        format!("[{}]", names.join(","))
    }

    /// Extents padded to [`MAX_RANK`] with 1.
    pub fn domain_shape(&self, d: DomainId) -> [usize; MAX_RANK] {
        let mut s = [1; MAX_RANK];
        for (i, e) in self.domain_extents(d).into_iter().enumerate() {
            s[i] = e;
        }
        s
    }

    pub fn field(&self, source: Source) -> Option<(&str, usize, DomainId)> {
        match source {
            Source::Unknown(i) | Source::Direction(i) => {
                self.unknowns.get(i as usize).map(|f| (f.name.as_str(), f.channels, f.domain))
            }
            Source::Array(i) => self.arrays.get(i as usize).map(|f| (f.name.as_str(), f.channels, f.domain)),
            Source::Computed(i) => self.computed.get(i as usize).map(|c| (c.name.as_str(), c.stored_channels(), c.domain)),
        }
    }

    /// Total number of scalar unknowns (N).
    pub fn unknown_count(&self) -> usize {
        self.unknowns.iter().map(|u| u.channels * self.domain_len(u.domain)).sum()
    }

    /// Offset of each unknown's block in the concatenated unknown vector.
    pub fn unknown_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.unknowns.len());
        let mut at = 0;
        for u in &self.unknowns {
            out.push(at);
            at += u.channels * self.domain_len(u.domain);
        }
        out
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p == name)
    }

    pub fn array_index(&self, name: &str) -> Option<usize> {
        self.arrays.iter().position(|a| a.name == name)
    }

    pub fn unknown_index(&self, name: &str) -> Option<usize> {
        self.unknowns.iter().position(|a| a.name == name)
    }

    pub fn graph_index(&self, name: &str) -> Option<usize> {
        self.graphs.iter().position(|g| g.name == name)
    }

    /// Vertex domain read through `loc`, if it is a graph slot.
    pub fn slot_domain(&self, loc: Loc) -> Option<DomainId> {
        match loc {
            Loc::Slot { graph, slot } => self.graphs.get(graph as usize)?.slot_domains.get(slot as usize).copied()?,
            Loc::Offset(_) => None,
        }
    }

    pub fn has_cache_arrays(&self) -> bool {
        self.computed.iter().any(|c| c.mode == ComputedMode::Cache)
    }
}
