//! Data bound to a problem: parameters, unknowns, arrays, computed buffers, graphs.

use crate::error::{Error, Result};
use crate::frontend::ProblemSpec;
use crate::ir::{Access, Environment, Loc, Offset, Source, MAX_RANK};
use crate::real::Real;

/// Hyperedge table, `arity` vertex indices per edge, edge-major.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphData {
    pub arity: usize,
    pub edges: Vec<u64>,
}

impl GraphData {
    pub fn new(arity: usize, edges: Vec<u64>) -> Result<Self> {
        if arity == 0 || !edges.len().is_multiple_of(arity) {
            return Err(Error::ShapeMismatch(format!("{} indices do not form edges of arity {arity}", edges.len())));
        }
        Ok(GraphData { arity, edges })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len().checked_div(self.arity).unwrap_or(0)
    }

    pub fn edge(&self, e: usize) -> &[u64] {
        &self.edges[e * self.arity..(e + 1) * self.arity]
    }

    /// Checks `edge[slot] < limits[slot]` for every slot with a limit.
    pub fn check_indices(&self, limits: &[Option<usize>]) -> Result<()> {
        for e in 0..self.edge_count() {
            for (s, &v) in self.edge(e).iter().enumerate() {
                if let Some(Some(extent)) = limits.get(s) {
                    if v >= *extent as u64 {
                        return Err(Error::IndexOutOfRange { edge: e, vertex: v, extent: *extent });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Placement of one field inside its buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldLayout {
    /// Start of the field in its buffer (nonzero only for unknown blocks).
    pub base: usize,
    pub channels: usize,
    pub shape: [usize; MAX_RANK],
    /// Number of elements.
    pub len: usize,
}

impl FieldLayout {
    pub fn size(&self) -> usize {
        self.len * self.channels
    }
}

/// Buffer placement of every field of a spec.
#[derive(Clone, Debug, Default)]
pub struct Layout {
    pub unknowns: Vec<FieldLayout>,
    pub arrays: Vec<FieldLayout>,
    pub computed: Vec<FieldLayout>,
    /// Number of scalar unknowns.
    pub n: usize,
    /// Element count of the vertex domain behind each graph slot.
    pub slot_limits: Vec<Vec<Option<usize>>>,
}

impl Layout {
    pub fn new(spec: &ProblemSpec) -> Self {
        let field = |base, channels, d| FieldLayout { base, channels, shape: spec.domain_shape(d), len: spec.domain_len(d) };
        let offsets = spec.unknown_offsets();
        let unknowns = spec.unknowns.iter().zip(&offsets).map(|(u, &b)| field(b, u.channels, u.domain)).collect();
        let arrays = spec.arrays.iter().map(|a| field(0, a.channels, a.domain)).collect();
        let computed = spec.computed.iter().map(|c| field(0, c.stored_channels(), c.domain)).collect();
        let slot_limits = spec
            .graphs
            .iter()
            .map(|g| g.slot_domains.iter().map(|d| d.map(|d| spec.domain_len(d))).collect())
            .collect();
        Layout { unknowns, arrays, computed, n: spec.unknown_count(), slot_limits }
    }

    pub fn field(&self, source: Source) -> &FieldLayout {
        match source {
            Source::Unknown(i) | Source::Direction(i) => &self.unknowns[i as usize],
            Source::Array(i) => &self.arrays[i as usize],
            Source::Computed(i) => &self.computed[i as usize],
        }
    }

    /// Position of `access` at grid element `elem` (flattened, in the access's domain).
    pub fn index(&self, a: &Access, elem: usize) -> usize {
        let f = self.field(a.source);
        f.base + elem * f.channels + a.channel as usize
    }
}

/// Owned problem data for one precision.
#[derive(Clone, Debug, Default)]
pub struct State<T> {
    pub params: Vec<T>,
    pub x: Vec<T>,
    pub arrays: Vec<Vec<T>>,
    pub computed: Vec<Vec<T>>,
    pub graphs: Vec<GraphData>,
}

impl<T: Real> State<T> {
    /// Zero-filled buffers of the right sizes; graphs empty.
    pub fn zeros(spec: &ProblemSpec) -> Self {
        let layout = Layout::new(spec);
        State {
            params: vec![T::zero(); spec.params.len()],
            x: vec![T::zero(); layout.n],
            arrays: layout.arrays.iter().map(|f| vec![T::zero(); f.size()]).collect(),
            computed: layout.computed.iter().map(|f| vec![T::zero(); f.size()]).collect(),
            graphs: spec.graphs.iter().map(|g| GraphData { arity: g.slots.len(), edges: Vec::new() }).collect(),
        }
    }

    /// Verifies buffer sizes and graph indices against `layout`.
    pub fn check(&self, layout: &Layout) -> Result<()> {
        let sized = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::ShapeMismatch(format!("{what}: {got} values, expected {want}")))
            }
        };
        sized("unknowns", self.x.len(), layout.n)?;
        if self.arrays.len() != layout.arrays.len() {
            return Err(Error::ShapeMismatch(format!("{} arrays bound, {} declared", self.arrays.len(), layout.arrays.len())));
        }
        for (i, (a, f)) in self.arrays.iter().zip(&layout.arrays).enumerate() {
            sized(&format!("array #{i}"), a.len(), f.size())?;
        }
        for (i, (a, f)) in self.computed.iter().zip(&layout.computed).enumerate() {
            sized(&format!("computed array #{i}"), a.len(), f.size())?;
        }
        for (g, limits) in self.graphs.iter().zip(&layout.slot_limits) {
            if g.arity != limits.len() {
                return Err(Error::ShapeMismatch(format!("graph arity {} does not match {} slots", g.arity, limits.len())));
            }
            g.check_indices(limits)?;
        }
        Ok(())
    }

    pub fn inputs<'a>(&'a self, layout: &'a Layout, p: &'a [T]) -> Inputs<'a, T> {
        Inputs { layout, params: &self.params, x: &self.x, p, arrays: &self.arrays, computed: &self.computed }
    }
}

/// Borrowed view of everything a kernel may read.
#[derive(Clone, Copy)]
pub struct Inputs<'a, T> {
    pub layout: &'a Layout,
    pub params: &'a [T],
    pub x: &'a [T],
    /// Search direction, laid out like `x`; may be empty for kernels that do not read it.
    pub p: &'a [T],
    pub arrays: &'a [Vec<T>],
    pub computed: &'a [Vec<T>],
}

impl<'a, T: Real> Inputs<'a, T> {
    pub fn buffer(&self, s: Source) -> &'a [T] {
        match s {
            Source::Unknown(_) => self.x,
            Source::Direction(_) => self.p,
            Source::Array(i) => self.arrays.get(i as usize).map_or(&[], |v| v.as_slice()),
            Source::Computed(i) => self.computed.get(i as usize).map_or(&[], |v| v.as_slice()),
        }
    }
}

/// Where an expression is evaluated.
#[derive(Clone, Copy, Debug)]
pub enum Site<'a> {
    Grid { shape: [usize; MAX_RANK], coords: [usize; MAX_RANK] },
    Edge { vertices: &'a [u64] },
}

pub fn flatten(shape: &[usize; MAX_RANK], c: &[usize; MAX_RANK]) -> usize {
    c[0] + shape[0] * (c[1] + shape[1] * c[2])
}

pub fn unflatten(shape: &[usize; MAX_RANK], mut i: usize) -> [usize; MAX_RANK] {
    let c0 = i % shape[0];
    i /= shape[0];
    let c1 = i % shape[1];
    [c0, c1, i / shape[1]]
}

/// Coordinates `c + o` if inside `shape`.
#[inline]
pub fn neighbor(shape: &[usize; MAX_RANK], c: &[usize; MAX_RANK], o: Offset) -> Option<[usize; MAX_RANK]> {
    let mut out = [0; MAX_RANK];
    for a in 0..MAX_RANK {
        let v = c[a] as i64 + o.0[a] as i64;
        if v < 0 || v >= shape[a] as i64 {
            return None;
        }
        out[a] = v as usize;
    }
    Some(out)
}

/// Reference [`Environment`] over bound data; used by the interpreter oracle.
pub struct ElementEnv<'a, T> {
    pub inputs: Inputs<'a, T>,
    pub site: Site<'a>,
}

impl<'a, T: Real> Environment<T> for ElementEnv<'a, T> {
    fn param(&self, index: u16) -> Option<T> {
        self.inputs.params.get(index as usize).copied()
    }

    fn access(&self, a: &Access) -> Option<T> {
        let f = self.inputs.layout.field(a.source);
        let buf = self.inputs.buffer(a.source);
        let elem = match (a.loc, self.site) {
            (Loc::Offset(o), Site::Grid { coords, .. }) => match neighbor(&f.shape, &coords, o) {
                Some(c) => flatten(&f.shape, &c),
                None => return Some(T::zero()),
            },
            (Loc::Slot { slot, .. }, Site::Edge { vertices }) => *vertices.get(slot as usize)? as usize,
            _ => return None,
        };
        buf.get(f.base + elem * f.channels + a.channel as usize).copied()
    }

    fn in_bounds(&self, o: Offset) -> bool {
        match self.site {
            Site::Grid { shape, coords } => neighbor(&shape, &coords, o).is_some(),
            Site::Edge { .. } => true,
        }
    }

    fn coord(&self, axis: u8) -> T {
        match self.site {
            Site::Grid { coords, .. } => T::from_f64(coords[axis as usize] as f64),
            Site::Edge { .. } => T::zero(),
        }
    }
}
