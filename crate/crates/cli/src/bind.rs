//! Attaching data to a compiled problem.

use std::collections::BTreeMap;
use std::path::Path;

use minopt::backend::{GraphData, Layout, State};
use minopt::frontend::{compile_source, FieldDecl, ProblemSpec};
use minopt::io::{read_optd, read_optg, DenseArray, Values};
use minopt::{Error, Real};

use crate::error::{CliError, CliResult};
use crate::manifest::BindValue;

/// A value bound to a declared name.
#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    Dense(DenseArray),
    Graph(GraphData),
    Param(f64),
}

pub type DataMap = BTreeMap<String, Data>;

fn bind_err(msg: String) -> CliError {
    CliError::Problem(Error::Bind(msg))
}

pub fn load_data(bind: &BTreeMap<String, BindValue>) -> CliResult<DataMap> {
    let mut out = DataMap::new();
    for (name, v) in bind {
        let d = match v {
            BindValue::Param(x) => Data::Param(*x),
            BindValue::File(p) => match p.extension().and_then(|e| e.to_str()) {
                Some("optd") => Data::Dense(read_optd(p)?),
                Some("optg") => Data::Graph(read_optg(p)?),
                _ => return Err(bind_err(format!("`{name}`: {} is neither .optd nor .optg", p.display()))),
            },
        };
        out.insert(name.clone(), d);
    }
    Ok(out)
}

fn find_field<'a>(spec: &'a ProblemSpec, name: &str) -> Option<&'a FieldDecl> {
    spec.unknowns.iter().chain(&spec.arrays).find(|f| f.name == name)
}

/// Compiles `source`, sizing every dimension from `dims`, then from the bound
/// arrays, then from the problem file's own declaration.
pub fn compile(source: &str, dims: &BTreeMap<String, usize>, data: &DataMap) -> CliResult<ProblemSpec> {
    let explicit: Vec<(String, usize)> = dims.iter().map(|(k, &v)| (k.clone(), v)).collect();
    let spec = compile_source(source, &explicit)?;
    let mut sizes: BTreeMap<String, (usize, String)> =
        dims.iter().map(|(k, &v)| (k.clone(), (v, "the manifest".to_string()))).collect();
    for (name, d) in data {
        let Data::Dense(a) = d else { continue };
        let Some(f) = find_field(&spec, name) else { continue };
        let axes = &spec.domains[f.domain].dims;
        if a.extents.len() != axes.len() {
            return Err(bind_err(format!("`{name}` has {} dimensions, declared with {}", a.extents.len(), axes.len())));
        }
        if a.channels != f.channels {
            return Err(bind_err(format!("`{name}` has {} channels, declared with {}", a.channels, f.channels)));
        }
        for (&axis, &extent) in axes.iter().zip(&a.extents) {
            let dim = &spec.dims[axis].name;
            match sizes.get(dim) {
                Some((e, from)) if *e != extent => {
                    return Err(bind_err(format!("`{name}` gives {dim} = {extent}, but {from} gives {e}")));
                }
                Some(_) => {}
                None => {
                    sizes.insert(dim.clone(), (extent, format!("`{name}`")));
                }
            }
        }
    }
    let all: Vec<(String, usize)> = sizes.into_iter().map(|(k, (v, _))| (k, v)).collect();
    Ok(compile_source(source, &all)?)
}

pub fn compile_file(path: &Path, dims: &BTreeMap<String, usize>, data: &DataMap) -> CliResult<ProblemSpec> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read problem {}: {e}", path.display())))?;
    compile(&src, dims, data)
}

/// Builds the solver state. Every array, graph and parameter must be bound;
/// unknowns are optional and start at zero.
pub fn bind_state<T: Real>(spec: &ProblemSpec, data: &DataMap) -> CliResult<State<T>> {
    let layout = Layout::new(spec);
    let mut st: State<T> = State::zeros(spec);
    for (name, d) in data {
        if let Some(i) = spec.params.iter().position(|p| p == name) {
            let Data::Param(v) = d else {
                return Err(bind_err(format!("parameter `{name}` must be bound to a number")));
            };
            st.params[i] = T::from_f64(*v);
        } else if let Some(i) = spec.arrays.iter().position(|a| &a.name == name) {
            st.arrays[i] = dense_values(name, d, layout.arrays[i].size())?;
        } else if let Some(i) = spec.unknowns.iter().position(|u| &u.name == name) {
            let f = &layout.unknowns[i];
            let v = dense_values(name, d, f.size())?;
            st.x[f.base..f.base + f.size()].copy_from_slice(&v);
        } else if let Some(i) = spec.graphs.iter().position(|g| &g.name == name) {
            let Data::Graph(g) = d else {
                return Err(bind_err(format!("graph `{name}` must be bound to a .optg file")));
            };
            if g.arity != spec.graphs[i].slots.len() {
                return Err(bind_err(format!(
                    "graph `{name}` has {} slots, the file has arity {}",
                    spec.graphs[i].slots.len(),
                    g.arity
                )));
            }
            st.graphs[i] = g.clone();
        } else if spec.computed.iter().any(|c| &c.name == name) {
            return Err(bind_err(format!("`{name}` is a computed array and cannot be bound")));
        } else {
            return Err(bind_err(format!("`{name}` is not declared by the problem")));
        }
    }
    let missing = spec
        .arrays
        .iter()
        .map(|a| ("array", &a.name))
        .chain(spec.graphs.iter().map(|g| ("graph", &g.name)))
        .chain(spec.params.iter().map(|p| ("parameter", p)))
        .find(|(_, n)| !data.contains_key(*n));
    if let Some((kind, n)) = missing {
        return Err(bind_err(format!("missing binding for {kind} `{n}`")));
    }
    st.check(&layout)?;
    Ok(st)
}

fn dense_values<T: Real>(name: &str, d: &Data, want: usize) -> CliResult<Vec<T>> {
    let Data::Dense(a) = d else {
        return Err(bind_err(format!("`{name}` must be bound to a .optd file")));
    };
    if a.values.len() != want {
        return Err(bind_err(format!("`{name}` has {} values, the problem needs {want}", a.values.len())));
    }
    Ok(match &a.values {
        Values::F32(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
        Values::F64(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
    })
}

/// Every unknown of `st` as a dense array in the state's precision.
pub fn unknown_arrays<T: Real>(spec: &ProblemSpec, st: &State<T>) -> Vec<(String, DenseArray)> {
    let layout = Layout::new(spec);
    spec.unknowns
        .iter()
        .zip(&layout.unknowns)
        .map(|(u, f)| {
            let v = &st.x[f.base..f.base + f.size()];
            let values = match T::PRECISION {
                minopt::Precision::F32 => Values::F32(v.iter().map(|x| Real::to_f64(*x) as f32).collect()),
                minopt::Precision::F64 => Values::F64(v.iter().map(|x| Real::to_f64(*x)).collect()),
            };
            let a = DenseArray::new(spec.domain_extents(u.domain), u.channels, values).expect("sizes agree");
            (u.name.clone(), a)
        })
        .collect()
}
