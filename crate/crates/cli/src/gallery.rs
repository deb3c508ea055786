//! Packaged example problems with deterministic synthetic data.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use minopt::backend::GraphData;
use minopt::io::{write_optd, write_optg, DenseArray};
use minopt::solver::{Method, SolveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bind::{Data, DataMap};
use crate::error::{CliError, CliResult};
use crate::manifest::{BindValue, ConfigOverrides, Outputs, RunManifest};
use crate::run::Problem;

pub const LAPLACIAN: &str = include_str!("../../../problems/laplacian.opt");
pub const LAPLACIAN_GRAPH: &str = include_str!("../../../problems/laplacian_graph.opt");
pub const POISSON: &str = include_str!("../../../problems/poisson.opt");
pub const ARAP_WARP: &str = include_str!("../../../problems/arap_warp.opt");
pub const ARAP_WARP_CACHE: &str = include_str!("../../../problems/arap_warp_cache.opt");
pub const ARAP_MESH: &str = include_str!("../../../problems/arap_mesh.opt");
pub const ARAP_MESH_CACHE: &str = include_str!("../../../problems/arap_mesh_cache.opt");
pub const ROBUST_MESH: &str = include_str!("../../../problems/robust_mesh.opt");
pub const IRLS_DENOISE: &str = include_str!("../../../problems/irls_denoise.opt");

/// Marks a mesh constraint as absent.
pub const NO_CONSTRAINT: f64 = -1e7;

/// A packaged problem and the configuration it is meant to run with.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    /// File name of the problem source under `problems/`.
    pub file: &'static str,
    pub config: SolveConfig,
    /// Name of the instance encoding the same problem with cache arrays.
    pub cached_variant: Option<String>,
}

fn dense(extents: &[usize], channels: usize, v: Vec<f64>) -> Data {
    Data::Dense(DenseArray::from_f64(extents.to_vec(), channels, v).expect("generator sizes"))
}

fn problem(name: &str, source: &str, data: DataMap) -> Problem {
    Problem { name: name.to_string(), source: source.to_string(), dims: BTreeMap::new(), data }
}

fn instance(name: &str, file: &'static str, source: &str, data: DataMap, config: SolveConfig) -> Instance {
    Instance { problem: problem(name, source, data), file, config, cached_variant: None }
}

fn gn(iters: usize) -> SolveConfig {
    SolveConfig { method: Method::GaussNewton, nonlinear_iters: iters, ..SolveConfig::default() }
}

fn lm(iters: usize) -> SolveConfig {
    SolveConfig { nonlinear_iters: iters, ..SolveConfig::default() }
}

/// Two pixels, A = [1, 0], unit weights: x* = [2/3, 1/3], cost 1/3.
pub fn laplacian2() -> Instance {
    let data = DataMap::from([
        ("A".into(), dense(&[2, 1], 1, vec![1.0, 0.0])),
        ("X".into(), dense(&[2, 1], 1, vec![0.0, 0.0])),
        ("w_fit".into(), Data::Param(1.0)),
        ("w_reg".into(), Data::Param(1.0)),
    ]);
    instance("laplacian2", "laplacian.opt", LAPLACIAN, data, gn(1))
}

fn noise(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn laplacian_grid(w: usize, h: usize, seed: u64) -> Instance {
    let data = DataMap::from([
        ("A".into(), dense(&[w, h], 1, noise(seed, w * h, 0.0, 1.0))),
        ("w_fit".into(), Data::Param(1.0)),
        ("w_reg".into(), Data::Param(2.0)),
    ]);
    instance(&format!("laplacian{w}x{h}"), "laplacian.opt", LAPLACIAN, data, gn(1))
}

/// Forward-difference neighbour pairs of a `w`×`h` grid, axis 0 fastest.
pub fn grid_edges(w: usize, h: usize) -> GraphData {
    let mut e = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let p = (i + w * j) as u64;
            if i + 1 < w {
                e.extend([p, p + 1]);
            }
            if j + 1 < h {
                e.extend([p, p + w as u64]);
            }
        }
    }
    GraphData::new(2, e).unwrap()
}

/// [`laplacian_grid`] with its neighbour structure as explicit edges.
pub fn laplacian_graph(w: usize, h: usize, seed: u64) -> Instance {
    let data = DataMap::from([
        ("A".into(), dense(&[w * h], 1, noise(seed, w * h, 0.0, 1.0))),
        ("G".into(), Data::Graph(grid_edges(w, h))),
        ("w_fit".into(), Data::Param(1.0)),
        ("w_reg".into(), Data::Param(2.0)),
    ]);
    instance(&format!("laplacian{w}x{h}_graph"), "laplacian_graph.opt", LAPLACIAN_GRAPH, data, gn(1))
}

/// Mask of the Poisson instances: 0 (solved) inside a centred ellipse.
pub fn poisson_mask(n: usize) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let (rx, ry) = (0.4 * n as f64, 0.3 * n as f64);
    let mut m = vec![1.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let (dx, dy) = ((i as f64 - c) / rx, (j as f64 - c) / ry);
            if dx * dx + dy * dy <= 1.0 {
                m[i + n * j] = 0.0;
            }
        }
    }
    m
}

pub fn poisson(n: usize, seed: u64) -> Instance {
    let data = DataMap::from([
        ("X".into(), dense(&[n, n], 1, noise(seed, n * n, 0.0, 1.0))),
        ("T".into(), dense(&[n, n], 1, noise(seed + 1, n * n, 0.0, 1.0))),
        ("M".into(), dense(&[n, n], 1, poisson_mask(n))),
    ]);
    let mut cfg = gn(1);
    cfg.linear_iters = 2000;
    cfg.pcg_rel_tol = 1e-12;
    instance(&format!("poisson{n}"), "poisson.opt", POISSON, data, cfg)
}

fn arap_warp_data(n: usize) -> DataMap {
    let m = n - 1;
    let mut ur = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            ur.extend([i as f64, j as f64]);
        }
    }
    let mut cons = vec![-1.0; 2 * n * n];
    let mut pin = |i: usize, j: usize, t: [f64; 2]| {
        cons[2 * (i + n * j)] = t[0];
        cons[2 * (i + n * j) + 1] = t[1];
    };
    pin(0, 0, [0.0, 0.0]);
    pin(m, 0, [m as f64, 0.0]);
    pin(0, m, [2.0, m as f64 + 1.0]);
    pin(m, m, [m as f64 + 3.0, m as f64 - 2.0]);
    pin(m / 2, m, [m as f64 / 2.0 + 2.0, m as f64 + 1.5]);
    let mut mask = vec![0.0; n * n];
    for j in 1..3 {
        for i in m - 3..m - 1 {
            mask[i + n * j] = 1.0;
        }
    }
    DataMap::from([
        ("Offset".into(), dense(&[n, n], 2, ur.clone())),
        ("Angle".into(), dense(&[n, n], 1, vec![0.0; n * n])),
        ("UrShape".into(), dense(&[n, n], 2, ur)),
        ("Constraints".into(), dense(&[n, n], 2, cons)),
        ("Mask".into(), dense(&[n, n], 1, mask)),
        ("w_fit".into(), Data::Param(3.0)),
        ("w_reg".into(), Data::Param(1.0)),
    ])
}

pub fn arap_warp(n: usize) -> Instance {
    let mut i = instance(&format!("arap_warp{n}"), "arap_warp.opt", ARAP_WARP, arap_warp_data(n), lm(10));
    i.cached_variant = Some(format!("arap_warp{n}_cache"));
    i
}

pub fn arap_warp_cache(n: usize) -> Instance {
    instance(&format!("arap_warp{n}_cache"), "arap_warp_cache.opt", ARAP_WARP_CACHE, arap_warp_data(n), lm(10))
}

/// Once-subdivided icosahedron on the unit sphere: 42 vertices, 80 faces.
pub fn icosphere() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, v: &mut Vec<[f64; 3]>| {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            v.push([(v[a][0] + v[b][0]) / 2.0, (v[a][1] + v[b][1]) / 2.0, (v[a][2] + v[b][2]) / 2.0]);
            v.len() - 1
        })
    };
    let mut out = Vec::with_capacity(80);
    for [a, b, c] in faces {
        let ab = midpoint(a, b, &mut v);
        let bc = midpoint(b, c, &mut v);
        let ca = midpoint(c, a, &mut v);
        out.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    for p in &mut v {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        p.iter_mut().for_each(|c| *c /= r);
    }
    (v, out)
}

/// Both directions of every mesh edge, so each vertex sees all its neighbours.
pub fn directed_edges(faces: &[[usize; 3]]) -> GraphData {
    let mut pairs = std::collections::BTreeSet::new();
    for f in faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            pairs.insert((a, b));
            pairs.insert((b, a));
        }
    }
    GraphData::new(2, pairs.into_iter().flat_map(|(a, b)| [a as u64, b as u64]).collect()).unwrap()
}

fn mesh_data() -> (DataMap, Vec<[f64; 3]>) {
    let (v, faces) = icosphere();
    let n = v.len();
    let ur: Vec<f64> = v.iter().flatten().copied().collect();
    let mut cons = vec![NO_CONSTRAINT; 3 * n];
    for (i, p) in v.iter().enumerate() {
        if p[2] < -0.7 {
            cons[3 * i..3 * i + 3].copy_from_slice(p);
        } else if p[2] > 0.99 {
            cons[3 * i..3 * i + 3].copy_from_slice(&[p[0] + 0.4, p[1], p[2] + 0.3]);
        }
    }
    let data = DataMap::from([
        ("Offset".into(), dense(&[n], 3, ur.clone())),
        ("Angle".into(), dense(&[n], 3, vec![0.0; 3 * n])),
        ("UrShape".into(), dense(&[n], 3, ur)),
        ("Constraints".into(), dense(&[n], 3, cons)),
        ("G".into(), Data::Graph(directed_edges(&faces))),
        ("w_fit".into(), Data::Param(2.0)),
        ("w_reg".into(), Data::Param(1.0)),
    ]);
    (data, v)
}

pub fn arap_mesh() -> Instance {
    let mut i = instance("arap_mesh42", "arap_mesh.opt", ARAP_MESH, mesh_data().0, lm(10));
    i.cached_variant = Some("arap_mesh42_cache".into());
    i
}

pub fn arap_mesh_cache() -> Instance {
    instance("arap_mesh42_cache", "arap_mesh_cache.opt", ARAP_MESH_CACHE, mesh_data().0, lm(10))
}

/// Targets are a stretched copy of the sphere; a few are replaced by outliers
/// far off the surface.
pub fn robust_mesh(seed: u64) -> Instance {
    let (mut data, v) = mesh_data();
    let n = v.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cons = Vec::with_capacity(3 * n);
    for p in &v {
        cons.extend([p[0] * 1.1, p[1] * 1.1, p[2] * 1.3]);
    }
    for _ in 0..5 {
        let i = rng.gen_range(0..n);
        for c in 0..3 {
            cons[3 * i + c] = v[i][c] * 3.0;
        }
    }
    let normals: Vec<f64> = v.iter().flatten().copied().collect();
    data.insert("Constraints".into(), dense(&[n], 3, cons));
    data.insert("ConstraintNormals".into(), dense(&[n], 3, normals));
    data.insert("RobustWeights".into(), dense(&[n], 1, vec![1.0; n]));
    instance("robust_mesh42", "robust_mesh.opt", ROBUST_MESH, data, lm(10))
}

/// A noisy two-level step image.
pub fn irls_denoise(n: usize, seed: u64) -> Instance {
    let e = noise(seed, n * n, -0.1, 0.1);
    let a: Vec<f64> = (0..n * n).map(|k| if k % n >= n / 2 { 1.0 } else { 0.0 } + e[k]).collect();
    let data = DataMap::from([
        ("X".into(), dense(&[n, n], 1, a.clone())),
        ("A".into(), dense(&[n, n], 1, a)),
        ("w_reg".into(), Data::Param(0.7)),
        ("eps".into(), Data::Param(1e-2)),
    ]);
    instance(&format!("irls_denoise{n}"), "irls_denoise.opt", IRLS_DENOISE, data, lm(8))
}

/// Every packaged instance.
pub fn packaged() -> Vec<Instance> {
    vec![
        laplacian2(),
        laplacian_grid(8, 8, 1),
        laplacian_graph(8, 8, 1),
        poisson(8, 2),
        poisson(64, 3),
        arap_warp(16),
        arap_warp_cache(16),
        arap_mesh(),
        arap_mesh_cache(),
        robust_mesh(4),
        irls_denoise(16, 5),
    ]
}

pub fn find(name: &str) -> Option<Instance> {
    packaged().into_iter().find(|i| i.problem.name == name)
}

/// Writes `<dir>/<instance>/` with the problem source, its data and a manifest.
pub fn write_assets(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut manifests = Vec::new();
    let io = |p: &Path, e: std::io::Error| CliError::usage(format!("cannot write {}: {e}", p.display()));
    for inst in packaged() {
        let d = dir.join(&inst.problem.name);
        std::fs::create_dir_all(&d).map_err(|e| io(&d, e))?;
        let src = d.join(inst.file);
        std::fs::write(&src, &inst.problem.source).map_err(|e| io(&src, e))?;
        let mut bind = BTreeMap::new();
        for (name, data) in &inst.problem.data {
            let v = match data {
                Data::Param(x) => BindValue::Param(*x),
                Data::Dense(a) => {
                    write_optd(a, d.join(format!("{name}.optd")))?;
                    BindValue::File(format!("{name}.optd").into())
                }
                Data::Graph(g) => {
                    write_optg(g, d.join(format!("{name}.optg")))?;
                    BindValue::File(format!("{name}.optg").into())
                }
            };
            bind.insert(name.clone(), v);
        }
        let c = &inst.config;
        let manifest = RunManifest {
            problem: inst.file.into(),
            dims: BTreeMap::new(),
            bind,
            config: ConfigOverrides {
                method: Some(c.method.name().into()),
                nl_iters: Some(c.nonlinear_iters),
                lin_iters: Some(c.linear_iters),
                pcg_rtol: Some(c.pcg_rel_tol),
                ..ConfigOverrides::default()
            },
            output: Outputs { dir: Some("out".into()), trace: Some("out/trace.csv".into()) },
        };
        let mp = d.join("manifest.toml");
        std::fs::write(&mp, manifest.to_toml()).map_err(|e| io(&mp, e))?;
        manifests.push(mp);
    }
    Ok(manifests)
}
