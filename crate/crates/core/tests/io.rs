use std::path::{Path, PathBuf};

use minopt::backend::GraphData;
use minopt::io::{parse_nist, read_nist, read_optd, read_optg, write_optd, write_optg, DenseArray, Difficulty, Values};
use minopt::Error;
use proptest::prelude::*;

fn nist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/nist")
}

fn nist_files() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(nist_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "dat"))
        .collect();
    v.sort();
    v
}

proptest! {
    #[test]
    fn optd_round_trip_is_bitwise(
        extents in prop::collection::vec(0usize..6, 0..4),
        channels in 1usize..4,
        single in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let n = extents.iter().product::<usize>() * channels;
        // Raw bit patterns, so NaN payloads and signed zeros are covered too.
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); s };
        let values = if single {
            Values::F32((0..n).map(|_| f32::from_bits(next() as u32)).collect())
        } else {
            Values::F64((0..n).map(|_| f64::from_bits(next())).collect())
        };
        let a = DenseArray::new(extents, channels, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.optd");
        write_optd(&a, &p).unwrap();
        let b = read_optd(&p).unwrap();
        prop_assert_eq!(&a.extents, &b.extents);
        prop_assert_eq!(a.channels, b.channels);
        match (&a.values, &b.values) {
            (Values::F32(x), Values::F32(y)) => prop_assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())),
            (Values::F64(x), Values::F64(y)) => prop_assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())),
            _ => prop_assert!(false, "dtype changed"),
        }
        prop_assert_eq!(std::fs::read(&p).unwrap().len(), 12 + 8 * a.extents.len() + n * if single { 4 } else { 8 });
    }

    #[test]
    fn optg_round_trip(arity in 1usize..5, edges in prop::collection::vec(any::<u64>(), 0..40)) {
        let keep = edges.len() / arity * arity;
        let g = GraphData::new(arity, edges[..keep].to_vec()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.optg");
        write_optg(&g, &p).unwrap();
        prop_assert_eq!(read_optg(&p).unwrap(), g);
    }
}

#[test]
fn random_7x3_two_channel_round_trip() {
    let v: Vec<f64> = (0..42).map(|i| (i as f64).sin() * 1e3).collect();
    let a = DenseArray::from_f64(vec![7, 3], 2, v).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.optd");
    write_optd(&a, &p).unwrap();
    assert_eq!(read_optd(&p).unwrap(), a);
}

#[test]
fn header_is_little_endian_and_outermost_first() {
    let a = DenseArray::from_f64(vec![2, 1], 1, vec![0.0, 0.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.optd");
    write_optd(&a, &p).unwrap();
    let b = std::fs::read(&p).unwrap();
    assert_eq!(&b[..4], b"OPTD");
    assert_eq!(&b[4..8], &[1, 0, 0, 0]);
    assert_eq!(b[8], 1, "binary64");
    assert_eq!(b[9], 2, "ndims");
    assert_eq!(&b[10..12], &[1, 0]);
    assert_eq!(&b[12..20], &1u64.to_le_bytes());
    assert_eq!(&b[20..28], &2u64.to_le_bytes());
    assert_eq!(b.len(), 28 + 16);
    let back = read_optd(&p).unwrap();
    assert_eq!(back.extents, vec![2, 1]);
    assert_eq!(back.values, Values::F64(vec![0.0, 0.0]));
}

#[test]
fn bad_magic_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.optd");
    let mut b = b"XXXX".to_vec();
    b.extend_from_slice(&[1, 0, 0, 0, 1, 0, 1, 0]);
    std::fs::write(&p, b).unwrap();
    assert!(matches!(read_optd(&p), Err(Error::Format { .. })));
    assert!(matches!(read_optg(&p), Err(Error::Format { .. })));
}

#[test]
fn short_and_long_payloads() {
    let a = DenseArray::from_f64(vec![3], 1, vec![1.0, 2.0, 3.0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.optd");
    write_optd(&a, &p).unwrap();
    let full = std::fs::read(&p).unwrap();
    std::fs::write(&p, &full[..full.len() - 1]).unwrap();
    assert!(matches!(read_optd(&p), Err(Error::TruncatedFile { .. })));
    std::fs::write(&p, &full[..6]).unwrap();
    assert!(matches!(read_optd(&p), Err(Error::TruncatedFile { .. })));
    let mut long = full.clone();
    long.push(0);
    std::fs::write(&p, long).unwrap();
    assert!(matches!(read_optd(&p), Err(Error::Format { .. })));
}

#[test]
fn unknown_dtype_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.optd");
    std::fs::write(&p, [b'O', b'P', b'T', b'D', 1, 0, 0, 0, 7, 0, 1, 0]).unwrap();
    assert!(matches!(read_optd(&p), Err(Error::Format { .. })));
    std::fs::write(&p, [b'O', b'P', b'T', b'D', 2, 0, 0, 0, 1, 0, 1, 0]).unwrap();
    assert!(matches!(read_optd(&p), Err(Error::Format { .. })));
}

#[test]
fn graph_with_ragged_count_is_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.optg");
    let mut b = b"OPTG".to_vec();
    b.extend_from_slice(&1u32.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&2u64.to_le_bytes());
    b.extend_from_slice(&[0; 24]);
    std::fs::write(&p, b).unwrap();
    assert!(matches!(read_optg(&p), Err(Error::TruncatedFile { .. })));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(read_optd("/nonexistent/x.optd"), Err(Error::Io { .. })));
}

#[test]
fn misra1a_has_two_parameters_and_both_starts() {
    let p = read_nist(nist_dir().join("Misra1a.dat")).unwrap();
    assert_eq!(p.name, "Misra1a");
    assert_eq!(p.difficulty, Difficulty::Lower);
    assert_eq!(p.starts, [vec![500.0, 1e-4], vec![250.0, 5e-4]]);
    assert_eq!(p.certified, vec![2.3894212918E+02, 5.5015643181E-04]);
    assert_eq!(p.certified_sse, 1.2455138894E-01);
    assert_eq!(p.x.len(), 14);
    assert_eq!((p.y[0], p.x[0]), (10.07, 77.6));
    assert_eq!(p.model, "y = b1*(1-exp[-b2*x])  +  e");
}

#[test]
fn multi_line_model_is_joined() {
    let p = read_nist(nist_dir().join("Hahn1.dat")).unwrap();
    assert!(p.model.starts_with("y = (b1+b2*x+b3*x**2+b4*x**3) /"), "{}", p.model);
    assert!(p.model.contains("b7*x**3"), "{}", p.model);
    assert_eq!(p.n_params(), 7);
}

#[test]
fn empty_file_is_a_format_error() {
    assert!(matches!(parse_nist("", Path::new("empty.dat")), Err(Error::Format { .. })));
}

#[test]
fn two_predictor_file_is_rejected() {
    let e = read_nist(nist_dir().join("Nelson.dat")).unwrap_err();
    assert!(e.to_string().contains("univariate"), "{e}");
}

/// Independent extraction: scan for the label, take the text after the colon.
fn sse_field(text: &str) -> String {
    let at = text.find("Residual Sum of Squares:").unwrap();
    let rest = &text[at..];
    let line = &rest[..rest.find('\n').unwrap_or(rest.len())];
    line.split(':').nth(1).unwrap().trim().to_string()
}

#[test]
fn certified_values_match_the_file_text() {
    let mut parsed = 0;
    for f in nist_files() {
        let text = std::fs::read_to_string(&f).unwrap();
        let Ok(p) = read_nist(&f) else {
            assert!(f.ends_with("Nelson.dat"), "{} failed to parse", f.display());
            continue;
        };
        let field = sse_field(&text);
        assert_eq!(p.certified_sse_text, field);
        assert_eq!(p.certified_sse.to_bits(), field.parse::<f64>().unwrap().to_bits());
        assert_eq!(p.starts[0].len(), p.n_params());
        assert_eq!(p.starts[1].len(), p.n_params());
        assert_eq!(p.x.len(), p.y.len());
        assert!(p.x.iter().chain(&p.y).all(|v| v.is_finite()));
        parsed += 1;
    }
    assert_eq!(parsed, 26);
}
