//! Binary persistence formats.
//!
//! All little-endian. `WVSN v1` holds a snapshot grid: u64 n_t, u64 n_ξ,
//! f64 t₀, t_end, ξ₀, ξ_end, then the n_t·n_ξ values row-major (time-major).
//! `WVRM v1` holds a reduced model plus its certificate: u64 n_interior,
//! u64 n, basis column-major, reduced mass then reduced stiffness row-major,
//! u64 count + ε vector. `WVNN v1` holds a checkpoint: u64 layer count, the
//! layer sizes, θ, and optionally the ADAM state (m, v, step count).

use crate::analytic::{linspace, GridFunction};
use crate::network::{AdamState, NetworkParams};
use crate::rom::RomModel;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const WVSN_MAGIC: &[u8; 4] = b"WVSN";
pub const WVRM_MAGIC: &[u8; 4] = b"WVRM";
pub const WVNN_MAGIC: &[u8; 4] = b"WVNN";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("corrupt payload: {0}")]
    Corrupt(&'static str),
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64_vec<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn check_header<R: Read>(r: &mut R, magic: &'static [u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::BadMagic {
            expected: std::str::from_utf8(magic).unwrap(),
            found,
        });
    }
    let mut v = [0u8; 1];
    r.read_exact(&mut v)?;
    if v[0] != FORMAT_VERSION {
        return Err(FormatError::BadVersion(v[0]));
    }
    Ok(())
}

/// Exact byte size of a WVSN file for the given grid shape.
pub fn wvsn_size(n_t: usize, n_xi: usize) -> usize {
    4 + 1 + 2 * 8 + 4 * 8 + 8 * n_t * n_xi
}

/// The grid must be equidistant in both axes; only the extents are stored.
pub fn write_wvsn<W: Write>(w: &mut W, grid: &GridFunction) -> Result<(), FormatError> {
    w.write_all(WVSN_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    write_u64(w, grid.n_t() as u64)?;
    write_u64(w, grid.n_xi() as u64)?;
    write_f64(w, grid.t_nodes[0])?;
    write_f64(w, *grid.t_nodes.last().unwrap())?;
    write_f64(w, grid.xi_nodes[0])?;
    write_f64(w, *grid.xi_nodes.last().unwrap())?;
    for &v in &grid.values {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_wvsn<R: Read>(r: &mut R) -> Result<GridFunction, FormatError> {
    check_header(r, WVSN_MAGIC)?;
    let n_t = read_u64(r)? as usize;
    let n_xi = read_u64(r)? as usize;
    if n_t < 2 || n_xi < 2 || n_t.saturating_mul(n_xi) > (1 << 32) {
        return Err(FormatError::Corrupt("implausible grid shape"));
    }
    let t0 = read_f64(r)?;
    let t1 = read_f64(r)?;
    let x0 = read_f64(r)?;
    let x1 = read_f64(r)?;
    if !(t1 > t0 && x1 > x0) {
        return Err(FormatError::Corrupt("degenerate domain extents"));
    }
    let values = read_f64_vec(r, n_t * n_xi)?;
    GridFunction::new(linspace(t0, t1, n_t), linspace(x0, x1, n_xi), values)
        .map_err(|_| FormatError::Corrupt("invalid grid payload"))
}

pub fn write_wvrm<W: Write>(
    w: &mut W,
    model: &RomModel,
    epsilon: &[f64],
) -> Result<(), FormatError> {
    w.write_all(WVRM_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    write_u64(w, model.n_interior as u64)?;
    write_u64(w, model.n as u64)?;
    for &v in &model.basis {
        write_f64(w, v)?;
    }
    for &v in &model.reduced_mass {
        write_f64(w, v)?;
    }
    for &v in &model.reduced_stiffness {
        write_f64(w, v)?;
    }
    write_u64(w, epsilon.len() as u64)?;
    for &v in epsilon {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_wvrm<R: Read>(r: &mut R) -> Result<(RomModel, Vec<f64>), FormatError> {
    check_header(r, WVRM_MAGIC)?;
    let n_interior = read_u64(r)? as usize;
    let n = read_u64(r)? as usize;
    if n == 0 || n > n_interior || n_interior > (1 << 26) {
        return Err(FormatError::Corrupt("implausible reduced sizes"));
    }
    let basis = read_f64_vec(r, n_interior * n)?;
    let reduced_mass = read_f64_vec(r, n * n)?;
    let reduced_stiffness = read_f64_vec(r, n * n)?;
    let n_eps = read_u64(r)? as usize;
    if n_eps > (1 << 26) {
        return Err(FormatError::Corrupt("implausible certificate length"));
    }
    let epsilon = read_f64_vec(r, n_eps)?;
    Ok((
        RomModel {
            basis,
            n_interior,
            n,
            reduced_mass,
            reduced_stiffness,
            singular_values: Vec::new(),
        },
        epsilon,
    ))
}

pub fn write_wvnn<W: Write>(
    w: &mut W,
    params: &NetworkParams,
    adam: Option<&AdamState>,
) -> Result<(), FormatError> {
    w.write_all(WVNN_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    write_u64(w, params.layer_sizes.len() as u64)?;
    for &s in &params.layer_sizes {
        write_u64(w, s as u64)?;
    }
    for &v in &params.theta {
        write_f64(w, v)?;
    }
    match adam {
        Some(st) => {
            w.write_all(&[1])?;
            for &v in &st.m {
                write_f64(w, v)?;
            }
            for &v in &st.v {
                write_f64(w, v)?;
            }
            write_u64(w, st.step_count)?;
        }
        None => w.write_all(&[0])?,
    }
    Ok(())
}

pub fn read_wvnn<R: Read>(r: &mut R) -> Result<(NetworkParams, Option<AdamState>), FormatError> {
    check_header(r, WVNN_MAGIC)?;
    let n_layers = read_u64(r)? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(FormatError::Corrupt("implausible layer count"));
    }
    let mut layer_sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let s = read_u64(r)? as usize;
        if s == 0 || s > (1 << 20) {
            return Err(FormatError::Corrupt("implausible layer size"));
        }
        layer_sizes.push(s);
    }
    let n_params = crate::network::param_count(&layer_sizes);
    let theta = read_f64_vec(r, n_params)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let adam = match flag[0] {
        0 => None,
        1 => {
            let m = read_f64_vec(r, n_params)?;
            let v = read_f64_vec(r, n_params)?;
            let step_count = read_u64(r)?;
            let mut st = AdamState::new(n_params);
            st.m = m;
            st.v = v;
            st.step_count = step_count;
            Some(st)
        }
        _ => return Err(FormatError::Corrupt("bad optimizer-state flag")),
    };
    Ok((NetworkParams { layer_sizes, theta }, adam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::WaveProblem;
    use crate::network;
    use proptest::prelude::*;

    #[test]
    fn wvsn_roundtrip_and_size() {
        let p = WaveProblem::default();
        let g = p.sample_on_grid(7, 11);
        let mut buf = Vec::new();
        write_wvsn(&mut buf, &g).unwrap();
        assert_eq!(buf.len(), wvsn_size(7, 11));
        assert_eq!(&buf[..4], b"WVSN");
        assert_eq!(buf[4], 1);
        let back = read_wvsn(&mut buf.as_slice()).unwrap();
        assert_eq!(back.values, g.values);
        assert_eq!(back.t_nodes, g.t_nodes);
        assert_eq!(back.xi_nodes, g.xi_nodes);
    }

    #[test]
    fn wvsn_rejects_garbage() {
        assert!(matches!(
            read_wvsn(&mut &b"WVXN\x01rest"[..]),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            read_wvsn(&mut &b"WVSN\x02"[..]),
            Err(FormatError::BadVersion(2))
        ));
        let mut buf = Vec::new();
        write_wvsn(&mut buf, &WaveProblem::default().sample_on_grid(3, 3)).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(read_wvsn(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn wvrm_roundtrip() {
        let p = WaveProblem::default();
        let d = crate::fem::assemble(40, 30, &p).unwrap();
        let fom = crate::fem::solve_fom(&d, &p).unwrap();
        let model = crate::rom::pod_basis(&fom, 5).unwrap();
        let rom = crate::rom::solve_rom(&model, &d, &p);
        let cert = crate::rom::certify(rom, &fom, 1.5).unwrap();
        let mut buf = Vec::new();
        write_wvrm(&mut buf, &model, &cert.epsilon).unwrap();
        assert_eq!(&buf[..4], b"WVRM");
        let (back, eps) = read_wvrm(&mut buf.as_slice()).unwrap();
        assert_eq!(back.basis, model.basis);
        assert_eq!(back.reduced_mass, model.reduced_mass);
        assert_eq!(back.reduced_stiffness, model.reduced_stiffness);
        assert_eq!(back.n, 5);
        assert_eq!(eps, cert.epsilon);
    }

    #[test]
    fn wvnn_roundtrip_with_and_without_adam() {
        let params = network::init(7);
        let mut adam = AdamState::new(params.n_params());
        adam.m[3] = 0.25;
        adam.v[10] = 1.5;
        adam.step_count = 42;
        let mut buf = Vec::new();
        write_wvnn(&mut buf, &params, Some(&adam)).unwrap();
        let (p2, a2) = read_wvnn(&mut buf.as_slice()).unwrap();
        assert_eq!(p2.theta, params.theta);
        let a2 = a2.unwrap();
        assert_eq!(a2.m, adam.m);
        assert_eq!(a2.v, adam.v);
        assert_eq!(a2.step_count, 42);

        let mut buf = Vec::new();
        write_wvnn(&mut buf, &params, None).unwrap();
        let (_, a3) = read_wvnn(&mut buf.as_slice()).unwrap();
        assert!(a3.is_none());
    }

    proptest! {
        #[test]
        fn wvsn_roundtrip_random_grids(
            n_t in 2usize..12,
            n_xi in 2usize..12,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..n_t * n_xi).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let g = GridFunction::new(
                linspace(0.0, 2.0, n_t),
                linspace(-1.0, 1.0, n_xi),
                values,
            ).unwrap();
            let mut buf = Vec::new();
            write_wvsn(&mut buf, &g).unwrap();
            prop_assert_eq!(buf.len(), wvsn_size(n_t, n_xi));
            let back = read_wvsn(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.values, g.values);
        }
    }
}
