//! Little-endian binary layout shared by noise and solution files.
//!
//! Header: 8-byte magic, u32 version, u32 d, f64 L, u64 n, f64 T, u64 N_t,
//! u64 seed, u8 measure tag, f64 measure parameter, string custom density,
//! u8 coupling flag followed (when set) by u64 independent seed and f64 ε.
//! Strings are a u32 byte length followed by UTF-8 bytes.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::expr::{Expression, Point};
use crate::grid::Grid;
use crate::noise::{RadialDensity, SpectralMeasure, SpectralModel};

pub(crate) const VERSION: u32 = 1;

pub(crate) fn put_u8(w: &mut impl Write, v: u8) -> Result<()> {
    w.write_all(&[v])?;
    Ok(())
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn get_str(r: &mut impl Read) -> Result<String> {
    let len = get_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("string of {len} bytes in header")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("header string is not UTF-8".into()))
}

/// Coupling of a perturbed noise to an independent one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Coupling {
    pub independent_seed: u64,
    pub epsilon: f64,
}

pub(crate) struct Header {
    pub grid: Grid,
    pub measure: SpectralMeasure,
    pub seed: u64,
    pub coupling: Option<Coupling>,
}

pub(crate) fn write_header(w: &mut impl Write, magic: &[u8; 8], h: &Header) -> Result<()> {
    w.write_all(magic)?;
    put_u32(w, VERSION)?;
    put_u32(w, h.grid.dimension as u32)?;
    put_f64(w, h.grid.length)?;
    put_u64(w, h.grid.points_per_axis as u64)?;
    put_f64(w, h.grid.horizon)?;
    put_u64(w, h.grid.time_steps as u64)?;
    put_u64(w, h.seed)?;
    let tag = match h.measure.model {
        SpectralModel::White => 0,
        SpectralModel::Riesz { .. } => 1,
        SpectralModel::Bessel { .. } => 2,
        SpectralModel::CustomRadial(_) => 3,
    };
    put_u8(w, tag)?;
    put_f64(w, h.measure.parameter())?;
    put_str(w, h.measure.custom_source().unwrap_or(""))?;
    match h.coupling {
        None => put_u8(w, 0)?,
        Some(c) => {
            put_u8(w, 1)?;
            put_u64(w, c.independent_seed)?;
            put_f64(w, c.epsilon)?;
        }
    }
    Ok(())
}

pub(crate) fn read_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<Header> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dimension = get_u32(r)? as usize;
    let length = get_f64(r)?;
    let points_per_axis = get_u64(r)? as usize;
    let horizon = get_f64(r)?;
    let time_steps = get_u64(r)? as usize;
    let grid = Grid::new(dimension, length, points_per_axis, horizon, time_steps)?;
    let seed = get_u64(r)?;
    let tag = get_u8(r)?;
    let param = get_f64(r)?;
    let source = get_str(r)?;
    let model = match tag {
        0 => SpectralModel::White,
        1 => SpectralModel::Riesz { beta: param },
        2 => SpectralModel::Bessel { alpha: param },
        3 => SpectralModel::CustomRadial(density_from_source(&source)?),
        other => return Err(Error::Format(format!("unknown measure tag {other}"))),
    };
    let measure = SpectralMeasure::new(model, dimension)?;
    let coupling = match get_u8(r)? {
        0 => None,
        1 => Some(Coupling {
            independent_seed: get_u64(r)?,
            epsilon: get_f64(r)?,
        }),
        other => return Err(Error::Format(format!("bad coupling flag {other}"))),
    };
    Ok(Header {
        grid,
        measure,
        seed,
        coupling,
    })
}

/// Compiles a radial density written in the expression language with
/// variable `r`.
pub fn density_from_source(source: &str) -> Result<RadialDensity> {
    let e = Expression::density(source)?;
    Ok(RadialDensity::new(source, move |r| {
        e.eval(&Point {
            r,
            ..Point::default()
        })
    }))
}
