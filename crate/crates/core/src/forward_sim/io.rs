//! Ensemble serialization: long-format CSV and a compact binary dump.

use std::io::{Read, Write};

use super::brownian::{BrownianGrid, Phase};
use super::simulate::{LiftedRecord, PathEnsemble};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"VLFT1";

/// Writes `path_id,step,t,X[,z_i...]`. Coordinates come from the full state
/// when it was stored, otherwise from the recorded coordinates.
pub fn write_csv<W: Write>(ens: &PathEnsemble, mut out: W, with_z: bool) -> Result<()> {
    let z_cols: Vec<String> = match (&ens.lifted, with_z) {
        (Some(l), true) if l.z.is_some() => (0..l.dim).map(|i| format!("z{i}")).collect(),
        (Some(l), true) => l.coords.iter().map(|i| format!("z{i}")).collect(),
        _ => Vec::new(),
    };
    write!(out, "path_id,step,t,X")?;
    for c in &z_cols {
        write!(out, ",{c}")?;
    }
    writeln!(out)?;
    let n = ens.n_steps();
    for p in 0..ens.n_paths() {
        let id = ens.grid.path_offset + p as u64;
        for k in 0..=n {
            write!(out, "{id},{k},{},{}", ens.grid.time(k), ens.x(p, k))?;
            if !z_cols.is_empty() {
                let vals = ens.z(p, k).unwrap_or_else(|| ens.coord_values(p, k));
                for v in vals {
                    write!(out, ",{v}")?;
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn phase_code(p: Phase) -> (u64, u64) {
    match p {
        Phase::Forward => (0, 0),
        Phase::Evaluation => (1, 0),
        Phase::Policies => (2, 0),
        Phase::Custom(v) => (3, v),
    }
}

fn phase_from(code: u64, v: u64) -> Result<Phase> {
    Ok(match code {
        0 => Phase::Forward,
        1 => Phase::Evaluation,
        2 => Phase::Policies,
        3 => Phase::Custom(v),
        _ => return Err(Error::Format(format!("unknown phase code {code}"))),
    })
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, vals: &[f64]) -> Result<()> {
    put_u64(w, vals.len() as u64)?;
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn get_f64s<R: Read>(r: &mut R, expected: usize) -> Result<Vec<f64>> {
    let len = get_u64(r)? as usize;
    if len != expected {
        return Err(Error::Format(format!("array of length {len}, expected {expected}")));
    }
    (0..len).map(|_| get_f64(r)).collect()
}

/// Binary dump: magic, little-endian header and arrays.
pub fn write_binary<W: Write>(ens: &PathEnsemble, mut w: W) -> Result<()> {
    let g = &ens.grid;
    w.write_all(MAGIC)?;
    put_u64(&mut w, ens.n_paths() as u64)?;
    put_u64(&mut w, g.n_steps as u64)?;
    w.write_all(&g.t0.to_le_bytes())?;
    w.write_all(&g.t_end.to_le_bytes())?;
    put_u64(&mut w, g.seed)?;
    let (code, val) = phase_code(g.phase);
    put_u64(&mut w, code)?;
    put_u64(&mut w, val)?;
    put_u64(&mut w, g.path_offset)?;
    put_u64(&mut w, ens.flagged.len() as u64)?;
    for &f in &ens.flagged {
        put_u64(&mut w, f as u64)?;
    }
    put_f64s(&mut w, g.increments())?;
    put_f64s(&mut w, &ens.x)?;
    put_f64s(&mut w, &ens.controls)?;
    match &ens.lifted {
        None => put_u64(&mut w, 0)?,
        Some(l) => {
            put_u64(&mut w, 1)?;
            put_u64(&mut w, l.dim as u64)?;
            put_u64(&mut w, l.coords.len() as u64)?;
            for &c in &l.coords {
                put_u64(&mut w, c as u64)?;
            }
            put_f64s(&mut w, &l.zeta0)?;
            put_f64s(&mut w, &l.forecast)?;
            put_f64s(&mut w, &l.sup_norm)?;
            put_f64s(&mut w, &l.coord_values)?;
            put_f64s(&mut w, &l.next_pair)?;
            put_f64s(&mut w, &l.next_coord_values)?;
            match &l.z {
                None => put_u64(&mut w, 0)?,
                Some(z) => {
                    put_u64(&mut w, 1)?;
                    put_f64s(&mut w, z)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<PathEnsemble> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a VLFT1 ensemble dump".into()));
    }
    let n_paths = get_u64(&mut r)? as usize;
    let n_steps = get_u64(&mut r)? as usize;
    let t0 = get_f64(&mut r)?;
    let t_end = get_f64(&mut r)?;
    let seed = get_u64(&mut r)?;
    let code = get_u64(&mut r)?;
    let val = get_u64(&mut r)?;
    let path_offset = get_u64(&mut r)?;
    let n_flagged = get_u64(&mut r)? as usize;
    let flagged = (0..n_flagged).map(|_| get_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let increments = get_f64s(&mut r, n_paths * n_steps)?;
    let mut grid = BrownianGrid::from_increments(t0, t_end, n_steps, increments)?;
    grid.seed = seed;
    grid.phase = phase_from(code, val)?;
    grid.path_offset = path_offset;
    let x = get_f64s(&mut r, n_paths * (n_steps + 1))?;
    let controls = get_f64s(&mut r, n_paths * n_steps)?;
    let lifted = match get_u64(&mut r)? {
        0 => None,
        1 => {
            let dim = get_u64(&mut r)? as usize;
            let m = get_u64(&mut r)? as usize;
            let coords = (0..m).map(|_| get_u64(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let w = n_paths * (n_steps + 1);
            let zeta0 = get_f64s(&mut r, dim)?;
            let forecast = get_f64s(&mut r, w)?;
            let sup_norm = get_f64s(&mut r, w)?;
            let coord_values = get_f64s(&mut r, w * m)?;
            let next_pair = get_f64s(&mut r, w)?;
            let next_coord_values = get_f64s(&mut r, w * m)?;
            let z = match get_u64(&mut r)? {
                0 => None,
                _ => Some(get_f64s(&mut r, w * dim)?),
            };
            Some(LiftedRecord { dim, zeta0, forecast, sup_norm, coords, coord_values, next_pair, next_coord_values, z })
        }
        other => return Err(Error::Format(format!("bad lifted flag {other}"))),
    };
    Ok(PathEnsemble { grid, x, controls, lifted, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_sim::{simulate_lifted, RecordOptions, Uncontrolled, VolterraCoefficients};
    use crate::kernel_lift::{build_shift_lift, Kernel};

    fn sample() -> PathEnsemble {
        let lift = build_shift_lift(&Kernel::sqrt(1.0), 0.25, 1.0).unwrap();
        let grid = BrownianGrid::generate(0.0, 1.0, 4, 3, 9, Phase::Evaluation).unwrap();
        let (zeta, _) = lift.embed_initial_curve(&[1.0; 5]).unwrap();
        let coeffs = VolterraCoefficients::constant(0.1, 0.5, 1.0);
        let opts = RecordOptions { store_z: true, coords: vec![0, 5] };
        simulate_lifted(&coeffs, &lift, &Uncontrolled, &grid, &zeta, &opts).unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let ens = sample();
        let mut buf = Vec::new();
        write_binary(&ens, &mut buf).unwrap();
        assert_eq!(&buf[..5], MAGIC);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.x, ens.x);
        assert_eq!(back.grid.increments(), ens.grid.increments());
        assert_eq!(back.grid.phase, Phase::Evaluation);
        let (a, b) = (back.lifted.unwrap(), ens.lifted.unwrap());
        assert_eq!(a.z, b.z);
        assert_eq!(a.coord_values, b.coord_values);
        assert_eq!(a.next_coord_values, b.next_coord_values);
        assert!(read_binary(&b"VLFT0"[..]).is_err());
    }

    #[test]
    fn csv_layout() {
        let ens = sample();
        let mut buf = Vec::new();
        write_csv(&ens, &mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 5);
        assert!(text.starts_with("path_id,step,t,X\n0,0,0,"));
        let mut buf = Vec::new();
        write_csv(&ens, &mut buf, true).unwrap();
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header.split(',').count(), 4 + 8);
    }
}
