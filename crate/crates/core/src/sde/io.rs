//! Ensemble serialization: a little-endian binary container and CSV.
//!
//! Binary layout: 8-byte magic, then `d`, `n_traj`, `n_steps` as `u64`,
//! `h` as `f64`, `seed` as `u64`, `t0` as `f64`, followed by the states as
//! row-major `f64` in `[traj][step][dim]` order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::TrajectoryEnsemble;

const MAGIC: &[u8; 8] = b"KQENS001";

pub fn write_ensemble_binary<T: Real, W: Write>(ens: &TrajectoryEnsemble<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for v in [ens.dim as u64, ens.n_traj as u64, ens.n_steps as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&ens.step_size.to_f64_lossy().to_le_bytes())?;
    w.write_all(&ens.seed.to_le_bytes())?;
    let t0 = ens.times.first().map_or(0.0, |t| t.to_f64_lossy());
    w.write_all(&t0.to_le_bytes())?;
    for v in &ens.states {
        w.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_ensemble_binary<T: Real, R: Read>(mut r: R) -> Result<TrajectoryEnsemble<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an ensemble container".into()));
    }
    let dim = read_u64(&mut r)? as usize;
    let n_traj = read_u64(&mut r)? as usize;
    let n_steps = read_u64(&mut r)? as usize;
    let h = read_f64(&mut r)?;
    let seed = read_u64(&mut r)?;
    let t0 = read_f64(&mut r)?;
    let len = dim
        .checked_mul(n_traj)
        .and_then(|v| v.checked_mul(n_steps))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    let mut states = Vec::with_capacity(len);
    for _ in 0..len {
        states.push(T::lit(read_f64(&mut r)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let times = (0..n_steps).map(|k| T::lit(t0 + h * k as f64)).collect();
    Ok(TrajectoryEnsemble { dim, n_traj, n_steps, times, step_size: T::lit(h), seed, states })
}

/// CSV with columns `traj, t, x1..xd`, one row per recorded state.
pub fn write_ensemble_csv<T: Real, W: Write>(ens: &TrajectoryEnsemble<T>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["traj".to_string(), "t".to_string()];
    header.extend((1..=ens.dim).map(|i| format!("x{i}")));
    out.write_record(&header)?;
    let mut row = Vec::with_capacity(ens.dim + 2);
    for j in 0..ens.n_traj {
        for k in 0..ens.n_steps {
            row.clear();
            row.push(j.to_string());
            row.push(ens.times[k].to_f64_lossy().to_string());
            row.extend(ens.state(j, k).iter().map(|v| v.to_f64_lossy().to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_ensemble, DriftDiffusionSpec};
    use nalgebra::DMatrix;

    fn sample() -> TrajectoryEnsemble<f64> {
        let spec = DriftDiffusionSpec::new(2, 1.0, |x: &[f64], _t, o: &mut [f64]| {
            o[0] = -x[0];
            o[1] = -2.0 * x[1];
        })
        .unwrap();
        let init = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, -0.5, 2.0, 0.0]);
        simulate_ensemble(&spec, &init, 0.5, 1.5, 0.25, 11).unwrap()
    }

    #[test]
    fn binary_container_is_lossless() {
        let ens = sample();
        let mut buf = Vec::new();
        write_ensemble_binary(&ens, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 8 + ens.states.len() * 8);
        let back: TrajectoryEnsemble<f64> = read_ensemble_binary(buf.as_slice()).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(matches!(read_ensemble_binary::<f64, _>(&b"NOTMAGIC"[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        write_ensemble_binary(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_ensemble_binary::<f64, _>(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_layout() {
        let ens = sample();
        let mut buf = Vec::new();
        write_ensemble_csv(&ens, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "traj,t,x1,x2");
        assert_eq!(lines.next().unwrap(), "0,0.5,0,1");
        assert_eq!(text.lines().count(), 1 + 3 * 5);
    }
}
