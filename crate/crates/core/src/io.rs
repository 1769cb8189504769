//! Stable on-disk formats: the binary field snapshot and the CSV report
//! schemas. Layouts are versioned through the magic string and documented
//! in FORMATS.md at the repository root.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::decay::DecayEntry;
use crate::error::{CoreError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::heat::KernelBoundReport;

/// Snapshot format magic, bumped when the layout changes.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"NEMFLD01";

/// Write a field snapshot: magic, grid metadata, component count, then
/// row-major physical-space samples as little-endian f64 (component-major).
pub fn write_field_snapshot(path: &Path, f: &SpectralField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(f.grid().n_dims() as u32).to_le_bytes())?;
    w.write_all(&(f.grid().points_per_dim() as u32).to_le_bytes())?;
    w.write_all(&f.grid().period().to_le_bytes())?;
    w.write_all(&(f.n_components() as u32).to_le_bytes())?;
    let phys = f.to_physical()?;
    for v in phys {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_snapshot(path: &Path) -> Result<SpectralField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(CoreError::SnapshotFormat(format!(
            "bad magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let n_dims = read_u32(&mut r)? as usize;
    let points = read_u32(&mut r)? as usize;
    let period = read_f64(&mut r)?;
    let n_components = read_u32(&mut r)? as usize;
    let grid = Grid::new(n_dims, points, period)
        .map_err(|e| CoreError::SnapshotFormat(format!("invalid grid in snapshot: {e}")))?;
    if n_components == 0 || n_components > 64 {
        return Err(CoreError::SnapshotFormat(format!(
            "implausible component count {n_components}"
        )));
    }
    let total = n_components * grid.total_points();
    let mut samples = Vec::with_capacity(total);
    for _ in 0..total {
        samples.push(read_f64(&mut r)?);
    }
    SpectralField::from_physical(grid, n_components, &samples)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Norm report rows in the documented column order `t,k,m,kind,value`.
pub fn write_norm_csv(w: &mut impl Write, entries: &[DecayEntry]) -> Result<()> {
    writeln!(w, "t,k,m,kind,value")?;
    for e in entries {
        for (t, v) in e.series.samples() {
            writeln!(w, "{},{},{},{},{}", t, e.k, e.m, e.kind.as_str(), v)?;
        }
    }
    Ok(())
}

pub fn write_norm_csv_file(path: &Path, entries: &[DecayEntry]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_norm_csv(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

/// Kernel verification rows: `variant,q,fitted_C,fitted_c,pass`.
pub fn write_kernel_csv(w: &mut impl Write, reports: &[KernelBoundReport]) -> Result<()> {
    writeln!(w, "variant,q,fitted_C,fitted_c,pass")?;
    for r in reports {
        for s in &r.per_shell {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.variant, s.q, s.fitted_c_big, s.fitted_c_small, r.pass
            )?;
        }
    }
    Ok(())
}

/// Trajectory paths: `seed,t,x0,x1[,x2]`.
pub fn write_trajectory_csv(
    w: &mut impl Write,
    traj: &crate::trajectory::TrajectorySet,
    n_dims: usize,
) -> Result<()> {
    if n_dims == 2 {
        writeln!(w, "seed,t,x0,x1")?;
    } else {
        writeln!(w, "seed,t,x0,x1,x2")?;
    }
    for (s, path) in traj.paths.iter().enumerate() {
        for (ti, x) in traj.times.iter().zip(path) {
            if n_dims == 2 {
                writeln!(w, "{},{},{},{}", s, ti, x[0], x[1])?;
            } else {
                writeln!(w, "{},{},{},{},{}", s, ti, x[0], x[1], x[2])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::cosine_mode_field;

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::new(2, 32, Grid::DEFAULT_PERIOD).unwrap();
        let f = cosine_mode_field(g, [3, 1, 0], 1.25);
        let dir = std::env::temp_dir().join("nematic-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.bin");
        write_field_snapshot(&path, &f).unwrap();
        let back = read_field_snapshot(&path).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.n_components(), 1);
        assert!(back.sub(&f).max_abs_coeff() < 1e-12);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn snapshot_rejects_bad_magic() {
        let dir = std::env::temp_dir().join("nematic-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.bin");
        std::fs::write(&path, b"NOTAFLD0rest").unwrap();
        assert!(matches!(
            read_field_snapshot(&path),
            Err(CoreError::SnapshotFormat(_))
        ));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn snapshot_bytes_are_deterministic() {
        let g = Grid::new(2, 32, Grid::DEFAULT_PERIOD).unwrap();
        let f = cosine_mode_field(g, [2, 2, 0], 0.5);
        let dir = std::env::temp_dir().join("nematic-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.bin");
        let p2 = dir.join("b.bin");
        write_field_snapshot(&p1, &f).unwrap();
        write_field_snapshot(&p2, &f).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).unwrap();
        std::fs::remove_file(&p2).unwrap();
    }
}
