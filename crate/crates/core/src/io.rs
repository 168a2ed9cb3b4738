//! Field snapshot formats.
//!
//! CSV: header `i,j[,k],value`, then one row per cell in row-major order
//! (last index fastest). Binary: the raw cell values as little-endian `f64`,
//! row-major, no header.

use std::io::{self, BufRead, Read, Write};

use crate::grid::SpaceTimeDomain;

pub fn write_slice_csv<W: Write>(domain: &SpaceTimeDomain, slice: &[f64], mut out: W) -> io::Result<()> {
    let axes = ["i", "j", "k"];
    writeln!(out, "{},value", axes[..domain.dim()].join(","))?;
    for (c, v) in slice.iter().enumerate() {
        let multi = domain.cell_multi_index(c);
        for a in multi.iter().take(domain.dim()) {
            write!(out, "{a},")?;
        }
        writeln!(out, "{v:e}")?;
    }
    Ok(())
}

pub fn read_slice_csv<R: BufRead>(domain: &SpaceTimeDomain, input: R) -> io::Result<Vec<f64>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut out = vec![f64::NAN; domain.cell_count()];
    for (lineno, line) in input.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != domain.dim() + 1 {
            return Err(bad(format!("line {}: expected {} columns", lineno + 1, domain.dim() + 1)));
        }
        let mut multi = [0usize; 3];
        for a in 0..domain.dim() {
            multi[a] = cols[a].parse().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
            if multi[a] >= domain.cells() {
                return Err(bad(format!("line {}: index out of range", lineno + 1)));
            }
        }
        let v: f64 = cols[domain.dim()].parse().map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        out[domain.cell_index(&multi[..domain.dim()])] = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(bad("missing cells in CSV snapshot".into()));
    }
    Ok(out)
}

pub fn write_f64_le<W: Write>(values: &[f64], mut out: W) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn read_f64_le<R: Read>(count: usize, mut input: R) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    input.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8"))).collect())
}

pub fn write_slice_binary<W: Write>(slice: &[f64], out: W) -> io::Result<()> {
    write_f64_le(slice, out)
}

pub fn read_slice_binary<R: Read>(domain: &SpaceTimeDomain, input: R) -> io::Result<Vec<f64>> {
    read_f64_le(domain.cell_count(), input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn csv_roundtrip_3d() {
        let d = SpaceTimeDomain::new(3, 1.0, 1.0, 4, Boundary::NoFlux).unwrap();
        let s = d.sample_cells(|x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let mut buf = Vec::new();
        write_slice_csv(&d, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,k,value\n0,0,0,"));
        assert_eq!(read_slice_csv(&d, buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn binary_is_little_endian_row_major() {
        let d = SpaceTimeDomain::new(2, 1.0, 1.0, 4, Boundary::NoFlux).unwrap();
        let s: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let mut buf = Vec::new();
        write_slice_binary(&s, &mut buf).unwrap();
        assert_eq!(buf.len(), 128);
        assert_eq!(&buf[8..16], &1.0f64.to_le_bytes());
        assert_eq!(read_slice_binary(&d, buf.as_slice()).unwrap(), s);
    }
}
