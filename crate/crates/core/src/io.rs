//! CSV for grid functions and discrete measures. Fields are written as
//! `x[,y],value` rows in node order with 17 significant digits.

use std::io::{Read, Write};

use crate::adjoint::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::grid::{GridFunction, TorusGrid};
use crate::scalar::Real;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

pub fn write_field<T: Real, W: Write>(out: W, field: &GridFunction<T>) -> Result<()> {
    let g = field.grid();
    let mut w = csv::Writer::from_writer(out);
    let mut header = coord_header(g.dim());
    header.push("value");
    w.write_record(&header)?;
    for i in 0..g.len() {
        let p = g.point::<f64>(i);
        let mut row: Vec<String> = p[..g.dim()].iter().map(|c| fmt(*c)).collect();
        row.push(fmt(field[i].as_f64()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field`]. Coordinates must match the
/// nodes of `grid` in order.
pub fn read_field<T: Real, R: Read>(input: R, grid: TorusGrid) -> Result<GridFunction<T>> {
    let mut r = csv::Reader::from_reader(input);
    let d = grid.dim();
    let h = grid.spacing::<f64>();
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(Error::InvalidField(format!("row {i}: expected {} columns, found {}", d + 1, rec.len())));
        }
        if i >= grid.len() {
            return Err(Error::InvalidField(format!("more than {} rows", grid.len())));
        }
        let nums = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidField(format!("row {i}: {e}")))?;
        let p = grid.point::<f64>(i);
        if (0..d).any(|a| (nums[a] - p[a]).abs() > 1e-6 * h) {
            return Err(Error::InvalidField(format!("row {i}: coordinates do not match node {i}")));
        }
        values.push(T::lit(nums[d]));
    }
    if values.len() != grid.len() {
        return Err(Error::InvalidField(format!("expected {} rows, found {}", grid.len(), values.len())));
    }
    GridFunction::new(grid, values)
}

/// Cells with positive mass as `x[,y],v[,w],mass`.
pub fn write_measure<T: Real, W: Write>(out: W, mu: &DiscreteMeasure<T>) -> Result<()> {
    let d = mu.grid().dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = coord_header(d);
    header.extend(if d == 1 { vec!["v"] } else { vec!["v", "w"] });
    header.push("mass");
    w.write_record(&header)?;
    for (i, j, m) in mu.cells() {
        let p = mu.grid().point::<f64>(i);
        let v = mu.vgrid().velocity(j);
        let mut row: Vec<String> = p[..d].iter().map(|c| fmt(*c)).collect();
        row.extend(v[..d].iter().map(|c| fmt(c.as_f64())));
        row.push(fmt(m.as_f64()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;

    #[test]
    fn field_round_trip() {
        for g in [TorusGrid::line(16).unwrap(), TorusGrid::square(8).unwrap()] {
            let f = GridFunction::from_fn(g, |x: &[f64]| (7.0 * x[0]).sin() + x[x.len() - 1] / 3.0);
            let mut buf = Vec::new();
            write_field(&mut buf, &f).unwrap();
            let back: GridFunction<f64> = read_field(buf.as_slice(), g).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn rejects_mismatched_rows() {
        let g = TorusGrid::line(8).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &GridFunction::<f64>::zeros(g)).unwrap();
        assert!(read_field::<f64, _>(buf.as_slice(), TorusGrid::line(16).unwrap()).is_err());
        assert!(read_field::<f64, _>("x,value\n0.5,1\n".as_bytes(), g).is_err());
    }

    #[test]
    fn measure_rows() {
        let g = TorusGrid::line(8).unwrap();
        let vg = VelocityGrid::new(1, 1.0, 3).unwrap();
        let mu = DiscreteMeasure::point_mass(g, vg, 4, 2);
        let mut buf = Vec::new();
        write_measure(&mut buf, &mu).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 2);
        assert!(s.starts_with("x,v,mass\n5.0000000000000000e-1,1.0000000000000000e0,1.0000000000000000e0"));
    }
}
