//! CSV formats: observations, point sets, predictions and per-vertex values.
//!
//! Headers are required on input. Numbers are written with 17 significant
//! digits.

use crate::error::{Error, Result};
use crate::inference::{Observations, Prediction};
use crate::mesh::Point;

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::parse(line, e.to_string())
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<f64>)>,
}

impl Table {
    fn read(text: &str) -> Result<Self> {
        let mut rdr = reader(text);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        if header.iter().all(|h| h.is_empty()) {
            return Err(Error::parse(1, "missing header"));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let vals = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("'{f}' is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push((line, vals));
        }
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| Error::parse(1, format!("missing column '{name}'")))
    }

    fn points(&self) -> Result<Vec<Point>> {
        let x = self.require("x")?;
        let (y, z) = (self.column("y"), self.column("z"));
        Ok(self
            .rows
            .iter()
            .map(|(_, r)| [r[x], y.map_or(0.0, |c| r[c]), z.map_or(0.0, |c| r[c])])
            .collect())
    }
}

/// Observations with columns `x[,y[,z]],value[,noise_precision]`; rows
/// without a noise column use `default_noise_precision`.
pub fn read_observations(text: &str, default_noise_precision: f64) -> Result<Observations> {
    let t = Table::read(text)?;
    let v = t.require("value")?;
    let noise = t.column("noise_precision");
    let locations = t.points()?;
    let values = t.rows.iter().map(|(_, r)| r[v]).collect();
    let noise_precision = t
        .rows
        .iter()
        .map(|(_, r)| noise.map_or(default_noise_precision, |c| r[c]))
        .collect();
    Observations::new(locations, values, noise_precision)
}

/// Point coordinates with columns `x[,y[,z]]`; other columns are ignored.
pub fn read_points(text: &str) -> Result<Vec<Point>> {
    let t = Table::read(text)?;
    for (line, r) in &t.rows {
        if let Some(bad) = r.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(*line, format!("non-finite coordinate {bad}")));
        }
    }
    t.points()
}

/// Per-vertex values with columns `vertex,value`, in any row order.
pub fn read_vertex_values(text: &str, n: usize) -> Result<Vec<f64>> {
    let t = Table::read(text)?;
    let (vi, vv) = (t.require("vertex")?, t.require("value")?);
    let mut out = vec![f64::NAN; n];
    for (line, r) in &t.rows {
        let i = r[vi];
        if i.fract() != 0.0 || i < 0.0 || i as usize >= n {
            return Err(Error::parse(
                *line,
                format!("vertex index {i} out of range"),
            ));
        }
        out[i as usize] = r[vv];
    }
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        return Err(Error::parse(0, format!("no value for vertex {i}")));
    }
    Ok(out)
}

fn coord_header(dim: usize) -> &'static str {
    ["x", "x,y", "x,y,z"][dim.clamp(1, 3) - 1]
}

fn coords(p: &Point, dim: usize) -> String {
    p[..dim.clamp(1, 3)]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// `vertex,value` lines.
pub fn write_vertex_values(values: &[f64]) -> String {
    let mut out = String::from("vertex,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v:.16e}\n"));
    }
    out
}

/// Several named per-vertex columns, e.g. posterior mean and sd.
pub fn write_vertex_table(names: &[&str], columns: &[&[f64]]) -> String {
    let mut out = format!("vertex,{}\n", names.join(","));
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let vals: Vec<String> = columns.iter().map(|c| format!("{:.16e}", c[i])).collect();
        out.push_str(&format!("{i},{}\n", vals.join(",")));
    }
    out
}

/// Predictions as `coords,mean,sd,exterior`; exterior rows carry `NaN`.
pub fn write_predictions(points: &[Point], pred: &Prediction, dim: usize) -> String {
    let mut out = format!("{},mean,sd,exterior\n", coord_header(dim));
    for (i, p) in points.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{}\n",
            coords(p, dim),
            pred.mean[i],
            pred.sd[i],
            u8::from(pred.exterior[i])
        ));
    }
    out
}

pub fn write_points(points: &[Point], dim: usize) -> String {
    let mut out = format!("{}\n", coord_header(dim));
    for p in points {
        out.push_str(&coords(p, dim));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_with_and_without_noise_column() {
        let o = read_observations("x,y,value\n0.1,0.2,3.5\n0.5, 0.5 ,-1\n", 4.0).unwrap();
        assert_eq!(o.locations, vec![[0.1, 0.2, 0.0], [0.5, 0.5, 0.0]]);
        assert_eq!(o.values, vec![3.5, -1.0]);
        assert_eq!(o.noise_precision, vec![4.0, 4.0]);
        let o = read_observations("value,noise_precision,x\n1,2,0.3\n", 1.0).unwrap();
        assert_eq!(o.locations, vec![[0.3, 0.0, 0.0]]);
        assert_eq!(o.noise_precision, vec![2.0]);
    }

    #[test]
    fn malformed_inputs_report_lines() {
        assert!(matches!(
            read_observations("x,y\n1,2\n", 1.0),
            Err(Error::Parse { .. })
        ));
        match read_observations("x,y,value\n1,2,3\n1,zz,3\n", 1.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_observations("x,y,value\n1,2,3,4\n", 1.0).is_err());
        assert!(read_observations("x,value,noise_precision\n1,2,0\n", 1.0).is_err());
    }

    #[test]
    fn vertex_values_round_trip() {
        let v = vec![1.5, -2.0, 1e-300, 3.0f64.sqrt()];
        let text = write_vertex_values(&v);
        assert_eq!(read_vertex_values(&text, 4).unwrap(), v);
        assert!(read_vertex_values(&text, 5).is_err());
        assert!(read_vertex_values("vertex,value\n7,1\n", 3).is_err());
    }

    #[test]
    fn points_round_trip() {
        let p = vec![[0.1, 0.7, 0.0], [1.0 / 3.0, 2.0, 0.0]];
        assert_eq!(read_points(&write_points(&p, 2)).unwrap(), p);
        let q = vec![[0.6, 0.0, 0.8]];
        assert_eq!(read_points(&write_points(&q, 3)).unwrap(), q);
    }

    #[test]
    fn prediction_format() {
        let pred = Prediction {
            mean: vec![0.5, f64::NAN],
            sd: vec![0.25, f64::NAN],
            exterior: vec![false, true],
        };
        let text = write_predictions(&[[0.0, 1.0, 0.0], [9.0, 9.0, 0.0]], &pred, 2);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,mean,sd,exterior");
        assert_eq!(lines[1], "0.0000000000000000e0,1.0000000000000000e0,5.0000000000000000e-1,2.5000000000000000e-1,0");
        assert!(lines[2].ends_with("NaN,NaN,1"));
    }
}
