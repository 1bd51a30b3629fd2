//! Plain-text field snapshots.
//!
//! ```text
//! # cma-field v1
//! # m=2
//! # shape=ball radius=1 center=0,0,0,0
//! # n=17
//! # h=0.125
//! # boundary=dirichlet value=0 quad=0
//! x1,y1,x2,y2,value,class
//! -0.5,0,0,0,-0.75,interior
//! ```
//!
//! One row per node carrying a finite value, in node order. Coordinates are
//! written with full round-trip precision; rows are matched back to nodes by
//! rounding onto the grid.

use std::fmt::Write as _;
use std::sync::Arc;

use super::domain::{GridDomain, NodeClass, Shape, MAX_AXES};
use super::field::{Boundary, ScalarField};
use crate::error::{Error, Result};

pub const MAGIC: &str = "# cma-field v1";

pub fn to_csv(field: &ScalarField) -> String {
    let d = field.domain();
    let axes = d.axes();
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "# m={}", d.m()).unwrap();
    match d.shape() {
        Shape::Ball { center, radius } => {
            writeln!(out, "# shape=ball radius={radius} center={}", join(&center[..axes])).unwrap()
        }
        Shape::Box { center, half_width } => {
            writeln!(out, "# shape=box half_width={half_width} center={}", join(&center[..axes])).unwrap()
        }
        Shape::Torus { period } => writeln!(out, "# shape=torus period={period}").unwrap(),
    }
    writeln!(out, "# n={}", d.n()).unwrap();
    writeln!(out, "# h={}", d.h()).unwrap();
    match field.boundary() {
        Boundary::Nodal => writeln!(out, "# boundary=nodal").unwrap(),
        Boundary::Dirichlet { value, quad } => {
            writeln!(out, "# boundary=dirichlet value={value} quad={quad}").unwrap()
        }
    }
    let names = ["x1", "y1", "x2", "y2"];
    writeln!(out, "{},value,class", names[..axes].join(",")).unwrap();
    for i in 0..d.num_nodes() {
        let v = field.get(i);
        if !v.is_finite() {
            continue;
        }
        let p = d.coords(i);
        let class = match d.class(i) {
            NodeClass::Interior => "interior",
            NodeClass::BoundaryBand => "band",
            NodeClass::Exterior => "exterior",
        };
        writeln!(out, "{},{v},{class}", join(&p[..axes])).unwrap();
    }
    out
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn parse_f64(s: Option<&str>, what: &str) -> Result<f64> {
    s.ok_or_else(|| Error::Snapshot(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Snapshot(format!("bad {what}")))
}

fn parse_center(s: Option<&str>, axes: usize) -> Result<[f64; MAX_AXES]> {
    let mut c = [0.0; MAX_AXES];
    if let Some(s) = s {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != axes {
            return Err(Error::Snapshot("center has the wrong length".into()));
        }
        for (a, p) in parts.iter().enumerate() {
            c[a] = p.parse().map_err(|_| Error::Snapshot("bad center".into()))?;
        }
    }
    Ok(c)
}

/// Parses a snapshot back into a field on a freshly built domain.
pub fn from_csv(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(Error::Snapshot("missing magic line".into()));
    }
    let mut m = None;
    let mut n = None;
    let mut shape_line = None;
    let mut boundary = Boundary::Nodal;
    let mut rows = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let h = h.trim();
            if let Some(v) = h.strip_prefix("m=") {
                m = v.parse::<usize>().ok();
            } else if let Some(v) = h.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            } else if h.starts_with("shape=") {
                shape_line = Some(h.to_string());
            } else if h.starts_with("boundary=dirichlet") {
                boundary = Boundary::Dirichlet {
                    value: parse_f64(header_value(h, "value"), "boundary value")?,
                    quad: parse_f64(header_value(h, "quad"), "boundary quad")?,
                };
            }
            continue;
        }
        if line.starts_with('x') {
            continue;
        }
        rows.push(line);
    }
    let m = m.ok_or_else(|| Error::Snapshot("missing m".into()))?;
    let n = n.ok_or_else(|| Error::Snapshot("missing n".into()))?;
    let axes = 2 * m;
    let shape_line = shape_line.ok_or_else(|| Error::Snapshot("missing shape".into()))?;
    let shape = match header_value(&shape_line, "shape") {
        Some("ball") => Shape::Ball {
            center: parse_center(header_value(&shape_line, "center"), axes)?,
            radius: parse_f64(header_value(&shape_line, "radius"), "radius")?,
        },
        Some("box") => Shape::Box {
            center: parse_center(header_value(&shape_line, "center"), axes)?,
            half_width: parse_f64(header_value(&shape_line, "half_width"), "half_width")?,
        },
        Some("torus") => Shape::Torus { period: parse_f64(header_value(&shape_line, "period"), "period")? },
        _ => return Err(Error::Snapshot("unknown shape".into())),
    };
    let domain = Arc::new(GridDomain::new(m, n, shape)?);
    let lower = match domain.shape() {
        Shape::Torus { .. } => [0.0; MAX_AXES],
        _ => {
            let mut l = domain.center();
            let r = match domain.shape() {
                Shape::Ball { radius, .. } => *radius,
                Shape::Box { half_width, .. } => *half_width,
                Shape::Torus { .. } => unreachable!(),
            };
            for v in l.iter_mut().take(axes) {
                *v -= r;
            }
            l
        }
    };
    let mut values = vec![f64::NAN; domain.num_nodes()];
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() < axes + 1 {
            return Err(Error::Snapshot(format!("short row `{row}`")));
        }
        let mut idx = [0i64; MAX_AXES];
        for a in 0..axes {
            let x: f64 = cols[a].parse().map_err(|_| Error::Snapshot(format!("bad coordinate in `{row}`")))?;
            idx[a] = ((x - lower[a]) / domain.h()).round() as i64;
        }
        let node = domain
            .node_at(&idx)
            .ok_or_else(|| Error::Snapshot(format!("row off the grid: `{row}`")))?;
        values[node] = cols[axes].parse().map_err(|_| Error::Snapshot(format!("bad value in `{row}`")))?;
    }
    ScalarField::from_values(domain, values, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let d = Arc::new(GridDomain::ball(2, 7, 1.5).unwrap());
        let u = ScalarField::dirichlet_from_fn(d, Boundary::ZERO, |x| (x[0] + 0.3 * x[3]).sin() / 3.0);
        let text = to_csv(&u);
        let back = from_csv(&text).unwrap();
        assert_eq!(back.boundary(), u.boundary());
        for (a, b) in u.values().iter().zip(back.values()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_csv("hello").is_err());
        assert!(from_csv("# cma-field v1\n# m=1\n").is_err());
    }
}
