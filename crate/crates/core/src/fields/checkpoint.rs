//! Text checkpoints for [`Field3`] and [`PsiField`].
//!
//! ```text
//! droplet-checkpoint
//! version: 1
//! kind: field3            | psi
//! R: <outer radius>       | 1
//! n: <cells per axis>     | m: <cells per unit length>
//! h: <spacing>
//! ...kind-specific header keys...
//! columns: i j k u1 u2 u3 | i j psi
//! records: <count>
//! <one line per node>
//! ```
//!
//! Reals are written with 17 significant digits and read back exactly.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::geometry::Vec3;

use super::{BallGrid3, Branch, Field3, FieldError, GridSpec, HalfDiskMesh, NodeKind, PsiField};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "droplet-checkpoint";

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Field3(Field3),
    Psi(PsiField),
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_checkpoint<W: Write>(c: &Checkpoint, w: &mut W) -> Result<(), FieldError> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "version: {CHECKPOINT_VERSION}")?;
    match c {
        Checkpoint::Field3(f) => {
            let g = f.grid();
            let s = g.spec();
            writeln!(w, "kind: field3")?;
            writeln!(w, "R: {}", real(s.r_out))?;
            writeln!(w, "n: {}", s.n)?;
            writeln!(w, "h: {}", real(g.h()))?;
            writeln!(w, "center: {} {} {}", real(s.center.x1), real(s.center.x2), real(s.center.x3))?;
            writeln!(w, "half_width: {}", real(s.half_width))?;
            writeln!(w, "r_in: {}", real(s.r_in))?;
            match s.tangent_sphere {
                Some(r) => writeln!(w, "tangent: {}", real(r))?,
                None => writeln!(w, "tangent: none")?,
            }
            writeln!(w, "columns: i j k u1 u2 u3")?;
            writeln!(w, "records: {}", g.len())?;
            for p in 0..g.len() {
                let [i, j, k] = g.indices(p);
                let v = f.value(p);
                writeln!(w, "{i} {j} {k} {} {} {}", real(v.x1), real(v.x2), real(v.x3))?;
            }
        }
        Checkpoint::Psi(p) => {
            let mesh = p.mesh();
            writeln!(w, "kind: psi")?;
            writeln!(w, "R: {}", real(1.0))?;
            writeln!(w, "m: {}", mesh.m())?;
            writeln!(w, "pad: {}", real(mesh.pad()))?;
            writeln!(w, "h: {}", real(mesh.h()))?;
            writeln!(w, "bc: {}", p.bc().map_or("none", Branch::name))?;
            writeln!(w, "columns: i j psi")?;
            let present: Vec<usize> = (0..mesh.len())
                .filter(|&k| mesh.kind(k) != NodeKind::Absent)
                .collect();
            writeln!(w, "records: {}", present.len())?;
            for k in present {
                let (i, j) = mesh.ij(k);
                writeln!(w, "{i} {j} {}", real(p.values()[k]))?;
            }
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> FieldError {
    FieldError::Checkpoint(msg.into())
}

struct Header {
    lines: Vec<(String, String)>,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str, FieldError> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| bad(format!("missing header key `{key}`")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T, FieldError> {
        self.get(key)?
            .parse()
            .map_err(|_| bad(format!("header key `{key}` is not a number")))
    }
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Checkpoint, FieldError> {
    let mut lines = r.lines();
    let mut next = || -> Result<String, FieldError> {
        lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(FieldError::from)
    };
    if next()?.trim() != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut header = Header { lines: Vec::new() };
    loop {
        let line = next()?;
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        let done = k == "records";
        header.lines.push((k, v));
        if done {
            break;
        }
    }
    let version: u32 = header.num("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count: usize = header.num("records")?;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        rows.push(next()?);
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
    let parse_u = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad index `{s}`")));
    match header.get("kind")? {
        "field3" => {
            let c: Vec<f64> = header
                .get("center")?
                .split_whitespace()
                .map(parse_f)
                .collect::<Result<_, _>>()?;
            if c.len() != 3 {
                return Err(bad("center needs three values"));
            }
            let tangent = match header.get("tangent")? {
                "none" => None,
                t => Some(parse_f(t)?),
            };
            let spec = GridSpec {
                center: Vec3::new(c[0], c[1], c[2]),
                half_width: header.num("half_width")?,
                n: header.num("n")?,
                r_in: header.num("r_in")?,
                r_out: header.num("R")?,
                tangent_sphere: tangent,
            };
            let grid = Arc::new(BallGrid3::new(spec)?);
            if grid.len() != count {
                return Err(bad(format!("{count} records for a grid with {} nodes", grid.len())));
            }
            let mut values = vec![Vec3::ZERO; count];
            for row in &rows {
                let t: Vec<&str> = row.split_whitespace().collect();
                if t.len() != 6 {
                    return Err(bad(format!("malformed record `{row}`")));
                }
                let p = grid
                    .lookup(parse_u(t[0])? as i64, parse_u(t[1])? as i64, parse_u(t[2])? as i64)
                    .ok_or_else(|| bad(format!("record `{row}` is not a grid node")))?;
                values[p] = Vec3::new(parse_f(t[3])?, parse_f(t[4])?, parse_f(t[5])?);
            }
            Ok(Checkpoint::Field3(Field3::from_values(grid, values)?))
        }
        "psi" => {
            let mesh = Arc::new(HalfDiskMesh::with_padding(header.num("m")?, header.num("pad")?)?);
            let bc = match header.get("bc")? {
                "none" => None,
                b => Some(Branch::parse(b).ok_or_else(|| bad(format!("unknown branch `{b}`")))?),
            };
            let mut psi = vec![0.0; mesh.len()];
            let (ni, nj) = mesh.dims();
            for row in &rows {
                let t: Vec<&str> = row.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(bad(format!("malformed record `{row}`")));
                }
                let (i, j) = (parse_u(t[0])?, parse_u(t[1])?);
                if i >= ni || j >= nj {
                    return Err(bad(format!("record `{row}` is outside the mesh")));
                }
                psi[mesh.index(i, j)] = parse_f(t[2])?;
            }
            Ok(Checkpoint::Psi(PsiField::from_values(mesh, psi, bc)?))
        }
        k => Err(bad(format!("unknown kind `{k}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{field_from_closed_form, FnField};

    #[test]
    fn field3_round_trip_is_exact() {
        let grid = Arc::new(BallGrid3::new(GridSpec::ball(8, 1.0)).unwrap());
        let f = field_from_closed_form(
            &FnField(|x: Vec3| Vec3::new(x.x1 + 0.1, (3.0 * x.x2).sin(), 1.0).normalized(1e-12).unwrap()),
            grid,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&Checkpoint::Field3(f.clone()), &mut buf).unwrap();
        let Checkpoint::Field3(g) = read_checkpoint(&buf[..]).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(g.values(), f.values());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("droplet-checkpoint\nversion: 1\nkind: field3\n"));
    }

    #[test]
    fn psi_round_trip_is_exact() {
        let mesh = Arc::new(HalfDiskMesh::new(6).unwrap());
        let p = PsiField::from_fn(mesh, |r, z| (r * 7.0).sin() * z + 1e-17, Some(Branch::Minus)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&Checkpoint::Psi(p.clone()), &mut buf).unwrap();
        let Checkpoint::Psi(q) = read_checkpoint(&buf[..]).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(q.values(), p.values());
        assert_eq!(q.bc(), Some(Branch::Minus));
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_checkpoint(&b"hello\n"[..]).is_err());
        let text = "droplet-checkpoint\nversion: 1\nkind: psi\nR: 1\nm: 4\nh: 0.25\npad: 0\nbc: none\ncolumns: i j psi\nrecords: 2\n0 1 0.5\n";
        assert!(read_checkpoint(text.as_bytes()).is_err());
        let text = "droplet-checkpoint\nversion: 9\nrecords: 0\n";
        assert!(read_checkpoint(text.as_bytes()).is_err());
    }
}
