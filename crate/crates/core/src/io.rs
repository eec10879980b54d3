//! File formats: CSV tables with a one-line metadata header, and the JSON
//! report with every real printed to 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::functional::{FieldPair, PlanarGrid};
use crate::model::{background, coupling_matrix, ModelParams};
use crate::planar::{BoundaryMode, PlanarSolution};
use crate::radial::{reconstruct_profiles, ProfileSet, RadialMesh, RadialSolution};
use crate::verify::VerificationReport;

/// Column header of radial solution files.
pub const RADIAL_HEADER: &str = "r,u1,u2,Q1,Q2,f,fNA,E1,E2";
/// Column header of profile files.
pub const PROFILE_HEADER: &str = "r,f,fNA,Q1,Q2";
/// Column header of planar solution files.
pub const PLANAR_HEADER: &str = "x,y,w1,w2,u1,u2";

/// Ordered `key=value` metadata of a CSV file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata(pub BTreeMap<String, String>);

impl Metadata {
    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_real(&mut self, key: &str, value: f64) -> &mut Self {
        self.0.insert(key.to_string(), real(value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn params(params: &ModelParams) -> Self {
        let mut m = Metadata::default();
        m.set("N", params.rank)
            .set_real("n1", params.n1)
            .set_real("n2", params.n2)
            .set_real("tau", params.tau)
            .set("theorem_mode", params.theorem_mode);
        m
    }

    fn line(&self) -> String {
        let pairs: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("# {}", pairs.join(" "))
    }

    fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix('#')?;
        let mut m = Metadata::default();
        for pair in body.split_whitespace() {
            let (k, v) = pair.split_once('=')?;
            m.0.insert(k.to_string(), v.to_string());
        }
        Some(m)
    }
}

/// A parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), msg: msg.into() }
}

/// Shortest text that parses back to the same `f64`, in exponent form for
/// very small or very large magnitudes.
pub fn real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Writes a table. Reals use the shortest round-trip formatting.
pub fn write_table(path: &Path, meta: &Metadata, header: &str, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = io::BufWriter::new(file);
    let write = || -> io::Result<()> {
        writeln!(out, "{}", meta.line())?;
        writeln!(out, "{header}")?;
        for row in rows {
            let cells: Vec<String> = row.iter().map(|&v| real(v)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        out.flush()
    };
    write().map_err(io_err(path))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let meta = lines
        .next()
        .and_then(Metadata::parse)
        .ok_or_else(|| parse_err(path, "first line must be '#' followed by key=value pairs"))?;
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| parse_err(path, "missing column header"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, format!("line {}: {e}", i + 3)))?;
        if row.len() != columns.len() {
            return Err(parse_err(path, format!("line {}: expected {} values", i + 3, columns.len())));
        }
        rows.push(row);
    }
    Ok(Table { meta, columns, rows })
}

fn radial_meta(sol: &RadialSolution) -> Metadata {
    let mut m = Metadata::params(&sol.params);
    m.set("kind", "radial")
        .set_real("r_min", sol.mesh.r_min())
        .set_real("r_max", sol.mesh.r_max())
        .set("nodes", sol.mesh.len())
        .set("iterations", sol.iterations)
        .set_real("residual", sol.residual);
    m
}

pub fn write_radial_csv(path: &Path, sol: &RadialSolution) -> Result<()> {
    let ps = reconstruct_profiles(sol)?;
    let r = sol.mesh.nodes();
    let rows = (0..r.len()).map(|i| {
        vec![r[i], sol.u1[i], sol.u2[i], ps.q1[i], ps.q2[i], ps.f[i], ps.f_na[i], sol.e1[i], sol.e2[i]]
    });
    write_table(path, &radial_meta(sol), RADIAL_HEADER, rows)
}

pub fn write_profile_csv(path: &Path, ps: &ProfileSet, extra: &Metadata) -> Result<()> {
    let mut m = extra.clone();
    m.set("kind", "profile").set("N", ps.rank).set("nodes", ps.mesh.len());
    let r = ps.mesh.nodes();
    let rows = (0..r.len()).map(|i| vec![r[i], ps.f[i], ps.f_na[i], ps.q1[i], ps.q2[i]]);
    write_table(path, &m, PROFILE_HEADER, rows)
}

pub fn write_planar_csv(path: &Path, sol: &PlanarSolution) -> Result<()> {
    let mut m = Metadata::params(&sol.params);
    m.set("kind", "planar")
        .set_real("box", sol.grid.half_width())
        .set("grid", sol.grid.points_per_side())
        .set("boundary", boundary_name(sol.boundary))
        .set("iterations", sol.iterations)
        .set_real("residual", sol.final_gradient_norm)
        .set_real("energy", sol.final_energy);
    let n = sol.grid.points_per_side();
    let rows = (0..sol.grid.node_count()).map(|k| {
        vec![
            sol.grid.coord(k % n),
            sol.grid.coord(k / n),
            sol.w.w1[k],
            sol.w.w2[k],
            sol.u1[k],
            sol.u2[k],
        ]
    });
    write_table(path, &m, PLANAR_HEADER, rows)
}

pub fn boundary_name(mode: BoundaryMode) -> &'static str {
    match mode {
        BoundaryMode::ZeroW => "zero-w",
        BoundaryMode::Vacuum => "vacuum",
    }
}

pub fn parse_boundary(s: &str) -> Option<BoundaryMode> {
    match s {
        "zero-w" => Some(BoundaryMode::ZeroW),
        "vacuum" => Some(BoundaryMode::Vacuum),
        _ => None,
    }
}

fn meta_value<T: std::str::FromStr>(path: &Path, meta: &Metadata, key: &str) -> Result<T> {
    meta.get(key)
        .ok_or_else(|| parse_err(path, format!("metadata lacks '{key}'")))?
        .parse()
        .map_err(|_| parse_err(path, format!("metadata '{key}' is malformed")))
}

fn params_from(path: &Path, meta: &Metadata) -> Result<ModelParams> {
    let p = ModelParams {
        rank: meta_value(path, meta, "N")?,
        n1: meta_value(path, meta, "n1")?,
        n2: meta_value(path, meta, "n2")?,
        tau: meta_value(path, meta, "tau")?,
        theorem_mode: meta_value(path, meta, "theorem_mode")?,
    };
    p.validate()?;
    Ok(p)
}

/// A solution read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredSolution {
    Radial(RadialSolution),
    Planar(PlanarSolution),
}

/// Reads a radial or planar solution file and rebuilds the derived fields.
pub fn read_solution(path: &Path) -> Result<StoredSolution> {
    let table = read_table(path)?;
    let meta = &table.meta;
    let params = params_from(path, meta)?;
    let cd = coupling_matrix(&params)?;
    let bg = background(&params)?;
    let col = |name: &str| table.column(name).ok_or_else(|| parse_err(path, format!("missing column '{name}'")));
    match meta.get("kind") {
        Some("radial") => {
            let r = col("r")?;
            let mesh = RadialMesh::from_nodes(r.clone())?;
            let (u1, u2, e1, e2) = (col("u1")?, col("u2")?, col("E1")?, col("E2")?);
            let p1 = r.iter().zip(&u1).map(|(&ri, &u)| u - bg.u0(0, ri * ri)).collect();
            let p2 = r.iter().zip(&u2).map(|(&ri, &u)| u - bg.u0(1, ri * ri)).collect();
            Ok(StoredSolution::Radial(RadialSolution {
                params,
                mesh,
                p1,
                p2,
                u1,
                u2,
                e1,
                e2,
                iterations: meta_value(path, meta, "iterations")?,
                residual: meta_value(path, meta, "residual")?,
            }))
        }
        Some("planar") => {
            let grid = PlanarGrid::new(meta_value(path, meta, "box")?, meta_value(path, meta, "grid")?)?;
            if table.rows.len() != grid.node_count() {
                return Err(parse_err(path, "row count does not match the grid"));
            }
            let boundary = meta
                .get("boundary")
                .and_then(parse_boundary)
                .ok_or_else(|| parse_err(path, "metadata 'boundary' is missing or malformed"))?;
            let w = FieldPair { w1: col("w1")?, w2: col("w2")? };
            let mut sol = PlanarSolution::from_fields(&params, &cd, &bg, &grid, boundary, w)?;
            sol.iterations = meta_value(path, meta, "iterations")?;
            Ok(StoredSolution::Planar(sol))
        }
        other => Err(parse_err(path, format!("unknown solution kind {other:?}"))),
    }
}

/// Pretty JSON with every `f64` in `{:.16e}` form, which parses back to the
/// same bits.
struct ExactFloats<'a> {
    pretty: PrettyFormatter<'a>,
}

impl Formatter for ExactFloats<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{value:.8e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}

/// Serializes any value with 17 significant digits per real.
pub fn to_exact_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let fmt = ExactFloats { pretty: PrettyFormatter::with_indent(b"  ") };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn report_to_json(report: &VerificationReport) -> String {
    to_exact_json(report)
}

pub fn report_from_json(text: &str) -> std::result::Result<VerificationReport, serde_json::Error> {
    serde_json::from_str(text)
}
