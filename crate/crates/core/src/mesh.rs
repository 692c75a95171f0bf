//! Triangle surfaces and the legacy-VTK / STL writers used for visualization.

use std::io::{self, Write};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn centroid(&self, i: usize) -> Point3<f64> {
        let [a, b, c] = self.triangle(i);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    pub fn normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vector3::zeros)
    }

    /// Appends `other`, re-indexing its triangles.
    pub fn append(&mut self, other: &TriMesh) {
        let offset = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
    }

    /// Keeps the triangles for which `keep(centroid)` holds and drops unused vertices.
    pub fn retain_by_centroid(&self, mut keep: impl FnMut(&Point3<f64>) -> bool) -> TriMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut out = TriMesh::default();
        for i in 0..self.triangles.len() {
            if !keep(&self.centroid(i)) {
                continue;
            }
            let mut tri = [0u32; 3];
            for (k, &v) in self.triangles[i].iter().enumerate() {
                if remap[v as usize] == u32::MAX {
                    remap[v as usize] = out.vertices.len() as u32;
                    out.vertices.push(self.vertices[v as usize]);
                }
                tri[k] = remap[v as usize];
            }
            out.triangles.push(tri);
        }
        out
    }

    pub fn write_stl<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = [0u8; 80];
        let tag = b"binary STL";
        header[..tag.len()].copy_from_slice(tag);
        w.write_all(&header)?;
        w.write_all(&(self.triangles.len() as u32).to_le_bytes())?;
        for i in 0..self.triangles.len() {
            let n = self.normal(i);
            for c in n.iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
            for v in self.triangle(i) {
                for c in v.coords.iter() {
                    w.write_all(&(*c as f32).to_le_bytes())?;
                }
            }
            w.write_all(&0u16.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_vtk<W: Write>(&self, w: W, title: &str) -> io::Result<()> {
        let polys: Vec<Vec<usize>> = self.triangles.iter().map(|t| t.iter().map(|&v| v as usize).collect()).collect();
        write_polydata(w, title, &self.vertices, Cells::Polygons(&polys), &[])
    }
}

/// Reads a binary STL written by [`TriMesh::write_stl`]. Vertices are not welded.
pub fn read_stl(bytes: &[u8]) -> io::Result<TriMesh> {
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "truncated STL");
    if bytes.len() < 84 {
        return Err(bad());
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() < 84 + 50 * n {
        return Err(bad());
    }
    let f = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let mut mesh = TriMesh::default();
    for i in 0..n {
        let base = 84 + 50 * i + 12;
        let start = mesh.vertices.len() as u32;
        for k in 0..3 {
            let o = base + 12 * k;
            mesh.vertices.push(Point3::new(f(o), f(o + 4), f(o + 8)));
        }
        mesh.triangles.push([start, start + 1, start + 2]);
    }
    Ok(mesh)
}

pub enum Cells<'a> {
    Lines(&'a [[usize; 2]]),
    Polygons(&'a [Vec<usize>]),
}

pub enum PointData<'a> {
    Vectors(&'a str, &'a [Vector3<f64>]),
    Scalars(&'a str, &'a [f64]),
}

/// Legacy-VTK ASCII POLYDATA writer.
pub fn write_polydata<W: Write>(
    mut w: W,
    title: &str,
    points: &[Point3<f64>],
    cells: Cells<'_>,
    data: &[PointData<'_>],
) -> io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET POLYDATA")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    match cells {
        Cells::Lines(lines) => {
            writeln!(w, "LINES {} {}", lines.len(), 3 * lines.len())?;
            for l in lines {
                writeln!(w, "2 {} {}", l[0], l[1])?;
            }
        }
        Cells::Polygons(polys) => {
            let size: usize = polys.iter().map(|p| p.len() + 1).sum();
            writeln!(w, "POLYGONS {} {}", polys.len(), size)?;
            for p in polys {
                write!(w, "{}", p.len())?;
                for v in p {
                    write!(w, " {v}")?;
                }
                writeln!(w)?;
            }
        }
    }
    if !data.is_empty() {
        writeln!(w, "POINT_DATA {}", points.len())?;
        for d in data {
            match d {
                PointData::Vectors(name, v) => {
                    writeln!(w, "VECTORS {name} double")?;
                    for x in v.iter() {
                        writeln!(w, "{} {} {}", x.x, x.y, x.z)?;
                    }
                }
                PointData::Scalars(name, s) => {
                    writeln!(w, "SCALARS {name} double 1")?;
                    writeln!(w, "LOOKUP_TABLE default")?;
                    for x in s.iter() {
                        writeln!(w, "{x}")?;
                    }
                }
            }
        }
    }
    Ok(())
}
