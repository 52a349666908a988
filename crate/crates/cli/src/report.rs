//! Geometry for reports: isosurfaces, slices and support statistics.

use std::collections::HashMap;

use crate::io::Volume;

/// Triangle soup with shared vertices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bbox(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (std::array::from_fn(|a| lo[a].min(v[a])), std::array::from_fn(|a| hi[a].max(v[a])))
        }))
    }
}

/// The six tetrahedra of a cell sharing the diagonal from corner 0 to 7.
/// Corner `c` sits at offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
const TETS: [[usize; 4]; 6] = [[0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7], [0, 6, 4, 7], [0, 4, 5, 7], [0, 5, 1, 7]];

/// Level set `{v = iso}` by marching tetrahedra. Vertices on shared edges
/// are merged.
pub fn isosurface(vol: &Volume, iso: f64) -> Mesh {
    let g = vol.grid;
    let [nx, ny, nz] = g.counts();
    let mut mesh = Mesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return mesh;
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertex = |a: usize, b: usize, mesh: &mut Mesh| -> usize {
        let key = (a.min(b), a.max(b));
        *edges.entry(key).or_insert_with(|| {
            let (va, vb) = (vol.values[key.0], vol.values[key.1]);
            let t = if va == vb { 0.5 } else { (iso - va) / (vb - va) };
            let (xa, xb) = (g.node_at(key.0), g.node_at(key.1));
            mesh.vertices.push(std::array::from_fn(|d| xa[d] + t * (xb[d] - xa[d])));
            mesh.vertices.len() - 1
        })
    };
    for l in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner: [usize; 8] = std::array::from_fn(|c| g.index(i + (c & 1), j + (c >> 1 & 1), l + (c >> 2 & 1)));
                for tet in TETS {
                    let p = tet.map(|c| corner[c]);
                    let (inside, outside): (Vec<usize>, Vec<usize>) = p.iter().partition(|&&q| vol.values[q] >= iso);
                    match inside.len() {
                        1 | 3 => {
                            let (apex, base) = if inside.len() == 1 { (inside[0], outside) } else { (outside[0], inside) };
                            let t = [0, 1, 2].map(|m| vertex(apex, base[m], &mut mesh));
                            mesh.triangles.push(t);
                        }
                        2 => {
                            let (a, b, c, d) = (inside[0], inside[1], outside[0], outside[1]);
                            let ac = vertex(a, c, &mut mesh);
                            let ad = vertex(a, d, &mut mesh);
                            let bc = vertex(b, c, &mut mesh);
                            let bd = vertex(b, d, &mut mesh);
                            mesh.triangles.push([ac, ad, bd]);
                            mesh.triangles.push([ac, bd, bc]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    mesh
}

/// An axis-aligned cut through a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    /// `"xy"`, `"xz"` or `"yz"`.
    pub plane: &'static str,
    /// Fixed coordinate of the cut.
    pub level: f64,
    pub axes: [Vec<f64>; 2],
    /// Row-major, the first axis fastest.
    pub values: Vec<f64>,
}

/// The three orthogonal slices through node `at`.
pub fn slices(vol: &Volume, at: [usize; 3]) -> [Slice; 3] {
    let g = vol.grid;
    let coords = |a: usize, n: usize| (0..n).map(|i| g.coord(a, i)).collect::<Vec<_>>();
    let cut = |plane, a: usize, b: usize, fixed: usize| {
        let counts = g.counts();
        let mut values = Vec::with_capacity(counts[a] * counts[b]);
        for s in 0..counts[b] {
            for r in 0..counts[a] {
                let mut idx = at;
                idx[a] = r;
                idx[b] = s;
                values.push(vol.values[g.index(idx[0], idx[1], idx[2])]);
            }
        }
        Slice { plane, level: g.coord(fixed, at[fixed]), axes: [coords(a, counts[a]), coords(b, counts[b])], values }
    };
    [cut("xy", 0, 1, 2), cut("xz", 0, 2, 1), cut("yz", 1, 2, 0)]
}

impl Slice {
    /// Gray levels from `lo` (black) to `hi` (white), the second axis pointing up.
    pub fn pixels(&self, lo: f64, hi: f64) -> (usize, usize, Vec<u8>) {
        let (w, h) = (self.axes[0].len(), self.axes[1].len());
        let span = hi - lo;
        let mut px = Vec::with_capacity(w * h);
        for s in (0..h).rev() {
            for r in 0..w {
                let v = self.values[r + w * s];
                let t = if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
                px.push((255.0 * t).round() as u8);
            }
        }
        (w, h, px)
    }
}

/// Index and value of the largest entry; the first one on ties.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    values.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
}

/// Mean position of the nodes with `c >= fraction * max c` and `c > 1`.
pub fn support_centroid(vol: &Volume, fraction: f64) -> Option<[f64; 3]> {
    let (_, max) = argmax(&vol.values);
    let level = fraction * max;
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for (p, &v) in vol.values.iter().enumerate() {
        if v >= level && v > 1.0 {
            let x = vol.grid.node_at(p);
            for a in 0..3 {
                sum[a] += x[a];
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

pub fn boxes_overlap(a: ([f64; 3], [f64; 3]), b: ([f64; 3], [f64; 3])) -> bool {
    (0..3).all(|d| a.0[d] <= b.1[d] && b.0[d] <= a.1[d])
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
