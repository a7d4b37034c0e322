//! Domain geometry: solid walls and obstacles, open exits, and the signed
//! distance field rasterized onto grid nodes for boundary conditions.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::linalg::V2;

/// Solid primitive, in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Wall {
    Rect { min: [f64; 2], max: [f64; 2] },
    Circle { center: [f64; 2], radius: f64 },
}

impl Wall {
    /// Signed distance, negative inside the solid.
    pub fn sdf(&self, p: V2<f64>) -> f64 {
        match *self {
            Wall::Rect { min, max } => {
                let c = V2::new(0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1]));
                let h = V2::new(0.5 * (max[0] - min[0]), 0.5 * (max[1] - min[1]));
                let qx = (p.x - c.x).abs() - h.x;
                let qy = (p.y - c.y).abs() - h.y;
                let outside = V2::new(qx.max(0.0), qy.max(0.0)).norm();
                outside + qx.max(qy).min(0.0)
            }
            Wall::Circle { center, radius } => V2::new(p.x - center[0], p.y - center[1]).norm() - radius,
        }
    }
}

/// An opening: a segment on the domain boundary or on a wall face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Exit {
    /// Segment parameter of the projection of `p`, and distance to the
    /// segment's supporting line.
    fn project(&self, p: V2<f64>) -> (f64, f64) {
        let a = V2::new(self.a[0], self.a[1]);
        let d = V2::new(self.b[0] - self.a[0], self.b[1] - self.a[1]);
        let len2 = d.norm2();
        if len2 == 0.0 {
            return (0.0, (p - a).norm());
        }
        let t = (p - a).dot(d) / len2;
        let foot = a + d.scale(t);
        (t, (p - foot).norm())
    }

    /// Whether `p` lies in the band of half-width `band` swept across the
    /// opening.
    pub fn contains(&self, p: V2<f64>, band: f64) -> bool {
        let (t, dist) = self.project(p);
        (0.0..=1.0).contains(&t) && dist <= band
    }

    pub fn length(&self) -> f64 {
        V2::new(self.b[0] - self.a[0], self.b[1] - self.a[1]).norm()
    }

    pub fn midpoint(&self) -> V2<f64> {
        V2::new(0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1]))
    }
}

/// The simulated rectangle `[0, width] × [0, height]` bounded by walls,
/// plus interior obstacles and exits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub walls: Vec<Wall>,
    #[serde(default)]
    pub exits: Vec<Exit>,
}

impl Geometry {
    pub fn open_box(width: f64, height: f64) -> Self {
        Geometry { width, height, walls: Vec::new(), exits: Vec::new() }
    }

    pub fn contains(&self, p: V2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    /// Distance to the nearest solid, negative inside solids and outside
    /// the domain rectangle.
    pub fn sdf(&self, p: V2<f64>) -> f64 {
        let dom = p.x.min(self.width - p.x).min(p.y).min(self.height - p.y);
        self.walls.iter().fold(dom, |d, w| d.min(w.sdf(p)))
    }

    pub fn in_exit(&self, p: V2<f64>, band: f64) -> bool {
        self.exits.iter().any(|e| e.contains(p, band))
    }

    /// Whether a particle at `p` has left through an exit.
    pub fn has_exited(&self, p: V2<f64>, band: f64) -> bool {
        if self.exits.is_empty() {
            return false;
        }
        let outside_domain = !self.contains(p);
        let inside_wall = self.walls.iter().any(|w| w.sdf(p) < 0.0);
        (outside_domain || inside_wall) && self.in_exit(p, band)
    }
}

/// Per-node boundary data: nodes inside or within one cell of a solid get
/// a unit normal (the SDF gradient), unless they sit in an exit band.
#[derive(Clone, Debug)]
pub struct BoundaryField {
    pub spec: GridSpec,
    pub sdf: Vec<f64>,
    /// `Some(n)` where the projection applies.
    pub normals: Vec<Option<V2<f64>>>,
    pub open: Vec<bool>,
    pub degenerate: usize,
}

/// Half-width of the open band around an exit, in cells.
pub const EXIT_BAND_CELLS: f64 = 2.5;

impl BoundaryField {
    pub fn rasterize(geom: &Geometry, spec: GridSpec) -> Self {
        let n = spec.len();
        let mut sdf = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut open = Vec::with_capacity(n);
        let mut degenerate = 0;
        let band = EXIT_BAND_CELLS * spec.dx;
        let h = 1e-4 * spec.dx;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let p = spec.node_pos(i, j);
                let d = geom.sdf(p);
                let is_open = geom.in_exit(p, band);
                sdf.push(d);
                open.push(is_open);
                if d > spec.dx || is_open {
                    normals.push(None);
                    continue;
                }
                let g = V2::new(
                    geom.sdf(p + V2::new(h, 0.0)) - geom.sdf(p - V2::new(h, 0.0)),
                    geom.sdf(p + V2::new(0.0, h)) - geom.sdf(p - V2::new(0.0, h)),
                )
                .scale(0.5 / h);
                let len = g.norm();
                if len < 1e-6 {
                    log::warn!("degenerate boundary normal at node ({i}, {j}); skipping");
                    degenerate += 1;
                    normals.push(None);
                } else {
                    normals.push(Some(g.scale(1.0 / len)));
                }
            }
        }
        BoundaryField { spec, sdf, normals, open, degenerate }
    }

    /// A field with no solid nodes at all (free space).
    pub fn free(spec: GridSpec) -> Self {
        let n = spec.len();
        BoundaryField { spec, sdf: vec![f64::INFINITY; n], normals: vec![None; n], open: vec![false; n], degenerate: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_sdfs() {
        let r = Wall::Rect { min: [0.0, 0.0], max: [2.0, 4.0] };
        assert_eq!(r.sdf(V2::new(1.0, 2.0)), -1.0);
        assert_eq!(r.sdf(V2::new(5.0, 2.0)), 3.0);
        assert!((r.sdf(V2::new(5.0, 8.0)) - 5.0).abs() < 1e-12);
        let c = Wall::Circle { center: [1.0, 1.0], radius: 2.0 };
        assert_eq!(c.sdf(V2::new(1.0, 1.0)), -2.0);
        assert_eq!(c.sdf(V2::new(4.0, 1.0)), 1.0);
    }

    #[test]
    fn boundary_normals_point_into_the_domain() {
        let g = Geometry::open_box(40.0, 20.0);
        let spec = GridSpec::covering(40.0, 20.0, 2.0).unwrap();
        let b = BoundaryField::rasterize(&g, spec);
        // Node at (1, 10): one cell from the left wall.
        let i = 3;
        let j = 7;
        let p = spec.node_pos(i, j);
        assert_eq!((p.x, p.y), (2.0, 10.0));
        let n = b.normals[spec.index(i, j)].unwrap();
        assert!((n.x - 1.0).abs() < 1e-9 && n.y.abs() < 1e-9);
        // Deep interior nodes are untouched.
        assert!(b.normals[spec.index(10, 7)].is_none());
    }

    #[test]
    fn exits_open_the_wall() {
        let mut g = Geometry::open_box(40.0, 20.0);
        g.exits.push(Exit { a: [40.0, 8.0], b: [40.0, 12.0] });
        let spec = GridSpec::covering(40.0, 20.0, 2.0).unwrap();
        let b = BoundaryField::rasterize(&g, spec);
        let k = spec.index(22, 7); // x = 40, y = 10
        assert!(b.open[k] && b.normals[k].is_none());
        let k = spec.index(22, 2); // x = 40, y = 0: wall corner, not in the opening
        assert!(!b.open[k] && b.normals[k].is_some());
        assert!(g.has_exited(V2::new(41.0, 10.0), 5.0));
        assert!(!g.has_exited(V2::new(41.0, 2.0), 5.0));
        assert!(!g.has_exited(V2::new(39.0, 10.0), 5.0));
    }
}
