use nalgebra::{Vector2, Vector3};

use super::MpcError;
use crate::gait::NUM_LEGS;
use crate::scalar::Real;

/// `normal · p ≤ offset`, with `normal` the outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane<T: Real> {
    pub normal: Vector2<T>,
    pub offset: T,
}

impl<T: Real> HalfPlane<T> {
    /// Signed distance inside the half-plane (negative outside).
    pub fn depth(&self, p: &Vector2<T>) -> T {
        self.offset - self.normal.dot(p)
    }
}

/// Convex hull of the stance-foot ground projections with every edge moved
/// inwards by the safety margin.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPolygon<T: Real> {
    /// Hull vertices, counter-clockwise.
    pub vertices: Vec<Vector2<T>>,
    /// Inset edges in the same order as `vertices`.
    pub edges: Vec<HalfPlane<T>>,
    pub margin: T,
}

fn cross<T: Real>(o: &Vector2<T>, a: &Vector2<T>, b: &Vector2<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

impl<T: Real> SupportPolygon<T> {
    pub fn new(points: &[Vector2<T>], margin: T) -> Result<Self, MpcError> {
        let mut pts: Vec<Vector2<T>> = points.to_vec();
        pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
        let eps = T::lit(1e-9);
        let mut hull: Vec<Vector2<T>> = Vec::with_capacity(2 * pts.len());
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Vector2<T>>> =
                if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for p in iter {
                while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= eps {
                    hull.pop();
                }
                hull.push(*p);
            }
            hull.pop();
        }
        if hull.len() < 3 {
            return Err(MpcError::DegeneratePolygon);
        }
        let n = hull.len();
        let area2: T = (0..n).map(|i| cross(&Vector2::zeros(), &hull[i], &hull[(i + 1) % n])).sum();
        if area2 < T::lit(1e-8) {
            return Err(MpcError::DegeneratePolygon);
        }
        let edges = (0..n)
            .map(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % n];
                let t = b - a;
                let len = t.dot(&t).sqrt();
                let normal = Vector2::new(t.y / len, -t.x / len);
                HalfPlane { normal, offset: normal.dot(&a) - margin }
            })
            .collect();
        Ok(Self { vertices: hull, edges, margin })
    }

    /// Polygon of the stance feet.
    pub fn from_feet(feet: &[Vector3<T>; NUM_LEGS], stance: &[bool; NUM_LEGS], margin: T) -> Result<Self, MpcError> {
        let pts: Vec<Vector2<T>> = (0..NUM_LEGS).filter(|i| stance[*i]).map(|i| feet[i].xy()).collect();
        Self::new(&pts, margin)
    }

    /// Distance of `p` inside the inset polygon; negative when outside it.
    pub fn depth(&self, p: &Vector2<T>) -> T {
        self.edges.iter().map(|e| e.depth(p)).fold(T::infinity(), |m, d| m.min(d))
    }

    pub fn contains(&self, p: &Vector2<T>) -> bool {
        self.depth(p) >= T::zero()
    }

    /// Vertices of the inset polygon (may be meaningless if the margin
    /// exceeds the inradius).
    pub fn inset_vertices(&self) -> Vec<Vector2<T>> {
        let n = self.edges.len();
        (0..n)
            .map(|i| {
                let e0 = &self.edges[(i + n - 1) % n];
                let e1 = &self.edges[i];
                let det = e0.normal.x * e1.normal.y - e0.normal.y * e1.normal.x;
                Vector2::new(
                    (e0.offset * e1.normal.y - e0.normal.y * e1.offset) / det,
                    (e0.normal.x * e1.offset - e0.offset * e1.normal.x) / det,
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rect() -> Vec<Vector2<f64>> {
        vec![Vector2::new(0.2, 0.15), Vector2::new(-0.2, -0.15), Vector2::new(0.2, -0.15), Vector2::new(-0.2, 0.15)]
    }

    #[test]
    fn rectangle_inset() {
        let poly = SupportPolygon::new(&rect(), 0.04).unwrap();
        assert_eq!(poly.edges.len(), 4);
        let mut v = poly.inset_vertices();
        v.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
        let want = [(-0.16, -0.11), (-0.16, 0.11), (0.16, -0.11), (0.16, 0.11)];
        for (p, w) in v.iter().zip(want) {
            assert_relative_eq!(*p, Vector2::new(w.0, w.1), epsilon = 1e-12);
        }
    }

    #[test]
    fn vertices_are_counter_clockwise() {
        let poly = SupportPolygon::new(&rect(), 0.0).unwrap();
        let n = poly.vertices.len();
        for i in 0..n {
            assert!(cross(&poly.vertices[i], &poly.vertices[(i + 1) % n], &poly.vertices[(i + 2) % n]) > 0.0);
        }
    }

    #[test]
    fn triangle_has_three_edges() {
        let pts = [Vector2::new(0.2, 0.15), Vector2::new(0.2, -0.15), Vector2::new(-0.2, 0.15)];
        assert_eq!(SupportPolygon::new(&pts, 0.04).unwrap().edges.len(), 3);
    }

    #[test]
    fn collinear_feet_are_rejected() {
        let pts = [Vector2::new(0.0, 0.0), Vector2::new(0.1, 0.1), Vector2::new(0.3, 0.3)];
        assert_eq!(SupportPolygon::new(&pts, 0.0), Err(MpcError::DegeneratePolygon));
    }

    fn winding_number(poly: &[Vector2<f64>], p: &Vector2<f64>) -> i32 {
        let mut wn = 0;
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
            if a.y <= p.y {
                if b.y > p.y && side > 0.0 {
                    wn += 1;
                }
            } else if b.y <= p.y && side < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    proptest! {
        #[test]
        fn containment_agrees_with_winding_number(
            jitter in proptest::collection::vec(-0.05f64..0.05, 8),
            px in -0.4f64..0.4, py in -0.3f64..0.3,
        ) {
            let pts: Vec<Vector2<f64>> = rect().iter().enumerate()
                .map(|(i, p)| p + Vector2::new(jitter[2 * i], jitter[2 * i + 1]))
                .collect();
            let poly = SupportPolygon::new(&pts, 0.0).unwrap();
            let p = Vector2::new(px, py);
            let depth = poly.depth(&p);
            prop_assume!(depth.abs() > 1e-9);
            prop_assert_eq!(depth > 0.0, winding_number(&poly.vertices, &p) != 0);
        }
    }
}
