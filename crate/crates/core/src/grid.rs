use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle given by centre and half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: [f64; 2],
    pub halfwidths: [f64; 2],
}

impl Rect {
    pub fn new(center: [f64; 2], halfwidths: [f64; 2]) -> Result<Rect> {
        let r = Rect { center, halfwidths };
        r.validate()?;
        Ok(r)
    }

    pub fn square(cx: f64, cy: f64, half: f64) -> Rect {
        Rect {
            center: [cx, cy],
            halfwidths: [half, half],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().chain(&self.halfwidths).all(|v| v.is_finite());
        if !finite || self.halfwidths[0] <= 0.0 || self.halfwidths[1] <= 0.0 {
            return Err(Error::input(
                "omega",
                format!(
                    "degenerate rectangle with centre {:?} and half-widths {:?}",
                    self.center, self.halfwidths
                ),
            ));
        }
        Ok(())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.center[0] - self.halfwidths[0], self.center[0] + self.halfwidths[0])
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.center[1] - self.halfwidths[1], self.center[1] + self.halfwidths[1])
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.center[0]).abs() <= self.halfwidths[0] * (1.0 + 1e-12)
            && (y - self.center[1]).abs() <= self.halfwidths[1] * (1.0 + 1e-12)
    }

    /// `n` equispaced nodes per axis, endpoints included, x fastest.
    pub fn nodes(&self, n: usize) -> Vec<(f64, f64)> {
        let xs = linspace(self.x_range(), n);
        let ys = linspace(self.y_range(), n);
        let mut out = Vec::with_capacity(n * n);
        for &y in &ys {
            for &x in &xs {
                out.push((x, y));
            }
        }
        out
    }
}

/// `n` equispaced points on `[a, b]`; a single point sits at the midpoint.
pub fn linspace((a, b): (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                .collect()
        }
    }
}

/// Uniform symmetric axis `[-eps, eps]` with an odd node count so that 0 is a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub eps: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(eps: f64, n: usize) -> Result<Axis> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::input("n", format!("need an odd node count >= 3, got {n}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::input("eps", format!("need a positive half-width, got {eps}")));
        }
        Ok(Axis { eps, n })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.eps / (self.n - 1) as f64
    }

    pub fn mid(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Coordinate of node `i`; exact zero at the middle node.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.mid() as f64) * self.h()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Nearest node index to `v`, clamped into the axis.
    pub fn nearest(&self, v: f64) -> usize {
        let k = (v / self.h()).round() + self.mid() as f64;
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Index of `v` when it lies on a node (to within a small fraction of h).
    pub fn node_of(&self, v: f64) -> Option<usize> {
        let k = self.nearest(v);
        ((self.coord(k) - v).abs() <= 1e-9 * self.h()).then_some(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_has_exact_origin() {
        let a = Axis::new(0.5, 257).unwrap();
        assert_eq!(a.coord(a.mid()), 0.0);
        assert_eq!(a.node_of(0.25), Some(192));
        assert_eq!(a.node_of(0.2501), None);
        assert!(Axis::new(0.5, 64).is_err());
    }

    #[test]
    fn rect_nodes_order() {
        let r = Rect::square(0.0, 0.0, 1.0);
        let p = r.nodes(3);
        assert_eq!(p[1], (0.0, -1.0));
        assert_eq!(p[3], (-1.0, 0.0));
        assert!(Rect::new([0.0, 0.0], [0.0, 1.0]).is_err());
    }
}
