//! Hexagonal cell-cluster geometry: layout construction, uniform UE
//! sampling over the cluster, and exact distance differences.
//!
//! Cells are the Voronoi regions of the triangular base-station lattice
//! with spacing `d_cell`, i.e. regular hexagons of apothem `d_cell / 2`
//! whose flat sides face the six ring neighbors.

use std::ops::{Add, Mul, Sub};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2D point or vector in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2<F> {
    pub x: F,
    pub y: F,
}

impl<F: Scalar> Point2<F> {
    pub fn new(x: F, y: F) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(F::zero(), F::zero())
    }

    pub fn norm(self) -> F {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn dist(self, other: Self) -> F {
        (self - other).norm()
    }

    pub fn dot(self, other: Self) -> F {
        self.x * other.x + self.y * other.y
    }
}

impl<F: Scalar> Add for Point2<F> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<F: Scalar> Sub for Point2<F> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<F: Scalar> Mul<F> for Point2<F> {
    type Output = Self;
    fn mul(self, rhs: F) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

pub const MIN_BS: usize = 4;
pub const MAX_BS: usize = 7;

/// The six ring directions of the triangular lattice, in 60° steps
/// starting from the positive x axis.
fn ring_directions<F: Scalar>() -> [Point2<F>; 6] {
    let one = F::one();
    let half = F::from(0.5).unwrap();
    let rt3h = F::from(3.0).unwrap().sqrt() * half;
    [
        Point2::new(one, F::zero()),
        Point2::new(half, rt3h),
        Point2::new(-half, rt3h),
        Point2::new(-one, F::zero()),
        Point2::new(-half, -rt3h),
        Point2::new(half, -rt3h),
    ]
}

/// Base-station layout: the serving BS at the origin plus the first
/// `n_bs - 1` ring neighbors at distance `d_cell`, in angle order
/// 0°, 60°, 120°, ...
#[derive(Clone, Debug)]
pub struct BsLayout<F> {
    d_cell: F,
    positions: Vec<Point2<F>>,
}

impl<F: Scalar> BsLayout<F> {
    pub fn new(d_cell: F, n_bs: usize) -> Result<Self> {
        if !(d_cell > F::zero() && d_cell.is_finite()) {
            return Err(Error::domain(format!(
                "inter-site distance must be positive and finite, got {d_cell}"
            )));
        }
        if !(MIN_BS..=MAX_BS).contains(&n_bs) {
            return Err(Error::domain(format!(
                "BS count must be in {MIN_BS}..={MAX_BS}, got {n_bs}"
            )));
        }
        let mut positions = Vec::with_capacity(n_bs);
        positions.push(Point2::zero());
        for dir in ring_directions().iter().take(n_bs - 1) {
            positions.push(*dir * d_cell);
        }
        Ok(Self { d_cell, positions })
    }

    pub fn d_cell(&self) -> F {
        self.d_cell
    }

    pub fn n_bs(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[Point2<F>] {
        &self.positions
    }

    /// The serving (reference) BS.
    pub fn serving(&self) -> Point2<F> {
        self.positions[0]
    }

    /// h_i(p): distance to neighbor `i` minus distance to the serving BS.
    /// Neighbor indices start at 1.
    pub fn distance_diff(&self, p: Point2<F>, i: usize) -> Result<F> {
        if i == 0 || i >= self.positions.len() {
            return Err(Error::domain(format!(
                "neighbor index must be in 1..{}, got {i}",
                self.positions.len()
            )));
        }
        Ok(p.dist(self.positions[i]) - p.dist(self.positions[0]))
    }

    /// True when `p` lies in the hexagonal cell of one of the layout's BSs,
    /// i.e. the nearest BS of the extended lattice is part of the layout.
    pub fn contains(&self, p: Point2<F>) -> bool {
        self.positions
            .iter()
            .any(|&c| hex_contains(c, self.d_cell, p))
    }

    /// Uniform draw over the union of the layout's hexagonal cells:
    /// pick a cell uniformly, then rejection-sample its hexagon from the
    /// bounding box. Cells tile the plane, so the union density is exact.
    pub fn sample_ue<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2<F> {
        let cell = rng.gen_range(0..self.positions.len());
        let center = self.positions[cell];
        let half = self.d_cell * F::from(0.5).unwrap();
        // circumradius d_cell / sqrt(3); vertices sit at 30°, 90°, ...
        let ry = self.d_cell / F::from(3.0).unwrap().sqrt();
        loop {
            let dx = rng.gen_range(-half..half);
            let dy = rng.gen_range(-ry..ry);
            let p = Point2::new(center.x + dx, center.y + dy);
            if hex_contains(center, self.d_cell, p) {
                return p;
            }
        }
    }
}

/// Voronoi membership of `p` in the hexagon of `center`: `p` is at least
/// as close to `center` as to each of its six lattice neighbors, which
/// reduces to a half-plane test per ring direction.
pub fn hex_contains<F: Scalar>(center: Point2<F>, d_cell: F, p: Point2<F>) -> bool {
    let v = p - center;
    let half = d_cell * F::from(0.5).unwrap();
    ring_directions().iter().all(|&u| v.dot(u) <= half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, SeedDomain};
    use approx::assert_relative_eq;

    #[test]
    fn layout_places_neighbors_on_the_ring() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        assert_eq!(layout.n_bs(), 7);
        assert_eq!(layout.serving(), Point2::new(0.0, 0.0));
        assert_eq!(layout.positions()[1], Point2::new(500.0, 0.0));
        // 500 * (cos 60°, sin 60°)
        assert_relative_eq!(layout.positions()[2].x, 250.0, max_relative = 1e-15);
        assert_relative_eq!(
            layout.positions()[2].y,
            433.0127018922193,
            max_relative = 1e-15
        );
        for i in 1..7 {
            assert_relative_eq!(layout.positions()[i].norm(), 500.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn reduced_layout_keeps_leading_neighbors() {
        let layout = BsLayout::<f64>::new(1000.0, 4).unwrap();
        assert_eq!(layout.positions().len(), 4);
        // 1000 * (cos 120°, sin 120°)
        assert_relative_eq!(layout.positions()[3].x, -500.0, max_relative = 1e-12);
        assert_relative_eq!(
            layout.positions()[3].y,
            866.0254037844386,
            max_relative = 1e-15
        );
    }

    #[test]
    fn invalid_layout_arguments_are_rejected() {
        assert!(matches!(
            BsLayout::<f64>::new(0.0, 7),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            BsLayout::<f64>::new(-1.0, 7),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            BsLayout::<f64>::new(500.0, 3),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            BsLayout::<f64>::new(500.0, 8),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn distance_diff_at_the_serving_bs_is_d_cell() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        for i in 1..7 {
            let h = layout.distance_diff(Point2::zero(), i).unwrap();
            assert_relative_eq!(h, 500.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn distance_diff_vanishes_on_the_bisector() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let mid = Point2::new(250.0, 0.0);
        assert_eq!(layout.distance_diff(mid, 1).unwrap(), 0.0);
    }

    #[test]
    fn distance_diff_matches_direct_norm_arithmetic() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let p = Point2::new(100.0, 50.0);
        // independent two-norm evaluation of ||p - p_2|| - ||p - p_0||
        let p2 = (250.0f64, 433.0127018922193f64);
        let expected = ((100.0 - p2.0).powi(2) + (50.0 - p2.1).powi(2)).sqrt()
            - (100.0f64.powi(2) + 50.0f64.powi(2)).sqrt();
        assert_relative_eq!(
            layout.distance_diff(p, 2).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn distance_diff_rejects_bad_indices() {
        let layout = BsLayout::<f64>::new(500.0, 5).unwrap();
        assert!(layout.distance_diff(Point2::zero(), 0).is_err());
        assert!(layout.distance_diff(Point2::zero(), 5).is_err());
    }

    #[test]
    fn sampled_points_stay_in_their_cells() {
        for &n_bs in &[4, 7] {
            let layout = BsLayout::<f64>::new(500.0, n_bs).unwrap();
            let mut rng = derive_rng(11, SeedDomain::DatasetSample, 0);
            for _ in 0..2000 {
                let p = layout.sample_ue(&mut rng);
                assert!(layout.contains(p));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_given_the_seed() {
        let layout = BsLayout::<f64>::new(750.0, 7).unwrap();
        let mut a = derive_rng(42, SeedDomain::DatasetSample, 9);
        let mut b = derive_rng(42, SeedDomain::DatasetSample, 9);
        for _ in 0..100 {
            let pa = layout.sample_ue(&mut a);
            let pb = layout.sample_ue(&mut b);
            assert_eq!(pa.x.to_bits(), pb.x.to_bits());
            assert_eq!(pa.y.to_bits(), pb.y.to_bits());
        }
    }

    #[test]
    fn scale_equivariance_of_distance_diff() {
        let small = BsLayout::<f64>::new(500.0, 7).unwrap();
        let big = BsLayout::<f64>::new(1500.0, 7).unwrap();
        let p = Point2::new(137.0, -42.5);
        let p3 = p * 3.0;
        for i in 1..7 {
            let h = small.distance_diff(p, i).unwrap();
            let h3 = big.distance_diff(p3, i).unwrap();
            assert_relative_eq!(h3, 3.0 * h, max_relative = 1e-12);
        }
    }

    #[test]
    fn distance_diff_is_bounded_by_d_cell() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let mut rng = derive_rng(5, SeedDomain::DatasetSample, 1);
        for _ in 0..500 {
            // also probe points well outside the cluster
            let p = Point2::new(rng.gen_range(-3000.0..3000.0), rng.gen_range(-3000.0..3000.0));
            for i in 1..7 {
                let h = layout.distance_diff(p, i).unwrap();
                assert!(h.abs() <= 500.0 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn generic_layout_works_in_f32() {
        let layout = BsLayout::<f32>::new(500.0, 7).unwrap();
        assert_relative_eq!(layout.positions()[2].y, 433.01270, max_relative = 1e-6);
    }
}
