//! Indoor D-MIMO scenario description and deterministic multipath synthesis.
//!
//! Walls are vertical, infinitely tall segments in the floor plane. Specular
//! reflection paths are found with the image-source method; there is no
//! floor or ceiling bounce, diffraction or scattering.

mod channel;
mod images;
mod layout;
mod noise;

pub use channel::{synth_csi, synth_csi_set, trace_paths, SPEED_OF_LIGHT};
pub use images::{build_image_sources, ImageSource, PropagationPath};
pub use layout::{generate_dt_grid, generate_trajectory, point_in_polygon};
pub use noise::{add_awgn, add_awgn_with_variance, noise_variance_for_snr, snr_per_block};

use nalgebra::{Point2, Point3, Unit, Vector2, Vector3};

use crate::error::{Error, Result};

pub(crate) const GEOM_EPS: f64 = 1e-9;

/// Whether the straight segment between `a` and `b` crosses no opaque wall.
pub fn line_of_sight(scenario: &Scenario, a: &Point3<f64>, b: &Point3<f64>) -> bool {
    !images::leg_blocked(scenario, a, b, None, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub start: Point2<f64>,
    pub end: Point2<f64>,
    /// Real amplitude reflection coefficient in `[0, 1]`.
    pub reflection: f64,
    /// Opaque walls block every path crossing them.
    pub opaque: bool,
}

impl Wall {
    pub fn new(start: Point2<f64>, end: Point2<f64>, reflection: f64) -> Self {
        Self {
            start,
            end,
            reflection,
            opaque: true,
        }
    }

    pub fn transparent(mut self) -> Self {
        self.opaque = false;
        self
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Mirror image of `p` across the wall's supporting line; height is kept.
    pub fn mirror(&self, p: &Point3<f64>) -> Point3<f64> {
        let d = (self.end - self.start).normalize();
        let rel = Vector2::new(p.x, p.y) - self.start.coords;
        let foot = self.start.coords + d * rel.dot(&d);
        let m = foot * 2.0 - Vector2::new(p.x, p.y);
        Point3::new(m.x, m.y, p.z)
    }

    /// Distance from `p` to the wall segment.
    pub fn distance_to(&self, p: &Point2<f64>) -> f64 {
        let d = self.end - self.start;
        let t = ((p - self.start).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (p - (self.start + d * t)).norm()
    }
}

/// Uniform linear array with half-wavelength element spacing, centred on the
/// AP position.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformLinearArray {
    pub elements: usize,
    pub orientation: Unit<Vector3<f64>>,
}

impl UniformLinearArray {
    pub fn new(elements: usize, orientation: Vector3<f64>) -> Self {
        Self {
            elements,
            orientation: Unit::new_normalize(orientation),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApConfig {
    pub position: Point3<f64>,
    pub array: UniformLinearArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub walls: Vec<Wall>,
    pub aps: Vec<ApConfig>,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub max_reflection_order: usize,
    /// Per-AP received energy `||H||_F^2` below which a block is reported as
    /// zero (not received). Zero disables the cut.
    pub noise_floor: f64,
    /// Floor-plan polygon. When absent, the bounding rectangle of all walls.
    pub boundary: Option<Vec<Point2<f64>>>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers == 0 {
            return Err(Error::Scenario("number of subcarriers must be at least 1".into()));
        }
        if !(self.carrier_freq_hz > 0.0) || !(self.bandwidth_hz > 0.0) {
            return Err(Error::Scenario("carrier frequency and bandwidth must be positive".into()));
        }
        if self.noise_floor < 0.0 || !self.noise_floor.is_finite() {
            return Err(Error::Scenario("noise floor must be a finite nonnegative power".into()));
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !(0.0..=1.0).contains(&w.reflection) {
                return Err(Error::Scenario(format!(
                    "wall {i} reflection coefficient {} outside [0, 1]",
                    w.reflection
                )));
            }
            if !(w.length() > GEOM_EPS) {
                return Err(Error::Scenario(format!("wall {i} has zero length")));
            }
        }
        if self.aps.is_empty() {
            return Err(Error::Scenario("at least one AP is required".into()));
        }
        let k = self.aps[0].array.elements;
        for (i, ap) in self.aps.iter().enumerate() {
            if ap.array.elements == 0 {
                return Err(Error::Scenario(format!("AP {i} has no antenna elements")));
            }
            if ap.array.elements != k {
                return Err(Error::Scenario(format!(
                    "AP {i} has {} elements, expected {k} like AP 0",
                    ap.array.elements
                )));
            }
            if (ap.array.orientation.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Scenario(format!("AP {i} orientation is not a unit vector")));
            }
        }
        if let Some(b) = &self.boundary {
            if b.len() < 3 {
                return Err(Error::Scenario("boundary polygon needs at least 3 vertices".into()));
            }
        } else if self.walls.is_empty() {
            return Err(Error::Scenario("a floor plan needs walls or an explicit boundary".into()));
        }
        Ok(())
    }

    pub fn antennas(&self) -> usize {
        self.aps.first().map_or(0, |ap| ap.array.elements)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Centred OFDM grid `f_s = f_c + (s - S/2) B / S`.
    pub fn subcarrier_freqs(&self) -> Vec<f64> {
        let s_total = self.num_subcarriers as f64;
        (0..self.num_subcarriers)
            .map(|s| self.carrier_freq_hz + (s as f64 - s_total / 2.0) * self.bandwidth_hz / s_total)
            .collect()
    }

    pub fn floor_plan(&self) -> Vec<Point2<f64>> {
        if let Some(b) = &self.boundary {
            return b.clone();
        }
        let (lo, hi) = self.wall_bounds();
        vec![
            Point2::new(lo.x, lo.y),
            Point2::new(hi.x, lo.y),
            Point2::new(hi.x, hi.y),
            Point2::new(lo.x, hi.y),
        ]
    }

    /// Axis-aligned bounds of the floor plan.
    pub fn bounds(&self) -> (Point2<f64>, Point2<f64>) {
        let poly = self.floor_plan();
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &poly {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    fn wall_bounds(&self) -> (Point2<f64>, Point2<f64>) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in &self.walls {
            for p in [w.start, w.end] {
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
        }
        (lo, hi)
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    /// Strictly inside the floor plan.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        point_in_polygon(p, &self.floor_plan())
    }

    pub fn ap_positions_2d(&self) -> Vec<Point2<f64>> {
        self.aps.iter().map(|ap| Point2::new(ap.position.x, ap.position.y)).collect()
    }

    /// Copy with every AP displaced by `shift`.
    pub fn with_ap_shift(&self, shift: Vector3<f64>) -> Scenario {
        let mut out = self.clone();
        for ap in &mut out.aps {
            ap.position += shift;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Point3<f64>>,
    pub timestamps: Vec<f64>,
}

impl Trajectory {
    pub fn new(positions: Vec<Point3<f64>>, timestamps: Vec<f64>) -> Result<Self> {
        if positions.len() != timestamps.len() {
            return Err(Error::Dimension(format!(
                "{} positions but {} timestamps",
                positions.len(),
                timestamps.len()
            )));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("timestamps must be strictly increasing".into()));
        }
        Ok(Self {
            positions,
            timestamps,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions_2d(&self) -> Vec<Point2<f64>> {
        self.positions.iter().map(|p| Point2::new(p.x, p.y)).collect()
    }

    /// Same horizontal track at a different antenna height.
    pub fn at_height(&self, height: f64) -> Trajectory {
        Trajectory {
            positions: self.positions.iter().map(|p| Point3::new(p.x, p.y, height)).collect(),
            timestamps: self.timestamps.clone(),
        }
    }
}

/// Predefined digital-twin positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DtGrid {
    pub spacing: f64,
    pub height: f64,
    pub points: Vec<Point2<f64>>,
}

impl DtGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions_3d(&self) -> Vec<Point3<f64>> {
        self.points.iter().map(|p| Point3::new(p.x, p.y, self.height)).collect()
    }
}

/// Proper intersection of segments `p0-p1` and `q0-q1` in the plane.
///
/// Returns `(t, u)` with the crossing at `p0 + t (p1 - p0)` and
/// `q0 + u (q1 - q0)`; parallel segments never intersect.
pub(crate) fn segment_intersection(
    p0: &Point2<f64>,
    p1: &Point2<f64>,
    q0: &Point2<f64>,
    q1: &Point2<f64>,
) -> Option<(f64, f64)> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.perp(&s);
    if denom.abs() < 1e-15 * (r.norm() * s.norm()).max(1e-300) {
        return None;
    }
    let qp = q0 - p0;
    let t = qp.perp(&s) / denom;
    let u = qp.perp(&r) / denom;
    Some((t, u))
}
