use nalgebra::{Point2, Point3};

use super::{DtGrid, Scenario, Trajectory, GEOM_EPS};
use crate::error::{Error, Result};

/// Strict point-in-polygon test by ray casting. Points on an edge are outside.
pub fn point_in_polygon(p: &Point2<f64>, poly: &[Point2<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        if (p - (a + ab * t)).norm() < GEOM_EPS {
            return false;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Piecewise-linear walk through `waypoints` at constant arc-length step and
/// constant time step.
pub fn generate_trajectory(
    scenario: &Scenario,
    waypoints: &[Point2<f64>],
    step_m: f64,
    height_m: f64,
    dt_s: f64,
) -> Result<Trajectory> {
    if !(step_m > 0.0) || !(dt_s > 0.0) {
        return Err(Error::InvalidArgument("trajectory step and time step must be positive".into()));
    }
    if waypoints.is_empty() {
        return Err(Error::InvalidArgument("trajectory needs at least one waypoint".into()));
    }
    if let Some(p) = waypoints.iter().find(|p| !scenario.contains(p)) {
        return Err(Error::OutsideFloorPlan { x: p.x, y: p.y });
    }
    let seg_len: Vec<f64> = waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = seg_len.iter().sum();
    let count = (total / step_m + 1e-9).floor() as usize + 1;

    let mut positions = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..count {
        let s = i as f64 * step_m;
        while seg < seg_len.len() && s > seg_start + seg_len[seg] && seg + 1 < seg_len.len() {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let p = if seg_len.is_empty() {
            waypoints[0]
        } else {
            let frac = if seg_len[seg] > 0.0 {
                ((s - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            waypoints[seg] + (waypoints[seg + 1] - waypoints[seg]) * frac
        };
        positions.push(Point3::new(p.x, p.y, height_m));
    }
    let timestamps = (0..count).map(|i| i as f64 * dt_s).collect();
    Trajectory::new(positions, timestamps)
}

/// Axis-aligned lattice `lo + k * spacing` clipped to the floor-plan interior;
/// lattice points lying on a wall are dropped.
pub fn generate_dt_grid(scenario: &Scenario, spacing: f64, height: f64) -> Result<DtGrid> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidArgument("grid spacing must be positive".into()));
    }
    let (lo, hi) = scenario.bounds();
    let poly = scenario.floor_plan();
    let nx = ((hi.x - lo.x) / spacing + 1e-9).floor() as usize;
    let ny = ((hi.y - lo.y) / spacing + 1e-9).floor() as usize;
    let mut points = Vec::new();
    for j in 1..=ny {
        for i in 1..=nx {
            let p = Point2::new(lo.x + i as f64 * spacing, lo.y + j as f64 * spacing);
            if !point_in_polygon(&p, &poly) {
                continue;
            }
            if scenario.walls.iter().any(|w| w.distance_to(&p) < GEOM_EPS) {
                continue;
            }
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid { spacing });
    }
    Ok(DtGrid {
        spacing,
        height,
        points,
    })
}
