use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geom::{generate_trajectory, ApConfig, Scenario, Trajectory, UniformLinearArray, Wall};

/// A floor plan and walk written out in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    /// `[x0, y0, x1, y1, reflection]` per opaque wall.
    pub walls: Vec<[f64; 5]>,
    /// Same layout as `walls`; these reflect but never block a path.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transparent_walls: Vec<[f64; 5]>,
    pub aps: Vec<ApSpec>,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub num_subcarriers: usize,
    pub max_reflection_order: usize,
    #[serde(default)]
    pub noise_floor: f64,
    /// Piecewise-linear walk, `[x, y]` per vertex.
    pub waypoints: Vec<[f64; 2]>,
    pub step_m: f64,
    pub dt_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApSpec {
    pub position: [f64; 3],
    /// Axis of the uniform linear array.
    pub orientation: [f64; 3],
    pub elements: usize,
}

/// A floor plan together with the walk used to collect measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub scenario: Scenario,
    pub waypoints: Vec<Point2<f64>>,
    pub step_m: f64,
    pub dt_s: f64,
}

impl ScenarioPreset {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "reference" => Ok(reference_preset()),
            "large" => Ok(large_preset()),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario {other:?} (expected \"reference\" or \"large\")"
            ))),
        }
    }

    /// The inline layout of `config` when present, else the named preset.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        match &config.layout {
            Some(layout) => Self::from_layout(layout),
            None => Self::by_name(&config.scenario),
        }
    }

    pub fn from_layout(layout: &LayoutSpec) -> Result<Self> {
        let scenario = Scenario {
            walls: layout
                .walls
                .iter()
                .map(|w| (w, true))
                .chain(layout.transparent_walls.iter().map(|w| (w, false)))
                .map(|(w, opaque)| Wall {
                    opaque,
                    ..Wall::new(Point2::new(w[0], w[1]), Point2::new(w[2], w[3]), w[4])
                })
                .collect(),
            aps: layout
                .aps
                .iter()
                .map(|a| ApConfig {
                    position: Point3::from(a.position),
                    array: UniformLinearArray::new(a.elements, Vector3::from(a.orientation)),
                })
                .collect(),
            carrier_freq_hz: layout.carrier_freq_hz,
            bandwidth_hz: layout.bandwidth_hz,
            num_subcarriers: layout.num_subcarriers,
            max_reflection_order: layout.max_reflection_order,
            noise_floor: layout.noise_floor,
            boundary: None,
        };
        scenario.validate()?;
        if layout.waypoints.len() < 2 || !(layout.step_m > 0.0) || !(layout.dt_s > 0.0) {
            return Err(Error::Config {
                line: 0,
                msg: "layout needs two or more waypoints and positive step_m and dt_s".into(),
            });
        }
        Ok(Self {
            name: "custom",
            scenario,
            waypoints: layout.waypoints.iter().map(|w| Point2::new(w[0], w[1])).collect(),
            step_m: layout.step_m,
            dt_s: layout.dt_s,
        })
    }

    pub fn to_layout(&self) -> LayoutSpec {
        let s = &self.scenario;
        let row = |w: &Wall| [w.start.x, w.start.y, w.end.x, w.end.y, w.reflection];
        LayoutSpec {
            walls: s.walls.iter().filter(|w| w.opaque).map(row).collect(),
            transparent_walls: s.walls.iter().filter(|w| !w.opaque).map(row).collect(),
            aps: s
                .aps
                .iter()
                .map(|a| ApSpec {
                    position: a.position.coords.into(),
                    orientation: a.array.orientation.into_inner().into(),
                    elements: a.array.elements,
                })
                .collect(),
            carrier_freq_hz: s.carrier_freq_hz,
            bandwidth_hz: s.bandwidth_hz,
            num_subcarriers: s.num_subcarriers,
            max_reflection_order: s.max_reflection_order,
            noise_floor: s.noise_floor,
            waypoints: self.waypoints.iter().map(|p| [p.x, p.y]).collect(),
            step_m: self.step_m,
            dt_s: self.dt_s,
        }
    }

    pub fn trajectory(&self, height: f64) -> Result<Trajectory> {
        generate_trajectory(&self.scenario, &self.waypoints, self.step_m, height, self.dt_s)
    }
}

fn rect_walls(x0: f64, y0: f64, x1: f64, y1: f64, reflection: f64) -> Vec<Wall> {
    let c = [
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ];
    (0..4).map(|i| Wall::new(c[i], c[(i + 1) % 4], reflection)).collect()
}

fn ap(x: f64, y: f64, orientation: Vector3<f64>) -> ApConfig {
    ApConfig {
        position: Point3::new(x, y, 2.0),
        array: UniformLinearArray::new(4, orientation),
    }
}

/// Back-and-forth rows between `x0` and `x1`; the first row starts at `x0`
/// when `left_first`.
fn serpentine(x0: f64, x1: f64, rows: &[f64], left_first: bool) -> Vec<Point2<f64>> {
    let mut out = Vec::new();
    let mut left = left_first;
    for &y in rows {
        let (a, b) = if left { (x0, x1) } else { (x1, x0) };
        out.push(Point2::new(a, y));
        out.push(Point2::new(b, y));
        left = !left;
    }
    out
}

/// 12 m x 8 m floor split into two rooms by a wall at `x = 6` with a
/// 1.8 m opening at the top; two 4-element APs per room at 2 m height.
pub fn reference_scenario() -> Scenario {
    reference_preset().scenario
}

fn reference_preset() -> ScenarioPreset {
    let mut walls = rect_walls(0.0, 0.0, 12.0, 8.0, 0.5);
    walls.push(Wall::new(Point2::new(6.0, 0.0), Point2::new(6.0, 6.2), 0.4));
    let scenario = Scenario {
        walls,
        aps: vec![
            ap(2.0, 2.0, Vector3::x()),
            ap(4.0, 6.0, Vector3::y()),
            ap(10.0, 2.0, Vector3::new(1.0, 1.0, 0.0)),
            ap(8.0, 6.0, Vector3::new(1.0, -1.0, 0.0)),
        ],
        carrier_freq_hz: 2.4e9,
        bandwidth_hz: 20e6,
        num_subcarriers: 52,
        max_reflection_order: 2,
        // Blocks weaker than this are treated as undetected, which leaves
        // most samples with two or three active APs.
        noise_floor: 3e-4,
        boundary: None,
    };
    // The walk keeps at least 1.2 m (horizontal) from every AP so that no
    // single sample dominates the peak SNR.
    let waypoints = [
        (5.4, 0.6),
        (0.6, 0.6),
        (0.6, 3.3),
        (5.4, 3.3),
        (5.4, 4.7),
        (0.6, 4.7),
        (0.6, 7.4),
        (11.4, 7.4),
        (11.4, 4.7),
        (6.6, 4.7),
        (6.6, 3.3),
        (11.4, 3.3),
        (11.4, 0.6),
        (6.6, 0.6),
    ]
    .into_iter()
    .map(|(x, y)| Point2::new(x, y))
    .collect();
    ScenarioPreset {
        name: "reference",
        scenario,
        waypoints,
        step_m: 0.025,
        dt_s: 0.05,
    }
}

fn large_preset() -> ScenarioPreset {
    let mut walls = rect_walls(0.0, 0.0, 24.0, 16.0, 0.5);
    walls.push(Wall::new(Point2::new(8.0, 0.0), Point2::new(8.0, 9.0), 0.4));
    walls.push(Wall::new(Point2::new(16.0, 4.0), Point2::new(16.0, 9.0), 0.4));
    walls.push(Wall::new(Point2::new(0.0, 11.0), Point2::new(2.0, 11.0), 0.4));
    let scenario = Scenario {
        walls,
        aps: vec![
            ap(1.5, 1.5, Vector3::x()),
            ap(6.5, 8.0, Vector3::y()),
            ap(2.0, 14.5, Vector3::x()),
            ap(11.0, 2.0, Vector3::new(1.0, 1.0, 0.0)),
            ap(12.0, 14.0, Vector3::x()),
            ap(14.5, 8.0, Vector3::y()),
            ap(21.5, 2.5, Vector3::new(1.0, -1.0, 0.0)),
            ap(22.0, 13.5, Vector3::x()),
        ],
        carrier_freq_hz: 2.4e9,
        bandwidth_hz: 20e6,
        num_subcarriers: 52,
        max_reflection_order: 2,
        noise_floor: 0.0,
        boundary: None,
    };
    let mut waypoints = serpentine(0.7, 7.3, &[0.7, 2.2, 3.7, 5.2, 6.7, 8.2], true);
    waypoints.extend(serpentine(0.7, 23.3, &[9.7, 10.5], true));
    waypoints.extend(serpentine(5.7, 23.3, &[12.0, 13.5, 15.3], true));
    waypoints.push(Point2::new(15.3, 15.3));
    waypoints.push(Point2::new(15.3, 10.0));
    waypoints.extend(serpentine(8.7, 15.3, &[8.2, 6.7, 5.2, 3.7, 2.2, 0.7], false));
    waypoints.extend(serpentine(16.7, 23.3, &[0.7, 2.2, 3.7, 5.2], true));
    ScenarioPreset {
        name: "large",
        scenario,
        waypoints,
        step_m: 0.025,
        dt_s: 0.05,
    }
}
