use nalgebra::{Point2, Point3, Unit, Vector3};

use super::{segment_intersection, Scenario, GEOM_EPS};
use crate::error::{Error, Result};

/// A virtual source obtained by mirroring the real source across a sequence
/// of walls.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSource {
    pub position: Point3<f64>,
    /// Product of the reflection coefficients along `walls`.
    pub coefficient: f64,
    /// Reflection sequence, first bounce (nearest the source) first.
    pub walls: Vec<usize>,
    /// `chain[i]` is the image after the first `i` reflections; `chain[0]` is
    /// the real source.
    chain: Vec<Point3<f64>>,
}

/// A traced specular path from the source to a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub length: f64,
    pub coefficient: f64,
    /// Unit direction from the receiver towards the incoming wavefront.
    pub arrival: Unit<Vector3<f64>>,
    /// Reflection points ordered from the receiver back to the source.
    pub bounces: Vec<Point3<f64>>,
}

impl ImageSource {
    pub fn order(&self) -> usize {
        self.walls.len()
    }

    pub fn source(&self) -> Point3<f64> {
        self.chain[0]
    }

    /// Validity test: trace the path from `receiver` back to the source.
    ///
    /// Returns `None` when a reflection point falls outside its wall segment
    /// or any leg crosses an opaque wall.
    pub fn trace(&self, scenario: &Scenario, receiver: &Point3<f64>) -> Option<PropagationPath> {
        let mut cur = *receiver;
        let mut cur_wall: Option<usize> = None;
        let mut bounces = Vec::with_capacity(self.walls.len());
        for i in (1..=self.walls.len()).rev() {
            let w_idx = self.walls[i - 1];
            let wall = &scenario.walls[w_idx];
            let target = self.chain[i];
            let (t, u) = segment_intersection(&xy(&cur), &xy(&target), &wall.start, &wall.end)?;
            if !(t > GEOM_EPS && t < 1.0 - GEOM_EPS) || !(-GEOM_EPS..=1.0 + GEOM_EPS).contains(&u) {
                return None;
            }
            let hit = cur + (target - cur) * t;
            if leg_blocked(scenario, &cur, &hit, cur_wall, Some(w_idx)) {
                return None;
            }
            bounces.push(hit);
            cur = hit;
            cur_wall = Some(w_idx);
        }
        if leg_blocked(scenario, &cur, &self.chain[0], cur_wall, None) {
            return None;
        }
        let delta = self.position - receiver;
        let length = delta.norm();
        Some(PropagationPath {
            length,
            coefficient: self.coefficient,
            arrival: Unit::new_normalize(delta),
            bounces,
        })
    }
}

fn xy(p: &Point3<f64>) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

/// Whether the leg `a-b` crosses any opaque wall other than the ones it
/// starts or ends on.
pub(crate) fn leg_blocked(
    scenario: &Scenario,
    a: &Point3<f64>,
    b: &Point3<f64>,
    skip_a: Option<usize>,
    skip_b: Option<usize>,
) -> bool {
    let (pa, pb) = (xy(a), xy(b));
    scenario.walls.iter().enumerate().any(|(i, w)| {
        if !w.opaque || Some(i) == skip_a || Some(i) == skip_b {
            return false;
        }
        match segment_intersection(&pa, &pb, &w.start, &w.end) {
            Some((t, u)) => t > GEOM_EPS && t < 1.0 - GEOM_EPS && (0.0..=1.0).contains(&u),
            None => false,
        }
    })
}

/// Direct source plus every mirror image up to `order` reflections.
///
/// Consecutive reflections on the same wall are skipped since they map the
/// image back onto its predecessor.
pub fn build_image_sources(scenario: &Scenario, source: &Point3<f64>, order: usize) -> Result<Vec<ImageSource>> {
    if order > scenario.max_reflection_order {
        return Err(Error::InvalidArgument(format!(
            "reflection order {order} exceeds the scenario maximum {}",
            scenario.max_reflection_order
        )));
    }
    let mut out = vec![ImageSource {
        position: *source,
        coefficient: 1.0,
        walls: Vec::new(),
        chain: vec![*source],
    }];
    let mut frontier = 0..1;
    for _ in 0..order {
        let start = out.len();
        for idx in frontier.clone() {
            for (w_idx, wall) in scenario.walls.iter().enumerate() {
                let parent = &out[idx];
                if parent.walls.last() == Some(&w_idx) {
                    continue;
                }
                let position = wall.mirror(&parent.position);
                let mut walls = parent.walls.clone();
                walls.push(w_idx);
                let mut chain = parent.chain.clone();
                chain.push(position);
                let image = ImageSource {
                    position,
                    coefficient: parent.coefficient * wall.reflection,
                    walls,
                    chain,
                };
                out.push(image);
            }
        }
        frontier = start..out.len();
    }
    Ok(out)
}
