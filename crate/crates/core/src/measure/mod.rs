//! Two-point measurement probes, scenario replay and accuracy statistics.

mod scenario;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::linac::PlacedComponent;

pub use scenario::{
    run_scenario, Deviation, ExpectedPair, ExpectedProbe, ExpectedResults, PatientSpec, Scenario, ScenarioError,
    ScenarioReport, SCENARIO_SCHEMA,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("probe anchor references unknown component {0:?}")]
    DanglingAnchor(String),
    #[error("probe coordinates must be finite")]
    NonFinite,
    #[error("no differences given")]
    Empty,
}

/// A probe endpoint: a fixed world point, or a point fixed in a
/// component's frame that follows the component as the machine moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbePoint {
    Free([f64; 3]),
    Anchored { component: String, offset_mm: [f64; 3] },
}

impl ProbePoint {
    pub fn free(p: Vec3) -> Self {
        ProbePoint::Free([p.x, p.y, p.z])
    }

    pub fn anchored(component: impl Into<String>, offset: Vec3) -> Self {
        ProbePoint::Anchored {
            component: component.into(),
            offset_mm: [offset.x, offset.y, offset.z],
        }
    }

    /// World position under the given placement.
    pub fn resolve(&self, placed: &[PlacedComponent]) -> Result<Vec3, MeasureError> {
        let (coords, frame) = match self {
            ProbePoint::Free(p) => (p, None),
            ProbePoint::Anchored { component, offset_mm } => {
                let c = placed
                    .iter()
                    .find(|c| &c.id == component)
                    .ok_or_else(|| MeasureError::DanglingAnchor(component.clone()))?;
                (offset_mm, Some(c.transform))
            }
        };
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(MeasureError::NonFinite);
        }
        let p = Vec3::from(*coords);
        Ok(frame.map_or(p, |t| t.apply(&p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementProbe {
    pub id: String,
    pub a: ProbePoint,
    pub b: ProbePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReading {
    pub id: String,
    pub a_mm: Vec3,
    pub b_mm: Vec3,
    pub distance_mm: f64,
    pub distance_cm: f64,
}

/// Euclidean distance between the resolved endpoints, in mm.
pub fn measure(p: &MeasurementProbe, placed: &[PlacedComponent]) -> Result<f64, MeasureError> {
    Ok(reading(p, placed)?.distance_mm)
}

pub fn reading(p: &MeasurementProbe, placed: &[PlacedComponent]) -> Result<ProbeReading, MeasureError> {
    let a = p.a.resolve(placed)?;
    let b = p.b.resolve(placed)?;
    let d = (b - a).norm();
    Ok(ProbeReading {
        id: p.id.clone(),
        a_mm: a,
        b_mm: b,
        distance_mm: d,
        distance_cm: d / 10.0,
    })
}

/// Summary of paired reference/simulated distances, in centimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub differences_cm: Vec<f64>,
    pub mean_cm: f64,
    /// Sample standard deviation (n − 1); zero for a single pair.
    pub sd_cm: f64,
    pub count: usize,
}

/// `d_i = |reference − simulated|`, their mean and sample standard deviation.
pub fn accuracy_stats(pairs: &[(f64, f64)]) -> Result<AccuracyStats, MeasureError> {
    if pairs.is_empty() {
        return Err(MeasureError::Empty);
    }
    if pairs.iter().any(|(r, s)| !r.is_finite() || !s.is_finite()) {
        return Err(MeasureError::NonFinite);
    }
    let d: Vec<f64> = pairs.iter().map(|(r, s)| (r - s).abs()).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = if d.len() > 1 {
        (d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(AccuracyStats {
        count: d.len(),
        differences_cm: d,
        mean_cm: mean,
        sd_cm: sd,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::collision::Shape;
    use crate::geometry::{primitives, Transform};
    use crate::linac::ComponentKind;

    fn free(id: &str, a: [f64; 3], b: [f64; 3]) -> MeasurementProbe {
        MeasurementProbe {
            id: id.into(),
            a: ProbePoint::Free(a),
            b: ProbePoint::Free(b),
        }
    }

    fn component(id: &str, t: Transform) -> PlacedComponent {
        PlacedComponent {
            id: id.into(),
            kind: ComponentKind::CouchTop,
            transform: t,
            shape: Arc::new(Shape::new(primitives::unit_cube()).unwrap()),
            collidable: true,
        }
    }

    #[test]
    fn three_four_five() {
        assert_eq!(measure(&free("p", [0.0; 3], [30.0, 40.0, 0.0]), &[]).unwrap(), 50.0);
        let r = reading(&free("p", [0.0; 3], [30.0, 40.0, 0.0]), &[]).unwrap();
        assert_eq!(r.distance_cm, 5.0);
        assert_eq!(measure(&free("p", [1.5, -2.0, 7.0], [1.5, -2.0, 7.0]), &[]).unwrap(), 0.0);
    }

    #[test]
    fn anchored_points_follow_components() {
        let placed = vec![component("couch", Transform::translation(0.0, 100.0, 0.0))];
        let p = MeasurementProbe {
            id: "p".into(),
            a: ProbePoint::anchored("couch", Vec3::new(0.0, 0.0, 0.0)),
            b: ProbePoint::Free([0.0, 0.0, 0.0]),
        };
        assert_eq!(measure(&p, &placed).unwrap(), 100.0);
        let dangling = MeasurementProbe {
            a: ProbePoint::anchored("gantry", Vec3::zeros()),
            ..p
        };
        assert_eq!(
            measure(&dangling, &placed),
            Err(MeasureError::DanglingAnchor("gantry".into()))
        );
        assert_eq!(
            measure(&free("nan", [f64::NAN, 0.0, 0.0], [0.0; 3]), &[]),
            Err(MeasureError::NonFinite)
        );
    }

    #[test]
    fn stats_examples() {
        let s = accuracy_stats(&[(2.0, 1.0), (0.0, 1.0), (5.0, 4.0)]).unwrap();
        assert_eq!((s.mean_cm, s.sd_cm, s.count), (1.0, 0.0, 3));
        let s = accuracy_stats(&[(1.0, 1.0), (3.0, 1.0)]).unwrap();
        assert_eq!(s.mean_cm, 1.0);
        assert!((s.sd_cm - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(accuracy_stats(&[]), Err(MeasureError::Empty));
        assert_eq!(accuracy_stats(&[(1.0, 3.0)]).unwrap().sd_cm, 0.0);
    }

    proptest! {
        #[test]
        fn endpoint_swap_is_symmetric(a in prop::array::uniform3(-1e3..1e3f64), b in prop::array::uniform3(-1e3..1e3f64)) {
            prop_assert_eq!(
                measure(&free("p", a, b), &[]).unwrap(),
                measure(&free("p", b, a), &[]).unwrap()
            );
        }

        #[test]
        fn readings_match_euclidean_norm(a in prop::array::uniform3(-1e3..1e3f64), b in prop::array::uniform3(-1e3..1e3f64)) {
            let d = measure(&free("p", a, b), &[]).unwrap();
            let expect = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            prop_assert!((d - expect).abs() <= 1e-9 * expect.max(1.0));
        }

        #[test]
        fn stats_scale_with_differences(
            d in prop::collection::vec(0.0..10.0f64, 2..30),
            k in prop::sample::select(vec![0.5, 2.0, 4.0, 0.125]),
        ) {
            let base = accuracy_stats(&d.iter().map(|x| (*x, 0.0)).collect::<Vec<_>>()).unwrap();
            let scaled = accuracy_stats(&d.iter().map(|x| (k * x, 0.0)).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(scaled.mean_cm, k * base.mean_cm);
            prop_assert_eq!(scaled.sd_cm, k * base.sd_cm);
        }
    }
}
