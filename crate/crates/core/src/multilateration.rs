//! Batch position fix from a handful of ranges, used to seed the filters.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{line_of_sight, predict_range, Position3};

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE: f64 = 1e-12;

/// Levenberg-Marquardt solve of `min Σ (|p - a_i| - r_i)²` starting from `guess`.
///
/// Needs at least three ranges; with fewer the normal equations are singular.
pub fn solve_position(observations: &[(Position3, f64)], guess: Position3) -> Result<Position3> {
    if observations.len() < 3 {
        return Err(Error::InsufficientInput(format!(
            "multilateration needs at least 3 ranges, got {}",
            observations.len()
        )));
    }
    let cost = |p: &Position3| -> f64 {
        observations
            .iter()
            .map(|(a, r)| (predict_range(p, a) - r).powi(2))
            .sum()
    };

    let mut position = guess;
    let mut current = cost(&position);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (anchor, range) in observations {
            let (predicted, unit) = line_of_sight(&position, anchor)?;
            let residual = predicted - range;
            jtj += unit * unit.transpose();
            jtr += unit * residual;
        }

        let mut improved = false;
        while lambda < 1e12 {
            let damped = jtj + Matrix3::from_diagonal(&jtj.diagonal()) * lambda;
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = position + step;
            let candidate_cost = cost(&candidate);
            if candidate_cost <= current {
                position = candidate;
                current = candidate_cost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if step.norm() < STEP_TOLERANCE {
                    return Ok(position);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if position.iter().all(|c| c.is_finite()) {
        Ok(position)
    } else {
        Err(Error::NonFiniteState {
            stage: "multilateration",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnchorMap;

    #[test]
    fn recovers_exact_position_from_noiseless_ranges() {
        let anchors = AnchorMap::default();
        for truth in [
            Position3::new(7.0, 12.0, 1.5),
            Position3::new(2.0, 20.0, 4.0),
            Position3::new(13.0, 1.0, 0.5),
        ] {
            let obs: Vec<_> = anchors
                .iter()
                .map(|a| (a.position, predict_range(&truth, &a.position)))
                .collect();
            let fix = solve_position(&obs, anchors.centroid()).unwrap();
            assert!((fix - truth).norm() < 1e-8, "{fix} vs {truth}");
        }
    }

    #[test]
    fn too_few_ranges() {
        let a = Position3::origin();
        assert!(solve_position(&[(a, 1.0), (a, 1.0)], a).is_err());
    }
}
