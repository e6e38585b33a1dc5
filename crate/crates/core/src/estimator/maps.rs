//! Range and depth maps from per-beam range estimates.

use crate::array::GridAngles;
use crate::map::GridMap;

use super::EstimatorError;

/// `R[v,h] = ρ^SRE_m + ρ'_m` and `D[v,h] = |R · sin θ_z · sin Φ|` with
/// `m = v·n_bar_h + h`.
pub fn construct_maps(
    coarse: &[f64],
    refinement: &[f64],
    angles: &[GridAngles],
    n_bar_h: usize,
    n_bar_v: usize,
) -> Result<(GridMap, GridMap), EstimatorError> {
    let m = n_bar_h * n_bar_v;
    for len in [coarse.len(), refinement.len(), angles.len()] {
        if len != m {
            return Err(EstimatorError::Length { expected: m, got: len });
        }
    }
    let range: Vec<f64> = coarse.iter().zip(refinement).map(|(c, r)| c + r).collect();
    let depth: Vec<f64> = range
        .iter()
        .zip(angles)
        .map(|(r, a)| (r * a.theta_z.sin() * a.phi.sin()).abs())
        .collect();
    Ok((
        GridMap::new(n_bar_v, n_bar_h, range).expect("shape"),
        GridMap::new(n_bar_v, n_bar_h, depth).expect("shape"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn depth_projection() {
        let angles = [
            GridAngles { theta_z: FRAC_PI_2, theta_x: FRAC_PI_2, phi: FRAC_PI_2 },
            GridAngles { theta_z: FRAC_PI_2, theta_x: std::f64::consts::FRAC_PI_4, phi: std::f64::consts::FRAC_PI_4 },
        ];
        let (r, d) = construct_maps(&[7.0, 9.9], &[0.0, 0.1], &angles, 2, 1).unwrap();
        assert_relative_eq!(r.get(0, 1), 10.0, epsilon = 1e-12);
        assert_eq!(d.get(0, 0), 7.0);
        assert_relative_eq!(d.get(0, 1), 10.0 * std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert!(construct_maps(&[1.0], &[0.0, 0.0], &angles, 2, 1).is_err());
    }
}
