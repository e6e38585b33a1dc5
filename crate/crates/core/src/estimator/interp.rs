//! Map upscaling: nearest neighbor and Keys bicubic (`a = -0.5`).

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::map::GridMap;

use super::EstimatorError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    #[default]
    Bicubic,
}

fn keys(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights of output index `i` along one axis.
fn bicubic_axis(i: usize, src: usize, tgt: usize) -> ([usize; 4], [f64; 4]) {
    let x = (i as f64 + 0.5) * src as f64 / tgt as f64 - 0.5;
    let base = x.floor();
    let t = x - base;
    let mut idx = [0usize; 4];
    let mut w = [0.0; 4];
    for k in 0..4 {
        let j = base as isize - 1 + k as isize;
        idx[k] = j.clamp(0, src as isize - 1) as usize;
        w[k] = keys(t - (k as f64 - 1.0));
    }
    (idx, w)
}

fn nearest_axis(i: usize, src: usize, tgt: usize) -> usize {
    (((i as f64 + 0.5) * src as f64 / tgt as f64).floor() as usize).min(src - 1)
}

/// Upscales `map` to `target = (rows, cols)`. Downscaling is rejected.
pub fn interpolate(
    map: &GridMap,
    method: Interpolation,
    target: (usize, usize),
    exec: Execution,
) -> Result<GridMap, EstimatorError> {
    let (sr, sc) = map.dims();
    let (tr, tc) = target;
    if sr == 0 || sc == 0 || tr < sr || tc < sc {
        return Err(EstimatorError::Downscale { from: (sr, sc), to: target });
    }
    let mut out = GridMap::filled(tr, tc, 0.0);
    let cols: Vec<_> = (0..tc).map(|c| bicubic_axis(c, sc, tc)).collect();
    exec.for_each_chunk(out.as_mut_slice(), tc, |r, row| match method {
        Interpolation::Nearest => {
            let sr_i = nearest_axis(r, sr, tr);
            for (c, v) in row.iter_mut().enumerate() {
                *v = map.get(sr_i, nearest_axis(c, sc, tc));
            }
        }
        Interpolation::Bicubic => {
            let (ri, rw) = bicubic_axis(r, sr, tr);
            for (c, v) in row.iter_mut().enumerate() {
                let (ci, cw) = &cols[c];
                let mut acc = 0.0;
                for a in 0..4 {
                    let src_row = map.row(ri[a]);
                    let mut line = 0.0;
                    for b in 0..4 {
                        line += cw[b] * src_row[ci[b]];
                    }
                    acc += rw[a] * line;
                }
                *v = acc;
            }
        }
    });
    Ok(out)
}
