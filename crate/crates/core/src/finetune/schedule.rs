use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cosine-annealed learning rate at `step` of `total_steps`.
///
/// Written as the convex combination `lr0 * w + lr_min * (1 - w)` with
/// `w = (1 + cos(pi * step / total)) / 2`, so both endpoints are exact.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, lr_min: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::Schedule {
            step,
            total: total_steps,
        });
    }
    if total_steps == 0 {
        return Ok(lr0);
    }
    if step == total_steps {
        return Ok(lr_min);
    }
    let w = 0.5 * (1.0 + (PI * step as f64 / total_steps as f64).cos());
    Ok(lr0 * w + lr_min * (1.0 - w))
}
