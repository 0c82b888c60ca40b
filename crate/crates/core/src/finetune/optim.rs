use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{Gallery, HyperParams};

/// AdamW moment estimates for a `C x D` parameter matrix. `t` counts the
/// updates applied so far.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(num_classes: usize, dim: usize) -> Self {
        Self {
            m: Array2::zeros((num_classes, dim)),
            v: Array2::zeros((num_classes, dim)),
            t: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update on flat slices. `t` is the
/// 1-based index of this update, used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    hp: &HyperParams,
) {
    let (b1, b2) = (hp.beta1, hp.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        let theta = params[i];
        params[i] = theta - lr * (m_hat / (v_hat.sqrt() + hp.epsilon) + hp.weight_decay * theta);
    }
}

/// Applies one AdamW step to the gallery, then projects each row back onto
/// the unit sphere.
pub fn adamw_step(
    gallery: &mut Gallery,
    grads: &Array2<f64>,
    state: &mut OptimizerState,
    hp: &HyperParams,
    lr: f64,
) -> Result<()> {
    let shape = gallery.class_embeddings.dim();
    if grads.dim() != shape || state.m.dim() != shape || state.v.dim() != shape {
        return Err(Error::invalid(
            "optimizer step",
            format!("gradient {:?} and state do not match gallery {shape:?}", grads.dim()),
        ));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerics("gradient"));
    }
    let t = state.t + 1;
    let params = gallery
        .class_embeddings
        .as_slice_mut()
        .expect("gallery rows are contiguous");
    let grads = grads.as_standard_layout();
    adamw_update(
        params,
        grads.as_slice().expect("standard layout"),
        state.m.as_slice_mut().expect("standard layout"),
        state.v.as_slice_mut().expect("standard layout"),
        t,
        lr,
        hp,
    );
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerics("gallery update"));
    }
    gallery.renormalize()?;
    state.t = t;
    Ok(())
}
