//! Softmax cross-entropy over scaled-cosine logits and its gradient with
//! respect to the class embeddings.
//!
//! With logits `x[n,c] = s * <image_n, class_c>`, class weights `w` and
//! targets `y`, the loss is the mean over the batch of
//! `l_n = -sum_c w_c * y[n,c] * log softmax(x_n)_c`.
//!
//! Differentiating, `dl_n/dx[n,j] = p[n,j] * sum_c w_c y[n,c] - w_j y[n,j]`,
//! which for unit weights and one-hot targets is the familiar `p - y`; the
//! chain rule through the logits gives
//! `dL/dclass_j = (s / N) * sum_n dl_n/dx[n,j] * image_n`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::recognize::softmax;
use crate::types::{dot, Gallery, Logits, TargetBatch};

/// `x[n, c] = logit_scale * <image_n, class_c>`. Rows are used as given; the
/// caller keeps them on the unit sphere.
pub fn compute_logits(image_embs: &Array2<f64>, gallery: &Gallery) -> Result<Logits> {
    if image_embs.ncols() != gallery.dim() {
        return Err(Error::Dimension {
            expected: gallery.dim(),
            actual: image_embs.ncols(),
        });
    }
    let classes: Vec<Vec<f64>> = gallery
        .class_embeddings
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let mut out = Array2::zeros((image_embs.nrows(), classes.len()));
    for (n, image) in image_embs.rows().into_iter().enumerate() {
        let image = image.to_vec();
        for (c, class) in classes.iter().enumerate() {
            out[[n, c]] = gallery.logit_scale * dot(&image, class);
        }
    }
    Logits::new(out)
}

/// Numerically stable `log softmax` of one row (max subtracted first).
pub(crate) fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - max - log_sum).collect()
}

fn check_shapes(logits: &Logits, targets: &TargetBatch) -> Result<()> {
    let t = targets.targets();
    if t.dim() != logits.0.dim() {
        return Err(Error::invalid(
            "target batch",
            format!("shape {:?} does not match logits {:?}", t.dim(), logits.0.dim()),
        ));
    }
    if logits.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerics("logits"));
    }
    Ok(())
}

/// Mean-reduced weighted softmax cross-entropy.
pub fn cross_entropy_loss(logits: &Logits, targets: &TargetBatch) -> Result<f64> {
    check_shapes(logits, targets)?;
    let w = targets.weights();
    let mut total = 0.0;
    for (x, y) in logits.0.rows().into_iter().zip(targets.targets().rows()) {
        let log_p = log_softmax(&x.to_vec());
        let l_n: f64 = log_p
            .iter()
            .zip(y.iter())
            .zip(w)
            .map(|((lp, yc), wc)| if *yc == 0.0 { 0.0 } else { -wc * lp * yc })
            .sum();
        total += l_n;
    }
    let loss = total / logits.batch_size() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerics("loss"));
    }
    Ok(loss)
}

/// `dL/dx`, shape `N x C`.
pub fn logit_gradient(logits: &Logits, targets: &TargetBatch) -> Result<Array2<f64>> {
    check_shapes(logits, targets)?;
    let w = targets.weights();
    let n = logits.batch_size() as f64;
    let mut grad = Array2::zeros(logits.0.dim());
    for ((x, y), mut g) in logits
        .0
        .rows()
        .into_iter()
        .zip(targets.targets().rows())
        .zip(grad.rows_mut())
    {
        let p = softmax(&x.to_vec())?;
        let mass: f64 = y.iter().zip(w).map(|(yc, wc)| yc * wc).sum();
        for j in 0..p.len() {
            g[j] = (p[j] * mass - w[j] * y[j]) / n;
        }
    }
    Ok(grad)
}

/// `dL/dclass_embeddings`, shape `C x D`.
pub fn loss_gradient(
    logits: &Logits,
    targets: &TargetBatch,
    image_embs: &Array2<f64>,
    gallery: &Gallery,
) -> Result<Array2<f64>> {
    if image_embs.nrows() != logits.batch_size() {
        return Err(Error::Dimension {
            expected: logits.batch_size(),
            actual: image_embs.nrows(),
        });
    }
    if image_embs.ncols() != gallery.dim() {
        return Err(Error::Dimension {
            expected: gallery.dim(),
            actual: image_embs.ncols(),
        });
    }
    if logits.num_classes() != gallery.num_classes() {
        return Err(Error::Dimension {
            expected: gallery.num_classes(),
            actual: logits.num_classes(),
        });
    }
    let dx = logit_gradient(logits, targets)?;
    let mut grad = Array2::zeros((gallery.num_classes(), gallery.dim()));
    for (n, image) in image_embs.rows().into_iter().enumerate() {
        for (c, mut row) in grad.rows_mut().into_iter().enumerate() {
            let coef = gallery.logit_scale * dx[[n, c]];
            if coef != 0.0 {
                row.iter_mut().zip(image.iter()).for_each(|(g, x)| *g += coef * x);
            }
        }
    }
    Ok(grad)
}
