//! Fixtures shared by the criterion benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shotface::finetune::TrainingSet;
use shotface::preprocess::{Landmarks5, SimilarityTransform, TEMPLATE_224};
use shotface::{Gallery, IdentityLabel};

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let mut a: Array2<f64> = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    for mut row in a.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    a
}

/// `per_class` noisy copies of `classes` random unit directions.
pub fn training_set(classes: usize, per_class: usize, dim: usize, seed: u64) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = unit_rows(&mut rng, classes, dim);
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut emb = Array2::from_shape_fn((n, dim), |(i, j)| {
        centers[[labels[i], j]] + 0.1 * rng.random_range(-1.0..1.0)
    });
    for mut row in emb.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    TrainingSet::new(emb, labels).expect("consistent fixture")
}

pub fn random_gallery(classes: usize, dim: usize, seed: u64) -> Gallery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..classes).map(|i| format!("id{i:02}")).collect();
    let labels = IdentityLabel::dense(&names).expect("distinct names");
    Gallery::new(unit_rows(&mut rng, classes, dim), labels, names, 100.0).expect("valid gallery")
}

/// The 224 template pushed through a random similarity transform.
pub fn landmarks(seed: u64) -> Landmarks5 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = SimilarityTransform::from_parts(
        rng.random_range(0.5..2.0),
        rng.random_range(-0.5..0.5),
        [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)],
    );
    TEMPLATE_224.map(&t)
}
