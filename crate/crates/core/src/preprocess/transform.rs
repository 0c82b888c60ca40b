use crate::error::{Error, Result};

/// A point in pixel coordinates (x to the right, y down).
pub type Point = [f64; 2];

/// Five facial landmarks in pixels, in the order left eye, right eye, nose
/// tip, left mouth corner, right mouth corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmarks5(pub [Point; 5]);

/// Five-point template for 224x224 crops: the common 112x112 template used by
/// ArcFace-style aligners, scaled by 2.
pub const TEMPLATE_224: Landmarks5 = Landmarks5([
    [76.5892, 103.3926],
    [147.0636, 103.0028],
    [112.0504, 143.4732],
    [83.0986, 184.7310],
    [141.4598, 184.4082],
]);

impl Landmarks5 {
    pub fn points(&self) -> &[Point; 5] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.is_finite()
            && self.0.iter().all(|[x, y]| {
                *x >= 0.0 && *y >= 0.0 && *x <= width as f64 && *y <= height as f64
            })
    }

    pub fn map(&self, t: &SimilarityTransform) -> Self {
        Self(self.0.map(|p| t.apply(p)))
    }
}

/// `p -> scale * R p + t` with `R` a proper rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 2]; 2],
    pub translation: [f64; 2],
    /// RMS distance between the mapped source and the destination points of
    /// the fit that produced this transform (zero when built directly).
    pub residual_rms: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self::from_parts(1.0, 0.0, [0.0, 0.0])
    }

    /// Builds a transform from scale, rotation angle (radians) and translation.
    pub fn from_parts(scale: f64, angle: f64, translation: [f64; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            scale,
            rotation: [[c, -s], [s, c]],
            translation,
            residual_rms: 0.0,
        }
    }

    pub fn apply(&self, [x, y]: Point) -> Point {
        let r = &self.rotation;
        [
            self.scale * (r[0][0] * x + r[0][1] * y) + self.translation[0],
            self.scale * (r[1][0] * x + r[1][1] * y) + self.translation[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let inv_scale = 1.0 / self.scale;
        let [tx, ty] = self.translation;
        let t = [
            -inv_scale * (rt[0][0] * tx + rt[0][1] * ty),
            -inv_scale * (rt[1][0] * tx + rt[1][1] * ty),
        ];
        Self {
            scale: inv_scale,
            rotation: rt,
            translation: t,
            residual_rms: self.residual_rms,
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }
}

/// Least-squares similarity transform mapping `src` onto `dst` (Umeyama's
/// closed form, specialized to 2D).
///
/// With centered points `a_i` (source) and `b_i` (destination), the optimal
/// rotation angle is `atan2(sum a_i x b_i, sum a_i . b_i)`, the scale is the
/// norm of that pair divided by `sum |a_i|^2`, and the translation maps the
/// source centroid onto the destination centroid.
pub fn estimate_similarity_transform(
    src: &Landmarks5,
    dst: &Landmarks5,
) -> Result<SimilarityTransform> {
    if !src.is_finite() || !dst.is_finite() {
        return Err(Error::DegenerateLandmarks("non-finite coordinates".into()));
    }
    let n = src.0.len() as f64;
    let centroid = |pts: &[Point; 5]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    };
    let mu_src = centroid(&src.0);
    let mu_dst = centroid(&dst.0);

    let mut src_var = 0.0;
    let mut src_mag = 0.0;
    let mut dot = 0.0;
    let mut cross = 0.0;
    for (p, q) in src.0.iter().zip(&dst.0) {
        let a = [p[0] - mu_src[0], p[1] - mu_src[1]];
        let b = [q[0] - mu_dst[0], q[1] - mu_dst[1]];
        src_var += a[0] * a[0] + a[1] * a[1];
        src_mag += p[0] * p[0] + p[1] * p[1];
        dot += a[0] * b[0] + a[1] * b[1];
        cross += a[0] * b[1] - a[1] * b[0];
    }
    if src_var <= 1e-12 * src_mag.max(1.0) {
        return Err(Error::DegenerateLandmarks(
            "source points coincide".into(),
        ));
    }
    let norm = dot.hypot(cross);
    if norm == 0.0 {
        return Err(Error::DegenerateLandmarks(
            "destination points coincide".into(),
        ));
    }
    let (cos, sin) = (dot / norm, cross / norm);
    let scale = norm / src_var;
    let rotation = [[cos, -sin], [sin, cos]];
    let translation = [
        mu_dst[0] - scale * (cos * mu_src[0] - sin * mu_src[1]),
        mu_dst[1] - scale * (sin * mu_src[0] + cos * mu_src[1]),
    ];
    let mut t = SimilarityTransform {
        scale,
        rotation,
        translation,
        residual_rms: 0.0,
    };
    let sq: f64 = src
        .0
        .iter()
        .zip(&dst.0)
        .map(|(p, q)| {
            let m = t.apply(*p);
            (m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)
        })
        .sum();
    t.residual_rms = (sq / n).sqrt();
    Ok(t)
}
