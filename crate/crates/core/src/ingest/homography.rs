//! Four-point perspective transform.

use crate::model::Vec2;

use super::IngestError;

const COLLINEAR_REL_TOL: f64 = 1e-9;
const MIN_ABS_DET: f64 = 1e-12;

/// 3x3 projective transform, normalized so that `m[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Wraps a raw matrix, normalizing by `m[2][2]` and checking invertibility.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, IngestError> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() < MIN_ABS_DET {
            return Err(IngestError::InvalidHomography(
                "m[2][2] is zero; cannot normalize".into(),
            ));
        }
        let mut n = m;
        for row in &mut n {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let h = Homography { m: n };
        let det = h.det();
        if !det.is_finite() || det.abs() <= MIN_ABS_DET {
            return Err(IngestError::InvalidHomography(format!(
                "matrix is singular (det = {det:e})"
            )));
        }
        Ok(h)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Vec2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Homography, IngestError> {
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Homography::from_matrix(adj)
    }

    pub fn compose(&self, then: &Homography) -> Result<Homography, IngestError> {
        let (a, b) = (&then.m, &self.m);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Homography::from_matrix(out)
    }
}

/// Rejects quads with repeated corners or any three collinear corners.
pub fn check_quad(q: &[Vec2; 4]) -> Result<(), IngestError> {
    if q.iter().any(|p| !p.is_finite()) {
        return Err(IngestError::DegenerateQuad("non-finite corner".into()));
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            if q[i] == q[j] {
                return Err(IngestError::DegenerateQuad(format!(
                    "corners {i} and {j} coincide"
                )));
            }
        }
    }
    for skip in 0..4 {
        let idx: Vec<usize> = (0..4).filter(|&k| k != skip).collect();
        let (a, b, c) = (q[idx[0]], q[idx[1]], q[idx[2]]);
        let u = b - a;
        let v = c - a;
        let cross = u.x * v.y - u.y * v.x;
        if cross.abs() <= COLLINEAR_REL_TOL * u.norm() * v.norm() {
            return Err(IngestError::DegenerateQuad(format!(
                "corners {:?} are collinear",
                idx
            )));
        }
    }
    Ok(())
}

/// Similarity transform moving the centroid to the origin with mean distance sqrt(2).
fn conditioning(q: &[Vec2; 4]) -> [[f64; 3]; 3] {
    let c = q.iter().fold(Vec2::ZERO, |acc, &p| acc + p) * 0.25;
    let mean = q.iter().map(|&p| p.dist(c)).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    [[s, 0.0, -s * c.x], [0.0, s, -s * c.y], [0.0, 0.0, 1.0]]
}

fn apply_raw(m: &[[f64; 3]; 3], p: Vec2) -> Vec2 {
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    Vec2::new(
        (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
        (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
    )
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..8 {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let tail: f64 = ((row + 1)..8).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Perspective transform taking each `src` corner onto the matching `dst` corner.
///
/// Both quads are conditioned (centroid at origin, mean radius sqrt(2)) before
/// the 8-unknown linear system is solved, then the result is de-conditioned
/// and normalized.
pub fn compute_homography(src: &[Vec2; 4], dst: &[Vec2; 4]) -> Result<Homography, IngestError> {
    check_quad(src)?;
    check_quad(dst)?;
    let ts = conditioning(src);
    let td = conditioning(dst);
    let mut a = [[0.0; 8]; 8];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let p = apply_raw(&ts, src[i]);
        let q = apply_raw(&td, dst[i]);
        a[2 * i] = [p.x, p.y, 1.0, 0.0, 0.0, 0.0, -p.x * q.x, -p.y * q.x];
        b[2 * i] = q.x;
        a[2 * i + 1] = [0.0, 0.0, 0.0, p.x, p.y, 1.0, -p.x * q.y, -p.y * q.y];
        b[2 * i + 1] = q.y;
    }
    let h = solve8(a, b).ok_or_else(|| {
        IngestError::DegenerateQuad("corner correspondence system is singular".into())
    })?;
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]];
    let s = 1.0 / td[0][0];
    let td_inv = [
        [s, 0.0, -td[0][2] * s],
        [0.0, s, -td[1][2] * s],
        [0.0, 0.0, 1.0],
    ];
    let full = mat_mul(&td_inv, &mat_mul(&hn, &ts));
    Homography::from_matrix(full)
}

/// Corners of the `w` x `h` destination canvas, clockwise from top-left.
pub fn canvas_rect(w: u32, h: u32) -> [Vec2; 4] {
    let (w, h) = (f64::from(w), f64::from(h));
    [
        Vec2::new(0.0, 0.0),
        Vec2::new(w, 0.0),
        Vec2::new(w, h),
        Vec2::new(0.0, h),
    ]
}
