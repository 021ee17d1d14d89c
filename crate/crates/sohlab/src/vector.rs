//! Small fixed-dimension vector helpers used throughout the crate.
//!
//! Velocities and orientations live on the unit sphere in `R^M` with
//! `M` a const generic (2 or 3 in practice).

pub fn dot<const M: usize>(a: &[f64; M], b: &[f64; M]) -> f64 {
    let mut s = 0.0;
    for i in 0..M {
        s += a[i] * b[i];
    }
    s
}

pub fn norm<const M: usize>(a: &[f64; M]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale<const M: usize>(a: &[f64; M], s: f64) -> [f64; M] {
    let mut out = *a;
    for x in out.iter_mut() {
        *x *= s;
    }
    out
}

pub fn add<const M: usize>(a: &[f64; M], b: &[f64; M]) -> [f64; M] {
    let mut out = *a;
    for i in 0..M {
        out[i] += b[i];
    }
    out
}

pub fn sub<const M: usize>(a: &[f64; M], b: &[f64; M]) -> [f64; M] {
    let mut out = *a;
    for i in 0..M {
        out[i] -= b[i];
    }
    out
}

/// Returns `a / |a|`, or `None` when `|a|` is below `eps`.
pub fn normalized<const M: usize>(a: &[f64; M], eps: f64) -> Option<[f64; M]> {
    let n = norm(a);
    if n < eps {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// Projection of `w` onto the hyperplane orthogonal to the unit vector `v`.
pub fn project_tangent<const M: usize>(v: &[f64; M], w: &[f64; M]) -> [f64; M] {
    let c = dot(v, w);
    sub(w, &scale(v, c))
}

/// Minimum-image displacement `a - b` in a periodic box.
pub fn periodic_delta<const M: usize>(a: &[f64; M], b: &[f64; M], box_len: &[f64; M]) -> [f64; M] {
    let mut d = sub(a, b);
    for i in 0..M {
        d[i] -= box_len[i] * (d[i] / box_len[i]).round();
    }
    d
}

/// Wraps `x` into `[0, box_len)` per axis.
pub fn wrap_position<const M: usize>(x: &mut [f64; M], box_len: &[f64; M]) {
    for i in 0..M {
        x[i] = x[i].rem_euclid(box_len[i]);
    }
}

/// Angle in radians between two unit vectors, clamped against rounding.
pub fn angle_between<const M: usize>(a: &[f64; M], b: &[f64; M]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}
