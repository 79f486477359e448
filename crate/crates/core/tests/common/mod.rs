//! Independent oracles for integration and acceptance tests. Nothing here
//! calls into the library's numerics; only plain arrays and closed forms.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

pub type Mat4 = [[f64; 4]; 4];

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn rot_x(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, -s, 0.0],
        [0.0, s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn rot_z(a: f64) -> Mat4 {
    let (s, c) = a.sin_cos();
    [
        [c, -s, 0.0, 0.0],
        [s, c, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

pub fn trans(x: f64, y: f64, z: f64) -> Mat4 {
    let mut m = identity();
    m[0][3] = x;
    m[1][3] = y;
    m[2][3] = z;
    m
}

/// Planar chain: each joint turns about z, then the link runs along x.
pub fn planar_fk(lengths: &[f64], q: &[f64]) -> Mat4 {
    let mut t = identity();
    for (l, qi) in lengths.iter().zip(q) {
        t = mat_mul(&t, &mat_mul(&rot_z(*qi), &trans(*l, 0.0, 0.0)));
    }
    t
}

/// Modified Denavit–Hartenberg parameters (a, d, alpha) of the seven-joint arm, plus the flange offset.
pub const ARM7_DH: [(f64, f64, f64); 7] = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -FRAC_PI_2),
    (0.0, 0.316, FRAC_PI_2),
    (0.0825, 0.0, FRAC_PI_2),
    (-0.0825, 0.384, -FRAC_PI_2),
    (0.0, 0.0, FRAC_PI_2),
    (0.088, 0.0, FRAC_PI_2),
];
pub const ARM7_FLANGE: f64 = 0.107;

pub fn arm7_fk(q: &[f64]) -> Mat4 {
    let mut t = identity();
    for (&(a, d, alpha), &qi) in ARM7_DH.iter().zip(q) {
        let link = mat_mul(
            &mat_mul(&rot_x(alpha), &trans(a, 0.0, 0.0)),
            &mat_mul(&rot_z(qi), &trans(0.0, 0.0, d)),
        );
        t = mat_mul(&t, &link);
    }
    mat_mul(&t, &trans(0.0, 0.0, ARM7_FLANGE))
}

pub fn position(t: &Mat4) -> [f64; 3] {
    [t[0][3], t[1][3], t[2][3]]
}

/// Rotation vector of `R_a R_bᵀ`, the small rotation from `b` to `a`.
pub fn rotation_delta(a: &Mat4, b: &Mat4) -> [f64; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| a[i][k] * b[j][k]).sum();
        }
    }
    let cos = ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let axis = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let scale = if angle < 1e-12 {
        0.5
    } else {
        angle / (2.0 * angle.sin())
    };
    [axis[0] * scale, axis[1] * scale, axis[2] * scale]
}

/// Central-difference geometric Jacobian (6 × n, row-major) of a 4×4 forward map.
pub fn fd_jacobian(fk: impl Fn(&[f64]) -> Mat4, q: &[f64], h: f64) -> Vec<[f64; 6]> {
    let mut cols = Vec::with_capacity(q.len());
    for i in 0..q.len() {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[i] += h;
        qm[i] -= h;
        let (tp, tm) = (fk(&qp), fk(&qm));
        let (pp, pm) = (position(&tp), position(&tm));
        let w = rotation_delta(&tp, &tm);
        cols.push([
            (pp[0] - pm[0]) / (2.0 * h),
            (pp[1] - pm[1]) / (2.0 * h),
            (pp[2] - pm[2]) / (2.0 * h),
            w[0] / (2.0 * h),
            w[1] / (2.0 * h),
            w[2] / (2.0 * h),
        ]);
    }
    cols
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    adaptive(&f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Root of a continuous `f` bracketed by `[lo, hi]`, by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Divergence stiffness straight from its definition.
pub fn k_d(k_zeta: f64, f_max: f64, x_b: f64, x: f64) -> f64 {
    let a = x.abs();
    if a > x_b {
        f_max / a
    } else {
        let beta = (f_max / x_b - k_zeta).ln() / (x_b * x_b);
        k_zeta + (beta * a * a).exp()
    }
}

/// Small-swing period of a solid cylinder of the given radius pivoting
/// about one end, swinging about a transverse axis.
pub fn rod_pendulum_period(length: f64, radius: f64, g: f64) -> f64 {
    let inertia_per_mass = length * length / 3.0 + radius * radius / 4.0;
    2.0 * std::f64::consts::PI * (inertia_per_mass / (g * length / 2.0)).sqrt()
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
