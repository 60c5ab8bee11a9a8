//! Float helpers routed through `libm` so the crate stays `no_std`.

pub use core::f64::consts::PI;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

/// `x^k` for small non-negative integer `k` by repeated multiplication.
#[inline]
pub fn powi(x: f64, k: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    // omega_0 = 1, omega_1 = 2, omega_n = (2 pi / n) omega_{n-2}
    let mut w = if n.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        w *= 2.0 * PI / k as f64;
        k += 2;
    }
    w
}

/// Area of the unit sphere `S^{n-1} ⊂ R^n`, equal to `n * omega_n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}
