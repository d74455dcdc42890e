//! Float helpers over `libm` so the crate stays `no_std`.

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

pub(crate) fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

pub(crate) fn deg_to_rad(deg: f64) -> f64 {
    deg * core::f64::consts::PI / 180.0
}

pub(crate) fn rad_to_deg(rad: f64) -> f64 {
    rad * 180.0 / core::f64::consts::PI
}

pub(crate) fn cos_deg(deg: f64) -> f64 {
    libm::cos(deg_to_rad(deg))
}

pub(crate) fn sin_deg(deg: f64) -> f64 {
    libm::sin(deg_to_rad(deg))
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub(crate) fn wrap_deg(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Wraps an angle in degrees into `[0, 360)`.
pub(crate) fn wrap_360(deg: f64) -> f64 {
    let a = deg % 360.0;
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}
