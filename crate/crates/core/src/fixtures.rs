//! Named analytic fixtures with closed-form oracles.

use std::f64::consts::PI;

use crate::grid::{Grid, GridFunction};
use crate::profile::ProfileSpec;

/// `sin(πx) + sin(2πx)`, whose single interior zero starts at 2/3.
pub fn two_mode(grid: Grid) -> GridFunction {
    GridFunction::dirichlet_from_fn(grid, |x| (PI * x).sin() + (2.0 * PI * x).sin())
}

/// Zero of the heat flow from [`two_mode`]: `cos(πξ) = -e^{3π² t}/2`.
pub fn two_mode_zero(t: f64) -> f64 {
    (-(3.0 * PI * PI * t).exp() / 2.0).acos() / PI
}

/// Speed of [`two_mode_zero`].
pub fn two_mode_speed(t: f64) -> f64 {
    let xi = two_mode_zero(t);
    1.5 * PI * (3.0 * PI * PI * t).exp() / (PI * xi).sin()
}

/// Time at which [`two_mode_zero`] reaches `x ∈ (2/3, 1)`.
pub fn two_mode_hitting_time(x: f64) -> f64 {
    (-2.0 * (PI * x).cos()).ln() / (3.0 * PI * PI)
}

/// End of the window on which the two-mode curve is compared: `0.9 ln 2 / (3π²)`.
pub fn two_mode_window() -> f64 {
    0.9 * 2.0_f64.ln() / (3.0 * PI * PI)
}

/// `sin(kπx)`.
pub fn sin_k(grid: Grid, k: u32) -> GridFunction {
    GridFunction::dirichlet_from_fn(grid, |x| (k as f64 * PI * x).sin())
}

/// Flat profile positive on the first interval with the given interior zeros.
pub fn flat_profile(interior: &[f64]) -> ProfileSpec {
    ProfileSpec::from_interior(interior, 1.0, &vec![0.0; interior.len()], None)
        .expect("fixture zeros are separated")
}

/// Two-zero pattern of the introductory figure: zeros at 0.3 and 0.7.
/// `None` when the grid is too coarse for its plateaus.
pub fn figure1_two_zeros(grid: Grid) -> Option<GridFunction> {
    flat_profile(&[0.3, 0.7]).build(grid).ok()
}

/// Registry lookup used by configuration files.
pub fn by_name(name: &str, grid: Grid) -> Option<GridFunction> {
    match name {
        "two-mode" => Some(two_mode(grid)),
        "figure1-two-zeros" => figure1_two_zeros(grid),
        _ => {
            let k: u32 = name.strip_prefix("sin-")?.parse().ok()?;
            (k >= 1).then(|| sin_k(grid, k))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_is_consistent() {
        assert!((two_mode_zero(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((two_mode_speed(0.0) - PI * 3.0_f64.sqrt()).abs() < 1e-12);
        let theta = two_mode_hitting_time(0.7);
        assert!((theta - 5.464e-3).abs() < 1e-6);
        assert!((two_mode_zero(theta) - 0.7).abs() < 1e-12);
        let t = 0.01;
        let fd = (two_mode_zero(t + 1e-7) - two_mode_zero(t - 1e-7)) / 2e-7;
        assert!((fd - two_mode_speed(t)).abs() < 1e-5 * fd);
    }

    #[test]
    fn registry() {
        let g = Grid::new(200).unwrap();
        assert_eq!(by_name("sin-2", g), Some(sin_k(g, 2)));
        assert!(by_name("two-mode", g).is_some());
        assert!(by_name("figure1-two-zeros", g).is_some());
        assert!(by_name("figure1-two-zeros", Grid::new(50).unwrap()).is_none());
        assert!(by_name("sin-0", g).is_none());
        assert!(by_name("cubic", g).is_none());
    }
}
