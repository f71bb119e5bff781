//! Smooth profiles with prescribed zeros, unit slopes, chosen curvatures and
//! `±1` plateaus between the zeros.
//!
//! Near each zero `x_l` the profile is the quadratic
//! `v_l(x) = α_l (x - x_l) + (β_l / 2) (x - x_l)²`; away from the zeros it is
//! the plateau value of the interval. The two are glued with an even bump
//! `η` that equals 1 on `[0, ρ/2]`, vanishes beyond `ρ` and is smooth.

use serde::{Deserialize, Serialize};

use crate::error::ProfileError;
use crate::grid::{Grid, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierParams {
    pub rho: f64,
}

/// Even smooth cut-off: 1 on `|x| <= ρ/2`, 0 on `|x| >= ρ`, strictly between on the band.
pub fn mollifier(x: f64, p: MollifierParams) -> f64 {
    let s = x.abs() / p.rho;
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let h0 = -(2.0 * s - 1.5) / ((s - 0.5).powi(2) * (s - 1.0));
        1.0 / (1.0 + h0.exp())
    }
}

/// `1 - mollifier(x)`, accurate where the mollifier rounds to 1.
pub fn mollifier_complement(x: f64, p: MollifierParams) -> f64 {
    let s = x.abs() / p.rho;
    if s <= 0.5 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let h0 = -(2.0 * s - 1.5) / ((s - 0.5).powi(2) * (s - 1.0));
        1.0 / (1.0 + (-h0).exp())
    }
}

/// Zeros `0 = x_0 < … < x_{n+1} = 1`, alternating unit slopes, curvatures in
/// `{-1, 0, 1}` vanishing at the endpoints, and the plateau radius `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub zeros: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub rho: f64,
}

/// Discrete sup-norms of a built profile and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileBounds {
    pub sup: f64,
    pub sup_d1: f64,
    pub sup_d2: f64,
}

impl ProfileSpec {
    /// Validated spec. `rho = None` picks a quarter of the smallest gap.
    pub fn new(
        zeros: Vec<f64>,
        alphas: Vec<f64>,
        betas: Vec<f64>,
        rho: Option<f64>,
    ) -> Result<Self, ProfileError> {
        let min_gap = min_gap(&zeros);
        let spec = Self {
            rho: rho.unwrap_or(min_gap / 4.0),
            zeros,
            alphas,
            betas,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Spec from interior zeros only. The profile is positive on the first
    /// interval when `lambda = 1` and alternates from there.
    pub fn from_interior(
        interior: &[f64],
        lambda: f64,
        interior_betas: &[f64],
        rho: Option<f64>,
    ) -> Result<Self, ProfileError> {
        let n = interior.len();
        if interior_betas.len() != n {
            return Err(ProfileError::Length {
                what: "curvatures",
                expected: n + 2,
                got: interior_betas.len() + 2,
            });
        }
        let mut zeros = Vec::with_capacity(n + 2);
        zeros.push(0.0);
        zeros.extend_from_slice(interior);
        zeros.push(1.0);
        let alphas = (0..n + 2)
            .map(|l| if l % 2 == 0 { lambda } else { -lambda })
            .collect();
        let mut betas = Vec::with_capacity(n + 2);
        betas.push(0.0);
        betas.extend_from_slice(interior_betas);
        betas.push(0.0);
        Self::new(zeros, alphas, betas, rho)
    }

    pub fn n_interior(&self) -> usize {
        self.zeros.len() - 2
    }

    pub fn interior_zeros(&self) -> &[f64] {
        &self.zeros[1..self.zeros.len() - 1]
    }

    /// Smallest distance between consecutive zeros, endpoints included.
    pub fn min_gap(&self) -> f64 {
        min_gap(&self.zeros)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let m = self.zeros.len();
        if m < 2 {
            return Err(ProfileError::Length {
                what: "zeros",
                expected: 2,
                got: m,
            });
        }
        if self.alphas.len() != m {
            return Err(ProfileError::Length {
                what: "slopes",
                expected: m,
                got: self.alphas.len(),
            });
        }
        if self.betas.len() != m {
            return Err(ProfileError::Length {
                what: "curvatures",
                expected: m,
                got: self.betas.len(),
            });
        }
        if self.zeros[0] != 0.0
            || self.zeros[m - 1] != 1.0
            || self.zeros.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(ProfileError::ZerosNotIncreasing);
        }
        for (l, a) in self.alphas.iter().enumerate() {
            if a.abs() != 1.0 || (l > 0 && a * self.alphas[l - 1] >= 0.0) {
                return Err(ProfileError::SlopesNotAlternating(l));
            }
        }
        for (index, &b) in self.betas.iter().enumerate() {
            if b != -1.0 && b != 0.0 && b != 1.0 {
                return Err(ProfileError::BadCurvature { index, value: b });
            }
        }
        if self.betas[0] != 0.0 || self.betas[m - 1] != 0.0 {
            return Err(ProfileError::EndpointCurvature);
        }
        let max = self.min_gap() / 2.0;
        if !(self.rho > 0.0) || self.rho > max * (1.0 + 1e-12) {
            return Err(ProfileError::RhoOutOfRange { rho: self.rho, max });
        }
        Ok(())
    }

    /// Exact profile value at `x ∈ [0, 1]`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let m = self.zeros.len();
        let l = match self.zeros.partition_point(|&z| z <= x) {
            0 => 0,
            p if p >= m => m - 2,
            p => p - 1,
        };
        let p = MollifierParams { rho: self.rho };
        let quad = |j: usize| {
            let d = x - self.zeros[j];
            self.alphas[j] * d + 0.5 * self.betas[j] * d * d
        };
        let e_left = mollifier(x - self.zeros[l], p);
        let e_right = mollifier(x - self.zeros[l + 1], p);
        e_left * quad(l) + e_right * quad(l + 1) + (1.0 - e_left - e_right) * self.alphas[l]
    }

    /// Samples the profile; the result satisfies the Dirichlet condition.
    pub fn build(&self, grid: Grid) -> Result<GridFunction, ProfileError> {
        self.validate()?;
        if grid.h() > self.rho / 8.0 {
            return Err(ProfileError::GridTooCoarse {
                h: grid.h(),
                rho: self.rho,
            });
        }
        Ok(GridFunction::dirichlet_from_fn(grid, |x| self.evaluate(x)))
    }

    /// Discrete sup-norms of `w`, `w'` and `w''` over the nodes.
    pub fn uniform_bound_check(&self, grid: Grid) -> Result<ProfileBounds, ProfileError> {
        let w = self.build(grid)?;
        let n = grid.n_cells();
        let mut bounds = ProfileBounds {
            sup: w.sup_norm(),
            sup_d1: 0.0,
            sup_d2: 0.0,
        };
        for i in 1..n {
            let d1 = w.central_difference(i).expect("interior node");
            let d2 = w.second_difference(i).expect("interior node");
            bounds.sup_d1 = bounds.sup_d1.max(d1.abs());
            bounds.sup_d2 = bounds.sup_d2.max(d2.abs());
        }
        Ok(bounds)
    }
}

fn min_gap(zeros: &[f64]) -> f64 {
    zeros
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}
