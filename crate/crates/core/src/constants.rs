//! Derived constants of the convergence analysis, step-size caps, potential
//! coefficients and error floors.

use crate::error::{Error, Result};
use crate::problems::SmoothnessInput;

/// Moduli derived from [`SmoothnessInput`] and the penalty parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConstants {
    pub kappa: f64,
    /// Smoothness of the hyperobjective gradient.
    pub l: f64,
    /// Lipschitz constant of the inner solution map.
    pub l_ystar: f64,
    /// Inner penalty gap constant: `‖y*(x) − y*(x;λ)‖ ≤ C_in/λ`.
    pub c_in: f64,
    /// Outer penalty gap constant.
    pub c_ou: f64,
    pub mu_lambda: f64,
    pub l_lambda: f64,
    pub l_ystar_lambda: f64,
    pub u_lambda_sq: f64,
    pub w_gamma: f64,
    pub w_beta: f64,
    pub u_beta: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// Set when `λ ≤ 2 L_f1 / μ_g`, where the penalty gap bounds are not guaranteed.
    pub below_penalty_threshold: bool,
}

/// Step sizes, penalty parameter and iteration budget for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub iterations: usize,
}

impl StepSizes {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Upper limits on the three step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCaps {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Which p-constant multiplies the `y` consensus term of the potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum D4Variant {
    /// `d4 = 4 p3 α λ² / (1−ρ)`, as printed.
    #[default]
    Printed,
    /// `d4 = 4 p2 α λ² / (1−ρ)`.
    P2,
}

/// Weights `d0..d5` of the potential function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialCoefficients {
    pub d: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorFloors {
    /// Penalty error floor `C²`.
    pub penalty: f64,
    /// Heterogeneity error floor `B²`.
    pub heterogeneity: f64,
}

impl ErrorFloors {
    pub fn total(&self) -> f64 {
        self.penalty + self.heterogeneity
    }
}

pub fn derive_constants(s: &SmoothnessInput, lambda: f64) -> Result<AnalysisConstants> {
    s.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be positive and finite, got {lambda}")));
    }
    let SmoothnessInput { mu_g: mu, l_f1, l_g1, l_g2, c_fy } = *s;
    let kappa = l_f1.max(l_g1).max(c_fy) / mu;
    let l_ystar = l_g1 / mu;
    let l = (l_f1 + l_f1 * l_g2 / mu + c_fy * l_g2 / mu + c_fy * l_g2 * l_g2 / (mu * mu)) * (1.0 + l_ystar);
    let c_in = 2.0 * c_fy / mu;
    let c_ou = c_in * (1.0 + l_g1 / mu) * (l_f1 + l_g2 * c_in / 2.0);
    let mu_lambda = lambda * mu / 2.0;
    let l_lambda = l_f1 + lambda * l_g1;
    let l_ystar_lambda = 2.0 * l_lambda / (lambda * mu);
    let u_lambda_sq = l_f1 * l_f1 + lambda * lambda * l_g1 * l_g1;
    let w_gamma = 0.5 * mu * l_g1 / (mu + l_g1);
    let w_beta = 0.5 * mu_lambda * l_lambda / (mu_lambda + l_lambda);
    let u_beta = mu / (4.0 * l_g1);
    let lg_sq = l_g1 * l_g1;
    let ub_sq = u_beta * u_beta;
    let p1 = (96.0 * lg_sq / (w_gamma * w_gamma) + 96.0 / ub_sq + 24.0) * lg_sq;
    let p2 = (96.0 / ub_sq + 24.0) * lg_sq;
    let p3 = (48.0 / ub_sq + 12.0) * lg_sq;
    Ok(AnalysisConstants {
        kappa,
        l,
        l_ystar,
        c_in,
        c_ou,
        mu_lambda,
        l_lambda,
        l_ystar_lambda,
        u_lambda_sq,
        w_gamma,
        w_beta,
        u_beta,
        p1,
        p2,
        p3,
        below_penalty_threshold: lambda <= 2.0 * l_f1 / mu,
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidNetwork(rho));
    }
    Ok(())
}

fn min_of(terms: &[f64]) -> f64 {
    terms.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Individual candidates of the `γ` cap.
pub fn gamma_cap_terms(c: &AnalysisConstants, s: &SmoothnessInput, rho: f64) -> [f64; 5] {
    let (mu, l_g1) = (s.mu_g, s.l_g1);
    let gap = 1.0 - rho;
    [
        2.0 / (mu + l_g1),
        0.5 * (mu + l_g1) / (mu * l_g1),
        gap / (8.0 * c.p3.sqrt()),
        gap * c.p1.sqrt() / (24.0 * l_g1 * c.p3.sqrt()),
        gap / (16.0 * l_g1),
    ]
}

/// Individual candidates of the `β` cap.
pub fn beta_cap_terms(c: &AnalysisConstants, s: &SmoothnessInput, rho: f64, lambda: f64) -> [f64; 5] {
    let (mu, l_f1, l_g1) = (s.mu_g, s.l_f1, s.l_g1);
    let gap = 1.0 - rho;
    [
        1.0 / (lambda * l_g1),
        0.5 / (l_f1 + lambda * l_g1) + 1.0 / (lambda * mu),
        gap / (10.0 * lambda * c.p2.sqrt()),
        gap * c.p1.sqrt() / (48.0 * l_g1 * lambda * c.p2.sqrt()),
        gap / (32.0 * l_g1 * lambda),
    ]
}

/// Individual candidates of the `α` cap, given the `β` and `γ` actually used.
pub fn alpha_cap_terms(
    c: &AnalysisConstants,
    s: &SmoothnessInput,
    rho: f64,
    lambda: f64,
    beta: f64,
    gamma: f64,
) -> [f64; 7] {
    let (mu, l_g1) = (s.mu_g, s.l_g1);
    let gap = 1.0 - rho;
    [
        1.0 / (2.0 * c.l),
        gap.powf(2.0 / 3.0) / (8.0 * lambda.powf(2.0 / 3.0) * c.p1.cbrt()),
        c.w_gamma * gamma / (16.0 * c.l_ystar * lambda),
        mu * mu * beta / (80.0 * l_g1 * l_g1),
        gap / (5.0 * lambda * c.p1.sqrt()),
        gap * c.p3.sqrt() / (32.0 * l_g1 * lambda * c.p1.sqrt()),
        gap / (54.0 * l_g1 * lambda),
    ]
}

/// Largest admissible step sizes. `α` is evaluated at the `β` and `γ` caps.
pub fn stepsize_caps(c: &AnalysisConstants, s: &SmoothnessInput, rho: f64, lambda: f64) -> Result<StepCaps> {
    check_rho(rho)?;
    let gamma = min_of(&gamma_cap_terms(c, s, rho));
    let beta = min_of(&beta_cap_terms(c, s, rho, lambda));
    let alpha = min_of(&alpha_cap_terms(c, s, rho, lambda, beta, gamma));
    Ok(StepCaps { alpha, beta, gamma })
}

/// Relative tolerance of [`within_caps`]. Two `α` terms are linear in `β` and
/// `γ`, so scaling all three caps by the same factor lands exactly on the `α`
/// cap up to rounding.
pub const CAP_RTOL: f64 = 1e-12;

/// Whether `p` satisfies every cap, with `α`'s coupled terms evaluated at `p.beta` and `p.gamma`.
pub fn within_caps(p: &StepSizes, c: &AnalysisConstants, s: &SmoothnessInput, rho: f64) -> bool {
    let below = |v: f64, cap: f64| v <= cap * (1.0 + CAP_RTOL);
    below(p.gamma, min_of(&gamma_cap_terms(c, s, rho)))
        && below(p.beta, min_of(&beta_cap_terms(c, s, rho, p.lambda)))
        && below(p.alpha, min_of(&alpha_cap_terms(c, s, rho, p.lambda, p.beta, p.gamma)))
}

pub fn potential_coefficients(
    p: &StepSizes,
    c: &AnalysisConstants,
    s: &SmoothnessInput,
    rho: f64,
    variant: D4Variant,
) -> PotentialCoefficients {
    let (a, lam) = (p.alpha, p.lambda);
    let gap = 1.0 - rho;
    let d1 = 12.0 * c.u_lambda_sq * a / (c.w_beta * p.beta);
    let d2 = 12.0 * s.l_g1 * s.l_g1 * lam * lam * a / (c.w_gamma * p.gamma);
    let d3 = 4.0 * c.p1 * a * lam * lam / gap;
    let d4_p = match variant {
        D4Variant::Printed => c.p3,
        D4Variant::P2 => c.p2,
    };
    let d4 = 4.0 * d4_p * a * lam * lam / gap;
    let d5 = 4.0 * c.p3 * a * lam * lam / gap;
    PotentialCoefficients { d: [2.0, d1, d2, d3, d4, d5] }
}

impl PotentialCoefficients {
    /// `V = d0 Φ + d1 pen + d2 inner + d3 cons_x + d4 cons_y + d5 cons_z`.
    pub fn evaluate(&self, phi: f64, pen: f64, inner: f64, cons: [f64; 3]) -> f64 {
        let d = &self.d;
        d[0] * phi + d[1] * pen + d[2] * inner + d[3] * cons[0] + d[4] * cons[1] + d[5] * cons[2]
    }
}

pub fn error_floors(
    p: &StepSizes,
    c: &AnalysisConstants,
    s: &SmoothnessInput,
    rho: f64,
    b_f_sq: f64,
    b_g_sq: f64,
) -> ErrorFloors {
    let (a, b, g, lam) = (p.alpha, p.beta, p.gamma, p.lambda);
    let gap_sq = (1.0 - rho).powi(2);
    let lg_sq = s.l_g1 * s.l_g1;
    let lam_sq = lam * lam;
    let cin_sq = c.c_in * c.c_in;
    let penalty = 2.0 * c.c_ou * c.c_ou / lam_sq
        + 864.0 * cin_sq * lg_sq * c.p1 * lam_sq * a * a / gap_sq
        + 576.0 * cin_sq * lg_sq * c.p2 * lam_sq * b * b / gap_sq;
    let heterogeneity = 24.0 * c.p1 * lam_sq * a * a * b_f_sq / gap_sq
        + 48.0 * c.p2 * lam_sq * b * b * (b_f_sq + lam_sq * b_g_sq) / gap_sq
        + 24.0 * c.p3 * lam_sq * g * g * b_g_sq / gap_sq;
    ErrorFloors { penalty, heterogeneity }
}
