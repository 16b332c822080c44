//! Beta and Dirichlet sampling, log-densities, and their gradients with
//! respect to the concentration parameters.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::math::{digamma, ln, ln_gamma};

/// Price scalars are kept in `[RHO_EPS, 1 - RHO_EPS]` so both log terms of
/// the Beta density stay finite.
pub const RHO_EPS: f64 = 1e-4;
/// Smallest Dirichlet component before renormalisation.
pub const WEIGHT_FLOOR: f64 = 1e-10;
/// Added to every softplus output.
pub const CONCENTRATION_FLOOR: f64 = 1e-3;

pub fn clamp_rho(x: f64) -> f64 {
    x.clamp(RHO_EPS, 1.0 - RHO_EPS)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let d = Beta::new(a, b).expect("positive concentrations");
    let x: f64 = d.sample(rng);
    clamp_rho(if x.is_nan() { a / (a + b) } else { x })
}

pub fn beta_mean(a: f64, b: f64) -> f64 {
    clamp_rho(a / (a + b))
}

pub fn beta_log_pdf(x: f64, a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ln(x) + (b - 1.0) * ln(1.0 - x)
}

/// `(d/da, d/db)` of [`beta_log_pdf`].
pub fn beta_log_pdf_grad(x: f64, a: f64, b: f64) -> (f64, f64) {
    let s = digamma(a + b);
    (s - digamma(a) + ln(x), s - digamma(b) + ln(1.0 - x))
}

fn floor_and_normalize(mut w: Vec<f64>) -> Vec<f64> {
    w.iter_mut().for_each(|v| {
        if !(*v >= WEIGHT_FLOOR) {
            *v = WEIGHT_FLOOR;
        }
    });
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Dirichlet draw via normalised Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(gamma: &[f64], rng: &mut R) -> Vec<f64> {
    let draws = gamma
        .iter()
        .map(|&g| Gamma::new(g, 1.0).expect("positive concentration").sample(rng))
        .collect::<Vec<f64>>();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        floor_and_normalize(draws.into_iter().map(|d| d / sum).collect())
    } else {
        dirichlet_mean(gamma)
    }
}

pub fn dirichlet_mean(gamma: &[f64]) -> Vec<f64> {
    let sum: f64 = gamma.iter().sum();
    floor_and_normalize(gamma.iter().map(|g| g / sum).collect())
}

pub fn dirichlet_log_pdf(w: &[f64], gamma: &[f64]) -> f64 {
    let sum: f64 = gamma.iter().sum();
    let mut lp = ln_gamma(sum);
    for (&x, &g) in w.iter().zip(gamma) {
        lp += (g - 1.0) * ln(x) - ln_gamma(g);
    }
    lp
}

/// `d/dgamma_i` of [`dirichlet_log_pdf`].
pub fn dirichlet_log_pdf_grad(w: &[f64], gamma: &[f64]) -> Vec<f64> {
    let s = digamma(gamma.iter().sum());
    w.iter().zip(gamma).map(|(&x, &g)| s - digamma(g) + ln(x)).collect()
}
