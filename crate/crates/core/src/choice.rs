//! Passenger pool generation and multinomial-logit mode choice.
//!
//! Each passenger evaluates every live operator plus an outside option whose
//! utility is fixed at zero:
//!
//! `U = beta_0 - beta_t * wage * hours - (mean_wage / wage) * fare`

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Poisson};

use crate::math;
use crate::scenario::Scenario;

/// Nodes used for the closed-form expectation over the wage distribution.
const WAGE_QUADRATURE_NODES: usize = 40;
/// The potential pool is this multiple of the reference demand.
pub const POOL_FACTOR: f64 = 2.0;
pub const BETA0_BRACKET: (f64, f64) = (-50.0, 50.0);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ChoiceError {
    #[error("no beta_0 in [{lo}, {hi}] reaches the calibration target")]
    Bracket { lo: f64, hi: f64 },
    #[error("reference demand is zero everywhere")]
    NoDemand,
}

/// A request that chose one of the operators.
#[derive(Clone, Debug, PartialEq)]
pub struct Passenger {
    /// Creation order; breaks FCFS ties.
    pub id: u64,
    pub origin: usize,
    pub destination: usize,
    pub arrival_step: usize,
    pub deadline_step: usize,
    pub wage: f64,
    pub operator: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RequestBatch {
    /// Operator-choosing passengers in creation order.
    pub passengers: Vec<Passenger>,
    /// Size of the potential pool, including passengers who chose the outside option.
    pub pool_size: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct ChoiceContext<'a> {
    /// Fare quoted by each live operator for this trip.
    pub fares: &'a [f64],
    pub travel_time_hours: f64,
    pub mean_wage: f64,
    pub beta_0: f64,
    pub beta_t: f64,
}

/// Utility of riding with `option`; the outside option is implicitly 0.
pub fn utility(ctx: &ChoiceContext<'_>, wage: f64, option: usize) -> f64 {
    ctx.beta_0 - ctx.beta_t * wage * ctx.travel_time_hours - (ctx.mean_wage / wage) * ctx.fares[option]
}

/// Softmax over the given utilities (caller includes the outside option).
pub fn choice_probabilities(utilities: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; utilities.len()];
    probabilities_into(utilities, &mut out);
    out
}

fn probabilities_into(utilities: &[f64], out: &mut [f64]) {
    let max = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &u) in out.iter_mut().zip(utilities) {
        *o = math::exp(u - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Lognormal `(mu, sigma)` such that the mean equals `mean`.
fn lognormal_params(mean: f64, sigma: f64) -> (f64, f64) {
    (math::ln(mean) - 0.5 * sigma * sigma, sigma)
}

/// Draws an hourly wage for a passenger from `region`.
pub fn sample_wage<R: Rng + ?Sized>(s: &Scenario, region: usize, rng: &mut R) -> f64 {
    let mean = s.region_wage_mean[region];
    if s.wage_sigma == 0.0 {
        return mean;
    }
    let (mu, sigma) = lognormal_params(mean, s.wage_sigma);
    let w = LogNormal::new(mu, sigma)
        .expect("validated sigma")
        .sample(rng);
    w.max(f64::MIN_POSITIVE)
}

/// Quadrature points `(wage, weight)` with weights summing to 1 for one
/// region's wage distribution.
pub fn wage_nodes(mean: f64, sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        return vec![(mean, 1.0)];
    }
    let (mu, sigma) = lognormal_params(mean, sigma);
    let (x, w) = math::gauss_hermite(WAGE_QUADRATURE_NODES);
    let norm = math::sqrt(core::f64::consts::PI);
    x.iter()
        .zip(&w)
        .map(|(&x, &w)| (math::exp(mu + sigma * core::f64::consts::SQRT_2 * x), w / norm))
        .collect()
}

/// Samples the potential pool for step `t` and each member's choice.
///
/// `fares[o]` is operator `o`'s `n x n` fare matrix; the number of live
/// operators is `fares.len()`. Passenger ids continue from `next_id`.
pub fn generate_requests<R: Rng + ?Sized>(
    s: &Scenario,
    t: usize,
    fares: &[&[f64]],
    beta_0: f64,
    next_id: &mut u64,
    rng: &mut R,
) -> RequestBatch {
    let n = s.n_regions;
    let k = fares.len();
    let mean_wage = s.mean_wage();
    let mut batch = RequestBatch::default();
    let mut utilities = vec![0.0; k + 1];
    let mut probs = vec![0.0; k + 1];
    let mut od_fares = vec![0.0; k];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let rate = POOL_FACTOR * s.demand(t, i, j);
            if !(rate > 0.0) {
                continue;
            }
            let pool = Poisson::new(rate).expect("positive finite rate").sample(rng) as u64;
            batch.pool_size += pool;
            for (f, m) in od_fares.iter_mut().zip(fares) {
                *f = m[i * n + j];
            }
            let ctx = ChoiceContext {
                fares: &od_fares,
                travel_time_hours: s.travel_hours(i, j),
                mean_wage,
                beta_0,
                beta_t: s.beta_t,
            };
            for _ in 0..pool {
                let wage = sample_wage(s, i, rng);
                for (o, u) in utilities.iter_mut().take(k).enumerate() {
                    *u = utility(&ctx, wage, o);
                }
                utilities[k] = 0.0;
                probabilities_into(&utilities, &mut probs);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = k;
                for (o, p) in probs.iter().enumerate().take(k) {
                    acc += p;
                    if u < acc {
                        chosen = o;
                        break;
                    }
                }
                if chosen < k {
                    batch.passengers.push(Passenger {
                        id: *next_id,
                        origin: i,
                        destination: j,
                        arrival_step: t,
                        deadline_step: t + s.max_wait_steps as usize,
                        wage,
                        operator: chosen,
                    });
                    *next_id += 1;
                }
            }
        }
    }
    batch
}

/// Expected probability of choosing each operator, integrated over wages.
pub fn expected_choice(ctx: &ChoiceContext<'_>, wages: &[(f64, f64)]) -> Vec<f64> {
    let k = ctx.fares.len();
    let mut out = vec![0.0; k];
    let mut utilities = vec![0.0; k + 1];
    let mut probs = vec![0.0; k + 1];
    for &(wage, weight) in wages {
        for (o, u) in utilities.iter_mut().take(k).enumerate() {
            *u = utility(ctx, wage, o);
        }
        utilities[k] = 0.0;
        probabilities_into(&utilities, &mut probs);
        for (acc, p) in out.iter_mut().zip(&probs) {
            *acc += weight * p;
        }
    }
    out
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + math::exp(-x))
    } else {
        let e = math::exp(x);
        e / (1.0 + e)
    }
}

/// One OD-step cell of the calibration objective.
#[derive(Clone, Debug)]
pub struct CalibrationCell {
    pub ref_demand: f64,
    pub travel_time_hours: f64,
    pub fare: f64,
    pub wages: Vec<(f64, f64)>,
}

/// Finds `beta_0` so the expected number of passengers choosing any of
/// `n_operators` identically priced operators equals the reference demand,
/// i.e. half of the pool rejects. Deterministic bisection.
pub fn calibrate_beta0_cells(
    cells: &[CalibrationCell],
    n_operators: usize,
    mean_wage: f64,
    beta_t: f64,
) -> Result<f64, ChoiceError> {
    let target: f64 = cells.iter().map(|c| c.ref_demand).sum();
    if !(target > 0.0) {
        return Err(ChoiceError::NoDemand);
    }
    // With equal fares the acceptance probability is
    // logistic(beta_0 + ln k + c) per wage node; equal offsets are merged.
    let mut terms: Vec<(f64, f64)> = Vec::new();
    for c in cells {
        for &(wage, weight) in &c.wages {
            let offset = -beta_t * wage * c.travel_time_hours - (mean_wage / wage) * c.fare;
            terms.push((offset, POOL_FACTOR * c.ref_demand * weight));
        }
    }
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    terms.dedup_by(|b, a| {
        let same = a.0 == b.0;
        if same {
            a.1 += b.1;
        }
        same
    });
    let log_k = math::ln(n_operators as f64);
    let excess = |beta_0: f64| {
        let expected: f64 = terms.iter().map(|&(c, w)| w * logistic(beta_0 + log_k + c)).sum();
        expected / target - 1.0
    };
    let (mut lo, mut hi) = BETA0_BRACKET;
    if excess(lo) > 0.0 || excess(hi) < 0.0 {
        return Err(ChoiceError::Bracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Calibration cells for a scenario with every fare at the reference price.
pub fn calibration_cells(s: &Scenario) -> Vec<CalibrationCell> {
    let n = s.n_regions;
    let nodes: Vec<Vec<(f64, f64)>> = s
        .region_wage_mean
        .iter()
        .map(|&m| wage_nodes(m, s.wage_sigma))
        .collect();
    let mut cells = Vec::new();
    for t in 0..s.horizon {
        for i in 0..n {
            for j in 0..n {
                let d = s.demand(t, i, j);
                if i != j && d > 0.0 {
                    cells.push(CalibrationCell {
                        ref_demand: d,
                        travel_time_hours: s.travel_hours(i, j),
                        fare: s.price(t, i, j),
                        wages: nodes[i].clone(),
                    });
                }
            }
        }
    }
    cells
}

/// Calibrates `beta_0` for a market with `n_operators` live operators.
pub fn calibrate_beta0(s: &Scenario, n_operators: usize) -> Result<f64, ChoiceError> {
    calibrate_beta0_cells(&calibration_cells(s), n_operators, s.mean_wage(), s.beta_t)
}

/// Expected operator demand per step summed over the scenario, for given
/// per-operator fare tensors (time-major, `T x n x n`).
pub fn expected_operator_demand(s: &Scenario, beta_0: f64, fares: &[&[f64]]) -> Vec<f64> {
    let n = s.n_regions;
    let mean_wage = s.mean_wage();
    let nodes: Vec<Vec<(f64, f64)>> = s
        .region_wage_mean
        .iter()
        .map(|&m| wage_nodes(m, s.wage_sigma))
        .collect();
    let mut out = vec![0.0; fares.len()];
    let mut od = vec![0.0; fares.len()];
    for t in 0..s.horizon {
        for i in 0..n {
            for j in 0..n {
                let d = s.demand(t, i, j);
                if i == j || d <= 0.0 {
                    continue;
                }
                for (f, m) in od.iter_mut().zip(fares) {
                    *f = m[(t * n + i) * n + j];
                }
                let ctx = ChoiceContext {
                    fares: &od,
                    travel_time_hours: s.travel_hours(i, j),
                    mean_wage,
                    beta_0,
                    beta_t: s.beta_t,
                };
                for (acc, p) in out.iter_mut().zip(expected_choice(&ctx, &nodes[i])) {
                    *acc += POOL_FACTOR * d * p;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_synthetic_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(fares: &[f64], hours: f64, beta_0: f64) -> ChoiceContext<'_> {
        ChoiceContext {
            fares,
            travel_time_hours: hours,
            mean_wage: 20.0,
            beta_0,
            beta_t: 0.71,
        }
    }

    #[test]
    fn utility_vanishes_without_terms() {
        let c = ctx(&[0.0], 0.0, 0.0);
        assert_eq!(utility(&c, 20.0, 0), 0.0);
    }

    #[test]
    fn utility_matches_hand_arithmetic() {
        let c = ctx(&[10.0], 0.1, 5.0);
        let expected = 5.0 - 0.71 * 20.0 * 0.1 - (20.0 / 20.0) * 10.0;
        assert!((utility(&c, 20.0, 0) - expected).abs() < 1e-12);
        assert!((utility(&c, 20.0, 0) + 6.42).abs() < 1e-12);
    }

    #[test]
    fn time_term_is_linear_in_wage() {
        let c = ctx(&[0.0], 0.25, 0.0);
        assert!((utility(&c, 40.0, 0) - 2.0 * utility(&c, 20.0, 0)).abs() < 1e-12);
    }

    #[test]
    fn probabilities_examples() {
        let p = choice_probabilities(&[0.0, 0.0, 0.0]);
        for q in &p {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = choice_probabilities(&[0.0, -1e9, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[1] < 1e-300 && (p[2] - 0.5).abs() < 1e-12);
        let e = core::f64::consts::E;
        let p = choice_probabilities(&[1.0, 0.0]);
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.731).abs() < 1e-3 && (p[1] - 0.269).abs() < 1e-3);
    }

    #[test]
    fn probabilities_survive_huge_utilities() {
        let p = choice_probabilities(&[1e308, 1e308, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_wage_is_exact() {
        let mut s = generate_synthetic_scenario(3, 2, 0.0, 1).unwrap();
        s.wage_sigma = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_wage(&s, 1, &mut rng), 20.0);
    }

    #[test]
    fn wage_sample_mean_matches_parameterisation() {
        let mut s = generate_synthetic_scenario(2, 2, 0.0, 1).unwrap();
        s.region_wage_mean = vec![17.76, 17.76];
        s.wage_sigma = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_wage(&s, 0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean / 17.76 - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn wage_means_are_ordered() {
        let mut s = generate_synthetic_scenario(2, 2, 0.0, 1).unwrap();
        s.region_wage_mean = vec![10.0, 30.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m0 = (0..10_000).map(|_| sample_wage(&s, 0, &mut rng)).sum::<f64>();
        let m1 = (0..10_000).map(|_| sample_wage(&s, 1, &mut rng)).sum::<f64>();
        assert!(m0 < m1);
    }

    #[test]
    fn wage_nodes_reproduce_mean() {
        let nodes = wage_nodes(17.76, 0.25);
        let m: f64 = nodes.iter().map(|(v, w)| v * w).sum();
        let wsum: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
        assert!((m - 17.76).abs() < 1e-10);
    }

    #[test]
    fn calibration_trivial_cases() {
        let cell = CalibrationCell {
            ref_demand: 1.0,
            travel_time_hours: 0.0,
            fare: 0.0,
            wages: vec![(20.0, 1.0)],
        };
        let b1 = calibrate_beta0_cells(core::slice::from_ref(&cell), 1, 20.0, 0.71).unwrap();
        assert!(b1.abs() < 1e-9);
        // two operators: 2e^b / (1 + 2e^b) = 1/2  =>  b = -ln 2
        let b2 = calibrate_beta0_cells(&[cell], 2, 20.0, 0.71).unwrap();
        assert!((b2 + core::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn calibration_bracket_failure() {
        let cell = CalibrationCell {
            ref_demand: 1.0,
            travel_time_hours: 0.0,
            fare: 1e6,
            wages: vec![(20.0, 1.0)],
        };
        assert!(matches!(
            calibrate_beta0_cells(&[cell], 1, 20.0, 0.71),
            Err(ChoiceError::Bracket { .. })
        ));
    }

    #[test]
    fn calibrated_expectation_hits_reference_demand() {
        let s = generate_synthetic_scenario(6, 20, 1.3, 7).unwrap();
        for ops in [1, 2] {
            let b0 = calibrate_beta0(&s, ops).unwrap();
            let fares: Vec<&[f64]> = (0..ops).map(|_| s.ref_price.as_slice()).collect();
            let total: f64 = expected_operator_demand(&s, b0, &fares).iter().sum();
            let target: f64 = s.ref_demand.iter().sum();
            assert!((total / target - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn higher_fares_lower_share_after_calibration() {
        let s = generate_synthetic_scenario(6, 20, 1.3, 7).unwrap();
        let b0 = calibrate_beta0(&s, 1).unwrap();
        let raised: Vec<f64> = s.ref_price.iter().map(|p| p * 1.2).collect();
        let total: f64 = expected_operator_demand(&s, b0, &[&raised]).iter().sum();
        let target: f64 = s.ref_demand.iter().sum();
        assert!(total / (POOL_FACTOR * target) < 0.5);
    }

    #[test]
    fn zero_demand_gives_no_requests() {
        let mut s = generate_synthetic_scenario(3, 2, 0.0, 1).unwrap();
        s.ref_demand.iter_mut().for_each(|d| *d = 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut id = 0;
        let b = generate_requests(&s, 0, &[&s.ref_price[..9]], 0.0, &mut id, &mut rng);
        assert!(b.passengers.is_empty());
        assert_eq!(b.pool_size, 0);
    }

    #[test]
    fn prohibitive_fares_send_everyone_outside() {
        let s = generate_synthetic_scenario(4, 2, 0.5, 1).unwrap();
        let b0 = calibrate_beta0(&s, 2).unwrap();
        let fares = vec![1e9; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut id = 0;
        let b = generate_requests(&s, 0, &[&fares, &fares], b0, &mut id, &mut rng);
        assert!(b.pool_size > 0);
        assert!(b.passengers.is_empty());
    }

    #[test]
    fn symmetric_duopoly_splits_demand_evenly() {
        let s = generate_synthetic_scenario(4, 20, 0.5, 2).unwrap();
        let b0 = calibrate_beta0(&s, 2).unwrap();
        let fares = &s.ref_price[..16];
        let expected: f64 = s.ref_demand.iter().sum::<f64>() / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut id = 0;
        let mut counts = [0u64; 2];
        let mut pool = 0;
        let mut reps = 0.0;
        while pool < 100_000 {
            for t in 0..s.horizon {
                let b = generate_requests(&s, t, &[fares, fares], b0, &mut id, &mut rng);
                pool += b.pool_size;
                for p in &b.passengers {
                    counts[p.operator] += 1;
                }
            }
            reps += 1.0;
        }
        for c in counts {
            let share = c as f64 / reps;
            assert!((share / expected - 1.0).abs() < 0.02, "share {share} vs {expected}");
        }
    }

    #[test]
    fn requests_are_reproducible() {
        let s = generate_synthetic_scenario(4, 2, 0.5, 1).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let mut id = 0;
            generate_requests(&s, 1, &[&s.ref_price[..16]], 7.0, &mut id, &mut rng)
        };
        assert_eq!(run(), run());
    }
}
