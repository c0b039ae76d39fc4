//! Speculative decoding: a cheap draft proposes `gamma` tokens, the target
//! verifies them in one pass, and each proposal survives with probability
//! `alpha` independently of the others.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf::LatencyBreakdown;

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_GAMMA_MAX: u32 = 64;

/// Rejects acceptance rates outside the open unit interval.
pub fn validate_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::validation("alpha", format!("{alpha} is not in (0, 1)")))
    }
}

/// Expected tokens emitted per draft-and-verify iteration,
/// `(1 - alpha^gamma) / (1 - alpha)`. Continuous at both ends of `[0, 1]`.
pub fn expected_tokens_per_iteration(alpha: f64, gamma: u32) -> f64 {
    if alpha >= 1.0 {
        return f64::from(gamma);
    }
    if alpha <= 0.0 {
        return 1.0;
    }
    let powi = alpha.powi(gamma as i32);
    (1.0 - powi) / (1.0 - alpha)
}

/// Mean latency per emitted token.
pub fn spec_latency(t_target: f64, t_draft: f64, alpha: f64, gamma: u32) -> f64 {
    (t_target + f64::from(gamma) * t_draft) / expected_tokens_per_iteration(alpha, gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaChoice {
    pub gamma: u32,
    pub latency: f64,
}

/// Minimizes `iteration_time(gamma) / V(gamma)` over `1..=gamma_max`;
/// the first minimum wins so ties go to the smaller `gamma`.
pub fn optimal_gamma_by(alpha: f64, gamma_max: u32, mut iteration_time: impl FnMut(u32) -> f64) -> GammaChoice {
    let mut best = GammaChoice {
        gamma: 1,
        latency: f64::INFINITY,
    };
    for gamma in 1..=gamma_max.max(1) {
        let latency = iteration_time(gamma) / expected_tokens_per_iteration(alpha, gamma);
        if latency < best.latency {
            best = GammaChoice { gamma, latency };
        }
    }
    best
}

/// Draft length minimizing latency when both pass times are constant.
pub fn optimal_gamma(t_target: f64, t_draft: f64, alpha: f64, gamma_max: u32) -> GammaChoice {
    optimal_gamma_by(alpha, gamma_max, |g| t_target + f64::from(g) * t_draft)
}

/// Target and draft probabilities of one sampled token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogprobPair {
    pub p: f64,
    pub q: f64,
}

impl LogprobPair {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::validation("record", format!("p = {} is not in [0, 1]", self.p)));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::validation("record", format!("q = {} is not in (0, 1]", self.q)));
        }
        Ok(())
    }

    pub fn acceptance(&self) -> f64 {
        (self.p / self.q).min(1.0)
    }
}

/// Reads one JSON object `{"p": .., "q": ..}` per line. Blank lines are
/// skipped.
pub fn parse_records(text: &str) -> Result<Vec<LogprobPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: LogprobPair = serde_json::from_str(line).map_err(|source| Error::Parse {
            what: format!("record on line {}", i + 1),
            source,
        })?;
        record.validate()?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Pairwise summation; error grows with `log n` rather than `n`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (lo, hi) = values.split_at(values.len() / 2);
    pairwise_sum(lo) + pairwise_sum(hi)
}

/// Mean of `min(1, p/q)` with its standard error. Values are sorted before
/// summing so the result does not depend on record order.
pub fn estimate_alpha(records: &[LogprobPair]) -> Result<AlphaEstimate> {
    if records.is_empty() {
        return Err(Error::Empty("log-probability records"));
    }
    let mut values = Vec::with_capacity(records.len());
    for r in records {
        r.validate()?;
        values.push(r.acceptance());
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = pairwise_sum(&values) / n;
    let standard_error = if values.len() > 1 {
        let squares: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&squares) / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(AlphaEstimate {
        alpha: mean.clamp(0.0, 1.0),
        standard_error,
        samples: values.len(),
    })
}

/// One speculative operating point built from a verify pass and a draft pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeculativePoint {
    pub gamma: u32,
    pub expected_tokens: f64,
    /// Verify pass plus `gamma` draft passes.
    pub iteration_time: f64,
    pub token_latency: f64,
    pub gpu_seconds_per_token: f64,
    pub cost_per_million_tokens: f64,
}

impl SpeculativePoint {
    /// Combines per-pass figures. Cost is `(cost_P + gamma cost_Q) / V`.
    pub fn combine(target: &LatencyBreakdown, draft: &LatencyBreakdown, alpha: f64, gamma: u32) -> Result<Self> {
        if !target.feasible || !draft.feasible {
            return Err(Error::Precondition(
                "speculation needs feasible target and draft passes".into(),
            ));
        }
        let v = expected_tokens_per_iteration(alpha, gamma);
        let g = f64::from(gamma);
        let iteration_time = target.token_latency + g * draft.token_latency;
        Ok(SpeculativePoint {
            gamma,
            expected_tokens: v,
            iteration_time,
            token_latency: iteration_time / v,
            gpu_seconds_per_token: (target.gpu_seconds_per_token + g * draft.gpu_seconds_per_token) / v,
            cost_per_million_tokens: (target.cost_per_million_tokens + g * draft.cost_per_million_tokens) / v,
        })
    }

    pub fn tokens_per_second(&self) -> f64 {
        1.0 / self.token_latency
    }
}

/// Best speculative point when the verify pass costs the same for every
/// draft length.
pub fn spec_frontier_point(
    target: &LatencyBreakdown,
    draft: &LatencyBreakdown,
    alpha: f64,
    gamma_max: u32,
) -> Result<SpeculativePoint> {
    if !target.feasible || !draft.feasible {
        return Err(Error::Precondition(
            "speculation needs feasible target and draft passes".into(),
        ));
    }
    let choice = optimal_gamma(target.token_latency, draft.token_latency, alpha, gamma_max);
    SpeculativePoint::combine(target, draft, alpha, choice.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Tokens emitted per iteration: stop at the first rejection, at most
    /// `gamma`.
    fn simulate_v(alpha: f64, gamma: u32, iterations: u32, rng: &mut StdRng) -> f64 {
        let mut total = 0u64;
        for _ in 0..iterations {
            let mut j = 1;
            while j < gamma && rng.random::<f64>() < alpha {
                j += 1;
            }
            total += u64::from(j);
        }
        total as f64 / f64::from(iterations)
    }

    #[test]
    fn v_examples() {
        assert_eq!(expected_tokens_per_iteration(0.3, 1), 1.0);
        assert!(rel(expected_tokens_per_iteration(0.8, 400), 5.0) < 1e-12);
        assert!(rel(expected_tokens_per_iteration(0.8, 4), 2.952) < 1e-12);
        let mut rng = StdRng::seed_from_u64(7);
        assert!(rel(simulate_v(0.8, 4, 1_000_000, &mut rng), 2.952) < 5e-3);
    }

    #[test]
    fn latency_examples() {
        assert_eq!(spec_latency(0.01, 0.001, 0.6, 1), 0.011);
        assert!(rel(spec_latency(0.01, 0.001, 0.8, 7), 4.302e-3) < 1e-3);
        assert!(rel(spec_latency(0.01, 0.001, 1e-12, 5), 0.015) < 1e-9);
    }

    #[test]
    fn optimal_gamma_examples() {
        let c = optimal_gamma(0.01, 0.001, 0.8, 64);
        assert_eq!(c.gamma, 7);
        assert!(c.latency < spec_latency(0.01, 0.001, 0.8, 6));
        assert!(c.latency < spec_latency(0.01, 0.001, 0.8, 8));
        assert_eq!(optimal_gamma(0.01, 0.01, 0.5, 64).gamma, 1);
        assert_eq!(optimal_gamma(0.01, 1e-6, 0.99, 64).gamma, 64);
    }

    #[test]
    fn alpha_estimates() {
        let same: Vec<_> = [0.1, 0.5, 0.9].iter().map(|&p| LogprobPair { p, q: p }).collect();
        assert_eq!(estimate_alpha(&same).unwrap().alpha, 1.0);
        let pairs = [LogprobPair { p: 0.5, q: 1.0 }, LogprobPair { p: 1.0, q: 0.5 }];
        let est = estimate_alpha(&pairs).unwrap();
        assert_eq!(est.alpha, 0.75);
        assert!(rel(est.standard_error, 0.25) < 1e-12);
        assert!(estimate_alpha(&[]).is_err());
        assert!(estimate_alpha(&[LogprobPair { p: 0.5, q: 0.0 }]).is_err());
    }

    #[test]
    fn identical_models_converge_to_one() {
        // Draft equals target over a three-symbol alphabet.
        let dist = [0.2, 0.3, 0.5];
        let mut rng = StdRng::seed_from_u64(11);
        let records: Vec<_> = (0..10_000)
            .map(|_| {
                let u: f64 = rng.random();
                let i = if u < 0.2 {
                    0
                } else if u < 0.5 {
                    1
                } else {
                    2
                };
                LogprobPair { p: dist[i], q: dist[i] }
            })
            .collect();
        assert_eq!(estimate_alpha(&records).unwrap().alpha, 1.0);
    }

    #[test]
    fn records_round_trip() {
        let text = "{\"p\": 0.5, \"q\": 1.0}\n\n{\"p\": 1.0, \"q\": 0.5}\n";
        let recs = parse_records(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(parse_records("{\"p\": 0.5}").is_err());
        assert!(parse_records("{\"p\": 2.0, \"q\": 0.5}").is_err());
    }

    #[test]
    fn alpha_validation() {
        assert!(validate_alpha(0.0).is_err());
        assert!(validate_alpha(1.0).is_err());
        assert!(validate_alpha(f64::NAN).is_err());
        assert_eq!(validate_alpha(0.8).unwrap(), 0.8);
    }

    fn breakdown(latency: f64, cost: f64) -> LatencyBreakdown {
        LatencyBreakdown {
            memory_time: latency,
            arithmetic_time: 0.0,
            collective_latency_time: 0.0,
            kernel_launch_time: 0.0,
            network_bandwidth_time: 0.0,
            pp_boundary_time: 0.0,
            token_latency: latency,
            gpu_seconds_per_token: latency,
            cost_per_million_tokens: cost,
            feasible: true,
            memory_required_bytes: 0.0,
            memory_capacity_bytes: 1.0,
        }
    }

    #[test]
    fn frontier_point_combines_costs() {
        let p = spec_frontier_point(&breakdown(0.01, 1.0), &breakdown(0.001, 0.1), 0.8, 64).unwrap();
        assert_eq!(p.gamma, 7);
        let v = expected_tokens_per_iteration(0.8, 7);
        assert!(rel(p.cost_per_million_tokens, (1.0 + 0.7) / v) < 1e-12);
        let degenerate = spec_frontier_point(&breakdown(0.01, 1.0), &breakdown(0.001, 0.1), 1e-9, 64).unwrap();
        assert!(degenerate.token_latency >= 0.01);
        let mut bad = breakdown(0.01, 1.0);
        bad.feasible = false;
        assert!(spec_frontier_point(&bad, &breakdown(0.001, 0.1), 0.8, 64).is_err());
    }

    proptest! {
        #[test]
        fn latency_times_v_is_iteration(tp in 1e-4f64..1.0, tq in 1e-6f64..1.0, alpha in 0.01f64..0.99, gamma in 1u32..64) {
            let v = expected_tokens_per_iteration(alpha, gamma);
            let iteration = tp + f64::from(gamma) * tq;
            prop_assert!(((spec_latency(tp, tq, alpha, gamma) * v - iteration) / iteration).abs() <= 4.0 * f64::EPSILON);
            prop_assert!(v >= 1.0 && v <= f64::from(gamma) + 1e-12);
        }

        #[test]
        fn optimum_beats_every_gamma(tp in 1e-4f64..1.0, tq in 1e-6f64..1.0, alpha in 0.01f64..0.99, gamma_max in 1u32..80) {
            let best = optimal_gamma(tp, tq, alpha, gamma_max);
            for g in 1..=gamma_max {
                prop_assert!(best.latency <= spec_latency(tp, tq, alpha, g));
            }
        }

        #[test]
        fn estimate_in_unit_interval_and_order_free(pairs in prop::collection::vec((0.0f64..=1.0, 1e-3f64..=1.0), 1..200), seed in any::<u64>()) {
            let recs: Vec<_> = pairs.iter().map(|&(p, q)| LogprobPair { p, q }).collect();
            let a = estimate_alpha(&recs).unwrap();
            prop_assert!((0.0..=1.0).contains(&a.alpha));
            let mut shuffled = recs.clone();
            let mut rng = StdRng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(a, estimate_alpha(&shuffled).unwrap());
        }
    }
}
