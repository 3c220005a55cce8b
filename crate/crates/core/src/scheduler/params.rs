//! Choosing iteration count, dead time, data time, skew tolerance and lifetime.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ClockParams;
use crate::num::{self, Q};
use crate::protocol::plan::{discovery_plan, honest_tolerance, verification_slots, IterationLayout};
use crate::scheduler::schedule::slot_count;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParamsError {
    #[error("eps must lie in (0, 1)")]
    BadEpsilon,
    #[error("no feasible lifetime below the ceiling {0}")]
    NoFeasibleParams(String),
}

/// Knobs that are not part of the selection problem itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamContext {
    pub quantum: Q,
    pub k_delay: Q,
    /// Packet duration per bit of timestamp width.
    pub w_unit: Q,
    pub t_ceiling: Q,
}

impl Default for ParamContext {
    fn default() -> Self {
        ParamContext { quantum: Q::one(), k_delay: Q::one(), w_unit: Q::one(), t_ceiling: num::pow(&Q::from_integer(2.into()), 200) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_iter: u64,
    pub dead_time: Q,
    /// Data time per iteration.
    pub data_time: Q,
    pub eps_a: Q,
    /// Skew-consistency tolerance that absorbs honest quantization error.
    pub eps_b: Q,
    pub t_life: Q,
    pub eps_l: Q,
    pub eps_d: Q,
    pub k_r: u64,
    pub w: Q,
    /// Discovery length in reference-estimate units (first data instant).
    pub discovery: Q,
    /// Per-iteration overhead besides discovery.
    pub iteration_overhead: Q,
}

impl ProtocolParams {
    /// Left-hand sides of the four selection inequalities, in order, each
    /// paired with the bound it must meet.
    pub fn inequalities(&self, n: usize, a_max: &Q, u0: &Q) -> [(Q, Q, bool); 4] {
        let ni = Q::from_integer((self.n_iter as i64).into());
        let first = &ni / (&ni + Q::from_integer((self.k_r as i64).into()) * num::pow(&Q::from_integer(2.into()), n as u32));
        let o = &self.discovery + &self.iteration_overhead;
        let second = &self.data_time / (&o + &self.data_time);
        let third = &ni * (&o + &self.data_time);
        let a2 = a_max * a_max;
        let fourth = Q::from_integer(2.into()) * &a2 * &self.eps_a * &self.t_life + &a2 * u0;
        [
            (first, Q::one() - &self.eps_l, true),
            (second, Q::one() - &self.eps_d, true),
            (third, self.t_life.clone(), false),
            (fourth, self.dead_time.clone(), false),
        ]
    }

    pub fn satisfied(&self, n: usize, a_max: &Q, u0: &Q) -> bool {
        self.inequalities(n, a_max, u0).iter().all(|(lhs, rhs, ge)| if *ge { lhs >= rhs } else { lhs <= rhs })
    }
}

/// Largest loss fraction `e` (on a fine grid) with `(1 - e)^2 >= 1 - eps`.
pub fn split_epsilon(eps: &Q) -> Q {
    let target = Q::one() - eps;
    let grid = Q::from_integer((1i64 << 24).into());
    let approx = 1.0 - num::to_f64(&target).sqrt();
    let mut e = (num::from_f64(approx).unwrap_or_else(Q::zero) * &grid).floor() / &grid;
    while e.is_positive() && (Q::one() - &e) * (Q::one() - &e) < target {
        e -= Q::one() / &grid;
    }
    e
}

/// Smallest `n_iter >= 1` with `n_iter / (n_iter + 2^n k_r) >= 1 - eps_l`.
pub fn smallest_n_iter(n: usize, k_r: u64, eps_l: &Q) -> u64 {
    let m = Q::from_integer(((k_r as i64) << n).into());
    let need = ((Q::one() - eps_l) * &m / eps_l).ceil();
    let v: i64 = need.to_integer().try_into().unwrap_or(i64::MAX);
    v.max(1) as u64
}

pub fn select_parameters(n: usize, a_max: &Q, u0: &Q, k_r: u64, eps: &Q, ctx: &ParamContext) -> Result<ProtocolParams, ParamsError> {
    if !eps.is_positive() || *eps >= Q::one() {
        return Err(ParamsError::BadEpsilon);
    }
    let eps_l = split_epsilon(eps);
    let eps_d = eps_l.clone();
    let n_iter = smallest_n_iter(n, k_r, &eps_l);
    let ni = Q::from_integer((n_iter as i64).into());
    let two = Q::from_integer(2.into());
    let a2 = a_max * a_max;
    let dead_slots = two.clone() * Q::from_integer(((slot_count(n) + verification_slots(n)) as i64).into());
    let eps_a = &eps_d / (Q::from_integer(4.into()) * &a2 * &dead_slots * &ni);

    let mut t = two.clone();
    while t <= ctx.t_ceiling {
        let w = num::max(&Q::one(), &Q::from_integer((num::log2_ceil(&t) as i64).into())) * &ctx.w_unit;
        let cp = ClockParams { a_max: a_max.clone(), u0: u0.clone(), quantum: ctx.quantum.clone(), k_delay: ctx.k_delay.clone(), eps_a: eps_a.clone(), eps_b: Q::zero() };
        let cp = honest_tolerance(n, &cp, &w);
        let disc = discovery_plan(n, &cp, &w).data_start;
        let dead = num::ceil_to(&(&two * &a2 * &eps_a * &t + &a2 * u0), &ctx.quantum);
        let layout = IterationLayout::new(n, dead.clone(), &Q::zero(), w.clone());
        let ovh = layout.overhead();
        let o = &disc + &ovh;
        if &ni * &o / &eps_d <= t {
            // discovery is charged to every iteration, leaving slack at the end
            let data_time = &t / &ni - &o;
            let p = ProtocolParams {
                n_iter,
                dead_time: dead,
                data_time,
                eps_a,
                eps_b: cp.eps_b,
                t_life: t,
                eps_l,
                eps_d,
                k_r,
                w,
                discovery: disc,
                iteration_overhead: ovh,
            };
            debug_assert!(p.satisfied(n, a_max, u0));
            return Ok(p);
        }
        t *= &two;
    }
    Err(ParamsError::NoFeasibleParams(num::fmt(&ctx.t_ceiling)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{frac, int};

    #[test]
    fn iteration_count_examples() {
        let e = split_epsilon(&frac(1, 2));
        assert!((num::to_f64(&e) - 0.2929).abs() < 1e-3);
        assert_eq!(smallest_n_iter(2, 1, &e), 10);
        // 12 also meets the bound
        assert!(frac(12, 16) >= Q::one() - &e);
        let e = split_epsilon(&frac(99, 100));
        assert_eq!(smallest_n_iter(2, 1, &e), 1);
    }

    #[test]
    fn selected_parameters_satisfy_all_inequalities() {
        let ctx = ParamContext::default();
        for (n, a) in [(2, int(1)), (3, frac(3, 2)), (3, int(2))] {
            let p = select_parameters(n, &a, &int(1), 2, &frac(1, 4), &ctx).unwrap();
            assert!(p.satisfied(n, &a, &int(1)), "n={n}");
            for (lhs, rhs, ge) in p.inequalities(n, &a, &int(1)) {
                assert!(if ge { lhs >= rhs } else { lhs <= rhs });
            }
        }
    }

    #[test]
    fn ceiling_is_enforced() {
        let ctx = ParamContext { t_ceiling: int(1000), ..ParamContext::default() };
        assert!(matches!(select_parameters(3, &int(2), &int(1), 4, &frac(1, 10), &ctx), Err(ParamsError::NoFeasibleParams(_))));
        assert_eq!(select_parameters(3, &int(2), &int(1), 4, &int(1), &ctx), Err(ParamsError::BadEpsilon));
    }
}
