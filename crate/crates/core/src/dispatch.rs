//! Merit-order dispatch: minimum generation cost for a fixed demand and
//! social-welfare clearing between producers and consumers.
//!
//! Both problems are linear programs over boxes with one balance row, so
//! sorting by cost (ascending) and benefit (descending) reaches a vertex
//! optimum without a general LP solver. Ties keep input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DispatchError {
    #[error("invalid dispatch problem: {0}")]
    Invalid(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub costs: Vec<f64>,
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
    pub benefits: Vec<f64>,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
    /// Fixed demand for min-cost mode. Absent means welfare clearing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_demand: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    pub objective: f64,
    pub price_range: [f64; 2],
}

impl DispatchResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dispatch result serializes")
    }
}

impl DispatchProblem {
    pub fn m(&self) -> usize {
        self.costs.len()
    }

    pub fn n(&self) -> usize {
        self.benefits.len()
    }

    pub fn validate(&self) -> Result<(), DispatchError> {
        let side = |name: &str, price: &[f64], lo: &[f64], hi: &[f64]| {
            if lo.len() != price.len() || hi.len() != price.len() {
                return Err(DispatchError::Invalid(format!(
                    "{name} bounds have lengths {}/{}, expected {}",
                    lo.len(),
                    hi.len(),
                    price.len()
                )));
            }
            for i in 0..price.len() {
                if !(price[i].is_finite() && lo[i].is_finite() && hi[i].is_finite()) {
                    return Err(DispatchError::Invalid(format!("{name}[{i}] is not finite")));
                }
                if lo[i] > hi[i] {
                    return Err(DispatchError::Invalid(format!(
                        "{name}[{i}] bounds out of order: {} > {}",
                        lo[i], hi[i]
                    )));
                }
            }
            Ok(())
        };
        side("producer", &self.costs, &self.s_min, &self.s_max)?;
        side("consumer", &self.benefits, &self.d_min, &self.d_max)?;
        if let Some(q) = self.total_demand {
            if !q.is_finite() {
                return Err(DispatchError::Invalid("total_demand is not finite".into()));
            }
        }
        Ok(())
    }
}

/// Indices sorted by `key`, stable in input order.
fn merit_order(key: &[f64], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..key.len()).collect();
    idx.sort_by(|&i, &j| {
        let ord = key[i].total_cmp(&key[j]);
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
    idx
}

/// Raises `x` from its lower bounds along `order` until `amount` is added.
/// Returns the unplaced remainder.
fn fill(order: &[usize], x: &mut [f64], hi: &[f64], mut amount: f64) -> f64 {
    for &i in order {
        if amount <= 0.0 {
            break;
        }
        let take = (hi[i] - x[i]).min(amount);
        if take > 0.0 {
            x[i] += take;
            amount -= take;
        }
    }
    amount
}

/// `sum B_j D_j - sum C_i S_i`.
pub fn social_welfare(problem: &DispatchProblem, s: &[f64], d: &[f64]) -> f64 {
    let benefit: f64 = problem.benefits.iter().zip(d).map(|(b, x)| b * x).sum();
    let cost: f64 = problem.costs.iter().zip(s).map(|(c, x)| c * x).sum();
    benefit - cost
}

pub fn generation_cost(problem: &DispatchProblem, s: &[f64]) -> f64 {
    problem.costs.iter().zip(s).map(|(c, x)| c * x).sum()
}

fn feasibility_slack(total: f64) -> f64 {
    1e-12 * (1.0 + total.abs())
}

/// Cheapest generation meeting `total_demand`. Consumers are filled from
/// their lower bounds in descending-benefit order so the result balances;
/// with no consumers `D` is empty.
pub fn min_cost_dispatch(
    problem: &DispatchProblem,
    total_demand: f64,
) -> Result<DispatchResult, DispatchError> {
    problem.validate()?;
    let lo: f64 = problem.s_min.iter().sum();
    let hi: f64 = problem.s_max.iter().sum();
    let slack = feasibility_slack(hi);
    if !(total_demand >= lo - slack && total_demand <= hi + slack) {
        return Err(DispatchError::Infeasible(format!(
            "demand {total_demand} outside generation range [{lo}, {hi}]"
        )));
    }
    let order = merit_order(&problem.costs, false);
    let mut s = problem.s_min.clone();
    fill(&order, &mut s, &problem.s_max, total_demand - lo);

    let mut d = problem.d_min.clone();
    if problem.n() > 0 {
        let dlo: f64 = problem.d_min.iter().sum();
        let dhi: f64 = problem.d_max.iter().sum();
        if total_demand < dlo - slack || total_demand > dhi + feasibility_slack(dhi) {
            return Err(DispatchError::Infeasible(format!(
                "demand {total_demand} outside consumer range [{dlo}, {dhi}]"
            )));
        }
        fill(&merit_order(&problem.benefits, true), &mut d, &problem.d_max, total_demand - dlo);
    }

    let marginal = order
        .iter()
        .rev()
        .find(|&&i| s[i] > problem.s_min[i])
        .or_else(|| order.iter().find(|&&i| s[i] < problem.s_max[i]))
        .map_or(0.0, |&i| problem.costs[i]);
    Ok(DispatchResult {
        objective: generation_cost(problem, &s),
        s,
        d,
        price_range: [marginal, marginal],
    })
}

/// Welfare-maximizing clearing.
///
/// Both sides first rise to the common floor `max(sum S_min, sum D_min)`,
/// then the cheapest remaining supply is matched to the most valuable
/// remaining demand while benefit is at least cost. The price range runs from
/// the last dispatched cost to the last served benefit; with no trade it is
/// the gap between the best unserved benefit and the cheapest unused cost.
pub fn clear_market(problem: &DispatchProblem) -> Result<DispatchResult, DispatchError> {
    problem.validate()?;
    let (m, n) = (problem.m(), problem.n());
    let s_lo: f64 = problem.s_min.iter().sum();
    let s_hi: f64 = problem.s_max.iter().sum();
    let d_lo: f64 = problem.d_min.iter().sum();
    let d_hi: f64 = problem.d_max.iter().sum();
    let floor = s_lo.max(d_lo);
    let ceil = s_hi.min(d_hi);
    if floor > ceil + feasibility_slack(ceil) {
        return Err(DispatchError::Infeasible(format!(
            "no balanced dispatch: minimum volume {floor} exceeds capacity {ceil}"
        )));
    }

    let p_order = merit_order(&problem.costs, false);
    let c_order = merit_order(&problem.benefits, true);
    let mut s = problem.s_min.clone();
    let mut d = problem.d_min.clone();
    fill(&p_order, &mut s, &problem.s_max, floor - s_lo);
    fill(&c_order, &mut d, &problem.d_max, floor - d_lo);

    let (mut pi, mut ci) = (0, 0);
    while pi < m && ci < n {
        let (i, j) = (p_order[pi], c_order[ci]);
        let room_s = problem.s_max[i] - s[i];
        let room_d = problem.d_max[j] - d[j];
        if room_s <= 0.0 {
            pi += 1;
            continue;
        }
        if room_d <= 0.0 {
            ci += 1;
            continue;
        }
        if problem.benefits[j] < problem.costs[i] {
            break;
        }
        let q = room_s.min(room_d);
        s[i] += q;
        d[j] += q;
    }

    let served_cost = p_order.iter().rev().find(|&&i| s[i] > problem.s_min[i]);
    let served_benefit = c_order.iter().rev().find(|&&j| d[j] > problem.d_min[j]);
    let lo = match served_cost {
        Some(&i) => problem.costs[i],
        None => c_order
            .iter()
            .find(|&&j| d[j] < problem.d_max[j])
            .map_or(0.0, |&j| problem.benefits[j]),
    };
    let hi = match served_benefit {
        Some(&j) => problem.benefits[j],
        None => p_order
            .iter()
            .find(|&&i| s[i] < problem.s_max[i])
            .map_or(lo, |&i| problem.costs[i]),
    };
    Ok(DispatchResult {
        objective: social_welfare(problem, &s, &d),
        s,
        d,
        price_range: [lo, hi],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> DispatchProblem {
        DispatchProblem {
            costs: vec![10.0, 20.0],
            s_min: vec![0.0, 0.0],
            s_max: vec![5.0, 5.0],
            benefits: vec![50.0, 15.0],
            d_min: vec![0.0, 0.0],
            d_max: vec![4.0, 4.0],
            total_demand: None,
        }
    }

    #[test]
    fn min_cost_fixture() {
        let r = min_cost_dispatch(&two_by_two(), 7.0).unwrap();
        assert_eq!(r.s, vec![5.0, 2.0]);
        assert_eq!(r.objective, 90.0);
        assert_eq!(r.d.iter().sum::<f64>(), 7.0);
    }

    #[test]
    fn min_cost_edges() {
        let r = min_cost_dispatch(&two_by_two(), 0.0).unwrap();
        assert_eq!(r.s, vec![0.0, 0.0]);
        assert_eq!(r.objective, 0.0);
        assert!(matches!(
            min_cost_dispatch(&two_by_two(), 11.0),
            Err(DispatchError::Infeasible(_))
        ));
    }

    #[test]
    fn min_cost_grid_oracle() {
        // Brute force over a 0.01 grid for the first producer.
        let p = two_by_two();
        let mut best = f64::INFINITY;
        for k in 0..=500 {
            let s1 = k as f64 * 0.01;
            let s2 = 7.0 - s1;
            if (0.0..=5.0).contains(&s2) {
                best = best.min(10.0 * s1 + 20.0 * s2);
            }
        }
        assert!((min_cost_dispatch(&p, 7.0).unwrap().objective - best).abs() < 1e-9);
    }

    #[test]
    fn clear_market_fixture() {
        let r = clear_market(&two_by_two()).unwrap();
        assert_eq!(r.s, vec![5.0, 0.0]);
        assert_eq!(r.d, vec![4.0, 1.0]);
        assert_eq!(r.objective, 165.0);
        assert_eq!(r.price_range, [10.0, 15.0]);
    }

    #[test]
    fn clear_market_grid_oracle() {
        let p = two_by_two();
        let mut best = f64::NEG_INFINITY;
        for i in 0..=50 {
            for j in 0..=40 {
                for k in 0..=40 {
                    let s1 = i as f64 * 0.1;
                    let (d1, d2) = (j as f64 * 0.1, k as f64 * 0.1);
                    let s2 = d1 + d2 - s1;
                    if (0.0..=5.0).contains(&s2) {
                        best = best.max(social_welfare(&p, &[s1, s2], &[d1, d2]));
                    }
                }
            }
        }
        assert!((best - 165.0).abs() < 1e-9);
    }

    #[test]
    fn no_trade_when_benefit_below_cost() {
        let p = DispatchProblem {
            benefits: vec![5.0, 8.0],
            ..two_by_two()
        };
        let r = clear_market(&p).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.price_range, [8.0, 10.0]);
    }

    #[test]
    fn single_pair_saturates_smaller_cap() {
        let p = DispatchProblem {
            costs: vec![12.0],
            s_min: vec![0.0],
            s_max: vec![5.0],
            benefits: vec![40.0],
            d_min: vec![0.0],
            d_max: vec![4.0],
            total_demand: None,
        };
        let r = clear_market(&p).unwrap();
        assert_eq!(r.s, vec![4.0]);
        assert_eq!(r.objective, 4.0 * (40.0 - 12.0));
    }

    #[test]
    fn welfare_examples() {
        let p = two_by_two();
        assert_eq!(social_welfare(&p, &[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let q = DispatchProblem {
            costs: vec![7.0],
            benefits: vec![7.0],
            s_min: vec![0.0],
            s_max: vec![1.0],
            d_min: vec![0.0],
            d_max: vec![1.0],
            total_demand: None,
        };
        assert_eq!(social_welfare(&q, &[1.0], &[1.0]), 0.0);
    }

    #[test]
    fn forced_minimum_is_served() {
        let p = DispatchProblem {
            d_min: vec![0.0, 3.0],
            benefits: vec![50.0, 1.0],
            ..two_by_two()
        };
        let r = clear_market(&p).unwrap();
        assert_eq!(r.d, vec![4.0, 3.0]);
        assert_eq!(r.s, vec![5.0, 2.0]);
        let inf = DispatchProblem {
            s_max: vec![1.0, 1.0],
            d_min: vec![0.0, 3.0],
            ..two_by_two()
        };
        assert!(clear_market(&inf).is_err());
    }

    #[test]
    fn rejects_unordered_bounds() {
        let p = DispatchProblem {
            s_min: vec![6.0, 0.0],
            ..two_by_two()
        };
        assert!(matches!(clear_market(&p), Err(DispatchError::Invalid(_))));
    }

    #[test]
    fn json_shape() {
        let r = clear_market(&two_by_two()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["objective"], 165.0);
        assert_eq!(v["S"][0], 5.0);
        assert_eq!(v["price_range"][1], 15.0);
    }
}
