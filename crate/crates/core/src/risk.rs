//! Loss distributions over scenarios, V@R/CV@R and quantiles.

use serde::{Deserialize, Serialize};

use crate::domain::{misplaced_with_ranks, Layout, ScenarioSet, PROBABILITY_TOLERANCE};
use crate::error::{invalid_input, invalid_param, Result};

/// Discrete distribution of an integral loss, sorted by ascending loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    entries: Vec<(u64, f64)>,
}

/// Value-at-risk `var_gamma` and conditional value-at-risk at one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarResult {
    pub var_gamma: f64,
    pub cvar: f64,
}

impl LossDistribution {
    /// Aggregates `(loss, probability)` pairs; repeated losses are merged.
    pub fn new(pairs: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut entries: Vec<(u64, f64)> = pairs.into_iter().collect();
        if entries.is_empty() {
            return Err(invalid_input("loss distribution is empty"));
        }
        if let Some(&(_, p)) = entries.iter().find(|(_, p)| !(*p >= 0.0 && *p <= 1.0)) {
            return Err(invalid_input(format!("probability {p} outside [0, 1]")));
        }
        entries.sort_by_key(|&(loss, _)| loss);
        entries.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid_input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { entries })
    }

    /// Point mass at `loss`.
    pub fn degenerate(loss: u64) -> Self {
        Self {
            entries: vec![(loss, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn expected(&self) -> f64 {
        self.entries.iter().map(|&(l, p)| l as f64 * p).sum()
    }

    pub fn max_loss(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.0)
    }

    pub fn min_loss(&self) -> u64 {
        self.entries.first().map_or(0, |e| e.0)
    }

    /// Smallest loss whose cumulative probability reaches `q`.
    pub fn quantile(&self, q: f64) -> Result<u64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid_param(format!("quantile level {q} outside [0, 1]")));
        }
        Ok(self.lower_quantile(q))
    }

    fn lower_quantile(&self, q: f64) -> u64 {
        let mut cumulative = 0.0;
        for &(loss, p) in &self.entries {
            cumulative += p;
            if cumulative >= q - PROBABILITY_TOLERANCE {
                return loss;
            }
        }
        self.max_loss()
    }

    /// Rockafellar-Uryasev CV@R with `gamma` at the `alpha`-quantile.
    pub fn cvar(&self, alpha: f64) -> Result<CvarResult> {
        check_alpha(alpha)?;
        let gamma = self.lower_quantile(alpha) as f64;
        Ok(CvarResult {
            var_gamma: gamma,
            cvar: self.cvar_objective(alpha, gamma),
        })
    }

    /// `gamma + 1/(1-alpha) * E[(loss - gamma)+]` for an arbitrary `gamma`.
    pub fn cvar_objective(&self, alpha: f64, gamma: f64) -> f64 {
        let excess: f64 = self.entries.iter().map(|&(l, p)| p * (l as f64 - gamma).max(0.0)).sum();
        gamma + excess / (1.0 - alpha)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid_param(format!("alpha = {alpha} outside [0, 1)")));
    }
    Ok(())
}

/// CV@R of `losses` at probability level `alpha`.
pub fn empirical_cvar(losses: &LossDistribution, alpha: f64) -> Result<CvarResult> {
    losses.cvar(alpha)
}

pub fn quantile(losses: &LossDistribution, q: f64) -> Result<u64> {
    losses.quantile(q)
}

/// Distribution of the misplaced-container count of `layout` over `scenarios`.
pub fn loss_distribution(layout: &Layout, scenarios: &ScenarioSet) -> Result<LossDistribution> {
    let losses = scenario_losses(layout, scenarios)?;
    LossDistribution::new(
        losses
            .into_iter()
            .zip(scenarios.iter())
            .map(|(l, s)| (l as u64, s.probability)),
    )
}

/// Misplaced count per scenario, in scenario order.
pub fn scenario_losses(layout: &Layout, scenarios: &ScenarioSet) -> Result<Vec<usize>> {
    if layout.num_classes() != scenarios.num_ships() {
        return Err(invalid_input(format!(
            "layout has {} classes, scenarios cover {} ships",
            layout.num_classes(),
            scenarios.num_ships()
        )));
    }
    Ok(scenarios
        .iter()
        .map(|s| misplaced_with_ranks(layout.stacks(), s.order.ranks()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ArrivalOrder, Scenario};
    use proptest::prelude::*;

    fn dist(pairs: &[(u64, f64)]) -> LossDistribution {
        LossDistribution::new(pairs.iter().copied()).unwrap()
    }

    /// Minimum of the Rockafellar-Uryasev objective over the loss support.
    fn scan_minimum(d: &LossDistribution, alpha: f64) -> f64 {
        d.entries()
            .iter()
            .map(|&(l, _)| d.cvar_objective(alpha, l as f64))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn alpha_zero_is_the_mean() {
        let d = dist(&[(0, 0.5), (2, 0.25), (4, 0.25)]);
        assert!((d.cvar(0.0).unwrap().cvar - 1.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_distribution() {
        let r = dist(&[(3, 1.0)]).cvar(0.9).unwrap();
        assert_eq!(r.var_gamma, 3.0);
        assert!((r.cvar - 3.0).abs() < 1e-12);
    }

    #[test]
    fn upper_tail_at_three_quarters() {
        let d = dist(&[(0, 0.5), (2, 0.25), (4, 0.25)]);
        // scan over {0, 2, 4}: objectives 6, 4, 4
        assert!((scan_minimum(&d, 0.75) - 4.0).abs() < 1e-12);
        let r = d.cvar(0.75).unwrap();
        assert_eq!(r.var_gamma, 2.0);
        assert!((r.cvar - 4.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_out_of_range() {
        let d = dist(&[(1, 1.0)]);
        assert!(d.cvar(1.0).is_err());
        assert!(d.cvar(-0.1).is_err());
        assert!(d.cvar(f64::NAN).is_err());
    }

    #[test]
    fn quantiles_by_cumulative_scan() {
        let d = dist(&[(0, 0.97), (2, 0.02), (4, 0.01)]);
        assert_eq!(d.quantile(0.75).unwrap(), 0);
        assert_eq!(d.quantile(0.99).unwrap(), 2);
        assert_eq!(d.quantile(1.0).unwrap(), 4);
        assert_eq!(d.quantile(0.0).unwrap(), 0);
        assert!(d.quantile(1.5).is_err());
    }

    #[test]
    fn repeated_losses_are_merged() {
        let d = dist(&[(1, 0.25), (0, 0.5), (1, 0.25)]);
        assert_eq!(d.entries(), &[(0, 0.5), (1, 0.5)]);
        assert!(LossDistribution::new([(0, 0.5)]).is_err());
        assert!(LossDistribution::new([]).is_err());
    }

    #[test]
    fn loss_distribution_of_layouts() {
        let layout = Layout::new(2, 2, vec![vec![1, 2]]).unwrap();
        let scheduled = ScenarioSet::scheduled(2);
        assert_eq!(loss_distribution(&layout, &scheduled).unwrap().entries(), &[(1, 1.0)]);

        let both = ScenarioSet::new(
            2,
            vec![
                Scenario {
                    order: ArrivalOrder::new(vec![1, 2]).unwrap(),
                    probability: 0.5,
                },
                Scenario {
                    order: ArrivalOrder::new(vec![2, 1]).unwrap(),
                    probability: 0.5,
                },
            ],
        )
        .unwrap();
        assert_eq!(
            loss_distribution(&layout, &both).unwrap().entries(),
            &[(0, 0.5), (1, 0.5)]
        );

        let empty = Layout::new(2, 2, vec![vec![], vec![]]).unwrap();
        assert_eq!(loss_distribution(&empty, &both).unwrap().entries(), &[(0, 1.0)]);
        assert!(loss_distribution(&layout, &ScenarioSet::scheduled(3)).is_err());
    }

    fn arb_distribution() -> impl Strategy<Value = LossDistribution> {
        prop::collection::vec((0u64..20, 1u32..100), 1..12).prop_map(|raw| {
            let total: u32 = raw.iter().map(|r| r.1).sum();
            LossDistribution::new(raw.into_iter().map(|(l, w)| (l, w as f64 / total as f64))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn mean_at_zero(d in arb_distribution()) {
            prop_assert!((d.cvar(0.0).unwrap().cvar - d.expected()).abs() < 1e-12);
        }

        #[test]
        fn nondecreasing_in_alpha(d in arb_distribution(), a in 0.0f64..0.99, b in 0.0f64..0.99) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(d.cvar(hi).unwrap().cvar >= d.cvar(lo).unwrap().cvar - 1e-9);
        }

        #[test]
        fn bounded_by_max_loss(d in arb_distribution(), alpha in 0.0f64..0.999) {
            let r = d.cvar(alpha).unwrap();
            let max = d.max_loss() as f64;
            prop_assert!(r.cvar <= max + 1e-9);
            prop_assert!(r.cvar >= r.var_gamma - 1e-12);
            prop_assert!(r.cvar >= d.expected() - 1e-9);
            let p_max = d.entries().last().unwrap().1;
            if alpha >= 1.0 - p_max {
                prop_assert!((r.cvar - max).abs() < 1e-9);
            }
        }

        #[test]
        fn gamma_minimizes_objective(d in arb_distribution(), alpha in 0.0f64..0.99) {
            let r = d.cvar(alpha).unwrap();
            let max = d.max_loss() as f64;
            for i in 0..=200 {
                let g = max * i as f64 / 200.0;
                prop_assert!(d.cvar_objective(alpha, g) >= r.cvar - 1e-9);
            }
        }
    }
}
