//! Bay geometry, container layouts, ship arrival orders and scenario sets.
//!
//! Priority classes and ships share one index space: class `r` is loaded
//! onto the ship scheduled to arrive `r`-th. All indices exposed by this
//! module are 1-based, matching the JSON formats.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};

/// Probabilities are accepted when they sum to one within this tolerance.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Storage-area geometry and the number of containers per priority class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBayConfig", into = "RawBayConfig")]
pub struct BayConfig {
    num_stacks: usize,
    max_height: usize,
    class_counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawBayConfig {
    #[serde(rename = "S")]
    num_stacks: usize,
    #[serde(rename = "H")]
    max_height: usize,
    #[serde(rename = "R")]
    num_classes: usize,
    class_counts: Vec<usize>,
}

impl TryFrom<RawBayConfig> for BayConfig {
    type Error = crate::Error;

    fn try_from(raw: RawBayConfig) -> Result<Self> {
        if raw.class_counts.len() != raw.num_classes {
            return Err(invalid_input(format!(
                "R = {} but {} class counts given",
                raw.num_classes,
                raw.class_counts.len()
            )));
        }
        BayConfig::new(raw.num_stacks, raw.max_height, raw.class_counts)
    }
}

impl From<BayConfig> for RawBayConfig {
    fn from(config: BayConfig) -> Self {
        RawBayConfig {
            num_stacks: config.num_stacks,
            max_height: config.max_height,
            num_classes: config.class_counts.len(),
            class_counts: config.class_counts,
        }
    }
}

impl BayConfig {
    pub fn new(num_stacks: usize, max_height: usize, class_counts: Vec<usize>) -> Result<Self> {
        if num_stacks == 0 || max_height == 0 {
            return Err(invalid_input("a bay needs at least one stack and one tier"));
        }
        if class_counts.is_empty() {
            return Err(invalid_input("at least one priority class is required"));
        }
        if u32::try_from(class_counts.len()).is_err() {
            return Err(invalid_input("too many priority classes"));
        }
        let capacity = num_stacks
            .checked_mul(max_height)
            .ok_or_else(|| invalid_input("bay capacity overflows"))?;
        let total = class_counts
            .iter()
            .try_fold(0usize, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| invalid_input("container count overflows"))?;
        if total > capacity {
            return Err(invalid_input(format!(
                "{total} containers do not fit into {num_stacks}x{max_height} slots"
            )));
        }
        Ok(Self {
            num_stacks,
            max_height,
            class_counts,
        })
    }

    /// A bay where every class holds the same number of containers.
    pub fn uniform(num_stacks: usize, max_height: usize, num_classes: usize, per_class: usize) -> Result<Self> {
        Self::new(num_stacks, max_height, vec![per_class; num_classes])
    }

    /// The 4x4 dataset: 4 stacks, 4 tiers, 6 classes of 2 containers.
    pub fn bay_4x4() -> Self {
        Self::uniform(4, 4, 6, 2).expect("valid preset")
    }

    /// The 8x8 dataset: 8 stacks, 8 tiers, 14 classes of 4 containers.
    pub fn bay_8x8() -> Self {
        Self::uniform(8, 8, 14, 4).expect("valid preset")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn num_stacks(&self) -> usize {
        self.num_stacks
    }

    pub fn max_height(&self) -> usize {
        self.max_height
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn num_containers(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn capacity(&self) -> usize {
        self.num_stacks * self.max_height
    }
}

/// Priority classes per stack, each stack listed bottom to top.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct Layout {
    max_height: usize,
    num_classes: usize,
    stacks: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct RawLayout {
    #[serde(rename = "S")]
    num_stacks: usize,
    #[serde(rename = "H")]
    max_height: usize,
    #[serde(rename = "R")]
    num_classes: usize,
    stacks: Vec<Vec<u32>>,
}

impl TryFrom<RawLayout> for Layout {
    type Error = crate::Error;

    fn try_from(raw: RawLayout) -> Result<Self> {
        if raw.stacks.len() != raw.num_stacks {
            return Err(invalid_input(format!(
                "S = {} but {} stacks given",
                raw.num_stacks,
                raw.stacks.len()
            )));
        }
        Layout::new(raw.max_height, raw.num_classes, raw.stacks)
    }
}

impl From<Layout> for RawLayout {
    fn from(layout: Layout) -> Self {
        RawLayout {
            num_stacks: layout.stacks.len(),
            max_height: layout.max_height,
            num_classes: layout.num_classes,
            stacks: layout.stacks,
        }
    }
}

impl Layout {
    pub fn new(max_height: usize, num_classes: usize, stacks: Vec<Vec<u32>>) -> Result<Self> {
        if stacks.is_empty() || max_height == 0 || num_classes == 0 {
            return Err(invalid_input("layout needs S >= 1, H >= 1 and R >= 1"));
        }
        for (s, stack) in stacks.iter().enumerate() {
            if stack.len() > max_height {
                return Err(invalid_input(format!(
                    "stack {} holds {} containers, H = {max_height}",
                    s + 1,
                    stack.len()
                )));
            }
            if let Some(&bad) = stack.iter().find(|&&c| c == 0 || c as usize > num_classes) {
                return Err(invalid_input(format!(
                    "class {bad} in stack {} is outside 1..={num_classes}",
                    s + 1
                )));
            }
        }
        Ok(Self {
            max_height,
            num_classes,
            stacks,
        })
    }

    /// An empty bay with the given geometry.
    pub fn empty(config: &BayConfig) -> Self {
        Self {
            max_height: config.max_height,
            num_classes: config.num_classes(),
            stacks: vec![Vec::new(); config.num_stacks],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn num_stacks(&self) -> usize {
        self.stacks.len()
    }

    pub fn max_height(&self) -> usize {
        self.max_height
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn stacks(&self) -> &[Vec<u32>] {
        &self.stacks
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &c in self.stacks.iter().flatten() {
            counts[c as usize - 1] += 1;
        }
        counts
    }

    /// The bay configuration this layout realizes.
    pub fn config(&self) -> BayConfig {
        BayConfig {
            num_stacks: self.stacks.len(),
            max_height: self.max_height,
            class_counts: self.class_counts(),
        }
    }

    pub fn conforms_to(&self, config: &BayConfig) -> bool {
        self.stacks.len() == config.num_stacks
            && self.max_height == config.max_height
            && self.num_classes == config.num_classes()
            && self.class_counts() == config.class_counts
    }

    /// Class at 1-based position `(stack, tier)`, if occupied.
    pub fn class_at(&self, stack: usize, tier: usize) -> Option<u32> {
        self.stacks
            .get(stack.checked_sub(1)?)?
            .get(tier.checked_sub(1)?)
            .copied()
    }
}

/// A permutation of ships: `order()[k]` is the ship arriving `(k+1)`-th.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrivalOrder {
    order: Vec<u32>,
    rank: Vec<u32>,
}

impl ArrivalOrder {
    pub fn new(order: Vec<u32>) -> Result<Self> {
        let n = order.len();
        if n == 0 {
            return Err(invalid_input("arrival order must not be empty"));
        }
        let mut rank = vec![0u32; n];
        for (k, &ship) in order.iter().enumerate() {
            let idx = (ship as usize)
                .checked_sub(1)
                .filter(|&i| i < n)
                .ok_or_else(|| invalid_input(format!("ship {ship} outside 1..={n}")))?;
            if rank[idx] != 0 {
                return Err(invalid_input(format!("ship {ship} appears twice")));
            }
            rank[idx] = k as u32 + 1;
        }
        Ok(Self { order, rank })
    }

    /// Every ship arrives as planned: `(1, 2, ..., R)`.
    pub fn scheduled(num_ships: usize) -> Self {
        let order: Vec<u32> = (1..=num_ships as u32).collect();
        Self {
            rank: order.clone(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// 1-based arrival position of `ship`.
    pub fn rank_of(&self, ship: u32) -> u32 {
        self.rank[ship as usize - 1]
    }

    pub fn ranks(&self) -> &[u32] {
        &self.rank
    }

    pub fn is_scheduled(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &s)| s as usize == k + 1)
    }
}

/// Number of misplaced containers of `layout` when ships arrive in `order`.
///
/// A container is misplaced when some container below it in the same stack
/// leaves strictly earlier. Each container counts at most once.
pub fn count_misplaced(layout: &Layout, order: &ArrivalOrder) -> Result<usize> {
    if order.len() != layout.num_classes() {
        return Err(invalid_input(format!(
            "arrival order covers {} ships, layout has {} classes",
            order.len(),
            layout.num_classes()
        )));
    }
    Ok(misplaced_with_ranks(layout.stacks(), order.ranks()))
}

pub(crate) fn misplaced_with_ranks(stacks: &[Vec<u32>], ranks: &[u32]) -> usize {
    stacks
        .iter()
        .map(|stack| {
            let mut earliest = u32::MAX;
            let mut misplaced = 0;
            for &class in stack {
                let rank = ranks[class as usize - 1];
                if earliest < rank {
                    misplaced += 1;
                }
                earliest = earliest.min(rank);
            }
            misplaced
        })
        .sum()
}

/// One distinct arrival order and its occurrence probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub order: ArrivalOrder,
    pub probability: f64,
}

/// Probability-weighted set of distinct arrival orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenarioSet", into = "RawScenarioSet")]
pub struct ScenarioSet {
    num_ships: usize,
    scenarios: Vec<Scenario>,
}

#[derive(Serialize, Deserialize)]
struct RawScenario {
    order: Vec<u32>,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct RawScenarioSet {
    #[serde(rename = "R")]
    num_ships: usize,
    scenarios: Vec<RawScenario>,
}

impl TryFrom<RawScenarioSet> for ScenarioSet {
    type Error = crate::Error;

    fn try_from(raw: RawScenarioSet) -> Result<Self> {
        let scenarios = raw
            .scenarios
            .into_iter()
            .map(|s| {
                Ok(Scenario {
                    order: ArrivalOrder::new(s.order)?,
                    probability: s.p,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ScenarioSet::new(raw.num_ships, scenarios)
    }
}

impl From<ScenarioSet> for RawScenarioSet {
    fn from(set: ScenarioSet) -> Self {
        RawScenarioSet {
            num_ships: set.num_ships,
            scenarios: set
                .scenarios
                .into_iter()
                .map(|s| RawScenario {
                    order: s.order.order,
                    p: s.probability,
                })
                .collect(),
        }
    }
}

impl ScenarioSet {
    pub fn new(num_ships: usize, scenarios: Vec<Scenario>) -> Result<Self> {
        if num_ships == 0 {
            return Err(invalid_input("R must be positive"));
        }
        if scenarios.is_empty() {
            return Err(invalid_input("a scenario set needs at least one scenario"));
        }
        let mut seen = HashSet::with_capacity(scenarios.len());
        let mut total = 0.0;
        for s in &scenarios {
            if s.order.len() != num_ships {
                return Err(invalid_input(format!(
                    "order of length {} in a set with R = {num_ships}",
                    s.order.len()
                )));
            }
            if !(s.probability > 0.0 && s.probability <= 1.0) {
                return Err(invalid_input(format!("probability {} outside (0, 1]", s.probability)));
            }
            if !seen.insert(s.order.order()) {
                return Err(invalid_input(format!("duplicate arrival order {:?}", s.order.order())));
            }
            total += s.probability;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(invalid_input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { num_ships, scenarios })
    }

    /// The deterministic set: the scheduled order with probability one.
    pub fn scheduled(num_ships: usize) -> Self {
        Self {
            num_ships,
            scenarios: vec![Scenario {
                order: ArrivalOrder::scheduled(num_ships),
                probability: 1.0,
            }],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn num_ships(&self) -> usize {
        self.num_ships
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Scenario> {
        self.scenarios.iter()
    }

    /// Index of the scheduled order `(1, ..., R)`, if it is a scenario.
    pub fn scheduled_index(&self) -> Option<usize> {
        self.scenarios.iter().position(|s| s.order.is_scheduled())
    }
}
