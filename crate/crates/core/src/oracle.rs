//! Exhaustive search over all layouts of tiny bays.

use std::collections::HashMap;

use crate::domain::{BayConfig, Layout, ScenarioSet};
use crate::error::{invalid_input, Error, Result};
use crate::risk::{check_alpha, loss_distribution};

/// Largest bay (in slots) the oracle accepts.
pub const MAX_SLOTS: usize = 16;
/// Largest number of layouts the oracle accepts.
pub const MAX_LAYOUTS: u128 = 10_000_000;

/// Number of distinct layouts of `config`: class multisets distributed over
/// ordered stacks of height at most `H`, each stack an ordered sequence.
pub fn count_layouts(config: &BayConfig) -> u128 {
    let mut memo = HashMap::new();
    count_from(
        config.num_stacks(),
        config.max_height(),
        config.class_counts().to_vec(),
        &mut memo,
    )
}

fn count_from(
    stacks: usize,
    height: usize,
    remaining: Vec<usize>,
    memo: &mut HashMap<(usize, Vec<usize>), u128>,
) -> u128 {
    let left: usize = remaining.iter().sum();
    if stacks == 0 {
        return u128::from(left == 0);
    }
    if left > stacks * height {
        return 0;
    }
    if let Some(&c) = memo.get(&(stacks, remaining.clone())) {
        return c;
    }
    let mut total = 0u128;
    // every sub-multiset of at most `height` containers for this stack
    let mut take = vec![0usize; remaining.len()];
    loop {
        let size: usize = take.iter().sum();
        if size <= height {
            let rest: Vec<usize> = remaining.iter().zip(&take).map(|(r, t)| r - t).collect();
            let sub = count_from(stacks - 1, height, rest, memo);
            total = total.saturating_add(multinomial(&take).saturating_mul(sub));
        }
        // odometer step over 0..=remaining[i]
        let mut i = 0;
        while i < take.len() && take[i] == remaining[i] {
            take[i] = 0;
            i += 1;
        }
        if i == take.len() {
            break;
        }
        take[i] += 1;
    }
    memo.insert((stacks, remaining), total);
    total
}

fn multinomial(parts: &[usize]) -> u128 {
    let mut result = 1u128;
    let mut n = 0u128;
    for &k in parts {
        for i in 1..=k as u128 {
            n += 1;
            result = result * n / i;
        }
    }
    result
}

/// Checks the size limits and returns the layout count.
pub fn check_enumerable(config: &BayConfig) -> Result<u128> {
    if config.capacity() > MAX_SLOTS {
        return Err(Error::TooLarge(format!(
            "bay has {} slots, the oracle accepts at most {MAX_SLOTS}",
            config.capacity()
        )));
    }
    let count = count_layouts(config);
    if count > MAX_LAYOUTS {
        return Err(Error::TooLarge(format!(
            "bay has {count} layouts, the oracle accepts at most {MAX_LAYOUTS}"
        )));
    }
    Ok(count)
}

/// Depth-first enumeration of every layout of a bay.
///
/// Stacks are filled left to right; within a stack, ending the stack comes
/// before placing another container, and classes are tried in increasing
/// order. Layouts therefore come out in lexicographic order of their
/// stack sequences.
#[derive(Debug, Clone)]
pub struct LayoutEnumerator {
    config: BayConfig,
    stacks: Vec<Vec<u32>>,
    current: usize,
    remaining: Vec<usize>,
    left: usize,
    choices: Vec<u32>,
    started: bool,
    done: bool,
}

impl LayoutEnumerator {
    /// Fails with [`Error::TooLarge`] beyond the oracle limits.
    pub fn new(config: &BayConfig) -> Result<Self> {
        check_enumerable(config)?;
        Ok(Self::unchecked(config))
    }

    fn unchecked(config: &BayConfig) -> Self {
        Self {
            config: config.clone(),
            stacks: vec![Vec::new(); config.num_stacks()],
            current: 0,
            remaining: config.class_counts().to_vec(),
            left: config.num_containers(),
            choices: Vec::new(),
            started: false,
            done: false,
        }
    }

    pub fn config(&self) -> &BayConfig {
        &self.config
    }

    /// 0 closes the current stack, `c > 0` places class `c` on it.
    fn apply(&mut self, choice: u32) -> bool {
        let s_n = self.config.num_stacks();
        let h_n = self.config.max_height();
        if choice == 0 {
            if self.left > (s_n - self.current - 1) * h_n {
                return false;
            }
            self.current += 1;
        } else {
            let r = choice as usize - 1;
            if self.stacks[self.current].len() == h_n || self.remaining[r] == 0 {
                return false;
            }
            self.stacks[self.current].push(choice);
            self.remaining[r] -= 1;
            self.left -= 1;
        }
        self.choices.push(choice);
        true
    }

    fn undo(&mut self, choice: u32) {
        if choice == 0 {
            self.current -= 1;
        } else {
            self.stacks[self.current].pop();
            self.remaining[choice as usize - 1] += 1;
            self.left += 1;
        }
    }
}

impl Iterator for LayoutEnumerator {
    type Item = Layout;

    fn next(&mut self) -> Option<Layout> {
        if self.done {
            return None;
        }
        let num_classes = self.config.num_classes() as u32;
        let mut from = if self.started { None } else { Some(0) };
        self.started = true;
        loop {
            match from {
                None => match self.choices.pop() {
                    None => {
                        self.done = true;
                        return None;
                    }
                    Some(c) => {
                        self.undo(c);
                        from = Some(c + 1);
                    }
                },
                Some(start) => {
                    if self.current == self.config.num_stacks() {
                        let layout =
                            Layout::new(self.config.max_height(), self.config.num_classes(), self.stacks.clone())
                                .expect("enumerated layouts are valid");
                        return Some(layout);
                    }
                    from = (start..=num_classes).find(|&c| self.apply(c)).map(|_| 0);
                }
            }
        }
    }
}

/// All layouts of `config`, subject to the oracle limits.
pub fn enumerate_layouts(config: &BayConfig) -> Result<LayoutEnumerator> {
    LayoutEnumerator::new(config)
}

/// Best layout found by exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub layout: Layout,
    pub objective: f64,
    pub layouts_evaluated: u64,
}

/// Minimum CV@R over every layout; the first optimum in enumeration order wins.
pub fn brute_force_optimum(config: &BayConfig, scenarios: &ScenarioSet, alpha: f64) -> Result<OracleResult> {
    check_alpha(alpha)?;
    if scenarios.num_ships() != config.num_classes() {
        return Err(invalid_input(format!(
            "scenarios cover {} ships, bay has {} classes",
            scenarios.num_ships(),
            config.num_classes()
        )));
    }
    let mut best: Option<OracleResult> = None;
    let mut evaluated = 0u64;
    for layout in enumerate_layouts(config)? {
        evaluated += 1;
        let cvar = loss_distribution(&layout, scenarios)?.cvar(alpha)?.cvar;
        if best.as_ref().is_none_or(|b| cvar < b.objective - 1e-12) {
            best = Some(OracleResult {
                layout,
                objective: cvar,
                layouts_evaluated: 0,
            });
        }
    }
    let mut best = best.expect("every valid bay has at least one layout");
    best.layouts_evaluated = evaluated;
    Ok(best)
}
