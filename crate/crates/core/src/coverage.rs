//! Per-hypothesis constraint coverage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ConstraintFilter, ConstraintSet};
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("cannot start a constraint while constraint {0} is in progress")]
    StartOnClosed(usize),
    #[error("constraint {0} was already started")]
    RepeatedConstraint(usize),
    #[error("starting constraint {0} now would violate a filter")]
    FilterViolation(usize),
    #[error("no constraint is in progress")]
    ContinueOnOpen,
    #[error("constraint {0} does not exist")]
    BadIndex(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintStatus {
    Unused,
    /// `next` tokens have been emitted; `next` is at least 1.
    InProgress {
        next: usize,
    },
    Done,
}

/// Where a constraint landed in the output, as inclusive token positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverageAction {
    Start(usize),
    Continue,
}

/// Coverage vector for one hypothesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageState {
    status: Vec<ConstraintStatus>,
    placements: Vec<Option<Placement>>,
    /// Generated-token count when each placed constraint began; a constraint
    /// cannot contain generated tokens, so this is also the count at its end.
    generated_at: Vec<usize>,
    active: Option<usize>,
    covered: usize,
    generated: usize,
}

impl CoverageState {
    pub fn new(num_constraints: usize) -> Self {
        Self {
            status: vec![ConstraintStatus::Unused; num_constraints],
            placements: vec![None; num_constraints],
            generated_at: vec![0; num_constraints],
            active: None,
            covered: 0,
            generated: 0,
        }
    }

    pub fn status(&self) -> &[ConstraintStatus] {
        &self.status
    }

    pub fn placements(&self) -> &[Option<Placement>] {
        &self.placements
    }

    /// Covered constraint tokens (the grid row of the hypothesis).
    #[inline]
    pub fn covered_tokens(&self) -> usize {
        self.covered
    }

    /// Tokens emitted by free generation so far.
    #[inline]
    pub fn generated_tokens(&self) -> usize {
        self.generated
    }

    /// Open hypotheses have no constraint mid-placement.
    #[inline]
    pub fn is_open(&self) -> bool {
        self.active.is_none()
    }

    #[inline]
    pub fn active(&self) -> Option<usize> {
        self.active
    }

    pub fn all_done(&self) -> bool {
        self.status.iter().all(|s| *s == ConstraintStatus::Done)
    }

    /// Token the in-progress constraint needs next.
    pub fn next_token(&self, set: &ConstraintSet) -> Option<TokenId> {
        let i = self.active?;
        match self.status[i] {
            ConstraintStatus::InProgress { next } => Some(set.constraints()[i].tokens()[next]),
            _ => None,
        }
    }

    /// Whether constraint `index` may be started right now.
    pub fn can_start(&self, index: usize, set: &ConstraintSet) -> bool {
        self.check_start(index, set).is_ok()
    }

    /// Constraints that may be started right now, in index order.
    pub fn startable<'a>(&'a self, set: &'a ConstraintSet) -> impl Iterator<Item = usize> + 'a {
        (0..self.status.len()).filter(move |&i| self.can_start(i, set))
    }

    fn check_start(&self, index: usize, set: &ConstraintSet) -> Result<(), CoverageError> {
        if index >= self.status.len() {
            return Err(CoverageError::BadIndex(index));
        }
        if let Some(active) = self.active {
            return Err(CoverageError::StartOnClosed(active));
        }
        if self.status[index] != ConstraintStatus::Unused {
            return Err(CoverageError::RepeatedConstraint(index));
        }
        for f in set.filters() {
            let ok = match *f {
                ConstraintFilter::OrderBefore { before, after } => {
                    after != index || self.status[before] == ConstraintStatus::Done
                }
                ConstraintFilter::MinGap { first, second, gap } => {
                    let other = if first == index {
                        Some(second)
                    } else if second == index {
                        Some(first)
                    } else {
                        None
                    };
                    match other.filter(|&o| self.placements[o].is_some()) {
                        // The other side is done (nothing can be in progress here).
                        Some(o) => self.generated - self.generated_at[o] >= gap,
                        None => true,
                    }
                }
            };
            if !ok {
                return Err(CoverageError::FilterViolation(index));
            }
        }
        Ok(())
    }

    /// Applies a start or continue step emitting the token at `position`.
    pub fn advance(
        &self,
        action: CoverageAction,
        set: &ConstraintSet,
        position: usize,
    ) -> Result<Self, CoverageError> {
        let mut next = self.clone();
        let index = match action {
            CoverageAction::Start(index) => {
                self.check_start(index, set)?;
                next.placements[index] = Some(Placement {
                    start: position,
                    end: position,
                });
                next.generated_at[index] = self.generated;
                next.status[index] = ConstraintStatus::InProgress { next: 1 };
                index
            }
            CoverageAction::Continue => {
                let index = self.active.ok_or(CoverageError::ContinueOnOpen)?;
                let ConstraintStatus::InProgress { next: n } = self.status[index] else {
                    unreachable!("active constraint must be in progress");
                };
                next.status[index] = ConstraintStatus::InProgress { next: n + 1 };
                if let Some(p) = next.placements[index].as_mut() {
                    p.end = position;
                }
                index
            }
        };
        next.covered += 1;
        let ConstraintStatus::InProgress { next: n } = next.status[index] else {
            unreachable!()
        };
        if n == set.constraints()[index].len() {
            next.status[index] = ConstraintStatus::Done;
            next.active = None;
        } else {
            next.active = Some(index);
        }
        Ok(next)
    }

    /// Records a freely generated token. Only valid on open coverage.
    pub fn after_generate(&self) -> Self {
        debug_assert!(self.is_open());
        let mut next = self.clone();
        next.generated += 1;
        next
    }

    /// Recomputes the covered count from the statuses.
    pub fn recount(&self, set: &ConstraintSet) -> usize {
        self.status
            .iter()
            .zip(set.constraints())
            .map(|(s, c)| match s {
                ConstraintStatus::Unused => 0,
                ConstraintStatus::InProgress { next } => *next,
                ConstraintStatus::Done => c.len(),
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::constraint::Constraint;

    fn set(constraints: &[&[u32]], filters: Vec<ConstraintFilter>) -> ConstraintSet {
        ConstraintSet::with_filters(
            constraints
                .iter()
                .map(|c| Constraint::new(c.iter().map(|&i| TokenId(i)).collect()))
                .collect(),
            filters,
        )
        .unwrap()
    }

    #[test]
    fn single_token_start_completes() {
        let s = set(&[&[5]], vec![]);
        let cov = CoverageState::new(1)
            .advance(CoverageAction::Start(0), &s, 0)
            .unwrap();
        assert_eq!(cov.status()[0], ConstraintStatus::Done);
        assert_eq!(cov.covered_tokens(), 1);
        assert!(cov.is_open());
    }

    #[test]
    fn two_token_start_then_continue() {
        let s = set(&[&[5], &[6, 7]], vec![]);
        let cov = CoverageState::new(2)
            .advance(CoverageAction::Start(1), &s, 3)
            .unwrap();
        assert_eq!(cov.status()[1], ConstraintStatus::InProgress { next: 1 });
        assert_eq!(cov.covered_tokens(), 1);
        assert!(!cov.is_open());
        assert_eq!(cov.next_token(&s), Some(TokenId(7)));
        let cov = cov.advance(CoverageAction::Continue, &s, 4).unwrap();
        assert_eq!(cov.status()[1], ConstraintStatus::Done);
        assert_eq!(cov.covered_tokens(), 2);
        let p = cov.placements()[1].unwrap();
        assert_eq!((p.start, p.end), (3, 4));
    }

    #[test]
    fn order_filter_blocks_early_start() {
        let s = set(
            &[&[5], &[6]],
            vec![ConstraintFilter::OrderBefore {
                before: 0,
                after: 1,
            }],
        );
        let cov = CoverageState::new(2);
        assert_eq!(
            cov.advance(CoverageAction::Start(1), &s, 0),
            Err(CoverageError::FilterViolation(1))
        );
        let cov = cov.advance(CoverageAction::Start(0), &s, 0).unwrap();
        assert!(cov.advance(CoverageAction::Start(1), &s, 1).is_ok());
    }

    #[test]
    fn min_gap_counts_generated_tokens_only() {
        let s = set(
            &[&[5], &[6], &[7]],
            vec![ConstraintFilter::MinGap {
                first: 0,
                second: 1,
                gap: 1,
            }],
        );
        let cov = CoverageState::new(3)
            .advance(CoverageAction::Start(0), &s, 0)
            .unwrap();
        assert!(!cov.can_start(1, &s));
        // another constraint in between is not a generated token
        let cov = cov.advance(CoverageAction::Start(2), &s, 1).unwrap();
        assert!(!cov.can_start(1, &s));
        let cov = cov.after_generate();
        assert!(cov.can_start(1, &s));
        // symmetric: placing the second one first constrains the first
        let cov = CoverageState::new(3)
            .advance(CoverageAction::Start(1), &s, 0)
            .unwrap();
        assert!(!cov.can_start(0, &s));
        assert!(cov.after_generate().can_start(0, &s));
    }

    #[test]
    fn error_paths() {
        let s = set(&[&[5, 6], &[7]], vec![]);
        let open = CoverageState::new(2);
        assert_eq!(
            open.advance(CoverageAction::Continue, &s, 0),
            Err(CoverageError::ContinueOnOpen)
        );
        let closed = open.advance(CoverageAction::Start(0), &s, 0).unwrap();
        assert_eq!(
            closed.advance(CoverageAction::Start(1), &s, 1),
            Err(CoverageError::StartOnClosed(0))
        );
        let done = closed.advance(CoverageAction::Continue, &s, 1).unwrap();
        assert_eq!(
            done.advance(CoverageAction::Start(0), &s, 2),
            Err(CoverageError::RepeatedConstraint(0))
        );
        assert_eq!(
            done.advance(CoverageAction::Start(9), &s, 2),
            Err(CoverageError::BadIndex(9))
        );
    }

    /// Walks every reachable state of a small set and checks the counters.
    #[test]
    fn reachable_states_are_consistent() {
        let s = set(
            &[&[1, 2, 3], &[4], &[5, 6], &[5, 6]],
            vec![
                ConstraintFilter::OrderBefore {
                    before: 1,
                    after: 2,
                },
                ConstraintFilter::MinGap {
                    first: 0,
                    second: 3,
                    gap: 1,
                },
            ],
        );
        let mut stack = vec![(CoverageState::new(4), 0usize)];
        let mut seen = HashSet::new();
        let mut finals = 0;
        while let Some((cov, pos)) = stack.pop() {
            assert_eq!(cov.covered_tokens(), cov.recount(&s));
            let in_progress = cov
                .status()
                .iter()
                .filter(|st| matches!(st, ConstraintStatus::InProgress { .. }))
                .count();
            assert!(in_progress <= 1);
            assert_eq!(cov.is_open(), in_progress == 0);
            if cov.all_done() {
                finals += 1;
                assert_eq!(cov.covered_tokens(), s.num_tokens());
            }
            if !seen.insert(format!("{:?}", cov)) {
                continue;
            }
            if cov.is_open() {
                if pos < 12 {
                    stack.push((cov.after_generate(), pos + 1));
                }
                for i in 0..4 {
                    if let Ok(next) = cov.advance(CoverageAction::Start(i), &s, pos) {
                        assert_eq!(next.covered_tokens(), cov.covered_tokens() + 1);
                        stack.push((next, pos + 1));
                    }
                }
            } else {
                let next = cov.advance(CoverageAction::Continue, &s, pos).unwrap();
                assert_eq!(next.covered_tokens(), cov.covered_tokens() + 1);
                stack.push((next, pos + 1));
            }
        }
        assert!(finals > 0);
    }
}
