//! Operation schedules for the asynchronous algorithm.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SolverError};

/// Default number of evaluation pairs per improvement pair.
pub const DEFAULT_EVALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    MinEval,
    MinImprove,
    MaxEval,
    MaxImprove,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::MinEval, OpKind::MinImprove, OpKind::MaxEval, OpKind::MaxImprove];

    /// Whether the operation updates `X1` tables.
    pub fn is_min(self) -> bool {
        matches!(self, OpKind::MinEval | OpKind::MinImprove)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::MinEval => "min_eval",
            OpKind::MinImprove => "min_improve",
            OpKind::MaxEval => "max_eval",
            OpKind::MaxImprove => "max_improve",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of states of one space, with an id for traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    pub id: usize,
    pub states: Arc<[usize]>,
}

impl Subset {
    pub fn new(id: usize, states: Vec<usize>) -> Self {
        Self { id, states: states.into() }
    }

    pub fn full(len: usize) -> Self {
        Self::new(0, (0..len).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub kind: OpKind,
    pub subset: Subset,
}

/// One scheduled step: an operation and how many versions stale its reads are.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub op: Operation,
    pub delay: usize,
}

/// An endless generator of steps.
pub trait Schedule {
    fn next_step(&mut self) -> Step;

    /// Every kind reaches every state within any window of this many steps.
    fn fairness_horizon(&self) -> usize;

    /// Largest read delay the schedule produces.
    fn max_delay(&self) -> usize {
        0
    }
}

/// Splits `0..len` into `parts` contiguous blocks of near-equal size.
fn contiguous_blocks(len: usize, parts: usize) -> Vec<Subset> {
    let parts = parts.clamp(1, len);
    (0..parts)
        .map(|b| Subset::new(b, (b * len / parts..(b + 1) * len / parts).collect()))
        .collect()
}

/// A fixed cycle of operations.
#[derive(Debug, Clone)]
pub struct Cyclic {
    ops: Vec<Operation>,
    pos: usize,
}

impl Cyclic {
    /// For each block pair: MinImprove, MaxImprove, then `k` rounds of
    /// (MinEval, MaxEval). Block `b` of each space, cycling the shorter list.
    pub fn partitioned(n1: usize, n2: usize, parts: usize, k: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || parts == 0 {
            return Err(SolverError::InvalidInput("spaces and block count must be positive".into()));
        }
        let b1 = contiguous_blocks(n1, parts);
        let b2 = contiguous_blocks(n2, parts);
        let mut ops = Vec::new();
        for b in 0..b1.len().max(b2.len()) {
            let s1 = b1[b % b1.len()].clone();
            let s2 = b2[b % b2.len()].clone();
            ops.push(Operation { kind: OpKind::MinImprove, subset: s1.clone() });
            ops.push(Operation { kind: OpKind::MaxImprove, subset: s2.clone() });
            for _ in 0..k {
                ops.push(Operation { kind: OpKind::MinEval, subset: s1.clone() });
                ops.push(Operation { kind: OpKind::MaxEval, subset: s2.clone() });
            }
        }
        Ok(Self { ops, pos: 0 })
    }

    /// Full-space operations: MinImprove, MaxImprove, `k` × (MinEval, MaxEval).
    pub fn round_robin(n1: usize, n2: usize, k: usize) -> Result<Self> {
        Self::partitioned(n1, n2, 1, k)
    }

    pub fn period(&self) -> &[Operation] {
        &self.ops
    }
}

impl Schedule for Cyclic {
    fn next_step(&mut self) -> Step {
        let op = self.ops[self.pos].clone();
        self.pos = (self.pos + 1) % self.ops.len();
        Step { op, delay: 0 }
    }

    fn fairness_horizon(&self) -> usize {
        self.ops.len()
    }
}

/// Seeded random rounds. Each round randomly partitions each space for each
/// kind, adds a few extra single-state evaluations, and shuffles; every
/// `(kind, state)` occurs once per round, so fairness holds within two rounds.
#[derive(Debug, Clone)]
pub struct RandomFair {
    n1: usize,
    n2: usize,
    rng: ChaCha8Rng,
    queue: VecDeque<Operation>,
}

const RANDOM_MAX_BLOCKS: usize = 4;
const RANDOM_MAX_EXTRA: usize = 8;

impl RandomFair {
    pub fn new(n1: usize, n2: usize, seed: u64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(SolverError::InvalidInput("spaces must be nonempty".into()));
        }
        Ok(Self { n1, n2, rng: ChaCha8Rng::seed_from_u64(seed), queue: VecDeque::new() })
    }

    fn refill(&mut self) {
        let mut ops = Vec::new();
        for kind in OpKind::ALL {
            let len = if kind.is_min() { self.n1 } else { self.n2 };
            let mut states: Vec<usize> = (0..len).collect();
            states.shuffle(&mut self.rng);
            let parts = self.rng.gen_range(1..=len.min(RANDOM_MAX_BLOCKS));
            for b in 0..parts {
                let mut block = states[b * len / parts..(b + 1) * len / parts].to_vec();
                block.sort_unstable();
                ops.push(Operation { kind, subset: Subset::new(b, block) });
            }
        }
        for _ in 0..self.rng.gen_range(0..=RANDOM_MAX_EXTRA) {
            let kind = if self.rng.gen_bool(0.5) { OpKind::MinEval } else { OpKind::MaxEval };
            let len = if kind.is_min() { self.n1 } else { self.n2 };
            let x = self.rng.gen_range(0..len);
            ops.push(Operation { kind, subset: Subset::new(x, vec![x]) });
        }
        ops.shuffle(&mut self.rng);
        self.queue.extend(ops);
    }
}

impl Schedule for RandomFair {
    fn next_step(&mut self) -> Step {
        if self.queue.is_empty() {
            self.refill();
        }
        Step { op: self.queue.pop_front().expect("refilled"), delay: 0 }
    }

    fn fairness_horizon(&self) -> usize {
        2 * (4 * RANDOM_MAX_BLOCKS + RANDOM_MAX_EXTRA)
    }
}

/// Wraps a schedule with read delays drawn uniformly from `0..=bound`.
pub struct Delayed {
    inner: Box<dyn Schedule + Send>,
    bound: usize,
    rng: ChaCha8Rng,
}

impl Delayed {
    pub fn new(inner: Box<dyn Schedule + Send>, bound: usize, seed: u64) -> Self {
        Self { inner, bound, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Schedule for Delayed {
    fn next_step(&mut self) -> Step {
        let mut step = self.inner.next_step();
        step.delay = self.rng.gen_range(0..=self.bound);
        step
    }

    fn fairness_horizon(&self) -> usize {
        self.inner.fairness_horizon()
    }

    fn max_delay(&self) -> usize {
        self.bound
    }
}

/// Textual schedule description:
/// `round_robin:k=10`, `random:seed=S`, `partitioned:p=4[,k=10]`,
/// `delayed:B=3[,seed=S],inner=<schedule>` (`inner` last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleSpec {
    RoundRobin { k: usize },
    Random { seed: Option<u64> },
    Partitioned { parts: usize, k: usize },
    Delayed { bound: usize, seed: Option<u64>, inner: Box<ScheduleSpec> },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::RoundRobin { k: DEFAULT_EVALS }
    }
}

impl ScheduleSpec {
    /// Builds the schedule; `seed` is used wherever the spec names none.
    pub fn build(&self, n1: usize, n2: usize, seed: u64) -> Result<Box<dyn Schedule + Send>> {
        Ok(match self {
            ScheduleSpec::RoundRobin { k } => Box::new(Cyclic::round_robin(n1, n2, *k)?),
            ScheduleSpec::Random { seed: s } => Box::new(RandomFair::new(n1, n2, s.unwrap_or(seed))?),
            ScheduleSpec::Partitioned { parts, k } => Box::new(Cyclic::partitioned(n1, n2, *parts, *k)?),
            ScheduleSpec::Delayed { bound, seed: s, inner } => {
                Box::new(Delayed::new(inner.build(n1, n2, seed)?, *bound, s.unwrap_or(seed)))
            }
        })
    }
}

fn bad(spec: &str, why: &str) -> SolverError {
    SolverError::InvalidInput(format!("schedule '{spec}': {why}"))
}

impl FromStr for ScheduleSpec {
    type Err = SolverError;

    fn from_str(spec: &str) -> Result<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let (params, inner) = match rest.split_once("inner=") {
            Some((p, i)) => (p.trim_end_matches(','), Some(i)),
            None => (rest, None),
        };
        let mut k = DEFAULT_EVALS;
        let mut seed = None;
        let mut parts = None;
        let mut bound = None;
        for kv in params.split(',').filter(|s| !s.is_empty()) {
            let (key, value) = kv.split_once('=').ok_or_else(|| bad(spec, &format!("expected key=value, got '{kv}'")))?;
            let num = || value.parse::<u64>().map_err(|_| bad(spec, &format!("'{value}' is not a nonnegative integer")));
            match key {
                "k" => k = num()? as usize,
                "seed" => seed = Some(num()?),
                "p" => parts = Some(num()? as usize),
                "B" => bound = Some(num()? as usize),
                _ => return Err(bad(spec, &format!("unknown parameter '{key}'"))),
            }
        }
        let parsed = match name {
            "round_robin" => ScheduleSpec::RoundRobin { k },
            "random" => ScheduleSpec::Random { seed },
            "partitioned" => {
                let parts = parts.ok_or_else(|| bad(spec, "missing p"))?;
                if parts == 0 {
                    return Err(bad(spec, "p must be positive"));
                }
                ScheduleSpec::Partitioned { parts, k }
            }
            "delayed" => ScheduleSpec::Delayed {
                bound: bound.ok_or_else(|| bad(spec, "missing B"))?,
                seed,
                inner: Box::new(inner.map_or(Ok(ScheduleSpec::default()), str::parse)?),
            },
            _ => return Err(bad(spec, &format!("unknown schedule '{name}'"))),
        };
        if inner.is_some() && name != "delayed" {
            return Err(bad(spec, "only delayed takes inner"));
        }
        Ok(parsed)
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::RoundRobin { k } => write!(f, "round_robin:k={k}"),
            ScheduleSpec::Random { seed: Some(s) } => write!(f, "random:seed={s}"),
            ScheduleSpec::Random { seed: None } => write!(f, "random"),
            ScheduleSpec::Partitioned { parts, k } => write!(f, "partitioned:p={parts},k={k}"),
            ScheduleSpec::Delayed { bound, seed, inner } => {
                write!(f, "delayed:B={bound},")?;
                if let Some(s) = seed {
                    write!(f, "seed={s},")?;
                }
                write!(f, "inner={inner}")
            }
        }
    }
}

/// Largest gap between consecutive occurrences of any `(kind, state)` in a
/// prefix, counting from the start and to the end; `None` if some pair never
/// occurs.
pub fn observed_fairness(steps: &[Step], n1: usize, n2: usize) -> Option<usize> {
    let mut worst = 0;
    for kind in OpKind::ALL {
        let len = if kind.is_min() { n1 } else { n2 };
        for x in 0..len {
            let mut last = 0usize;
            let mut seen = false;
            for (t, s) in steps.iter().enumerate() {
                if s.op.kind == kind && s.op.subset.states.contains(&x) {
                    worst = worst.max(t + 1 - last);
                    last = t + 1;
                    seen = true;
                }
            }
            if !seen {
                return None;
            }
            worst = worst.max(steps.len() - last);
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefix(s: &mut dyn Schedule, n: usize) -> Vec<Step> {
        (0..n).map(|_| s.next_step()).collect()
    }

    #[test]
    fn round_robin_period() {
        let rr = Cyclic::round_robin(3, 2, 2).unwrap();
        let kinds: Vec<OpKind> = rr.period().iter().map(|o| o.kind).collect();
        use OpKind::*;
        assert_eq!(kinds, vec![MinImprove, MaxImprove, MinEval, MaxEval, MinEval, MaxEval]);
        assert_eq!(&*rr.period()[0].subset.states, &[0, 1, 2]);
        assert_eq!(&*rr.period()[1].subset.states, &[0, 1]);
    }

    #[test]
    fn partitioned_blocks_cover_space() {
        let s = Cyclic::partitioned(10, 3, 4, 1).unwrap();
        let mut covered: Vec<usize> = s
            .period()
            .iter()
            .filter(|o| o.kind == OpKind::MinImprove)
            .flat_map(|o| o.subset.states.iter().copied())
            .collect();
        covered.sort_unstable();
        assert_eq!(covered, (0..10).collect::<Vec<_>>());
        // X2 has only 3 states: at most 3 blocks, reused cyclically.
        assert!(s.period().iter().filter(|o| !o.kind.is_min()).all(|o| o.subset.states.len() == 1));
    }

    #[test]
    fn schedules_respect_fairness_horizon() {
        let specs = ["round_robin:k=3", "random:seed=7", "partitioned:p=4", "delayed:B=5,inner=random:seed=2"];
        for spec in specs {
            let spec: ScheduleSpec = spec.parse().unwrap();
            let mut s = spec.build(7, 5, 1).unwrap();
            let steps = prefix(s.as_mut(), 3000);
            let observed = observed_fairness(&steps, 7, 5).unwrap();
            assert!(observed <= s.fairness_horizon(), "{spec}: {observed} > {}", s.fairness_horizon());
            assert!(steps.iter().all(|st| st.delay <= s.max_delay()));
        }
    }

    #[test]
    fn random_schedules_are_seeded() {
        let a = prefix(&mut RandomFair::new(4, 4, 3).unwrap(), 200);
        let b = prefix(&mut RandomFair::new(4, 4, 3).unwrap(), 200);
        let c = prefix(&mut RandomFair::new(4, 4, 4).unwrap(), 200);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn delays_bounded_and_varied() {
        let mut d = Delayed::new(Box::new(Cyclic::round_robin(2, 2, 1).unwrap()), 3, 9);
        let delays: Vec<usize> = prefix(&mut d, 400).into_iter().map(|s| s.delay).collect();
        assert!(delays.iter().all(|&x| x <= 3));
        for v in 0..=3 {
            assert!(delays.contains(&v));
        }
    }

    #[test]
    fn spec_parsing_round_trips() {
        for text in ["round_robin:k=10", "random:seed=5", "partitioned:p=4,k=10", "delayed:B=3,inner=round_robin:k=10", "delayed:B=2,seed=4,inner=random:seed=1"] {
            let spec: ScheduleSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert_eq!("round_robin".parse::<ScheduleSpec>().unwrap(), ScheduleSpec::RoundRobin { k: 10 });
        assert_eq!(
            "delayed:B=3,inner=round_robin".parse::<ScheduleSpec>().unwrap(),
            ScheduleSpec::Delayed { bound: 3, seed: None, inner: Box::new(ScheduleSpec::RoundRobin { k: 10 }) }
        );
        for bad in ["spiral", "partitioned", "partitioned:p=0", "random:seed=x", "round_robin:q=1", "delayed:inner=random", "random:inner=random"] {
            assert!(bad.parse::<ScheduleSpec>().is_err(), "{bad}");
        }
    }
}
