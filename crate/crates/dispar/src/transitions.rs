//! The five transition systems: Arc-Standard, Arc-Eager, projective and
//! non-projective Covington, and Swap-Eager (Arc-Standard plus SWAP).
//!
//! A [`Configuration`] is an immutable value; [`System::apply`] returns a new
//! configuration and rejects illegal transitions with the violated
//! precondition. Legality checks are total over non-terminal configurations:
//! every non-terminal configuration of every system admits at least one legal
//! transition, so random walks never dead-end. [`System::finalize`] completes
//! a terminal configuration by attaching headless tokens to the artificial
//! root 0, which always yields a single-headed acyclic tree.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::{validate_tree, NodeId, TreeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransitionError {
    #[error("cannot build a configuration for an empty sentence")]
    EmptySentence,
    #[error("configuration is terminal; no transitions are legal")]
    Terminal,
    #[error("configuration is not terminal; cannot finalize")]
    NotTerminal,
    #[error("{transition} is illegal here: {reason}")]
    Illegal { transition: Transition, reason: String },
    #[error("transition {transition} is not part of {system}")]
    NotInSystem { system: System, transition: Transition },
    #[error("invalid tree: {0}")]
    Tree(#[from] TreeError),
}

// === Systems and transitions ===

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    ArcStandard,
    ArcEager,
    CovingtonProj,
    CovingtonNp,
    SwapEager,
}

impl System {
    pub const ALL: [System; 5] = [
        System::ArcStandard,
        System::ArcEager,
        System::CovingtonProj,
        System::CovingtonNp,
        System::SwapEager,
    ];

    pub fn name(self) -> &'static str {
        match self {
            System::ArcStandard => "arc_standard",
            System::ArcEager => "arc_eager",
            System::CovingtonProj => "covington_proj",
            System::CovingtonNp => "covington_np",
            System::SwapEager => "swap_eager",
        }
    }

    /// Whether every derivation of this system yields a projective tree.
    pub fn is_projective(self) -> bool {
        match self {
            System::ArcStandard | System::ArcEager | System::CovingtonProj => true,
            System::CovingtonNp | System::SwapEager => false,
        }
    }

    /// The system's transitions in the fixed legality (and tie-breaking)
    /// order: SHIFT, LEFT_ARC, RIGHT_ARC, then REDUCE/NO_ARC/SWAP.
    pub fn transitions(self) -> &'static [Transition] {
        use Transition::*;
        match self {
            System::ArcStandard => &[Shift, LeftArc, RightArc],
            System::ArcEager => &[Shift, LeftArc, RightArc, Reduce],
            System::CovingtonProj | System::CovingtonNp => &[Shift, LeftArc, RightArc, NoArc],
            System::SwapEager => &[Shift, LeftArc, RightArc, Swap],
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        System::ALL
            .iter()
            .copied()
            .find(|sys| sys.name() == s)
            .ok_or_else(|| format!("unknown system {s:?}; expected one of arc_standard, arc_eager, covington_proj, covington_np, swap_eager"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Shift,
    LeftArc,
    RightArc,
    Reduce,
    NoArc,
    Swap,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Transition::Shift => "SHIFT",
            Transition::LeftArc => "LEFT_ARC",
            Transition::RightArc => "RIGHT_ARC",
            Transition::Reduce => "REDUCE",
            Transition::NoArc => "NO_ARC",
            Transition::Swap => "SWAP",
        };
        f.write_str(s)
    }
}

// === Configurations ===

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum State {
    /// Stack-based systems (Arc-Standard, Arc-Eager, Swap-Eager). The stack
    /// grows to the right; the buffer is a deque because SWAP can push a
    /// token back to its front.
    Stack { stack: Vec<NodeId>, buffer: VecDeque<NodeId> },
    /// List-based Covington. `lambda1` holds the candidate left contexts of
    /// the buffer front (tail = closest); items move to `lambda2` as the pair
    /// loop walks leftward and are restored on SHIFT.
    Lists { lambda1: Vec<NodeId>, lambda2: VecDeque<NodeId>, buffer: VecDeque<NodeId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    n: usize,
    state: State,
    /// `heads[d]` is the head assigned to token d so far; index 0 is unused.
    heads: Vec<Option<NodeId>>,
}

impl Configuration {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn head_of(&self, d: NodeId) -> Option<NodeId> {
        self.heads[d]
    }

    pub fn buffer_len(&self) -> usize {
        match &self.state {
            State::Stack { buffer, .. } | State::Lists { buffer, .. } => buffer.len(),
        }
    }

    /// k-th buffer item from the front (k = 0 is the front).
    pub fn buffer_nth(&self, k: usize) -> Option<NodeId> {
        match &self.state {
            State::Stack { buffer, .. } | State::Lists { buffer, .. } => buffer.get(k).copied(),
        }
    }

    /// k-th element of the left working context: stack from the top for
    /// stack systems, lambda1 from the tail for Covington. k = 0 is the
    /// top/tail.
    pub fn left_nth(&self, k: usize) -> Option<NodeId> {
        let list = match &self.state {
            State::Stack { stack, .. } => stack,
            State::Lists { lambda1, .. } => lambda1,
        };
        list.len().checked_sub(k + 1).map(|i| list[i])
    }

    pub fn left_len(&self) -> usize {
        match &self.state {
            State::Stack { stack, .. } => stack.len(),
            State::Lists { lambda1, .. } => lambda1.len(),
        }
    }

    /// Number of dependents attached to `h` so far.
    pub fn dep_count(&self, h: NodeId) -> usize {
        self.heads.iter().filter(|&&x| x == Some(h)).count()
    }

    pub fn leftmost_dep(&self, h: NodeId) -> Option<NodeId> {
        (1..=self.n).find(|&d| self.heads[d] == Some(h))
    }

    pub fn rightmost_dep(&self, h: NodeId) -> Option<NodeId> {
        (1..=self.n).rev().find(|&d| self.heads[d] == Some(h))
    }

    /// Nodes still available in the working structures (everything that has
    /// not been consumed), in no particular order. The root 0 is always
    /// present.
    pub(crate) fn is_unconsumed(&self, x: NodeId) -> bool {
        if x == 0 {
            return true;
        }
        match &self.state {
            State::Stack { stack, buffer } => stack.contains(&x) || buffer.contains(&x),
            // Covington never consumes nodes.
            State::Lists { .. } => true,
        }
    }

    pub(crate) fn in_buffer(&self, x: NodeId) -> bool {
        match &self.state {
            State::Stack { buffer, .. } | State::Lists { buffer, .. } => buffer.contains(&x),
        }
    }

    pub(crate) fn on_stack(&self, x: NodeId) -> bool {
        match &self.state {
            State::Stack { stack, .. } => stack.contains(&x),
            State::Lists { .. } => false,
        }
    }

    /// Would adding the arc `head -> dep` close a cycle through existing
    /// head assignments?
    fn would_cycle(&self, head: NodeId, dep: NodeId) -> bool {
        let mut cur = head;
        while cur != 0 {
            if cur == dep {
                return true;
            }
            match self.heads[cur] {
                Some(h) => cur = h,
                None => return false,
            }
        }
        false
    }

    /// Does the proposed arc between positions `a < b` cross any existing
    /// arc? Two arcs cross when exactly one endpoint of one lies strictly
    /// inside the span of the other.
    fn crosses_existing(&self, a: NodeId, b: NodeId) -> bool {
        debug_assert!(a < b);
        for d in 1..=self.n {
            if let Some(h) = self.heads[d] {
                let inside = |x: NodeId| a < x && x < b;
                let outside = |x: NodeId| x < a || x > b;
                if (inside(h) && outside(d)) || (inside(d) && outside(h)) {
                    return true;
                }
            }
        }
        false
    }

    /// Is every node strictly between `a` and `b` already attached? Covering
    /// an unattached node would force a later crossing arc (the node could
    /// only receive its head from outside the span).
    fn interior_attached(&self, a: NodeId, b: NodeId) -> bool {
        (a + 1..b).all(|k| self.heads[k].is_some())
    }
}

// === The state machines ===

impl System {
    /// Initial configuration for a sentence of `n` tokens: stack/lambda1
    /// hold the root 0, the buffer holds 1..=n, no arcs.
    pub fn initial(self, n: usize) -> Result<Configuration, TransitionError> {
        if n == 0 {
            return Err(TransitionError::EmptySentence);
        }
        let buffer: VecDeque<NodeId> = (1..=n).collect();
        let state = match self {
            System::ArcStandard | System::ArcEager | System::SwapEager => {
                State::Stack { stack: vec![0], buffer }
            }
            System::CovingtonProj | System::CovingtonNp => {
                State::Lists { lambda1: vec![0], lambda2: VecDeque::new(), buffer }
            }
        };
        Ok(Configuration { n, state, heads: vec![None; n + 1] })
    }

    pub fn is_terminal(self, c: &Configuration) -> bool {
        match (&c.state, self) {
            (State::Stack { stack, buffer }, System::ArcStandard | System::SwapEager) => {
                buffer.is_empty() && stack.len() <= 2
            }
            (State::Stack { buffer, .. }, System::ArcEager) => buffer.is_empty(),
            (State::Lists { buffer, .. }, _) => buffer.is_empty(),
            _ => unreachable!("configuration built for a different system family"),
        }
    }

    /// Checks the precondition of `t` in `c`. `Ok` means legal.
    fn precondition(self, c: &Configuration, t: Transition) -> Result<(), String> {
        if !self.transitions().contains(&t) {
            return Err(format!("{t} is not in this system's inventory"));
        }
        match (&c.state, self) {
            (State::Stack { stack, buffer }, sys) => {
                let top = stack.last().copied();
                let second = stack.len().checked_sub(2).map(|i| stack[i]);
                match (t, sys) {
                    (Transition::Shift, _) => {
                        if buffer.is_empty() {
                            return Err("SHIFT needs a non-empty buffer".into());
                        }
                    }
                    (Transition::LeftArc, System::ArcStandard | System::SwapEager) => {
                        match second {
                            None => return Err("LEFT_ARC needs two stack items".into()),
                            Some(0) => return Err("LEFT_ARC cannot attach the root 0".into()),
                            Some(_) => {}
                        }
                    }
                    (Transition::RightArc, System::ArcStandard | System::SwapEager) => {
                        if second.is_none() {
                            return Err("RIGHT_ARC needs two stack items".into());
                        }
                    }
                    (Transition::LeftArc, System::ArcEager) => {
                        let s = top.expect("stack holds at least the root");
                        if s == 0 {
                            return Err("LEFT_ARC cannot attach the root 0".into());
                        }
                        if c.heads[s].is_some() {
                            return Err(format!("LEFT_ARC needs a headless stack top, but {s} has a head"));
                        }
                        if buffer.is_empty() {
                            return Err("LEFT_ARC needs a non-empty buffer".into());
                        }
                    }
                    (Transition::RightArc, System::ArcEager) => {
                        if buffer.is_empty() {
                            return Err("RIGHT_ARC needs a non-empty buffer".into());
                        }
                        debug_assert!(top.is_some(), "arc-eager never pops the root");
                    }
                    (Transition::Reduce, System::ArcEager) => {
                        let s = top.expect("stack holds at least the root");
                        if s == 0 {
                            return Err("REDUCE cannot pop the root 0".into());
                        }
                        if c.heads[s].is_none() {
                            return Err(format!("REDUCE needs an attached stack top, but {s} is headless"));
                        }
                    }
                    (Transition::Swap, System::SwapEager) => match (second, top) {
                        (Some(s1), Some(s0)) => {
                            if s1 == 0 {
                                return Err("SWAP cannot move the root 0 back to the buffer".into());
                            }
                            if s1 >= s0 {
                                return Err(format!(
                                    "SWAP needs the second-from-top before the top in original order ({s1} >= {s0})"
                                ));
                            }
                        }
                        _ => return Err("SWAP needs two stack items".into()),
                    },
                    _ => unreachable!("inventory check covers this"),
                }
            }
            (State::Lists { lambda1, buffer, .. }, sys) => {
                let tail = lambda1.last().copied();
                let front = buffer.front().copied();
                match t {
                    Transition::Shift => {
                        if front.is_none() {
                            return Err("SHIFT needs a non-empty buffer".into());
                        }
                    }
                    Transition::NoArc => {
                        if tail.is_none() {
                            return Err("NO_ARC needs a non-empty lambda1".into());
                        }
                    }
                    Transition::LeftArc | Transition::RightArc => {
                        let (Some(i), Some(j)) = (tail, front) else {
                            return Err(format!("{t} needs both a lambda1 tail and a buffer front"));
                        };
                        // LEFT_ARC: head j, dependent i. RIGHT_ARC: head i, dependent j.
                        let (head, dep) = if t == Transition::LeftArc { (j, i) } else { (i, j) };
                        if dep == 0 {
                            return Err(format!("{t} cannot attach the root 0"));
                        }
                        if c.heads[dep].is_some() {
                            return Err(format!("{t} needs a headless dependent, but {dep} has a head"));
                        }
                        if c.would_cycle(head, dep) {
                            return Err(format!("arc {head} -> {dep} would close a cycle"));
                        }
                        if sys == System::CovingtonProj {
                            let (a, b) = (head.min(dep), head.max(dep));
                            if c.crosses_existing(a, b) {
                                return Err(format!("arc {head} -> {dep} would cross an existing arc"));
                            }
                            if !c.interior_attached(a, b) {
                                return Err(format!("arc {head} -> {dep} would cover an unattached node"));
                            }
                        }
                    }
                    _ => unreachable!("inventory check covers this"),
                }
            }
        }
        Ok(())
    }

    /// Legal transitions of `c` in the fixed order SHIFT, LEFT_ARC,
    /// RIGHT_ARC, REDUCE/NO_ARC/SWAP. Errors on terminal configurations;
    /// never empty otherwise.
    pub fn legal(self, c: &Configuration) -> Result<Vec<Transition>, TransitionError> {
        if self.is_terminal(c) {
            return Err(TransitionError::Terminal);
        }
        let legal: Vec<Transition> = self
            .transitions()
            .iter()
            .copied()
            .filter(|&t| self.precondition(c, t).is_ok())
            .collect();
        debug_assert!(!legal.is_empty(), "non-terminal configurations always admit a transition");
        Ok(legal)
    }

    pub fn is_legal(self, c: &Configuration, t: Transition) -> bool {
        !self.is_terminal(c) && self.precondition(c, t).is_ok()
    }

    /// Applies `t`, returning the successor configuration. Illegal
    /// transitions are rejected with the violated precondition.
    pub fn apply(self, c: &Configuration, t: Transition) -> Result<Configuration, TransitionError> {
        let mut next = c.clone();
        self.apply_in_place(&mut next, t)?;
        Ok(next)
    }

    /// In-place variant of [`System::apply`] for hot loops.
    pub(crate) fn apply_in_place(
        self,
        c: &mut Configuration,
        t: Transition,
    ) -> Result<(), TransitionError> {
        if !self.transitions().contains(&t) {
            return Err(TransitionError::NotInSystem { system: self, transition: t });
        }
        if self.is_terminal(c) {
            return Err(TransitionError::Terminal);
        }
        if let Err(reason) = self.precondition(c, t) {
            return Err(TransitionError::Illegal { transition: t, reason });
        }
        match &mut c.state {
            State::Stack { stack, buffer } => match (t, self) {
                (Transition::Shift, _) => {
                    let b = buffer.pop_front().expect("precondition");
                    stack.push(b);
                }
                (Transition::LeftArc, System::ArcStandard | System::SwapEager) => {
                    // Arc top -> second; pop the second-from-top.
                    let top = *stack.last().expect("precondition");
                    let second = stack.remove(stack.len() - 2);
                    c.heads[second] = Some(top);
                }
                (Transition::RightArc, System::ArcStandard | System::SwapEager) => {
                    // Arc second -> top; pop the top.
                    let top = stack.pop().expect("precondition");
                    let second = *stack.last().expect("precondition");
                    c.heads[top] = Some(second);
                }
                (Transition::LeftArc, System::ArcEager) => {
                    // Arc bufferFront -> top; pop the top.
                    let top = stack.pop().expect("precondition");
                    let front = *buffer.front().expect("precondition");
                    c.heads[top] = Some(front);
                }
                (Transition::RightArc, System::ArcEager) => {
                    // Arc top -> bufferFront; push the front.
                    let top = *stack.last().expect("precondition");
                    let front = buffer.pop_front().expect("precondition");
                    c.heads[front] = Some(top);
                    stack.push(front);
                }
                (Transition::Reduce, System::ArcEager) => {
                    stack.pop();
                }
                (Transition::Swap, System::SwapEager) => {
                    // Move the second-from-top back to the buffer front.
                    let second = stack.remove(stack.len() - 2);
                    buffer.push_front(second);
                }
                _ => unreachable!("inventory check covers this"),
            },
            State::Lists { lambda1, lambda2, buffer } => match t {
                Transition::Shift => {
                    // lambda1 . lambda2 . front becomes the new lambda1.
                    let front = buffer.pop_front().expect("precondition");
                    lambda1.extend(lambda2.drain(..));
                    lambda1.push(front);
                }
                Transition::NoArc | Transition::LeftArc | Transition::RightArc => {
                    let i = lambda1.pop().expect("precondition");
                    if t != Transition::NoArc {
                        let j = *buffer.front().expect("precondition");
                        let (head, dep) = if t == Transition::LeftArc { (j, i) } else { (i, j) };
                        c.heads[dep] = Some(head);
                    }
                    lambda2.push_front(i);
                }
                _ => unreachable!("inventory check covers this"),
            },
        }
        Ok(())
    }

    /// Completes a terminal configuration: every still-headless token is
    /// attached to the root 0. Returns the full head vector (entry `i` =
    /// head of token `i + 1`).
    pub fn finalize(self, c: &Configuration) -> Result<Vec<NodeId>, TransitionError> {
        if !self.is_terminal(c) {
            return Err(TransitionError::NotTerminal);
        }
        let heads: Vec<NodeId> = (1..=c.n).map(|d| c.heads[d].unwrap_or(0)).collect();
        debug_assert!(validate_tree(&heads).is_ok());
        Ok(heads)
    }
}

// === Projectivity and tree enumeration ===

/// Whether a complete tree (`heads[i]` = head of token i + 1, root at
/// position 0) is projective, i.e. contains no crossing arcs. Errors if the
/// input is not a tree.
pub fn is_projective(heads: &[NodeId]) -> Result<bool, TreeError> {
    validate_tree(heads)?;
    let arcs: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| (h.min(i + 1), h.max(i + 1)))
        .collect();
    for (i, &(a1, b1)) in arcs.iter().enumerate() {
        for &(a2, b2) in &arcs[i + 1..] {
            let inside = |x: usize| a1 < x && x < b1;
            let outside = |x: usize| x < a1 || x > b1;
            if (inside(a2) && outside(b2)) || (inside(b2) && outside(a2)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// All single-headed acyclic trees over `n` tokens rooted at 0, as head
/// vectors in lexicographic order. There are (n+1)^(n-1) of them.
pub fn all_trees(n: usize) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    let mut heads = vec![0; n];
    fn rec(heads: &mut Vec<NodeId>, pos: usize, n: usize, out: &mut Vec<Vec<NodeId>>) {
        if pos == n {
            if validate_tree(heads).is_ok() {
                out.push(heads.clone());
            }
            return;
        }
        for h in 0..=n {
            if h == pos + 1 {
                continue;
            }
            heads[pos] = h;
            rec(heads, pos + 1, n, out);
        }
    }
    if n > 0 {
        rec(&mut heads, 0, n, &mut out);
    }
    out
}

/// The projective subset of [`all_trees`].
pub fn all_projective_trees(n: usize) -> Vec<Vec<NodeId>> {
    all_trees(n)
        .into_iter()
        .filter(|h| is_projective(h).expect("all_trees yields valid trees"))
        .collect()
}
