//! Multiplayer social-dilemma payoffs and fair zero-determinant strategies.
//!
//! Payoffs are indexed by `j`, the number of cooperating co-players
//! (`0..n`): a cooperator earns `a_j`, a deserter `b_j`.

use alloc::vec::Vec;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DilemmaError {
    #[error("a dilemma needs at least two players, got {0}")]
    TooFewPlayers(usize),
    #[error("payoff vectors must have n = {n} entries (a: {a}, b: {b})")]
    Length { n: usize, a: usize, b: usize },
    #[error("payoff {0} is not finite")]
    NotFinite(&'static str),
    #[error("payoffs are not a social dilemma: {0:?}")]
    NotADilemma(Vec<DilemmaViolation>),
    #[error("phi = {phi} puts p[{own:?}, {j}] at {value}, outside [0, 1]")]
    InadmissiblePhi { phi: f64, own: Action, j: usize, value: f64 },
    #[error("no phi keeps every probability in [0, 1]")]
    EmptyPhiInterval,
    #[error("strategy probability p[{own:?}, {j}] = {value} is outside [0, 1]")]
    InvalidProbability { own: Action, j: usize, value: f64 },
    #[error("strategy vectors must have n = {n} entries, got {got}")]
    StrategyLength { n: usize, got: usize },
}

/// A failed dilemma property at one index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DilemmaViolation {
    /// `a_{j+1} < a_j`.
    CooperatorsNotIncreasing { j: usize },
    /// `b_{j+1} < b_j`.
    DesertersNotIncreasing { j: usize },
    /// `b_{j+1} ≤ a_j`.
    DesertionNotTempting { j: usize },
    /// `a_{n−1} ≤ b_0`.
    CooperationNotBeneficial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Cooperate,
    Defect,
}

/// Per-player payoffs of an `n`-player dilemma, checked on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DilemmaPayoffs {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl DilemmaPayoffs {
    /// Validates every index of both vectors and reports all failures.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, DilemmaError> {
        let n = a.len();
        if n < 2 {
            return Err(DilemmaError::TooFewPlayers(n));
        }
        if b.len() != n {
            return Err(DilemmaError::Length { n, a: a.len(), b: b.len() });
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(DilemmaError::NotFinite("a"));
        }
        if !b.iter().all(|v| v.is_finite()) {
            return Err(DilemmaError::NotFinite("b"));
        }
        let mut violations = Vec::new();
        for j in 0..n - 1 {
            if a[j + 1] < a[j] {
                violations.push(DilemmaViolation::CooperatorsNotIncreasing { j });
            }
            if b[j + 1] < b[j] {
                violations.push(DilemmaViolation::DesertersNotIncreasing { j });
            }
            if !(b[j + 1] > a[j]) {
                violations.push(DilemmaViolation::DesertionNotTempting { j });
            }
        }
        if !(a[n - 1] > b[0]) {
            violations.push(DilemmaViolation::CooperationNotBeneficial);
        }
        if violations.is_empty() {
            Ok(Self { a, b })
        } else {
            Err(DilemmaError::NotADilemma(violations))
        }
    }

    /// Payoffs decreasing linearly from the `top` (`j = n − 1`) to the
    /// `bottom` (`j = 0`) values.
    pub fn linear(a_top: f64, a_bottom: f64, b_top: f64, b_bottom: f64, n: usize) -> Result<Self, DilemmaError> {
        if n < 2 {
            return Err(DilemmaError::TooFewPlayers(n));
        }
        let span = (n - 1) as f64;
        let line = |lo: f64, hi: f64| -> Vec<f64> {
            (0..n)
                .map(|j| match j {
                    0 => lo,
                    j if j == n - 1 => hi,
                    j => lo + (hi - lo) * (j as f64 / span),
                })
                .collect()
        };
        Self::new(line(a_bottom, a_top), line(b_bottom, b_top))
    }

    pub fn players(&self) -> usize {
        self.a.len()
    }

    pub fn cooperator(&self) -> &[f64] {
        &self.a
    }

    pub fn deserter(&self) -> &[f64] {
        &self.b
    }

    /// Own payoff `g^i` for an action against `j` cooperating co-players.
    pub fn payoff(&self, own: Action, j: usize) -> f64 {
        match own {
            Action::Cooperate => self.a[j],
            Action::Defect => self.b[j],
        }
    }

    /// Largest minus smallest payoff.
    pub fn range(&self) -> f64 {
        let all = || self.a.iter().chain(&self.b).copied();
        all().fold(f64::NEG_INFINITY, f64::max) - all().fold(f64::INFINITY, f64::min)
    }
}

/// Same as [`DilemmaPayoffs::linear`].
pub fn build_payoffs(a_top: f64, a_bottom: f64, b_top: f64, b_bottom: f64, n: usize) -> Result<DilemmaPayoffs, DilemmaError> {
    DilemmaPayoffs::linear(a_top, a_bottom, b_top, b_bottom, n)
}

/// Average payoff of the co-players, `g^{−i}`, by own action and `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoplayerPayoffs {
    pub cooperate: Vec<f64>,
    pub defect: Vec<f64>,
}

pub fn coplayer_payoffs(payoffs: &DilemmaPayoffs) -> CoplayerPayoffs {
    let n = payoffs.players();
    let (a, b) = (&payoffs.a, &payoffs.b);
    let m = (n - 1) as f64;
    let mut cooperate = Vec::with_capacity(n);
    let mut defect = Vec::with_capacity(n);
    for j in 0..n {
        let others = n - 1 - j;
        let mut c = j as f64 * a[j];
        if others > 0 {
            c += others as f64 * b[j + 1];
        }
        let mut d = others as f64 * b[j];
        if j > 0 {
            d += j as f64 * a[j - 1];
        }
        cooperate.push(c / m);
        defect.push(d / m);
    }
    CoplayerPayoffs { cooperate, defect }
}

/// A memory-one strategy: probability of cooperating next given the own
/// last action and the number `j` of co-players who cooperated.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryOne {
    cooperate: Vec<f64>,
    defect: Vec<f64>,
}

impl MemoryOne {
    pub fn new(cooperate: Vec<f64>, defect: Vec<f64>) -> Result<Self, DilemmaError> {
        if cooperate.len() != defect.len() {
            return Err(DilemmaError::StrategyLength { n: cooperate.len(), got: defect.len() });
        }
        for (own, v) in [(Action::Cooperate, &cooperate), (Action::Defect, &defect)] {
            if let Some((j, &value)) = v.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
                return Err(DilemmaError::InvalidProbability { own, j, value });
            }
        }
        Ok(Self { cooperate, defect })
    }

    fn constant(n: usize, c: f64, d: f64) -> Self {
        Self { cooperate: alloc::vec![c; n], defect: alloc::vec![d; n] }
    }

    pub fn always_cooperate(n: usize) -> Self {
        Self::constant(n, 1.0, 1.0)
    }

    pub fn always_defect(n: usize) -> Self {
        Self::constant(n, 0.0, 0.0)
    }

    /// Repeats the last own action.
    pub fn repeat(n: usize) -> Self {
        Self::constant(n, 1.0, 0.0)
    }

    pub fn players(&self) -> usize {
        self.cooperate.len()
    }

    pub fn probability(&self, own: Action, j: usize) -> f64 {
        match own {
            Action::Cooperate => self.cooperate[j],
            Action::Defect => self.defect[j],
        }
    }

    /// `(p_{C,n−1}, …, p_{C,0}, p_{D,n−1}, …, p_{D,0})`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.cooperate.iter().rev().chain(self.defect.iter().rev()).copied().collect()
    }
}

/// A fair zero-determinant strategy and its `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZdStrategy {
    pub strategy: MemoryOne,
    pub phi: f64,
}

/// Slack allowed when a probability computed at an interval end rounds just
/// outside `[0, 1]`.
const PROBABILITY_SLACK: f64 = 1e-12;

fn differences(payoffs: &DilemmaPayoffs) -> (Vec<f64>, Vec<f64>) {
    let g = coplayer_payoffs(payoffs);
    let dc = payoffs.a.iter().zip(&g.cooperate).map(|(own, other)| own - other).collect();
    let dd = payoffs.b.iter().zip(&g.defect).map(|(own, other)| own - other).collect();
    (dc, dd)
}

/// `p = p^Rep + φ (g^i − g^{−i})`.
pub fn fair_strategy(payoffs: &DilemmaPayoffs, phi: f64) -> Result<ZdStrategy, DilemmaError> {
    let (dc, dd) = differences(payoffs);
    let mut out = [Vec::with_capacity(dc.len()), Vec::with_capacity(dd.len())];
    for (slot, (own, base, diffs)) in
        out.iter_mut().zip([(Action::Cooperate, 1.0, &dc), (Action::Defect, 0.0, &dd)])
    {
        for (j, d) in diffs.iter().enumerate() {
            let value = base + phi * d;
            if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
                return Err(DilemmaError::InadmissiblePhi { phi, own, j, value });
            }
            slot.push(value.clamp(0.0, 1.0));
        }
    }
    let [cooperate, defect] = out;
    Ok(ZdStrategy { strategy: MemoryOne { cooperate, defect }, phi })
}

/// Closed interval of admissible `φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PhiInterval {
    pub fn contains(&self, phi: f64) -> bool {
        self.lower <= phi && phi <= self.upper
    }
}

/// Intersection of the `2n` constraints `0 ≤ p ≤ 1` on `φ`.
pub fn max_phi(payoffs: &DilemmaPayoffs) -> Result<PhiInterval, DilemmaError> {
    let (dc, dd) = differences(payoffs);
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    // base + φ d ∈ [0, 1]  ⇔  φ d ∈ [−base, 1 − base].
    for (base, diffs) in [(1.0, &dc), (0.0, &dd)] {
        for &d in diffs.iter() {
            if d > 0.0 {
                lower = lower.max(-base / d);
                upper = upper.min((1.0 - base) / d);
            } else if d < 0.0 {
                lower = lower.max((1.0 - base) / d);
                upper = upper.min(-base / d);
            }
        }
    }
    if lower > upper {
        return Err(DilemmaError::EmptyPhiInterval);
    }
    Ok(PhiInterval { lower, upper })
}

/// `1 / max(g^i − g^{−i})`.
pub fn reference_phi(payoffs: &DilemmaPayoffs) -> f64 {
    let (dc, dd) = differences(payoffs);
    1.0 / dc.iter().chain(&dd).copied().fold(f64::NEG_INFINITY, f64::max)
}
