//! Abstract syntax of PEPA components, exact rate arithmetic and the model
//! environment (constant definitions plus the high/low action partition).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number used for every rate and passive weight.
pub type Rational = BigRational;

/// Shorthand for building a rational from a numerator/denominator pair.
pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Renders a rational as `n` or `n/d`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// An action type. The distinguished unknown type `tau` is never a member of
/// a cooperation or hiding set.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionType(Arc<str>);

pub const TAU_NAME: &str = "tau";

impl ActionType {
    /// A visible action type. `tau` is rejected: use [`ActionType::tau`].
    pub fn new(name: &str) -> Result<Self, TermError> {
        if name == TAU_NAME {
            return Err(TermError::ReservedTau);
        }
        if name.is_empty() {
            return Err(TermError::EmptyName);
        }
        Ok(ActionType(Arc::from(name)))
    }

    pub fn tau() -> Self {
        ActionType(Arc::from(TAU_NAME))
    }

    pub fn is_tau(&self) -> bool {
        &*self.0 == TAU_NAME
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Security level of an action type.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ActionClass {
    Tau,
    High,
    Low,
}

/// Activity rate: a positive rational, or a passive weight `w·T`.
///
/// Weights written in model files are positive integers; cooperation between
/// two passive partners can produce rational weights, so the weight is kept
/// as an exact rational.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Rate {
    Finite(Rational),
    Passive(Rational),
}

impl Rate {
    pub fn finite(value: Rational) -> Result<Self, RateError> {
        if value.is_positive() {
            Ok(Rate::Finite(value))
        } else {
            Err(RateError::NonPositive(format_rational(&value)))
        }
    }

    pub fn passive(weight: Rational) -> Result<Self, RateError> {
        if weight.is_positive() {
            Ok(Rate::Passive(weight))
        } else {
            Err(RateError::NonPositive(format!("{}*T", format_rational(&weight))))
        }
    }

    /// `numer/denom` as a finite rate. Panics on a non-positive value.
    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        Rate::finite(ratio(numer, denom)).expect("positive rate")
    }

    pub fn from_int(value: i64) -> Self {
        Rate::from_ratio(value, 1)
    }

    /// `weight·T`. Panics on a non-positive weight.
    pub fn top(weight: i64) -> Self {
        Rate::passive(ratio(weight, 1)).expect("positive weight")
    }

    pub fn is_passive(&self) -> bool {
        matches!(self, Rate::Passive(_))
    }

    /// The rational magnitude: the rate itself, or the passive weight.
    pub fn value(&self) -> &Rational {
        match self {
            Rate::Finite(v) | Rate::Passive(v) => v,
        }
    }

    pub fn min_rate<'a>(&'a self, other: &'a Rate) -> &'a Rate {
        if self <= other {
            self
        } else {
            other
        }
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Rate::Finite(a), Rate::Finite(b)) | (Rate::Passive(a), Rate::Passive(b)) => a.cmp(b),
            (Rate::Finite(_), Rate::Passive(_)) => Ordering::Less,
            (Rate::Passive(_), Rate::Finite(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Finite(v) => f.write_str(&format_rational(v)),
            Rate::Passive(w) if w.is_one() => f.write_str("T"),
            Rate::Passive(w) => write!(f, "{}*T", format_rational(w)),
        }
    }
}

impl fmt::Debug for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("cannot add a finite rate to a passive rate ({0} + {1})")]
    MixedRateSum(String, String),
    #[error("rate must be strictly positive, got {0}")]
    NonPositive(String),
}

/// Sum of two rates of the same kind.
pub fn rate_add(a: &Rate, b: &Rate) -> Result<Rate, RateError> {
    match (a, b) {
        (Rate::Finite(x), Rate::Finite(y)) => Ok(Rate::Finite(x + y)),
        (Rate::Passive(x), Rate::Passive(y)) => Ok(Rate::Passive(x + y)),
        _ => Err(RateError::MixedRateSum(a.to_string(), b.to_string())),
    }
}

/// A possibly-zero accumulation of rates that keeps finite and passive mass
/// apart, so sums over arbitrary arc sets never fail.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RateSum {
    pub finite: Rational,
    pub passive: Rational,
}

impl RateSum {
    pub fn zero() -> Self {
        RateSum { finite: Rational::zero(), passive: Rational::zero() }
    }

    pub fn of(rate: &Rate) -> Self {
        let mut s = RateSum::zero();
        s.add(rate);
        s
    }

    pub fn add(&mut self, rate: &Rate) {
        match rate {
            Rate::Finite(v) => self.finite += v,
            Rate::Passive(w) => self.passive += w,
        }
    }

    pub fn add_sum(&mut self, other: &RateSum) {
        self.finite += &other.finite;
        self.passive += &other.passive;
    }

    pub fn is_zero(&self) -> bool {
        self.finite.is_zero() && self.passive.is_zero()
    }

    /// The sum as a single rate; `None` when zero.
    pub fn to_rate(&self) -> Result<Option<Rate>, RateError> {
        match (self.finite.is_zero(), self.passive.is_zero()) {
            (true, true) => Ok(None),
            (false, true) => Ok(Some(Rate::Finite(self.finite.clone()))),
            (true, false) => Ok(Some(Rate::Passive(self.passive.clone()))),
            (false, false) => Err(RateError::MixedRateSum(
                format_rational(&self.finite),
                Rate::Passive(self.passive.clone()).to_string(),
            )),
        }
    }
}

impl fmt::Display for RateSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.finite.is_zero(), self.passive.is_zero()) {
            (true, true) => f.write_str("0"),
            (false, true) => f.write_str(&format_rational(&self.finite)),
            (true, false) => write!(f, "{}", Rate::Passive(self.passive.clone())),
            (false, false) => write!(
                f,
                "{} + {}",
                format_rational(&self.finite),
                Rate::Passive(self.passive.clone())
            ),
        }
    }
}

impl fmt::Debug for RateSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// An action type paired with its rate.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Activity {
    pub action: ActionType,
    pub rate: Rate,
}

impl Activity {
    pub fn new(action: ActionType, rate: Rate) -> Self {
        Activity { action, rate }
    }
}

pub type ActionSet = BTreeSet<ActionType>;

/// A PEPA component. Equality and hashing are structural; constants compare
/// by name and are never unfolded.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum ProcessTerm {
    Prefix(Activity, Arc<ProcessTerm>),
    Choice(Arc<ProcessTerm>, Arc<ProcessTerm>),
    Cooperation(Arc<ProcessTerm>, ActionSet, Arc<ProcessTerm>),
    Hiding(Arc<ProcessTerm>, ActionSet),
    Constant(Arc<str>),
}

impl ProcessTerm {
    pub fn constant(name: &str) -> Self {
        ProcessTerm::Constant(Arc::from(name))
    }

    pub fn prefix(action: ActionType, rate: Rate, continuation: ProcessTerm) -> Self {
        ProcessTerm::Prefix(Activity::new(action, rate), Arc::new(continuation))
    }

    pub fn choice(left: ProcessTerm, right: ProcessTerm) -> Self {
        ProcessTerm::Choice(Arc::new(left), Arc::new(right))
    }

    pub fn cooperation(left: ProcessTerm, set: ActionSet, right: ProcessTerm) -> Self {
        ProcessTerm::Cooperation(Arc::new(left), set, Arc::new(right))
    }

    pub fn hiding(inner: ProcessTerm, set: ActionSet) -> Self {
        ProcessTerm::Hiding(Arc::new(inner), set)
    }

    /// True for the sequential fragment: prefix, choice and constants.
    pub fn is_sequential(&self) -> bool {
        matches!(
            self,
            ProcessTerm::Prefix(..) | ProcessTerm::Choice(..) | ProcessTerm::Constant(_)
        )
    }

    /// Calls `f` on every constant name referenced syntactically.
    pub fn for_each_constant<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            ProcessTerm::Prefix(_, k) => k.for_each_constant(f),
            ProcessTerm::Choice(l, r) | ProcessTerm::Cooperation(l, _, r) => {
                l.for_each_constant(f);
                r.for_each_constant(f);
            }
            ProcessTerm::Hiding(p, _) => p.for_each_constant(f),
            ProcessTerm::Constant(name) => f(name),
        }
    }

    /// Calls `f` on every action type occurring syntactically (prefixes,
    /// cooperation sets and hiding sets).
    pub fn for_each_action<'a>(&'a self, f: &mut impl FnMut(&'a ActionType)) {
        match self {
            ProcessTerm::Prefix(a, k) => {
                f(&a.action);
                k.for_each_action(f);
            }
            ProcessTerm::Choice(l, r) => {
                l.for_each_action(f);
                r.for_each_action(f);
            }
            ProcessTerm::Cooperation(l, set, r) => {
                set.iter().for_each(&mut *f);
                l.for_each_action(f);
                r.for_each_action(f);
            }
            ProcessTerm::Hiding(p, set) => {
                set.iter().for_each(&mut *f);
                p.for_each_action(f);
            }
            ProcessTerm::Constant(_) => {}
        }
    }

    /// Finds a cooperation or hiding node strictly beneath a prefix or choice.
    pub fn stratification_violation(&self) -> Option<&ProcessTerm> {
        fn seq(t: &ProcessTerm) -> Option<&ProcessTerm> {
            match t {
                ProcessTerm::Prefix(_, k) => seq(k),
                ProcessTerm::Choice(l, r) => seq(l).or_else(|| seq(r)),
                ProcessTerm::Constant(_) => None,
                other => Some(other),
            }
        }
        match self {
            ProcessTerm::Prefix(_, k) => seq(k),
            ProcessTerm::Choice(l, r) => seq(l).or_else(|| seq(r)),
            ProcessTerm::Cooperation(l, _, r) => l
                .stratification_violation()
                .or_else(|| r.stratification_violation()),
            ProcessTerm::Hiding(p, _) => p.stratification_violation(),
            ProcessTerm::Constant(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("`tau` is reserved and cannot be used as a visible action type")]
    ReservedTau,
    #[error("empty name")]
    EmptyName,
    #[error("tau cannot appear in a cooperation or hiding set")]
    TauInActionSet,
    #[error("tau cannot be declared high")]
    TauDeclaredHigh,
    #[error("undefined constant `{0}`")]
    UndefinedConstant(String),
    #[error("cooperation or hiding beneath a prefix or choice: `{0}`")]
    Stratification(String),
}

/// Constant definitions, the high action set and the designated system
/// component.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ModelEnv {
    defs: BTreeMap<Arc<str>, ProcessTerm>,
    high: ActionSet,
    system: ProcessTerm,
}

impl ModelEnv {
    /// Validates binding, tau placement and stratification.
    pub fn new(
        defs: BTreeMap<Arc<str>, ProcessTerm>,
        high: ActionSet,
        system: ProcessTerm,
    ) -> Result<Self, TermError> {
        if high.iter().any(ActionType::is_tau) {
            return Err(TermError::TauDeclaredHigh);
        }
        let env = ModelEnv { defs, high, system };
        for term in env.defs.values().chain(std::iter::once(&env.system)) {
            env.validate_term(term)?;
        }
        Ok(env)
    }

    fn validate_term(&self, term: &ProcessTerm) -> Result<(), TermError> {
        let mut missing = None;
        term.for_each_constant(&mut |name| {
            if missing.is_none() && !self.defs.contains_key(name) {
                missing = Some(name.to_string());
            }
        });
        if let Some(name) = missing {
            return Err(TermError::UndefinedConstant(name));
        }
        if let Some(bad) = term.stratification_violation() {
            return Err(TermError::Stratification(crate::parser::render_term(bad)));
        }
        if has_tau_in_set(term) {
            return Err(TermError::TauInActionSet);
        }
        Ok(())
    }

    pub fn defs(&self) -> &BTreeMap<Arc<str>, ProcessTerm> {
        &self.defs
    }

    pub fn definition(&self, name: &str) -> Option<&ProcessTerm> {
        self.defs.get(name)
    }

    pub fn high(&self) -> &ActionSet {
        &self.high
    }

    pub fn system(&self) -> &ProcessTerm {
        &self.system
    }

    /// Same definitions, different root component.
    pub fn with_system(&self, system: ProcessTerm) -> Result<Self, TermError> {
        self.validate_term(&system)?;
        Ok(ModelEnv { defs: self.defs.clone(), high: self.high.clone(), system })
    }

    pub fn with_high(&self, high: ActionSet) -> Result<Self, TermError> {
        if high.iter().any(ActionType::is_tau) {
            return Err(TermError::TauDeclaredHigh);
        }
        Ok(ModelEnv { defs: self.defs.clone(), high, system: self.system.clone() })
    }

    /// Action types occurring anywhere in the definitions or the system.
    pub fn action_types(&self) -> ActionSet {
        let mut out = ActionSet::new();
        for term in self.defs.values().chain(std::iter::once(&self.system)) {
            term.for_each_action(&mut |a| {
                out.insert(a.clone());
            });
        }
        out
    }
}

fn has_tau_in_set(term: &ProcessTerm) -> bool {
    match term {
        ProcessTerm::Prefix(_, k) => has_tau_in_set(k),
        ProcessTerm::Choice(l, r) => has_tau_in_set(l) || has_tau_in_set(r),
        ProcessTerm::Cooperation(l, set, r) => {
            set.iter().any(ActionType::is_tau) || has_tau_in_set(l) || has_tau_in_set(r)
        }
        ProcessTerm::Hiding(p, set) => set.iter().any(ActionType::is_tau) || has_tau_in_set(p),
        ProcessTerm::Constant(_) => false,
    }
}

pub fn classify(env: &ModelEnv, action: &ActionType) -> ActionClass {
    if action.is_tau() {
        ActionClass::Tau
    } else if env.high.contains(action) {
        ActionClass::High
    } else {
        ActionClass::Low
    }
}

/// Parses a comma-free list of names into an action set; convenience for
/// tests and examples.
pub fn action_set<'a>(names: impl IntoIterator<Item = &'a str>) -> ActionSet {
    names
        .into_iter()
        .map(|n| ActionType::new(n).expect("visible action name"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(n: &str) -> ActionType {
        ActionType::new(n).unwrap()
    }

    fn env_with_high(high: &[&str]) -> ModelEnv {
        let mut defs = BTreeMap::new();
        defs.insert(
            Arc::from("P"),
            ProcessTerm::prefix(act("l"), Rate::from_int(1), ProcessTerm::constant("P")),
        );
        ModelEnv::new(defs, action_set(high.iter().copied()), ProcessTerm::constant("P")).unwrap()
    }

    #[test]
    fn classify_tau_high_low() {
        let env = env_with_high(&["h"]);
        assert_eq!(classify(&env, &ActionType::tau()), ActionClass::Tau);
        assert_eq!(classify(&env, &act("h")), ActionClass::High);
        assert_eq!(classify(&env, &act("l")), ActionClass::Low);
    }

    #[test]
    fn tau_is_not_a_visible_action() {
        assert_eq!(ActionType::new("tau"), Err(TermError::ReservedTau));
        assert!(ActionType::tau().is_tau());
    }

    #[test]
    fn rate_addition() {
        assert_eq!(
            rate_add(&Rate::from_ratio(1, 2), &Rate::from_ratio(3, 2)).unwrap(),
            Rate::from_int(2)
        );
        assert_eq!(rate_add(&Rate::top(1), &Rate::top(2)).unwrap(), Rate::top(3));
        assert!(matches!(
            rate_add(&Rate::from_int(1), &Rate::top(1)),
            Err(RateError::MixedRateSum(..))
        ));
    }

    #[test]
    fn rate_order_puts_passive_above_finite() {
        assert!(Rate::from_int(1_000_000) < Rate::top(1));
        assert!(Rate::top(1) < Rate::top(2));
        assert!(Rate::from_ratio(1, 3) < Rate::from_ratio(1, 2));
        assert_eq!(Rate::top(2).min_rate(&Rate::from_int(7)), &Rate::from_int(7));
    }

    #[test]
    fn non_positive_rates_rejected() {
        assert!(Rate::finite(ratio(0, 1)).is_err());
        assert!(Rate::finite(ratio(-1, 2)).is_err());
        assert!(Rate::passive(ratio(0, 1)).is_err());
    }

    #[test]
    fn rate_sum_keeps_kinds_apart() {
        let mut s = RateSum::zero();
        assert_eq!(s.to_rate().unwrap(), None);
        s.add(&Rate::from_int(2));
        assert_eq!(s.to_rate().unwrap(), Some(Rate::from_int(2)));
        s.add(&Rate::top(1));
        assert!(s.to_rate().is_err());
        assert_ne!(RateSum::of(&Rate::from_int(1)), RateSum::of(&Rate::top(1)));
    }

    #[test]
    fn env_rejects_undefined_constant_and_tau_sets() {
        let defs = BTreeMap::new();
        let err = ModelEnv::new(defs, ActionSet::new(), ProcessTerm::constant("Q")).unwrap_err();
        assert_eq!(err, TermError::UndefinedConstant("Q".into()));

        let mut defs = BTreeMap::new();
        defs.insert(
            Arc::from("P"),
            ProcessTerm::prefix(act("a"), Rate::from_int(1), ProcessTerm::constant("P")),
        );
        let tau_set: ActionSet = [ActionType::tau()].into_iter().collect();
        let sys = ProcessTerm::hiding(ProcessTerm::constant("P"), tau_set);
        assert_eq!(
            ModelEnv::new(defs, ActionSet::new(), sys).unwrap_err(),
            TermError::TauInActionSet
        );
    }

    #[test]
    fn stratification_detects_cooperation_under_prefix() {
        let p = ProcessTerm::constant("P");
        let coop = ProcessTerm::cooperation(p.clone(), ActionSet::new(), p.clone());
        let bad = ProcessTerm::prefix(act("a"), Rate::from_int(1), coop.clone());
        assert!(bad.stratification_violation().is_some());
        assert!(ProcessTerm::choice(p.clone(), coop.clone()).stratification_violation().is_some());
        assert!(ProcessTerm::hiding(coop, action_set(["a"])).stratification_violation().is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn finite_rate() -> impl Strategy<Value = Rate> {
            (1i64..1000, 1i64..1000).prop_map(|(n, d)| Rate::from_ratio(n, d))
        }

        proptest! {
            #[test]
            fn finite_addition_is_exact(a in finite_rate(), b in finite_rate(), c in finite_rate()) {
                let ab_c = rate_add(&rate_add(&a, &b).unwrap(), &c).unwrap();
                let a_bc = rate_add(&a, &rate_add(&b, &c).unwrap()).unwrap();
                prop_assert_eq!(ab_c, a_bc);
                prop_assert_eq!(rate_add(&a, &b).unwrap(), rate_add(&b, &a).unwrap());
            }
        }
    }
}
