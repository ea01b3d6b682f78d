//! Closed-form sufficient conditions for exponential stability and a parameter-space sampler.
//!
//! Every inequality is evaluated with plain IEEE comparisons. A strict inequality that holds
//! with equality fails, and so does any condition whose expression has a non-positive
//! denominator.

use std::collections::VecDeque;

use thiserror::Error;

use crate::exec::Execution;
use crate::model::{linspace, StabilityInput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("region sampler configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Greater,
    GreaterEq,
    Less,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Greater => lhs > rhs,
            Relation::GreaterEq => lhs >= rhs,
            Relation::Less => lhs < rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Greater => ">",
            Relation::GreaterEq => ">=",
            Relation::Less => "<",
        }
    }
}

/// One evaluated inequality `lhs (relation) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRecord {
    pub id: &'static str,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub satisfied: bool,
}

impl ConditionRecord {
    fn new(id: &'static str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        // NaN on either side never satisfies a comparison
        Self {
            id,
            lhs,
            relation,
            rhs,
            satisfied: relation.holds(lhs, rhs),
        }
    }

    fn failed(id: &'static str, relation: Relation) -> Self {
        Self {
            id,
            lhs: f64::NAN,
            relation,
            rhs: f64::NAN,
            satisfied: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartVerdict {
    pub ok: bool,
    pub conditions: Vec<ConditionRecord>,
}

impl PartVerdict {
    fn from_conditions(conditions: Vec<ConditionRecord>) -> Self {
        Self {
            ok: conditions.iter().all(|c| c.satisfied),
            conditions,
        }
    }

    pub fn get(&self, id: &str) -> Option<&ConditionRecord> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// Ids of the failed conditions.
    pub fn failures(&self) -> Vec<&'static str> {
        self.conditions.iter().filter(|c| !c.satisfied).map(|c| c.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub assumption: PartVerdict,
    pub theorem: PartVerdict,
}

impl StabilityVerdict {
    pub fn assumption_ok(&self) -> bool {
        self.assumption.ok
    }

    pub fn theorem_ok(&self) -> bool {
        self.theorem.ok
    }
}

pub fn evaluate(s: &StabilityInput) -> StabilityVerdict {
    StabilityVerdict {
        assumption: check_assumption(s),
        theorem: check_theorem_region(s),
    }
}

fn ratio_or_inf(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Standing assumption of the Lyapunov construction.
///
/// * `i.a`: `c1 > 6 c2`, `i.b`: `c2 > 0`
/// * `ii`: `d1^2 >= max{9 c1^2 d2^2 / (c1^2 - 9 c2^2), 18 c1 c2^2 cp / (c1^2 - 36 c2^2)}`
/// * `iii`: `d2 > 0`
pub fn check_assumption(s: &StabilityInput) -> PartVerdict {
    let c = &s.coeffs;
    let (c1, c2, d1, d2, cp) = (c.c1, c.c2, c.d1, c.d2, s.cp);
    // Evaluated as printed. Once (i) holds both denominators are positive; when it fails the
    // verdict already fails, so a negative bound here only affects the reported row.
    let printed = |num: f64, den: f64| if den == 0.0 { f64::INFINITY } else { num / den };
    let r1 = printed(9.0 * c1 * c1 * d2 * d2, c1 * c1 - 9.0 * c2 * c2);
    let r2 = printed(18.0 * c1 * c2 * c2 * cp, c1 * c1 - 36.0 * c2 * c2);
    PartVerdict::from_conditions(vec![
        ConditionRecord::new("i.a", c1, Relation::Greater, 6.0 * c2),
        ConditionRecord::new("i.b", c2, Relation::Greater, 0.0),
        ConditionRecord::new("ii", d1 * d1, Relation::GreaterEq, r1.max(r2)),
        ConditionRecord::new("iii", d2, Relation::Greater, 0.0),
    ])
}

/// Region conditions with the ratio parameter fixed at `d1 / (c2 + d2)`.
///
/// * `a.1`: `d1^2 >= d2 (c2 + d2)`, `a.2`: `c1^2 >= c2 (c2 + d1 + d2)`
/// * `b`: the two-sided bound on `N / M` is nonempty
/// * `c`: its upper end exceeds `sqrt(cp / c1)`
pub fn check_theorem_region(s: &StabilityInput) -> PartVerdict {
    let c = &s.coeffs;
    let (c1, c2, d1, d2, cp) = (c.c1, c.c2, c.d1, c.d2, s.cp);
    let cd = c2 + d2;
    let mut conds = vec![
        ConditionRecord::new("a.1", d1 * d1, Relation::GreaterEq, d2 * cd),
        ConditionRecord::new("a.2", c1 * c1, Relation::GreaterEq, c2 * (c2 + d1 + d2)),
    ];
    if !(c2 > 0.0 && cd > 0.0 && d1 > 0.0 && c1 > 0.0 && cp > 0.0) {
        conds.push(ConditionRecord::failed("b", Relation::Less));
        conds.push(ConditionRecord::failed("c", Relation::Less));
        return PartVerdict::from_conditions(conds);
    }
    let den = d1 * d1 - d2 * cd;
    let lhs_b = ratio_or_inf(2.0 * d1 * cp + (d1 + d2) * cd, den);
    let rhs_b = 2.0 * c1 * d1 / (c2 * cd) - 1.0 - d1 * d1 * (c2 + d1 + d2) / (c2 * cd * cd);
    conds.push(ConditionRecord::new("b", lhs_b, Relation::Less, rhs_b));

    let lhs_c = (cp / c1).sqrt();
    let rhs_c = d1 / (c2 * cd) * (2.0 * c1 - (c2 * d1 + d1 * d1 + d1 * d2) / cd - c2 * cd / d1);
    conds.push(ConditionRecord::new("c", lhs_c, Relation::Less, rhs_c));
    PartVerdict::from_conditions(conds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioInterval {
    Feasible { lo: f64, hi: f64 },
    Infeasible { reason: &'static str },
}

impl RatioInterval {
    pub fn is_feasible(&self) -> bool {
        matches!(self, RatioInterval::Feasible { .. })
    }
}

/// Admissible range of `N / M` for a general ratio parameter `eps > 0`.
pub fn admissible_ratio_interval(s: &StabilityInput, eps: f64) -> RatioInterval {
    let c = &s.coeffs;
    let (c1, c2, d1, d2, cp) = (c.c1, c.c2, c.d1, c.d2, s.cp);
    if !(eps > 0.0 && eps.is_finite()) {
        return RatioInterval::Infeasible { reason: "eps must be positive" };
    }
    if !(c2 > 0.0) {
        return RatioInterval::Infeasible { reason: "c2 must be positive" };
    }
    let den = c2 * eps - 2.0 * d1 + d2 * eps + d2 / eps;
    if !(den < 0.0) {
        return RatioInterval::Infeasible { reason: "lower-bound denominator is nonnegative" };
    }
    let lo = (-2.0 * cp - d1 / eps - d2 / eps) / den;
    let hi = (2.0 * c1 - c2 * eps - d1 * eps - d2 * eps - c2 / eps) * eps / c2;
    if lo < hi {
        RatioInterval::Feasible { lo, hi }
    } else {
        RatioInterval::Infeasible { reason: "empty interval" }
    }
}

/// Closed range `[lo, hi]` sampled at `n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    fn nodes(&self, name: &str) -> Result<Vec<f64>, StabilityError> {
        let bad = |m: String| Err(StabilityError::Config(format!("{name}: {m}")));
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return bad("bounds must be finite".into());
        }
        match self.n {
            0 => bad("empty range".into()),
            1 if self.lo == self.hi => Ok(vec![self.lo]),
            1 => bad("a single sample needs lo == hi".into()),
            n if self.lo < self.hi => Ok(linspace(self.lo, self.hi, n)),
            _ => bad(format!("need lo < hi, got [{}, {}]", self.lo, self.hi)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionAxes {
    pub c2: AxisRange,
    pub d1: AxisRange,
    pub d2: AxisRange,
}

impl Default for RegionAxes {
    /// Forty points per axis; the ranges put `(c2, d1, d2) = (0.02, 0.2, 0.02)` on the grid.
    fn default() -> Self {
        Self {
            c2: AxisRange::new(0.0025, 0.1, 40),
            d1: AxisRange::new(0.025, 1.0, 40),
            d2: AxisRange::new(0.0025, 0.1, 40),
        }
    }
}

/// Flags on the grid `c2 x d1 x d2`, with `d2` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSample {
    pub c1: f64,
    pub cp: f64,
    pub c2: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub assumption_ok: Vec<bool>,
    pub theorem_ok: Vec<bool>,
}

impl RegionSample {
    pub fn len(&self) -> usize {
        self.theorem_ok.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theorem_ok.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.d1.len() + j) * self.d2.len() + k
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let nk = self.d2.len();
        let nj = self.d1.len();
        (idx / (nj * nk), (idx / nk) % nj, idx % nk)
    }

    pub fn point(&self, idx: usize) -> (f64, f64, f64) {
        let (i, j, k) = self.coords(idx);
        (self.c2[i], self.d1[j], self.d2[k])
    }

    /// Flat index of an exact grid point.
    pub fn find(&self, c2: f64, d1: f64, d2: f64) -> Option<usize> {
        let i = self.c2.iter().position(|&v| v == c2)?;
        let j = self.d1.iter().position(|&v| v == d1)?;
        let k = self.d2.iter().position(|&v| v == d2)?;
        Some(self.index(i, j, k))
    }

    /// Face-connected components of the `theorem_ok` set, each sorted, in order of first index.
    pub fn theorem_components(&self) -> Vec<Vec<usize>> {
        let (ni, nj, nk) = (self.c2.len(), self.d1.len(), self.d2.len());
        let mut seen = vec![false; self.len()];
        let mut comps = Vec::new();
        for start in 0..self.len() {
            if !self.theorem_ok[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(cur) = queue.pop_front() {
                let (i, j, k) = self.coords(cur);
                let mut nbrs = Vec::with_capacity(6);
                if i > 0 {
                    nbrs.push(self.index(i - 1, j, k));
                }
                if i + 1 < ni {
                    nbrs.push(self.index(i + 1, j, k));
                }
                if j > 0 {
                    nbrs.push(self.index(i, j - 1, k));
                }
                if j + 1 < nj {
                    nbrs.push(self.index(i, j + 1, k));
                }
                if k > 0 {
                    nbrs.push(self.index(i, j, k - 1));
                }
                if k + 1 < nk {
                    nbrs.push(self.index(i, j, k + 1));
                }
                for nb in nbrs {
                    if self.theorem_ok[nb] && !seen[nb] {
                        seen[nb] = true;
                        comp.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

pub fn sample_region(
    c1: f64,
    cp: f64,
    axes: &RegionAxes,
    exec: Execution,
) -> Result<RegionSample, StabilityError> {
    if !(c1 > 0.0 && cp > 0.0) {
        return Err(StabilityError::Config(format!(
            "c1 and cp must be positive, got c1 = {c1}, cp = {cp}"
        )));
    }
    let c2 = axes.c2.nodes("c2")?;
    let d1 = axes.d1.nodes("d1")?;
    let d2 = axes.d2.nodes("d2")?;
    let (nj, nk) = (d1.len(), d2.len());
    let flags = exec.map(c2.len() * nj * nk, |idx| {
        let (i, j, k) = (idx / (nj * nk), (idx / nk) % nj, idx % nk);
        let s = StabilityInput::from_tuple(c1, c2[i], d1[j], d2[k], cp);
        (check_assumption(&s).ok, check_theorem_region(&s).ok)
    });
    let (assumption_ok, theorem_ok) = flags.into_iter().unzip();
    Ok(RegionSample {
        c1,
        cp,
        c2,
        d1,
        d2,
        assumption_ok,
        theorem_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(c1: f64, c2: f64, d1: f64, d2: f64, cp: f64) -> StabilityInput {
        StabilityInput::from_tuple(c1, c2, d1, d2, cp)
    }

    #[test]
    fn assumption_examples() {
        let v = check_assumption(&s(1.0, 0.1, 1.0, 0.1, 1.0));
        assert!(v.ok);
        let ii = v.get("ii").unwrap();
        assert_eq!(ii.lhs, 1.0);
        assert!((ii.rhs - 0.28125).abs() < 1e-15);
        let r1: f64 = 9.0 * 0.01 / 0.91;
        assert!((r1 - 0.0989).abs() < 1e-4);

        assert_eq!(check_assumption(&s(1.0, 0.2, 1.0, 0.1, 1.0)).failures(), vec!["i.a"]);
        let v = check_assumption(&s(1.0, 0.1, 0.4, 0.1, 1.0));
        assert_eq!(v.failures(), vec!["ii"]);
        assert!((v.get("ii").unwrap().lhs - 0.16).abs() < 1e-15);
    }

    #[test]
    fn theorem_examples() {
        let v = check_theorem_region(&s(1.0, 0.02, 0.2, 0.02, 1.0));
        assert!(v.ok, "{v:?}");
        let b = v.get("b").unwrap();
        assert!((b.lhs - 10.428571428571429).abs() < 1e-9);
        assert!((b.rhs - 199.0).abs() < 1e-9);
        let c = v.get("c").unwrap();
        assert_eq!(c.lhs, 1.0);
        assert!((c.rhs - 199.0).abs() < 1e-9);
        assert!((v.get("a.1").unwrap().rhs - 0.0008).abs() < 1e-15);
        assert!((v.get("a.2").unwrap().rhs - 0.0048).abs() < 1e-15);

        let v = check_theorem_region(&s(1.0, 0.05, 1.0, 0.05, 1.0));
        assert!(!v.ok);
        let b = v.get("b").unwrap();
        assert!(!b.satisfied);
        assert!((b.lhs - 2.1156).abs() < 1e-3);
        assert!((b.rhs + 1801.0).abs() < 1e-9);

        // d2 (c2 + d2) > d1^2 fails the first gate
        let v = check_theorem_region(&s(1.0, 0.1, 0.1, 0.2, 1.0));
        assert!(!v.get("a.1").unwrap().satisfied);
        assert!(!v.ok);
    }

    #[test]
    fn boundary_equality_fails_strict_condition() {
        // d1^2 = d2 (c2 + d2) makes the denominator of (b) vanish
        let v = check_theorem_region(&s(1.0, 0.5, 0.5, 0.25, 1.0));
        assert!(v.get("a.1").unwrap().satisfied);
        assert!(!v.get("b").unwrap().satisfied);
    }

    #[test]
    fn ratio_interval_example() {
        match admissible_ratio_interval(&s(1.0, 0.02, 0.2, 0.02, 1.0), 5.0) {
            RatioInterval::Feasible { lo, hi } => {
                assert!((lo - 10.4286).abs() < 1e-4);
                assert!((hi - 199.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        // eps small enough that the lower denominator is positive
        assert!(!admissible_ratio_interval(&s(1.0, 0.02, 0.2, 0.02, 1.0), 0.01).is_feasible());
    }

    #[test]
    fn default_region_contains_anchor() {
        let r = sample_region(1.0, 1.0, &RegionAxes::default(), Execution::Serial).unwrap();
        assert_eq!(r.len(), 40 * 40 * 40);
        let idx = r.find(0.02, 0.2, 0.02).unwrap();
        assert!(r.theorem_ok[idx]);
        let comps = r.theorem_components();
        assert_eq!(comps.len(), 1);
    }

    #[test]
    fn degenerate_failing_point() {
        let axes = RegionAxes {
            c2: AxisRange::new(0.05, 0.05, 1),
            d1: AxisRange::new(1.0, 1.0, 1),
            d2: AxisRange::new(0.05, 0.05, 1),
        };
        let r = sample_region(1.0, 1.0, &axes, Execution::Serial).unwrap();
        assert_eq!(r.theorem_ok, vec![false]);
        let bad = RegionAxes {
            c2: AxisRange::new(0.1, 0.05, 4),
            ..axes
        };
        assert!(sample_region(1.0, 1.0, &bad, Execution::Serial).is_err());
    }
}
