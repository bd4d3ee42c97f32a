//! Closed-form constants, smallness conditions and exponent recursions.
//!
//! Every report carries an `anchor` string naming the result it checks, so
//! JSON output can be matched against the statement it certifies.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::heat::{Provenance, RegularityConstant};
use crate::reaction::ReactionNetwork;

/// A real number or `+∞`; serialises as a JSON number or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Infinite,
}

impl Bound {
    pub fn from_f64(x: f64) -> Self {
        if x == f64::INFINITY {
            Bound::Infinite
        } else {
            Bound::Finite(x)
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Bound::Finite(x) => x,
            Bound::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Bound::Infinite)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(x) => write!(f, "{x}"),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Bound::Finite(x) => s.serialize_f64(x),
            Bound::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bound;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Bound, E> {
                Ok(Bound::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Bound, E> {
                Ok(Bound::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Bound, E> {
                Ok(Bound::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Bound, E> {
                match v {
                    "inf" | "infinity" | "Infinity" => Ok(Bound::Infinite),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// How far a smallness condition can be trusted given the kind of constant
/// it was evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Holds with an upper bound on the constant, hence with the true one.
    Certified,
    /// Holds with a lower estimate of the constant only.
    Plausible,
    /// Fails even with a lower estimate, hence with the true constant.
    Violated,
    /// Fails with an upper bound; the true constant may still satisfy it.
    Undetermined,
}

impl Verdict {
    fn of(holds: bool, c: &RegularityConstant) -> Self {
        match (holds, c.is_upper_bound()) {
            (true, true) => Verdict::Certified,
            (true, false) => Verdict::Plausible,
            (false, false) => Verdict::Violated,
            (false, true) => Verdict::Undetermined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub anchor: &'static str,
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub m: f64,
    pub c: RegularityConstant,
    /// `C (b - a) / 2`; the smallness condition is `condition_lhs < 1`.
    pub condition_lhs: f64,
    pub condition_holds: bool,
    /// `D = C / (1 - C (b - a)/2)` when the condition holds.
    pub d: Option<f64>,
    /// `1 + b D`, multiplying `T^{1/p} ‖u0‖_{L^p}` in the duality bound.
    pub prefactor: Option<f64>,
    pub verdict: Verdict,
    /// Which margin failed, when it did.
    pub violated: Option<String>,
}

fn check_ab(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", format!("must be > 0, got {a}")));
    }
    if !(b >= a && b.is_finite()) {
        return Err(Error::param("b", format!("must satisfy b >= a = {a}, got {b}")));
    }
    Ok(())
}

/// Constants of the duality estimate for coefficients in `[a, b]`, given
/// `C = C_{m,q}` at the midpoint `m = (a + b)/2`.
pub fn duality_prefactor(a: f64, b: f64, q: f64, c: &RegularityConstant) -> Result<DualityReport> {
    check_ab(a, b)?;
    if !(q > 1.0 && q <= 2.0) {
        return Err(Error::param("q", format!("must lie in ]1, 2], got {q}")));
    }
    c.validate()?;
    let m = 0.5 * (a + b);
    if (c.m - m).abs() > 1e-12 * m {
        return Err(Error::param(
            "C",
            format!("constant given at m = {}, the midpoint is {m}", c.m),
        ));
    }
    if (c.q - q).abs() > 1e-12 {
        return Err(Error::param("C", format!("constant given at q = {}, expected {q}", c.q)));
    }
    let lhs = c.value * (b - a) / 2.0;
    let holds = lhs < 1.0;
    let d = holds.then(|| c.value / (1.0 - lhs));
    Ok(DualityReport {
        anchor: "prop1.duality",
        a,
        b,
        q,
        m,
        c: c.clone(),
        condition_lhs: lhs,
        condition_holds: holds,
        d,
        prefactor: d.map(|d| 1.0 + b * d),
        verdict: if a == b { Verdict::Certified } else { Verdict::of(holds, c) },
        violated: (!holds).then(|| format!("C (b - a)/2 = {lhs} >= 1")),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentSelection {
    pub anchor: &'static str,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub c_three_halves: f64,
    /// Selected exponent in `[3/2, 2[`.
    pub p_prime: f64,
    /// Upper bound on `2 - p'` allowed by the strict inequality; `inf` when
    /// every `p' ∈ [3/2, 2]` is admissible.
    pub margin: Bound,
    pub any_admissible: bool,
    /// `(3/p')(2 - p') log(m C)` at the selected exponent.
    pub lhs: f64,
    /// `log((a + b)/(b - a))`.
    pub rhs: Bound,
}

const SAFETY: f64 = 0.9;

/// Chooses `p' ∈ [3/2, 2[` with `(3/p')(2 - p') log(m C) < log((a+b)/(b-a))`,
/// `C = C_{m,3/2}`, taking 90% of the admissible room.
pub fn select_2d_exponent(a: f64, b: f64, c_three_halves: f64) -> Result<ExponentSelection> {
    check_ab(a, b)?;
    if !(c_three_halves > 0.0 && c_three_halves.is_finite()) {
        return Err(Error::param("C_{m,3/2}", "must be positive and finite"));
    }
    let m = 0.5 * (a + b);
    let mc = m * c_three_halves;
    let rhs = if a == b {
        Bound::Infinite
    } else {
        Bound::Finite(((a + b) / (b - a)).ln())
    };
    let lhs_at = |p: f64| (3.0 / p) * (2.0 - p) * mc.ln();
    let (p_prime, margin, any) = match rhs {
        Bound::Infinite => (1.5, Bound::Infinite, true),
        _ if mc <= 1.0 => (1.5, Bound::Infinite, true),
        Bound::Finite(r) => {
            let room = 0.5 * r / mc.ln();
            (2.0 - SAFETY * room.min(0.5), Bound::Finite(room), room >= 0.5)
        }
    };
    Ok(ExponentSelection {
        anchor: "lemma32.dfg",
        a,
        b,
        m,
        c_three_halves,
        p_prime,
        margin,
        any_admissible: any,
        lhs: lhs_at(p_prime),
        rhs,
    })
}

/// Terminal behaviour of an exponent recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Converges to the finite fixed point in `terminal`.
    Convergent,
    /// Grows without bound.
    Divergent,
    /// Any finite exponent is reachable.
    ArbitrarilyLarge,
    /// Reaches the target threshold after `steps_to_target` steps.
    Terminates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentSequence {
    pub name: &'static str,
    pub anchor: &'static str,
    pub start: f64,
    pub terms: Vec<f64>,
    pub regime: Regime,
    pub terminal: Bound,
    pub steps_to_target: Bound,
    pub increasing: bool,
}

fn strictly_increasing(t: &[f64]) -> bool {
    t.windows(2).all(|w| w[1] > w[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma33Report {
    pub anchor: &'static str,
    pub n: u32,
    pub q: f64,
    /// The step-independent exponent `1 - 2/N + 2/(N q)`.
    pub r: f64,
    /// `p_n` and its fixed point.
    pub p: ExponentSequence,
    /// `s_n = p_n N/(N - 2)`, empty in dimension 2.
    pub s: Vec<f64>,
    pub p_infinity: Bound,
}

const MAX_TERMS: usize = 200;

/// The heat-kernel bootstrap `p_{n+1} = μ p_n + ν` with
/// `μ = N(q-1)/(q(N-2)+2)`, `ν = Nq/(q(N-2)+2)`, `p_0 = q`.
pub fn lemma33_exponents(n: u32, q: f64) -> Result<Lemma33Report> {
    if n < 2 {
        return Err(Error::param("N", "must be >= 2"));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::param("q", format!("must be > 1, got {q}")));
    }
    let nf = n as f64;
    let r = 1.0 - 2.0 / nf + 2.0 / (nf * q);
    if n == 2 {
        return Ok(Lemma33Report {
            anchor: "lemma33.recursion",
            n,
            q,
            r,
            p: ExponentSequence {
                name: "p_n",
                anchor: "lemma33.recursion",
                start: q,
                terms: vec![q],
                regime: Regime::ArbitrarilyLarge,
                terminal: Bound::Infinite,
                steps_to_target: Bound::Infinite,
                increasing: true,
            },
            s: Vec::new(),
            p_infinity: Bound::Infinite,
        });
    }
    let den = q * (nf - 2.0) + 2.0;
    let mu = nf * (q - 1.0) / den;
    let nu = nf * q / den;
    let convergent = 2.0 * q < nf + 2.0;
    let p_inf = if convergent {
        Bound::Finite(nf * q / (nf + 2.0 - 2.0 * q))
    } else {
        Bound::Infinite
    };
    let mut terms = vec![q];
    let mut steps = Bound::Infinite;
    while terms.len() < MAX_TERMS {
        let p = *terms.last().unwrap();
        let next = mu * p + nu;
        terms.push(next);
        if let Bound::Finite(pi) = p_inf {
            if (next - pi).abs() <= 1e-12 * pi {
                steps = Bound::Finite((terms.len() - 1) as f64);
                break;
            }
        } else if next > 1e12 {
            break;
        }
    }
    let s = terms.iter().map(|p| p * nf / (nf - 2.0)).collect();
    Ok(Lemma33Report {
        anchor: "lemma33.recursion",
        n,
        q,
        r,
        p: ExponentSequence {
            name: "p_n",
            anchor: "lemma33.recursion",
            start: q,
            increasing: strictly_increasing(&terms),
            terms,
            regime: if convergent { Regime::Convergent } else { Regime::Divergent },
            terminal: p_inf,
            steps_to_target: steps,
        },
        s,
        p_infinity: p_inf,
    })
}

/// `q_{n+1} = ½ q_n (N+2)/(N+2-q_n)`, run until `q_n >= N + 2`.
pub fn lemma36_iteration(n: u32, q0: f64) -> Result<ExponentSequence> {
    if n < 1 {
        return Err(Error::param("N", "must be >= 1"));
    }
    let np2 = n as f64 + 2.0;
    if !(q0 > np2 / 2.0 && q0.is_finite()) {
        return Err(Error::Hypothesis(format!(
            "the iteration needs q0 > (N+2)/2 = {}, got {q0}",
            np2 / 2.0
        )));
    }
    let mut terms = vec![q0];
    while *terms.last().unwrap() < np2 {
        if terms.len() > 100_000 {
            return Err(Error::NonConvergence {
                iterations: terms.len(),
                residual: np2 - terms.last().unwrap(),
            });
        }
        let q = *terms.last().unwrap();
        terms.push(0.5 * q * np2 / (np2 - q));
    }
    let increasing = strictly_increasing(&terms);
    if !increasing {
        return Err(Error::Numerical("iteration failed to increase".into()));
    }
    Ok(ExponentSequence {
        name: "q_n",
        anchor: "lemma36.iteration",
        start: q0,
        terminal: Bound::Finite(*terms.last().unwrap()),
        steps_to_target: Bound::Finite((terms.len() - 1) as f64),
        terms,
        regime: Regime::Terminates,
        increasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallnessCheck {
    pub anchor: &'static str,
    /// Exponent at which the constant is needed.
    pub exponent: f64,
    pub c: RegularityConstant,
    /// `2 / C`; the condition is `δ < threshold`.
    pub threshold: f64,
    pub holds: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prop4Report {
    pub n: u32,
    pub q: u32,
    pub q_conjugate: f64,
    /// `(Q-1)(N+2)/((Q-1)(N+2) - 2)`.
    pub bounded_exponent: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub weak: SmallnessCheck,
    pub bounded: SmallnessCheck,
    pub weak_ok: bool,
    pub bounded_ok: bool,
}

/// Exponent at which the boundedness condition evaluates the constant.
pub fn prop4_bounded_exponent(n: u32, q: u32) -> f64 {
    let k = (q as f64 - 1.0) * (n as f64 + 2.0);
    k / (k - 2.0)
}

/// Smallness conditions for a superquadratic network in dimension `n`.
/// `provider(m, q)` supplies `C_{m,q}`; prefer upper bounds where available
/// so that verdicts come out certified.
pub fn prop4_conditions(
    net: &ReactionNetwork,
    n: u32,
    provider: &dyn Fn(f64, f64) -> Result<RegularityConstant>,
) -> Result<Prop4Report> {
    if n < 1 {
        return Err(Error::param("N", "must be >= 1"));
    }
    if !net.has_opposite_signs() {
        return Err(Error::Hypothesis(
            "needs two coefficients beta_i - alpha_i of opposite signs".into(),
        ));
    }
    let q = net.q();
    if q < 3 {
        return Err(Error::Hypothesis(format!("needs Q >= 3, got Q = {q}")));
    }
    let (k, l) = net.rates();
    if !(k > 0.0 && l > 0.0) {
        return Err(Error::Hypothesis("needs k > 0 and l > 0".into()));
    }
    let spread = net.spread();
    if !(spread.a > 0.0) {
        return Err(Error::Hypothesis("needs every diffusion rate > 0".into()));
    }
    let m = spread.midpoint();
    let check = |anchor: &'static str, exponent: f64| -> Result<SmallnessCheck> {
        let c = provider(m, exponent)?;
        c.validate()?;
        if (c.m - m).abs() > 1e-12 * m || (c.q - exponent).abs() > 1e-12 {
            return Err(Error::param(
                "C",
                format!("provider returned C at (m, q) = ({}, {}), wanted ({m}, {exponent})", c.m, c.q),
            ));
        }
        let threshold = 2.0 / c.value;
        let holds = spread.delta < threshold;
        Ok(SmallnessCheck {
            anchor,
            exponent,
            threshold,
            holds,
            verdict: if spread.delta == 0.0 { Verdict::Certified } else { Verdict::of(holds, &c) },
            c,
        })
    };
    let qc = q as f64 / (q as f64 - 1.0);
    let be = prop4_bounded_exponent(n, q);
    let weak = check("prop4.weak", qc)?;
    let bounded = check("prop4.bounded", be)?;
    Ok(Prop4Report {
        n,
        q,
        q_conjugate: qc,
        bounded_exponent: be,
        a: spread.a,
        b: spread.b,
        delta: spread.delta,
        weak_ok: weak.holds,
        bounded_ok: bounded.holds,
        weak,
        bounded,
    })
}

/// Default constant provider: the analytic anchor at `q = 2`, the
/// interpolated upper bound on `[3/2, 2]` when `C_{m,3/2}` is known, and
/// `fallback` otherwise.
pub fn standard_provider<'a>(
    c_three_halves: Option<f64>,
    fallback: &'a dyn Fn(f64, f64) -> Result<RegularityConstant>,
) -> impl Fn(f64, f64) -> Result<RegularityConstant> + 'a {
    move |m, q| {
        if q == 2.0 {
            RegularityConstant::analytic(m)
        } else if let (Some(c), true) = (c_three_halves, (1.5..=2.0).contains(&q)) {
            crate::heat::interpolated_cmr(m, q, c)
        } else {
            fallback(m, q)
        }
    }
}

/// Provider that refuses every request it cannot answer analytically.
pub fn no_fallback(m: f64, q: f64) -> Result<RegularityConstant> {
    Err(Error::param(
        "C",
        format!("no value of C_{{m,q}} available at m = {m}, q = {q}; supply one or estimate it"),
    ))
}

/// `z_k = z_{k-1}/(Q - 2 z_{k-1}/(N+2))`, stopping once `z >= Q(1 + N/2)`.
pub fn prop4_zk_sequence(n: u32, q: u32, z0: f64) -> Result<ExponentSequence> {
    let (nf, qf) = (n as f64, q as f64);
    let entry = (1.0 + nf / 2.0) * (qf - 1.0);
    if !(z0 > entry && z0.is_finite()) {
        return Err(Error::Hypothesis(format!(
            "the bootstrap needs z0 > (1 + N/2)(Q - 1) = {entry}, got {z0}"
        )));
    }
    let target = qf * (1.0 + nf / 2.0);
    let mut terms = vec![z0];
    let mut terminal = Bound::Finite(z0);
    while *terms.last().unwrap() < target {
        let z = *terms.last().unwrap();
        let den = qf - 2.0 * z / (nf + 2.0);
        if den <= 0.0 {
            terminal = Bound::Infinite;
            break;
        }
        if terms.len() > 100_000 {
            return Err(Error::NonConvergence {
                iterations: terms.len(),
                residual: target - z,
            });
        }
        let next = z / den;
        terms.push(next);
        terminal = Bound::Finite(next);
    }
    Ok(ExponentSequence {
        name: "z_k",
        anchor: "prop4.zk",
        start: z0,
        steps_to_target: Bound::Finite((terms.len() - 1) as f64),
        increasing: strictly_increasing(&terms),
        terms,
        regime: Regime::Terminates,
        terminal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnReport {
    pub sequence: ExponentSequence,
    /// Last index with `p_n < 4`.
    pub n0: usize,
    /// `p_{N0 + 1} >= 4`.
    pub p_exit: Bound,
}

/// `1/p_{n+1} = 2/p_n - 1/2` from `p0 ∈ ]2, 4[` until the sequence leaves `]2, 4[`.
pub fn prop5_pn_sequence(p0: f64) -> Result<PnReport> {
    if !(p0 > 2.0 && p0 < 4.0) {
        return Err(Error::param("p0", format!("must lie in ]2, 4[, got {p0}")));
    }
    let mut terms = vec![p0];
    loop {
        let p = *terms.last().unwrap();
        if p >= 4.0 {
            break;
        }
        if terms.len() > 100_000 {
            return Err(Error::NonConvergence {
                iterations: terms.len(),
                residual: 4.0 - p,
            });
        }
        let inv = 2.0 / p - 0.5;
        terms.push(if inv > 0.0 { 1.0 / inv } else { f64::INFINITY });
    }
    let n0 = terms.len() - 2;
    let exit = Bound::from_f64(*terms.last().unwrap());
    Ok(PnReport {
        sequence: ExponentSequence {
            name: "p_n",
            anchor: "prop5.pn",
            start: p0,
            increasing: strictly_increasing(&terms),
            terms,
            regime: Regime::Terminates,
            terminal: exit,
            steps_to_target: Bound::Finite((n0 + 1) as f64),
        },
        n0,
        p_exit: exit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReinReport {
    pub anchor: &'static str,
    pub n: u32,
    pub p: f64,
    /// Every `r < r_max` is reachable.
    pub r_max: Bound,
}

/// `r_max = pN/(N + 2 - 2p)`, infinite once `2p >= N + 2`.
pub fn remark_rein_exponent(n: u32, p: f64) -> Result<ReinReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param("p", format!("must be > 1, got {p}")));
    }
    if n < 1 {
        return Err(Error::param("N", "must be >= 1"));
    }
    let nf = n as f64;
    let den = nf + 2.0 - 2.0 * p;
    Ok(ReinReport {
        anchor: "remark.rein",
        n,
        p,
        r_max: if den <= 0.0 {
            Bound::Infinite
        } else {
            Bound::Finite(p * nf / den)
        },
    })
}

/// A constant with the provenance of an empirical lower estimate, mostly
/// useful for exploring conditions with values measured elsewhere.
pub fn empirical_constant(m: f64, q: f64, value: f64) -> Result<RegularityConstant> {
    RegularityConstant::given(m, q, value, Provenance::Empirical)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(m: f64) -> RegularityConstant {
        RegularityConstant::analytic(m).unwrap()
    }

    #[test]
    fn bound_serialises_infinity_explicitly() {
        assert_eq!(serde_json::to_string(&Bound::Infinite).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Bound::Finite(2.5)).unwrap(), "2.5");
        let b: Bound = serde_json::from_str("\"inf\"").unwrap();
        assert!(b.is_infinite());
        let b: Bound = serde_json::from_str("3").unwrap();
        assert_eq!(b, Bound::Finite(3.0));
    }

    #[test]
    fn duality_zero_spread() {
        let c = RegularityConstant::given(1.5, 1.5, 0.8, Provenance::Interpolated).unwrap();
        let r = duality_prefactor(1.5, 1.5, 1.5, &c).unwrap();
        assert_eq!(r.condition_lhs, 0.0);
        assert_eq!(r.d, Some(0.8));
        assert_eq!(r.verdict, Verdict::Certified);
    }

    #[test]
    fn duality_with_anchor() {
        for (a, b) in [(1.0, 3.0), (0.1, 100.0), (2.0, 2.5)] {
            let m = 0.5 * (a + b);
            let r = duality_prefactor(a, b, 2.0, &anchor(m)).unwrap();
            assert!(r.condition_holds);
            // C/(1 - C(b-a)/2) with C = 2/(a+b) simplifies to 1/a.
            assert!((r.d.unwrap() - 1.0 / a).abs() < 1e-12 / a);
            assert!((r.condition_lhs - (b - a) / (a + b)).abs() < 1e-15);
            assert!((r.prefactor.unwrap() - (1.0 + b / a)).abs() < 1e-12 * (1.0 + b / a));
            assert_eq!(r.verdict, Verdict::Certified);
        }
    }

    #[test]
    fn duality_threshold_logic() {
        // C (b - a)/2 = 1.2 with a = 1, b = 3.
        let c = RegularityConstant::given(2.0, 1.5, 1.2, Provenance::Empirical).unwrap();
        let r = duality_prefactor(1.0, 3.0, 1.5, &c).unwrap();
        assert!(!r.condition_holds);
        assert_eq!(r.d, None);
        assert_eq!(r.prefactor, None);
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(r.violated.is_some());
        let up = RegularityConstant::given(2.0, 1.5, 1.2, Provenance::Interpolated).unwrap();
        assert_eq!(duality_prefactor(1.0, 3.0, 1.5, &up).unwrap().verdict, Verdict::Undetermined);
        let low = RegularityConstant::given(2.0, 1.5, 0.5, Provenance::Empirical).unwrap();
        assert_eq!(duality_prefactor(1.0, 3.0, 1.5, &low).unwrap().verdict, Verdict::Plausible);
    }

    #[test]
    fn duality_rejects_wrong_midpoint() {
        assert!(duality_prefactor(1.0, 3.0, 2.0, &anchor(1.0)).is_err());
        assert!(duality_prefactor(3.0, 1.0, 2.0, &anchor(2.0)).is_err());
        assert!(duality_prefactor(1.0, 3.0, 1.5, &anchor(2.0)).is_err());
    }

    #[test]
    fn d_is_continuous_at_zero_spread() {
        let a = 1.0;
        let c_at = |m: f64| RegularityConstant::given(m, 1.5, 1.0 / m.sqrt(), Provenance::Interpolated).unwrap();
        let c0 = c_at(a).value;
        let mut prev = f64::INFINITY;
        for e in [1e-2, 1e-4, 1e-6, 1e-8] {
            let b = a + e;
            let r = duality_prefactor(a, b, 1.5, &c_at(0.5 * (a + b))).unwrap();
            let gap = (r.d.unwrap() - c0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn select_exponent_examples() {
        let s = select_2d_exponent(1.0, 3.0, 1.0).unwrap();
        assert!((s.p_prime - 1.55).abs() < 1e-12);
        assert_eq!(s.margin, Bound::Finite(0.5));
        assert!(s.lhs < s.rhs.as_f64());

        let s = select_2d_exponent(1.0, 3.0, 0.4).unwrap();
        assert_eq!(s.p_prime, 1.5);
        assert!(s.margin.is_infinite());

        let s = select_2d_exponent(2.0, 2.0, 10.0).unwrap();
        assert_eq!(s.p_prime, 1.5);
        assert!(s.any_admissible);

        let close = select_2d_exponent(1.0, 1.0 + 1e-9, 10.0).unwrap();
        assert!(close.margin.as_f64() > 1.0);
        assert!((close.p_prime - 1.55).abs() < 1e-12);

        let wide = select_2d_exponent(0.1, 10.0, 50.0).unwrap();
        assert!(wide.p_prime > 1.5 && wide.p_prime < 2.0);
        assert!(wide.lhs < wide.rhs.as_f64());
    }

    #[test]
    fn lemma33_examples() {
        let r = lemma33_exponents(3, 2.0).unwrap();
        assert_eq!(r.p_infinity, Bound::Finite(6.0));
        assert_eq!(r.p.terms[0], 2.0);
        assert_eq!(r.p.regime, Regime::Convergent);
        assert!((r.p.terms.last().unwrap() - 6.0).abs() < 1e-11);
        assert!(r.p.increasing);
        assert!((r.r - (1.0 - 2.0 / 3.0 + 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(r.s[0], 6.0);

        let d = lemma33_exponents(3, 2.5).unwrap();
        assert_eq!(d.p.regime, Regime::Divergent);
        assert!(d.p_infinity.is_infinite());
        // Multiplier 1: arithmetic growth.
        let steps: Vec<f64> = d.p.terms.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-9 * steps[0].max(1.0)));

        let two = lemma33_exponents(2, 1.7).unwrap();
        assert_eq!(two.p.regime, Regime::ArbitrarilyLarge);
        assert!(lemma33_exponents(3, 1.0).is_err());
    }

    #[test]
    fn lemma36_examples() {
        let s = lemma36_iteration(2, 2.5).unwrap();
        assert_eq!(s.terms.len(), 3);
        assert!((s.terms[1] - 10.0 / 3.0).abs() < 1e-12);
        assert!((s.terms[2] - 10.0).abs() < 1e-12);
        assert_eq!(s.steps_to_target, Bound::Finite(2.0));
        assert!(matches!(lemma36_iteration(2, 2.0), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn prop4_examples() {
        let net = ReactionNetwork::new(vec![3, 0], vec![0, 1], 1.0, 1.0, vec![1.0, 1.0]).unwrap();
        let provider = standard_provider(Some(1.0), &no_fallback);
        let r = prop4_conditions(&net, 2, &provider);
        // Q = 3, N = 2 needs C at 4/3, outside the interpolation range.
        assert!(r.is_err());
        let fallback = |m: f64, q: f64| empirical_constant(m, q, 5.0);
        let provider = standard_provider(Some(0.5), &fallback);
        let r = prop4_conditions(&net, 2, &provider).unwrap();
        assert_eq!(r.q, 3);
        assert!((r.q_conjugate - 1.5).abs() < 1e-15);
        assert!((r.bounded_exponent - 4.0 / 3.0).abs() < 1e-15);
        assert!(r.weak_ok && r.bounded_ok);
        assert_eq!(r.weak.verdict, Verdict::Certified);
        assert_eq!(r.weak.anchor, "prop4.weak");

        let spread = net.with_diffusion(vec![0.5, 2.5]).unwrap();
        let r = prop4_conditions(&spread, 2, &provider).unwrap();
        assert_eq!(r.weak.verdict, Verdict::Certified);
        assert!(!r.bounded_ok);
        assert_eq!(r.bounded.verdict, Verdict::Violated);

        let quad = ReactionNetwork::four_species([1.0; 4]).unwrap();
        assert!(matches!(prop4_conditions(&quad, 2, &provider), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn zk_examples() {
        let s = prop4_zk_sequence(2, 3, 4.5).unwrap();
        assert_eq!(s.terms, vec![4.5, 6.0]);
        assert_eq!(s.steps_to_target, Bound::Finite(1.0));
        let s = prop4_zk_sequence(2, 3, 6.0).unwrap();
        assert_eq!(s.steps_to_target, Bound::Finite(0.0));
        assert!(prop4_zk_sequence(2, 3, 4.0).is_err());
        let s = prop4_zk_sequence(3, 4, 7.6).unwrap();
        assert!(s.increasing);
        assert!(*s.terms.last().unwrap() >= 10.0);
    }

    #[test]
    fn pn_examples() {
        let r = prop5_pn_sequence(2.5).unwrap();
        assert_eq!(r.n0, 1);
        assert!((r.sequence.terms[1] - 10.0 / 3.0).abs() < 1e-12);
        assert!((r.p_exit.as_f64() - 10.0).abs() < 1e-12);
        let r = prop5_pn_sequence(4.0 - 1e-9).unwrap();
        assert_eq!(r.n0, 0);
        assert!(prop5_pn_sequence(2.0).is_err());
        assert!(prop5_pn_sequence(4.0).is_err());
    }

    #[test]
    fn rein_examples() {
        assert_eq!(remark_rein_exponent(2, 1.5).unwrap().r_max, Bound::Finite(3.0));
        assert_eq!(remark_rein_exponent(2, 2.0).unwrap().r_max, Bound::Infinite);
        assert_eq!(remark_rein_exponent(4, 2.0).unwrap().r_max, Bound::Finite(4.0));
        assert!(remark_rein_exponent(2, 1.0).is_err());
    }

    #[test]
    fn report_json_carries_anchor_and_inf() {
        let s = select_2d_exponent(1.0, 3.0, 0.4).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["anchor"], "lemma32.dfg");
        assert_eq!(v["margin"], "inf");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn anchor_always_satisfies_condition(a in 1e-3f64..1e3, ratio in 1.0f64..1e4) {
                let b = a * ratio;
                let r = duality_prefactor(a, b, 2.0, &anchor(0.5 * (a + b))).unwrap();
                prop_assert!(r.condition_holds);
                prop_assert_eq!(r.condition_holds, r.condition_lhs < 1.0);
            }

            #[test]
            fn d_defined_iff_condition(a in 0.1f64..5.0, spread in 0.0f64..5.0, c in 0.01f64..5.0) {
                let b = a + spread;
                let k = RegularityConstant::given(0.5 * (a + b), 1.5, c, Provenance::Empirical).unwrap();
                let r = duality_prefactor(a, b, 1.5, &k).unwrap();
                prop_assert_eq!(r.d.is_some(), r.condition_holds);
                if let Some(d) = r.d {
                    prop_assert!((d - c / (1.0 - c * spread / 2.0)).abs() <= 1e-12 * d);
                }
            }

            #[test]
            fn lemma36_ratio_increases(n in 1u32..6, frac in 0.01f64..0.99) {
                let np2 = n as f64 + 2.0;
                let q0 = np2 / 2.0 + frac * np2 / 2.0;
                let s = lemma36_iteration(n, q0).unwrap();
                prop_assert!(s.increasing);
                let t = &s.terms;
                for w in t.windows(3) {
                    prop_assert!(w[2] / w[1] > w[1] / w[0]);
                }
                let again = lemma36_iteration(n, q0).unwrap();
                prop_assert_eq!(
                    t.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    again.terms.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
                );
            }

            #[test]
            fn zk_increases_to_target(n in 1u32..5, q in 3u32..7, frac in 0.01f64..1.0) {
                let (nf, qf) = (n as f64, q as f64);
                let entry = (1.0 + nf / 2.0) * (qf - 1.0);
                let z0 = entry + frac * (1.0 + nf / 2.0);
                let s = prop4_zk_sequence(n, q, z0).unwrap();
                prop_assert!(s.increasing);
            }
        }
    }
}
