//! Detailed-balance equilibria: the positive state with `l ∏ a^α = k ∏ a^β`
//! that carries the same conserved masses as the initial averages.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reaction::ReactionNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub values: Vec<f64>,
    /// Conserved quantities the equilibrium was matched to.
    pub masses: Vec<f64>,
    /// `|l ∏ a^α - k ∏ a^β|` at `values`.
    pub residual: f64,
    pub iterations: usize,
}

/// Conserved masses `(a1 + a2, a1 + a4, a2 + a3)` of `A1 + A3 ⇌ A2 + A4`.
pub fn four_species_masses(avg: [f64; 4]) -> [f64; 3] {
    [avg[0] + avg[1], avg[0] + avg[3], avg[1] + avg[2]]
}

/// Equilibrium of `A1 + A3 ⇌ A2 + A4` with unit rates from the masses
/// `a1 + a2 = m12`, `a1 + a4 = m14`, `a2 + a3 = m23`.
///
/// Substituting the laws into `a1 a3 = a2 a4` cancels the quadratic terms,
/// leaving `a1 (m14 + m23) = m12 m14`.
pub fn four_species_equilibrium(m12: f64, m14: f64, m23: f64) -> Result<EquilibriumResult> {
    for (name, m) in [("mass12", m12), ("mass14", m14), ("mass23", m23)] {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::param(name, format!("must be finite and > 0, got {m}")));
        }
    }
    let s = m14 + m23;
    if s <= m12 {
        return Err(Error::BoundaryEquilibrium(format!(
            "masses need m14 + m23 > m12 (got {m14} + {m23} <= {m12})"
        )));
    }
    let a1 = m12 * m14 / s;
    let a2 = m12 * m23 / s;
    let a4 = m14 * (s - m12) / s;
    let a3 = m23 * (s - m12) / s;
    Ok(EquilibriumResult {
        values: vec![a1, a2, a3, a4],
        masses: vec![m12, m14, m23],
        residual: (a1 * a3 - a2 * a4).abs(),
        iterations: 0,
    })
}

const MAX_NEWTON: usize = 100;

/// Equilibrium of a general single-reaction network by Newton's method in
/// log-concentrations, constrained by the network's conservation basis
/// evaluated at `averages`.
pub fn general_equilibrium(net: &ReactionNetwork, averages: &[f64]) -> Result<EquilibriumResult> {
    general_equilibrium_with_basis(net, averages, &net.conservation_basis())
}

/// As [`general_equilibrium`] with an explicit basis of conservation laws
/// (rows orthogonal to `β - α`).
pub fn general_equilibrium_with_basis(
    net: &ReactionNetwork,
    averages: &[f64],
    basis: &[Vec<f64>],
) -> Result<EquilibriumResult> {
    let n = net.species();
    if averages.len() != n {
        return Err(Error::param("averages", "need one average per species"));
    }
    if averages.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(Error::param("averages", "must be finite and >= 0"));
    }
    if !net.has_opposite_signs() {
        return Err(Error::Hypothesis(
            "no two stoichiometric differences beta_i - alpha_i of opposite signs".into(),
        ));
    }
    let (k, l) = net.rates();
    if k == 0.0 || l == 0.0 {
        return Err(Error::Hypothesis("detailed balance needs k > 0 and l > 0".into()));
    }
    let s = net.stoichiometry();
    if basis.len() != n - 1 || basis.iter().any(|w| w.len() != n) {
        return Err(Error::param("basis", "need n - 1 conservation laws of length n"));
    }
    for w in basis {
        let dot: f64 = w.iter().zip(&s).map(|(x, &y)| x * y as f64).sum();
        if dot.abs() > 1e-12 * w.iter().map(|x| x.abs()).sum::<f64>() {
            return Err(Error::param("basis", "law is not orthogonal to beta - alpha"));
        }
    }
    let masses: Vec<f64> = basis
        .iter()
        .map(|w| w.iter().zip(averages).map(|(x, y)| x * y).sum())
        .collect();

    // States with the same masses are averages + xi * s; positivity confines
    // xi to an open interval.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..n {
        let si = s[i] as f64;
        if s[i] == 0 {
            if averages[i] <= 0.0 {
                return Err(Error::BoundaryEquilibrium(format!(
                    "species {} does not react and has zero mass",
                    i + 1
                )));
            }
        } else if si > 0.0 {
            lo = lo.max(-averages[i] / si);
        } else {
            hi = hi.min(-averages[i] / si);
        }
    }
    if !(hi - lo > 1e-14 * (1.0 + lo.abs().max(hi.abs()))) {
        return Err(Error::BoundaryEquilibrium(
            "the conservation laws admit no strictly positive state".into(),
        ));
    }
    let xi0 = 0.5 * (lo + hi);
    let mut x: Vec<f64> = (0..n).map(|i| (averages[i] + xi0 * s[i] as f64).ln()).collect();

    let ln_ratio = (k / l).ln();
    let d: Vec<f64> = s.iter().map(|&v| -(v as f64)).collect();
    // Row-scale invariant residual: relative conservation error plus the
    // log-balance error.
    let residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let a: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let mut f = Vec::with_capacity(n);
        let mut norm = 0.0_f64;
        for (w, &m) in basis.iter().zip(&masses) {
            let val: f64 = w.iter().zip(&a).map(|(p, q)| p * q).sum::<f64>() - m;
            let scale = w.iter().zip(&a).map(|(p, q)| (p * q).abs()).sum::<f64>() + m.abs();
            f.push(val);
            norm = norm.max(val.abs() / scale);
        }
        let bal: f64 = d.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - ln_ratio;
        f.push(bal);
        (f, norm.max(bal.abs()))
    };

    let (mut f, mut err) = residual(&x);
    let mut iterations = 0;
    while iterations < MAX_NEWTON {
        iterations += 1;
        let mut jac = DMatrix::zeros(n, n);
        for (r, w) in basis.iter().enumerate() {
            for c in 0..n {
                jac[(r, c)] = w[c] * x[c].exp();
            }
        }
        for c in 0..n {
            jac[(n - 1, c)] = d[c];
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let Some(dx) = jac.lu().solve(&rhs) else {
            return Err(Error::Numerical("singular Newton matrix".into()));
        };
        // Backtracking, also capping the change of any log-concentration.
        let cap = dx.amax();
        let mut t = if cap > 2.0 { 2.0 / cap } else { 1.0 };
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + t * b).collect();
            let (ft, et) = residual(&trial);
            if et.is_finite() && (et < err || et <= 1e-15) {
                x = trial;
                f = ft;
                err = et;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if err <= 1e-15 || (!accepted && err <= 1e-13) || t * cap < 1e-16 {
            break;
        }
        if !accepted {
            return Err(Error::NonConvergence {
                iterations,
                residual: err,
            });
        }
    }
    if err > 1e-13 {
        return Err(Error::NonConvergence {
            iterations,
            residual: err,
        });
    }
    let values: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let w = net.velocity(&values).abs();
    Ok(EquilibriumResult {
        values,
        masses,
        residual: w,
        iterations,
    })
}
