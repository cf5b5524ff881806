//! The diagonal measure, the diagonal-orbit measure nu, and L^p(nu) norms.
//!
//! On a finite system the support of nu is the union of the product-map
//! orbits of the diagonal atoms, which is finite, and every atom weight is a
//! two-sided geometric series over an arithmetic progression of shifts. Those
//! series are summed in closed form, so all finite-system weights are exact
//! rationals. Circle systems are handled by sampling only.

use crate::error::{Error, Result};
use crate::scalar::{q_to_f64, Q};
use crate::systems::{CircleSystem, FiniteSystem};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// The mixture weight of shift n: (1/3) * 2^{-|n|}. Sums to 1 over all of Z.
pub fn shift_weight(n: i64) -> Q {
    Q::new(BigInt::one(), BigInt::from(3) << n.unsigned_abs() as usize)
}

/// Sum of 2^{-|n|} over the full arithmetic progression n ≡ r (mod p), in
/// closed form: (2^{p-r} + 2^r) / (2^p - 1), for 0 <= r < p.
pub fn shift_class_series(modulus: usize, residue: usize) -> Q {
    assert!(modulus > 0 && residue < modulus);
    let num = (BigInt::one() << (modulus - residue)) + (BigInt::one() << residue);
    let den = (BigInt::one() << modulus) - BigInt::one();
    Q::new(num, den)
}

/// One arithmetic progression of shifts contributing to a support atom:
/// { n ∈ Z : n ≡ residue (mod modulus) }, fed by a diagonal atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftClass {
    /// Diagonal atom x whose orbit passes through the point.
    pub base_atom: usize,
    pub residue: usize,
    pub modulus: usize,
}

/// A point of the nu support with its exact weight.
#[derive(Debug, Clone)]
pub struct SupportAtom {
    pub point: Vec<usize>,
    pub nu_weight: Q,
    pub shifts: Vec<ShiftClass>,
    /// Index of the orbit (product-map cycle) this atom lies on.
    pub orbit: usize,
    /// Position along the cycle, relative to the cycle's enumeration start.
    pub position: usize,
}

/// One product-map cycle of the support.
#[derive(Debug, Clone)]
pub struct OrbitInfo {
    pub period: usize,
    /// Support-atom ids in cycle order.
    pub atoms: Vec<usize>,
    /// True when some contributing diagonal atom has positive mu weight.
    pub positive_mass: bool,
}

/// The materialized support of the diagonal-orbit measure of a finite system.
#[derive(Debug, Clone)]
pub struct NuSupport {
    atoms: Vec<SupportAtom>,
    index: HashMap<Vec<usize>, usize>,
    successor: Vec<usize>,
    predecessor: Vec<usize>,
    orbits: Vec<OrbitInfo>,
    period_lcm: u64,
}

/// Enumerates the orbit of every diagonal atom and assigns closed-form
/// weights. Zero-weight diagonal atoms are included so that nu-null subsets
/// of the enumerated support exist and can be tested.
pub fn build_nu_support(sys: &FiniteSystem) -> NuSupport {
    let m = sys.num_atoms();
    let mut atoms: Vec<SupportAtom> = Vec::new();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut orbits: Vec<OrbitInfo> = Vec::new();

    for x in 0..m {
        let start = sys.diagonal_point(x);
        if index.contains_key(&start) {
            continue;
        }
        let orbit_id = orbits.len();
        let cycle = sys.orbit_of(&start).expect("diagonal point is valid").cycle;
        let period = cycle.len();
        let mut ids = Vec::with_capacity(period);
        for (pos, point) in cycle.into_iter().enumerate() {
            let id = atoms.len();
            index.insert(point.clone(), id);
            atoms.push(SupportAtom {
                point,
                nu_weight: Q::zero(),
                shifts: Vec::new(),
                orbit: orbit_id,
                position: pos,
            });
            ids.push(id);
        }
        orbits.push(OrbitInfo {
            period,
            atoms: ids,
            positive_mass: false,
        });
    }

    // Locate every diagonal atom on its cycle, then spread its geometric
    // series over the cycle positions.
    for orbit in &mut orbits {
        let period = orbit.period;
        let diagonals: Vec<(usize, usize)> = orbit
            .atoms
            .iter()
            .filter_map(|&id| {
                let p = &atoms[id].point;
                if p.iter().all(|&c| c == p[0]) {
                    Some((p[0], atoms[id].position))
                } else {
                    None
                }
            })
            .collect();
        debug_assert!(!diagonals.is_empty());
        orbit.positive_mass = diagonals
            .iter()
            .any(|&(x, _)| sys.space().weight(x) > &Q::zero());
        let third = Q::new(BigInt::one(), BigInt::from(3));
        for &id in &orbit.atoms {
            let pos = atoms[id].position;
            let mut weight = Q::zero();
            let mut shifts = Vec::with_capacity(diagonals.len());
            for &(x, diag_pos) in &diagonals {
                let residue = (pos + period - diag_pos) % period;
                weight += sys.space().weight(x) * shift_class_series(period, residue);
                shifts.push(ShiftClass {
                    base_atom: x,
                    residue,
                    modulus: period,
                });
            }
            atoms[id].nu_weight = &third * weight;
            atoms[id].shifts = shifts;
        }
    }

    let n = atoms.len();
    let mut successor = vec![0usize; n];
    let mut predecessor = vec![0usize; n];
    for orbit in &orbits {
        let p = orbit.period;
        for (k, &id) in orbit.atoms.iter().enumerate() {
            let next = orbit.atoms[(k + 1) % p];
            successor[id] = next;
            predecessor[next] = id;
        }
    }

    let period_lcm = orbits
        .iter()
        .fold(1u64, |acc, o| acc.lcm(&(o.period as u64)));

    NuSupport {
        atoms,
        index,
        successor,
        predecessor,
        orbits,
        period_lcm,
    }
}

impl NuSupport {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[SupportAtom] {
        &self.atoms
    }

    pub fn atom(&self, id: usize) -> &SupportAtom {
        &self.atoms[id]
    }

    pub fn index_of(&self, point: &[usize]) -> Option<usize> {
        self.index.get(point).copied()
    }

    /// Id of Phi(z) for support atom id.
    pub fn successor(&self, id: usize) -> usize {
        self.successor[id]
    }

    pub fn predecessor(&self, id: usize) -> usize {
        self.predecessor[id]
    }

    pub fn orbits(&self) -> &[OrbitInfo] {
        &self.orbits
    }

    /// lcm of all orbit periods.
    pub fn period_lcm(&self) -> u64 {
        self.period_lcm
    }

    pub fn total_mass(&self) -> Q {
        self.atoms.iter().map(|a| &a.nu_weight).sum()
    }

    pub fn nu_measure(&self, subset: &[bool]) -> Q {
        subset
            .iter()
            .zip(&self.atoms)
            .filter(|(&inside, _)| inside)
            .map(|(_, a)| &a.nu_weight)
            .sum()
    }

    /// nu(Phi^{-1} A) by materializing the preimage.
    pub fn preimage_measure(&self, subset: &[bool]) -> Q {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(id, _)| subset[self.successor[*id]])
            .map(|(_, a)| &a.nu_weight)
            .sum()
    }

    /// nu(Phi^{-1} A) by shifting every contributing progression by one,
    /// without touching the preimage itself.
    pub fn preimage_measure_reweighted(&self, sys: &FiniteSystem, subset: &[bool]) -> Q {
        let third = Q::new(BigInt::one(), BigInt::from(3));
        let mut total = Q::zero();
        for (inside, atom) in subset.iter().zip(&self.atoms) {
            if !inside {
                continue;
            }
            for class in &atom.shifts {
                let shifted = (class.residue + class.modulus - 1) % class.modulus;
                total += &third
                    * sys.space().weight(class.base_atom)
                    * shift_class_series(class.modulus, shifted);
            }
        }
        total
    }

    /// Integer weights over a single common denominator, for fast exact
    /// subset sums.
    pub fn scaled_weights(&self) -> (BigInt, Vec<BigInt>) {
        let mut denom = BigInt::one();
        for a in &self.atoms {
            denom = denom.lcm(a.nu_weight.denom());
        }
        let numers = self
            .atoms
            .iter()
            .map(|a| a.nu_weight.numer() * (&denom / a.nu_weight.denom()))
            .collect();
        (denom, numers)
    }

    /// Exact integral of a value table against nu.
    pub fn integral(&self, values: &[Q]) -> Q {
        values
            .iter()
            .zip(&self.atoms)
            .map(|(v, a)| v * &a.nu_weight)
            .sum()
    }

    /// Exact L1(nu) norm of a value table.
    pub fn l1_norm(&self, values: &[Q]) -> Q {
        values
            .iter()
            .zip(&self.atoms)
            .map(|(v, a)| v.abs() * &a.nu_weight)
            .sum()
    }

    /// Exact L-infinity(nu) norm: the max over atoms of positive weight.
    pub fn linf_norm(&self, values: &[Q]) -> Q {
        values
            .iter()
            .zip(&self.atoms)
            .filter(|(_, a)| a.nu_weight > Q::zero())
            .map(|(v, _)| v.abs())
            .max()
            .unwrap_or_else(Q::zero)
    }
}

/// Norm exponent: a finite p >= 1, or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "norm exponent must satisfy p >= 1, got {p}"
            )));
        }
        Ok(Exponent::Finite(p))
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "oo" => Ok(Exponent::Infinity),
            other => {
                let p: f64 = other.parse().map_err(|_| {
                    Error::InvalidParameter(format!("unrecognized exponent {other:?}"))
                })?;
                Exponent::new(p)
            }
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

/// A computed norm; `exact` is present when the pathway is exact (p = 1 and
/// p = infinity on finite systems).
#[derive(Debug, Clone)]
pub struct NormValue {
    pub value: f64,
    pub exact: Option<Q>,
}

/// L^p(nu) norm of a value table over the finite support.
pub fn lp_norm_nu(support: &NuSupport, values: &[Q], p: Exponent) -> Result<NormValue> {
    match p {
        Exponent::Infinity => {
            let exact = support.linf_norm(values);
            Ok(NormValue {
                value: q_to_f64(&exact),
                exact: Some(exact),
            })
        }
        Exponent::Finite(p) => {
            if p < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "norm exponent must satisfy p >= 1, got {p}"
                )));
            }
            if p == 1.0 {
                let exact = support.l1_norm(values);
                return Ok(NormValue {
                    value: q_to_f64(&exact),
                    exact: Some(exact),
                });
            }
            let sum: f64 = values
                .iter()
                .zip(support.atoms())
                .map(|(v, a)| q_to_f64(v).abs().powf(p) * q_to_f64(&a.nu_weight))
                .sum();
            Ok(NormValue {
                value: sum.powf(1.0 / p),
                exact: None,
            })
        }
    }
}

/// L^p(mu) norm over the base space of a finite system.
pub fn lp_norm_mu(sys: &FiniteSystem, values: &[Q], p: Exponent) -> Result<NormValue> {
    let weights = sys.space().weights();
    match p {
        Exponent::Infinity => {
            let exact = values
                .iter()
                .zip(weights)
                .filter(|(_, w)| *w > &Q::zero())
                .map(|(v, _)| v.abs())
                .max()
                .unwrap_or_else(Q::zero);
            Ok(NormValue {
                value: q_to_f64(&exact),
                exact: Some(exact),
            })
        }
        Exponent::Finite(p) => {
            if p < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "norm exponent must satisfy p >= 1, got {p}"
                )));
            }
            if p == 1.0 {
                let exact: Q = values.iter().zip(weights).map(|(v, w)| v.abs() * w).sum();
                return Ok(NormValue {
                    value: q_to_f64(&exact),
                    exact: Some(exact),
                });
            }
            let sum: f64 = values
                .iter()
                .zip(weights)
                .map(|(v, w)| q_to_f64(v).abs().powf(p) * q_to_f64(w))
                .sum();
            Ok(NormValue {
                value: sum.powf(1.0 / p),
                exact: None,
            })
        }
    }
}

/// Report of the nonsingularity sandwich check
/// (1/3) nu(A) <= nu(Phi^{-1} A) <= 2 nu(A) over random subsets A.
#[derive(Debug, Clone)]
pub struct NonsingularityReport {
    pub trials: usize,
    pub violations: usize,
    /// First violating subset, if any (atom ids).
    pub witness: Option<Vec<usize>>,
    /// Extremal observed ratios nu(Phi^{-1}A) / nu(A) among A with nu(A) > 0.
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    /// Whether the re-weighting route agreed with the materialized preimage
    /// on every trial.
    pub pushforward_consistent: bool,
}

impl NonsingularityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.pushforward_consistent
    }
}

/// Draws `trials` random subsets of the support and checks the sandwich
/// exactly, along with the two-route preimage-mass consistency.
pub fn check_nonsingularity(
    sys: &FiniteSystem,
    support: &NuSupport,
    trials: usize,
    seed: u64,
) -> NonsingularityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (_denom, numers) = support.scaled_weights();
    let n = support.len();

    let mut report = NonsingularityReport {
        trials,
        violations: 0,
        witness: None,
        min_ratio: None,
        max_ratio: None,
        pushforward_consistent: true,
    };

    for _ in 0..trials {
        let subset: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();

        // Integer masses over the common denominator.
        let mass_a: BigInt = numers
            .iter()
            .zip(&subset)
            .filter(|(_, &b)| b)
            .map(|(w, _)| w)
            .sum();
        let mass_pre: BigInt = (0..n)
            .filter(|&id| subset[support.successor(id)])
            .map(|id| &numers[id])
            .sum();

        // Sandwich, scaled through by 3: nu(A) <= 3 nu(Phi^{-1}A) and
        // nu(Phi^{-1}A) <= 2 nu(A).
        let ok = mass_a <= BigInt::from(3) * &mass_pre && mass_pre <= BigInt::from(2) * &mass_a;
        if !ok {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some(
                    subset
                        .iter()
                        .enumerate()
                        .filter(|(_, &b)| b)
                        .map(|(i, _)| i)
                        .collect(),
                );
            }
        }

        if mass_a > BigInt::zero() {
            let ratio = mass_pre.to_f64().unwrap_or(f64::NAN) / mass_a.to_f64().unwrap_or(1.0);
            report.min_ratio = Some(report.min_ratio.map_or(ratio, |r: f64| r.min(ratio)));
            report.max_ratio = Some(report.max_ratio.map_or(ratio, |r: f64| r.max(ratio)));
        }

        let rew = support.preimage_measure_reweighted(sys, &subset);
        let mat = support.preimage_measure(&subset);
        if rew != mat {
            report.pushforward_consistent = false;
        }
    }

    report
}

/// One draw from nu on a finite system: shift n with the two-sided geometric
/// law, base atom x from mu, point = Phi^n (x, ..., x).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteNuSample {
    pub point: Vec<usize>,
    pub shift: i64,
    pub base: usize,
}

/// Same mixture on a circle system with uniform base point.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleNuSample {
    pub point: Vec<f64>,
    pub shift: i64,
    pub base: f64,
}

/// Inverse-CDF draw of the shift: P(n) = (1/3) 2^{-|n|}, enumerated in the
/// order 0, 1, -1, 2, -2, ...
fn sample_shift<R: Rng>(rng: &mut R) -> i64 {
    let u: f64 = rng.random();
    let mut acc = 1.0 / 3.0;
    if u < acc {
        return 0;
    }
    let mut k = 1i64;
    loop {
        let p = (1.0 / 3.0) * 0.5f64.powi(k as i32);
        acc += p;
        if u < acc {
            return k;
        }
        acc += p;
        if u < acc {
            return -k;
        }
        k += 1;
    }
}

fn cumulative_f64(weights: &[Q]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += q_to_f64(w);
            acc
        })
        .collect()
}

pub fn sample_nu_finite(sys: &FiniteSystem, seed: u64, count: usize) -> Vec<FiniteNuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cum = cumulative_f64(sys.space().weights());
    (0..count)
        .map(|_| {
            let shift = sample_shift(&mut rng);
            let u: f64 = rng.random();
            let base = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            let point = sys
                .apply_product(&sys.diagonal_point(base), shift)
                .expect("diagonal point is valid");
            FiniteNuSample { point, shift, base }
        })
        .collect()
}

pub fn sample_nu_circle(sys: &CircleSystem, seed: u64, count: usize) -> Vec<CircleNuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let shift = sample_shift(&mut rng);
            let base: f64 = rng.random();
            let point = sys
                .apply_product(&sys.diagonal_point(base), shift)
                .expect("diagonal point is valid");
            CircleNuSample { point, shift, base }
        })
        .collect()
}

/// Monte Carlo L^p(nu) estimate on a circle system.
#[derive(Debug, Clone)]
pub struct McNorm {
    pub estimate: f64,
    /// Standard error of the estimate (delta method through the 1/p root);
    /// absent for p = infinity.
    pub std_error: Option<f64>,
    /// For p = infinity the sample max only bounds the norm from below.
    pub lower_bound_only: bool,
    pub samples: usize,
}

pub fn mc_lp_norm_nu<F>(
    sys: &CircleSystem,
    eval: F,
    p: Exponent,
    samples: usize,
    seed: u64,
) -> Result<McNorm>
where
    F: Fn(&[f64]) -> f64,
{
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let draws = sample_nu_circle(sys, seed, samples);
    match p {
        Exponent::Infinity => {
            let max = draws
                .iter()
                .map(|s| eval(&s.point).abs())
                .fold(0.0f64, f64::max);
            Ok(McNorm {
                estimate: max,
                std_error: None,
                lower_bound_only: true,
                samples,
            })
        }
        Exponent::Finite(p) => {
            if p < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "norm exponent must satisfy p >= 1, got {p}"
                )));
            }
            let powered: Vec<f64> = draws
                .iter()
                .map(|s| eval(&s.point).abs().powf(p))
                .collect();
            let mean = powered.iter().sum::<f64>() / samples as f64;
            let var = powered
                .iter()
                .map(|x| (x - mean).powi(2))
                .sum::<f64>()
                / (samples.max(2) - 1) as f64;
            let se_mean = (var / samples as f64).sqrt();
            let estimate = mean.powf(1.0 / p);
            let std_error = if mean > 0.0 {
                se_mean * estimate / (p * mean)
            } else {
                se_mean
            };
            Ok(McNorm {
                estimate,
                std_error: Some(std_error),
                lower_bound_only: false,
                samples,
            })
        }
    }
}

/// A finite counterexample showing that null sets of the plain diagonal
/// measure need not pull back to null sets: a single off-diagonal image point
/// A = {Phi(x,..,x)} has mu_Delta(A) = 0 while mu_Delta(Phi^{-1}A) = mu({x}).
#[derive(Debug, Clone)]
pub struct MuDeltaCounterexample {
    pub target: Vec<usize>,
    pub preimage: Vec<usize>,
    pub preimage_mass: Q,
}

pub fn mu_delta_pullback_counterexample(sys: &FiniteSystem) -> Option<MuDeltaCounterexample> {
    for x in 0..sys.num_atoms() {
        if sys.space().weight(x) <= &Q::zero() {
            continue;
        }
        let diag = sys.diagonal_point(x);
        let image = sys.apply_product(&diag, 1).expect("diagonal point is valid");
        if image.iter().any(|&c| c != image[0]) {
            return Some(MuDeltaCounterexample {
                target: image,
                preimage: diag,
                preimage_mass: sys.space().weight(x).clone(),
            });
        }
    }
    None
}

/// A family of function sequences on the support with per-atom closed form
/// F_k(z) = limit(z) + osc(z) * (-1)^k + decay(z) / k, k >= 1.
///
/// The sequence at z converges iff osc(z) = 0, so divergence sets are exactly
/// computable, which is what the finite analog of the pullback lemma needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFamily {
    pub limit: Vec<Q>,
    pub osc: Vec<Q>,
    pub decay: Vec<Q>,
}

impl SequenceFamily {
    pub fn new(limit: Vec<Q>, osc: Vec<Q>, decay: Vec<Q>) -> Result<Self> {
        if limit.len() != osc.len() || osc.len() != decay.len() {
            return Err(Error::InvalidParameter(
                "sequence family tables must have equal length".into(),
            ));
        }
        Ok(Self { limit, osc, decay })
    }

    pub fn len(&self) -> usize {
        self.limit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.limit.is_empty()
    }

    /// Value of the k-th function at a support atom, k >= 1.
    pub fn eval(&self, atom: usize, k: u64) -> Q {
        let sign = if k.is_multiple_of(2) { 1 } else { -1 };
        &self.limit[atom]
            + &self.osc[atom] * Q::from_integer(BigInt::from(sign))
            + &self.decay[atom] / Q::from_integer(BigInt::from(k))
    }

    /// Atoms where the sequence diverges.
    pub fn divergence_set(&self) -> Vec<bool> {
        self.osc.iter().map(|b| !b.is_zero()).collect()
    }

    /// The family G_k = F_k ∘ Phi, realized by pulling every atom's
    /// parameters back through the successor permutation.
    pub fn compose_with_phi(&self, support: &NuSupport) -> SequenceFamily {
        let pull = |table: &Vec<Q>| -> Vec<Q> {
            (0..table.len())
                .map(|id| table[support.successor(id)].clone())
                .collect()
        };
        SequenceFamily {
            limit: pull(&self.limit),
            osc: pull(&self.osc),
            decay: pull(&self.decay),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, q_int, q_one, q_pow2, q_zero};
    use crate::systems::{FiniteMap, FiniteSpace, FiniteSystem};

    fn z4_system() -> FiniteSystem {
        FiniteSystem::cyclic(4, &[1, 2]).unwrap()
    }

    /// Truncated-series oracle for a single progression: sum of 2^{-|n|}
    /// over n ≡ r (mod p), |n| <= bound.
    fn truncated_class_series(modulus: usize, residue: usize, bound: i64) -> Q {
        let mut total = q_zero();
        for n in -bound..=bound {
            if n.rem_euclid(modulus as i64) == residue as i64 {
                total += q_pow2(-n.abs());
            }
        }
        total
    }

    #[test]
    fn shift_weight_values() {
        assert_eq!(shift_weight(0), q(1, 3));
        assert_eq!(shift_weight(1), q(1, 6));
        assert_eq!(shift_weight(-1), q(1, 6));
        assert_eq!(shift_weight(3), q(1, 24));
    }

    #[test]
    fn shift_weight_sums_to_one() {
        let partial: Q = (-50i64..=50).map(shift_weight).sum();
        let defect = q_one() - partial;
        assert!(defect > q_zero());
        assert!(defect <= q_pow2(-48));
    }

    #[test]
    fn class_series_closed_form_matches_truncation() {
        for modulus in 1..=7usize {
            for residue in 0..modulus {
                let closed = shift_class_series(modulus, residue);
                let truncated = truncated_class_series(modulus, residue, 60);
                let diff = (&closed - &truncated).abs();
                assert!(diff <= q_pow2(-58), "p={modulus} r={residue}");
            }
        }
    }

    #[test]
    fn z4_support_shape_and_weights() {
        let sys = z4_system();
        let support = build_nu_support(&sys);
        assert_eq!(support.len(), 16);
        assert_eq!(support.orbits().len(), 4);
        assert!(support.orbits().iter().all(|o| o.period == 4));
        assert_eq!(support.total_mass(), q_one());

        let id = support.index_of(&[0, 0]).unwrap();
        assert_eq!(support.atom(id).nu_weight, q(17, 180));

        // Truncated oracle for the same atom: (1/12) sum over n ≡ 0 (mod 4).
        let oracle = q(1, 12) * truncated_class_series(4, 0, 60);
        let diff = (&support.atom(id).nu_weight - &oracle).abs();
        assert!(diff <= q_pow2(-55));
    }

    #[test]
    fn one_atom_identity_support() {
        let space = FiniteSpace::uniform(1).unwrap();
        let sys = FiniteSystem::new(space, vec![FiniteMap::identity(1).unwrap()]).unwrap();
        let support = build_nu_support(&sys);
        assert_eq!(support.len(), 1);
        assert_eq!(support.atom(0).nu_weight, q_one());
    }

    #[test]
    fn preimage_two_routes_agree() {
        let sys = z4_system();
        let support = build_nu_support(&sys);
        // A = {(0,0)}: preimage is {(3,2)} with weight (1/12) g_4(3) = 1/18.
        let id = support.index_of(&[0, 0]).unwrap();
        let mut subset = vec![false; support.len()];
        subset[id] = true;
        let mat = support.preimage_measure(&subset);
        let rew = support.preimage_measure_reweighted(&sys, &subset);
        assert_eq!(mat, q(1, 18));
        assert_eq!(rew, q(1, 18));
        let pre_id = support.predecessor(id);
        assert_eq!(support.atom(pre_id).point, vec![3, 2]);
    }

    #[test]
    fn nonsingularity_sandwich_holds() {
        let sys = z4_system();
        let support = build_nu_support(&sys);
        let report = check_nonsingularity(&sys, &support, 100, 7);
        assert!(report.passed(), "{report:?}");
        assert!(report.min_ratio.unwrap() >= 1.0 / 3.0 - 1e-9);
        assert!(report.max_ratio.unwrap() <= 2.0 + 1e-9);

        // Degenerate subsets.
        let all = vec![true; support.len()];
        assert_eq!(support.nu_measure(&all), q_one());
        assert_eq!(support.preimage_measure(&all), q_one());
        let none = vec![false; support.len()];
        assert_eq!(support.nu_measure(&none), q_zero());
        assert_eq!(support.preimage_measure(&none), q_zero());
    }

    #[test]
    fn lp_norms_on_z4() {
        let sys = z4_system();
        let support = build_nu_support(&sys);
        let id = support.index_of(&[0, 0]).unwrap();

        let mut indicator = vec![q_zero(); support.len()];
        indicator[id] = q_one();
        let l1 = lp_norm_nu(&support, &indicator, Exponent::Finite(1.0)).unwrap();
        assert_eq!(l1.exact.unwrap(), q(17, 180));

        let constant = vec![q_int(-5); support.len()];
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinity] {
            let n = lp_norm_nu(&support, &constant, p).unwrap();
            assert!((n.value - 5.0).abs() < 1e-12, "p={p:?} -> {}", n.value);
        }

        let zero = vec![q_zero(); support.len()];
        let n = lp_norm_nu(&support, &zero, Exponent::Infinity).unwrap();
        assert_eq!(n.exact.unwrap(), q_zero());

        assert!(lp_norm_nu(&support, &zero, Exponent::Finite(0.5)).is_err());
    }

    #[test]
    fn sampler_matches_mixture_law() {
        let samples = sample_nu_finite(&z4_system(), 42, 1_000_000);
        let freq0 = samples.iter().filter(|s| s.shift == 0).count() as f64 / 1e6;
        let sigma = (1.0_f64 / 3.0 * 2.0 / 3.0 / 1e6).sqrt();
        assert!((freq0 - 1.0 / 3.0).abs() <= 3.0 * sigma, "freq0={freq0}");
    }

    #[test]
    fn sampler_mean_matches_exact_integral() {
        let sys = z4_system();
        let support = build_nu_support(&sys);
        // G = indicator of {(0,0)}; exact integral is its nu weight.
        let exact = q_to_f64(&support.atom(support.index_of(&[0, 0]).unwrap()).nu_weight);
        let count = 200_000;
        let samples = sample_nu_finite(&sys, 9, count);
        let hits = samples.iter().filter(|s| s.point == vec![0, 0]).count();
        let mean = hits as f64 / count as f64;
        let sigma = (exact * (1.0 - exact) / count as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * sigma, "mean={mean} exact={exact}");
    }

    #[test]
    fn sampler_is_deterministic() {
        let sys = z4_system();
        assert_eq!(sample_nu_finite(&sys, 5, 100), sample_nu_finite(&sys, 5, 100));
        let circle = CircleSystem::new(&[0.3]).unwrap();
        assert_eq!(
            sample_nu_circle(&circle, 5, 100),
            sample_nu_circle(&circle, 5, 100)
        );
    }

    #[test]
    fn mu_delta_counterexample_exists_off_diagonal() {
        let sys = z4_system();
        let ce = mu_delta_pullback_counterexample(&sys).unwrap();
        assert_eq!(ce.target, vec![1, 2]);
        assert_eq!(ce.preimage, vec![0, 0]);
        assert_eq!(ce.preimage_mass, q(1, 4));

        // With all maps equal the product map preserves the diagonal and no
        // counterexample of this shape exists.
        let same = FiniteSystem::cyclic(4, &[1, 1]).unwrap();
        assert!(mu_delta_pullback_counterexample(&same).is_none());
    }

    #[test]
    fn sequence_divergence_pulls_back() {
        let sys = z4_system();
        let support = build_nu_support(&sys);
        let n = support.len();
        let mut osc = vec![q_zero(); n];
        // Diverge exactly on one atom.
        let id = support.index_of(&[1, 2]).unwrap();
        osc[id] = q_one();
        let family =
            SequenceFamily::new(vec![q_one(); n], osc, vec![q(1, 2); n]).unwrap();
        let composed = family.compose_with_phi(&support);

        let d_f = family.divergence_set();
        let d_g = composed.divergence_set();
        let pulled: Vec<bool> = (0..n).map(|z| d_f[support.successor(z)]).collect();
        assert_eq!(d_g, pulled);

        // The symbolic composition matches pointwise evaluation.
        for k in 1..=6u64 {
            for z in 0..n {
                assert_eq!(composed.eval(z, k), family.eval(support.successor(z), k));
            }
        }
    }
}
