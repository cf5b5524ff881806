//! Probability measure-preserving systems and the product map.
//!
//! Two concrete flavors are supported: finite-atomic spaces carrying exact
//! rational weights, and circles `R/Z` with Lebesgue measure rotated by a
//! fixed angle per coordinate. Every map is stored together with its inverse
//! so negative powers of the product map cost the same as positive ones.

use crate::error::{Error, Result};
use crate::scalar::{q_close, q_one, wrap_unit, Q};
use num_traits::Zero;

/// Tolerance for float-derived weight validation.
pub const FLOAT_WEIGHT_TOL: f64 = 1e-12;

/// A finite atomic probability space.
///
/// Atoms are indexed `0..m`; labels are opaque and only used for display.
#[derive(Debug, Clone)]
pub struct FiniteSpace {
    weights: Vec<Q>,
    labels: Vec<String>,
    /// True when the weights were given as exact rationals (so the total is
    /// required to be exactly 1); false when they came from floats.
    exact: bool,
}

impl FiniteSpace {
    /// Space with exact rational weights. The weights must sum to exactly 1.
    pub fn new(weights: Vec<Q>) -> Result<Self> {
        Self::with_labels(weights, None, true)
    }

    /// Space whose weights were converted from floats; the total only has to
    /// be within [`FLOAT_WEIGHT_TOL`] of 1.
    pub fn from_float_weights(weights: Vec<Q>) -> Result<Self> {
        Self::with_labels(weights, None, false)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSpace("space needs at least one atom".into()));
        }
        let w = Q::new(1.into(), (m as i64).into());
        Self::new(vec![w; m])
    }

    fn with_labels(weights: Vec<Q>, labels: Option<Vec<String>>, exact: bool) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("space needs at least one atom".into()));
        }
        if weights.iter().any(|w| w < &Q::zero()) {
            return Err(Error::InvalidSpace("negative atom weight".into()));
        }
        let total: Q = weights.iter().sum();
        let ok = if exact {
            total == q_one()
        } else {
            q_close(&total, &q_one(), FLOAT_WEIGHT_TOL)
        };
        if !ok {
            return Err(Error::InvalidSpace(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let labels =
            labels.unwrap_or_else(|| (0..weights.len()).map(|i| i.to_string()).collect());
        if labels.len() != weights.len() {
            return Err(Error::InvalidSpace("label/weight length mismatch".into()));
        }
        let mut seen = labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != labels.len() {
            return Err(Error::InvalidSpace("atom labels must be unique".into()));
        }
        Ok(Self {
            weights,
            labels,
            exact,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, atom: usize) -> &Q {
        &self.weights[atom]
    }

    pub fn weights(&self) -> &[Q] {
        &self.weights
    }

    pub fn label(&self, atom: usize) -> &str {
        &self.labels[atom]
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn total_mass(&self) -> Q {
        self.weights.iter().sum()
    }
}

/// An invertible map of a finite space, stored as a permutation pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMap {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl FiniteMap {
    /// Builds from the forward permutation; the inverse is derived.
    pub fn new(forward: Vec<usize>) -> Result<Self> {
        let m = forward.len();
        let mut inverse = vec![usize::MAX; m];
        for (i, &j) in forward.iter().enumerate() {
            if j >= m {
                return Err(Error::InvalidMap(format!("image {j} out of range 0..{m}")));
            }
            if inverse[j] != usize::MAX {
                return Err(Error::InvalidMap(format!("{j} hit twice, not a permutation")));
            }
            inverse[j] = i;
        }
        Ok(Self { forward, inverse })
    }

    /// Builds from an explicit (forward, inverse) pair, verifying
    /// `inverse ∘ forward = id` by full scan.
    pub fn from_parts(forward: Vec<usize>, inverse: Vec<usize>) -> Result<Self> {
        let built = Self::new(forward)?;
        if built.inverse != inverse {
            return Err(Error::InvalidMap("inverse does not undo forward".into()));
        }
        Ok(built)
    }

    /// Cyclic shift `i -> i + s mod m`.
    pub fn cyclic_shift(m: usize, s: i64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidMap("empty domain".into()));
        }
        let s = s.rem_euclid(m as i64) as usize;
        Self::new((0..m).map(|i| (i + s) % m).collect())
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::new((0..m).collect())
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn apply(&self, atom: usize) -> usize {
        self.forward[atom]
    }

    pub fn apply_inverse(&self, atom: usize) -> usize {
        self.inverse[atom]
    }

    /// Signed power applied to one atom.
    pub fn apply_pow(&self, atom: usize, n: i64) -> usize {
        let m = self.forward.len() as i64;
        // The permutation's cycle through `atom` has length <= m, so the
        // exponent can be reduced modulo the cycle length lazily by just
        // iterating at most |n mod m|-ish steps; find the cycle length first
        // to keep large |n| cheap.
        let mut len = 1usize;
        let mut cur = self.forward[atom];
        while cur != atom {
            cur = self.forward[cur];
            len += 1;
        }
        let steps = n.rem_euclid(len as i64).min(m) as usize;
        let mut cur = atom;
        for _ in 0..steps {
            cur = self.forward[cur];
        }
        cur
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }
}

/// Rotation of the circle R/Z by a fixed angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleRotation {
    alpha: f64,
}

impl CircleRotation {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidMap("rotation angle must be finite".into()));
        }
        Ok(Self {
            alpha: wrap_unit(alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&self, x: f64) -> f64 {
        wrap_unit(x + self.alpha)
    }

    pub fn apply_inverse(&self, x: f64) -> f64 {
        wrap_unit(x - self.alpha)
    }

    /// x + n*alpha mod 1, computed in one rounding step.
    pub fn apply_pow(&self, x: f64, n: i64) -> f64 {
        wrap_unit(x + n as f64 * self.alpha)
    }
}

/// A finite-atomic system (X, mu, T_1..T_H).
#[derive(Debug, Clone)]
pub struct FiniteSystem {
    space: FiniteSpace,
    maps: Vec<FiniteMap>,
}

/// A circle system ([0,1), Lebesgue, rotations alpha_1..alpha_H).
#[derive(Debug, Clone)]
pub struct CircleSystem {
    maps: Vec<CircleRotation>,
}

/// Either flavor, as configured by the CLI.
#[derive(Debug, Clone)]
pub enum System {
    Finite(FiniteSystem),
    Circle(CircleSystem),
}

impl System {
    pub fn num_maps(&self) -> usize {
        match self {
            System::Finite(s) => s.num_maps(),
            System::Circle(s) => s.num_maps(),
        }
    }
}

/// Result of materializing an orbit of the product map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteOrbit {
    /// Number of steps until the first return to the starting point.
    pub period: usize,
    /// The cycle z, Phi z, ..., Phi^{period-1} z.
    pub cycle: Vec<Vec<usize>>,
}

impl FiniteSystem {
    /// All maps must act on `space` and preserve its weights exactly.
    pub fn new(space: FiniteSpace, maps: Vec<FiniteMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidMap("need at least one map".into()));
        }
        let m = space.len();
        for (i, map) in maps.iter().enumerate() {
            if map.len() != m {
                return Err(Error::InvalidMap(format!(
                    "map {i} acts on {} atoms, space has {m}",
                    map.len()
                )));
            }
            for atom in 0..m {
                if space.weight(map.apply(atom)) != space.weight(atom) {
                    return Err(Error::InvalidMap(format!(
                        "map {i} does not preserve the weight of atom {atom}"
                    )));
                }
            }
        }
        Ok(Self { space, maps })
    }

    /// Z_m with H cyclic shifts, uniform measure.
    pub fn cyclic(m: usize, shifts: &[i64]) -> Result<Self> {
        let space = FiniteSpace::uniform(m)?;
        let maps = shifts
            .iter()
            .map(|&s| FiniteMap::cyclic_shift(m, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, maps)
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn maps(&self) -> &[FiniteMap] {
        &self.maps
    }

    pub fn num_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.space.len()
    }

    fn check_point(&self, z: &[usize]) -> Result<()> {
        if z.len() != self.maps.len() {
            return Err(Error::InvalidPoint(format!(
                "point has {} coordinates, system has {} maps",
                z.len(),
                self.maps.len()
            )));
        }
        let m = self.space.len();
        if let Some(&bad) = z.iter().find(|&&c| c >= m) {
            return Err(Error::InvalidPoint(format!(
                "coordinate {bad} outside space of {m} atoms"
            )));
        }
        Ok(())
    }

    /// (T_1^n x_1, ..., T_H^n x_H).
    pub fn apply_product(&self, z: &[usize], n: i64) -> Result<Vec<usize>> {
        self.check_point(z)?;
        Ok(z.iter()
            .zip(&self.maps)
            .map(|(&x, map)| map.apply_pow(x, n))
            .collect())
    }

    /// One forward step of the product map; `z` must be valid.
    pub(crate) fn step(&self, z: &[usize]) -> Vec<usize> {
        z.iter()
            .zip(&self.maps)
            .map(|(&x, map)| map.apply(x))
            .collect()
    }

    /// Iterates the product map until first return to `z`.
    ///
    /// Always terminates with period at most m^H.
    pub fn orbit_of(&self, z: &[usize]) -> Result<FiniteOrbit> {
        self.check_point(z)?;
        let mut cycle = vec![z.to_vec()];
        let mut cur = self.step(z);
        while cur != z {
            cycle.push(cur.clone());
            cur = self.step(&cur);
        }
        Ok(FiniteOrbit {
            period: cycle.len(),
            cycle,
        })
    }

    /// The diagonal point (x, x, ..., x).
    pub fn diagonal_point(&self, atom: usize) -> Vec<usize> {
        vec![atom; self.maps.len()]
    }
}

impl CircleSystem {
    pub fn new(alphas: &[f64]) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidMap("need at least one rotation".into()));
        }
        let maps = alphas
            .iter()
            .map(|&a| CircleRotation::new(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[CircleRotation] {
        &self.maps
    }

    pub fn num_maps(&self) -> usize {
        self.maps.len()
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.maps.len() {
            return Err(Error::InvalidPoint(format!(
                "point has {} coordinates, system has {} maps",
                z.len(),
                self.maps.len()
            )));
        }
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn apply_product(&self, z: &[f64], n: i64) -> Result<Vec<f64>> {
        self.check_point(z)?;
        Ok(z.iter()
            .zip(&self.maps)
            .map(|(&x, map)| map.apply_pow(x, n))
            .collect())
    }

    /// The window Phi^{-horizon} z, ..., z, ..., Phi^{horizon} z.
    ///
    /// Rotation orbits never close up for irrational angles, so no period is
    /// reported; the caller gets exactly 2*horizon + 1 points.
    pub fn orbit_window(&self, z: &[f64], horizon: i64) -> Result<Vec<Vec<f64>>> {
        if horizon <= 0 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        self.check_point(z)?;
        (-horizon..=horizon)
            .map(|n| self.apply_product(z, n))
            .collect()
    }

    pub fn diagonal_point(&self, x: f64) -> Vec<f64> {
        vec![wrap_unit(x); self.maps.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;
    use proptest::prelude::*;

    fn z4_system() -> FiniteSystem {
        FiniteSystem::cyclic(4, &[1, 2]).unwrap()
    }

    #[test]
    fn apply_product_z4() {
        let sys = z4_system();
        assert_eq!(sys.apply_product(&[0, 0], 1).unwrap(), vec![1, 2]);
        assert_eq!(sys.apply_product(&[0, 0], 0).unwrap(), vec![0, 0]);
        assert_eq!(sys.apply_product(&[1, 2], -1).unwrap(), vec![0, 0]);
    }

    #[test]
    fn apply_product_rejects_bad_point() {
        let sys = z4_system();
        assert!(matches!(
            sys.apply_product(&[0, 9], 1),
            Err(Error::InvalidPoint(_))
        ));
        assert!(matches!(
            sys.apply_product(&[0], 1),
            Err(Error::InvalidPoint(_))
        ));
    }

    #[test]
    fn orbit_z4() {
        let sys = z4_system();
        let orbit = sys.orbit_of(&[0, 0]).unwrap();
        assert_eq!(orbit.period, 4);
        assert_eq!(
            orbit.cycle,
            vec![vec![0, 0], vec![1, 2], vec![2, 0], vec![3, 2]]
        );
    }

    #[test]
    fn orbit_one_atom() {
        let space = FiniteSpace::uniform(1).unwrap();
        let maps = vec![FiniteMap::identity(1).unwrap(), FiniteMap::identity(1).unwrap()];
        let sys = FiniteSystem::new(space, maps).unwrap();
        let orbit = sys.orbit_of(&[0, 0]).unwrap();
        assert_eq!(orbit.period, 1);
    }

    #[test]
    fn orbit_period_bounded_by_mh() {
        let sys = FiniteSystem::cyclic(6, &[1, 2, 3]).unwrap();
        for atom in 0..6 {
            let orbit = sys.orbit_of(&sys.diagonal_point(atom)).unwrap();
            assert!(orbit.period <= 6usize.pow(3));
        }
    }

    #[test]
    fn map_requires_measure_preservation() {
        let space = FiniteSpace::new(vec![q(1, 2), q(1, 4), q(1, 4)]).unwrap();
        // Swapping atoms 0 and 1 moves mass 1/2 onto a 1/4 atom.
        let bad = FiniteMap::new(vec![1, 0, 2]).unwrap();
        assert!(FiniteSystem::new(space.clone(), vec![bad]).is_err());
        let good = FiniteMap::new(vec![0, 2, 1]).unwrap();
        assert!(FiniteSystem::new(space, vec![good]).is_ok());
    }

    #[test]
    fn inverse_checked_by_full_scan() {
        let fwd = vec![1, 2, 0];
        assert!(FiniteMap::from_parts(fwd.clone(), vec![2, 0, 1]).is_ok());
        assert!(FiniteMap::from_parts(fwd, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn exact_weights_must_sum_to_one() {
        assert!(FiniteSpace::new(vec![q(1, 2), q(1, 3)]).is_err());
        assert!(FiniteSpace::new(vec![q(1, 2), q(1, 2)]).is_ok());
    }

    #[test]
    fn circle_window_golden() {
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let sys = CircleSystem::new(&[alpha]).unwrap();
        let window = sys.orbit_window(&[0.0], 3).unwrap();
        assert_eq!(window.len(), 7);
        for (i, point) in window.iter().enumerate() {
            let n = i as i64 - 3;
            let expect = wrap_unit(n as f64 * alpha);
            assert!((point[0] - expect).abs() < 1e-12);
        }
        assert!(matches!(
            sys.orbit_window(&[0.0], 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    proptest! {
        // Group action law: Phi^{n+m} z = Phi^n (Phi^m z), and n = 0 is the
        // identity, exhaustively on a small random system.
        #[test]
        fn product_map_is_a_group_action(
            m in 1usize..6,
            seed_perm in proptest::collection::vec(0usize..720, 3),
            n in -20i64..20,
            k in -20i64..20,
        ) {
            let maps = seed_perm
                .iter()
                .map(|&s| {
                    // Build a permutation from a ranking of rotated indices.
                    let mut idx: Vec<usize> = (0..m).collect();
                    idx.rotate_left(s % m.max(1));
                    FiniteMap::new(idx).unwrap()
                })
                .collect::<Vec<_>>();
            let sys = FiniteSystem::new(FiniteSpace::uniform(m).unwrap(), maps).unwrap();
            for atom in 0..m {
                let z = sys.diagonal_point(atom);
                prop_assert_eq!(sys.apply_product(&z, 0).unwrap(), z.clone());
                let two_step = sys
                    .apply_product(&sys.apply_product(&z, k).unwrap(), n)
                    .unwrap();
                let one_step = sys.apply_product(&z, n + k).unwrap();
                prop_assert_eq!(two_step, one_step);
            }
        }

        // For fixed n the product map is a bijection on the full point set.
        #[test]
        fn product_map_is_bijective(n in -12i64..12) {
            let sys = FiniteSystem::cyclic(4, &[1, 3]).unwrap();
            let mut images = std::collections::HashSet::new();
            for a in 0..4 {
                for b in 0..4 {
                    images.insert(sys.apply_product(&[a, b], n).unwrap());
                }
            }
            prop_assert_eq!(images.len(), 16);
        }
    }
}
