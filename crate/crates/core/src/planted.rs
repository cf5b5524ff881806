//! Seeded fixture generators: random measure-preserving finite systems,
//! observables with a planted transfer function, and the rotation fixture
//! with a planted cosine.

use crate::error::{Error, Result};
use crate::measures::{build_nu_support, NuSupport};
use crate::observables::{CircleFn, CircleObservable, FiniteObservable, SupportFunction, TensorObservable};
use crate::scalar::Q;
use crate::systems::{CircleSystem, FiniteMap, FiniteSpace, FiniteSystem};
use num_bigint::BigInt;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Shape of a random finite system draw.
#[derive(Debug, Clone)]
pub struct RandomSystemParams {
    pub atoms: usize,
    pub maps: usize,
    /// Reserve some atoms for a group of mu weight zero.
    pub zero_weight_group: bool,
    /// Redraw until the lcm of the support orbit periods is at most this.
    pub lcm_cap: Option<u64>,
}

impl RandomSystemParams {
    pub fn new(atoms: usize, maps: usize) -> Self {
        Self {
            atoms,
            maps,
            zero_weight_group: false,
            lcm_cap: None,
        }
    }
}

/// Draws a random finite system whose maps preserve mu by construction: the
/// atoms are partitioned into constant-weight groups and every map permutes
/// each group within itself.
pub fn random_system(params: &RandomSystemParams, seed: u64) -> Result<FiniteSystem> {
    if params.atoms == 0 || params.maps == 0 {
        return Err(Error::InvalidParameter(
            "need at least one atom and one map".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap_attempts = if params.lcm_cap.is_some() { 64 } else { 1 };
    let mut last = None;
    for _ in 0..cap_attempts {
        let sys = draw_system(params, &mut rng)?;
        match params.lcm_cap {
            Some(cap) => {
                let lcm = build_nu_support(&sys).period_lcm();
                if lcm <= cap {
                    return Ok(sys);
                }
                last = Some(sys);
            }
            None => return Ok(sys),
        }
    }
    // Cap kept failing: fall back to single-cycle shifts, whose orbit
    // periods all divide the atom count.
    let _ = last;
    let shifts: Vec<i64> = (0..params.maps)
        .map(|_| rng.random_range(0..params.atoms as i64))
        .collect();
    FiniteSystem::cyclic(params.atoms, &shifts)
}

fn draw_system(params: &RandomSystemParams, rng: &mut ChaCha8Rng) -> Result<FiniteSystem> {
    let m = params.atoms;

    // Partition atoms into weight groups.
    let positive_groups = rng.random_range(1..=3.min(m));
    let zero_group = params.zero_weight_group && m > positive_groups;
    let mut group_of = vec![0usize; m];
    let total_groups = positive_groups + usize::from(zero_group);
    // Every group gets one atom up front so none is empty.
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    for (g, &atom) in order.iter().take(total_groups).enumerate() {
        group_of[atom] = g;
    }
    for &atom in order.iter().skip(total_groups) {
        group_of[atom] = rng.random_range(0..total_groups);
    }

    // Rational weights constant on groups; the optional last group gets 0.
    let coeffs: Vec<u64> = (0..positive_groups)
        .map(|_| rng.random_range(1..=6))
        .collect();
    let mut scale: u64 = 0;
    for atom in 0..m {
        if group_of[atom] < positive_groups {
            scale += coeffs[group_of[atom]];
        }
    }
    let weights: Vec<Q> = (0..m)
        .map(|atom| {
            if group_of[atom] < positive_groups {
                Q::new(BigInt::from(coeffs[group_of[atom]]), BigInt::from(scale))
            } else {
                Q::new(BigInt::from(0), BigInt::from(1))
            }
        })
        .collect();
    let space = FiniteSpace::new(weights)?;

    // Each map permutes each group within itself.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); total_groups];
    for atom in 0..m {
        groups[group_of[atom]].push(atom);
    }
    let maps: Vec<FiniteMap> = (0..params.maps)
        .map(|_| {
            let mut forward = vec![0usize; m];
            for members in &groups {
                let mut image = members.clone();
                image.shuffle(rng);
                for (&src, &dst) in members.iter().zip(&image) {
                    forward[src] = dst;
                }
            }
            FiniteMap::new(forward)
        })
        .collect::<Result<_>>()?;

    FiniteSystem::new(space, maps)
}

/// A finite fixture with a known transfer function: F := V - V∘Phi for a
/// random rational V on the support.
#[derive(Debug, Clone)]
pub struct FinitePlanted {
    pub system: FiniteSystem,
    pub support: NuSupport,
    pub observable: FiniteObservable,
    /// The planted V, indexed by support atom.
    pub v_true: Vec<Q>,
}

fn plant_on_support(
    system: FiniteSystem,
    support: NuSupport,
    rng: &mut ChaCha8Rng,
) -> FinitePlanted {
    let v_true: Vec<Q> = (0..support.len())
        .map(|_| {
            Q::new(
                BigInt::from(rng.random_range(-8i64..=8)),
                BigInt::from(rng.random_range(1i64..=4)),
            )
        })
        .collect();
    let f_values: Vec<Q> = (0..support.len())
        .map(|z| &v_true[z] - &v_true[support.successor(z)])
        .collect();

    let observable = if system.num_maps() == 1 {
        // One factor: the support points are singletons, so F is a table on
        // the base atoms, padded with zero off the support.
        let mut table = vec![Q::new(BigInt::from(0), BigInt::from(1)); system.num_atoms()];
        for (id, atom) in support.atoms().iter().enumerate() {
            table[atom.point[0]] = f_values[id].clone();
        }
        FiniteObservable::Tensor(TensorObservable::new(vec![table]).expect("nonempty factor"))
    } else {
        FiniteObservable::General(SupportFunction::from_pairs(
            support
                .atoms()
                .iter()
                .zip(&f_values)
                .map(|(a, v)| (a.point.clone(), v.clone())),
        ))
    };

    FinitePlanted {
        system,
        support,
        observable,
        v_true,
    }
}

/// Random system plus planted transfer function.
pub fn make_planted_finite(params: &RandomSystemParams, seed: u64) -> Result<FinitePlanted> {
    let system = random_system(params, seed)?;
    let support = build_nu_support(&system);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    Ok(plant_on_support(system, support, &mut rng))
}

/// Cyclic-shift system plus planted transfer function.
pub fn make_planted_cyclic(atoms: usize, shifts: &[i64], seed: u64) -> Result<FinitePlanted> {
    let system = FiniteSystem::cyclic(atoms, shifts)?;
    let support = build_nu_support(&system);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(plant_on_support(system, support, &mut rng))
}

/// A rotation fixture with the cosine planted as transfer function:
/// F(x) = cos 2πx - cos 2π(x + alpha).
#[derive(Debug, Clone)]
pub struct CirclePlanted {
    pub system: CircleSystem,
    pub observable: CircleObservable,
    /// The planted V.
    pub v_true: CircleFn,
    pub alpha: f64,
}

pub fn make_planted_rotation(alpha: f64) -> Result<CirclePlanted> {
    let system = CircleSystem::new(&[alpha])?;
    let observable = CircleObservable::new(vec![CircleFn::CosCoboundary { alpha }])?;
    Ok(CirclePlanted {
        system,
        observable,
        v_true: CircleFn::Cos,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coboundary::{observable_table, solve_orbit};
    use crate::scalar::q_zero;
    use num_traits::Zero;

    #[test]
    fn random_systems_are_deterministic_per_seed() {
        let params = RandomSystemParams::new(6, 2);
        let a = random_system(&params, 11).unwrap();
        let b = random_system(&params, 11).unwrap();
        assert_eq!(a.space().weights(), b.space().weights());
        for (ma, mb) in a.maps().iter().zip(b.maps()) {
            assert_eq!(ma.forward(), mb.forward());
        }
        let c = random_system(&params, 12).unwrap();
        let same = a.space().weights() == c.space().weights()
            && a.maps()
                .iter()
                .zip(c.maps())
                .all(|(x, y)| x.forward() == y.forward());
        assert!(!same, "different seeds should give different draws");
    }

    #[test]
    fn random_systems_preserve_mass() {
        for seed in 0..20 {
            let params = RandomSystemParams::new(7, 3);
            let sys = random_system(&params, seed).unwrap();
            assert_eq!(sys.space().total_mass(), Q::new(1.into(), 1.into()));
            let support = build_nu_support(&sys);
            assert_eq!(support.total_mass(), Q::new(1.into(), 1.into()));
        }
    }

    #[test]
    fn lcm_cap_is_respected() {
        for seed in 0..10 {
            let params = RandomSystemParams {
                atoms: 8,
                maps: 3,
                zero_weight_group: false,
                lcm_cap: Some(128),
            };
            let sys = random_system(&params, seed).unwrap();
            assert!(build_nu_support(&sys).period_lcm() <= 128);
        }
    }

    #[test]
    fn zero_weight_group_shows_up_in_support() {
        let params = RandomSystemParams {
            atoms: 8,
            maps: 2,
            zero_weight_group: true,
            lcm_cap: None,
        };
        let sys = random_system(&params, 3).unwrap();
        assert!(sys.space().weights().iter().any(|w| w.is_zero()));
        let support = build_nu_support(&sys);
        assert!(support.atoms().iter().any(|a| a.nu_weight.is_zero()));
        assert_eq!(support.total_mass(), Q::new(1.into(), 1.into()));
    }

    #[test]
    fn planted_observable_solves_back_to_v() {
        let fx = make_planted_finite(&RandomSystemParams::new(6, 2), 21).unwrap();
        let f = observable_table(&fx.support, &fx.observable);
        let cert = solve_orbit(&fx.support, &f);
        let sol = cert.solution().expect("planted F must be a coboundary");
        assert_eq!(sol.residual_sup, q_zero());
        for orbit in fx.support.orbits() {
            let first = orbit.atoms[0];
            let offset = &fx.v_true[first] - &sol.v[first];
            for &id in &orbit.atoms {
                assert_eq!(&fx.v_true[id] - &sol.v[id], offset);
            }
        }
    }

    #[test]
    fn single_factor_fixture_is_tensor_form() {
        let fx = make_planted_finite(&RandomSystemParams::new(5, 1), 4).unwrap();
        assert!(fx.observable.is_tensor());
        let fx2 = make_planted_finite(&RandomSystemParams::new(5, 2), 4).unwrap();
        assert!(!fx2.observable.is_tensor());
    }

    #[test]
    fn cyclic_fixture_matches_direct_construction() {
        let fx = make_planted_cyclic(4, &[1, 2], 9).unwrap();
        assert_eq!(fx.support.len(), 16);
        let f = observable_table(&fx.support, &fx.observable);
        assert!(solve_orbit(&fx.support, &f).is_coboundary());
    }

    #[test]
    fn rotation_fixture_telescopes() {
        use std::f64::consts::TAU;
        let fx = make_planted_rotation((5.0f64.sqrt() - 1.0) / 2.0).unwrap();
        let x = 0.41f64;
        // F = V - V∘Phi with V = cos 2π(.).
        let f = fx.observable.eval(&[x]);
        let v_here = (TAU * x).cos();
        let v_next = (TAU * (x + fx.alpha)).cos();
        assert!((f - (v_here - v_next)).abs() < 1e-12);
    }
}
