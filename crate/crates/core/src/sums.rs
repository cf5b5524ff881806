//! Nonconventional ergodic sums S_N(z) = sum_{n=1}^{N} F(Phi^n z) along the
//! product map, their norm growth, and the shifted-window sums over the base
//! space that characterize bounded behavior.

use crate::error::{Error, Result};
use crate::measures::{lp_norm_mu, lp_norm_nu, Exponent, NormValue, NuSupport};
use crate::observables::{CircleObservable, FiniteObservable};
use crate::scalar::Q;
use crate::systems::{CircleSystem, FiniteSystem};
use num_traits::Zero;

/// Whether a sum starts at n = 1 (the plain series) or n = 0 (the window
/// form that includes the unshifted term).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartIndex {
    Zero,
    One,
}

/// Exact ergodic-sum tables over a finite support: `tables[k]` is the value
/// table of S_{n_values[k]} on every support atom.
#[derive(Debug, Clone)]
pub struct SumTable {
    pub start: StartIndex,
    pub n_values: Vec<usize>,
    pub tables: Vec<Vec<Q>>,
}

impl SumTable {
    pub fn n_max(&self) -> usize {
        *self.n_values.last().unwrap_or(&0)
    }

    /// The series S_N(z) at one support atom.
    pub fn value_series(&self, atom: usize) -> Vec<Q> {
        self.tables.iter().map(|t| t[atom].clone()).collect()
    }

    /// ||S_N||_{L^p(nu)} for each N.
    pub fn norm_series(&self, support: &NuSupport, p: Exponent) -> Result<Vec<NormValue>> {
        self.tables
            .iter()
            .map(|t| lp_norm_nu(support, t, p))
            .collect()
    }

    /// Exact sup over N of ||S_N||_{L^infinity(nu)}.
    pub fn linf_sup(&self, support: &NuSupport) -> Q {
        self.tables
            .iter()
            .map(|t| support.linf_norm(t))
            .max()
            .unwrap_or_else(Q::zero)
    }
}

/// Computes the exact sum tables for N = 1..=n_max on a finite system.
///
/// With `StartIndex::One` the N-th table is sum_{n=1}^{N} F(Phi^n z); with
/// `StartIndex::Zero` it is sum_{n=0}^{N} F(Phi^n z) (N = 0 included).
pub fn ergodic_sums(
    sys: &FiniteSystem,
    support: &NuSupport,
    obs: &FiniteObservable,
    n_max: usize,
    start: StartIndex,
) -> Result<SumTable> {
    obs.validate_for(sys)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be positive".into()));
    }
    let size = support.len();
    let f_values: Vec<Q> = (0..size).map(|id| obs.eval(&support.atom(id).point)).collect();

    let mut n_values = Vec::new();
    let mut tables = Vec::new();
    // cursor[z] = id of Phi^n z for the current n.
    let mut cursor: Vec<usize> = (0..size).collect();
    let mut acc: Vec<Q> = match start {
        StartIndex::One => vec![Q::zero(); size],
        StartIndex::Zero => {
            let t = f_values.clone();
            n_values.push(0);
            tables.push(t.clone());
            t
        }
    };
    for n in 1..=n_max {
        for z in 0..size {
            cursor[z] = support.successor(cursor[z]);
            acc[z] += &f_values[cursor[z]];
        }
        n_values.push(n);
        tables.push(acc.clone());
    }
    Ok(SumTable {
        start,
        n_values,
        tables,
    })
}

/// The series S_N(z), N = 1..=n_max, at a single circle point.
pub fn ergodic_sums_circle(
    sys: &CircleSystem,
    obs: &CircleObservable,
    point: &[f64],
    n_max: usize,
    start: StartIndex,
) -> Result<Vec<f64>> {
    obs.validate_for(sys)?;
    if point.len() != sys.num_maps() {
        return Err(Error::InvalidPoint(format!(
            "point has {} coordinates, system has {} factors",
            point.len(),
            sys.num_maps()
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be positive".into()));
    }
    let mut out = Vec::with_capacity(n_max);
    let mut cur = point.to_vec();
    let mut acc = match start {
        StartIndex::One => 0.0,
        StartIndex::Zero => obs.eval(&cur),
    };
    for _ in 1..=n_max {
        cur = sys.apply_product(&cur, 1)?;
        acc += obs.eval(&cur);
        out.push(acc);
    }
    Ok(out)
}

/// Per-orbit sums of an observable along each support cycle. All zero is
/// exactly the condition for the ergodic sums to stay bounded (indeed
/// periodic in N) on a finite system.
pub fn cycle_sums(support: &NuSupport, f_values: &[Q]) -> Vec<Q> {
    support
        .orbits()
        .iter()
        .map(|o| o.atoms.iter().map(|&id| &f_values[id]).sum())
        .collect()
}

/// Growth diagnostic for a norm series: sup so far, the least-squares slope
/// of norm against N over the top half of the series, and a verdict.
#[derive(Debug, Clone)]
pub struct SupNormDiagnostic {
    pub sup: f64,
    pub slope: f64,
    pub threshold: f64,
    pub bounded: bool,
}

/// Fits the running supremum of the norms against N over the second half of
/// the series. For a bounded (eventually periodic) series the running sup
/// stabilizes and the slope vanishes; linear growth shows up directly.
pub fn sup_norm_diagnostic(n_values: &[usize], norms: &[f64]) -> Result<SupNormDiagnostic> {
    if n_values.len() != norms.len() || norms.is_empty() {
        return Err(Error::InvalidParameter(
            "norm series and index series must be equal-length and nonempty".into(),
        ));
    }
    let mut running = Vec::with_capacity(norms.len());
    let mut sup = 0.0f64;
    for &n in norms {
        sup = sup.max(n.abs());
        running.push(sup);
    }
    let half = norms.len() / 2;
    let xs: Vec<f64> = n_values[half..].iter().map(|&n| n as f64).collect();
    let ys = &running[half..];
    let k = xs.len() as f64;
    let slope = if xs.len() < 2 {
        0.0
    } else {
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        if sxx == 0.0 {
            0.0
        } else {
            sxy / sxx
        }
    };
    let threshold = 1e-6 * sup.max(1.0);
    Ok(SupNormDiagnostic {
        sup,
        slope,
        threshold,
        bounded: slope.abs() <= threshold,
    })
}

/// Shifted-window sums over the base space and their suprema in L^p(mu).
///
/// `window_sup` is sup over 1 <= N <= n_max, |m| <= m_max of the norm of
/// x -> sum_{n=1}^{N} F(Phi^{n+m}(x,...,x)); `single_sup` is the same for the
/// unshifted windows x -> sum_{n=0}^{N} F(Phi^n(x,...,x)), N <= n_max.
#[derive(Debug, Clone)]
pub struct ShiftedSumReport {
    pub p: Exponent,
    pub n_max: usize,
    pub m_max: usize,
    pub window_sup: f64,
    pub window_sup_exact: Option<Q>,
    pub single_sup: f64,
    pub single_sup_exact: Option<Q>,
    /// Argmax (N, m) of the window form.
    pub window_argmax: (usize, i64),
}

pub fn shifted_sum_condition(
    sys: &FiniteSystem,
    obs: &FiniteObservable,
    n_max: usize,
    m_max: usize,
    p: Exponent,
) -> Result<ShiftedSumReport> {
    obs.validate_for(sys)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be positive".into()));
    }
    let m = sys.num_atoms();
    let lo = -(m_max as i64);
    let hi = n_max as i64 + m_max as i64;

    // prefix[x][k - lo] = sum_{n=1}^{k} F(Phi^n (x,..,x)), extended to k <= 0
    // by prefix(0) = 0 and prefix(k) = -sum_{n=k+1}^{0} F(Phi^n ...). Then a
    // window sum is prefix(N + m) - prefix(m).
    let mut prefix = vec![vec![Q::zero(); (hi - lo + 1) as usize]; m];
    for (x, row) in prefix.iter_mut().enumerate() {
        let diag = sys.diagonal_point(x);
        let at = |k: i64| -> Result<Q> { Ok(obs.eval(&sys.apply_product(&diag, k)?)) };
        let zero_pos = (0 - lo) as usize;
        row[zero_pos] = Q::zero();
        let mut acc = Q::zero();
        for k in 1..=hi {
            acc += at(k)?;
            row[(k - lo) as usize] = acc.clone();
        }
        acc = Q::zero();
        for k in (lo..0).rev() {
            acc -= at(k + 1)?;
            row[(k - lo) as usize] = acc.clone();
        }
    }

    let norm_of = |values: &[Q]| -> Result<NormValue> { lp_norm_mu(sys, values, p) };

    let mut window_sup = f64::NEG_INFINITY;
    let mut window_sup_exact: Option<Q> = None;
    let mut window_argmax = (1usize, 0i64);
    for n in 1..=n_max {
        for shift in lo..=(m_max as i64) {
            let values: Vec<Q> = (0..m)
                .map(|x| {
                    &prefix[x][(n as i64 + shift - lo) as usize] - &prefix[x][(shift - lo) as usize]
                })
                .collect();
            let nv = norm_of(&values)?;
            if nv.value > window_sup {
                window_sup = nv.value;
                window_argmax = (n, shift);
            }
            if let Some(e) = nv.exact {
                window_sup_exact = Some(match window_sup_exact.take() {
                    Some(best) if best >= e => best,
                    _ => e,
                });
            }
        }
    }

    let mut single_sup = f64::NEG_INFINITY;
    let mut single_sup_exact: Option<Q> = None;
    for n in 0..=n_max {
        // sum_{j=0}^{n} F(Phi^j x) = prefix(n) - prefix(-1).
        let values: Vec<Q> = (0..m)
            .map(|x| &prefix[x][(n as i64 - lo) as usize] - &prefix[x][(-1 - lo) as usize])
            .collect();
        let nv = norm_of(&values)?;
        single_sup = single_sup.max(nv.value);
        if let Some(e) = nv.exact {
            single_sup_exact = Some(match single_sup_exact.take() {
                Some(best) if best >= e => best,
                _ => e,
            });
        }
    }

    Ok(ShiftedSumReport {
        p,
        n_max,
        m_max,
        window_sup,
        window_sup_exact,
        single_sup,
        single_sup_exact,
        window_argmax,
    })
}
