//! A-optimal solicitation-set selection.
//!
//! Soliciting item set S costs the analyst estimation variance
//! tr[(sum_{j in S} v_j v_j^T)^-1]; the selection objective is its negation
//! F(S), maximized subject to |S| <= B. F is increasing and submodular on
//! spanning sets, so greedy maximization of the marginal against a linearly
//! independent seed set carries the classic 1 - 1/e guarantee; a brute-force
//! enumerator provides the exact optimum for oracle-sized instances.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset::ItemId;
use crate::error::{Error, Result};

/// Relative residual threshold below which a vector counts as dependent.
const DEPENDENCE_REL_TOL: f64 = 1e-12;

/// Default cap on brute-force subset enumeration.
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 1_000_000;

/// A selectable item: id plus the latent part of its profile.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: ItemId,
    pub latent: Vec<f64>,
}

/// An instance of the selection problem.
#[derive(Clone, Debug)]
pub struct SelectionProblem {
    candidates: Vec<Candidate>,
    budget: usize,
    seed_set: Vec<ItemId>,
}

impl SelectionProblem {
    /// Builds and validates an instance.
    ///
    /// The seed set must name candidates with linearly independent latents
    /// (at most d of them); it anchors the marginal objective
    /// G(S) = F(S u S*) - F(S*) and is excluded from the output.
    pub fn new(
        candidates: Vec<Candidate>,
        budget: usize,
        seed_set: Vec<ItemId>,
    ) -> Result<SelectionProblem> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("no candidates".to_string()));
        }
        let d = candidates[0].latent.len();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional latents".to_string()));
        }
        for c in &candidates {
            if c.latent.len() != d {
                return Err(Error::InvalidData(format!(
                    "candidate {} has dimension {}, expected {d}",
                    c.id,
                    c.latent.len()
                )));
            }
            if c.latent.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidData(format!("candidate {} has a zero latent", c.id)));
            }
        }
        let ids: BTreeSet<ItemId> = candidates.iter().map(|c| c.id).collect();
        if ids.len() != candidates.len() {
            return Err(Error::InvalidData("duplicate candidate ids".to_string()));
        }
        if budget > candidates.len() {
            return Err(Error::InvalidArgument(format!(
                "budget {budget} exceeds candidate count {}",
                candidates.len()
            )));
        }
        let seed_ids: BTreeSet<ItemId> = seed_set.iter().copied().collect();
        if seed_ids.len() != seed_set.len() {
            return Err(Error::InvalidData("duplicate seed ids".to_string()));
        }
        if seed_set.len() > d {
            return Err(Error::InvalidArgument(format!(
                "seed set of {} items cannot be independent in dimension {d}",
                seed_set.len()
            )));
        }
        let problem = SelectionProblem { candidates, budget, seed_set };
        let seed_latents: Vec<&[f64]> = problem
            .seed_set
            .iter()
            .map(|&id| {
                problem
                    .candidate(id)
                    .map(|c| c.latent.as_slice())
                    .ok_or_else(|| Error::InvalidData(format!("seed id {id} is not a candidate")))
            })
            .collect::<Result<_>>()?;
        if !linearly_independent(&seed_latents) {
            return Err(Error::InvalidData("seed set latents are linearly dependent".to_string()));
        }
        Ok(problem)
    }

    /// Instance with the default pivoted-orthogonalization seed set.
    pub fn with_default_seed(candidates: Vec<Candidate>, budget: usize) -> Result<SelectionProblem> {
        let seed = default_seed_set(&candidates);
        SelectionProblem::new(candidates, budget, seed)
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn seed_set(&self) -> &[ItemId] {
        &self.seed_set
    }

    pub fn dim(&self) -> usize {
        self.candidates[0].latent.len()
    }

    fn candidate(&self, id: ItemId) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    fn latents_of(&self, ids: &[ItemId]) -> Result<Vec<&[f64]>> {
        ids.iter()
            .map(|&id| {
                self.candidate(id)
                    .map(|c| c.latent.as_slice())
                    .ok_or_else(|| Error::InvalidData(format!("unknown item {id}")))
            })
            .collect()
    }

    /// F(ids u S*): the objective including the seed set.
    pub fn value_with_seed(&self, ids: &[ItemId]) -> Result<f64> {
        let mut all: Vec<ItemId> = self.seed_set.clone();
        for &id in ids {
            if !self.seed_set.contains(&id) {
                all.push(id);
            }
        }
        let latents = self.latents_of(&all)?;
        Ok(f_value_of_latents(&latents))
    }

    /// Marginal objective G(ids) = F(ids u S*) - F(S*).
    ///
    /// When the seed alone is rank-deficient F(S*) = -infinity; the marginal
    /// is then 0 if the union is still singular and +infinity once the union
    /// becomes invertible (any spanning set beats any non-spanning one).
    pub fn marginal(&self, ids: &[ItemId]) -> Result<f64> {
        let with = self.value_with_seed(ids)?;
        let base = self.value_with_seed(&[])?;
        Ok(sub_f(with, base))
    }
}

/// Difference of objective values under the -infinity convention.
fn sub_f(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        if a == f64::NEG_INFINITY {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a - b
    }
}

fn normal_matrix(latents: &[&[f64]], d: usize) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(d, d);
    for latent in latents {
        let v = DVector::from_column_slice(latent);
        a.ger(1.0, &v, &v, 1.0);
    }
    a
}

/// F for an explicit normal matrix: negative trace of its inverse, or
/// -infinity when singular (a rank-deficient design is worthless, not an
/// error, so the greedy loop stays total).
fn f_of_matrix(a: &DMatrix<f64>) -> f64 {
    match Cholesky::new(a.clone()) {
        None => f64::NEG_INFINITY,
        Some(chol) => {
            let d = a.nrows();
            let mut trace_inv = 0.0;
            for k in 0..d {
                let mut e = DVector::zeros(d);
                e[k] = 1.0;
                trace_inv += chol.solve(&e)[k];
            }
            -trace_inv
        }
    }
}

fn f_value_of_latents(latents: &[&[f64]]) -> f64 {
    if latents.is_empty() {
        return f64::NEG_INFINITY;
    }
    let d = latents[0].len();
    f_of_matrix(&normal_matrix(latents, d))
}

/// A-optimality objective F(S) = -tr[(sum_{j in S} v_j v_j^T)^-1].
///
/// Returns -infinity when the design is singular.
pub fn a_optimality_value(profiles: &[Candidate]) -> f64 {
    let latents: Vec<&[f64]> = profiles.iter().map(|c| c.latent.as_slice()).collect();
    f_value_of_latents(&latents)
}

/// True when the vectors are linearly independent (pivoted
/// orthogonalization with a relative residual threshold).
pub fn linearly_independent(latents: &[&[f64]]) -> bool {
    if latents.is_empty() {
        return true;
    }
    let d = latents[0].len();
    if latents.len() > d {
        return false;
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for latent in latents {
        let mut v = DVector::from_column_slice(latent);
        let orig = v.norm_squared();
        for b in &basis {
            let proj = v.dot(b);
            v.axpy(-proj, b, 1.0);
        }
        if v.norm_squared() <= DEPENDENCE_REL_TOL * orig.max(f64::MIN_POSITIVE) {
            return false;
        }
        let norm = v.norm();
        basis.push(v / norm);
    }
    true
}

/// Default seed set: up to d candidates chosen by pivoted orthogonalization
/// (largest residual norm first, ties to the smallest id), which greedily
/// captures the best-conditioned spanning subset available.
pub fn default_seed_set(candidates: &[Candidate]) -> Vec<ItemId> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let d = candidates[0].latent.len();
    let mut residuals: Vec<(ItemId, DVector<f64>, f64)> = candidates
        .iter()
        .map(|c| {
            let v = DVector::from_column_slice(&c.latent);
            let orig = v.norm_squared();
            (c.id, v, orig)
        })
        .collect();
    residuals.sort_by_key(|(id, _, _)| *id);
    let mut chosen = Vec::new();
    while chosen.len() < d {
        let mut best: Option<(usize, f64)> = None;
        for (idx, (_, v, orig)) in residuals.iter().enumerate() {
            let norm2 = v.norm_squared();
            if norm2 <= DEPENDENCE_REL_TOL * orig.max(f64::MIN_POSITIVE) {
                continue;
            }
            if best.map_or(true, |(_, best_norm)| norm2 > best_norm) {
                best = Some((idx, norm2));
            }
        }
        let Some((idx, _)) = best else { break };
        let (id, pivot, _) = residuals.remove(idx);
        let unit = &pivot / pivot.norm();
        for (_, v, _) in residuals.iter_mut() {
            let proj = v.dot(&unit);
            v.axpy(-proj, &unit, 1.0);
        }
        chosen.push(id);
    }
    chosen.sort_unstable();
    chosen
}

/// Heap entry ordered by gain descending, then id ascending.
#[derive(PartialEq)]
struct GainEntry {
    gain: f64,
    id: ItemId,
    idx: usize,
}

impl Eq for GainEntry {}

impl Ord for GainEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then(other.id.cmp(&self.id))
    }
}

impl PartialOrd for GainEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy maximization of the marginal objective.
///
/// Selects up to `budget` non-seed candidates, ties broken by smallest item
/// id. While the running design (seed included) is still rank-deficient the
/// objective is -infinity and stale bounds are meaningless, so each step is
/// a full scan; once the design becomes invertible the strictly-decreasing
/// marginal gains make lazy evaluation sound. Output is in selection order.
pub fn greedy_select(problem: &SelectionProblem) -> Result<Vec<ItemId>> {
    let d = problem.dim();
    let seed_latents = problem.latents_of(problem.seed_set())?;
    let mut a = normal_matrix(&seed_latents, d);
    let mut current_f = f_of_matrix(&a);

    let seed: BTreeSet<ItemId> = problem.seed_set().iter().copied().collect();
    // Ascending id order makes "first strict improvement" the smallest-id
    // tie-break in full scans.
    let mut pool: Vec<&Candidate> =
        problem.candidates().iter().filter(|c| !seed.contains(&c.id)).collect();
    pool.sort_by_key(|c| c.id);

    let mut selected = Vec::new();
    let mut taken = vec![false; pool.len()];

    let with_item = |a: &DMatrix<f64>, latent: &[f64]| -> DMatrix<f64> {
        let mut next = a.clone();
        let v = DVector::from_column_slice(latent);
        next.ger(1.0, &v, &v, 1.0);
        next
    };

    // Full-scan phase while F is -infinity.
    while selected.len() < problem.budget() && current_f == f64::NEG_INFINITY {
        let mut best: Option<(usize, f64)> = None;
        for (idx, c) in pool.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let f_new = f_of_matrix(&with_item(&a, &c.latent));
            if best.map_or(true, |(_, bf)| f_new > bf) {
                best = Some((idx, f_new));
            }
        }
        let Some((idx, f_new)) = best else { break };
        taken[idx] = true;
        selected.push(pool[idx].id);
        a = with_item(&a, &pool[idx].latent);
        current_f = f_new;
    }

    if selected.len() >= problem.budget() {
        return Ok(selected);
    }

    // Lazy phase: stale gains are valid upper bounds by submodularity.
    let mut heap = std::collections::BinaryHeap::new();
    for (idx, c) in pool.iter().enumerate() {
        if taken[idx] {
            continue;
        }
        let gain = sub_f(f_of_matrix(&with_item(&a, &c.latent)), current_f);
        heap.push(GainEntry { gain, id: c.id, idx });
    }
    while selected.len() < problem.budget() {
        let Some(top) = heap.pop() else { break };
        let fresh = sub_f(f_of_matrix(&with_item(&a, &pool[top.idx].latent)), current_f);
        let accept = match heap.peek() {
            None => true,
            Some(next) => {
                fresh > next.gain || (fresh == next.gain && top.id < next.id)
            }
        };
        if accept {
            taken[top.idx] = true;
            selected.push(top.id);
            a = with_item(&a, &pool[top.idx].latent);
            current_f += fresh;
        } else {
            heap.push(GainEntry { gain: fresh, id: top.id, idx: top.idx });
        }
    }
    Ok(selected)
}

/// Exhaustive maximizer of the marginal objective, for oracle use.
///
/// Enumerates the size-B subsets of the non-seed candidates in lexicographic
/// id order (F is increasing, so some size-B subset attains the optimum);
/// the first strict improvement wins, which reproduces the smallest-id
/// tie-breaking. Fails when C(M, B) exceeds `cap`.
pub fn brute_force_select_with_cap(
    problem: &SelectionProblem,
    cap: u128,
) -> Result<Vec<ItemId>> {
    let seed: BTreeSet<ItemId> = problem.seed_set().iter().copied().collect();
    let mut pool: Vec<&Candidate> =
        problem.candidates().iter().filter(|c| !seed.contains(&c.id)).collect();
    pool.sort_by_key(|c| c.id);
    let b = problem.budget().min(pool.len());
    let combos = binomial(pool.len() as u128, b as u128);
    if combos > cap {
        return Err(Error::CapExceeded { combinations: combos, cap });
    }
    let d = problem.dim();
    let seed_latents = problem.latents_of(problem.seed_set())?;
    let base = normal_matrix(&seed_latents, d);

    let mut best: Option<(f64, Vec<ItemId>)> = None;
    let mut indices: Vec<usize> = (0..b).collect();
    loop {
        let mut a = base.clone();
        for &i in &indices {
            let v = DVector::from_column_slice(&pool[i].latent);
            a.ger(1.0, &v, &v, 1.0);
        }
        let f = f_of_matrix(&a);
        if best.as_ref().map_or(true, |(bf, _)| f > *bf) {
            best = Some((f, indices.iter().map(|&i| pool[i].id).collect()));
        }
        if b == 0 || !next_combination(&mut indices, pool.len()) {
            break;
        }
    }
    Ok(best.map(|(_, ids)| ids).unwrap_or_default())
}

/// [`brute_force_select_with_cap`] at the default cap.
pub fn brute_force_select(problem: &SelectionProblem) -> Result<Vec<ItemId>> {
    brute_force_select_with_cap(problem, DEFAULT_BRUTE_FORCE_CAP)
}

/// Advances `indices` to the next k-combination of 0..n in lexicographic
/// order; false when exhausted.
fn next_combination(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    loop {
        if i == 0 {
            return false;
        }
        i -= 1;
        if indices[i] != i + n - k {
            break;
        }
    }
    indices[i] += 1;
    for j in i + 1..k {
        indices[j] = indices[j - 1] + 1;
    }
    true
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul(n - i) / (i + 1);
    }
    result
}
