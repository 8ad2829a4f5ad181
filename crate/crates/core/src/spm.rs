//! Subspace power method: projected ascent of `‖P(u uᵀ)‖²_F` on the sphere,
//! with a level-set gate, duplicate removal and random restarts.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{AcceptanceStats, Error, Result};
use crate::scalar::Real;
use crate::seeds;
use crate::subspace::SubspaceProjector;

#[derive(Debug, Clone, PartialEq)]
pub struct SpmConfig<T> {
    pub gamma: T,
    pub max_steps: usize,
    /// Stop once `‖u_{j+1} − u_j‖₂` falls below this.
    pub conv_tol: T,
    /// Candidates with objective `≤ beta` are rejected.
    pub beta: T,
    /// Candidates with `|cos| > dedup_cos` to an accepted vector are duplicates.
    pub dedup_cos: T,
    /// Restart budget; `None` means `⌈5 m ln m⌉`.
    pub max_restarts: Option<usize>,
}

impl<T: Real> Default for SpmConfig<T> {
    fn default() -> Self {
        SpmConfig {
            gamma: T::lit(2.0),
            max_steps: 1000,
            conv_tol: T::lit(1e-12),
            beta: T::lit(0.5),
            dedup_cos: T::lit(0.99),
            max_restarts: None,
        }
    }
}

impl<T: Real> SpmConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) {
            return Err(Error::Validation(format!("spm gamma must be positive, got {}", self.gamma)));
        }
        if !(self.beta > T::zero() && self.beta < T::one()) {
            return Err(Error::Validation(format!("spm beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.dedup_cos > T::lit(0.9) && self.dedup_cos < T::one()) {
            return Err(Error::Validation(format!("dedup cosine must lie in (0.9, 1), got {}", self.dedup_cos)));
        }
        if self.max_restarts == Some(0) {
            return Err(Error::Validation("restart budget must be positive".into()));
        }
        Ok(())
    }

    /// Effective restart budget for `m` neurons.
    pub fn restarts_for(&self, m: usize) -> usize {
        self.max_restarts.unwrap_or_else(|| default_restarts(m))
    }
}

/// `⌈5 m ln m⌉`, at least 1.
pub fn default_restarts(m: usize) -> usize {
    let m = m as f64;
    ((5.0 * m * m.ln()).ceil() as usize).max(1)
}

/// Projector basis unpacked into symmetric matrices `B_j`, so that
/// `P(u uᵀ) u = Σ_j (uᵀ B_j u) B_j u`.
pub struct SpmOperator<T: Real> {
    d: usize,
    mats: Vec<DMatrix<T>>,
}

impl<T: Real> SpmOperator<T> {
    pub fn new(p: &SubspaceProjector<T>) -> Self {
        SpmOperator { d: p.dim(), mats: p.basis_matrices() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Objective and ascent direction `P(u uᵀ) u` at `u`.
    fn eval(&self, u: &DVector<T>) -> (T, DVector<T>) {
        let mut obj = T::zero();
        let mut dir = DVector::zeros(self.d);
        for b in &self.mats {
            let bu = b * u;
            let c = u.dot(&bu);
            obj += c * c;
            dir.axpy(c, &bu, T::one());
        }
        (obj, dir)
    }
}

fn check_unit<T: Real>(u: &[T], d: usize) -> Result<()> {
    if u.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: u.len() });
    }
    let n = u.iter().fold(T::zero(), |a, v| a + *v * *v).sqrt();
    if !((n - T::one()).abs() <= T::tol(1e-8)) {
        return Err(Error::Precondition(format!("expected a unit vector, norm is {n}")));
    }
    Ok(())
}

/// `‖P(u uᵀ)‖²_F`, in `[0, 1]` for unit `u`.
pub fn spm_objective<T: Real>(p: &SubspaceProjector<T>, u: &[T]) -> Result<T> {
    check_unit(u, p.dim())?;
    Ok(p.coordinates(&crate::subspace::hvec_outer(u)).norm_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ascent<T: Real> {
    pub u: DVector<T>,
    pub objective: T,
    pub steps: usize,
    pub converged: bool,
    /// Objective before each step and after the last one.
    pub trace: Vec<T>,
}

/// Iterates `u ← normalize(u + 2γ P(u uᵀ) u)`.
pub fn spm_ascend<T: Real>(op: &SpmOperator<T>, u0: &[T], cfg: &SpmConfig<T>) -> Result<Ascent<T>> {
    check_unit(u0, op.d)?;
    let two_gamma = T::lit(2.0) * cfg.gamma;
    let mut u = DVector::from_column_slice(u0);
    let mut trace = Vec::with_capacity(cfg.max_steps.min(1024) + 1);
    let (mut obj, mut dir) = op.eval(&u);
    let mut steps = 0;
    let mut converged = false;
    while steps < cfg.max_steps {
        trace.push(obj);
        let mut next = &u + dir * two_gamma;
        let n = next.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::ZeroIterate);
        }
        next /= n;
        let moved = (&next - &u).norm();
        u = next;
        steps += 1;
        (obj, dir) = op.eval(&u);
        if moved < cfg.conv_tol {
            converged = true;
            break;
        }
    }
    trace.push(obj);
    Ok(Ascent { u, objective: obj, steps, converged, trace })
}

/// Flips `u` so its first nonzero coordinate is positive.
pub fn canonical_sign<T: Real>(u: &mut DVector<T>) {
    if let Some(first) = u.iter().find(|v| **v != T::zero()) {
        if *first < T::zero() {
            u.neg_mut();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartOutcome {
    Accepted,
    Duplicate,
    Rejected,
    Degenerate,
}

impl RestartOutcome {
    pub fn label(self) -> &'static str {
        match self {
            RestartOutcome::Accepted => "accepted",
            RestartOutcome::Duplicate => "duplicate",
            RestartOutcome::Rejected => "rejected",
            RestartOutcome::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartRecord {
    pub index: usize,
    pub steps: usize,
    pub objective: f64,
    pub outcome: RestartOutcome,
}

impl std::fmt::Display for RestartRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "restart {} steps {} objective {:.6} {}", self.index, self.steps, self.objective, self.outcome.label())
    }
}

#[derive(Debug, Clone)]
pub struct SpmOutcome<T: Real> {
    /// `D × m`, unit columns in acceptance order with canonical signs.
    pub weights: DMatrix<T>,
    pub objectives: Vec<T>,
    pub stats: AcceptanceStats,
    pub log: Vec<RestartRecord>,
}

impl<T: Real> SpmOutcome<T> {
    /// Counts of restart objectives in `bins` equal cells of `[0, 1]`.
    pub fn objective_histogram(&self, bins: usize) -> Vec<usize> {
        objective_histogram(&self.log, bins)
    }
}

pub fn objective_histogram(log: &[RestartRecord], bins: usize) -> Vec<usize> {
    let mut h = vec![0; bins.max(1)];
    for r in log.iter().filter(|r| r.outcome != RestartOutcome::Degenerate) {
        let b = ((r.objective.clamp(0.0, 1.0) * h.len() as f64) as usize).min(h.len() - 1);
        h[b] += 1;
    }
    h
}

fn classify<T: Real>(u: &DVector<T>, objective: T, accepted: &[DVector<T>], cfg: &SpmConfig<T>) -> RestartOutcome {
    if !(objective > cfg.beta) {
        RestartOutcome::Rejected
    } else if accepted.iter().any(|v| v.dot(u).abs() > cfg.dedup_cos) {
        RestartOutcome::Duplicate
    } else {
        RestartOutcome::Accepted
    }
}

/// Runs restarts from uniform random starts until `m` distinct maximizers
/// above the `beta` level are found. Restarts run in parallel batches but are
/// merged in index order, so the result is independent of the thread count.
pub fn collect_weights<T: Real>(p: &SubspaceProjector<T>, m: usize, cfg: &SpmConfig<T>, seed: u64) -> Result<SpmOutcome<T>> {
    cfg.validate()?;
    if m == 0 || p.rank() < m {
        return Err(Error::Precondition(format!("projector rank {} is below m = {m}", p.rank())));
    }
    let op = SpmOperator::new(p);
    let d = p.dim();
    let budget = cfg.restarts_for(m);
    let batch = (2 * rayon::current_num_threads()).max(1);
    let mut accepted: Vec<DVector<T>> = Vec::with_capacity(m);
    let mut objectives = Vec::with_capacity(m);
    let mut stats = AcceptanceStats::default();
    let mut log = Vec::new();
    let mut next = 0;
    while accepted.len() < m && next < budget {
        let end = (next + batch).min(budget);
        let results: Vec<Result<Ascent<T>>> = (next..end)
            .into_par_iter()
            .map(|i| {
                let u0: Vec<T> = seeds::sphere_vec(&mut seeds::child_rng(seed, "spm-start", i as u64), d);
                spm_ascend(&op, &u0, cfg)
            })
            .collect();
        for (i, res) in (next..end).zip(results) {
            if accepted.len() == m {
                break;
            }
            stats.restarts += 1;
            let record = match res {
                Ok(mut a) => {
                    canonical_sign(&mut a.u);
                    let outcome = classify(&a.u, a.objective, &accepted, cfg);
                    match outcome {
                        RestartOutcome::Accepted => {
                            stats.accepted += 1;
                            accepted.push(a.u.clone());
                            objectives.push(a.objective);
                        }
                        RestartOutcome::Duplicate => stats.duplicates += 1,
                        _ => stats.rejected += 1,
                    }
                    RestartRecord { index: i, steps: a.steps, objective: a.objective.as_f64(), outcome }
                }
                Err(Error::ZeroIterate) => {
                    stats.degenerate += 1;
                    RestartRecord { index: i, steps: 0, objective: f64::NAN, outcome: RestartOutcome::Degenerate }
                }
                Err(e) => return Err(e),
            };
            log.push(record);
        }
        next = end;
    }
    if accepted.len() < m {
        return Err(Error::IncompleteRecovery {
            wanted: m,
            partial: accepted.iter().map(|v| v.iter().map(|x| x.as_f64()).collect()).collect(),
            stats,
        });
    }
    Ok(SpmOutcome { weights: DMatrix::from_columns(&accepted), objectives, stats, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::diagnostics::align_columns;
    use crate::subspace::{build_hessian_matrix, hvec, hvec_outer, top_m_projector, unhvec, DerivativeMode};
    use crate::teacher::{sample_teacher, ShiftLaw, TeacherNetwork};

    fn teacher(d: usize, m: usize, seed: u64) -> TeacherNetwork<f64> {
        sample_teacher(d, m, &ShiftLaw::Uniform(-0.5, 0.5), Activation::tanh(), seed).unwrap()
    }

    fn exact_projector(net: &TeacherNetwork<f64>, n_h: usize, seed: u64) -> SubspaceProjector<f64> {
        let s = build_hessian_matrix(net, n_h, DerivativeMode::Exact, seed).unwrap();
        top_m_projector(&s.columns, net.neurons()).unwrap()
    }

    /// Largest per-neuron error `min_s ‖ŵ_π(k) − s w_k‖` after optimal matching.
    fn worst_match_error(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> f64 {
        let al = align_columns(truth, est);
        (0..truth.ncols())
            .map(|k| (truth.column(k) - est.column(al.perm[k]) * al.signs[k] as f64).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn config_validation() {
        assert!(SpmConfig::<f64>::default().validate().is_ok());
        let bad = SpmConfig { beta: 1.0, ..SpmConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = SpmConfig { dedup_cos: 0.5, ..SpmConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = SpmConfig { gamma: 0.0, ..SpmConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        assert_eq!(default_restarts(1), 1);
        assert_eq!(default_restarts(36), 646);
        assert_eq!(default_restarts(12), 150);
    }

    #[test]
    fn objective_examples() {
        let w = DMatrix::from_column_slice(3, 1, &[0.0, 0.6, 0.8]);
        let p: SubspaceProjector<f64> = SubspaceProjector::exact(&w).unwrap();
        assert!((spm_objective(&p, &[0.0, 0.6, 0.8]).unwrap() - 1.0).abs() < 1e-14);
        assert!(spm_objective(&p, &[1.0, 0.0, 0.0]).unwrap().abs() < 1e-14);
        assert!(spm_objective(&p, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn objective_matches_dense_projector() {
        let net = teacher(8, 4, 3);
        let p = SubspaceProjector::exact(net.weights()).unwrap();
        let dense = p.matrix();
        let op = SpmOperator::new(&p);
        let mut rng = seeds::rng(2);
        for _ in 0..20 {
            let u: Vec<f64> = seeds::sphere_vec(&mut rng, 8);
            let reference = (&dense * hvec_outer(&u)).norm_squared();
            let fast = spm_objective(&p, &u).unwrap();
            assert!((fast - reference).abs() <= 1e-12);
            let (obj, _) = op.eval(&DVector::from_column_slice(&u));
            assert!((obj - reference).abs() <= 1e-12);
        }
    }

    /// One dense iteration `normalize(u + 2γ unhvec(P hvec(uuᵀ)) u)`.
    fn dense_step(dense: &DMatrix<f64>, d: usize, u: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let proj = unhvec(&(dense * hvec(&(u * u.transpose()))), d).unwrap();
        let next = u + (&proj * u) * (2.0 * gamma);
        &next / next.norm()
    }

    #[test]
    fn single_neuron_ascent_converges_and_matches_dense_iteration() {
        let d = 5;
        let net = teacher(d, 1, 4);
        let w = net.weights().column(0).into_owned();
        let p = SubspaceProjector::exact(net.weights()).unwrap();
        let dense = p.matrix();
        let mut rng = seeds::rng(6);
        let r: Vec<f64> = seeds::gaussian_vec(&mut rng, d);
        let mut perp = DVector::from_vec(r);
        perp -= &w * w.dot(&perp);
        perp /= perp.norm();
        let u0 = &w * 0.3 + &perp * (1.0f64 - 0.09).sqrt();
        let op = SpmOperator::new(&p);
        let a = spm_ascend(&op, u0.as_slice(), &SpmConfig::default()).unwrap();
        assert!(a.u.dot(&w).abs() >= 1.0 - 1e-8);
        assert!(a.steps <= 1000);
        let short = SpmConfig { max_steps: 5, conv_tol: 0.0, ..SpmConfig::default() };
        let fast = spm_ascend(&op, u0.as_slice(), &short).unwrap();
        let mut u = u0.clone();
        for _ in 0..5 {
            u = dense_step(&dense, d, &u, 2.0);
        }
        assert!((fast.u - u).amax() <= 1e-12);
    }

    #[test]
    fn planted_direction_is_a_fixed_point() {
        let net = teacher(6, 1, 8);
        let p = SubspaceProjector::exact(net.weights()).unwrap();
        let w = net.weights().column(0).into_owned();
        let a = spm_ascend(&SpmOperator::new(&p), w.as_slice(), &SpmConfig::default()).unwrap();
        assert!((a.u - w).amax() <= 1e-12);
        assert!(a.converged);
    }

    #[test]
    fn objective_is_monotone_along_trajectories() {
        let net = teacher(8, 6, 9);
        let p = exact_projector(&net, 12, 1);
        let op = SpmOperator::new(&p);
        let mut rng = seeds::rng(10);
        for _ in 0..20 {
            let u0: Vec<f64> = seeds::sphere_vec(&mut rng, 8);
            let a = spm_ascend(&op, &u0, &SpmConfig::default()).unwrap();
            for w in a.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn exact_projector_recovers_all_weights() {
        let net = teacher(10, 12, 21);
        let p = exact_projector(&net, 24, 2);
        let out = collect_weights(&p, 12, &SpmConfig::default(), 5).unwrap();
        assert_eq!(out.weights.ncols(), 12);
        assert!(worst_match_error(net.weights(), &out.weights) <= 1e-6);
    }

    #[test]
    fn returned_vectors_satisfy_invariants() {
        let net = teacher(8, 7, 4);
        let p = exact_projector(&net, 14, 3);
        let cfg = SpmConfig::default();
        let out = collect_weights(&p, 7, &cfg, 1).unwrap();
        for (k, col) in out.weights.column_iter().enumerate() {
            assert!((col.norm() - 1.0).abs() <= 1e-10);
            assert!(out.objectives[k] > cfg.beta);
            assert!(spm_objective(&p, col.as_slice()).unwrap() > cfg.beta);
            let first = col.iter().find(|v| **v != 0.0).unwrap();
            assert!(*first > 0.0);
            for j in 0..k {
                assert!(col.dot(&out.weights.column(j)).abs() <= cfg.dedup_cos);
            }
        }
        assert_eq!(out.stats.restarts, out.log.len());
        assert_eq!(out.stats.accepted, 7);
        let hist = out.objective_histogram(10);
        assert_eq!(hist.iter().sum::<usize>(), out.log.len());
    }

    #[test]
    fn default_budget_suffices_in_most_seeds() {
        let mut ok = 0;
        for seed in 0..10 {
            let net = teacher(10, 12, 300 + seed);
            let p = exact_projector(&net, 24, seed);
            if collect_weights(&p, 12, &SpmConfig::default(), seed).is_ok() {
                ok += 1;
            }
        }
        assert!(ok >= 9, "{ok}/10");
    }

    #[test]
    fn exact_mode_identification_over_seeds() {
        for (d, m) in [(10, 12), (15, 30)] {
            let mut ok = 0;
            for seed in 0..10 {
                let net = teacher(d, m, 1000 * d as u64 + seed);
                let p = exact_projector(&net, 2 * m, seed);
                if let Ok(out) = collect_weights(&p, m, &SpmConfig::default(), seed) {
                    if worst_match_error(net.weights(), &out.weights) <= 1e-6 {
                        ok += 1;
                    }
                }
            }
            assert!(ok >= 9, "D={d}, m={m}: {ok}/10");
        }
    }

    #[test]
    fn beta_gate_rejects_low_objective() {
        let u = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(classify(&u, 0.3, &[], &SpmConfig::default()), RestartOutcome::Rejected);
        assert_eq!(classify(&u, 0.6, &[], &SpmConfig::default()), RestartOutcome::Accepted);
        assert_eq!(classify(&u, 0.6, &[u.clone()], &SpmConfig::default()), RestartOutcome::Duplicate);
    }

    #[test]
    fn spurious_span_yields_incomplete_recovery() {
        // span{I₃/√3}: the best rank-one direction reaches only 1/3 < β
        let a = DMatrix::<f64>::identity(3, 3) / 3f64.sqrt();
        let p = SubspaceProjector::from_spanning(3, &[hvec(&a)]).unwrap();
        let cfg = SpmConfig { max_restarts: Some(8), ..SpmConfig::default() };
        match collect_weights(&p, 1, &cfg, 0) {
            Err(Error::IncompleteRecovery { wanted, partial, stats }) => {
                assert_eq!(wanted, 1);
                assert!(partial.is_empty());
                assert_eq!(stats.restarts, 8);
                assert_eq!(stats.rejected, 8);
            }
            other => panic!("expected incomplete recovery, got {other:?}"),
        }
    }

    #[test]
    fn result_is_independent_of_thread_count() {
        let net = teacher(8, 6, 14);
        let p = exact_projector(&net, 12, 3);
        let a = collect_weights(&p, 6, &SpmConfig::default(), 7).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| collect_weights(&p, 6, &SpmConfig::default(), 7).unwrap());
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn canonical_sign_examples() {
        let mut u = DVector::from_vec(vec![0.0, -0.6, 0.8]);
        canonical_sign(&mut u);
        assert_eq!(u.as_slice(), &[0.0, 0.6, -0.8]);
    }
}
