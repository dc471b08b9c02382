//! Second-order TEBD on the star topology.
//!
//! The spin sits at site 0 with the bath modes to its right. One time step
//! is a palindrome: half a spin gate, a forward sweep in which the spin meets
//! every mode through a `dt/2` two-site gate and hops one site right through
//! a swap, the mirrored backward sweep, and the closing spin half-gate. The
//! spin is back at site 0 after every full step.

use ndarray::{array, Array1};
use ndarray_linalg::c64;
use serde::{Deserialize, Serialize};

use crate::bath::{build_star_terms, DiscretizedBath, HamiltonianTerms, ModelConfig, SimilarityGenerator};
use crate::error::{Error, Result};
use crate::linalg::{self, pauli, CMat, TruncationPolicy};
use crate::mps::{MpsState, SwapOrder};

/// Time-stepping parameters. Times are in units of 1/Δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Relative singular-value cutoff.
    pub threshold: f64,
    pub max_bond: Option<usize>,
    pub record_stride: usize,
    /// Hard cap on any bond dimension before the run is declared divergent.
    pub bond_cap: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            t_final: 2.0,
            threshold: 1e-5,
            max_bond: None,
            record_stride: 10,
            bond_cap: 512,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::Config(format!(
                "t_final must be >= dt, got {} < {}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        if self.bond_cap == 0 {
            return Err(Error::Config("bond_cap must be >= 1".into()));
        }
        self.policy().map(|_| ())
    }

    pub fn policy(&self) -> Result<TruncationPolicy> {
        TruncationPolicy::new(self.threshold, self.max_bond)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Local,
    TwoSite,
    Swap,
}

#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub kind: GateKind,
    /// Acted-on site (left site of the pair for two-site entries).
    pub site: usize,
    pub gate: Option<CMat>,
}

#[derive(Debug, Clone)]
pub struct TrotterPlan {
    pub entries: Vec<PlanEntry>,
    /// Position of the spin after each entry.
    pub spin_track: Vec<usize>,
    pub n_sites: usize,
    pub dt: f64,
}

/// Builds one TEBD2 step for the star Hamiltonian.
pub fn build_trotter2_plan(terms: &HamiltonianTerms, dt: f64) -> Result<TrotterPlan> {
    let n_modes = terms.n_modes();
    if n_modes == 0 {
        return Err(Error::Config("plan needs at least one bath mode".into()));
    }
    let half = c64::new(0.0, -0.5 * dt);
    let spin_gate = linalg::matrix_exponential(&terms.spin_local.mapv(|x| x * half))?;
    let mode_gates = terms
        .mode_terms
        .iter()
        .map(|h| linalg::matrix_exponential(&h.mapv(|x| x * half)))
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(4 * n_modes + 2);
    let mut spin_track = Vec::with_capacity(4 * n_modes + 2);
    let mut pos = 0usize;
    let mut push = |kind, site, gate: Option<&CMat>, pos: usize| {
        entries.push(PlanEntry {
            kind,
            site,
            gate: gate.cloned(),
        });
        spin_track.push(pos);
    };

    push(GateKind::Local, 0, Some(&spin_gate), pos);
    for (n, gate) in mode_gates.iter().enumerate() {
        push(GateKind::TwoSite, pos, Some(gate), pos);
        if n + 1 < n_modes {
            push(GateKind::Swap, pos, None, pos + 1);
            pos += 1;
        }
    }
    for (n, gate) in mode_gates.iter().enumerate().rev() {
        if n + 1 < n_modes {
            push(GateKind::Swap, pos - 1, None, pos - 1);
            pos -= 1;
        }
        push(GateKind::TwoSite, pos, Some(gate), pos);
    }
    push(GateKind::Local, 0, Some(&spin_gate), pos);
    debug_assert_eq!(pos, 0);

    Ok(TrotterPlan {
        entries,
        spin_track,
        n_sites: n_modes + 1,
        dt,
    })
}

impl TrotterPlan {
    /// Applies every entry in order. Runs of same-site two-site gates and an
    /// adjacent swap are fused into a single SVD. Returns the summed
    /// discarded weight.
    pub fn apply(&self, state: &mut MpsState, policy: &TruncationPolicy) -> Result<f64> {
        if state.n_sites() != self.n_sites {
            return Err(Error::Dimension(format!(
                "plan is for {} sites, state has {}",
                self.n_sites,
                state.n_sites()
            )));
        }
        let entries = &self.entries;
        let mut discarded = 0.0;
        let mut i = 0;
        while i < entries.len() {
            let entry = &entries[i];
            match entry.kind {
                GateKind::Local => {
                    state.apply_single_site_gate(entry.site, gate_of(entry)?)?;
                    i += 1;
                }
                GateKind::Swap => {
                    let next = entries.get(i + 1);
                    match next {
                        Some(n) if n.kind == GateKind::TwoSite && n.site == entry.site => {
                            let (gate, consumed) = fold_gates(entries, i + 1)?;
                            discarded += state.apply_pair(entry.site, Some(&gate), SwapOrder::Before, policy)?;
                            i += 1 + consumed;
                        }
                        _ => {
                            discarded += state.swap_sites(entry.site, policy)?;
                            i += 1;
                        }
                    }
                }
                GateKind::TwoSite => {
                    let (gate, consumed) = fold_gates(entries, i)?;
                    let j = i + consumed;
                    match entries.get(j) {
                        Some(n) if n.kind == GateKind::Swap && n.site == entry.site => {
                            discarded += state.apply_pair(entry.site, Some(&gate), SwapOrder::After, policy)?;
                            i = j + 1;
                        }
                        _ => {
                            discarded += state.apply_two_site_gate(entry.site, &gate, policy)?;
                            i = j;
                        }
                    }
                }
            }
        }
        Ok(discarded)
    }

    /// Dense one-step propagator on the original site ordering, for checks on
    /// small instances.
    pub fn dense_step_operator(&self, phys_dims: &[usize]) -> Result<CMat> {
        let dim: usize = phys_dims.iter().product();
        let mut op = linalg::identity(dim);
        let mut order: Vec<usize> = (0..phys_dims.len()).collect();
        for entry in &self.entries {
            let dims: Vec<usize> = order.iter().map(|&l| phys_dims[l]).collect();
            let step = match entry.kind {
                GateKind::Local => embed(gate_of(entry)?, &dims, entry.site, 1),
                GateKind::TwoSite => embed(gate_of(entry)?, &dims, entry.site, 2),
                GateKind::Swap => {
                    let swap = swap_matrix(dims[entry.site], dims[entry.site + 1]);
                    order.swap(entry.site, entry.site + 1);
                    embed_rect(&swap, &dims, entry.site)
                }
            };
            op = step.dot(&op);
        }
        Ok(op)
    }
}

fn gate_of(entry: &PlanEntry) -> Result<&CMat> {
    entry
        .gate
        .as_ref()
        .ok_or_else(|| Error::Gate(format!("{:?} entry at site {} has no gate", entry.kind, entry.site)))
}

/// Multiplies consecutive two-site gates on the same site starting at
/// `start`; returns the product and the number of entries consumed.
fn fold_gates(entries: &[PlanEntry], start: usize) -> Result<(CMat, usize)> {
    let site = entries[start].site;
    let mut gate = gate_of(&entries[start])?.clone();
    let mut consumed = 1;
    while let Some(next) = entries.get(start + consumed) {
        if next.kind != GateKind::TwoSite || next.site != site {
            break;
        }
        gate = gate_of(next)?.dot(&gate);
        consumed += 1;
    }
    Ok((gate, consumed))
}

fn embed(op: &CMat, dims: &[usize], site: usize, width: usize) -> CMat {
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + width..].iter().product();
    linalg::kron(&linalg::kron(&linalg::identity(left), op), &linalg::identity(right))
}

fn embed_rect(op: &CMat, dims: &[usize], site: usize) -> CMat {
    embed(op, dims, site, 2)
}

/// Permutation `|a⟩|b⟩ -> |b⟩|a⟩` with `a` of dimension `p`, `b` of `q`.
pub fn swap_matrix(p: usize, q: usize) -> CMat {
    let mut m = CMat::zeros((p * q, p * q));
    for a in 0..p {
        for b in 0..q {
            m[(b * p + a, a * q + b)] = c64::new(1.0, 0.0);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub discarded_weight: f64,
    /// `‖ψ_after‖ / ‖ψ_before‖` for this step.
    pub norm_factor: f64,
}

/// One full step: all plan gates, then canonicalization with the norm
/// stripped into `log_norm`.
pub fn step(state: &mut MpsState, plan: &TrotterPlan, policy: &TruncationPolicy) -> Result<StepReport> {
    let discarded_weight = plan.apply(state, policy)?;
    let norm_factor = state.canonicalize()?;
    Ok(StepReport {
        discarded_weight,
        norm_factor,
    })
}

/// A trace-one 2×2 density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix2x2(CMat);

impl DensityMatrix2x2 {
    pub fn new(m: CMat) -> Result<Self> {
        if m.dim() != (2, 2) {
            return Err(Error::Dimension(format!(
                "density matrix must be 2x2, got {:?}",
                m.dim()
            )));
        }
        linalg::ensure_finite(&m, "density matrix")?;
        let trace = m[(0, 0)] + m[(1, 1)];
        if (trace - c64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Config(format!("density matrix trace is {trace}, expected 1")));
        }
        if linalg::hermiticity_residual(&m) > 1e-10 {
            return Err(Error::NotHermitian {
                residual: linalg::hermiticity_residual(&m),
            });
        }
        Ok(Self(m))
    }

    /// `diag(1, 0)` or `diag(0, 1)`-style constructor for tests and examples.
    pub fn diagonal(p_up: f64) -> Result<Self> {
        Self::new(array![
            [c64::new(p_up, 0.0), c64::new(0.0, 0.0)],
            [c64::new(0.0, 0.0), c64::new(1.0 - p_up, 0.0)]
        ])
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    /// `tr[σz ρ]`
    pub fn sz(&self) -> f64 {
        (self.0[(0, 0)] - self.0[(1, 1)]).re
    }

    pub fn re_rho01(&self) -> f64 {
        self.0[(0, 1)].re
    }

    pub fn trace(&self) -> c64 {
        self.0[(0, 0)] + self.0[(1, 1)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let a = self.0[(0, 0)].re;
        let d = self.0[(1, 1)].re;
        let b = self.0[(0, 1)].norm();
        0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b * b).sqrt()
    }
}

/// `ρ = e^{-βŜ} ρ_f e^{-βŜ} / tr[…]`
pub fn recover_density(rho_f: &DensityMatrix2x2, generator: &SimilarityGenerator) -> Result<DensityMatrix2x2> {
    if generator.is_identity() {
        return Ok(rho_f.clone());
    }
    let back = generator.backward();
    let m = back.dot(rho_f.matrix()).dot(&back);
    let trace = (m[(0, 0)] + m[(1, 1)]).re;
    if !(trace > 1e-300) {
        return Err(Error::RecoveryDegenerate(trace));
    }
    let m = m / c64::new(trace, 0.0);
    DensityMatrix2x2::new((&m + &linalg::dagger(&m)) * c64::new(0.5, 0.0))
}

#[derive(Debug, Clone)]
pub struct Observables {
    pub rho_fictitious: DensityMatrix2x2,
    pub rho_recovered: DensityMatrix2x2,
    pub sz_fictitious: f64,
    pub sz_recovered: f64,
    pub re_rho01_recovered: f64,
}

impl Observables {
    pub fn from_fictitious(rho_f: DensityMatrix2x2, generator: &SimilarityGenerator) -> Result<Self> {
        let rho = recover_density(&rho_f, generator)?;
        Ok(Self {
            sz_fictitious: rho_f.sz(),
            sz_recovered: rho.sz(),
            re_rho01_recovered: rho.re_rho01(),
            rho_fictitious: rho_f,
            rho_recovered: rho,
        })
    }
}

pub fn observables(state: &MpsState, generator: &SimilarityGenerator) -> Result<Observables> {
    let rho_f = DensityMatrix2x2::new(state.reduced_spin_density()?)?;
    Observables::from_fictitious(rho_f, generator)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    /// `exp(log_norm)`: norm of the transformed-frame state relative to
    /// the normalized initial state `|↑⟩⊗|0…⟩`.
    pub norm_factor: f64,
    pub sz_fict: f64,
    pub sz_recovered: f64,
    pub re_rho01_recovered: f64,
    pub bond_entropies: Vec<f64>,
    /// NaN when the chain has fewer than two bonds.
    pub seff: f64,
    pub max_bond: usize,
    /// Cumulative discarded weight since t = 0.
    pub discarded_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub beta: f64,
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }

    /// Row whose time is closest to `t`.
    pub fn at(&self, t: f64) -> Option<&TrajectoryRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// Stepwise driver for one trajectory.
pub struct Simulation {
    generator: SimilarityGenerator,
    evo: EvolutionConfig,
    policy: TruncationPolicy,
    plan: TrotterPlan,
    state: MpsState,
    steps_done: usize,
    discarded: f64,
}

impl Simulation {
    pub fn new(cfg: &ModelConfig, generator: &SimilarityGenerator, evo: &EvolutionConfig) -> Result<Self> {
        let bath = cfg.discretized_bath()?;
        Self::with_bath(cfg, &bath, generator, evo)
    }

    pub fn with_bath(
        cfg: &ModelConfig,
        bath: &DiscretizedBath,
        generator: &SimilarityGenerator,
        evo: &EvolutionConfig,
    ) -> Result<Self> {
        evo.validate()?;
        let terms = build_star_terms(cfg, bath, generator)?;
        let plan = build_trotter2_plan(&terms, evo.dt)?;
        let state = initial_state(cfg.n_modes, cfg.fock_dim, generator)?;
        Ok(Self {
            generator: generator.clone(),
            evo: *evo,
            policy: evo.policy()?,
            plan,
            state,
            steps_done: 0,
            discarded: 0.0,
        })
    }

    pub fn state(&self) -> &MpsState {
        &self.state
    }

    pub fn plan(&self) -> &TrotterPlan {
        &self.plan
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn time(&self) -> f64 {
        self.steps_done as f64 * self.evo.dt
    }

    pub fn is_finished(&self) -> bool {
        self.steps_done >= self.evo.n_steps()
    }

    pub fn advance(&mut self) -> Result<StepReport> {
        let step_index = self.steps_done + 1;
        let report = step(&mut self.state, &self.plan, &self.policy).map_err(|e| match e {
            Error::NonFinite(what) => Error::Divergence {
                step: step_index,
                reason: format!("non-finite values in {what}"),
            },
            Error::DegenerateState => Error::Divergence {
                step: step_index,
                reason: "state norm vanished".into(),
            },
            other => other,
        })?;
        self.steps_done = step_index;
        self.discarded += report.discarded_weight;
        let max_bond = self.state.max_bond_dim();
        if max_bond > self.evo.bond_cap {
            return Err(Error::Divergence {
                step: step_index,
                reason: format!("bond dimension {max_bond} exceeds cap {}", self.evo.bond_cap),
            });
        }
        if !self.state.log_norm().is_finite() {
            return Err(Error::Divergence {
                step: step_index,
                reason: "norm overflow".into(),
            });
        }
        Ok(report)
    }

    pub fn record(&self) -> Result<TrajectoryRow> {
        let obs = observables(&self.state, &self.generator)?;
        let spectrum = self.state.bond_entropies()?;
        let seff = spectrum.effective_entanglement().unwrap_or(f64::NAN);
        let row = TrajectoryRow {
            t: self.time(),
            norm_factor: self.state.log_norm().exp(),
            sz_fict: obs.sz_fictitious,
            sz_recovered: obs.sz_recovered,
            re_rho01_recovered: obs.re_rho01_recovered,
            bond_entropies: spectrum.entropies,
            seff,
            max_bond: self.state.max_bond_dim(),
            discarded_weight: self.discarded,
        };
        let finite = [row.norm_factor, row.sz_fict, row.sz_recovered, row.re_rho01_recovered]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Divergence {
                step: self.steps_done,
                reason: "non-finite observable".into(),
            });
        }
        Ok(row)
    }

    fn should_record(&self) -> bool {
        self.steps_done.is_multiple_of(self.evo.record_stride) || self.is_finished()
    }
}

/// `e^{βŜ}|↑⟩ ⊗ |0…0⟩`, normalized, with the stripped norm in `log_norm`.
pub fn initial_state(n_modes: usize, fock_dim: usize, generator: &SimilarityGenerator) -> Result<MpsState> {
    let up = Array1::from(vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0)]);
    let spin = generator.forward().dot(&up);
    let norm = spin.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let mut vacuum = Array1::zeros(fock_dim);
    vacuum[0] = c64::new(1.0, 0.0);
    let mut locals = vec![spin / c64::new(norm, 0.0)];
    locals.extend(std::iter::repeat_n(vacuum, n_modes));
    let mut state = MpsState::from_product_state(&locals)?;
    state.add_log_norm(norm.ln());
    Ok(state)
}

/// Runs a trajectory, returning whatever was recorded together with the
/// error that stopped it early, if any.
pub fn run_collect(
    cfg: &ModelConfig,
    generator: &SimilarityGenerator,
    evo: &EvolutionConfig,
) -> Result<(TrajectoryRecord, Option<Error>)> {
    let mut sim = Simulation::new(cfg, generator, evo)?;
    let mut record = TrajectoryRecord {
        beta: generator.beta,
        rows: vec![sim.record()?],
    };
    while !sim.is_finished() {
        if let Err(e) = sim.advance() {
            return Ok((record, Some(e)));
        }
        if sim.should_record() {
            match sim.record() {
                Ok(row) => record.rows.push(row),
                Err(e) => return Ok((record, Some(e))),
            }
        }
    }
    Ok((record, None))
}

pub fn run(cfg: &ModelConfig, generator: &SimilarityGenerator, evo: &EvolutionConfig) -> Result<TrajectoryRecord> {
    match run_collect(cfg, generator, evo)? {
        (record, None) => Ok(record),
        (_, Some(e)) => Err(e),
    }
}

/// `tr[σz ρ]` for a 2×2 matrix, without any validation.
pub fn sz_of(m: &CMat) -> f64 {
    let p = m.dot(&pauli::sigma_z());
    (p[(0, 0)] + p[(1, 1)]).re
}
