//! Exact dense reference for small instances: the full transformed
//! Hamiltonian on `2·d^N` amplitudes, propagated with a matrix exponential.

use ndarray::Array1;
use ndarray_linalg::c64;

use crate::bath::{build_star_terms, displacement, number, DiscretizedBath, ModelConfig, SimilarityGenerator};
use crate::error::{Error, Result};
use crate::linalg::{self, pauli, CMat, TruncationPolicy};
use crate::mps::effective_entanglement;
use crate::tebd::{DensityMatrix2x2, Observables};

pub const MAX_MODES: usize = 6;
pub const MAX_FOCK_DIM: usize = 6;
pub const MAX_DIMENSION: usize = 1 << 20;
/// Dense matrices beyond this are refused before allocation.
pub const MAX_DENSE_MATRIX_DIM: usize = 8192;

#[derive(Debug, Clone)]
pub struct DenseInstance {
    pub hamiltonian: CMat,
    /// Spin first, then one entry per mode.
    pub dims: Vec<usize>,
}

impl DenseInstance {
    pub fn dimension(&self) -> usize {
        self.hamiltonian.nrows()
    }
}

fn check_size(n_modes: usize, fock_dim: usize) -> Result<usize> {
    if n_modes > MAX_MODES || fock_dim > MAX_FOCK_DIM {
        return Err(Error::InstanceTooLarge(format!(
            "dense oracle supports N <= {MAX_MODES}, d <= {MAX_FOCK_DIM}; got N = {n_modes}, d = {fock_dim}"
        )));
    }
    let dim = (fock_dim as u64).checked_pow(n_modes as u32).map(|x| 2 * x);
    match dim {
        Some(dim) if dim as usize <= MAX_DIMENSION.min(MAX_DENSE_MATRIX_DIM) => Ok(dim as usize),
        _ => Err(Error::InstanceTooLarge(format!(
            "Hilbert space 2·{fock_dim}^{n_modes} exceeds the dense limit of {MAX_DENSE_MATRIX_DIM}"
        ))),
    }
}

/// `I_left ⊗ op ⊗ I_right` with `op` on `site`.
pub fn embed_site(op: &CMat, dims: &[usize], site: usize) -> CMat {
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    linalg::kron(&linalg::kron(&linalg::identity(left), op), &linalg::identity(right))
}

/// Transformed-frame Hamiltonian assembled from the star terms.
pub fn dense_hamiltonian(
    cfg: &ModelConfig,
    bath: &DiscretizedBath,
    generator: &SimilarityGenerator,
) -> Result<DenseInstance> {
    check_size(cfg.n_modes, cfg.fock_dim)?;
    let terms = build_star_terms(cfg, bath, generator)?;
    let d = cfg.fock_dim;
    let dims: Vec<usize> = std::iter::once(2).chain(std::iter::repeat_n(d, cfg.n_modes)).collect();
    let spin_coupling = embed_site(&terms.coupling_operator, &dims, 0);
    let mut h = embed_site(&terms.spin_local, &dims, 0);
    let (x, n_op) = (displacement(d), number(d));
    for (k, mode) in bath.modes.iter().enumerate() {
        let x_k = embed_site(&x, &dims, k + 1);
        h = h
            + spin_coupling.dot(&x_k) * c64::new(mode.coupling, 0.0)
            + embed_site(&n_op, &dims, k + 1) * c64::new(mode.omega, 0.0);
    }
    Ok(DenseInstance { hamiltonian: h, dims })
}

/// `H(0)` written out directly in the physical frame.
pub fn physical_hamiltonian(cfg: &ModelConfig, bath: &DiscretizedBath) -> Result<DenseInstance> {
    check_size(cfg.n_modes, cfg.fock_dim)?;
    let d = cfg.fock_dim;
    let dims: Vec<usize> = std::iter::once(2).chain(std::iter::repeat_n(d, cfg.n_modes)).collect();
    let mut h = embed_site(&pauli::sigma_x(), &dims, 0) * c64::new(cfg.delta, 0.0);
    let sz = embed_site(&pauli::sigma_z(), &dims, 0);
    let a = crate::bath::annihilation(d);
    let a_dag = linalg::dagger(&a);
    for (k, mode) in bath.modes.iter().enumerate() {
        let x = embed_site(&(&a + &a_dag), &dims, k + 1);
        let n = embed_site(&a_dag.dot(&a), &dims, k + 1);
        h = h + sz.dot(&x) * c64::new(mode.coupling, 0.0) + n * c64::new(mode.omega, 0.0);
    }
    Ok(DenseInstance { hamiltonian: h, dims })
}

/// `(e^{βŜ}⊗I) h (e^{-βŜ}⊗I)` with both exponentials taken by Padé.
pub fn similarity_conjugate(h: &DenseInstance, generator: &SimilarityGenerator) -> Result<DenseInstance> {
    let s = generator.direction().mapv(|x| x * generator.beta);
    let fwd = embed_site(&linalg::matrix_exponential(&s)?, &h.dims, 0);
    let back = embed_site(&linalg::matrix_exponential(&s.mapv(|x| -x))?, &h.dims, 0);
    Ok(DenseInstance {
        hamiltonian: fwd.dot(&h.hamiltonian).dot(&back),
        dims: h.dims.clone(),
    })
}

/// Normalized dense initial state `e^{βŜ}|↑⟩⊗|0…0⟩` and the log of the
/// stripped norm.
pub fn dense_initial_state(dims: &[usize], generator: &SimilarityGenerator) -> (Array1<c64>, f64) {
    let up = Array1::from(vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0)]);
    let spin = generator.forward().dot(&up);
    let dim: usize = dims.iter().product();
    let stride = dim / 2;
    let mut psi = Array1::zeros(dim);
    psi[0] = spin[0];
    psi[stride] = spin[1];
    let norm = psi.iter().map(|x: &c64| x.norm_sqr()).sum::<f64>().sqrt();
    (psi / c64::new(norm, 0.0), norm.ln())
}

#[derive(Debug, Clone)]
pub struct DenseSample {
    pub t: f64,
    /// Normalized state.
    pub psi: Array1<c64>,
    /// Accumulated log norm, including the initial one.
    pub log_norm: f64,
}

/// Propagates `psi0` to every time in `times` (nondecreasing, starting at
/// or after 0) with `exp(-iHΔt)`. Propagators are cached per distinct
/// interval so uniform grids cost one exponential.
pub fn propagate_exact(
    instance: &DenseInstance,
    psi0: &Array1<c64>,
    log_norm0: f64,
    times: &[f64],
) -> Result<Vec<DenseSample>> {
    if psi0.len() != instance.dimension() {
        return Err(Error::Dimension(format!(
            "state has {} amplitudes, Hamiltonian is {}",
            psi0.len(),
            instance.dimension()
        )));
    }
    let mut cache: Vec<(f64, CMat)> = Vec::new();
    let mut psi = psi0.clone();
    let mut log_norm = log_norm0;
    let mut t_now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - t_now;
        if dt < -1e-12 || !t.is_finite() {
            return Err(Error::Config(format!(
                "time grid must be finite and nondecreasing, got {t} after {t_now}"
            )));
        }
        if dt > 1e-15 {
            let key = (dt * 1e12).round() / 1e12;
            let idx = match cache.iter().position(|(k, _)| *k == key) {
                Some(i) => i,
                None => {
                    let u = linalg::matrix_exponential(&instance.hamiltonian.mapv(|x| x * c64::new(0.0, -dt)))?;
                    cache.push((key, u));
                    cache.len() - 1
                }
            };
            psi = cache[idx].1.dot(&psi);
            let norm = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::NonFinite("dense propagation"));
            }
            psi /= c64::new(norm, 0.0);
            log_norm += norm.ln();
        }
        t_now = t;
        out.push(DenseSample {
            t,
            psi: psi.clone(),
            log_norm,
        });
    }
    Ok(out)
}

/// Normalized Schmidt values across the cut between `cut - 1` and `cut`.
pub fn dense_schmidt(psi: &Array1<c64>, dims: &[usize], cut: usize) -> Result<Vec<f64>> {
    if cut == 0 || cut >= dims.len() {
        return Err(Error::Index {
            site: cut,
            len: dims.len(),
        });
    }
    let left: usize = dims[..cut].iter().product();
    let mat = psi
        .view()
        .into_shape_with_order((left, psi.len() / left))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let svd = linalg::truncated_svd(&mat, &TruncationPolicy::new(1e-14, None)?)?;
    let norm = svd.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(svd.s.iter().map(|x| x / norm).collect())
}

/// Reduced density matrix of `site`, trace one.
pub fn dense_reduced_density(psi: &Array1<c64>, dims: &[usize], site: usize) -> Result<CMat> {
    if site >= dims.len() {
        return Err(Error::Index { site, len: dims.len() });
    }
    let left: usize = dims[..site].iter().product();
    let m = dims[site];
    let right: usize = dims[site + 1..].iter().product();
    let t = psi
        .view()
        .into_shape_with_order((left, m, right))
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let mut rho = CMat::zeros((m, m));
    for a in 0..left {
        for b in 0..right {
            for i in 0..m {
                let x = t[(a, i, b)];
                for j in 0..m {
                    rho[(i, j)] += x * t[(a, j, b)].conj();
                }
            }
        }
    }
    let tr: f64 = (0..m).map(|i| rho[(i, i)].re).sum();
    if !(tr > 0.0) {
        return Err(Error::DegenerateState);
    }
    Ok(rho / c64::new(tr, 0.0))
}

/// Spin observables of a dense state in the given frame.
pub fn dense_observables(psi: &Array1<c64>, dims: &[usize], generator: &SimilarityGenerator) -> Result<Observables> {
    let rho = dense_reduced_density(psi, dims, 0)?;
    let rho = (&rho + &linalg::dagger(&rho)) * c64::new(0.5, 0.0);
    Observables::from_fictitious(DensityMatrix2x2::new(rho)?, generator)
}

/// Exact recovered spin dynamics sampled at `times`.
pub fn exact_trajectory(
    cfg: &ModelConfig,
    bath: &DiscretizedBath,
    generator: &SimilarityGenerator,
    times: &[f64],
) -> Result<Vec<(f64, Observables)>> {
    let instance = dense_hamiltonian(cfg, bath, generator)?;
    let (psi0, log0) = dense_initial_state(&instance.dims, generator);
    propagate_exact(&instance, &psi0, log0, times)?
        .into_iter()
        .map(|s| Ok((s.t, dense_observables(&s.psi, &instance.dims, generator)?)))
        .collect()
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

/// S_eff of an `n`-spin GHZ state after `e^{βσz}` on the first `k` spins and
/// renormalization. Every bond then carries the same two Schmidt weights.
pub fn ghz_seff_closed_form(n_spins: usize, k_transformed: usize, beta: f64) -> Result<f64> {
    if n_spins < 3 {
        return Err(Error::MetricUndefined(format!(
            "GHZ S_eff needs n >= 3 spins, got {n_spins}"
        )));
    }
    if k_transformed > n_spins {
        return Err(Error::Config(format!("k = {k_transformed} exceeds n = {n_spins}")));
    }
    let x = 2.0 * beta * k_transformed as f64;
    // p = e^{x} / (e^{x} + e^{-x}), written to avoid overflow
    let p = 1.0 / (1.0 + (-2.0 * x).exp());
    let s = binary_entropy(p);
    effective_entanglement(&vec![s; n_spins - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::ghz_state;

    fn cfg(n_modes: usize, fock_dim: usize) -> ModelConfig {
        ModelConfig {
            n_modes,
            fock_dim,
            ..ModelConfig::default()
        }
    }

    fn eigenvalues_of(h: &CMat) -> Vec<f64> {
        let sym = (h + &linalg::dagger(h)) * c64::new(0.5, 0.0);
        linalg::eigendecompose_hermitian(&sym).unwrap().0.to_vec()
    }

    #[test]
    fn terms_route_matches_direct_conjugation() {
        let c = cfg(2, 3);
        let bath = c.discretized_bath().unwrap();
        let h0 = physical_hamiltonian(&c, &bath).unwrap();
        for gen in [
            SimilarityGenerator::sigma_z(0.8).unwrap(),
            SimilarityGenerator::sigma_x(-0.3).unwrap(),
            SimilarityGenerator::mixed(0.5, 1.0, 2.0).unwrap(),
        ] {
            let built = dense_hamiltonian(&c, &bath, &gen).unwrap();
            let direct = similarity_conjugate(&h0, &gen).unwrap();
            assert!(linalg::max_abs(&(built.hamiltonian - direct.hamiltonian)) < 1e-10);
        }
    }

    #[test]
    fn zero_beta_matches_physical() {
        let c = cfg(2, 4);
        let bath = c.discretized_bath().unwrap();
        let h = dense_hamiltonian(&c, &bath, &SimilarityGenerator::sigma_z(0.0).unwrap()).unwrap();
        let h0 = physical_hamiltonian(&c, &bath).unwrap();
        assert!(linalg::max_abs(&(h.hamiltonian - h0.hamiltonian)) < 1e-14);
    }

    #[test]
    fn similarity_preserves_spectrum() {
        let c = cfg(2, 3);
        let bath = c.discretized_bath().unwrap();
        let h0 = physical_hamiltonian(&c, &bath).unwrap();
        let reference = eigenvalues_of(&h0.hamiltonian);
        for beta in [0.3, 0.8] {
            let h = dense_hamiltonian(&c, &bath, &SimilarityGenerator::sigma_z(beta).unwrap()).unwrap();
            // the transformed matrix is not Hermitian; compare via its
            // similarity back to the Hermitian form
            let back = similarity_conjugate(&h, &SimilarityGenerator::sigma_z(-beta).unwrap()).unwrap();
            let vals = eigenvalues_of(&back.hamiltonian);
            for (a, b) in vals.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-8);
            }
            assert!(linalg::hermiticity_residual(&h.hamiltonian) > 1e-3);
        }
    }

    #[test]
    fn decoupled_spectrum() {
        let mut c = cfg(2, 3);
        c.eta = 1e-300;
        let bath = c.discretized_bath().unwrap();
        let h = physical_hamiltonian(&c, &bath).unwrap();
        let vals = eigenvalues_of(&h.hamiltonian);
        let mut expected = Vec::new();
        for s in [-c.delta, c.delta] {
            for n1 in 0..3 {
                for n2 in 0..3 {
                    expected.push(s + n1 as f64 * bath.modes[0].omega + n2 as f64 * bath.modes[1].omega);
                }
            }
        }
        expected.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn isolated_spin_rabi_oscillation() {
        let mut c = cfg(1, 2);
        c.eta = 1e-300;
        let bath = c.discretized_bath().unwrap();
        let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        for beta in [0.0, 0.5] {
            let gen = SimilarityGenerator::sigma_z(beta).unwrap();
            for (t, obs) in exact_trajectory(&c, &bath, &gen, &times).unwrap() {
                assert!((obs.sz_recovered - (2.0 * c.delta * t).cos()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn recovered_dynamics_frame_independent() {
        let c = cfg(2, 3);
        let bath = c.discretized_bath().unwrap();
        let times: Vec<f64> = (0..=8).map(|k| 0.25 * k as f64).collect();
        let reference = exact_trajectory(&c, &bath, &SimilarityGenerator::sigma_z(0.0).unwrap(), &times).unwrap();
        for gen in [
            SimilarityGenerator::sigma_z(0.8).unwrap(),
            SimilarityGenerator::sigma_z(-0.4).unwrap(),
            SimilarityGenerator::mixed(0.3, 1.0, 1.0).unwrap(),
        ] {
            let got = exact_trajectory(&c, &bath, &gen, &times).unwrap();
            for ((_, a), (_, b)) in got.iter().zip(&reference) {
                assert!((a.sz_recovered - b.sz_recovered).abs() < 1e-8);
                assert!((a.re_rho01_recovered - b.re_rho01_recovered).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn propagation_zero_time_is_identity() {
        let c = cfg(1, 3);
        let bath = c.discretized_bath().unwrap();
        let inst = dense_hamiltonian(&c, &bath, &SimilarityGenerator::sigma_z(0.4).unwrap()).unwrap();
        let (psi0, log0) = dense_initial_state(&inst.dims, &SimilarityGenerator::sigma_z(0.4).unwrap());
        let out = propagate_exact(&inst, &psi0, log0, &[0.0]).unwrap();
        assert_eq!(out[0].psi, psi0);
        assert_eq!(out[0].log_norm, log0);
        assert!(propagate_exact(&inst, &psi0, log0, &[0.5, 0.2]).is_err());
    }

    #[test]
    fn size_guard() {
        let c = cfg(7, 2);
        let bath = c.discretized_bath().unwrap();
        assert!(matches!(
            dense_hamiltonian(&c, &bath, &SimilarityGenerator::sigma_z(0.0).unwrap()),
            Err(Error::InstanceTooLarge(_))
        ));
        let c = cfg(6, 6);
        let bath = c.discretized_bath().unwrap();
        assert!(matches!(
            physical_hamiltonian(&c, &bath),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn dense_schmidt_of_ghz() {
        let psi = ghz_state(4).unwrap();
        for cut in 1..4 {
            let s = dense_schmidt(&psi, &[2, 2, 2, 2], cut).unwrap();
            assert_eq!(s.len(), 2);
            assert!((s[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        }
        assert!(dense_schmidt(&psi, &[2, 2, 2, 2], 0).is_err());
    }

    #[test]
    fn ghz_closed_form_values() {
        let expected = [1.04, 1.01, 0.93, 0.82, 0.69, 0.57, 0.45, 0.36, 0.28, 0.22, 0.17];
        for (k, e) in expected.iter().enumerate() {
            let got = ghz_seff_closed_form(10, k, 0.1).unwrap();
            assert!((got - e).abs() <= 0.005, "k = {k}: {got} vs {e}");
        }
        assert!((ghz_seff_closed_form(10, 0, 0.1).unwrap() - (1.0 + (9.0f64 / 8.0).ln() / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn ghz_closed_form_symmetries() {
        for k in 0..=10 {
            let a = ghz_seff_closed_form(10, k, 0.0).unwrap();
            assert!((a - ghz_seff_closed_form(10, 0, 0.0).unwrap()).abs() < 1e-15);
            let plus = ghz_seff_closed_form(10, k, 0.1).unwrap();
            let minus = ghz_seff_closed_form(10, k, -0.1).unwrap();
            assert!((plus - minus).abs() < 1e-14);
        }
        assert!(matches!(
            ghz_seff_closed_form(2, 1, 0.1),
            Err(Error::MetricUndefined(_))
        ));
        assert!(ghz_seff_closed_form(5, 6, 0.1).is_err());
        // huge β·k saturates to the zero-entropy floor
        let floor = (9.0f64 / 8.0).ln() / 3.0;
        assert!((ghz_seff_closed_form(10, 10, 50.0).unwrap() - floor).abs() < 1e-12);
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.5), 1.0);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.25) - 0.8112781244591328).abs() < 1e-15);
    }

    #[test]
    fn reduced_density_of_initial_state() {
        let gen = SimilarityGenerator::sigma_x(0.4).unwrap();
        let dims = [2, 3, 3];
        let (psi, _) = dense_initial_state(&dims, &gen);
        let obs = dense_observables(&psi, &dims, &gen).unwrap();
        assert!((obs.sz_recovered - 1.0).abs() < 1e-12);
        let (psi, _) = dense_initial_state(&dims, &SimilarityGenerator::sigma_z(0.0).unwrap());
        let rho = dense_reduced_density(&psi, &dims, 1).unwrap();
        assert!((rho[(0, 0)].re - 1.0).abs() < 1e-15);
    }
}
