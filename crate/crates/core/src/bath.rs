//! Spin-boson problem construction.
//!
//! Covers the Drude spectral density, its finite-temperature extension to
//! negative frequencies, the midpoint discretization into bath modes, and the
//! star-topology Hamiltonian terms in the similarity-transformed frame
//! `e^{βŜ} H e^{-βŜ}`.

use ndarray::Array1;
use ndarray_linalg::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, pauli, CMat};

/// Physical parameters of the spin-boson model. Energies are in units of
/// the spin coupling Δ, with ħ = k_B = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub delta: f64,
    pub eta: f64,
    pub omega_c: f64,
    pub temperature: f64,
    pub omega_max: f64,
    pub n_modes: usize,
    pub fock_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            eta: 4.0,
            omega_c: 1.0,
            temperature: 2.0,
            omega_max: 12.7324,
            n_modes: 100,
            fock_dim: 6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 7] = [
            (self.delta > 0.0 && self.delta.is_finite(), "delta must be > 0"),
            (self.eta >= 0.0 && self.eta.is_finite(), "eta must be >= 0"),
            (self.omega_c > 0.0 && self.omega_c.is_finite(), "omega_c must be > 0"),
            (
                self.temperature > 0.0 && self.temperature.is_finite(),
                "temperature must be > 0",
            ),
            (
                self.omega_max > 0.0 && self.omega_max.is_finite(),
                "omega_max must be > 0",
            ),
            (self.n_modes >= 1, "n_modes must be >= 1"),
            (self.fock_dim >= 2, "fock_dim must be >= 2"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }

    pub fn drude(&self) -> Result<Drude> {
        Drude::new(self.eta, self.omega_c)
    }

    /// Thermalized Drude density and its discretization.
    pub fn discretized_bath(&self) -> Result<DiscretizedBath> {
        self.validate()?;
        let density = Thermalized::new(self.drude()?, self.temperature)?;
        discretize(&density, self.n_modes, self.omega_max, self.fock_dim)
    }
}

/// A bath spectral density `J(ω)`, evaluated for `ω >= 0`.
pub trait SpectralDensity {
    fn eval(&self, omega: f64) -> f64;

    /// `lim_{ω→0⁺} J(ω)/ω`, needed for the thermal factor at the origin.
    fn slope_at_zero(&self) -> f64 {
        let h = 1e-7;
        self.eval(h) / h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drude {
    pub eta: f64,
    pub omega_c: f64,
}

impl Drude {
    pub fn new(eta: f64, omega_c: f64) -> Result<Self> {
        if !(omega_c > 0.0) {
            return Err(Error::Config(format!("omega_c must be > 0, got {omega_c}")));
        }
        Ok(Self { eta, omega_c })
    }
}

impl SpectralDensity for Drude {
    fn eval(&self, omega: f64) -> f64 {
        self.eta * self.omega_c * omega / (self.omega_c * self.omega_c + omega * omega)
    }

    fn slope_at_zero(&self) -> f64 {
        self.eta / self.omega_c
    }
}

/// `J(ω) = η ω_c ω / (ω_c² + ω²)`.
pub fn drude_density(omega: f64, eta: f64, omega_c: f64) -> Result<f64> {
    Ok(Drude::new(eta, omega_c)?.eval(omega))
}

/// Finite-temperature extension of a zero-temperature density to the whole
/// frequency axis:
///
/// `J_th(ω) = ½ [1 + coth(ω / 2T)] · J_odd(ω) = J_odd(ω) / (1 - e^{-ω/T})`
///
/// where `J_odd` is the odd extension of `J`. The result is nonnegative and
/// obeys detailed balance `J_th(ω) = e^{ω/T} J_th(-ω)`.
#[derive(Debug, Clone, Copy)]
pub struct Thermalized<J> {
    pub density: J,
    pub temperature: f64,
}

impl<J: SpectralDensity> Thermalized<J> {
    pub fn new(density: J, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be > 0, got {temperature}")));
        }
        Ok(Self { density, temperature })
    }

    pub fn eval(&self, omega: f64) -> f64 {
        if omega == 0.0 {
            return self.temperature * self.density.slope_at_zero();
        }
        let odd = if omega > 0.0 {
            self.density.eval(omega)
        } else {
            -self.density.eval(-omega)
        };
        // -expm1(-x) = 1 - e^{-x}, accurate for small |x|
        let denom = -(-omega / self.temperature).exp_m1();
        if denom.is_infinite() {
            return 0.0;
        }
        odd / denom
    }
}

/// `J_th(ω)` for an arbitrary density; see [`Thermalized`].
pub fn thermalize_density<J: SpectralDensity>(density: J, temperature: f64) -> Result<Thermalized<J>> {
    Thermalized::new(density, temperature)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub omega: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBath {
    pub modes: Vec<BathMode>,
    pub fock_dim: usize,
}

impl DiscretizedBath {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    pub fn couplings(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.coupling).collect()
    }
}

/// Uniform midpoint discretization of `[-ω_max, ω_max]` into `n_modes` bins:
/// `ω_n = -ω_max + (n - ½)Δω`, `c_n = sqrt(J_th(ω_n) Δω / π)`.
pub fn discretize<J: SpectralDensity>(
    density: &Thermalized<J>,
    n_modes: usize,
    omega_max: f64,
    fock_dim: usize,
) -> Result<DiscretizedBath> {
    if n_modes == 0 {
        return Err(Error::Config("n_modes must be >= 1".into()));
    }
    if !(omega_max > 0.0) {
        return Err(Error::Config(format!("omega_max must be > 0, got {omega_max}")));
    }
    if fock_dim < 2 {
        return Err(Error::Config("fock_dim must be >= 2".into()));
    }
    let width = 2.0 * omega_max / n_modes as f64;
    let modes = (1..=n_modes)
        .map(|n| {
            let omega = -omega_max + (n as f64 - 0.5) * width;
            let j = density.eval(omega).max(0.0);
            BathMode {
                omega,
                coupling: (j * width / std::f64::consts::PI).sqrt(),
            }
        })
        .collect();
    Ok(DiscretizedBath { modes, fock_dim })
}

/// Hermitian direction `Ŝ` and strength β of the similarity transformation
/// `X ↦ e^{βŜ} X e^{-βŜ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGenerator {
    pub beta: f64,
    direction: CMat,
}

impl SimilarityGenerator {
    pub fn new(beta: f64, direction: CMat) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite, got {beta}")));
        }
        if direction.dim() != (2, 2) {
            return Err(Error::Config("generator direction must be 2x2".into()));
        }
        linalg::ensure_finite(&direction, "generator direction")?;
        if linalg::hermiticity_residual(&direction) > 1e-12 {
            return Err(Error::Config("generator direction must be Hermitian".into()));
        }
        Ok(Self { beta, direction })
    }

    pub fn sigma_z(beta: f64) -> Result<Self> {
        Self::new(beta, pauli::sigma_z())
    }

    pub fn sigma_x(beta: f64) -> Result<Self> {
        Self::new(beta, pauli::sigma_x())
    }

    /// `(x σx + z σz) / sqrt(x² + z²)`.
    pub fn mixed(beta: f64, x: f64, z: f64) -> Result<Self> {
        let norm = x.hypot(z);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Config("mixed generator needs (x, z) != 0".into()));
        }
        Self::new(
            beta,
            (pauli::sigma_x() * x + pauli::sigma_z() * z) / c64::new(norm, 0.0),
        )
    }

    /// Hermitian part of `a σ₊ + b σ₋`.
    pub fn plus_minus(beta: f64, a: f64, b: f64) -> Result<Self> {
        let m = pauli::sigma_plus() * a + pauli::sigma_minus() * b;
        let herm = (&m + &linalg::dagger(&m)) * c64::new(0.5, 0.0);
        if linalg::max_abs(&herm) == 0.0 {
            return Err(Error::Config("plus_minus generator is zero".into()));
        }
        Self::new(beta, herm)
    }

    pub fn direction(&self) -> &CMat {
        &self.direction
    }

    /// Same direction, different strength.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(beta, self.direction.clone())
    }

    pub fn is_identity(&self) -> bool {
        self.beta == 0.0
    }

    /// `e^{s·β·Ŝ}` via the spectral decomposition of `Ŝ`.
    pub fn exp_scaled(&self, s: f64) -> CMat {
        if self.beta == 0.0 {
            return linalg::identity(2);
        }
        let (vals, vecs) =
            linalg::eigendecompose_hermitian(&self.direction).expect("direction validated at construction");
        let d = CMat::from_diag(&vals.mapv(|v| c64::new((s * self.beta * v).exp(), 0.0)));
        vecs.dot(&d).dot(&linalg::dagger(&vecs))
    }

    /// `e^{βŜ}`
    pub fn forward(&self) -> CMat {
        self.exp_scaled(1.0)
    }

    /// `e^{-βŜ}`
    pub fn backward(&self) -> CMat {
        self.exp_scaled(-1.0)
    }

    /// `e^{βŜ} X e^{-βŜ}` for a spin operator `X`.
    pub fn conjugate(&self, x: &CMat) -> CMat {
        if self.beta == 0.0 {
            return x.clone();
        }
        self.forward().dot(x).dot(&self.backward())
    }
}

/// `e^{βŜ}(Δσx)e^{-βŜ}`. For `Ŝ = σz` this is `[[0, Δe^{2β}], [Δe^{-2β}, 0]]`.
pub fn transform_spin_term(delta: f64, generator: &SimilarityGenerator) -> CMat {
    generator.conjugate(&(pauli::sigma_x() * delta))
}

/// `a` on the `d`-level truncated Fock space.
pub fn annihilation(d: usize) -> CMat {
    let mut a = CMat::zeros((d, d));
    for n in 1..d {
        a[(n - 1, n)] = c64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// `a†a` on the `d`-level truncated Fock space.
pub fn number(d: usize) -> CMat {
    CMat::from_diag(&Array1::from_iter((0..d).map(|n| c64::new(n as f64, 0.0))))
}

/// `a + a†` on the `d`-level truncated Fock space.
pub fn displacement(d: usize) -> CMat {
    let a = annihilation(d);
    &a + &linalg::dagger(&a)
}

/// Star-topology Hamiltonian in the transformed frame: one local spin term
/// plus one (2d)×(2d) spin⊗mode term per bath mode, spin as the slow index.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    pub spin_local: CMat,
    /// `e^{βŜ} σz e^{-βŜ}`; equal to σz when `Ŝ = σz`.
    pub coupling_operator: CMat,
    pub mode_terms: Vec<CMat>,
    pub fock_dim: usize,
}

impl HamiltonianTerms {
    pub fn n_modes(&self) -> usize {
        self.mode_terms.len()
    }
}

/// Each mode term is `c_n Â⊗(a†+a) + ω_n I⊗a†a` with `Â` the transformed
/// coupling operator.
pub fn build_star_terms(
    cfg: &ModelConfig,
    bath: &DiscretizedBath,
    generator: &SimilarityGenerator,
) -> Result<HamiltonianTerms> {
    cfg.validate()?;
    if bath.n_modes() != cfg.n_modes || bath.fock_dim != cfg.fock_dim {
        return Err(Error::Config(format!(
            "bath has {} modes with d = {}, config expects {} modes with d = {}",
            bath.n_modes(),
            bath.fock_dim,
            cfg.n_modes,
            cfg.fock_dim
        )));
    }
    let d = bath.fock_dim;
    let coupling_operator = generator.conjugate(&pauli::sigma_z());
    let interaction = linalg::kron(&coupling_operator, &displacement(d));
    let energy = linalg::kron(&linalg::identity(2), &number(d));
    let mode_terms = bath
        .modes
        .iter()
        .map(|m| &interaction * c64::new(m.coupling, 0.0) + &energy * c64::new(m.omega, 0.0))
        .collect();
    Ok(HamiltonianTerms {
        spin_local: transform_spin_term(cfg.delta, generator),
        coupling_operator,
        mode_terms,
        fock_dim: d,
    })
}

/// Dense `(|↑…↑⟩ + |↓…↓⟩)/√2`; index 0 is `|↑…↑⟩` with site 0 slowest.
pub fn ghz_state(n_spins: usize) -> Result<Array1<c64>> {
    if n_spins < 2 {
        return Err(Error::Config(format!("GHZ state needs >= 2 spins, got {n_spins}")));
    }
    if n_spins > 30 {
        return Err(Error::InstanceTooLarge(format!("dense GHZ state of {n_spins} spins")));
    }
    let dim = 1usize << n_spins;
    let mut psi = Array1::zeros(dim);
    psi[0] = c64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    psi[dim - 1] = c64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Ok(psi)
}
