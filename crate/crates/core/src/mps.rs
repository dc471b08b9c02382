//! Matrix product states in Vidal form.
//!
//! Site tensors are stored as `B_i = Γ_i λ_i` (right-canonical when the
//! state is canonical) next to the bond weights `λ_i`, so the Γ tensors are
//! never formed explicitly and no division by small singular values occurs.
//! Two-site updates use the `θ = λ_{i-1} B_i B_{i+1}` construction: the new
//! left tensor is recovered as `G (B_i B_{i+1}) V`, which keeps the
//! represented vector exact (up to truncation) even when `G` is non-unitary.
//! In that case the gauge is lost, and [`MpsState::canonicalize`] restores
//! it.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use ndarray_linalg::c64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, TruncationPolicy};

/// Relative singular-value floor used by lossless sweeps. Values this small
/// carry less than 1e-28 of the weight and would only add noise directions.
pub const NUMERICAL_FLOOR: f64 = 1e-14;

const UNITARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MpsState {
    sites: Vec<Array3<c64>>,
    bonds: Vec<Array1<f64>>,
    phys_dims: Vec<usize>,
    labels: Vec<usize>,
    log_norm: f64,
    canonical: bool,
}

/// Where a swap happens relative to a two-site gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwapOrder {
    None,
    /// Swap the two sites, then apply the gate to the exchanged pair.
    Before,
    /// Apply the gate, then swap.
    After,
}

/// Normalized Schmidt spectra and von Neumann entropies (bits) per bond.
#[derive(Debug, Clone, PartialEq)]
pub struct BondSpectrum {
    pub values: Vec<Array1<f64>>,
    pub entropies: Vec<f64>,
}

impl BondSpectrum {
    pub fn from_values(values: Vec<Array1<f64>>) -> Self {
        let values: Vec<_> = values.into_iter().map(normalize_weights).collect();
        let entropies = values.iter().map(|s| entropy_bits(s.as_slice().unwrap())).collect();
        Self { values, entropies }
    }

    pub fn effective_entanglement(&self) -> Result<f64> {
        effective_entanglement(&self.entropies)
    }

    pub fn max_entropy(&self) -> f64 {
        self.entropies.iter().cloned().fold(0.0, f64::max)
    }
}

/// `S = -Σ p log₂ p` with `p = s²` and `0 log 0 = 0`.
pub fn entropy_bits(s: &[f64]) -> f64 {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return 0.0;
    }
    s.iter()
        .map(|x| x * x / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// `S_eff = ⅓ ln[ (1/(L-1)) Σ_n e^{3 S_n} ]` over the `L` bond entropies
/// (entropies in bits, outer logarithm natural).
pub fn effective_entanglement(entropies: &[f64]) -> Result<f64> {
    let bonds = entropies.len();
    if bonds < 2 {
        return Err(Error::MetricUndefined(format!("needs at least 2 bonds, got {bonds}")));
    }
    let sum: f64 = entropies.iter().map(|s| (3.0 * s).exp()).sum();
    Ok((sum / (bonds - 1) as f64).ln() / 3.0)
}

fn normalize_weights(s: Array1<f64>) -> Array1<f64> {
    let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        s / norm
    } else {
        s
    }
}

impl MpsState {
    /// Product state from normalized local vectors.
    pub fn from_product_state(locals: &[Array1<c64>]) -> Result<Self> {
        if locals.is_empty() {
            return Err(Error::Dimension("product state needs at least one site".into()));
        }
        let mut sites = Vec::with_capacity(locals.len());
        for (index, v) in locals.iter().enumerate() {
            linalg::ensure_finite(v, "local state")?;
            let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Normalization { index, norm });
            }
            sites.push(v.clone().into_shape_with_order((1, v.len(), 1)).unwrap());
        }
        let n = locals.len();
        Ok(Self {
            phys_dims: locals.iter().map(|v| v.len()).collect(),
            labels: (0..n).collect(),
            bonds: vec![Array1::from_elem(1, 1.0); n - 1],
            sites,
            log_norm: 0.0,
            canonical: true,
        })
    }

    /// Builds a state from arbitrary site tensors `(χ_left, d, χ_right)` and
    /// brings it to canonical form. The norm of the input is moved into
    /// [`log_norm`](Self::log_norm).
    pub fn from_tensors(tensors: Vec<Array3<c64>>) -> Result<Self> {
        let n = tensors.len();
        if n == 0 {
            return Err(Error::Dimension("MPS needs at least one site".into()));
        }
        if tensors[0].dim().0 != 1 || tensors[n - 1].dim().2 != 1 {
            return Err(Error::Dimension("boundary bond dimensions must be 1".into()));
        }
        for (i, pair) in tensors.windows(2).enumerate() {
            if pair[0].dim().2 != pair[1].dim().0 {
                return Err(Error::Dimension(format!(
                    "bond {i}: right dim {} != left dim {}",
                    pair[0].dim().2,
                    pair[1].dim().0
                )));
            }
        }
        for t in &tensors {
            linalg::ensure_finite(t, "site tensor")?;
        }
        let mut state = Self {
            phys_dims: tensors.iter().map(|t| t.dim().1).collect(),
            labels: (0..n).collect(),
            bonds: tensors[..n - 1]
                .iter()
                .map(|t| Array1::from_elem(t.dim().2, 1.0 / (t.dim().2 as f64).sqrt()))
                .collect(),
            sites: tensors
                .into_iter()
                .map(|t| t.as_standard_layout().into_owned())
                .collect(),
            log_norm: 0.0,
            canonical: false,
        };
        state.canonicalize()?;
        Ok(state)
    }

    /// Exact MPS of a dense vector (site 0 is the slowest index).
    pub fn from_dense(psi: &Array1<c64>, dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().product();
        if dims.is_empty() || total != psi.len() {
            return Err(Error::Dimension(format!(
                "dims {dims:?} do not match vector length {}",
                psi.len()
            )));
        }
        let floor = TruncationPolicy {
            threshold: NUMERICAL_FLOOR,
            max_bond: None,
        };
        let mut tensors = Vec::with_capacity(dims.len());
        let mut rest = psi.clone().into_shape_with_order((1, total)).unwrap();
        let mut left = 1;
        for &d in &dims[..dims.len() - 1] {
            let cols = rest.len() / (left * d);
            let mat = rest.into_shape_with_order((left * d, cols)).unwrap();
            let svd = linalg::truncated_svd(&mat, &floor)?;
            let k = svd.s.len();
            tensors.push(svd.u.into_shape_with_order((left, d, k)).unwrap());
            rest = scale_rows(&svd.vh, svd.s.view());
            left = k;
        }
        let d = dims[dims.len() - 1];
        tensors.push(rest.into_shape_with_order((left, d, 1)).unwrap());
        Self::from_tensors(tensors)
    }

    /// `(|↑…↑⟩ + |↓…↓⟩)/√2` with bond dimension 2.
    pub fn ghz(n_spins: usize) -> Result<Self> {
        if n_spins < 2 {
            return Err(Error::Config(format!("GHZ state needs >= 2 spins, got {n_spins}")));
        }
        let one = c64::new(1.0, 0.0);
        let mut tensors = Vec::with_capacity(n_spins);
        let mut first = Array3::zeros((1, 2, 2));
        first[(0, 0, 0)] = c64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        first[(0, 1, 1)] = c64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        tensors.push(first);
        for _ in 1..n_spins - 1 {
            let mut t = Array3::zeros((2, 2, 2));
            t[(0, 0, 0)] = one;
            t[(1, 1, 1)] = one;
            tensors.push(t);
        }
        let mut last = Array3::zeros((2, 2, 1));
        last[(0, 0, 0)] = one;
        last[(1, 1, 0)] = one;
        tensors.push(last);
        Self::from_tensors(tensors)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn phys_dims(&self) -> &[usize] {
        &self.phys_dims
    }

    /// Original index of the physical leg currently sitting at each position.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn position_of(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    pub fn site_tensor(&self, site: usize) -> &Array3<c64> {
        &self.sites[site]
    }

    pub fn bond_weights(&self) -> &[Array1<f64>] {
        &self.bonds
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.bonds.iter().map(|b| b.len()).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bonds.iter().map(|b| b.len()).max().unwrap_or(1)
    }

    /// Accumulated logarithm of norms stripped by normalization. The physical
    /// vector is `exp(log_norm) · to_dense()`.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    /// Folds an external scale factor `exp(delta)` into the stored norm.
    pub fn add_log_norm(&mut self, delta: f64) {
        self.log_norm += delta;
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites() {
            return Err(Error::Index {
                site,
                len: self.n_sites(),
            });
        }
        Ok(())
    }

    fn check_pair(&self, site: usize) -> Result<()> {
        if site + 1 >= self.n_sites() {
            return Err(Error::Index {
                site: site + 1,
                len: self.n_sites(),
            });
        }
        Ok(())
    }

    /// Applies a `d×d` operator to one site. Non-unitary operators mark the
    /// gauge as stale.
    pub fn apply_single_site_gate(&mut self, site: usize, gate: &CMat) -> Result<()> {
        self.check_site(site)?;
        let d = self.phys_dims[site];
        if gate.dim() != (d, d) {
            return Err(Error::Gate(format!(
                "single-site gate is {:?}, site {site} has dimension {d}",
                gate.dim()
            )));
        }
        let (a, _, b) = self.sites[site].dim();
        let mut out = Array3::zeros((a, d, b));
        for alpha in 0..a {
            let updated = gate.dot(&self.sites[site].index_axis(Axis(0), alpha));
            out.index_axis_mut(Axis(0), alpha).assign(&updated);
        }
        self.sites[site] = out;
        if linalg::unitarity_residual(gate) > UNITARY_TOL {
            self.canonical = false;
        }
        Ok(())
    }

    /// Applies a `(p·q)×(p·q)` gate to sites `site, site+1` and re-splits
    /// with a truncated SVD. Returns the discarded weight.
    pub fn apply_two_site_gate(&mut self, site: usize, gate: &CMat, policy: &TruncationPolicy) -> Result<f64> {
        self.apply_pair(site, Some(gate), SwapOrder::None, policy)
    }

    /// Exchanges the physical legs of `site` and `site+1`.
    pub fn swap_sites(&mut self, site: usize, policy: &TruncationPolicy) -> Result<f64> {
        self.apply_pair(site, None, SwapOrder::After, policy)
    }

    /// General two-site update: optional gate combined with an optional swap,
    /// followed by one truncated SVD.
    pub fn apply_pair(
        &mut self,
        site: usize,
        gate: Option<&CMat>,
        swap: SwapOrder,
        policy: &TruncationPolicy,
    ) -> Result<f64> {
        self.check_pair(site)?;
        let (a, p, m) = self.sites[site].dim();
        let (_, q, b) = self.sites[site + 1].dim();

        let left = self.sites[site].view().into_shape_with_order((a * p, m)).unwrap();
        let right = self.sites[site + 1].view().into_shape_with_order((m, q * b)).unwrap();
        let mut theta = left.dot(&right).into_shape_with_order((a, p, q, b)).unwrap();
        let (mut dl, mut dr) = (p, q);

        let swapped = swap != SwapOrder::None;
        if swap == SwapOrder::Before {
            theta = permute_pair(theta);
            std::mem::swap(&mut dl, &mut dr);
        }
        let mut unitary = true;
        if let Some(g) = gate {
            let n = dl * dr;
            if g.dim() != (n, n) {
                return Err(Error::Gate(format!(
                    "two-site gate is {:?}, sites {site},{} need {n}x{n}",
                    g.dim(),
                    site + 1
                )));
            }
            linalg::ensure_finite(g, "two-site gate")?;
            theta = apply_to_pair(theta, g);
            unitary = linalg::unitarity_residual(g) <= UNITARY_TOL;
        }
        if swap == SwapOrder::After {
            theta = permute_pair(theta);
            std::mem::swap(&mut dl, &mut dr);
        }

        let bare = theta.into_shape_with_order((a * dl, dr * b)).unwrap();
        let weighted = if site == 0 {
            bare.clone()
        } else {
            let lam = &self.bonds[site - 1];
            let mut w = bare.clone();
            for (row, mut r) in w.rows_mut().into_iter().enumerate() {
                r *= c64::new(lam[row / dl], 0.0);
            }
            w
        };
        let svd = linalg::truncated_svd(&weighted, policy)?;
        let k = svd.s.len();
        let new_left = bare.dot(&linalg::dagger(&svd.vh));

        self.sites[site] = new_left.into_shape_with_order((a, dl, k)).unwrap();
        self.sites[site + 1] = svd.vh.into_shape_with_order((k, dr, b)).unwrap();
        self.bonds[site] = normalize_weights(svd.s);
        if swapped {
            self.phys_dims.swap(site, site + 1);
            self.labels.swap(site, site + 1);
        }
        if !unitary {
            self.canonical = false;
        }
        Ok(svd.discarded_weight)
    }

    /// Restores Vidal form with a left-to-right QR sweep followed by a
    /// right-to-left SVD sweep. Only singular values below
    /// [`NUMERICAL_FLOOR`] are dropped. The state is normalized and its norm
    /// is folded into `log_norm`; returns that norm.
    pub fn canonicalize(&mut self) -> Result<f64> {
        let n = self.n_sites();
        let floor = TruncationPolicy {
            threshold: NUMERICAL_FLOOR,
            max_bond: None,
        };

        let mut carry: Option<CMat> = None;
        for i in 0..n - 1 {
            let t = absorb_left(carry.take(), &self.sites[i]);
            let (a, p, b) = t.dim();
            let (q, r) = linalg::thin_qr(&t.into_shape_with_order((a * p, b)).unwrap())?;
            let k = q.ncols();
            self.sites[i] = q.into_shape_with_order((a, p, k)).unwrap();
            carry = Some(r);
        }
        self.sites[n - 1] = absorb_left(carry.take(), &self.sites[n - 1]);

        let mut carry: Option<CMat> = None;
        for i in (1..n).rev() {
            let t = absorb_right(&self.sites[i], carry.take());
            let (a, p, b) = t.dim();
            let mat = t.into_shape_with_order((a, p * b)).unwrap();
            let svd = linalg::truncated_svd(&mat, &floor)?;
            let k = svd.s.len();
            carry = Some(scale_cols(&svd.u, svd.s.view()));
            self.sites[i] = svd.vh.into_shape_with_order((k, p, b)).unwrap();
            self.bonds[i - 1] = normalize_weights(svd.s);
        }
        let first = absorb_right(&self.sites[0], carry.take());
        let norm = first.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateState);
        }
        self.sites[0] = first / c64::new(norm, 0.0);
        self.log_norm += norm.ln();
        self.canonical = true;
        Ok(norm)
    }

    /// Largest violation of the Vidal gauge conditions:
    /// `Σ_s B^s B^s† = I` (right isometry) and
    /// `Σ_s B^s† diag(λ_{i-1}²) B^s = diag(λ_i²)` (left environment).
    pub fn gauge_residual(&self) -> f64 {
        let n = self.n_sites();
        let mut worst = 0.0f64;
        for i in 0..n {
            let (a, p, b) = self.sites[i].dim();
            let t = &self.sites[i];
            let as_rows = t.view().into_shape_with_order((a, p * b)).unwrap();
            let right = as_rows.dot(&linalg::dagger(&as_rows)) - linalg::identity(a);
            worst = worst.max(linalg::max_abs(&right));

            let lam_left: Array1<f64> = if i == 0 {
                Array1::from_elem(1, 1.0)
            } else {
                self.bonds[i - 1].clone()
            };
            let lam_right: Array1<f64> = if i == n - 1 {
                Array1::from_elem(1, 1.0)
            } else {
                self.bonds[i].clone()
            };
            let mut env = CMat::zeros((b, b));
            for s in 0..p {
                let bs = t.slice(s![.., s, ..]);
                let weighted = scale_rows_view(bs, lam_left.mapv(|x| x * x).view());
                env = env + linalg::dagger(&bs).dot(&weighted);
            }
            let target = CMat::from_diag(&lam_right.mapv(|x| c64::new(x * x, 0.0)));
            worst = worst.max(linalg::max_abs(&(env - target)));
        }
        worst
    }

    pub fn bond_entropies(&self) -> Result<BondSpectrum> {
        if !self.canonical {
            return Err(Error::StaleGauge);
        }
        Ok(BondSpectrum::from_values(self.bonds.clone()))
    }

    /// Reduced density matrix of the physical leg with the given label,
    /// normalized to unit trace.
    pub fn reduced_density(&self, label: usize) -> Result<CMat> {
        if !self.canonical {
            let mut fresh = self.clone();
            fresh.canonicalize()?;
            return fresh.reduced_density(label);
        }
        let site = self.position_of(label).ok_or(Error::Index {
            site: label,
            len: self.n_sites(),
        })?;
        let t = &self.sites[site];
        let (a, p, _) = t.dim();
        let weights: Array1<f64> = if site == 0 {
            Array1::from_elem(1, 1.0)
        } else {
            self.bonds[site - 1].clone()
        };
        // ρ[s, s'] = Σ_{α,β} λ_α² B[α,s,β] B*[α,s',β]
        let mut rho = CMat::zeros((p, p));
        for alpha in 0..a {
            let block = t.index_axis(Axis(0), alpha);
            let w = weights[alpha] * weights[alpha];
            rho = rho + block.dot(&linalg::dagger(&block)).mapv(|x| x * w);
        }
        let trace: f64 = (0..p).map(|s| rho[(s, s)].re).sum();
        if !(trace > 0.0) {
            return Err(Error::DegenerateState);
        }
        let rho = rho / c64::new(trace, 0.0);
        Ok((&rho + &linalg::dagger(&rho)) * c64::new(0.5, 0.0))
    }

    /// Reduced density of the site labelled 0 (the spin in spin-boson runs).
    pub fn reduced_spin_density(&self) -> Result<CMat> {
        self.reduced_density(0)
    }

    /// Contracts the chain into a dense vector in the current site order,
    /// without the `exp(log_norm)` factor.
    pub fn to_dense(&self) -> Array1<c64> {
        let mut acc: Array2<c64> = Array2::from_elem((1, 1), c64::new(1.0, 0.0));
        for t in &self.sites {
            let (a, p, b) = t.dim();
            let rows = acc.nrows();
            let mat = t.view().into_shape_with_order((a, p * b)).unwrap();
            acc = acc.dot(&mat).into_shape_with_order((rows * p, b)).unwrap();
        }
        acc.into_shape_with_order(self.phys_dims.iter().product::<usize>())
            .unwrap()
    }
}

fn absorb_left(carry: Option<CMat>, t: &Array3<c64>) -> Array3<c64> {
    match carry {
        None => t.clone(),
        Some(c) => {
            let (a, p, b) = t.dim();
            let mat = t.view().into_shape_with_order((a, p * b)).unwrap();
            let out = c.dot(&mat);
            let k = c.nrows();
            out.into_shape_with_order((k, p, b)).unwrap()
        }
    }
}

fn absorb_right(t: &Array3<c64>, carry: Option<CMat>) -> Array3<c64> {
    match carry {
        None => t.clone(),
        Some(c) => {
            let (a, p, b) = t.dim();
            let mat = t.view().into_shape_with_order((a * p, b)).unwrap();
            let out = mat.dot(&c);
            let k = c.ncols();
            out.into_shape_with_order((a, p, k)).unwrap()
        }
    }
}

/// `(a, p, q, b) -> (a, q, p, b)`
fn permute_pair(theta: ndarray::Array4<c64>) -> ndarray::Array4<c64> {
    theta.permuted_axes([0, 2, 1, 3]).as_standard_layout().into_owned()
}

fn apply_to_pair(theta: ndarray::Array4<c64>, gate: &CMat) -> ndarray::Array4<c64> {
    let (a, p, q, b) = theta.dim();
    let flat = theta.into_shape_with_order((a, p * q, b)).unwrap();
    let mut out = Array3::zeros((a, p * q, b));
    for alpha in 0..a {
        let updated = gate.dot(&flat.index_axis(Axis(0), alpha));
        out.index_axis_mut(Axis(0), alpha).assign(&updated);
    }
    out.into_shape_with_order((a, p, q, b)).unwrap()
}

fn scale_rows(m: &CMat, s: ndarray::ArrayView1<f64>) -> CMat {
    scale_rows_view(m.view(), s)
}

fn scale_rows_view(m: ArrayView2<c64>, s: ndarray::ArrayView1<f64>) -> CMat {
    let mut out = m.to_owned();
    for (mut row, &x) in out.rows_mut().into_iter().zip(s.iter()) {
        row *= c64::new(x, 0.0);
    }
    out
}

fn scale_cols(m: &CMat, s: ndarray::ArrayView1<f64>) -> CMat {
    let mut out = m.clone();
    for (mut col, &x) in out.columns_mut().into_iter().zip(s.iter()) {
        col *= c64::new(x, 0.0);
    }
    out
}
