//! Dense complex linear-algebra kernels.
//!
//! Everything here operates on `Array2<c64>` and is a pure function of its
//! inputs. SVD, QR and Hermitian eigensolves go through LAPACK; the matrix
//! exponential is a scaling-and-squaring Padé implementation that does not
//! assume Hermiticity, since the transformed-frame gates are non-unitary.

use ndarray::{Array1, Array2, ArrayBase, Data, Ix2, ShapeBuilder};
use ndarray_linalg::{c64, Eigh, FactorizeInto, JobSvd, Solve, SVDDC, UPLO};

use crate::error::{Error, Result};

pub type CMat = Array2<c64>;

/// How singular values are discarded after an SVD.
///
/// `threshold` is relative to the largest singular value. Values with
/// `s_i >= threshold * s_1` are kept (inclusive at the boundary), then at most
/// `max_bond` of them survive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub threshold: f64,
    pub max_bond: Option<usize>,
}

impl TruncationPolicy {
    pub fn new(threshold: f64, max_bond: Option<usize>) -> Result<Self> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(Error::Config(format!(
                "truncation threshold must be finite and >= 0, got {threshold}"
            )));
        }
        if max_bond == Some(0) {
            return Err(Error::Config("max_bond must be >= 1".into()));
        }
        Ok(Self { threshold, max_bond })
    }

    /// Keep every nonzero singular value.
    pub fn lossless() -> Self {
        Self {
            threshold: 0.0,
            max_bond: None,
        }
    }

    /// Number of leading entries of a nonincreasing spectrum to retain.
    pub fn retained(&self, s: &[f64]) -> usize {
        let Some(&s1) = s.first() else { return 0 };
        let cut = self.threshold * s1;
        let mut keep = s.iter().take_while(|&&x| x > 0.0 && x >= cut).count();
        if let Some(cap) = self.max_bond {
            keep = keep.min(cap);
        }
        keep
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            threshold: 1e-5,
            max_bond: None,
        }
    }
}

/// Result of [`truncated_svd`]: `m ≈ u · diag(s) · vh`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: CMat,
    pub s: Array1<f64>,
    /// Conjugate transpose of the right singular vectors (rows orthonormal).
    pub vh: CMat,
    /// Σ(dropped s²) / Σ(all s²).
    pub discarded_weight: f64,
}

pub fn truncated_svd<S>(m: &ArrayBase<S, Ix2>, policy: &TruncationPolicy) -> Result<TruncatedSvd>
where
    S: Data<Elem = c64>,
{
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("empty {rows}x{cols} matrix")));
    }
    ensure_finite(m, "truncated_svd input")?;

    let owned = m.as_standard_layout();
    let (u, s, vh) = owned.svddc(JobSvd::Some)?;
    let (u, vh) = match (u, vh) {
        (Some(u), Some(vh)) => (u, vh),
        _ => return Err(Error::Dimension("LAPACK returned no singular vectors".into())),
    };
    ensure_finite(&u, "singular vectors")?;

    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Err(Error::DegenerateState);
    }
    let keep = policy.retained(s.as_slice().expect("contiguous"));
    let discarded_weight = s.iter().skip(keep).map(|x| x * x).sum::<f64>() / total;

    Ok(TruncatedSvd {
        u: u.slice(ndarray::s![.., ..keep]).to_owned(),
        s: s.slice(ndarray::s![..keep]).to_owned(),
        vh: vh.slice(ndarray::s![..keep, ..]).to_owned(),
        discarded_weight,
    })
}

/// Thin QR factorization `m = q · r` with `q` having orthonormal columns.
pub fn thin_qr<S>(m: &ArrayBase<S, Ix2>) -> Result<(CMat, CMat)>
where
    S: Data<Elem = c64>,
{
    use ndarray_linalg::QR;
    let (q, r) = m.as_standard_layout().qr()?;
    Ok((q, r))
}

/// Kronecker product.
pub fn kron<S1, S2>(a: &ArrayBase<S1, Ix2>, b: &ArrayBase<S2, Ix2>) -> CMat
where
    S1: Data<Elem = c64>,
    S2: Data<Elem = c64>,
{
    ndarray::linalg::kron(a, b)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending,
/// eigenvectors in the columns of the returned matrix.
pub fn eigendecompose_hermitian(m: &CMat) -> Result<(Array1<f64>, CMat)> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::Dimension(format!(
            "expected nonempty square matrix, got {r}x{c}"
        )));
    }
    ensure_finite(m, "eigendecompose_hermitian input")?;
    ensure_hermitian(m, 1e-12)?;
    // LAPACK's Hermitian solver returns conjugated eigenvectors for
    // row-major input, so hand it a column-major copy.
    let mut fortran = CMat::zeros((r, r).f());
    fortran.assign(m);
    let (vals, vecs) = fortran.eigh(UPLO::Lower)?;
    Ok((vals, vecs.as_standard_layout().into_owned()))
}

/// Rejects matrices whose anti-Hermitian part exceeds `tol` (scaled by the
/// largest entry when that exceeds one).
pub fn ensure_hermitian(m: &CMat, tol: f64) -> Result<()> {
    let residual = hermiticity_residual(m);
    let scale = max_abs(m).max(1.0);
    if residual > tol * scale {
        return Err(Error::NotHermitian { residual });
    }
    Ok(())
}

pub fn hermiticity_residual(m: &CMat) -> f64 {
    let (r, c) = m.dim();
    if r != c {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in i..c {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `exp(m)` by scaling and squaring with a diagonal Padé approximant
/// (degree chosen from the 1-norm, up to 13).
pub fn matrix_exponential(m: &CMat) -> Result<CMat> {
    let (n, c) = m.dim();
    if n != c {
        return Err(Error::Dimension(format!(
            "matrix_exponential needs a square matrix, got {n}x{c}"
        )));
    }
    ensure_finite(m, "matrix_exponential input")?;
    if n == 0 {
        return Ok(CMat::zeros((0, 0)));
    }
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(identity(n));
    }

    const THETA: [(usize, f64); 4] = [
        (3, 1.495585217958292e-2),
        (5, 2.53939833006323e-1),
        (7, 9.504178996162932e-1),
        (9, 2.097847961257068),
    ];
    for &(degree, theta) in &THETA {
        if norm <= theta {
            let (u, v) = pade_low(m, degree);
            return pade_solve(&u, &v);
        }
    }

    const THETA13: f64 = 5.371920351148152;
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = m.mapv(|x| x / 2f64.powi(squarings));
    let (u, v) = pade13(&scaled);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

fn pade_low(a: &CMat, degree: usize) -> (CMat, CMat) {
    let b: &[f64] = match degree {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree {degree}"),
    };
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut power = identity(n);
    let mut u_even = CMat::zeros((n, n));
    let mut v = CMat::zeros((n, n));
    for k in (0..=degree).step_by(2) {
        v.scaled_add(c64::new(b[k], 0.0), &power);
        u_even.scaled_add(c64::new(b[k + 1], 0.0), &power);
        power = power.dot(&a2);
    }
    (a.dot(&u_even), v)
}

fn pade13(a: &CMat) -> (CMat, CMat) {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let id = identity(n);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let r = |x: f64| c64::new(x, 0.0);

    let inner_u = &a6 * r(B[13]) + &a4 * r(B[11]) + &a2 * r(B[9]);
    let u = a.dot(&(a6.dot(&inner_u) + &a6 * r(B[7]) + &a4 * r(B[5]) + &a2 * r(B[3]) + &id * r(B[1])));
    let inner_v = &a6 * r(B[12]) + &a4 * r(B[10]) + &a2 * r(B[8]);
    let v = a6.dot(&inner_v) + &a6 * r(B[6]) + &a4 * r(B[4]) + &a2 * r(B[2]) + &id * r(B[0]);
    (u, v)
}

/// Solves `(v - u) x = (v + u)` column by column.
fn pade_solve(u: &CMat, v: &CMat) -> Result<CMat> {
    let p = v + u;
    let q = v - u;
    let lu = q.factorize_into()?;
    let n = p.nrows();
    let mut out = CMat::zeros((n, n));
    for j in 0..n {
        let col = lu.solve(&p.column(j).to_owned())?;
        out.column_mut(j).assign(&col);
    }
    Ok(out)
}

pub fn identity(n: usize) -> CMat {
    CMat::from_diag_elem(n, c64::new(1.0, 0.0))
}

pub fn dagger<S>(m: &ArrayBase<S, Ix2>) -> CMat
where
    S: Data<Elem = c64>,
{
    m.t().mapv(|x| x.conj())
}

pub fn one_norm(m: &CMat) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn frobenius_norm<S>(m: &ArrayBase<S, Ix2>) -> f64
where
    S: Data<Elem = c64>,
{
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|G†G - I|`.
pub fn unitarity_residual(g: &CMat) -> f64 {
    let n = g.ncols();
    max_abs(&(dagger(g).dot(g) - identity(n)))
}

pub fn ensure_finite<S, D>(m: &ArrayBase<S, D>, what: &'static str) -> Result<()>
where
    S: Data<Elem = c64>,
    D: ndarray::Dimension,
{
    if m.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Pauli matrices and ladder operators in the `{|↑⟩, |↓⟩}` basis with
/// `σz|↑⟩ = +|↑⟩`.
pub mod pauli {
    use super::CMat;
    use ndarray::array;
    use ndarray_linalg::c64;

    const O: c64 = c64::new(0.0, 0.0);
    const I: c64 = c64::new(1.0, 0.0);

    pub fn sigma_x() -> CMat {
        array![[O, I], [I, O]]
    }

    pub fn sigma_y() -> CMat {
        array![[O, c64::new(0.0, -1.0)], [c64::new(0.0, 1.0), O]]
    }

    pub fn sigma_z() -> CMat {
        array![[I, O], [O, -I]]
    }

    /// `|↑⟩⟨↓|`
    pub fn sigma_plus() -> CMat {
        array![[O, I], [O, O]]
    }

    /// `|↓⟩⟨↑|`
    pub fn sigma_minus() -> CMat {
        array![[O, O], [I, O]]
    }
}

#[cfg(test)]
mod tests {
    use super::pauli::*;
    use super::*;
    use ndarray::array;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    /// Deterministic pseudo-random complex matrix (no RNG dependency).
    fn test_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        CMat::from_shape_fn((rows, cols), |_| c64::new(next(), next()))
    }

    #[test]
    fn svd_identity_keeps_both_values() {
        let svd = truncated_svd(&identity(2), &TruncationPolicy::new(1e-5, None).unwrap()).unwrap();
        assert_eq!(svd.s.len(), 2);
        assert!((svd.s[0] - 1.0).abs() < 1e-15 && (svd.s[1] - 1.0).abs() < 1e-15);
        assert_eq!(svd.discarded_weight, 0.0);
    }

    #[test]
    fn svd_drops_value_below_cutoff() {
        let m = array![[c(1.0), c(0.0)], [c(0.0), c(1e-8)]];
        let svd = truncated_svd(&m, &TruncationPolicy::new(1e-5, None).unwrap()).unwrap();
        assert_eq!(svd.s.len(), 1);
        assert!((svd.discarded_weight - 1e-16).abs() < 1e-20);
    }

    #[test]
    fn svd_cutoff_is_inclusive() {
        let m = array![[c(1.0), c(0.0)], [c(0.0), c(0.5)]];
        let svd = truncated_svd(&m, &TruncationPolicy::new(0.5, None).unwrap()).unwrap();
        assert_eq!(svd.s.len(), 2);
    }

    #[test]
    fn svd_respects_bond_cap() {
        let m = test_matrix(6, 5, 3);
        let svd = truncated_svd(&m, &TruncationPolicy::new(0.0, Some(2)).unwrap()).unwrap();
        assert_eq!(svd.s.len(), 2);
        assert_eq!(svd.u.ncols(), 2);
        assert_eq!(svd.vh.nrows(), 2);
    }

    #[test]
    fn svd_lossless_reconstruction() {
        let m = test_matrix(8, 8, 11);
        let svd = truncated_svd(&m, &TruncationPolicy::lossless()).unwrap();
        let sd = CMat::from_diag(&svd.s.mapv(c));
        let rebuilt = svd.u.dot(&sd).dot(&svd.vh);
        assert!(frobenius_norm(&(rebuilt - &m)) <= 1e-12 * frobenius_norm(&m));
        assert!(svd.s.windows(2).into_iter().all(|w| w[0] >= w[1]));
        assert!(max_abs(&(dagger(&svd.u).dot(&svd.u) - identity(8))) < 1e-12);
    }

    #[test]
    fn svd_errors() {
        let empty = CMat::zeros((0, 3));
        assert!(matches!(
            truncated_svd(&empty, &TruncationPolicy::lossless()),
            Err(Error::Dimension(_))
        ));
        let mut bad = identity(2);
        bad[(0, 1)] = c64::new(f64::NAN, 0.0);
        assert!(matches!(
            truncated_svd(&bad, &TruncationPolicy::lossless()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::new(-1.0, None).is_err());
        assert!(TruncationPolicy::new(1e-5, Some(0)).is_err());
        assert!(TruncationPolicy::new(f64::NAN, None).is_err());
    }

    #[test]
    fn qr_reconstructs() {
        for (r, c) in [(6, 3), (3, 6), (4, 4)] {
            let m = test_matrix(r, c, 21);
            let (q, rr) = thin_qr(&m).unwrap();
            assert_eq!(q.ncols(), r.min(c));
            assert!(max_abs(&(q.dot(&rr) - &m)) < 1e-13);
            assert!(max_abs(&(dagger(&q).dot(&q) - identity(r.min(c)))) < 1e-13);
        }
    }

    #[test]
    fn expm_zero_is_identity() {
        assert_eq!(matrix_exponential(&CMat::zeros((2, 2))).unwrap(), identity(2));
    }

    #[test]
    fn expm_i_pi_sigma_x() {
        let m = sigma_x().mapv(|x| x * c64::new(0.0, std::f64::consts::PI));
        let e = matrix_exponential(&m).unwrap();
        assert!(max_abs(&(e + identity(2))) < 1e-14);
    }

    #[test]
    fn expm_diagonal_closed_form() {
        let e = matrix_exponential(&sigma_z().mapv(|x| x * 0.5)).unwrap();
        assert!((e[(0, 0)].re - 0.5f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)].re - (-0.5f64).exp()).abs() < 1e-14);
        assert!(e[(0, 1)].norm() < 1e-16);
        // frozen decimal values
        assert!((e[(0, 0)].re - 1.64872).abs() < 1e-5);
        assert!((e[(1, 1)].re - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn expm_matches_eigen_route_across_norm_regimes() {
        // exp(-iHt) for Hermitian H, cross-checked against V e^{-iΛt} V†.
        let a = test_matrix(6, 6, 5);
        let h = (&a + &dagger(&a)).mapv(|x| x * 0.5);
        let (vals, vecs) = eigendecompose_hermitian(&h).unwrap();
        for t in [1e-3, 0.05, 0.4, 1.5, 7.0, 40.0] {
            let g = matrix_exponential(&h.mapv(|x| x * c64::new(0.0, -t))).unwrap();
            let phases = CMat::from_diag(&vals.mapv(|e| c64::new(0.0, -e * t).exp()));
            let reference = vecs.dot(&phases).dot(&dagger(&vecs));
            assert!(max_abs(&(&g - &reference)) < 1e-12 * (1.0 + t), "t = {t}");
            assert!(unitarity_residual(&g) < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn expm_non_hermitian_generator_is_not_unitary() {
        let beta = 0.5;
        let e = matrix_exponential(&sigma_z().mapv(|x| x * beta)).unwrap();
        let em = matrix_exponential(&sigma_z().mapv(|x| x * -beta)).unwrap();
        let spin = e.dot(&sigma_x()).dot(&em);
        let gate = matrix_exponential(&spin.mapv(|x| x * c64::new(0.0, -0.3))).unwrap();
        let svd = truncated_svd(&gate, &TruncationPolicy::lossless()).unwrap();
        assert!((svd.s[0] - 1.0).abs() > 1e-3);
        assert!(unitarity_residual(&gate) > 1e-3);
    }

    #[test]
    fn expm_rejects_non_square() {
        assert!(matches!(
            matrix_exponential(&CMat::zeros((2, 3))),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn kron_basics() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        let z = kron(&sigma_z(), &identity(2));
        let expected = CMat::from_diag(&array![c(1.0), c(1.0), c(-1.0), c(-1.0)]);
        assert_eq!(z, expected);
    }

    #[test]
    fn kron_mixed_product() {
        let (a, b, cc, d) = (
            test_matrix(2, 2, 1),
            test_matrix(2, 2, 2),
            test_matrix(2, 2, 3),
            test_matrix(2, 2, 4),
        );
        let lhs = kron(&a, &b).dot(&kron(&cc, &d));
        let rhs = kron(&a.dot(&cc), &b.dot(&d));
        assert!(max_abs(&(lhs - rhs)) < 1e-14);
    }

    #[test]
    fn eigh_pauli() {
        let (vals, _) = eigendecompose_hermitian(&sigma_z()).unwrap();
        assert_eq!(vals.to_vec(), vec![-1.0, 1.0]);
        let (vals, vecs) = eigendecompose_hermitian(&sigma_x()).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-15 && (vals[1] - 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (|↑⟩ + |↓⟩)/√2 for +1, up to a global phase
        let plus = vecs.column(1);
        assert!(((plus[0] * plus[1].conj()).re - 0.5).abs() < 1e-14);
        assert!((plus[0].norm() - s).abs() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_random_hermitian() {
        let a = test_matrix(6, 6, 9);
        let h = &a + &dagger(&a);
        let (vals, vecs) = eigendecompose_hermitian(&h).unwrap();
        assert!(vals.windows(2).into_iter().all(|w| w[0] <= w[1]));
        let rebuilt = vecs.dot(&CMat::from_diag(&vals.mapv(c))).dot(&dagger(&vecs));
        assert!(max_abs(&(rebuilt - h)) < 1e-10);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        assert!(matches!(
            eigendecompose_hermitian(&sigma_plus()),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn ladder_operators_combine_to_sigma_x() {
        assert_eq!(sigma_plus() + sigma_minus(), sigma_x());
        assert!(hermiticity_residual(&sigma_y()) == 0.0);
    }

    proptest::proptest! {
        #[test]
        fn discarded_weight_bounded_by_threshold(seed in 0u64..500, threshold in 0.0f64..0.6) {
            let m = test_matrix(5, 7, seed);
            let policy = TruncationPolicy::new(threshold, None).unwrap();
            let svd = truncated_svd(&m, &policy).unwrap();
            let count = 5.0;
            proptest::prop_assert!(svd.discarded_weight <= threshold * threshold * count + 1e-15);
            proptest::prop_assert!(svd.s.iter().all(|&x| x >= threshold * svd.s[0] && x > 0.0));
        }
    }
}
