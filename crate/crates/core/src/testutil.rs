//! Dense reference helpers shared by unit tests. Nothing here touches the
//! MPS code paths.

use ndarray::{Array1, Array3};
use ndarray_linalg::c64;

use crate::linalg::{self, CMat, TruncationPolicy};

struct XorShift(u64);

impl XorShift {
    fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407) | 1)
    }

    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

pub fn random_vector(n: usize, seed: u64) -> Array1<c64> {
    let mut rng = XorShift::new(seed);
    Array1::from_shape_fn(n, |_| c64::new(rng.next(), rng.next()))
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = XorShift::new(seed ^ 0x9e3779b97f4a7c15);
    CMat::from_shape_fn((rows, cols), |_| c64::new(rng.next(), rng.next()))
}

pub fn random_unitary(n: usize, seed: u64) -> CMat {
    let (q, _) = linalg::thin_qr(&random_matrix(n, n, seed)).unwrap();
    q
}

pub fn normalized(v: Array1<c64>) -> Array1<c64> {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v / c64::new(n, 0.0)
}

pub fn inner(a: &Array1<c64>, b: &Array1<c64>) -> c64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `|⟨a|b⟩| / (‖a‖‖b‖)`
pub fn fidelity(a: &Array1<c64>, b: &Array1<c64>) -> f64 {
    let na = inner(a, a).re.sqrt();
    let nb = inner(b, b).re.sqrt();
    inner(a, b).norm() / (na * nb)
}

pub fn dense_kron(a: &Array1<c64>, b: &Array1<c64>) -> Array1<c64> {
    Array1::from_iter(a.iter().flat_map(|x| b.iter().map(move |y| x * y)))
}

fn split(dims: &[usize], site: usize, width: usize) -> (usize, usize, usize) {
    let left: usize = dims[..site].iter().product();
    let mid: usize = dims[site..site + width].iter().product();
    let right: usize = dims[site + width..].iter().product();
    (left, mid, right)
}

pub fn dense_apply_pair(psi: &Array1<c64>, dims: &[usize], site: usize, gate: &CMat) -> Array1<c64> {
    dense_apply_block(psi, dims, site, 2, gate)
}

pub fn dense_apply_single(psi: &Array1<c64>, dims: &[usize], site: usize, gate: &CMat) -> Array1<c64> {
    dense_apply_block(psi, dims, site, 1, gate)
}

fn dense_apply_block(psi: &Array1<c64>, dims: &[usize], site: usize, width: usize, gate: &CMat) -> Array1<c64> {
    let (l, m, r) = split(dims, site, width);
    let mut out = Array1::zeros(psi.len());
    for a in 0..l {
        for b in 0..r {
            for i in 0..m {
                let mut acc = c64::new(0.0, 0.0);
                for j in 0..m {
                    acc += gate[(i, j)] * psi[(a * m + j) * r + b];
                }
                out[(a * m + i) * r + b] = acc;
            }
        }
    }
    out
}

pub fn dense_swap(psi: &Array1<c64>, dims: &[usize], site: usize) -> Array1<c64> {
    let (l, _, r) = split(dims, site, 2);
    let (p, q) = (dims[site], dims[site + 1]);
    let t = psi.clone().into_shape_with_order((l, p, q, r)).unwrap();
    let swapped = t.permuted_axes([0, 2, 1, 3]).as_standard_layout().into_owned();
    swapped.into_shape_with_order(psi.len()).unwrap()
}

pub fn dense_schmidt_values(psi: &Array1<c64>, dims: &[usize], cut: usize) -> Vec<f64> {
    let left: usize = dims[..cut].iter().product();
    let mat = psi.clone().into_shape_with_order((left, psi.len() / left)).unwrap();
    let svd = linalg::truncated_svd(
        &mat,
        &TruncationPolicy {
            threshold: 1e-14,
            max_bond: None,
        },
    )
    .unwrap();
    let norm = svd.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    svd.s.iter().map(|x| x / norm).collect()
}

pub fn dense_partial_trace(psi: &Array1<c64>, dims: &[usize], site: usize) -> CMat {
    let (l, m, r) = split(dims, site, 1);
    let t: Array3<c64> = psi.clone().into_shape_with_order((l, m, r)).unwrap();
    let mut rho = CMat::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let mut acc = c64::new(0.0, 0.0);
            for a in 0..l {
                for b in 0..r {
                    acc += t[(a, i, b)] * t[(a, j, b)].conj();
                }
            }
            rho[(i, j)] = acc;
        }
    }
    let tr: f64 = (0..m).map(|i| rho[(i, i)].re).sum();
    rho / c64::new(tr, 0.0)
}
