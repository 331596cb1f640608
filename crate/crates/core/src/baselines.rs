//! Exact linear detectors (MMSE/ZF), constellation slicing, and a
//! brute-force ML search for small instances.
//!
//! The linear detectors work in the complex domain on half-size matrices:
//! x̂ solves (H̃ᴴH̃ + σ_v²I)·x̂ = H̃ᴴỹ (ZF drops the regularizer) via an
//! instrumented Cholesky factorization, with the Hermitian Gram matrix
//! accumulated triangle-only. Every real multiplication on the numerical
//! path is counted under the shared convention in [`crate::metrics`].

use crate::altmin::DetectorResult;
use crate::metrics::OpCounter;
use crate::model::{Constellation, MimoSystem};
use crate::Error;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Which linear filter to apply before slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearDetectorKind {
    Mmse,
    Zf,
}

/// Per-coordinate nearest-amplitude slicing; exact midpoint ties go to the
/// more negative amplitude.
pub fn slice(x_real: &[f64], c: &Constellation) -> Vec<f64> {
    x_real.iter().map(|&v| c.nearest(v)).collect()
}

/// Linear detection with an exact solve of the regularized normal equations.
pub fn linear_detect(
    sys: &MimoSystem,
    kind: LinearDetectorKind,
    c: &Constellation,
    counter: &mut OpCounter,
) -> Result<DetectorResult, Error> {
    let start = counter.real_mults();
    let n_t = sys.n_t;
    let n_r = sys.n_r;
    let h = &sys.h_complex;
    let reg = match kind {
        LinearDetectorKind::Mmse => sys.noise_var_complex,
        LinearDetectorKind::Zf => 0.0,
    };

    let y: Vec<Complex64> =
        (0..n_r).map(|k| Complex64::new(sys.y_real[k], sys.y_real[k + n_r])).collect();

    // Lower triangle of G = HᴴH + reg·I, column-major packed per column j
    // (rows j..n_t). Diagonal entries are real sums |h|², off-diagonal
    // entries are full complex dots.
    let mut g = vec![Complex64::ZERO; n_t * n_t];
    let at = |i: usize, j: usize| j * n_t + i;
    for j in 0..n_t {
        let colj = h.col(j);
        let d: f64 = colj.iter().map(|z| z.norm_sqr()).sum();
        counter.add_mults(2 * n_r as u64);
        g[at(j, j)] = Complex64::new(d + reg, 0.0);
        for i in (j + 1)..n_t {
            let coli = h.col(i);
            let mut acc = Complex64::ZERO;
            for (a, b) in coli.iter().zip(colj) {
                acc += a.conj() * b;
            }
            counter.add_mults(4 * n_r as u64);
            g[at(i, j)] = acc;
        }
    }

    // b = Hᴴy.
    let mut b = Vec::with_capacity(n_t);
    for i in 0..n_t {
        let mut acc = Complex64::ZERO;
        for (a, yk) in h.col(i).iter().zip(&y) {
            acc += a.conj() * yk;
        }
        counter.add_mults(4 * n_r as u64);
        b.push(acc);
    }

    // In-place Cholesky G = L·Lᴴ on the packed lower triangle; pivots are
    // real and must stay positive.
    for j in 0..n_t {
        let mut d = g[at(j, j)].re;
        for k in 0..j {
            d -= g[at(j, k)].norm_sqr();
        }
        counter.add_mults(2 * j as u64);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let pivot = d.sqrt();
        counter.add_sqrts(1);
        g[at(j, j)] = Complex64::new(pivot, 0.0);
        for i in (j + 1)..n_t {
            let mut s = g[at(i, j)];
            for k in 0..j {
                s -= g[at(i, k)] * g[at(j, k)].conj();
            }
            counter.add_mults(4 * j as u64);
            g[at(i, j)] = Complex64::new(s.re / pivot, s.im / pivot);
            counter.add_mults(2);
        }
    }

    // Forward then adjoint back substitution.
    let mut z = vec![Complex64::ZERO; n_t];
    for i in 0..n_t {
        let mut s = b[i];
        for (k, zk) in z.iter().enumerate().take(i) {
            s -= g[at(i, k)] * zk;
        }
        counter.add_mults(4 * i as u64);
        let pivot = g[at(i, i)].re;
        z[i] = Complex64::new(s.re / pivot, s.im / pivot);
        counter.add_mults(2);
    }
    let mut xc = vec![Complex64::ZERO; n_t];
    for i in (0..n_t).rev() {
        let mut s = z[i];
        for (k, xk) in xc.iter().enumerate().skip(i + 1) {
            s -= g[at(k, i)].conj() * xk;
        }
        counter.add_mults(4 * (n_t - 1 - i) as u64);
        let pivot = g[at(i, i)].re;
        xc[i] = Complex64::new(s.re / pivot, s.im / pivot);
        counter.add_mults(2);
    }

    let mut x_hat_real = Vec::with_capacity(2 * n_t);
    x_hat_real.extend(xc.iter().map(|v| v.re));
    x_hat_real.extend(xc.iter().map(|v| v.im));
    let x_hat_sliced = slice(&x_hat_real, c);

    Ok(DetectorResult {
        x_hat_real,
        x_hat_sliced,
        iterations: 1,
        converged: true,
        v_trace: None,
        multiply_count: counter.real_mults() - start,
    })
}

/// Candidate cap for the exhaustive search: (√M)^(2N_t) = M^(N_t).
pub const ML_CANDIDATE_LIMIT: u128 = 1 << 20;

/// Exhaustive maximum-likelihood detection over the real alphabet lattice.
///
/// Candidates are enumerated in ascending lexicographic order by a
/// depth-first walk that keeps a per-level residual, so ties resolve to the
/// lexicographically smallest vector and no long incremental-update chains
/// accumulate rounding drift.
pub fn ml_bruteforce(
    sys: &MimoSystem,
    c: &Constellation,
    counter: &mut OpCounter,
) -> Result<DetectorResult, Error> {
    let start = counter.real_mults();
    let dims = 2 * sys.n_t;
    let side = c.alphabet.len() as u128;
    let candidates = side.saturating_pow(dims as u32);
    if candidates > ML_CANDIDATE_LIMIT {
        return Err(Error::MlTooLarge { candidates, limit: ML_CANDIDATE_LIMIT });
    }

    let two_nr = 2 * sys.n_r;
    // residuals[d] holds y − Σ_{i<d} h_i·x_i for the current prefix.
    let mut residuals = vec![vec![0.0; two_nr]; dims + 1];
    residuals[0].copy_from_slice(&sys.y_real);
    let mut digits = vec![0usize; dims];
    let mut best_digits = vec![0usize; dims];
    let mut best_cost = f64::INFINITY;

    let mut level = 0usize;
    loop {
        if level == dims {
            let cost: f64 = residuals[dims].iter().map(|r| r * r).sum();
            counter.add_mults(two_nr as u64);
            // Strict improvement keeps the first (lexicographically
            // smallest) candidate on exact ties.
            if cost < best_cost {
                best_cost = cost;
                best_digits.copy_from_slice(&digits);
            }
            // Backtrack to the deepest level with an amplitude left.
            loop {
                if level == 0 {
                    let x_hat: Vec<f64> =
                        best_digits.iter().map(|&d| c.alphabet[d]).collect();
                    return Ok(DetectorResult {
                        x_hat_real: x_hat.clone(),
                        x_hat_sliced: x_hat,
                        iterations: 1,
                        converged: true,
                        v_trace: None,
                        multiply_count: counter.real_mults() - start,
                    });
                }
                level -= 1;
                if digits[level] + 1 < side as usize {
                    digits[level] += 1;
                    break;
                }
                digits[level] = 0;
            }
        }
        // Extend the prefix: residuals[level+1] = residuals[level] − h·a.
        let a = c.alphabet[digits[level]];
        let (head, tail) = residuals.split_at_mut(level + 1);
        let src = &head[level];
        let dst = &mut tail[0];
        for ((d, &s), &h) in dst.iter_mut().zip(src).zip(sys.h_real.col(level)) {
            *d = s - h * a;
        }
        counter.add_mults(two_nr as u64);
        level += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat::CMat;
    use crate::metrics::count_scope;
    use crate::model::{build_constellation, realize_system, RngStream};
    use approx::assert_relative_eq;

    fn system(seed: u64, n_t: usize, n_r: usize, snr_db: f64, m: u32) -> MimoSystem {
        let c = build_constellation(m).unwrap();
        let mut rng = RngStream::new(seed, 0);
        realize_system(n_t, n_r, &c, snr_db, &mut rng).unwrap()
    }

    #[test]
    fn slice_is_idempotent() {
        let c = build_constellation(16).unwrap();
        let x = [-1.2, -0.4, 0.0, 0.2, 0.31, 0.62, 0.95, 2.0];
        let once = slice(&x, &c);
        let twice = slice(&once, &c);
        assert_eq!(once, twice);
        for v in &once {
            assert!(c.alphabet.contains(v));
        }
    }

    #[test]
    fn mmse_identity_channel_shrinkage() {
        // H̃ = I (2×2), σ_v² = 1, ỹ = (2, 0): x̂ = y/(1+1) = (1, 0).
        let c = build_constellation(4).unwrap();
        let h = CMat::from_fn(2, 2, |r, col| {
            if r == col {
                num_complex::Complex64::new(1.0, 0.0)
            } else {
                num_complex::Complex64::ZERO
            }
        });
        let mut sys =
            MimoSystem::from_parts(h, vec![0.0; 4], vec![0.0; 4], 1.0, 0.0).unwrap();
        sys.y_real = vec![2.0, 0.0, 0.0, 0.0];
        let mut counter = count_scope("mmse");
        let r = linear_detect(&sys, LinearDetectorKind::Mmse, &c, &mut counter).unwrap();
        assert_relative_eq!(r.x_hat_real[0], 1.0, max_relative = 1e-14);
        for &v in &r.x_hat_real[1..] {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn mmse_approaches_zf_as_noise_vanishes() {
        let c = build_constellation(4).unwrap();
        let mut sys = system(7, 3, 3, 10.0, 4);
        sys.noise_var_complex = 1e-9;
        let mut c1 = count_scope("mmse");
        let mmse = linear_detect(&sys, LinearDetectorKind::Mmse, &c, &mut c1).unwrap();
        let mut c2 = count_scope("zf");
        let zf = linear_detect(&sys, LinearDetectorKind::Zf, &c, &mut c2).unwrap();
        for (a, b) in mmse.x_hat_real.iter().zip(&zf.x_hat_real) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        // Same instrumented path, so identical counts.
        assert_eq!(mmse.multiply_count, zf.multiply_count);
    }

    #[test]
    fn zf_recovers_noiseless_square_system() {
        let c = build_constellation(4).unwrap();
        let sys = system(11, 4, 4, f64::INFINITY, 4);
        let mut counter = count_scope("zf");
        let r = linear_detect(&sys, LinearDetectorKind::Zf, &c, &mut counter).unwrap();
        for (a, b) in r.x_hat_real.iter().zip(&sys.x_true_real) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(r.x_hat_sliced, sys.x_true_real);
    }

    #[test]
    fn zf_rejects_rank_deficient_channel() {
        // Duplicate columns with ‖h‖² = 4: the second Cholesky pivot is
        // exactly 4 − (4/2)² = 0 with no rounding slack.
        let c = build_constellation(4).unwrap();
        let h = CMat::from_fn(2, 2, |_, _| num_complex::Complex64::new(1.0, 1.0));
        let sys = MimoSystem::from_parts(h, vec![0.5; 4], vec![0.0; 4], 0.0, 10.0).unwrap();
        let mut counter = count_scope("zf");
        match linear_detect(&sys, LinearDetectorKind::Zf, &c, &mut counter) {
            Err(Error::NotPositiveDefinite { index: 1, pivot }) => assert!(pivot <= 0.0),
            other => panic!("expected rank failure, got {other:?}"),
        }
        // MMSE with positive noise variance stays solvable.
        let sys2 = MimoSystem::from_parts(
            CMat::from_fn(2, 2, |_, _| num_complex::Complex64::new(1.0, 1.0)),
            vec![0.5; 4],
            vec![0.0; 4],
            1.0,
            10.0,
        )
        .unwrap();
        let mut c2 = count_scope("mmse");
        assert!(linear_detect(&sys2, LinearDetectorKind::Mmse, &c, &mut c2).is_ok());
    }

    #[test]
    fn mmse_count_matches_hand_audit() {
        // Gram 2·N_t²·N_r, rhs 4·N_t·N_r, Cholesky
        // 2·N_t(N_t−1) + (2/3)·N_t(N_t−1)(N_t−2), solves 4·N_t², and N_t
        // square roots.
        let c = build_constellation(4).unwrap();
        for (n_t, n_r) in [(2usize, 4usize), (4, 8), (8, 16)] {
            let sys = system(40 + n_t as u64, n_t, n_r, 10.0, 4);
            let mut counter = count_scope("mmse");
            let r = linear_detect(&sys, LinearDetectorKind::Mmse, &c, &mut counter).unwrap();
            let (nt, nr) = (n_t as u64, n_r as u64);
            let expect = 2 * nt * nt * nr
                + 4 * nt * nr
                + 2 * nt * (nt - 1)
                + 2 * nt * (nt - 1) * (nt - 2) / 3
                + 4 * nt * nt;
            assert_eq!(r.multiply_count, expect);
            assert_eq!(counter.sqrts(), nt);
        }
    }

    #[test]
    fn ml_enumerates_expected_candidate_count() {
        // QPSK with N_t = 2: (√4)^(2·2) = 16 real candidate vectors, one
        // leaf residual evaluation each.
        let c = build_constellation(4).unwrap();
        let sys = system(55, 2, 4, 8.0, 4);
        let mut counter = count_scope("ml");
        ml_bruteforce(&sys, &c, &mut counter).unwrap();
        // Leaf evaluations cost 2N_r each; tree edges cost 2N_r per visited
        // node. With side s = 2 and depth 4 the edge count is
        // 16 + 8 + 4 + 2 = 30.
        let leaves = 16u64;
        let edges = 30u64;
        let two_nr = 2 * sys.n_r as u64;
        assert_eq!(counter.real_mults(), (leaves + edges) * two_nr);
    }

    #[test]
    fn ml_recovers_noiseless_instance() {
        let c = build_constellation(4).unwrap();
        let sys = system(60, 3, 5, f64::INFINITY, 4);
        let mut counter = count_scope("ml");
        let r = ml_bruteforce(&sys, &c, &mut counter).unwrap();
        assert_eq!(r.x_hat_sliced, sys.x_true_real);
    }

    #[test]
    fn ml_residual_beats_linear_detectors() {
        let c4 = build_constellation(4).unwrap();
        for seed in 0..25 {
            let sys = system(100 + seed, 2, 3, 4.0, 4);
            let mut cm = count_scope("ml");
            let ml = ml_bruteforce(&sys, &c4, &mut cm).unwrap();
            let res = |x: &[f64]| -> f64 {
                let hx = sys.h_real.matvec(x);
                sys.y_real.iter().zip(&hx).map(|(y, v)| (y - v) * (y - v)).sum()
            };
            let ml_res = res(&ml.x_hat_sliced);
            for kind in [LinearDetectorKind::Mmse, LinearDetectorKind::Zf] {
                let mut cl = count_scope("lin");
                let lin = linear_detect(&sys, kind, &c4, &mut cl).unwrap();
                assert!(ml_res <= res(&lin.x_hat_sliced) + 1e-9);
            }
        }
    }

    #[test]
    fn ml_guard_rejects_large_instances() {
        let c = build_constellation(16).unwrap();
        let sys = system(200, 6, 6, 10.0, 16);
        let mut counter = count_scope("ml");
        match ml_bruteforce(&sys, &c, &mut counter) {
            Err(Error::MlTooLarge { candidates, limit }) => {
                assert_eq!(candidates, (16u128).pow(6));
                assert_eq!(limit, 1 << 20);
            }
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn ml_tie_break_is_lexicographic() {
        // Zero channel column would be degenerate for AltMin but the ML
        // search only needs the residual; craft an exact tie instead:
        // H̃ = [[1, -1]] with y = 0 makes (a, a) candidates tie; the
        // lexicographically smallest is (-l, -l, -l, -l) ... but complex
        // pairing matters, so just assert the invariant directly: the
        // winner's residual is minimal and the first equal-cost candidate
        // in ascending digit order is kept.
        let c = build_constellation(4).unwrap();
        let h = CMat::from_fn(1, 2, |_, col| {
            num_complex::Complex64::new(if col == 0 { 1.0 } else { -1.0 }, 0.0)
        });
        let sys = MimoSystem::from_parts(h, vec![c.l; 4], vec![0.0; 2], 0.0, 0.0).unwrap();
        let mut sys = sys;
        sys.y_real = vec![0.0, 0.0];
        let mut counter = count_scope("ml");
        let r = ml_bruteforce(&sys, &c, &mut counter).unwrap();
        // y = 0 and h_1 = −h_2 in each real dimension: any x with
        // x_1 = x_2 and x_3 = x_4 ties at zero residual; the first such
        // candidate in lexicographic order is all −l.
        assert_eq!(r.x_hat_sliced, vec![-c.l; 4]);
    }
}
