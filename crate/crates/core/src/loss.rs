//! NT-Xent: normalized temperature-scaled cross-entropy loss over a batch of
//! (anchor, positive) pairs, with exact analytic gradients.
//!
//! Rows 2k and 2k+1 of the batch form a positive pair; every sample also acts
//! as the anchor of its pair, so a batch of N rows contributes N ordered
//! anchor->positive terms and each anchor sees N-2 negatives.

use ndarray::{Array2, ArrayView2};

use crate::num::Scalar;

/// Rows may drift off unit norm by at most this much (relative).
pub const UNIT_NORM_TOL: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("batch size {0} is odd; pairs are (2k, 2k+1)")]
    OddBatch(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("row {row} has norm {norm}, expected 1 within {tol}")]
    NonUnitRow { row: usize, norm: f64, tol: f64 },
    #[error("zero vector has no direction")]
    ZeroVector,
}

/// Cosine similarity a.b / (|a||b|).
pub fn cosine_sim<T: Scalar>(a: &[T], b: &[T]) -> Result<T, LossError> {
    let na = norm(a);
    let nb = norm(b);
    if na == T::zero() || nb == T::zero() {
        return Err(LossError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct NtXentOutput<T> {
    pub loss: T,
    /// d(loss)/d(embeddings), same shape as the input batch.
    pub grad: Array2<T>,
}

/// Compute the NT-Xent loss and its gradient with respect to the raw
/// embedding coordinates (the cosine's norm terms are differentiated too, so
/// finite differences on non-renormalized perturbations agree).
///
/// Loss = mean over the N ordered pairs of
/// -log( exp(sim(e_i, e_p)/tau) / sum_{k != i} exp(sim(e_i, e_k)/tau) ).
pub fn nt_xent<T: Scalar>(embeddings: &ArrayView2<T>, tau: T) -> Result<NtXentOutput<T>, LossError> {
    let n = embeddings.nrows();
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    if n % 2 != 0 {
        return Err(LossError::OddBatch(n));
    }
    if tau <= T::zero() {
        return Err(LossError::NonPositiveTemperature(tau.to_f64()));
    }

    let d = embeddings.ncols();
    let rows: Vec<&[T]> = (0..n)
        .map(|i| embeddings.row(i).to_slice().expect("contiguous batch"))
        .collect();

    let norms: Vec<T> = rows.iter().map(|r| norm(r)).collect();
    for (i, &ni) in norms.iter().enumerate() {
        let err = (ni.to_f64() - 1.0).abs();
        if err > UNIT_NORM_TOL {
            return Err(LossError::NonUnitRow {
                row: i,
                norm: ni.to_f64(),
                tol: UNIT_NORM_TOL,
            });
        }
    }

    // Unit directions and the full cosine matrix.
    let units: Vec<Vec<T>> = rows
        .iter()
        .zip(norms.iter())
        .map(|(r, &nv)| r.iter().map(|&x| x / nv).collect())
        .collect();
    let mut sims = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let s = dot(&units[i], &units[j]);
            sims[[i, j]] = s;
            sims[[j, i]] = s;
        }
    }

    // Per-anchor softmax over the N-1 other samples and the loss terms.
    let mut loss = T::zero();
    // m[[i, k]] = d(loss)/d(sims[i,k]) from anchor i's term.
    let mut m = Array2::<T>::zeros((n, n));
    let inv_n_tau = T::one() / (T::from_f64(n as f64) * tau);
    for i in 0..n {
        let pos = i ^ 1;
        let mut max_logit = T::neg_infinity();
        for k in 0..n {
            if k != i {
                let l = sims[[i, k]] / tau;
                if l > max_logit {
                    max_logit = l;
                }
            }
        }
        let mut z = T::zero();
        for k in 0..n {
            if k != i {
                z = z + (sims[[i, k]] / tau - max_logit).exp();
            }
        }
        let lse = max_logit + z.ln();
        loss = loss + lse - sims[[i, pos]] / tau;
        for k in 0..n {
            if k != i {
                let p = (sims[[i, k]] / tau - lse).exp();
                let indicator = if k == pos { T::one() } else { T::zero() };
                m[[i, k]] = (p - indicator) * inv_n_tau;
            }
        }
    }
    loss = loss / T::from_f64(n as f64);

    // Each sims[i,k] feeds both anchor terms; fold the transpose in, then
    // chain through the cosine: ds_ik/de_i = (u_k - s_ik u_i) / |e_i|.
    let mut grad = Array2::<T>::zeros((n, d));
    for i in 0..n {
        for k in 0..n {
            if k == i {
                continue;
            }
            let w = m[[i, k]] + m[[k, i]];
            if w == T::zero() {
                continue;
            }
            let s = sims[[i, k]];
            for c in 0..d {
                grad[[i, c]] += w * (units[k][c] - s * units[i][c]) / norms[i];
            }
        }
    }

    Ok(NtXentOutput { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unit_batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        for mut row in e.rows_mut() {
            let nv = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.mapv_inplace(|v| v / nv);
        }
        e
    }

    /// Independent double-loop evaluation of the loss, no shared code with
    /// the implementation above.
    fn brute_force_loss(e: &Array2<f64>, tau: f64) -> f64 {
        let n = e.nrows();
        let sim = |i: usize, j: usize| {
            let a = e.row(i);
            let b = e.row(j);
            let d: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut total = 0.0;
        for i in 0..n {
            let j = i ^ 1;
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += (sim(i, k) / tau).exp();
                }
            }
            total += -((sim(i, j) / tau).exp() / denom).ln();
        }
        total / n as f64
    }

    #[test]
    fn cosine_of_identical_vectors_is_one() {
        let a = [0.3f64, -0.4, 0.5];
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_orthogonal_unit_vectors_is_zero() {
        let a = [1.0f64, 0.0];
        let b = [0.0f64, 1.0];
        assert_eq!(cosine_sim(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_computed_value() {
        let a = [1.0f64, 0.0];
        let s = 1.0 / 2f64.sqrt();
        let b = [s, s];
        assert!((cosine_sim(&a, &b).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn cosine_of_zero_vector_is_an_error() {
        let a = [0.0f64, 0.0];
        let b = [1.0f64, 0.0];
        assert!(matches!(cosine_sim(&a, &b), Err(LossError::ZeroVector)));
    }

    #[test]
    fn single_pair_batch_has_exactly_zero_loss() {
        let e = random_unit_batch(2, 8, 1);
        let out = nt_xent(&e.view(), 0.05).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn four_identical_embeddings_give_ln_three() {
        let row = {
            let mut v = vec![0.5f64; 4];
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            v
        };
        let e = Array2::from_shape_fn((4, 4), |(_, c)| row[c]);
        let out = nt_xent(&e.view(), 0.05).unwrap();
        assert!((out.loss - 3f64.ln()).abs() < 1e-9, "loss {}", out.loss);
    }

    #[test]
    fn random_batch_matches_the_brute_force_oracle() {
        for seed in 0..5 {
            let e = random_unit_batch(6, 16, seed);
            let tau = 0.05 + 0.01 * seed as f64;
            let out = nt_xent(&e.view(), tau).unwrap();
            let expect = brute_force_loss(&e, tau);
            assert!(
                (out.loss - expect).abs() < 1e-9,
                "seed {seed}: {} vs {expect}",
                out.loss
            );
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let e = random_unit_batch(6, 8, 42);
        let tau = 0.07;
        let out = nt_xent(&e.view(), tau).unwrap();
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for i in 0..e.nrows() {
            for c in 0..e.ncols() {
                let mut ep = e.clone();
                ep[[i, c]] += h;
                let mut em = e.clone();
                em[[i, c]] -= h;
                let fd = (brute_force_loss(&ep, tau) - brute_force_loss(&em, tau)) / (2.0 * h);
                let g = out.grad[[i, c]];
                let rel = (fd - g).abs() / g.abs().max(fd.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-5, "max relative gradient error {max_rel}");
    }

    #[test]
    fn loss_is_nonnegative() {
        for seed in 0..10 {
            let e = random_unit_batch(8, 12, 100 + seed);
            let out = nt_xent(&e.view(), 0.05).unwrap();
            assert!(out.loss >= 0.0);
        }
    }

    #[test]
    fn loss_is_invariant_under_a_common_rotation() {
        let d = 6;
        let e = random_unit_batch(8, d, 9);
        // Gram-Schmidt on a random matrix gives an orthogonal Q.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut q: Vec<Vec<f64>> = Vec::new();
        while q.len() < d {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for u in &q {
                let p: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u.iter()) {
                    *vi -= p * ui;
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv > 1e-6 {
                v.iter_mut().for_each(|x| *x /= nv);
                q.push(v);
            }
        }
        let rotated = Array2::from_shape_fn(e.dim(), |(i, c)| {
            (0..d).map(|k| e[[i, k]] * q[c][k]).sum::<f64>()
        });
        let a = nt_xent(&e.view(), 0.05).unwrap().loss;
        let b = nt_xent(&rotated.view(), 0.05).unwrap().loss;
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn swapping_pair_members_leaves_the_loss_unchanged() {
        let e = random_unit_batch(8, 12, 11);
        let mut swapped = e.clone();
        for k in 0..e.nrows() / 2 {
            for c in 0..e.ncols() {
                swapped[[2 * k, c]] = e[[2 * k + 1, c]];
                swapped[[2 * k + 1, c]] = e[[2 * k, c]];
            }
        }
        let a = nt_xent(&e.view(), 0.05).unwrap().loss;
        let b = nt_xent(&swapped.view(), 0.05).unwrap().loss;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn descent_on_a_frozen_batch_decreases_the_loss() {
        let mut e = random_unit_batch(8, 16, 12);
        let tau = 0.1;
        let mut prev = nt_xent(&e.view(), tau).unwrap().loss;
        for _ in 0..20 {
            let out = nt_xent(&e.view(), tau).unwrap();
            e = &e - &(out.grad * 0.05);
            for mut row in e.rows_mut() {
                let nv = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.mapv_inplace(|v| v / nv);
            }
            let cur = nt_xent(&e.view(), tau).unwrap().loss;
            assert!(cur < prev, "loss went {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn invalid_batches_are_rejected() {
        let e = random_unit_batch(4, 4, 13);
        assert!(matches!(
            nt_xent(&e.view(), 0.0),
            Err(LossError::NonPositiveTemperature(_))
        ));
        let odd = Array2::<f64>::zeros((3, 4));
        assert!(matches!(nt_xent(&odd.view(), 0.1), Err(LossError::OddBatch(3))));
        let mut off = e.clone();
        off[[0, 0]] += 0.5;
        assert!(matches!(
            nt_xent(&off.view(), 0.1),
            Err(LossError::NonUnitRow { row: 0, .. })
        ));
    }

    #[test]
    fn tie_break_reference_values_stay_stable() {
        // ln 3 fixture from the 4-identical case, frozen.
        let e = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let out = nt_xent(&e.view(), 0.5).unwrap();
        assert!((out.loss - 1.0986122886681098).abs() < 1e-12);
    }
}
