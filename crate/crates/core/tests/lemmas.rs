mod common;

use common::{expected_projector, jacobi_svd, naive_bcirc, naive_unfold, psd_eigenvalues};
use tblockgs::analysis;
use tblockgs::oracle::{least_norm_solve, pinv_apply, range_split};
use tblockgs::sampling::{seeded_rng, BlockSet};
use tblockgs::synth::gaussian_tensor;
use tblockgs::tprod;

const TRIALS: u64 = 50;

#[test]
fn operator_norm_sandwich() {
    let mut rng = seeded_rng(101);
    for _ in 0..TRIALS {
        let m = gaussian_tensor(7, 4, 3, &mut rng);
        let y = gaussian_tensor(4, 3, 3, &mut rng);
        let s = jacobi_svd(&naive_bcirc(&m)).values;
        let (smax, smin) = (s[0], *s.last().unwrap());
        let lhs = tprod(&m, &y).unwrap().frob_norm_sq();
        let ysq = y.frob_norm_sq();
        assert!(smin * smin * ysq <= lhs * (1.0 + 1e-12));
        assert!(lhs <= smax * smax * ysq * (1.0 + 1e-12));
        // The crate's spectrum agrees with the Jacobi oracle.
        assert!((analysis::sigma_max_sq(&m) - smax * smax).abs() <= 1e-9 * smax * smax);
        assert!((analysis::sigma_min_sq(&m) - smin * smin).abs() <= 1e-9 * smax * smax);
    }
}

#[test]
fn expected_projector_sandwich_by_enumeration() {
    let mut rng = seeded_rng(102);
    for trial in 0..TRIALS {
        let (rows, cols) = if trial % 2 == 0 { (8, 6) } else { (6, 6) };
        let a = gaussian_tensor(rows, cols, 2, &mut rng);
        let m = gaussian_tensor(rows, 3, 2, &mut rng);
        let blocks = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        let weights = [0.2, 0.3, 0.5];
        let e = expected_projector(&a, &blocks, &weights);
        let eig = psd_eigenvalues(&e);
        let (lmax, lmin) = (eig[0], *eig.last().unwrap());
        let mm = naive_unfold(&m);
        // E||P M||^2 by enumerating every block.
        let mut expected = 0.0;
        for (tau, w) in blocks.iter().zip(weights) {
            let block = a.column_block(tau).unwrap();
            let p = common::projector(&naive_bcirc(&block));
            expected += w * (p * &mm).norm_squared();
        }
        let msq = mm.norm_squared();
        assert!(lmin * msq <= expected * (1.0 + 1e-10) + 1e-12);
        assert!(expected <= lmax * msq * (1.0 + 1e-10));
        let set = BlockSet::new(cols, blocks.clone(), weights.to_vec()).unwrap();
        let ours = analysis::expected_projector(&a, &set).unwrap();
        assert!((ours - &e).norm() <= 1e-9 * e.norm());
    }
}

#[test]
fn pseudoinverse_is_a_left_inverse() {
    let mut rng = seeded_rng(103);
    for _ in 0..TRIALS {
        let a = gaussian_tensor(6, 2, 3, &mut rng);
        let w = gaussian_tensor(2, 4, 3, &mut rng);
        let back = pinv_apply(&a, &tprod(&a, &w).unwrap()).unwrap();
        assert!(back.dist(&w).unwrap() <= 1e-9 * w.frob_norm());
    }
}

#[test]
fn error_transfer_bound() {
    let mut rng = seeded_rng(104);
    for _ in 0..TRIALS {
        let a = gaussian_tensor(9, 4, 3, &mut rng);
        let b = gaussian_tensor(9, 2, 3, &mut rng);
        let x_star = least_norm_solve(&a, &b).unwrap().x_star;
        let x = gaussian_tensor(4, 2, 3, &mut rng);
        let diff = x.sub(&x_star).unwrap();
        let smin = *jacobi_svd(&naive_bcirc(&a)).values.last().unwrap();
        // sigma_max(bcirc(A^+)) = 1 / sigma_min(bcirc(A)).
        let pinv_sq = 1.0 / (smin * smin);
        let lhs = diff.frob_norm_sq();
        let rhs = pinv_sq * tprod(&a, &diff).unwrap().frob_norm_sq();
        assert!(lhs <= rhs * (1.0 + 1e-10));
        let ours = analysis::pinv_sigma_max_sq(&a);
        assert!((ours - pinv_sq).abs() <= 1e-8 * pinv_sq);
    }
}

#[test]
fn range_split_is_orthogonal() {
    let mut rng = seeded_rng(105);
    for trial in 0..TRIALS {
        // Alternate tall and wide-but-rank-deficient operators.
        let a = if trial % 2 == 0 {
            gaussian_tensor(8, 3, 3, &mut rng)
        } else {
            let u = gaussian_tensor(8, 2, 3, &mut rng);
            let v = gaussian_tensor(2, 5, 3, &mut rng);
            tprod(&u, &v).unwrap()
        };
        let y = gaussian_tensor(8, 2, 3, &mut rng);
        let split = range_split(&a, &y).unwrap();
        let scale = y.frob_norm_sq();
        let ip = split.y_range.inner(&split.y_perp).unwrap();
        assert!(ip.abs() <= 1e-9 * scale, "trial {trial}: {ip} vs {scale}");
        assert!(split.y_range.add(&split.y_perp).unwrap().dist(&y).unwrap() <= 1e-12 * y.frob_norm().max(1.0));
        let at_perp = tprod(&a.conj_transpose(), &split.y_perp).unwrap();
        assert!(at_perp.frob_norm() <= 1e-9 * a.frob_norm() * y.frob_norm(), "trial {trial}: {} vs {} {}", at_perp.frob_norm(), a.frob_norm(), y.frob_norm());
        // Y_range equals A X‡.
        let ax = tprod(&a, &least_norm_solve(&a, &y).unwrap().x_star).unwrap();
        assert!(ax.dist(&split.y_range).unwrap() <= 1e-10 * y.frob_norm());
    }
}
