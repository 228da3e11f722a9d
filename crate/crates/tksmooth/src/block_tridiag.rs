//! Symmetric positive definite block-tridiagonal systems.
//!
//! The curvature matrices assembled by the smoothing objectives couple each
//! time step only to its neighbours, so they are symmetric block tridiagonal:
//! `N` diagonal blocks of size `n x n` plus `N - 1` subdiagonal blocks (the
//! superdiagonal is implied by symmetry). A blockwise Cholesky recursion
//! factors and solves such systems in `O(n^3 N)` operations, which is what
//! makes each smoother iteration linear in the trajectory length.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A vector split into consecutive blocks, one per time step.
///
/// Blocks may have different lengths (measurement residuals use per-stage
/// dimensions); the solver-facing operations require uniform block size and
/// check it at the call site.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    blocks: Vec<DVector<f64>>,
}

impl BlockVector {
    pub fn new(blocks: Vec<DVector<f64>>) -> Self {
        Self { blocks }
    }

    /// `count` blocks of `dim` zeros each.
    pub fn zeros(dim: usize, count: usize) -> Self {
        Self {
            blocks: vec![DVector::zeros(dim); count],
        }
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Sum of the block lengths.
    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn block(&self, k: usize) -> &DVector<f64> {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut DVector<f64> {
        &mut self.blocks[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.blocks.iter()
    }

    /// Euclidean inner product over all blocks. Panics on shape mismatch;
    /// callers pair vectors produced for the same trajectory.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "block count mismatch in dot");
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    /// Euclidean norm over all blocks.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self + t * other`, blockwise.
    pub fn add_scaled(&self, t: f64, other: &Self) -> Self {
        assert_eq!(
            self.len(),
            other.len(),
            "block count mismatch in add_scaled"
        );
        Self {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    /// All blocks concatenated into one dense vector.
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.total_len());
        let mut at = 0;
        for b in &self.blocks {
            out.rows_mut(at, b.len()).copy_from(b);
            at += b.len();
        }
        out
    }
}

/// Symmetric block-tridiagonal matrix with uniform block dimension.
///
/// Stores the diagonal blocks `C_1 .. C_N` and the subdiagonal blocks
/// `A_2 .. A_N`, where `A_k` sits at block row `k`, block column `k - 1`.
/// The superdiagonal blocks are `A_k^T` by symmetry and are never stored.
/// Diagonal blocks are expected to be symmetric; only their lower triangles
/// are read during factorization.
#[derive(Debug, Clone)]
pub struct BlockTridiagonalMatrix {
    dim: usize,
    diag: Vec<DMatrix<f64>>,
    sub: Vec<DMatrix<f64>>,
}

impl BlockTridiagonalMatrix {
    /// Builds the matrix from `N >= 1` diagonal blocks and `N - 1`
    /// subdiagonal blocks, all `n x n`.
    pub fn new(diag: Vec<DMatrix<f64>>, sub: Vec<DMatrix<f64>>) -> Result<Self> {
        let count = diag.len();
        if count == 0 {
            return Err(Error::DimensionMismatch {
                what: "block-tridiagonal diagonal block count",
                expected: 1,
                got: 0,
            });
        }
        if sub.len() + 1 != count {
            return Err(Error::DimensionMismatch {
                what: "block-tridiagonal subdiagonal block count",
                expected: count - 1,
                got: sub.len(),
            });
        }
        let dim = diag[0].nrows();
        for b in diag.iter().chain(sub.iter()) {
            if b.nrows() != dim || b.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    what: "block-tridiagonal block dimension",
                    expected: dim,
                    got: if b.nrows() != dim {
                        b.nrows()
                    } else {
                        b.ncols()
                    },
                });
            }
        }
        Ok(Self { dim, diag, sub })
    }

    /// Block dimension `n`.
    pub fn block_dim(&self) -> usize {
        self.dim
    }

    /// Number of diagonal blocks `N`.
    pub fn num_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn diag_block(&self, k: usize) -> &DMatrix<f64> {
        &self.diag[k]
    }

    /// Subdiagonal block coupling block row `k + 1` to block column `k`.
    pub fn sub_block(&self, k: usize) -> &DMatrix<f64> {
        &self.sub[k]
    }

    fn check_operand(&self, v: &BlockVector, what: &'static str) -> Result<()> {
        if v.len() != self.num_blocks() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.num_blocks(),
                got: v.len(),
            });
        }
        for b in v.iter() {
            if b.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: self.dim,
                    got: b.len(),
                });
            }
        }
        Ok(())
    }

    /// Matrix-vector product `M v`, using the symmetry for the superdiagonal.
    pub fn multiply(&self, v: &BlockVector) -> Result<BlockVector> {
        self.check_operand(v, "block-tridiagonal multiply operand")?;
        let count = self.num_blocks();
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let mut y = &self.diag[k] * v.block(k);
            if k > 0 {
                y += &self.sub[k - 1] * v.block(k - 1);
            }
            if k + 1 < count {
                y += self.sub[k].tr_mul(v.block(k + 1));
            }
            out.push(y);
        }
        Ok(BlockVector::new(out))
    }

    /// Blockwise Cholesky factorization `M = L L^T`.
    ///
    /// `L` is block lower bidiagonal: lower-triangular blocks `L_k` on the
    /// diagonal and dense blocks `M_k` on the subdiagonal, computed by the
    /// Schur-complement recursion
    ///
    /// ```text
    /// L_1 = chol(C_1),
    /// M_k = A_k L_{k-1}^{-T},          k = 2..N,
    /// L_k = chol(C_k - M_k M_k^T).
    /// ```
    ///
    /// Fails with [`Error::NotPositiveDefinite`] on the first non-positive
    /// pivot (exact sign test, no regularization).
    pub fn factor(&self) -> Result<BlockCholeskyFactor> {
        let count = self.num_blocks();
        let mut diag_l = Vec::with_capacity(count);
        let mut sub = Vec::with_capacity(count.saturating_sub(1));
        for k in 0..count {
            let mut pivot = self.diag[k].clone();
            if k > 0 {
                let prev_l: &DMatrix<f64> = &diag_l[k - 1];
                // M_k L_{k-1}^T = A_k  <=>  L_{k-1} M_k^T = A_k^T.
                let m_t = prev_l
                    .solve_lower_triangular(&self.sub[k - 1].transpose())
                    .expect("Cholesky factors have positive diagonals");
                let m = m_t.transpose();
                pivot -= &m * m.transpose();
                sub.push(m);
            }
            let chol =
                nalgebra::Cholesky::new(pivot).ok_or_else(|| Error::NotPositiveDefinite {
                    context: format!("diagonal pivot block {} of {count}", k + 1),
                })?;
            diag_l.push(chol.unpack());
        }
        Ok(BlockCholeskyFactor {
            dim: self.dim,
            diag_l,
            sub,
        })
    }
}

/// The factor `L` from [`BlockTridiagonalMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BlockCholeskyFactor {
    dim: usize,
    /// Lower-triangular diagonal blocks `L_k`.
    diag_l: Vec<DMatrix<f64>>,
    /// Dense subdiagonal blocks `M_k` (index `k - 1` holds `M_{k+1}`).
    sub: Vec<DMatrix<f64>>,
}

impl BlockCholeskyFactor {
    pub fn block_dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.diag_l.len()
    }

    /// Solves `L L^T d = rhs` by forward then backward block substitution.
    pub fn solve(&self, rhs: &BlockVector) -> Result<BlockVector> {
        if rhs.len() != self.num_blocks() {
            return Err(Error::DimensionMismatch {
                what: "block-tridiagonal solve right-hand side",
                expected: self.num_blocks(),
                got: rhs.len(),
            });
        }
        for b in rhs.iter() {
            if b.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "block-tridiagonal solve right-hand side",
                    expected: self.dim,
                    got: b.len(),
                });
            }
        }
        let count = self.num_blocks();
        // Forward: L y = rhs.
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(count);
        for k in 0..count {
            let mut r = rhs.block(k).clone();
            if k > 0 {
                r -= &self.sub[k - 1] * &y[k - 1];
            }
            let yk = self.diag_l[k]
                .solve_lower_triangular(&r)
                .expect("Cholesky factors have positive diagonals");
            y.push(yk);
        }
        // Backward: L^T d = y.
        let mut d = vec![DVector::zeros(self.dim); count];
        for k in (0..count).rev() {
            let mut r = y[k].clone();
            if k + 1 < count {
                r -= self.sub[k].tr_mul(&d[k + 1]);
            }
            d[k] = self.diag_l[k]
                .tr_solve_lower_triangular(&r)
                .expect("Cholesky factors have positive diagonals");
        }
        Ok(BlockVector::new(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, proptest};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Dense assembly used only as a test oracle.
    fn assemble_dense(m: &BlockTridiagonalMatrix) -> DMatrix<f64> {
        let n = m.block_dim();
        let count = m.num_blocks();
        let mut full = DMatrix::zeros(n * count, n * count);
        for k in 0..count {
            full.view_mut((k * n, k * n), (n, n))
                .copy_from(m.diag_block(k));
            if k + 1 < count {
                let a = m.sub_block(k);
                full.view_mut(((k + 1) * n, k * n), (n, n)).copy_from(a);
                full.view_mut((k * n, (k + 1) * n), (n, n))
                    .copy_from(&a.transpose());
            }
        }
        full
    }

    /// Random strictly diagonally dominant (hence SPD) instance.
    fn random_spd(n: usize, count: usize, rng: &mut impl Rng) -> BlockTridiagonalMatrix {
        let mut sub = Vec::new();
        for _ in 1..count {
            sub.push(DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)));
        }
        let mut diag = Vec::new();
        for k in 0..count {
            let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let mut d: DMatrix<f64> = 0.5 * (&s + s.transpose());
            // Dominate each row over both neighbouring blocks and itself.
            let mut bound = d.abs().column_sum().max();
            if k > 0 {
                bound += sub[k - 1].abs().column_sum().max();
            }
            if k + 1 < count {
                bound += sub[k].abs().column_sum().max();
            }
            for i in 0..n {
                d[(i, i)] += bound + rng.gen_range(0.1..2.0);
            }
            diag.push(d);
        }
        BlockTridiagonalMatrix::new(diag, sub).unwrap()
    }

    fn random_rhs(n: usize, count: usize, rng: &mut impl Rng) -> BlockVector {
        BlockVector::new(
            (0..count)
                .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0)))
                .collect(),
        )
    }

    #[test]
    fn multiply_scalar_blocks() {
        let m = BlockTridiagonalMatrix::new(
            vec![
                DMatrix::from_element(1, 1, 2.0),
                DMatrix::from_element(1, 1, 2.0),
                DMatrix::from_element(1, 1, 2.0),
            ],
            vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            ],
        )
        .unwrap();
        let v = BlockVector::new(vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
        ]);
        let y = m.multiply(&v).unwrap();
        assert_eq!(y.flatten().as_slice(), &[3.0, 4.0, 3.0]);
    }

    #[test]
    fn solve_single_block() {
        let m =
            BlockTridiagonalMatrix::new(vec![DMatrix::from_element(1, 1, 2.0)], vec![]).unwrap();
        let f = m.factor().unwrap();
        let d = f
            .solve(&BlockVector::new(vec![DVector::from_element(1, 4.0)]))
            .unwrap();
        approx::assert_relative_eq!(d.flatten()[0], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn solve_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[1usize, 2, 4] {
            for &count in &[1usize, 2, 10, 100] {
                for _ in 0..3 {
                    let m = random_spd(n, count, &mut rng);
                    let rhs = random_rhs(n, count, &mut rng);
                    let d = m.factor().unwrap().solve(&rhs).unwrap();

                    let dense = assemble_dense(&m);
                    let exact = dense
                        .lu()
                        .solve(&rhs.flatten())
                        .expect("oracle solve failed");
                    let diff = (d.flatten() - &exact).norm() / exact.norm().max(1.0);
                    assert!(diff <= 1e-10, "n={n} N={count}: rel diff {diff:e}");

                    let residual = (m.multiply(&d).unwrap().flatten() - rhs.flatten()).norm()
                        / rhs.flatten().norm().max(1.0);
                    assert!(residual <= 1e-10, "n={n} N={count}: residual {residual:e}");
                }
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        // 2-block system whose second Schur complement is negative.
        let m = BlockTridiagonalMatrix::new(
            vec![
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
            ],
            vec![DMatrix::from_element(1, 1, 2.0)],
        )
        .unwrap();
        match m.factor() {
            Err(Error::NotPositiveDefinite { context }) => {
                assert!(context.contains("block 2"), "context: {context}")
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn shape_validation() {
        assert!(BlockTridiagonalMatrix::new(vec![], vec![]).is_err());
        assert!(BlockTridiagonalMatrix::new(
            vec![DMatrix::zeros(2, 2)],
            vec![DMatrix::zeros(2, 2)]
        )
        .is_err());
        assert!(BlockTridiagonalMatrix::new(
            vec![DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)],
            vec![DMatrix::zeros(2, 2)]
        )
        .is_err());

        let m = BlockTridiagonalMatrix::new(
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            vec![DMatrix::zeros(2, 2)],
        )
        .unwrap();
        assert!(m.multiply(&BlockVector::zeros(2, 3)).is_err());
        assert!(m.multiply(&BlockVector::zeros(1, 2)).is_err());
        let f = m.factor().unwrap();
        assert!(f.solve(&BlockVector::zeros(2, 1)).is_err());
    }

    #[test]
    fn factor_solve_cost_scales_linearly_in_block_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let small = random_spd(2, 100, &mut rng);
        let large = random_spd(2, 1000, &mut rng);
        let rhs_small = random_rhs(2, 100, &mut rng);
        let rhs_large = random_rhs(2, 1000, &mut rng);

        let time = |m: &BlockTridiagonalMatrix, r: &BlockVector| {
            let mut best = f64::INFINITY;
            for _ in 0..5 {
                let start = std::time::Instant::now();
                let d = m.factor().unwrap().solve(r).unwrap();
                std::hint::black_box(d);
                best = best.min(start.elapsed().as_secs_f64());
            }
            best
        };
        // Warm up allocators before timing.
        time(&small, &rhs_small);
        let t_small = time(&small, &rhs_small);
        let t_large = time(&large, &rhs_large);
        assert!(
            t_large < 15.0 * t_small.max(1e-6),
            "10x blocks took {:.1}x the time",
            t_large / t_small
        );
    }

    proptest! {
        #[test]
        fn prop_solve_accuracy(seed in 0u64..1000, n in 1usize..=4, count in 1usize..=12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_spd(n, count, &mut rng);
            let rhs = random_rhs(n, count, &mut rng);
            let d = m.factor().unwrap().solve(&rhs).unwrap();
            let residual = (m.multiply(&d).unwrap().flatten() - rhs.flatten()).norm()
                / rhs.flatten().norm().max(1.0);
            prop_assert!(residual <= 1e-10);
        }

        #[test]
        fn prop_solve_is_linear(seed in 0u64..1000, n in 1usize..=3, count in 1usize..=8, alpha in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_spd(n, count, &mut rng);
            let r1 = random_rhs(n, count, &mut rng);
            let r2 = random_rhs(n, count, &mut rng);
            let f = m.factor().unwrap();
            let combined = f.solve(&r1.add_scaled(alpha, &r2)).unwrap();
            let separate = f.solve(&r1).unwrap().add_scaled(alpha, &f.solve(&r2).unwrap());
            let diff = (combined.flatten() - separate.flatten()).norm()
                / separate.flatten().norm().max(1.0);
            prop_assert!(diff <= 1e-9);
        }
    }
}
