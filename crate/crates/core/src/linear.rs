//! Sparse LU for the fixed five-point (or seven-point) pattern of the
//! implicit pseudo-time step. The symbolic factorization and the scratch
//! memory are computed once and reused for every step.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, MatMut, Par};

use crate::error::{Error, Result};

pub(crate) struct PatternLu {
    n: usize,
    symbolic: Option<SymbolicLu<u32>>,
    numeric: NumericLu<u32, f64>,
    factor_mem: MemBuffer,
    solve_mem: MemBuffer,
    triplets: Vec<Triplet<u32, u32, f64>>,
}

fn linear_err(e: impl std::fmt::Debug) -> Error {
    Error::Linear(format!("{e:?}"))
}

impl PatternLu {
    pub(crate) fn new(n: usize) -> Self {
        PatternLu {
            n,
            symbolic: None,
            numeric: NumericLu::new(),
            factor_mem: MemBuffer::new(faer::dyn_stack::StackReq::EMPTY),
            solve_mem: MemBuffer::new(faer::dyn_stack::StackReq::EMPTY),
            triplets: Vec::new(),
        }
    }

    /// Solves `J x = b` in place, `J` given as `(row, col, value)` entries.
    /// The entry pattern must not change between calls.
    pub(crate) fn solve(&mut self, entries: &[(usize, usize, f64)], b: &mut [f64]) -> Result<()> {
        let n = self.n;
        self.triplets.clear();
        self.triplets.extend(entries.iter().map(|&(r, c, x)| Triplet::new(r as u32, c as u32, x)));
        let matrix = SparseColMat::<u32, f64>::try_new_from_triplets(n, n, &self.triplets).map_err(linear_err)?;
        if self.symbolic.is_none() {
            let params = LuSymbolicParams {
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                ..Default::default()
            };
            let symbolic = factorize_symbolic_lu(matrix.symbolic(), params).map_err(linear_err)?;
            self.factor_mem = MemBuffer::new(symbolic.factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default()));
            self.solve_mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
            self.symbolic = Some(symbolic);
        }
        let symbolic = self.symbolic.as_ref().expect("symbolic factorization present");
        let lu = symbolic
            .factorize_numeric_lu(
                &mut self.numeric,
                matrix.as_ref(),
                Par::Seq,
                MemStack::new(&mut self.factor_mem),
                Default::default(),
            )
            .map_err(linear_err)?;
        let rhs = MatMut::from_column_major_slice_mut(b, n, 1);
        lu.solve_in_place_with_conj(Conj::No, rhs, Par::Seq, MemStack::new(&mut self.solve_mem));
        if b.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("sparse LU solve"))
        }
    }
}
