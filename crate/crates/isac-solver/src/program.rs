//! Program description: variable blocks, linear expressions, and the
//! constraint classes accepted by the solver.
//!
//! A [`ConicProgram`] is always a maximization of an affine functional plus
//! optional `-log2(k*exp(eta) + s)` terms, over a variable vector that mixes
//! Hermitian positive semidefinite matrix blocks with free real blocks.
//! Builders are expected to keep the previous iterate feasible, so the solver
//! can run a feasible-start barrier method.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Relative eigenvalue tolerance for sign-definiteness checks on quadratic
/// constraint data.
pub const SIGN_CHECK_TOL: f64 = 1e-9;

/// Handle to a variable block inside a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum BlockKind {
    /// Hermitian PSD matrix of side `n`, parameterized by `n*n` reals:
    /// row-major upper triangle, diagonal first within each (i,j) pair
    /// (one real for i == j, `(re, im)` for i < j).
    HermitianPsd { n: usize },
    /// Unconstrained real vector.
    Free { len: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub kind: BlockKind,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        match self.kind {
            BlockKind::HermitianPsd { n } => n * n,
            BlockKind::Free { len } => len,
        }
    }
}

/// Sparse affine functional `sum coeff * z[idx] + constant`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(idx: usize, coeff: f64) -> Self {
        Self { terms: vec![(idx, coeff)], constant: 0.0 }
    }

    pub fn push(&mut self, idx: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((idx, coeff));
        }
    }

    pub fn add(&mut self, other: &LinExpr, scale: f64) {
        self.constant += scale * other.constant;
        for &(i, c) in &other.terms {
            self.push(i, scale * c);
        }
    }

    pub fn eval(&self, z: &RVec) -> f64 {
        let mut v = self.constant;
        for &(i, c) in &self.terms {
            v += c * z[i];
        }
        v
    }

    /// Accumulate `scale * coefficients` into a dense gradient.
    pub fn accumulate(&self, scale: f64, out: &mut RVec) {
        for &(i, c) in &self.terms {
            out[i] += scale * c;
        }
    }
}

/// Quadratic constraint `1/2 * z_s' P z_s + lin(z) <= 0`, where `z_s` is the
/// restriction of `z` to `support` and `P` is positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadCon {
    pub support: Vec<usize>,
    pub p: RMat,
    pub lin: LinExpr,
}

impl QuadCon {
    pub fn eval(&self, z: &RVec) -> f64 {
        let m = self.support.len();
        let mut quad = 0.0;
        for a in 0..m {
            let za = z[self.support[a]];
            for b in 0..m {
                quad += za * self.p[(a, b)] * z[self.support[b]];
            }
        }
        0.5 * quad + self.lin.eval(z)
    }

    /// Gradient of the constraint function, accumulated into `out`.
    pub fn grad(&self, z: &RVec, scale: f64, out: &mut RVec) {
        let m = self.support.len();
        for a in 0..m {
            let mut g = 0.0;
            for b in 0..m {
                g += self.p[(a, b)] * z[self.support[b]];
            }
            out[self.support[a]] += scale * g;
        }
        self.lin.accumulate(scale, out);
    }
}

/// Constraint `eta >= -ln(u(z))`, i.e. `exp(-eta) <= u(z)` with `u` affine.
/// The variable `eta` must not appear in `u`.
#[derive(Debug, Clone)]
pub struct LogAffineCon {
    pub u: LinExpr,
    pub eta: usize,
}

/// Objective term `-weight * log2(coef * exp(eta) + offset)`.
#[derive(Debug, Clone)]
pub struct LogExpTerm {
    pub weight: f64,
    pub coef: f64,
    pub offset: f64,
    pub eta: usize,
}

/// Optimization sense. Programs built here are always maximizations; the
/// enum exists so reports are unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Maximize,
}

/// A small dense conic program over mixed Hermitian-PSD and free blocks.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub(crate) blocks: Vec<Block>,
    pub(crate) dim: usize,
    pub sense: Sense,
    pub obj_lin: LinExpr,
    pub obj_exp: Vec<LogExpTerm>,
    pub lin_eq: Vec<LinExpr>,
    pub lin_ineq: Vec<LinExpr>,
    pub quad: Vec<QuadCon>,
    pub log_affine: Vec<LogAffineCon>,
}

impl ConicProgram {
    pub fn maximize() -> Self {
        Self {
            blocks: Vec::new(),
            dim: 0,
            sense: Sense::Maximize,
            obj_lin: LinExpr::default(),
            obj_exp: Vec::new(),
            lin_eq: Vec::new(),
            lin_ineq: Vec::new(),
            quad: Vec::new(),
            log_affine: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn add_block(&mut self, kind: BlockKind) -> BlockId {
        let block = Block { kind, offset: self.dim };
        self.dim += block.len();
        self.blocks.push(block);
        BlockId(self.blocks.len() - 1)
    }

    /// Add a Hermitian PSD matrix variable of side `n`.
    pub fn add_hermitian_psd(&mut self, n: usize) -> BlockId {
        assert!(n >= 1, "empty PSD block");
        self.add_block(BlockKind::HermitianPsd { n })
    }

    /// Add a free real vector variable.
    pub fn add_free(&mut self, len: usize) -> BlockId {
        assert!(len >= 1, "empty free block");
        self.add_block(BlockKind::Free { len })
    }

    /// Add a free scalar variable, returning its flat index.
    pub fn add_scalar(&mut self) -> usize {
        let id = self.add_free(1);
        self.blocks[id.0].offset
    }

    /// Flat index of entry `k` of a free block.
    pub fn free_index(&self, id: BlockId, k: usize) -> usize {
        let b = &self.blocks[id.0];
        match b.kind {
            BlockKind::Free { len } => {
                assert!(k < len);
                b.offset + k
            }
            _ => panic!("free_index on a PSD block"),
        }
    }

    pub(crate) fn herm_side(&self, id: BlockId) -> usize {
        match self.blocks[id.0].kind {
            BlockKind::HermitianPsd { n } => n,
            _ => panic!("not a Hermitian block"),
        }
    }

    /// Linear functional `Re tr(C H)` of a Hermitian block, with `C` Hermitian.
    pub fn herm_trace_product(&self, id: BlockId, c: &CMat) -> LinExpr {
        let n = self.herm_side(id);
        assert_eq!(c.nrows(), n);
        assert_eq!(c.ncols(), n);
        let off = self.blocks[id.0].offset;
        let mut expr = LinExpr::default();
        let mut k = off;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    expr.push(k, c[(i, i)].re);
                    k += 1;
                } else {
                    expr.push(k, 2.0 * c[(i, j)].re);
                    expr.push(k + 1, 2.0 * c[(i, j)].im);
                    k += 2;
                }
            }
        }
        expr
    }

    /// Linear functional `tr(H)` of a Hermitian block.
    pub fn herm_trace(&self, id: BlockId) -> LinExpr {
        let n = self.herm_side(id);
        self.herm_trace_product(id, &CMat::identity(n, n))
    }

    /// Maximize objective: affine part.
    pub fn set_objective(&mut self, lin: LinExpr) {
        self.obj_lin = lin;
    }

    /// Add an objective term `-weight * log2(coef * exp(eta) + offset)`.
    pub fn add_objective_logexp(&mut self, term: LogExpTerm) {
        assert!(term.weight >= 0.0 && term.coef >= 0.0 && term.offset > 0.0);
        assert!(term.eta < self.dim);
        self.obj_exp.push(term);
    }

    /// Linear equality `expr(z) = 0`.
    pub fn add_eq(&mut self, expr: LinExpr) {
        self.lin_eq.push(expr);
    }

    /// Linear inequality `expr(z) <= 0`.
    pub fn add_lin_le(&mut self, expr: LinExpr) {
        self.lin_ineq.push(expr);
    }

    /// Convex quadratic constraint `1/2 z_s' P z_s + lin(z) <= 0`.
    /// Panics unless `P` is positive semidefinite within [`SIGN_CHECK_TOL`].
    pub fn add_quad_le(&mut self, support: Vec<usize>, p: RMat, lin: LinExpr) {
        assert_eq!(p.nrows(), support.len());
        assert_eq!(p.ncols(), support.len());
        let sym = 0.5 * (&p + p.transpose());
        let scale = sym.norm().max(1.0);
        let min_eig = sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(
            min_eig >= -SIGN_CHECK_TOL * scale,
            "quadratic constraint tagged convex has min eigenvalue {min_eig:.3e}"
        );
        self.quad.push(QuadCon { support, p: sym, lin });
    }

    /// Concave quadratic constraint `1/2 z_s' S z_s + lin(z) >= 0` with `S`
    /// negative semidefinite; stored negated as a convex constraint.
    pub fn add_quad_ge(&mut self, support: Vec<usize>, s: RMat, lin: LinExpr) {
        let sym = 0.5 * (&s + s.transpose());
        let scale = sym.norm().max(1.0);
        let max_eig = sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            max_eig <= SIGN_CHECK_TOL * scale,
            "quadratic constraint tagged concave has max eigenvalue {max_eig:.3e}"
        );
        let mut neg_lin = LinExpr::default();
        neg_lin.add(&lin, -1.0);
        self.quad.push(QuadCon { support, p: -sym, lin: neg_lin });
    }

    /// Constraint `eta >= -ln(u(z))` with `u` affine and free of `eta`.
    pub fn add_log_affine(&mut self, u: LinExpr, eta: usize) {
        assert!(eta < self.dim);
        assert!(
            u.terms.iter().all(|&(i, _)| i != eta),
            "log-affine RHS must not involve eta"
        );
        self.log_affine.push(LogAffineCon { u, eta });
    }

    /// Objective value (maximization sense) at `z`.
    pub fn objective_value(&self, z: &RVec) -> f64 {
        let mut v = self.obj_lin.eval(z);
        for t in &self.obj_exp {
            v -= t.weight * (t.coef * z[t.eta].exp() + t.offset).log2();
        }
        v
    }

    /// Extract a Hermitian block from a solution vector.
    pub fn hermitian_value(&self, z: &RVec, id: BlockId) -> CMat {
        let n = self.herm_side(id);
        let off = self.blocks[id.0].offset;
        params_to_herm(&z.as_slice()[off..off + n * n], n)
    }

    /// Extract a free block from a solution vector.
    pub fn free_value(&self, z: &RVec, id: BlockId) -> RVec {
        let b = &self.blocks[id.0];
        match b.kind {
            BlockKind::Free { len } => RVec::from_column_slice(&z.as_slice()[b.offset..b.offset + len]),
            _ => panic!("free_value on a PSD block"),
        }
    }

    /// Write a Hermitian initial value into `init`.
    pub fn set_hermitian(&self, init: &mut RVec, id: BlockId, h: &CMat) {
        let n = self.herm_side(id);
        assert_eq!(h.nrows(), n);
        let off = self.blocks[id.0].offset;
        let params = herm_to_params(h);
        init.as_mut_slice()[off..off + n * n].copy_from_slice(&params);
    }

    /// Write a free-block initial value into `init`.
    pub fn set_free(&self, init: &mut RVec, id: BlockId, v: &[f64]) {
        let b = &self.blocks[id.0];
        match b.kind {
            BlockKind::Free { len } => {
                assert_eq!(v.len(), len);
                init.as_mut_slice()[b.offset..b.offset + len].copy_from_slice(v);
            }
            _ => panic!("set_free on a PSD block"),
        }
    }

    pub fn zero_point(&self) -> RVec {
        RVec::zeros(self.dim)
    }

    /// Worst signed violation over all constraint classes (<= 0 is feasible).
    pub fn max_violation(&self, z: &RVec) -> f64 {
        let mut worst: f64 = 0.0;
        for e in &self.lin_eq {
            worst = worst.max(e.eval(z).abs());
        }
        for c in &self.lin_ineq {
            worst = worst.max(c.eval(z));
        }
        for q in &self.quad {
            worst = worst.max(q.eval(z));
        }
        for la in &self.log_affine {
            let u = la.u.eval(z);
            if u <= 0.0 {
                worst = worst.max(-u + 1.0);
            } else {
                worst = worst.max((-z[la.eta]).exp() - u);
            }
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            if let BlockKind::HermitianPsd { n } = b.kind {
                let h = self.hermitian_value(z, BlockId(bi));
                let min_eig = h
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(-min_eig);
                let _ = n;
            }
        }
        worst
    }

    /// One-line structural summary, used by the optional debug dump.
    pub fn summary(&self) -> String {
        let psd: Vec<usize> = self
            .blocks
            .iter()
            .filter_map(|b| match b.kind {
                BlockKind::HermitianPsd { n } => Some(n),
                _ => None,
            })
            .collect();
        format!(
            "dim={} psd_blocks={:?} eq={} lin={} quad={} logaff={} exp_obj={}",
            self.dim,
            psd,
            self.lin_eq.len(),
            self.lin_ineq.len(),
            self.quad.len(),
            self.log_affine.len(),
            self.obj_exp.len()
        )
    }

    /// Dump the program structure to a text file for offline inspection.
    pub fn dump_to_file(&self, path: &std::path::Path) -> std::io::Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.summary())?;
        writeln!(f, "objective linear terms: {}", self.obj_lin.terms.len())?;
        for (k, q) in self.quad.iter().enumerate() {
            writeln!(f, "quad[{k}]: support={:?}", q.support)?;
        }
        Ok(())
    }
}

/// Pack a Hermitian matrix into its real parameter vector.
pub fn herm_to_params(h: &CMat) -> Vec<f64> {
    let n = h.nrows();
    assert_eq!(h.ncols(), n);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in i..n {
            if i == j {
                out.push(h[(i, i)].re);
            } else {
                out.push(h[(i, j)].re);
                out.push(h[(i, j)].im);
            }
        }
    }
    out
}

/// Unpack a real parameter vector into a Hermitian matrix.
pub fn params_to_herm(params: &[f64], n: usize) -> CMat {
    assert_eq!(params.len(), n * n);
    let mut h = CMat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            if i == j {
                h[(i, i)] = Complex64::new(params[k], 0.0);
                k += 1;
            } else {
                let v = Complex64::new(params[k], params[k + 1]);
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
                k += 2;
            }
        }
    }
    h
}
