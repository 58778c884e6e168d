//! Small-scale second-order cone programming.
//!
//! Programs are stated over named variable blocks with a linear objective,
//! affine equalities expressing designated blocks as affine functions of
//! other blocks, ellipsoid constraints `‖x‖_M ≤ β`, ball constraints
//! `‖x‖₂ ≤ D`, and halfspaces `⟨a, x⟩ ≤ b` (the last needed by the
//! epigraph form of the sup-norm projection). [`eliminate_equalities`]
//! rewrites a program over its free blocks only, exploiting the triangular
//! structure of the critic's backward chain; [`solve`] runs a log-barrier
//! interior-point method on the reduced program.

mod solver;

pub use solver::{solve, SolveReport, SolveStatus, Tolerances};

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Index of a variable block within a [`ConicProgram`].
pub type BlockId = usize;

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub dim: usize,
}

/// `target = Σ_j M_j · x_{source_j} + constant`.
#[derive(Debug, Clone)]
pub struct AffineEquality {
    pub target: BlockId,
    pub terms: Vec<(BlockId, DMatrix<f64>)>,
    pub constant: DVector<f64>,
}

/// `‖x_block‖_M ≤ radius` with `M` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct EllipsoidConstraint {
    pub block: BlockId,
    pub matrix: DMatrix<f64>,
    pub radius: f64,
}

/// `‖x_block‖₂ ≤ radius`.
#[derive(Debug, Clone)]
pub struct BallConstraint {
    pub block: BlockId,
    pub radius: f64,
}

/// `Σ_j ⟨a_j, x_{block_j}⟩ ≤ bound`.
#[derive(Debug, Clone)]
pub struct HalfspaceConstraint {
    pub terms: Vec<(BlockId, DVector<f64>)>,
    pub bound: f64,
}

/// A conic program over named blocks.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub blocks: Vec<Block>,
    /// Linear objective coefficient per block (`None` = zero).
    pub objective: Vec<Option<DVector<f64>>>,
    pub objective_constant: f64,
    pub equalities: Vec<AffineEquality>,
    pub ellipsoids: Vec<EllipsoidConstraint>,
    pub balls: Vec<BallConstraint>,
    pub halfspaces: Vec<HalfspaceConstraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> BlockId {
        self.blocks.push(Block {
            name: name.into(),
            dim,
        });
        self.objective.push(None);
        self.blocks.len() - 1
    }

    pub fn set_objective(&mut self, block: BlockId, coeffs: DVector<f64>) {
        self.objective[block] = Some(coeffs);
    }

    pub fn add_equality(
        &mut self,
        target: BlockId,
        terms: Vec<(BlockId, DMatrix<f64>)>,
        constant: DVector<f64>,
    ) {
        self.equalities.push(AffineEquality {
            target,
            terms,
            constant,
        });
    }

    pub fn add_ellipsoid(&mut self, block: BlockId, matrix: DMatrix<f64>, radius: f64) {
        self.ellipsoids.push(EllipsoidConstraint {
            block,
            matrix,
            radius,
        });
    }

    pub fn add_ball(&mut self, block: BlockId, radius: f64) {
        self.balls.push(BallConstraint { block, radius });
    }

    pub fn add_halfspace(&mut self, terms: Vec<(BlockId, DVector<f64>)>, bound: f64) {
        self.halfspaces.push(HalfspaceConstraint { terms, bound });
    }

    /// Evaluates the objective on explicit block values.
    pub fn objective_value(&self, values: &BTreeMap<String, DVector<f64>>) -> f64 {
        let mut total = self.objective_constant;
        for (b, coeffs) in self.objective.iter().enumerate() {
            if let Some(c) = coeffs {
                total += c.dot(&values[&self.blocks[b].name]);
            }
        }
        total
    }
}

/// Affine expression of one block in terms of the free variable vector:
/// `value = matrix · x + constant`.
#[derive(Debug, Clone)]
pub struct AffineExpr {
    pub matrix: DMatrix<f64>,
    pub constant: DVector<f64>,
}

impl AffineExpr {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.constant
    }
}

/// One canonical cone of the reduced program:
/// `‖F x + g‖₂ ≤ ⟨f, x⟩ + d`. Ellipsoids and balls have `f = 0`,
/// `d = radius`; halfspaces have an empty `F`.
#[derive(Debug, Clone)]
pub struct Cone {
    pub f_mat: DMatrix<f64>,
    pub g: DVector<f64>,
    pub f_lin: DVector<f64>,
    pub d: f64,
    pub label: String,
}

impl Cone {
    /// `(⟨f,x⟩ + d) − ‖Fx + g‖`; nonnegative on the feasible set.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        let v = self.f_lin.dot(x) + self.d;
        let u = &self.f_mat * x + &self.g;
        v - u.norm()
    }
}

/// A program over free blocks only, with affine reconstruction maps for
/// the eliminated blocks.
#[derive(Debug, Clone)]
pub struct ReducedProgram {
    pub n: usize,
    /// Free block name and its coordinate range within `x`.
    pub free_blocks: Vec<(String, Range<usize>)>,
    pub objective: DVector<f64>,
    pub objective_constant: f64,
    pub cones: Vec<Cone>,
    /// Eliminated block name and its expression in the free variables.
    pub reconstruction: Vec<(String, AffineExpr)>,
}

impl ReducedProgram {
    /// All block values (free and reconstructed) at a free-variable point.
    pub fn block_values(&self, x: &DVector<f64>) -> BTreeMap<String, DVector<f64>> {
        let mut out = BTreeMap::new();
        for (name, range) in &self.free_blocks {
            out.insert(name.clone(), DVector::from(x.rows(range.start, range.len()).clone_owned()));
        }
        for (name, expr) in &self.reconstruction {
            out.insert(name.clone(), expr.eval(x));
        }
        out
    }

    /// Objective at a free-variable point.
    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        self.objective.dot(x) + self.objective_constant
    }

    /// Largest constraint violation at a free-variable point.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.cones
            .iter()
            .map(|c| (-c.margin(x)).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Resolves the affine equalities, returning an equivalent program over
/// the free blocks. Every block may be the target of at most one equality
/// and the substitution graph must be acyclic (the critic's backward chain
/// is triangular). Radii are checked nonnegative here.
pub fn eliminate_equalities(program: &ConicProgram) -> Result<ReducedProgram> {
    let nb = program.blocks.len();
    let mut eq_of: Vec<Option<usize>> = vec![None; nb];
    for (k, eq) in program.equalities.iter().enumerate() {
        if eq_of[eq.target].replace(k).is_some() {
            return Err(Error::Validation(format!(
                "block {} is the target of two equalities",
                program.blocks[eq.target].name
            )));
        }
        if eq.constant.len() != program.blocks[eq.target].dim {
            return Err(Error::Shape(format!(
                "equality constant dim {} != block dim {}",
                eq.constant.len(),
                program.blocks[eq.target].dim
            )));
        }
        for (src, m) in &eq.terms {
            if m.nrows() != program.blocks[eq.target].dim
                || m.ncols() != program.blocks[*src].dim
            {
                return Err(Error::Shape(format!(
                    "equality term {}x{} against blocks of dims {} and {}",
                    m.nrows(),
                    m.ncols(),
                    program.blocks[eq.target].dim,
                    program.blocks[*src].dim
                )));
            }
        }
    }
    for e in &program.ellipsoids {
        if e.radius < 0.0 {
            return Err(Error::Validation("negative ellipsoid radius".into()));
        }
    }
    for b in &program.balls {
        if b.radius < 0.0 {
            return Err(Error::Validation("negative ball radius".into()));
        }
    }

    // Free layout.
    let mut offset = 0usize;
    let mut ranges: Vec<Option<Range<usize>>> = vec![None; nb];
    let mut free_blocks = Vec::new();
    for (b, block) in program.blocks.iter().enumerate() {
        if eq_of[b].is_none() {
            ranges[b] = Some(offset..offset + block.dim);
            free_blocks.push((block.name.clone(), offset..offset + block.dim));
            offset += block.dim;
        }
    }
    let n = offset;

    // Resolve each block to an affine expression of the free vector,
    // detecting cycles along the way.
    fn resolve(
        b: BlockId,
        n: usize,
        program: &ConicProgram,
        eq_of: &[Option<usize>],
        ranges: &[Option<Range<usize>>],
        cache: &mut Vec<Option<AffineExpr>>,
        visiting: &mut Vec<bool>,
    ) -> Result<AffineExpr> {
        if let Some(e) = &cache[b] {
            return Ok(e.clone());
        }
        if visiting[b] {
            return Err(Error::CyclicEqualities(format!(
                "block {} depends on itself",
                program.blocks[b].name
            )));
        }
        visiting[b] = true;
        let dim = program.blocks[b].dim;
        let expr = match eq_of[b] {
            None => {
                let range = ranges[b].clone().expect("free block has a range");
                let mut m = DMatrix::zeros(dim, n);
                for (i, col) in range.enumerate() {
                    m[(i, col)] = 1.0;
                }
                AffineExpr {
                    matrix: m,
                    constant: DVector::zeros(dim),
                }
            }
            Some(k) => {
                let eq = &program.equalities[k];
                let mut m = DMatrix::zeros(dim, n);
                let mut c = eq.constant.clone();
                for (src, coeff) in &eq.terms {
                    let src_expr =
                        resolve(*src, n, program, eq_of, ranges, cache, visiting)?;
                    m += coeff * &src_expr.matrix;
                    c += coeff * &src_expr.constant;
                }
                AffineExpr {
                    matrix: m,
                    constant: c,
                }
            }
        };
        visiting[b] = false;
        cache[b] = Some(expr.clone());
        Ok(expr)
    }

    let mut cache: Vec<Option<AffineExpr>> = vec![None; nb];
    let mut visiting = vec![false; nb];
    for b in 0..nb {
        resolve(b, n, program, &eq_of, &ranges, &mut cache, &mut visiting)?;
    }
    let expr_of = |b: BlockId| cache[b].clone().expect("resolved");

    // Objective through the substitution.
    let mut objective = DVector::zeros(n);
    let mut objective_constant = program.objective_constant;
    for (b, coeffs) in program.objective.iter().enumerate() {
        if let Some(c) = coeffs {
            let e = expr_of(b);
            objective += e.matrix.transpose() * c;
            objective_constant += c.dot(&e.constant);
        }
    }

    // Constraints to canonical cones.
    let mut cones = Vec::new();
    for (i, ell) in program.ellipsoids.iter().enumerate() {
        let chol = nalgebra::Cholesky::new(ell.matrix.clone()).ok_or_else(|| {
            Error::Validation(format!(
                "ellipsoid matrix on block {} is not positive definite",
                program.blocks[ell.block].name
            ))
        })?;
        let lt = chol.l().transpose();
        let e = expr_of(ell.block);
        cones.push(Cone {
            f_mat: &lt * &e.matrix,
            g: &lt * &e.constant,
            f_lin: DVector::zeros(n),
            d: ell.radius,
            label: format!("ellipsoid[{i}]:{}", program.blocks[ell.block].name),
        });
    }
    for (i, ball) in program.balls.iter().enumerate() {
        let e = expr_of(ball.block);
        cones.push(Cone {
            f_mat: e.matrix.clone(),
            g: e.constant.clone(),
            f_lin: DVector::zeros(n),
            d: ball.radius,
            label: format!("ball[{i}]:{}", program.blocks[ball.block].name),
        });
    }
    for (i, hs) in program.halfspaces.iter().enumerate() {
        let mut a = DVector::zeros(n);
        let mut k = 0.0;
        for (b, coeffs) in &hs.terms {
            let e = expr_of(*b);
            a += e.matrix.transpose() * coeffs;
            k += coeffs.dot(&e.constant);
        }
        // ⟨a, x⟩ + k ≤ bound  ⇔  0 ≤ ⟨-a, x⟩ + (bound - k).
        cones.push(Cone {
            f_mat: DMatrix::zeros(0, n),
            g: DVector::zeros(0),
            f_lin: -a,
            d: hs.bound - k,
            label: format!("halfspace[{i}]"),
        });
    }

    let reconstruction = (0..nb)
        .filter(|&b| eq_of[b].is_some())
        .map(|b| (program.blocks[b].name.clone(), expr_of(b)))
        .collect();

    Ok(ReducedProgram {
        n,
        free_blocks,
        objective,
        objective_constant,
        cones,
        reconstruction,
    })
}
