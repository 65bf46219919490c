//! A small reverse-mode differentiation tape over dense matrices.
//!
//! Every node holds a `DMatrix<f64>` value. The op set covers exactly what
//! the sparse variational bounds need: kernel assembly, Cholesky
//! factorization, triangular solves, a few reductions, and scalar-valued
//! nodes whose local partials are supplied by the caller (the per-point
//! likelihood terms).

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::numerics::cholesky_jitter;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// K(x1, x2) with log-hyperparameters in a 1×P row.
    Kernel {
        spec: KernelSpec,
        x1: Var,
        x2: Var,
        params: Var,
    },
    /// n×1 column of k(x, x).
    KernelDiag {
        spec: KernelSpec,
        params: Var,
    },
    Cholesky {
        a: Var,
    },
    /// L⁻¹ B
    SolveLower {
        l: Var,
        b: Var,
    },
    /// L⁻ᵀ B
    SolveLowerTrans {
        l: Var,
        b: Var,
    },
    /// Aᵀ B
    MatMulTn {
        a: Var,
        b: Var,
    },
    /// n×1 column of Σ_k A_kj²
    ColSumSq {
        a: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        by: f64,
    },
    /// 1×1: Σ A_ij²
    SumSq {
        a: Var,
    },
    /// 1×1: Σ log A_ii
    LogDiagSum {
        a: Var,
    },
    /// m×m lower triangle from a packed column, diagonal exponentiated.
    LowerFromPacked {
        packed: Var,
    },
    /// 1×1 output with caller-supplied partials w.r.t. each parent.
    Scalar {
        parents: Vec<Var>,
        partials: Vec<DMatrix<f64>>,
    },
}

#[derive(Debug)]
struct Node {
    value: DMatrix<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of the leaves with respect to one output.
#[derive(Debug)]
pub struct Gradients {
    bars: Vec<Option<DMatrix<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of leaf `v`, zeros when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> DMatrix<f64> {
        match &self.bars[v.0] {
            Some(b) => b.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DMatrix::zeros(r, c)
            }
        }
    }
}

/// Number of entries in the packed lower triangle of an m×m matrix.
pub fn packed_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Side length of a triangle packed into `len` entries.
pub fn packed_dim(len: usize) -> usize {
    let m = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    assert_eq!(packed_len(m), len, "not a triangular length");
    m
}

/// Row-major lower triangle, diagonal stored as its logarithm.
pub fn pack_lower(l: &DMatrix<f64>) -> Vec<f64> {
    let m = l.nrows();
    let mut out = Vec::with_capacity(packed_len(m));
    for i in 0..m {
        for j in 0..=i {
            out.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
        }
    }
    out
}

pub fn unpack_lower(packed: &[f64]) -> DMatrix<f64> {
    let m = packed_dim(packed.len());
    let mut l = DMatrix::zeros(m, m);
    let mut k = 0;
    for i in 0..m {
        for j in 0..=i {
            l[(i, j)] = if i == j { packed[k].exp() } else { packed[k] };
            k += 1;
        }
    }
    l
}

fn tril(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..a.ncols() {
            a[(i, j)] = 0.0;
        }
    }
    a
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn leaf(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_row(&mut self, values: &[f64]) -> Var {
        self.leaf(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn leaf_column(&mut self, values: &[f64]) -> Var {
        self.leaf(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// Kernel matrix; `params` is a 1×P row of log-hyperparameters whose
    /// structure follows `spec`.
    pub fn kernel(&mut self, spec: &KernelSpec, x1: Var, x2: Var, params: Var) -> Result<Var> {
        let spec = spec.with_log_params(self.value(params).as_slice());
        let value = spec.kernel_matrix(self.value(x1), self.value(x2))?;
        Ok(self.push(
            value,
            Op::Kernel {
                spec,
                x1,
                x2,
                params,
            },
        ))
    }

    pub fn kernel_diag(&mut self, spec: &KernelSpec, x: Var, params: Var) -> Var {
        let spec = spec.with_log_params(self.value(params).as_slice());
        let value = DMatrix::from_column_slice(
            self.value(x).nrows(),
            1,
            spec.kernel_diag(self.value(x)).as_slice(),
        );
        self.push(value, Op::KernelDiag { spec, params })
    }

    /// Jittered Cholesky factor; the jitter is treated as a constant.
    pub fn cholesky(&mut self, a: Var) -> Result<(Var, f64)> {
        let f = cholesky_jitter(self.value(a), 5)?;
        let jitter = f.jitter_used();
        Ok((self.push(f.into_lower(), Op::Cholesky { a }), jitter))
    }

    pub fn solve_lower(&mut self, l: Var, b: Var) -> Var {
        let value = self
            .value(l)
            .solve_lower_triangular(self.value(b))
            .expect("triangular factor has a nonzero diagonal");
        self.push(value, Op::SolveLower { l, b })
    }

    pub fn solve_lower_trans(&mut self, l: Var, b: Var) -> Var {
        let value = self
            .value(l)
            .tr_solve_lower_triangular(self.value(b))
            .expect("triangular factor has a nonzero diagonal");
        self.push(value, Op::SolveLowerTrans { l, b })
    }

    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).tr_mul(self.value(b));
        self.push(value, Op::MatMulTn { a, b })
    }

    pub fn col_sum_sq(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let value = DMatrix::from_fn(av.ncols(), 1, |j, _| av.column(j).norm_squared());
        self.push(value, Op::ColSumSq { a })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub { a, b })
    }

    pub fn scale(&mut self, a: Var, by: f64) -> Var {
        let value = self.value(a) * by;
        self.push(value, Op::Scale { a, by })
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let value = DMatrix::from_element(1, 1, self.value(a).norm_squared());
        self.push(value, Op::SumSq { a })
    }

    pub fn log_diag_sum(&mut self, a: Var) -> Var {
        let s = self.value(a).diagonal().iter().map(|d| d.ln()).sum();
        self.push(DMatrix::from_element(1, 1, s), Op::LogDiagSum { a })
    }

    pub fn lower_from_packed(&mut self, packed: Var) -> Var {
        let value = unpack_lower(self.value(packed).as_slice());
        self.push(value, Op::LowerFromPacked { packed })
    }

    /// Scalar node with known value and partial derivatives.
    pub fn scalar_fn(&mut self, value: f64, parents: Vec<Var>, partials: Vec<DMatrix<f64>>) -> Var {
        assert_eq!(parents.len(), partials.len());
        for (p, g) in parents.iter().zip(&partials) {
            assert_eq!(self.value(*p).shape(), g.shape(), "partial shape");
        }
        self.push(
            DMatrix::from_element(1, 1, value),
            Op::Scalar { parents, partials },
        )
    }

    /// Sum of 1×1 nodes.
    pub fn sum_scalars(&mut self, terms: &[Var]) -> Var {
        let mut it = terms.iter();
        let mut acc = *it.next().expect("at least one term");
        for &t in it {
            acc = self.add(acc, t);
        }
        acc
    }

    /// Reverse sweep from a 1×1 output.
    pub fn gradient(&self, output: Var) -> Gradients {
        let mut bars: Vec<Option<DMatrix<f64>>> = vec![None; self.nodes.len()];
        bars[output.0] = Some(DMatrix::from_element(1, 1, 1.0));

        fn acc(bars: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
            match &mut bars[v.0] {
                Some(b) => *b += g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(bar) = bars[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    bars[idx] = Some(bar);
                }
                Op::Kernel {
                    spec,
                    x1,
                    x2,
                    params,
                } => {
                    let (g1, g2, gp) =
                        spec.kernel_matrix_vjp(self.value(*x1), self.value(*x2), &bar);
                    acc(&mut bars, *x1, g1);
                    acc(&mut bars, *x2, g2);
                    acc(
                        &mut bars,
                        *params,
                        DMatrix::from_row_slice(1, gp.len(), &gp),
                    );
                }
                Op::KernelDiag { spec, params } => {
                    let gp = spec.kernel_diag_vjp(bar.sum());
                    acc(
                        &mut bars,
                        *params,
                        DMatrix::from_row_slice(1, gp.len(), &gp),
                    );
                }
                Op::Cholesky { a } => {
                    let l = &node.value;
                    let n = l.nrows();
                    // Φ(Lᵀ L̄): lower triangle with halved diagonal
                    let mut p = tril(l.tr_mul(&bar));
                    for i in 0..n {
                        p[(i, i)] *= 0.5;
                    }
                    let s = l.tr_solve_lower_triangular(&p).expect("positive diagonal");
                    let s = l
                        .tr_solve_lower_triangular(&s.transpose())
                        .expect("positive diagonal")
                        .transpose();
                    let sym = (&s + s.transpose()) * 0.5;
                    acc(&mut bars, *a, sym);
                }
                Op::SolveLower { l, b } => {
                    let lv = self.value(*l);
                    let b_bar = lv
                        .tr_solve_lower_triangular(&bar)
                        .expect("positive diagonal");
                    let l_bar = tril(-(&b_bar * node.value.transpose()));
                    acc(&mut bars, *l, l_bar);
                    acc(&mut bars, *b, b_bar);
                }
                Op::SolveLowerTrans { l, b } => {
                    let lv = self.value(*l);
                    let b_bar = lv.solve_lower_triangular(&bar).expect("positive diagonal");
                    let l_bar = tril(-(&node.value * b_bar.transpose()));
                    acc(&mut bars, *l, l_bar);
                    acc(&mut bars, *b, b_bar);
                }
                Op::MatMulTn { a, b } => {
                    let a_bar = self.value(*b) * bar.transpose();
                    let b_bar = self.value(*a) * &bar;
                    acc(&mut bars, *a, a_bar);
                    acc(&mut bars, *b, b_bar);
                }
                Op::ColSumSq { a } => {
                    let av = self.value(*a);
                    let mut g = av * 2.0;
                    for j in 0..av.ncols() {
                        g.column_mut(j).scale_mut(bar[(j, 0)]);
                    }
                    acc(&mut bars, *a, g);
                }
                Op::Add { a, b } => {
                    acc(&mut bars, *a, bar.clone());
                    acc(&mut bars, *b, bar);
                }
                Op::Sub { a, b } => {
                    acc(&mut bars, *a, bar.clone());
                    acc(&mut bars, *b, -bar);
                }
                Op::Scale { a, by } => acc(&mut bars, *a, bar * *by),
                Op::SumSq { a } => {
                    let g = self.value(*a) * (2.0 * bar[(0, 0)]);
                    acc(&mut bars, *a, g);
                }
                Op::LogDiagSum { a } => {
                    let av = self.value(*a);
                    let mut g = DMatrix::zeros(av.nrows(), av.ncols());
                    for i in 0..av.nrows().min(av.ncols()) {
                        g[(i, i)] = bar[(0, 0)] / av[(i, i)];
                    }
                    acc(&mut bars, *a, g);
                }
                Op::LowerFromPacked { packed } => {
                    let l = &node.value;
                    let m = l.nrows();
                    let mut g = DMatrix::zeros(packed_len(m), 1);
                    let mut k = 0;
                    for i in 0..m {
                        for j in 0..=i {
                            g[(k, 0)] = if i == j {
                                bar[(i, i)] * l[(i, i)]
                            } else {
                                bar[(i, j)]
                            };
                            k += 1;
                        }
                    }
                    acc(&mut bars, *packed, g);
                }
                Op::Scalar { parents, partials } => {
                    let s = bar[(0, 0)];
                    for (p, g) in parents.iter().zip(partials) {
                        acc(&mut bars, *p, g * s);
                    }
                }
            }
        }

        Gradients {
            bars,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        }
    }
}
