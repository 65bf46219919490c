//! The full minibatch bound `(n/|B|)·Σ_B terms − Σ_c KL_c` and its gradient.
//!
//! The value is available along two routes: [`elbo_terms`] evaluates the
//! closed forms directly, [`elbo_grad`] builds the same quantity on the
//! reverse-mode tape. Both share only the per-point likelihood terms.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{ModelState, Task};
use crate::autodiff::{pack_lower, Tape, Var};
use crate::error::Result;
use crate::likelihood::{
    binary_elbo_term_with_grad, multiclass_elbo_term, multiclass_elbo_term_partials,
    multiclass_s_with_grad, softmax_term_with_grad,
};
use crate::numerics::GaussHermiteRule;
use crate::variational::{kl_gaussian, kmm_cholesky, q_f_marginals_with, VARIANCE_FLOOR};

/// Pieces of the bound at one parameter setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboTerms {
    /// Scaled data term `(n_total/|B|)·Σ_B terms`.
    pub data: f64,
    /// `n_total/|B|`
    pub scale: f64,
    /// `KL(q(u^c) ‖ p(u^c))` per latent function.
    pub kl: Vec<f64>,
    pub elbo: f64,
}

impl ElboTerms {
    fn assemble(data: f64, scale: f64, kl: Vec<f64>) -> Self {
        let elbo = data - kl.iter().sum::<f64>();
        Self {
            data,
            scale,
            kl,
            elbo,
        }
    }

    /// Name of the first non-finite piece, if any.
    pub fn non_finite_term(&self) -> Option<String> {
        if !self.data.is_finite() {
            return Some(format!("data term is {}", self.data));
        }
        self.kl
            .iter()
            .position(|k| !k.is_finite())
            .map(|c| format!("KL term of latent {c} is {}", self.kl[c]))
    }
}

#[derive(Debug, Clone)]
pub struct ElboGrad {
    pub terms: ElboTerms,
    /// Gradient in [`super::ParamLayout`] order.
    pub grad: Vec<f64>,
}

/// Per-point term with partials w.r.t. each latent's marginal and δ.
struct PointTerm {
    value: f64,
    d_mu: Vec<f64>,
    d_var: Vec<f64>,
    d_delta: f64,
}

fn point_term(
    model: &ModelState,
    class: usize,
    mu: &[f64],
    var: &[f64],
    rule: &GaussHermiteRule,
) -> PointTerm {
    match model.task {
        Task::Binary => {
            let nf = model
                .noise
                .as_ref()
                .expect("binary model has a noise family");
            let y = if class == 1 { 1.0 } else { -1.0 };
            let g = binary_elbo_term_with_grad(y, mu[0], var[0], nf);
            PointTerm {
                value: g.value,
                d_mu: vec![g.d_mu],
                d_var: vec![g.d_var],
                d_delta: g.d_delta,
            }
        }
        Task::MulticlassUnified => {
            let nf = model
                .noise
                .as_ref()
                .expect("multi-class model has a noise family");
            let c = model.num_classes;
            let (s, ds_mu, ds_var) = multiclass_s_with_grad(class, mu, var, nf.a(), rule);
            let (dt_ds, dt_dd) = multiclass_elbo_term_partials(s, nf.delta(), c);
            PointTerm {
                value: multiclass_elbo_term(s, nf.delta(), c),
                d_mu: ds_mu.iter().map(|g| g * dt_ds).collect(),
                d_var: ds_var.iter().map(|g| g * dt_ds).collect(),
                d_delta: dt_dd,
            }
        }
        Task::Softmax => {
            let (value, d_mu, d_var) = softmax_term_with_grad(class, mu, var);
            PointTerm {
                value,
                d_mu,
                d_var,
                d_delta: 0.0,
            }
        }
    }
}

fn batch_scale(model: &ModelState, batch: usize) -> f64 {
    model.n_total as f64 / batch as f64
}

/// Bound value at rows `x` with 0-based `classes`.
pub fn elbo(
    model: &ModelState,
    x: &DMatrix<f64>,
    classes: &[usize],
    rule: &GaussHermiteRule,
) -> Result<f64> {
    Ok(elbo_terms(model, x, classes, rule)?.elbo)
}

/// Bound pieces from the closed-form marginals and KL, without the tape.
pub fn elbo_terms(
    model: &ModelState,
    x: &DMatrix<f64>,
    classes: &[usize],
    rule: &GaussHermiteRule,
) -> Result<ElboTerms> {
    model.check_data(x, classes)?;
    let n = x.nrows();
    let latents = model.num_latents();
    let mut mu = DMatrix::zeros(n, latents);
    let mut var = DMatrix::zeros(n, latents);
    let mut kl = Vec::with_capacity(latents);
    for c in 0..latents {
        let kernel = model.kernel_for(c);
        let chol = kmm_cholesky(kernel, &model.inducing)?;
        kl.push(kl_gaussian(&model.q_u[c], &chol));
        if n > 0 {
            let (m, v) = q_f_marginals_with(kernel, &model.inducing, &chol, &model.q_u[c], x)?;
            mu.set_column(c, &m);
            var.set_column(c, &v);
        }
    }
    let mut data = 0.0;
    for i in 0..n {
        let m: Vec<f64> = mu.row(i).iter().copied().collect();
        let v: Vec<f64> = var.row(i).iter().copied().collect();
        data += point_term(model, classes[i], &m, &v, rule).value;
    }
    let scale = if n > 0 { batch_scale(model, n) } else { 0.0 };
    Ok(ElboTerms::assemble(scale * data, scale, kl))
}

/// Quantities shared by every latent that uses the same kernel.
struct KernelNodes {
    l: Var,
    a: Var,
    b: Var,
    prior_var: Var,
}

/// Bound value and its exact gradient w.r.t. every unconstrained
/// parameter, via the reverse-mode tape.
pub fn elbo_grad(
    model: &ModelState,
    x: &DMatrix<f64>,
    classes: &[usize],
    rule: &GaussHermiteRule,
) -> Result<ElboGrad> {
    model.check_data(x, classes)?;
    let n = x.nrows();
    let m = model.num_inducing();
    let latents = model.num_latents();
    let layout = model.layout();

    let mut t = Tape::new();
    let kparams: Vec<Var> = model
        .kernels
        .iter()
        .map(|k| t.leaf_row(&k.log_params()))
        .collect();
    let z = t.leaf(model.inducing.z.clone());
    let xv = t.leaf(x.clone());

    let mut shared: HashMap<usize, KernelNodes> = HashMap::new();
    let mut means = Vec::with_capacity(latents);
    let mut packs = Vec::with_capacity(latents);
    let mut mus = Vec::with_capacity(latents);
    let mut vars = Vec::with_capacity(latents);
    let mut kls = Vec::with_capacity(latents);
    for c in 0..latents {
        let ki = model.kernel_index(c);
        let spec = model.kernel_for(c);
        if !shared.contains_key(&ki) {
            let p = kparams[ki];
            let kmm = t.kernel(spec, z, z, p)?;
            let (l, _) = t.cholesky(kmm)?;
            let kmn = t.kernel(spec, z, xv, p)?;
            let a = t.solve_lower(l, kmn);
            let b = t.solve_lower_trans(l, a);
            let kdiag = t.kernel_diag(spec, xv, p);
            let explained = t.col_sum_sq(a);
            let prior_var = t.sub(kdiag, explained);
            shared.insert(ki, KernelNodes { l, a, b, prior_var });
        }
        let kn = &shared[&ki];
        let (l, a, b, prior_var) = (kn.l, kn.a, kn.b, kn.prior_var);

        let q = &model.q_u[c];
        let mean = t.leaf_column(q.mean.as_slice());
        let packed = t.leaf_column(&pack_lower(&q.scale));
        let ls = t.lower_from_packed(packed);
        means.push(mean);
        packs.push(packed);

        // μ = Aᵀ L⁻¹ m,  ν = k_nn − ‖A‖² + ‖L_Sᵀ L⁻ᵀ A‖²
        let alpha = t.solve_lower(l, mean);
        mus.push(t.matmul_tn(a, alpha));
        let v = t.matmul_tn(ls, b);
        let extra = t.col_sum_sq(v);
        vars.push(t.add(prior_var, extra));

        // KL = ½(2Σ log L_ii − 2Σ log L_S,ii − m + ‖L⁻¹L_S‖² + ‖L⁻¹m‖²)
        let ld_k = t.log_diag_sum(l);
        let ld_s = t.log_diag_sum(ls);
        let ld = t.sub(ld_k, ld_s);
        let ld2 = t.scale(ld, 2.0);
        let w = t.solve_lower(l, ls);
        let tr = t.sum_sq(w);
        let maha = t.sum_sq(alpha);
        let quad = t.add(tr, maha);
        let inner = t.add(ld2, quad);
        let half = t.scale(inner, 0.5);
        let constant = t.scalar_fn(-0.5 * m as f64, vec![], vec![]);
        kls.push(t.add(half, constant));
    }

    let scale = if n > 0 { batch_scale(model, n) } else { 0.0 };
    let mut data_value = 0.0;
    let mut d_delta = 0.0;
    let mut d_mu = vec![DMatrix::zeros(n, 1); latents];
    let mut d_var = vec![DMatrix::zeros(n, 1); latents];
    let mut mu_i = vec![0.0; latents];
    let mut var_i = vec![0.0; latents];
    let mut floored = vec![false; latents];
    for i in 0..n {
        for c in 0..latents {
            mu_i[c] = t.value(mus[c])[(i, 0)];
            let v = t.value(vars[c])[(i, 0)];
            floored[c] = v < VARIANCE_FLOOR;
            var_i[c] = v.max(VARIANCE_FLOOR);
        }
        let pt = point_term(model, classes[i], &mu_i, &var_i, rule);
        data_value += pt.value;
        d_delta += pt.d_delta;
        for c in 0..latents {
            d_mu[c][(i, 0)] = scale * pt.d_mu[c];
            if !floored[c] {
                d_var[c][(i, 0)] = scale * pt.d_var[c];
            }
        }
    }
    let mut parents = mus.clone();
    parents.extend(&vars);
    let mut partials = d_mu;
    partials.extend(d_var);
    let data = t.scalar_fn(scale * data_value, parents, partials);
    let kl_total = t.sum_scalars(&kls);
    let out = t.sub(data, kl_total);

    let g = t.gradient(out);
    let mut grad = vec![0.0; layout.len];
    for (k, r) in layout.kernels.iter().enumerate() {
        grad[r.clone()].copy_from_slice(g.wrt(kparams[k]).as_slice());
    }
    let gz = g.wrt(z);
    for (j, slot) in grad[layout.inducing.clone()].iter_mut().enumerate() {
        *slot = gz[(j / gz.ncols(), j % gz.ncols())];
    }
    for c in 0..latents {
        grad[layout.means[c].clone()].copy_from_slice(g.wrt(means[c]).as_slice());
        grad[layout.scales[c].clone()].copy_from_slice(g.wrt(packs[c]).as_slice());
    }
    if let (Some(r), Some(nf)) = (layout.rho, model.noise.as_ref()) {
        grad[r] = scale * d_delta * nf.ddelta_drho();
    }

    let kl: Vec<f64> = kls.iter().map(|&k| t.scalar(k)).collect();
    Ok(ElboGrad {
        terms: ElboTerms::assemble(t.scalar(data), scale, kl),
        grad,
    })
}
