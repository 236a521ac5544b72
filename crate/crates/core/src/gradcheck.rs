//! Finite-difference checks of every hand-written backward pass.
//!
//! Each check draws a random instance from its seed, computes the analytic
//! gradient, and compares it against central differences. Instances whose
//! ReLU pre-activations lie within [`KINK_MARGIN`] of zero are redrawn.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::causal::{
    causal_backward, causal_forward_traced, project_backward, project_traced, self_attention, CausalParams, CausalTrace, Pooling,
};
use crate::data::InteractionDataset;
use crate::encode::{AttributeEmbedding, AttributeTable};
use crate::graph::{bpr_base_loss, bpr_batch_loss, build_normalized_adjacency};
use crate::numerics::{finite_diff_check, seeded_rng, softplus, GradCheckReport, Matrix, Param, SeededRng};
use crate::train::{align_loss, rec_loss, total_loss, AlignVariant, Example, TrainConfig};
use crate::{Error, Result};

pub const TOLERANCE: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: u64 = 1000;

fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_vec(len: usize, rng: &mut SeededRng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn kink_free(pre: &[f64]) -> bool {
    pre.iter().all(|z| z.abs() > KINK_MARGIN)
}

fn trace_kink_free(t: &CausalTrace) -> bool {
    kink_free(t.effect_projection.pre_activation()) && kink_free(t.negative_projection.pre_activation())
}

fn random_causal(d_enc: usize, hidden: usize, out: usize, rng: &mut SeededRng) -> Result<CausalParams> {
    let mut p = CausalParams::init(d_enc, hidden, out, rng.gen())?;
    p.b_1 = random_matrix(1, hidden, rng);
    p.b_1.scale(0.3);
    p.b_2 = random_matrix(1, out, rng);
    Ok(p)
}

fn grads_of(p: &CausalParams) -> Vec<Matrix> {
    p.matrices().into_iter().cloned().collect()
}

/// BPR loss w.r.t. `e_u`, `e_i`, `e_neg`.
pub fn check_bpr(seed: u64) -> Result<GradCheckReport> {
    let mut rng = seeded_rng(seed, 1);
    let d = 8;
    let params = [
        Param::new("e_u", random_matrix(1, d, &mut rng)),
        Param::new("e_i", random_matrix(1, d, &mut rng)),
        Param::new("e_neg", random_matrix(1, d, &mut rng)),
    ];
    let out = bpr_base_loss(params[0].value.row(0), params[1].value.row(0), params[2].value.row(0))?;
    let analytic = [Matrix::row_vector(&out.grad_user), Matrix::row_vector(&out.grad_pos), Matrix::row_vector(&out.grad_neg)];
    finite_diff_check(
        |p| bpr_base_loss(p[0].value.row(0), p[1].value.row(0), p[2].value.row(0)).map_or(f64::NAN, |o| o.loss),
        &params,
        &analytic,
        seed,
    )
}

/// Mean BPR over a batch, through `L`-layer propagation, w.r.t. layer-zero
/// embeddings of a random bipartite graph.
pub fn check_propagation_bpr(seed: u64, num_layers: usize) -> Result<GradCheckReport> {
    let mut rng = seeded_rng(seed, 2);
    let (users, items, d) = (5usize, 7usize, 6usize);
    let mut train = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.gen_bool(0.35) {
                train.push((u, i));
            }
        }
        if !train.iter().any(|p| p.0 == u) {
            train.push((u, rng.gen_range(0..items)));
        }
    }
    let ds = InteractionDataset::from_splits(
        (0..users).map(|u| alloc::format!("u{u}")).collect(),
        (0..items).map(|i| alloc::format!("i{i}")).collect(),
        train.clone(),
        Vec::new(),
        Vec::new(),
        1,
        seed,
    )?;
    let adj = build_normalized_adjacency(&ds)?;
    let batch: Vec<(usize, usize, usize)> = train
        .iter()
        .take(8)
        .map(|&(u, i)| (u, i, (i + 1 + rng.gen_range(0..items - 1)) % items))
        .collect();
    let params = [Param::new("layer_zero", random_matrix(users + items, d, &mut rng))];
    let (_, grad) = bpr_batch_loss(&adj, &params[0].value, num_layers, &batch)?;
    finite_diff_check(
        |p| bpr_batch_loss(&adj, &p[0].value, num_layers, &batch).map_or(f64::NAN, |o| o.0),
        &params,
        &[grad],
        seed,
    )
}

/// `c · project(x)` w.r.t. the projection weights and `x`.
pub fn check_projection(seed: u64) -> Result<GradCheckReport> {
    let (d_enc, h, d) = (16, 16, 8);
    for attempt in 0..MAX_REDRAWS {
        let mut rng = seeded_rng(seed, 0x100 + attempt);
        let params = random_causal(d_enc, h, d, &mut rng)?;
        let x = random_vec(d_enc, &mut rng);
        let c = random_vec(d, &mut rng);
        let trace = project_traced(&x, &params)?;
        if !kink_free(trace.pre_activation()) {
            continue;
        }
        let mut grads = params.zeros_like();
        let dx = project_backward(&trace, &c, &params, &mut grads);
        let probe = [
            Param::new("w_1", params.w_1.clone()),
            Param::new("b_1", params.b_1.clone()),
            Param::new("w_2", params.w_2.clone()),
            Param::new("b_2", params.b_2.clone()),
            Param::new("x", Matrix::row_vector(&x)),
        ];
        let analytic = [grads.w_1, grads.b_1, grads.w_2, grads.b_2, Matrix::row_vector(&dx)];
        let mut work = params.clone();
        return finite_diff_check(
            |p| {
                work.w_1.clone_from(&p[0].value);
                work.b_1.clone_from(&p[1].value);
                work.w_2.clone_from(&p[2].value);
                work.b_2.clone_from(&p[3].value);
                project_traced(p[4].value.row(0), &work)
                    .map_or(f64::NAN, |t| t.output.iter().zip(&c).map(|(a, b)| a * b).sum())
            },
            &probe,
            &analytic,
            seed,
        );
    }
    Err(Error::NumericalFailure("could not draw a kink-free projection instance".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalObjective {
    Rec,
    Align(AlignVariant),
}

/// `causal_forward` composed with `rec_loss` or `align_loss`, w.r.t. all
/// seven causal parameter matrices.
pub fn check_causal(seed: u64, objective: CausalObjective, pooling: Pooling) -> Result<GradCheckReport> {
    let (f, d_enc, h, d) = (4, 16, 16, 8);
    let (lambda, tau) = (0.5, 0.1);
    for attempt in 0..MAX_REDRAWS {
        let mut rng = seeded_rng(seed, 0x200 + attempt);
        let mut params = random_causal(d_enc, h, d, &mut rng)?;
        params.pooling = pooling;
        let pos = random_matrix(f, d_enc, &mut rng);
        let neg = random_matrix(f, d_enc, &mut rng);
        let e_u = random_vec(d, &mut rng);
        let e_i = random_vec(d, &mut rng);
        let trace = causal_forward_traced(&pos, &neg, &params)?;
        if !trace_kink_free(&trace) {
            continue;
        }
        let emb = &trace.embedding;
        let (d_c, d_cn) = match objective {
            CausalObjective::Rec => {
                let r = rec_loss(&e_u, &e_i, &emb.e_c, &emb.e_c_neg, lambda)?;
                (r.grad_effect, r.grad_effect_neg)
            }
            CausalObjective::Align(v) => {
                let a = align_loss(&emb.e_c, &emb.e_c_neg, &e_i, tau, v)?;
                (a.grad_effect, a.grad_effect_neg)
            }
        };
        let mut grads = params.zeros_like();
        causal_backward(&pos, &neg, &params, &trace, &d_c, &d_cn, &mut grads)?;
        return finite_diff_check(
            |p| {
                let Ok(work) = CausalParams::from_params(p, pooling) else { return f64::NAN };
                match objective {
                    CausalObjective::Rec => causal_forward_traced(&pos, &neg, &work)
                        .and_then(|t| rec_loss(&e_u, &e_i, &t.embedding.e_c, &t.embedding.e_c_neg, lambda))
                        .map_or(f64::NAN, |r| r.loss),
                    CausalObjective::Align(v) => align_difference_form(&pos, &neg, &work, &e_i, tau, v).unwrap_or(f64::NAN),
                }
            },
            &params.to_params(),
            &grads_of(&grads),
            seed,
        );
    }
    Err(Error::NumericalFailure("could not draw a kink-free causal instance".into()))
}

/// Independent evaluation of the alignment loss through `e_c* − e_c`
/// directly. Offsets shared by both projections (`b_2`, and `b_1` on units
/// active for both inputs) cancel exactly here instead of leaving rounding
/// noise, so their zero derivatives are probed as exact zeros.
fn align_difference_form(
    pos: &Matrix,
    neg: &Matrix,
    params: &CausalParams,
    e_i: &[f64],
    tau: f64,
    variant: AlignVariant,
) -> Result<f64> {
    let pooled_pos = self_attention(pos, params)?.pooled;
    let pooled_neg = self_attention(neg, params)?.pooled;
    let x: Vec<f64> = pooled_pos.iter().zip(&pooled_neg).map(|(a, b)| a - b).collect();
    let y = pooled_neg;
    let (d_enc, h, d) = (params.d_enc(), params.hidden(), params.out_dim());
    let mut diff_out = alloc::vec![0.0; d];
    for k in 0..h {
        let mut pre_x = params.b_1.get(0, k);
        let mut pre_y = params.b_1.get(0, k);
        let mut shift = 0.0;
        for a in 0..d_enc {
            let w = params.w_1.get(a, k);
            pre_x += x[a] * w;
            pre_y += y[a] * w;
            shift += (y[a] - x[a]) * w;
        }
        let diff_h = if pre_x > 0.0 && pre_y > 0.0 { shift } else { pre_y.max(0.0) - pre_x.max(0.0) };
        for (j, o) in diff_out.iter_mut().enumerate() {
            *o += diff_h * params.w_2.get(k, j);
        }
    }
    let z: f64 = e_i.iter().zip(&diff_out).map(|(a, b)| a * b).sum::<f64>() / tau;
    Ok(match variant {
        AlignVariant::Paper => z,
        AlignVariant::Stabilized => softplus(z),
    })
}

/// `total_loss` on a 4-pair batch (one pair using another item's tokens as
/// its negative) w.r.t. every causal matrix and the base embeddings.
pub fn check_total_loss(seed: u64) -> Result<GradCheckReport> {
    let (f, d_enc, h, d) = (4, 16, 16, 8);
    let (n_users, n_items) = (3, 4);
    let config = TrainConfig { alpha: 0.3, ..TrainConfig::default() };
    let batch = [
        Example { user: 0, item: 0, negative_item: None },
        Example { user: 1, item: 0, negative_item: None },
        Example { user: 1, item: 2, negative_item: None },
        Example { user: 2, item: 1, negative_item: Some(3) },
    ];
    for attempt in 0..MAX_REDRAWS {
        let mut rng = seeded_rng(seed, 0x300 + attempt);
        let params = random_causal(d_enc, h, d, &mut rng)?;
        let ids: Vec<String> = (0..n_items).map(|i| alloc::format!("i{i}")).collect();
        let embeddings: Vec<AttributeEmbedding> = ids
            .iter()
            .map(|id| AttributeEmbedding {
                item_id: id.clone(),
                positive: random_matrix(f, d_enc, &mut rng),
                negative: random_matrix(f, d_enc, &mut rng),
            })
            .collect();
        let attrs = AttributeTable::new(&ids, embeddings)?;
        let users = random_matrix(n_users, d, &mut rng);
        let items = random_matrix(n_items, d, &mut rng);
        let kinked = batch.iter().any(|ex| {
            let pos = attrs.positive(ex.item).expect("present");
            let neg = match ex.negative_item {
                None => attrs.negative(ex.item).expect("present"),
                Some(j) => attrs.positive(j).expect("present"),
            };
            causal_forward_traced(pos, neg, &params).map_or(true, |t| !trace_kink_free(&t))
        });
        if kinked {
            continue;
        }
        let out = total_loss(&batch, &users, &items, &attrs, &params, &config)?;
        let mut probe = params.to_params();
        probe.push(Param::new("users", users));
        probe.push(Param::new("items", items));
        let mut analytic = grads_of(&out.causal_grads);
        analytic.push(out.user_grads);
        analytic.push(out.item_grads);
        return finite_diff_check(
            |p| {
                let Ok(work) = CausalParams::from_params(&p[..7], Pooling::Mean) else { return f64::NAN };
                total_loss(&batch, &p[7].value, &p[8].value, &attrs, &work, &config).map_or(f64::NAN, |o| o.total)
            },
            &probe,
            &analytic,
            seed,
        );
    }
    Err(Error::NumericalFailure("could not draw a kink-free batch".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub seed: u64,
    pub report: GradCheckReport,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.report.max_relative_error < TOLERANCE
    }
}

/// Runs every check for each seed.
pub fn run_suite(seeds: impl IntoIterator<Item = u64>) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for seed in seeds {
        let mut push = |name: &str, report: Result<GradCheckReport>| -> Result<()> {
            out.push(CheckOutcome { name: name.into(), seed, report: report? });
            Ok(())
        };
        push("bpr", check_bpr(seed))?;
        for layers in 0..=3 {
            push(&alloc::format!("propagation_bpr_L{layers}"), check_propagation_bpr(seed, layers))?;
        }
        push("projection", check_projection(seed))?;
        push("causal_rec", check_causal(seed, CausalObjective::Rec, Pooling::Mean))?;
        push("causal_rec_first_token", check_causal(seed, CausalObjective::Rec, Pooling::First))?;
        push("causal_align_paper", check_causal(seed, CausalObjective::Align(AlignVariant::Paper), Pooling::Mean))?;
        push(
            "causal_align_stabilized",
            check_causal(seed, CausalObjective::Align(AlignVariant::Stabilized), Pooling::Mean),
        )?;
        push("total_loss", check_total_loss(seed))?;
    }
    Ok(out)
}
