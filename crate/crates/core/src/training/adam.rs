use super::loss::Gradients;
use super::TrainConfig;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &EncoderModel) -> Self {
        Self {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(
    params: &mut [f32],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bias1: f64,
    bias2: f64,
    cfg: &TrainConfig,
) {
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p = (*p as f64 - lr * m_hat / (v_hat.sqrt() + cfg.adam_eps)) as f32;
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(
    model: &mut EncoderModel,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let shapes = [
        ("token_table", model.token_table.len(), grads.token_table.len(), state.m.token_table.len()),
        ("projection", model.projection.len(), grads.projection.len(), state.m.projection.len()),
        ("proj_bias", model.proj_bias.len(), grads.proj_bias.len(), state.m.proj_bias.len()),
    ];
    for (what, p, g, s) in shapes {
        if g != p || s != p {
            return Err(Error::DimensionMismatch {
                what,
                expected: p,
                actual: if g != p { g } else { s },
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);
    let lr = cfg.learning_rate;
    update(&mut model.token_table, &grads.token_table, &mut state.m.token_table, &mut state.v.token_table, lr, bias1, bias2, cfg);
    update(&mut model.projection, &grads.projection, &mut state.m.projection, &mut state.v.projection, lr, bias1, bias2, cfg);
    update(&mut model.proj_bias, &grads.proj_bias, &mut state.m.proj_bias, &mut state.v.proj_bias, lr, bias1, bias2, cfg);
    for (tensor, values) in [
        ("token_table", &model.token_table),
        ("projection", &model.projection),
        ("proj_bias", &model.proj_bias),
    ] {
        if !values.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteParameter { tensor });
        }
    }
    Ok(())
}
