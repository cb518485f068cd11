//! Full-model gradient verification against central finite differences,
//! run in 64-bit mode with dropout off.

use crate::data::PaddedSequence;
use crate::error::{Error, Result};
use crate::model::{CoverageRecommender, SequenceBatch};
use crate::news_encoder::TitleBatch;
use crate::nn::Dropout;
use crate::numerics::{ParamStore, Tape};

/// Norms below this are treated as zero when forming relative errors.
pub const NORM_FLOOR: f64 = 1e-6;

/// Agreement of one parameter tensor.
#[derive(Clone, Debug)]
pub struct GroupCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `‖a − n‖ / max(‖a‖, ‖n‖, NORM_FLOOR)`
    pub rel_error: f64,
}

fn total_loss(
    model: &CoverageRecommender<f64>,
    params: &ParamStore<f64>,
    titles: &TitleBatch,
    batch: &SequenceBatch,
    gamma: f64,
) -> f64 {
    let tape = Tape::new();
    let p = params.bind(&tape, false);
    let mut drop = Dropout::off();
    let cat = model.encode_catalog_var(&p, titles, &mut drop);
    let fwd = model.forward(&p, cat, batch, &mut drop);
    model.losses(&p, &fwd, batch, gamma).total.value().item()
}

/// Compares the backward pass of the total loss with central differences of
/// step `h` for every parameter tensor of `model`.
pub fn check_gradients(
    model: &CoverageRecommender<f64>,
    titles: &[Vec<usize>],
    seqs: &[PaddedSequence],
    gamma: f64,
    h: f64,
) -> Result<Vec<GroupCheck>> {
    let titles = model.titles(titles)?;
    let batch = model.batch(seqs)?;
    if batch.labels.is_empty() {
        return Err(Error::Contract("gradient check needs masked, labelled sequences".into()));
    }
    let tape = Tape::new();
    let p = model.params.bind(&tape, true);
    let mut drop = Dropout::off();
    let cat = model.encode_catalog_var(&p, &titles, &mut drop);
    let fwd = model.forward(&p, cat, &batch, &mut drop);
    let grads = tape.backward(model.losses(&p, &fwd, &batch, gamma).total)?;

    let mut out = Vec::new();
    let mut params = model.params.clone();
    for id in model.params.ids() {
        let n = model.params.value(id).numel();
        let analytic = grads
            .get(p.get(id))
            .map_or_else(|| vec![0.0; n], |t| t.into_data());
        let mut numeric = vec![0.0; n];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = orig + h;
            let up = total_loss(model, &params, &titles, &batch, gamma);
            params.value_mut(id).data_mut()[i] = orig - h;
            let down = total_loss(model, &params, &titles, &batch, gamma);
            params.value_mut(id).data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let (na, nn) = (norm(&analytic), norm(&numeric));
        out.push(GroupCheck {
            name: model.params.name(id).to_string(),
            analytic_norm: na,
            numeric_norm: nn,
            rel_error: norm(&diff) / na.max(nn).max(NORM_FLOOR),
        });
    }
    Ok(out)
}
