use alloc::format;
use alloc::vec::Vec;

use super::{AcousticModel, ModelConfig, TrainingItem};
use crate::frontend::PhoneSequence;
use crate::nn::{bilstm, Graph, Grads, Linear, Lstm, Mat, ParamId, ParamStore, Var};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct Layers {
    embedding: Option<ParamId>,
    lstms: Vec<[Lstm; 2]>,
    output: Linear,
}

/// Phone-level duration predictor: stacked bidirectional LSTMs and a linear
/// head producing one log-frame value per phone.
#[derive(Clone, Debug)]
pub struct DurationModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    layers: Layers,
}

impl DurationModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.dims();
        let mut rng = Rng::derived(seed, 0xD0);
        let mut p = ParamStore::new();
        let (embedding, input) = if config.shared_encoder {
            (None, d.encoder())
        } else {
            (Some(p.add_uniform("duration.embedding", config.n_phones, d.embed, 1.732_050_807_568_877_2, &mut rng)), d.embed)
        };
        let lstms = (0..config.duration_layers)
            .map(|i| {
                let cin = if i == 0 { input } else { 2 * d.duration_half };
                [
                    Lstm::new(&mut p, &format!("duration.lstm{i}_fwd"), cin, d.duration_half, &mut rng),
                    Lstm::new(&mut p, &format!("duration.lstm{i}_bwd"), cin, d.duration_half, &mut rng),
                ]
            })
            .collect();
        let output = Linear::new(&mut p, "duration.output", 2 * d.duration_half, 1, &mut rng);
        Ok(DurationModel { config, params: p, layers: Layers { embedding, lstms, output } })
    }

    /// Phone-level input features. With a shared encoder these are the
    /// acoustic text encoder outputs, detached from its parameters.
    fn features(&self, g: &mut Graph, acoustic: &AcousticModel, phones: &PhoneSequence) -> Result<Var> {
        if phones.is_empty() {
            return Err(Error::invalid("phone sequence is empty"));
        }
        match self.layers.embedding {
            Some(table) => {
                let ids = phones.ids();
                if let Some(bad) = ids.iter().find(|i| **i >= self.config.n_phones) {
                    return Err(Error::UnknownPhone(format!("id {bad}")));
                }
                let t = g.param(table);
                Ok(g.gather(t, ids))
            }
            None => Ok(g.input(acoustic.encode_text(phones)?)),
        }
    }

    fn log_durations_graph(&self, g: &mut Graph, x: Var) -> Var {
        let mut y = x;
        for [fwd, bwd] in &self.layers.lstms {
            y = bilstm(g, fwd, bwd, y);
        }
        self.layers.output.forward(g, y)
    }

    /// Predicted log-frame durations, one per phone.
    pub fn predict_log(&self, acoustic: &AcousticModel, phones: &PhoneSequence) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let x = self.features(&mut g, acoustic, phones)?;
        let y = self.log_durations_graph(&mut g, x);
        Ok(g.value(y).data().to_vec())
    }

    /// Integer frame counts: exponentiate, round half-up, clamp to >= 1.
    pub fn predict_durations(&self, acoustic: &AcousticModel, phones: &PhoneSequence) -> Result<Vec<usize>> {
        Ok(self.predict_log(acoustic, phones)?.into_iter().map(frames_from_log).collect())
    }

    pub fn loss_and_grads(&self, acoustic: &AcousticModel, batch: &[TrainingItem]) -> Result<(f64, Grads)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty training batch"));
        }
        let mut g = Graph::new(&self.params);
        let mut terms = Vec::new();
        let mut count = 0;
        for item in batch {
            item.validate()?;
            let x = self.features(&mut g, acoustic, &item.phones)?;
            let y = self.log_durations_graph(&mut g, x);
            let target: Vec<f64> = item.durations.iter().map(|d| libm::log(*d as f64)).collect();
            count += target.len();
            terms.push(g.sum_sq_err(y, Mat::from_vec(target.len(), 1, target)));
        }
        let mut total = terms[0];
        for t in &terms[1..] {
            total = g.add(total, *t);
        }
        let total = g.scale(total, 1.0 / count as f64);
        let loss = g.value(total).data()[0];
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("duration loss is {loss}")));
        }
        Ok((loss, g.backward(total)))
    }
}

/// `exp(x)` rounded half-up, at least one frame.
pub fn frames_from_log(x: f64) -> usize {
    let v = libm::floor(libm::exp(x) + 0.5);
    if v.is_finite() && v >= 1.0 { v as usize } else { 1 }
}

/// Mean over phones of `(log_pred - log d)^2`.
pub fn duration_loss(predicted_log: &[f64], durations: &[usize]) -> Result<f64> {
    if predicted_log.len() != durations.len() || durations.is_empty() {
        return Err(Error::shape("one prediction per phone required"));
    }
    if durations.contains(&0) {
        return Err(Error::invalid("durations must be at least one frame"));
    }
    let sum: f64 = predicted_log
        .iter()
        .zip(durations)
        .map(|(p, d)| {
            let e = p - libm::log(*d as f64);
            e * e
        })
        .sum();
    Ok(sum / durations.len() as f64)
}
