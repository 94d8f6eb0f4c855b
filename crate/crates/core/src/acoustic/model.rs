use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{length_regulate_indices, position_embedding, AcousticLosses, ModelConfig, TrainingItem};
use crate::dsp::{MelSpectrogram, N_MELS};
use crate::frontend::PhoneSequence;
use crate::nn::{bilstm, Conv1d, Graph, Grads, Linear, Lstm, LstmState, Mat, ParamId, ParamStore, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Decoding direction. "Preceding" means `t - 1` going forward and `t + 1`
/// going backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }
}

/// Frame-level hidden representation, T x (text + 1 + speaker).
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenSeq {
    frames: Mat,
}

impl HiddenSeq {
    pub fn new(frames: Mat) -> Result<Self> {
        if !frames.is_finite() {
            return Err(Error::invalid("hidden representation is not finite"));
        }
        Ok(HiddenSeq { frames })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.frames.row(t)
    }

    pub fn as_mat(&self) -> &Mat {
        &self.frames
    }
}

/// Recurrent state of one decoder's two LSTM layers. Zero at sequence start.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub context: LstmState,
    pub output: LstmState,
}

impl DecoderState {
    pub fn zeros(hidden: usize) -> Self {
        DecoderState { context: LstmState::zeros(hidden), output: LstmState::zeros(hidden) }
    }
}

#[derive(Clone, Debug)]
struct DecoderLayers {
    context: Lstm,
    output: Lstm,
}

#[derive(Clone, Debug)]
struct Layers {
    phone_table: ParamId,
    convs: Vec<Conv1d>,
    encoder: [Lstm; 2],
    speaker_table: ParamId,
    prenet: [Linear; 2],
    decoders: [DecoderLayers; 2],
    projection: Linear,
}

/// Text encoder, speaker table, shared prenet, forward and backward decoders
/// and the shared output projection.
#[derive(Clone, Debug)]
pub struct AcousticModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    layers: Layers,
    pub step: u64,
    pub seed: u64,
}

const EMBED_BOUND: f64 = 1.732_050_807_568_877_2; // sqrt(3): unit variance

impl AcousticModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.dims();
        let mut rng = Rng::derived(seed, 0xAC0);
        let mut p = ParamStore::new();
        let phone_table = p.add_uniform("text.embedding", config.n_phones, d.embed, EMBED_BOUND, &mut rng);
        let convs = (0..config.conv_layers)
            .map(|i| {
                let cin = if i == 0 { d.embed } else { d.conv };
                Conv1d::new(&mut p, &format!("text.conv{i}"), cin, d.conv, config.conv_kernel, &mut rng)
            })
            .collect();
        let encoder = [
            Lstm::new(&mut p, "text.lstm_fwd", d.conv, d.encoder_half, &mut rng),
            Lstm::new(&mut p, "text.lstm_bwd", d.conv, d.encoder_half, &mut rng),
        ];
        let speaker_table = p.add_uniform("speaker.embedding", config.n_speakers, d.speaker, EMBED_BOUND, &mut rng);
        let prenet = [
            Linear::new(&mut p, "prenet.0", d.mel, d.prenet[0], &mut rng),
            Linear::new(&mut p, "prenet.1", d.prenet[0], d.prenet[1], &mut rng),
        ];
        let mut decoder = |name: &str, p: &mut ParamStore| DecoderLayers {
            context: Lstm::new(p, &format!("{name}.lstm1"), d.prenet[1] + d.hidden(), d.decoder, &mut rng),
            output: Lstm::new(p, &format!("{name}.lstm2"), d.decoder + d.hidden(), d.decoder, &mut rng),
        };
        let decoders = [decoder("decoder_fwd", &mut p), decoder("decoder_bwd", &mut p)];
        let projection = Linear::new(&mut p, "projection", d.decoder, d.mel, &mut rng);
        Ok(AcousticModel {
            config,
            params: p,
            layers: Layers { phone_table, convs, encoder, speaker_table, prenet, decoders, projection },
            step: 0,
            seed,
        })
    }

    /// Sets the output projection bias to `frame`, typically the corpus mean
    /// log-mel frame, so training starts from the mean prediction.
    pub fn set_output_bias(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.config.output_dim {
            return Err(Error::shape(format!("bias of width {} for {} outputs", frame.len(), self.config.output_dim)));
        }
        if frame.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("output bias".into()));
        }
        let bias = self.params.get_mut(self.layers.projection.bias);
        bias.row_mut(0).copy_from_slice(frame);
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.dims().hidden()
    }

    pub fn decoder_dim(&self) -> usize {
        self.config.dims().decoder
    }

    fn check_phones(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::invalid("phone sequence is empty"));
        }
        if let Some(bad) = ids.iter().find(|i| **i >= self.config.n_phones) {
            return Err(Error::UnknownPhone(format!("id {bad}")));
        }
        Ok(())
    }

    fn check_speaker(&self, speaker: usize) -> Result<()> {
        if speaker >= self.config.n_speakers {
            return Err(Error::UnknownSpeaker(format!("index {speaker} (model has {})", self.config.n_speakers)));
        }
        Ok(())
    }

    /// Phone-level text embedding, L x encoder width.
    pub fn encode_text_graph(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        self.check_phones(ids)?;
        let table = g.param(self.layers.phone_table);
        let mut x = g.gather(table, ids.to_vec());
        for conv in &self.layers.convs {
            let y = conv.forward(g, x);
            x = g.relu(y);
        }
        let [fwd, bwd] = &self.layers.encoder;
        Ok(bilstm(g, fwd, bwd, x))
    }

    pub fn encode_text(&self, phones: &PhoneSequence) -> Result<Mat> {
        let mut g = Graph::new(&self.params);
        let v = self.encode_text_graph(&mut g, &phones.ids())?;
        Ok(g.value(v).clone())
    }

    /// Length-regulated `[text | position | speaker]` frames.
    pub fn hidden_graph(&self, g: &mut Graph, text: Var, durations: &[usize], speaker: usize) -> Result<Var> {
        self.check_speaker(speaker)?;
        if durations.len() != g.shape(text).0 {
            return Err(Error::shape(format!(
                "{} durations for {} phones",
                durations.len(),
                g.shape(text).0
            )));
        }
        let idx = length_regulate_indices(durations)?;
        let n = idx.len();
        let frames = g.gather(text, idx);
        let pos = g.input(Mat::from_vec(n, 1, position_embedding(durations)?));
        let table = g.param(self.layers.speaker_table);
        let spk = g.gather(table, vec![speaker; n]);
        Ok(g.concat_cols(&[frames, pos, spk]))
    }

    pub fn hidden(&self, phones: &PhoneSequence, durations: &[usize], speaker: usize) -> Result<HiddenSeq> {
        let mut g = Graph::new(&self.params);
        let text = self.encode_text_graph(&mut g, &phones.ids())?;
        let h = self.hidden_graph(&mut g, text, durations, speaker)?;
        HiddenSeq::new(g.value(h).clone())
    }

    pub fn speaker_embedding(&self, speaker: usize) -> Result<Vec<f64>> {
        self.check_speaker(speaker)?;
        Ok(self.params.get(self.layers.speaker_table).row(speaker).to_vec())
    }

    fn prenet(&self, g: &mut Graph, x: Var, mut dropout: Option<&mut Rng>) -> Var {
        let p = self.config.prenet_dropout;
        let mut y = x;
        for layer in &self.layers.prenet {
            let z = layer.forward(g, y);
            y = g.relu(z);
            if let Some(rng) = dropout.as_deref_mut() {
                if p > 0.0 {
                    let n = g.value(y).data().len();
                    let keep = 1.0 / (1.0 - p);
                    let mask = (0..n).map(|_| if rng.uniform() < p { 0.0 } else { keep }).collect();
                    y = g.mask(y, mask);
                }
            }
        }
        y
    }

    /// Context LSTM input projection for rows `[prenet(m_prev) | h_prev]`.
    fn context_input(&self, g: &mut Graph, dir: Direction, prenet: Var, h_prev: Var) -> Var {
        let x = g.concat_cols(&[prenet, h_prev]);
        self.layers.decoders[dir.index()].context.project(g, x)
    }

    /// One decoder step from a projected context input row.
    fn decoder_cell(&self, g: &mut Graph, dir: Direction, proj: Var, h_cur: Var, state: [Var; 4]) -> (Var, [Var; 4]) {
        let dec = &self.layers.decoders[dir.index()];
        let [h1, c1, h2, c2] = state;
        let (h1, c1) = dec.context.step(g, proj, h1, c1);
        let x2 = g.concat_cols(&[h1, h_cur]);
        let p2 = dec.output.project(g, x2);
        let (h2, c2) = dec.output.step(g, p2, h2, c2);
        let mel = self.layers.projection.forward(g, h2);
        (mel, [h1, c1, h2, c2])
    }

    /// Teacher-forced predictions (T x 80, time order) for one direction.
    pub fn teacher_forced_graph(
        &self,
        g: &mut Graph,
        hidden: Var,
        mel: &MelSpectrogram,
        dir: Direction,
        dropout: Option<&mut Rng>,
    ) -> Result<Var> {
        let (t_len, d) = g.shape(hidden);
        if t_len != mel.n_frames() {
            return Err(Error::shape(format!("{} hidden frames for {} mel frames", t_len, mel.n_frames())));
        }
        let mut prev = Mat::zeros(t_len, N_MELS);
        for t in 0..t_len {
            let src = match dir {
                Direction::Forward => t.checked_sub(1),
                Direction::Backward => Some(t + 1).filter(|s| *s < t_len),
            };
            if let Some(s) = src {
                prev.row_mut(t).copy_from_slice(mel.frame(s));
            }
        }
        let zero = g.input(Mat::zeros(1, d));
        let h_prev = if t_len == 1 {
            zero
        } else {
            match dir {
                Direction::Forward => {
                    let head = g.slice_rows(hidden, 0, t_len - 1);
                    g.concat_rows(&[zero, head])
                }
                Direction::Backward => {
                    let tail = g.slice_rows(hidden, 1, t_len);
                    g.concat_rows(&[tail, zero])
                }
            }
        };
        let prev = g.input(prev);
        let pre = self.prenet(g, prev, dropout);
        let proj = self.context_input(g, dir, pre, h_prev);

        let hd = self.decoder_dim();
        let mut state = [0; 4].map(|_| g.input(Mat::zeros(1, hd)));
        let mut outs = vec![None; t_len];
        let order: Vec<usize> = match dir {
            Direction::Forward => (0..t_len).collect(),
            Direction::Backward => (0..t_len).rev().collect(),
        };
        for t in order {
            let row = g.slice_rows(proj, t, t + 1);
            let h_cur = g.slice_rows(hidden, t, t + 1);
            let (m, s) = self.decoder_cell(g, dir, row, h_cur, state);
            state = s;
            outs[t] = Some(m);
        }
        let outs: Vec<Var> = outs.into_iter().map(|o| o.unwrap()).collect();
        Ok(g.concat_rows(&outs))
    }

    /// One autoregressive step. `prev_mel` and `h_prev` are the preceding
    /// frame in decoding order (zeros at the sequence edge).
    pub fn decode_step(
        &self,
        dir: Direction,
        prev_mel: &[f64],
        h_prev: &[f64],
        h_cur: &[f64],
        state: &DecoderState,
    ) -> Result<(Vec<f64>, DecoderState)> {
        let (d, hd) = (self.hidden_dim(), self.decoder_dim());
        if prev_mel.len() != N_MELS || h_prev.len() != d || h_cur.len() != d {
            return Err(Error::shape(format!(
                "decode_step expects {N_MELS}-dim mel and {d}-dim hidden frames, got {}/{}/{}",
                prev_mel.len(),
                h_prev.len(),
                h_cur.len()
            )));
        }
        let states = [&state.context.h, &state.context.c, &state.output.h, &state.output.c];
        if states.iter().any(|m| m.shape() != (1, hd)) {
            return Err(Error::shape(format!("decoder state must be 1 x {hd}")));
        }
        let mut g = Graph::new(&self.params);
        let prev = g.input(Mat::row_vector(prev_mel));
        let pre = self.prenet(&mut g, prev, None);
        let hp = g.input(Mat::row_vector(h_prev));
        let proj = self.context_input(&mut g, dir, pre, hp);
        let hc = g.input(Mat::row_vector(h_cur));
        let vars = states.map(|m| g.input(m.clone()));
        let (mel, [h1, c1, h2, c2]) = self.decoder_cell(&mut g, dir, proj, hc, vars);
        let next = DecoderState {
            context: LstmState { h: g.value(h1).clone(), c: g.value(c1).clone() },
            output: LstmState { h: g.value(h2).clone(), c: g.value(c2).clone() },
        };
        Ok((g.value(mel).data().to_vec(), next))
    }

    /// Free-running generation over every frame of `hidden`, starting from
    /// zero frame and zero state.
    pub fn free_run(&self, dir: Direction, hidden: &HiddenSeq) -> Result<MelSpectrogram> {
        let n = hidden.n_frames();
        let zero_h = vec![0.0; hidden.dim()];
        let mut prev = vec![0.0; N_MELS];
        let mut state = DecoderState::zeros(self.decoder_dim());
        let mut out = vec![0.0; n * N_MELS];
        let order: Vec<usize> = match dir {
            Direction::Forward => (0..n).collect(),
            Direction::Backward => (0..n).rev().collect(),
        };
        let mut h_prev: &[f64] = &zero_h;
        for t in order {
            let (m, s) = self.decode_step(dir, &prev, h_prev, hidden.frame(t), &state)?;
            out[t * N_MELS..(t + 1) * N_MELS].copy_from_slice(&m);
            prev = m;
            state = s;
            h_prev = hidden.frame(t);
        }
        MelSpectrogram::new(out, n)
    }

    /// Summed squared errors per direction and the element count.
    fn loss_graph(&self, g: &mut Graph, batch: &[TrainingItem], mut dropout: Option<&mut Rng>) -> Result<(Var, Var, usize)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty training batch"));
        }
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        let mut count = 0;
        for item in batch {
            item.validate()?;
            let text = self.encode_text_graph(g, &item.phones.ids())?;
            let hidden = self.hidden_graph(g, text, &item.durations, item.speaker)?;
            let target = Mat::from_vec(item.mel.n_frames(), N_MELS, item.mel.as_slice().to_vec());
            let pf = self.teacher_forced_graph(g, hidden, &item.mel, Direction::Forward, dropout.as_deref_mut())?;
            let pb = self.teacher_forced_graph(g, hidden, &item.mel, Direction::Backward, dropout.as_deref_mut())?;
            fwd.push(g.sum_sq_err(pf, target.clone()));
            bwd.push(g.sum_sq_err(pb, target));
            count += item.mel.n_frames() * N_MELS;
        }
        let sum = |g: &mut Graph, v: &[Var]| v[1..].iter().fold(v[0], |acc, x| g.add(acc, *x));
        let f = sum(g, &fwd);
        let b = sum(g, &bwd);
        Ok((f, b, count))
    }

    /// Masked-mean MSE per direction (no gradient).
    pub fn losses(&self, batch: &[TrainingItem], dropout: Option<&mut Rng>) -> Result<AcousticLosses> {
        let mut g = Graph::new(&self.params);
        let (f, b, n) = self.loss_graph(&mut g, batch, dropout)?;
        Ok(AcousticLosses { forward: g.value(f).data()[0] / n as f64, backward: g.value(b).data()[0] / n as f64 })
    }

    /// Losses and gradients of `L_fwd + L_bwd`.
    pub fn loss_and_grads(&self, batch: &[TrainingItem], dropout: Option<&mut Rng>) -> Result<(AcousticLosses, Grads)> {
        let mut g = Graph::new(&self.params);
        let (f, b, n) = self.loss_graph(&mut g, batch, dropout)?;
        let total = g.add(f, b);
        let total = g.scale(total, 1.0 / n as f64);
        let losses = AcousticLosses { forward: g.value(f).data()[0] / n as f64, backward: g.value(b).data()[0] / n as f64 };
        if !losses.forward.is_finite() || !losses.backward.is_finite() {
            return Err(Error::NonFinite(format!(
                "acoustic loss at step {}: forward {}, backward {}",
                self.step, losses.forward, losses.backward
            )));
        }
        Ok((losses, g.backward(total)))
    }
}
