use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    attention_block, batched_positions, gru_cell, init_block, init_gru, init_linear, linear,
    linear_out,
};
use super::{esn, Family, ForecasterSpec, ModelError, PropagatorKind};
use crate::autodiff::{Bound, ParamSet, Tape, Tensor, Var};
use crate::linalg::to_row_major;
use crate::rng;

type R<'t> = Result<Var<'t>, ModelError>;

/// A forecaster's architecture and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub spec: ForecasterSpec,
    pub params: ParamSet,
}

pub fn init_encoder<G: Rng + ?Sized>(spec: &ForecasterSpec, rng: &mut G, p: &mut ParamSet) {
    let (d, k) = (spec.dim, spec.latent_dim);
    match spec.family {
        Family::Mlp => {
            let mut fan_in = spec.input_len * d;
            for i in 0..spec.depth {
                init_linear(p, rng, &format!("enc.l{i}"), fan_in, spec.width);
                fan_in = spec.width;
            }
            init_linear(p, rng, "enc.out", fan_in, k);
        }
        Family::Rnn | Family::ARnn => {
            let layers = spec.depth.max(1);
            let mut input = d;
            for i in 0..layers {
                let hidden = if i + 1 == layers { k } else { spec.width };
                init_gru(p, rng, &format!("enc.gru{i}"), input, hidden);
                input = hidden;
            }
        }
        Family::Transformer => {
            init_linear(p, rng, "enc.embed", d, spec.d_model);
            for i in 0..spec.layers {
                init_block(p, rng, &format!("enc.blk{i}"), spec.d_model);
            }
            init_linear(p, rng, "enc.latent", spec.d_model, k);
        }
        Family::Esn => esn::init_reservoir(spec, rng, p),
    }
}

/// Initializes the propagator acting on `code_dim`-vectors.
pub fn init_propagator<G: Rng + ?Sized>(
    spec: &ForecasterSpec,
    code_dim: usize,
    rng: &mut G,
    p: &mut ParamSet,
) {
    match spec.propagator {
        PropagatorKind::Identity => {}
        PropagatorKind::Koopman => {
            let noise = Normal::new(0.0, spec.koopman_init_noise.max(0.0)).expect("finite noise");
            let k = Tensor::from_fn(&[code_dim, code_dim], |i| {
                let eye = if i / code_dim == i % code_dim {
                    1.0
                } else {
                    0.0
                };
                eye + noise.sample(rng)
            });
            p.insert("prop.k", k);
        }
        PropagatorKind::Node => {
            init_linear(p, rng, "prop.f1", code_dim + 1, spec.width);
            init_linear(p, rng, "prop.f2", spec.width, code_dim);
        }
    }
}

/// Initializes the decoder reading `code_dim`-vectors.
pub fn init_decoder<G: Rng + ?Sized>(
    spec: &ForecasterSpec,
    code_dim: usize,
    rng: &mut G,
    p: &mut ParamSet,
) {
    let (d, h) = (spec.dim, spec.horizon);
    match spec.family {
        Family::Mlp => {
            let mut fan_in = code_dim;
            for i in 0..spec.depth {
                init_linear(p, rng, &format!("dec.l{i}"), fan_in, spec.width);
                fan_in = spec.width;
            }
            init_linear(p, rng, "dec.out", fan_in, h * d);
        }
        Family::Rnn | Family::ARnn => {
            init_gru(p, rng, "dec.gru", d, code_dim);
            init_linear(p, rng, "dec.out", code_dim, d);
        }
        Family::Transformer => {
            init_linear(p, rng, "dec.lift", code_dim, spec.d_model);
            for i in 0..spec.layers {
                init_block(p, rng, &format!("dec.blk{i}"), spec.d_model);
            }
            init_linear(p, rng, "dec.out", spec.d_model, d);
        }
        Family::Esn => {
            p.insert("esn.out.w", Tensor::zeros(&[code_dim, h * d]));
            p.insert("esn.out.b", Tensor::zeros(&[h * d]));
        }
    }
}

/// `[batch, L·d]` inputs to `[batch, k]` latents.
pub fn encode_graph<'t>(spec: &ForecasterSpec, b: &Bound<'t>, tape: &'t Tape, x: Var<'t>) -> R<'t> {
    let shape = x.shape();
    let (d, l) = (spec.dim, spec.input_len);
    if shape.len() != 2 || shape[1] != l * d {
        return Err(ModelError::Shape(format!(
            "encoder expects [batch, {}], got {shape:?}",
            l * d
        )));
    }
    let batch = shape[0];
    match spec.family {
        Family::Mlp => {
            let mut h = x;
            for i in 0..spec.depth {
                h = linear(b, &format!("enc.l{i}"), h)?.tanh()?;
            }
            Ok(linear(b, "enc.out", h)?)
        }
        Family::Rnn | Family::ARnn => {
            let layers = spec.depth.max(1);
            let mut hs = Vec::with_capacity(layers);
            for i in 0..layers {
                let hid = b.get(&format!("enc.gru{i}.wh"))?.shape()[0];
                hs.push(tape.constant(Tensor::zeros(&[batch, hid])));
            }
            for t in 0..l {
                let mut inp = x.slice(1, t * d, (t + 1) * d)?;
                for (i, h) in hs.iter_mut().enumerate() {
                    *h = gru_cell(b, &format!("enc.gru{i}"), inp, *h)?;
                    inp = *h;
                }
            }
            Ok(*hs.last().expect("at least one layer"))
        }
        Family::Transformer => {
            let width = spec.d_model;
            let tokens = x.reshape(&[batch, l, d])?;
            let mut h =
                linear(b, "enc.embed", tokens)?.add(batched_positions(tape, batch, l, width))?;
            for i in 0..spec.layers {
                h = attention_block(b, tape, &format!("enc.blk{i}"), h, spec.heads, false)?;
            }
            Ok(linear(b, "enc.latent", h.mean_axis(1)?)?)
        }
        Family::Esn => esn::reservoir_graph(spec, b, tape, x),
    }
}

fn node_field<'t>(b: &Bound<'t>, tape: &'t Tape, z: Var<'t>, t: f64) -> R<'t> {
    let batch = z.shape()[0];
    let time = tape.constant(Tensor::full(&[batch, 1], t));
    let inp = Var::concat(&[z, time], 1)?;
    Ok(linear(b, "prop.f2", linear(b, "prop.f1", inp)?.tanh()?)?)
}

/// Advances `[batch, k]` latents over the horizon.
pub fn propagate_graph<'t>(
    spec: &ForecasterSpec,
    b: &Bound<'t>,
    tape: &'t Tape,
    z: Var<'t>,
) -> R<'t> {
    match spec.propagator {
        PropagatorKind::Identity => Ok(z),
        PropagatorKind::Koopman => {
            let kt = b.get("prop.k")?.transpose()?;
            let mut z = z;
            for _ in 0..spec.horizon {
                z = z.matmul(kt)?;
            }
            Ok(z)
        }
        PropagatorKind::Node => {
            let steps = spec.node_steps();
            let h = spec.horizon as f64 * spec.dt / steps as f64;
            let mut z = z;
            for s in 0..steps {
                let t = s as f64 * h;
                let k1 = node_field(b, tape, z, t)?;
                let k2 = node_field(b, tape, z.add(k1.scale(h / 2.0)?)?, t + h / 2.0)?;
                let k3 = node_field(b, tape, z.add(k2.scale(h / 2.0)?)?, t + h / 2.0)?;
                let k4 = node_field(b, tape, z.add(k3.scale(h)?)?, t + h)?;
                let incr = k1.add(k2.scale(2.0)?)?.add(k3.scale(2.0)?)?.add(k4)?;
                z = z.add(incr.scale(h / 6.0)?)?;
            }
            Ok(z)
        }
    }
}

/// `[batch, k]` latents to `[batch, H·d]` forecasts.
///
/// `teacher` (`[batch, H·d]`) replaces the A-RNN's fed-back predictions with
/// the shifted ground truth; other families ignore it.
pub fn decode_graph<'t>(
    spec: &ForecasterSpec,
    b: &Bound<'t>,
    tape: &'t Tape,
    z: Var<'t>,
    teacher: Option<Var<'t>>,
) -> R<'t> {
    let (d, hor) = (spec.dim, spec.horizon);
    let batch = z.shape()[0];
    match spec.family {
        Family::Mlp => {
            let mut h = z;
            for i in 0..spec.depth {
                h = linear(b, &format!("dec.l{i}"), h)?.tanh()?;
            }
            Ok(linear(b, "dec.out", h)?)
        }
        Family::Rnn | Family::ARnn => {
            let zero = tape.constant(Tensor::zeros(&[batch, d]));
            let autoregressive = spec.family == Family::ARnn;
            let mut h = z;
            let mut inp = zero;
            let mut outs = Vec::with_capacity(hor);
            for i in 0..hor {
                h = gru_cell(b, "dec.gru", inp, h)?;
                let y = linear(b, "dec.out", h)?;
                outs.push(y);
                if autoregressive {
                    inp = match teacher {
                        Some(t) => t.slice(1, i * d, (i + 1) * d)?,
                        None => y,
                    };
                }
            }
            Ok(Var::concat(&outs, 1)?)
        }
        Family::Transformer => {
            let width = spec.d_model;
            let lifted = linear(b, "dec.lift", z)?.reshape(&[batch, 1, width])?;
            let ones = tape.constant(Tensor::full(&[batch, hor, 1], 1.0));
            let mut h = ones
                .matmul(lifted)?
                .add(batched_positions(tape, batch, hor, width))?;
            for i in 0..spec.layers {
                h = attention_block(b, tape, &format!("dec.blk{i}"), h, spec.heads, true)?;
            }
            let out = linear(b, "dec.out", h)?;
            debug_assert_eq!(linear_out(b, "dec.out")?, d);
            Ok(out.reshape(&[batch, hor * d])?)
        }
        Family::Esn => Ok(linear(b, "esn.out", z)?),
    }
}

impl Forecaster {
    /// Fresh parameters drawn from `spec.seed`.
    pub fn init(spec: &ForecasterSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = rng::stream(rng::derive(spec.seed, "init"), 0);
        let mut params = ParamSet::new();
        init_encoder(spec, &mut rng, &mut params);
        init_propagator(spec, spec.code_dim(), &mut rng, &mut params);
        init_decoder(spec, spec.code_dim(), &mut rng, &mut params);
        Ok(Self {
            spec: spec.clone(),
            params,
        })
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    /// Full forward graph; `teacher` is only honored by the A-RNN with teacher forcing enabled.
    pub fn forward_graph<'t>(
        &self,
        b: &Bound<'t>,
        tape: &'t Tape,
        x: Var<'t>,
        teacher: Option<Var<'t>>,
    ) -> R<'t> {
        let spec = &self.spec;
        let teacher = teacher.filter(|_| spec.family == Family::ARnn && spec.teacher_forcing);
        let z = encode_graph(spec, b, tape, x)?;
        let z = propagate_graph(spec, b, tape, z)?;
        decode_graph(spec, b, tape, z, teacher)
    }

    fn frozen<F>(&self, input: &Tensor, f: F) -> Result<Tensor, ModelError>
    where
        F: for<'t> Fn(&Bound<'t>, &'t Tape, Var<'t>) -> R<'t>,
    {
        let tape = Tape::new();
        let b = self.params.bind_frozen(&tape);
        let x = tape.constant(input.clone());
        Ok(f(&b, &tape, x)?.value())
    }

    /// `[batch, L·d]` → `[batch, k]`.
    pub fn encode_batch(&self, inputs: &Tensor) -> Result<Tensor, ModelError> {
        self.frozen(inputs, |b, tape, x| encode_graph(&self.spec, b, tape, x))
    }

    pub fn propagate_batch(&self, z: &Tensor) -> Result<Tensor, ModelError> {
        self.check_code(z)?;
        self.frozen(z, |b, tape, x| propagate_graph(&self.spec, b, tape, x))
    }

    /// `[batch, k]` → `[batch, H·d]`.
    pub fn decode_batch(&self, z: &Tensor) -> Result<Tensor, ModelError> {
        self.check_code(z)?;
        self.frozen(z, |b, tape, x| decode_graph(&self.spec, b, tape, x, None))
    }

    /// Autoregressive (evaluation-mode) forecast, `[batch, L·d]` → `[batch, H·d]`.
    pub fn predict_batch(&self, inputs: &Tensor) -> Result<Tensor, ModelError> {
        self.frozen(inputs, |b, tape, x| self.forward_graph(b, tape, x, None))
    }

    fn check_code(&self, z: &Tensor) -> Result<(), ModelError> {
        if z.rank() != 2 || z.shape()[1] != self.spec.code_dim() {
            return Err(ModelError::Shape(format!(
                "expected latents [batch, {}], got {:?}",
                self.spec.code_dim(),
                z.shape()
            )));
        }
        Ok(())
    }

    /// Encodes one `L × d` window.
    pub fn encode(&self, window: &DMatrix<f64>) -> Result<DVector<f64>, ModelError> {
        let (l, d) = (self.spec.input_len, self.spec.dim);
        if window.shape() != (l, d) {
            return Err(ModelError::Shape(format!(
                "window {:?}, expected ({l}, {d})",
                window.shape()
            )));
        }
        let x = Tensor::new(vec![1, l * d], to_row_major(window))?;
        Ok(DVector::from_vec(self.encode_batch(&x)?.into_data()))
    }

    pub fn propagate(&self, z0: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let z = Tensor::new(vec![1, z0.len()], z0.as_slice().to_vec())?;
        Ok(DVector::from_vec(self.propagate_batch(&z)?.into_data()))
    }

    /// Decodes one latent into an `H × d` forecast.
    pub fn decode(&self, z: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        let zt = Tensor::new(vec![1, z.len()], z.as_slice().to_vec())?;
        let out = self.decode_batch(&zt)?;
        Ok(DMatrix::from_row_slice(
            self.spec.horizon,
            self.spec.dim,
            out.data(),
        ))
    }

    /// Forecast of one `L × d` window as `H × d`.
    pub fn forecast(&self, window: &DMatrix<f64>) -> Result<DMatrix<f64>, ModelError> {
        let z = self.encode(window)?;
        self.decode(&self.propagate(&z)?)
    }
}
