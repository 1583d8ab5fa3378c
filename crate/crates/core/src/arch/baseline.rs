use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::standardize;
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::nn::{Ctx, Linear, ParamSet, Recurrent};

/// Stacked (Bi)LSTM followed by a per-frame sigmoid output layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnMaskerSpec {
    pub bins: usize,
    pub hidden: usize,
    pub layers: usize,
    pub bidirectional: bool,
}

#[derive(Clone, Debug)]
pub struct RnnMasker {
    pub spec: RnnMaskerSpec,
    pub params: ParamSet,
    pub buffers: ParamSet,
    rnn: Recurrent,
    out: Linear,
}

impl RnnMasker {
    pub fn new(spec: RnnMaskerSpec, seed: u64) -> Result<Self> {
        if spec.bins == 0 || spec.hidden == 0 || spec.layers == 0 {
            return Err(Error::Spec {
                layer: "rnn".into(),
                reason: "zero bins, units or layers".into(),
            });
        }
        let rnn = Recurrent::new("rnn", spec.bins, spec.hidden, spec.layers, spec.bidirectional);
        let out = Linear {
            name: "out".into(),
            din: rnn.out_width(),
            dout: spec.bins,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        rnn.init(&mut params, &mut rng);
        out.init(&mut params, &mut rng);
        Ok(Self {
            spec,
            params,
            buffers: ParamSet::new(),
            rnn,
            out,
        })
    }

    /// `[batch, frames, bins]` log-magnitudes to a mask of the same shape.
    pub fn forward<'g>(&self, ctx: &Ctx<'_, 'g>, x: Var<'g>) -> Var<'g> {
        let s = x.shape();
        let (n, t, f) = (s[0], s[1], s[2]);
        assert_eq!(f, self.spec.bins, "rnn masker input bins");
        let xs = x.graph().leaf(standardize(&x.value()));
        let h = self.rnn.forward(ctx, xs.permute(&[1, 0, 2]));
        self.out
            .forward(ctx, h.reshape(&[t * n, self.rnn.out_width()]))
            .sigmoid()
            .reshape(&[t, n, f])
            .permute(&[1, 0, 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn output_shape_and_count() {
        let spec = RnnMaskerSpec {
            bins: 257,
            hidden: 5,
            layers: 2,
            bidirectional: true,
        };
        let m = RnnMasker::new(spec, 0).unwrap();
        // 2 directions x 2 layers of LSTM plus the output layer
        let expect = 2 * 4 * 5 * (257 + 5 + 1) + 2 * 4 * 5 * (10 + 5 + 1) + 257 * 10 + 257;
        assert_eq!(m.params.numel(), expect);
        let g = Graph::new();
        let bound = m.params.bind(&g);
        let ctx = Ctx::new(&bound, &m.buffers, false);
        let x = g.leaf(ArrayD::from_shape_fn(IxDyn(&[2, 4, 257]), |i| (i[1] + i[2]) as f64 * 0.01));
        let y = m.forward(&ctx, x);
        assert_eq!(y.shape(), [2, 4, 257]);
        assert!(y.value().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
