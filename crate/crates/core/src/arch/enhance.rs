use ndarray::{Array2, Ix2};

use super::MaskNet;
use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::nn::Ctx;
use crate::signal::{apply_mask, istft, log_magnitude, stft, MaskTensor, Waveform};

/// Anything that maps a `(frames, bins)` log-magnitude to an enhanced
/// magnitude estimate via a mask.
pub trait MaskEstimator {
    /// Mask in `[0, 1]`, same shape as the input.
    fn mask(&self, logmag: &Array2<f64>) -> Result<Array2<f64>>;

    /// Enhanced magnitude. Defaults to the mask applied to `noisy_mag`.
    fn enhanced_magnitude(&self, logmag: &Array2<f64>, noisy_mag: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.mask(logmag)? * noisy_mag)
    }

    /// Whether [`Self::enhanced_magnitude`] is the model's own output rather
    /// than an external mask application.
    fn multiplies_internally(&self) -> bool {
        false
    }
}

/// Fixed mask value everywhere; useful for harness checks.
#[derive(Clone, Copy, Debug)]
pub struct ConstantMask(pub f64);

impl MaskEstimator for ConstantMask {
    fn mask(&self, logmag: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(Array2::from_elem(logmag.dim(), self.0))
    }
}

fn to_2d(t: &crate::autograd::Tensor, dim: (usize, usize)) -> Result<Array2<f64>> {
    t.view()
        .into_shape_with_order(vec![dim.0, dim.1])
        .and_then(|v| v.into_dimensionality::<Ix2>())
        .map(|v| v.to_owned())
        .map_err(|e| Error::Invalid(format!("network output reshape: {e}")))
}

impl MaskEstimator for MaskNet {
    fn mask(&self, logmag: &Array2<f64>) -> Result<Array2<f64>> {
        let g = Graph::new();
        let bound = self.params().bind(&g);
        let ctx = Ctx::new(&bound, self.buffers(), false);
        let (t, f) = logmag.dim();
        let x = g.leaf(logmag.clone().into_shape_with_order(vec![1, t, f]).unwrap());
        to_2d(&self.forward(&ctx, x, None).mask.value(), (t, f))
    }

    fn enhanced_magnitude(&self, logmag: &Array2<f64>, noisy_mag: &Array2<f64>) -> Result<Array2<f64>> {
        if !MaskNet::multiplies_internally(self) {
            return Ok(self.mask(logmag)? * noisy_mag);
        }
        let g = Graph::new();
        let bound = self.params().bind(&g);
        let ctx = Ctx::new(&bound, self.buffers(), false);
        let (t, f) = logmag.dim();
        let x = g.leaf(logmag.clone().into_shape_with_order(vec![1, t, f]).unwrap());
        let m = g.leaf(noisy_mag.clone().into_shape_with_order(vec![1, t, f]).unwrap());
        let out = self.forward(&ctx, x, Some(m));
        let enhanced = out.enhanced.expect("multiplication layer output");
        to_2d(&enhanced.value(), (t, f))
    }

    fn multiplies_internally(&self) -> bool {
        MaskNet::multiplies_internally(self)
    }
}

/// Analysis, masking and resynthesis with the noisy phase. Output has the
/// input's length.
pub fn enhance_with(est: &dyn MaskEstimator, noisy: &Waveform) -> Result<Waveform> {
    let spec = stft(noisy)?;
    let logmag = log_magnitude(&spec).values;
    let enhanced = if est.multiplies_internally() {
        spec.with_magnitude(&est.enhanced_magnitude(&logmag, &spec.magnitude())?)?
    } else {
        apply_mask(&spec, &MaskTensor { values: est.mask(&logmag)? })?
    };
    istft(&enhanced)
}

/// Enhance with a trained variant network.
pub fn forward_enhance(net: &MaskNet, noisy: &Waveform) -> Result<Waveform> {
    enhance_with(net, noisy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{snr_db, SAMPLE_RATE};

    fn noisy() -> Waveform {
        let s: Vec<f64> = (0..16000)
            .map(|i| 0.3 * (i as f64 * 0.05).sin() + 0.1 * ((i * 7919 % 1000) as f64 / 1000.0 - 0.5))
            .collect();
        Waveform::new(s, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn unit_mask_is_identity() {
        let w = noisy();
        let out = enhance_with(&ConstantMask(1.0), &w).unwrap();
        assert_eq!(out.len(), w.len());
        assert!(snr_db(&w.samples, &out.samples, 400, w.len() - 400) > 60.0);
    }

    #[test]
    fn half_mask_halves() {
        let w = noisy();
        let out = enhance_with(&ConstantMask(0.5), &w).unwrap();
        let half = w.scaled(0.5);
        assert!(snr_db(&half.samples, &out.samples, 400, w.len() - 400) > 60.0);
    }
}
