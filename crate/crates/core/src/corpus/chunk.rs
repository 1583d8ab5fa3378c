use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::Utterance;
use crate::error::{Error, Result};
use crate::signal::{log_magnitude, psm, stft, Spectrogram, NUM_BINS};

/// What to do with a trailing chunk shorter than the chunk length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialPolicy {
    #[default]
    Drop,
    /// Zero-pad features and target; `valid_frames` marks the real frames.
    Pad,
}

/// Per-utterance T-F data.
#[derive(Clone, Debug)]
pub struct Features {
    pub id: String,
    pub noisy: Spectrogram,
    pub clean: Spectrogram,
    /// Noisy log-magnitude, `(frames, bins)`.
    pub input: Array2<f64>,
    /// Clipped phase-sensitive mask.
    pub target: Array2<f64>,
}

impl Features {
    pub fn from_utterance(u: &Utterance) -> Result<Self> {
        let noisy = stft(&u.noisy)?;
        let clean = stft(&u.clean)?;
        let target = psm(&clean, &noisy)?.values;
        Ok(Self {
            id: u.id.clone(),
            input: log_magnitude(&noisy).values,
            target,
            noisy,
            clean,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.input.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct TrainingChunk {
    pub id: String,
    pub start_frame: usize,
    pub input: Array2<f64>,
    pub target: Array2<f64>,
    pub noisy: Spectrogram,
    pub clean: Spectrogram,
    /// Leading frames holding real data; the rest is padding.
    pub valid_frames: usize,
}

impl TrainingChunk {
    pub fn num_frames(&self) -> usize {
        self.input.nrows()
    }

    /// Noisy magnitudes padded to the chunk length.
    pub fn noisy_magnitude(&self) -> Array2<f64> {
        pad_rows(self.noisy.magnitude(), self.num_frames())
    }
}

fn pad_rows(a: Array2<f64>, rows: usize) -> Array2<f64> {
    if a.nrows() == rows {
        return a;
    }
    let mut out = Array2::zeros((rows, a.ncols()));
    out.slice_mut(s![..a.nrows(), ..]).assign(&a);
    out
}

/// Non-overlapping chunks of `frames` frames, or the whole utterance when
/// `frames` is `None`.
pub fn chunk(f: &Features, frames: Option<usize>, policy: PartialPolicy) -> Result<Vec<TrainingChunk>> {
    let total = f.num_frames();
    if f.input.ncols() != NUM_BINS {
        return Err(Error::Shape {
            what: "features",
            expected: vec![total, NUM_BINS],
            got: vec![total, f.input.ncols()],
        });
    }
    let len = match frames {
        None => total,
        Some(0) => return Err(Error::Invalid("chunk length must be positive".into())),
        Some(t) => t,
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < total {
        let valid = len.min(total - start);
        if valid < len && policy == PartialPolicy::Drop {
            break;
        }
        let rows = s![start..start + valid, ..];
        out.push(TrainingChunk {
            id: f.id.clone(),
            start_frame: start,
            input: pad_rows(f.input.slice(rows).to_owned(), len),
            target: pad_rows(f.target.slice(rows).to_owned(), len),
            noisy: f.noisy.frames(start, valid)?,
            clean: f.clean.frames(start, valid)?,
            valid_frames: valid,
        });
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Waveform, FRAME_LENGTH, HOP, SAMPLE_RATE};

    fn features(frames: usize) -> Features {
        let n = FRAME_LENGTH + (frames - 1) * HOP;
        let clean: Vec<f64> = (0..n).map(|i| (i as f64 * 0.03).sin() * 0.4).collect();
        let noisy: Vec<f64> = clean.iter().enumerate().map(|(i, c)| c + 0.05 * ((i * 31 % 17) as f64 - 8.0) / 8.0).collect();
        let u = Utterance {
            id: "u".into(),
            clean: Waveform::new(clean, SAMPLE_RATE).unwrap(),
            noisy: Waveform::new(noisy, SAMPLE_RATE).unwrap(),
        };
        Features::from_utterance(&u).unwrap()
    }

    #[test]
    fn drop_policy_counts() {
        assert_eq!(chunk(&features(98), Some(100), PartialPolicy::Drop).unwrap().len(), 0);
        let c = chunk(&features(250), Some(100), PartialPolicy::Drop).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].start_frame, 100);
        assert!(c.iter().all(|c| c.num_frames() == 100 && c.valid_frames == 100));
    }

    #[test]
    fn pad_policy_marks_padding() {
        let f = features(250);
        let c = chunk(&f, Some(100), PartialPolicy::Pad).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[2].valid_frames, 50);
        assert_eq!(c[2].num_frames(), 100);
        assert!(c[2].target.slice(s![50.., ..]).iter().all(|&v| v == 0.0));
        assert_eq!(c[2].noisy_magnitude().dim(), (100, NUM_BINS));
        let whole = chunk(&f, None, PartialPolicy::Drop).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].num_frames(), 250);
    }
}
