use std::f64::consts::PI;

const ZERO_CROSSINGS: f64 = 24.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Band-limited rational resampling with a Blackman-windowed sinc kernel.
/// The input is treated as zero outside its support; the output holds
/// `floor(len * to / from)` samples.
pub fn resample(x: &[f64], from: u32, to: u32) -> Vec<f64> {
    assert!(from > 0 && to > 0, "sample rates must be positive");
    if from == to {
        return x.to_vec();
    }
    let g = gcd(from as u64, to as u64);
    let up = to as u64 / g;
    let down = from as u64 / g;
    // cutoff in cycles per input sample, slightly under the lower Nyquist
    let cutoff = 0.5 * (up as f64 / down as f64).min(1.0) * 0.96;
    let half = (ZERO_CROSSINGS / (2.0 * cutoff)).ceil() as i64;
    let taps: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            (-half..=half)
                .map(|k| {
                    let d = k as f64 - frac;
                    let r = d / (half as f64 + 1.0);
                    let w = if r.abs() >= 1.0 {
                        0.0
                    } else {
                        0.42 + 0.5 * (PI * r).cos() + 0.08 * (2.0 * PI * r).cos()
                    };
                    2.0 * cutoff * sinc(2.0 * cutoff * d) * w
                })
                .collect()
        })
        .collect();
    let out_len = (x.len() as u64 * up / down) as usize;
    let n = x.len() as i64;
    (0..out_len as u64)
        .map(|m| {
            let pos = m * down;
            let base = (pos / up) as i64;
            let h = &taps[(pos % up) as usize];
            let mut acc = 0.0;
            for (j, &c) in h.iter().enumerate() {
                let idx = base + j as i64 - half;
                if idx >= 0 && idx < n {
                    acc += c * x[idx as usize];
                }
            }
            acc
        })
        .collect()
}
