//! Adversarial objectives and reconstruction terms.
//!
//! Every function works on graph values so the trainer can differentiate the
//! result; expectations are means over the batch axis.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::arch::LossFamily;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::quality::QualitySource;

/// Keeps the gradient-norm square root differentiable at zero.
const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// `None` for the non-adversarial baselines.
    #[serde(default)]
    pub family: Option<LossFamily>,
    #[serde(default = "default_gp")]
    pub lambda_gp: f64,
    #[serde(default = "default_l1")]
    pub lambda_l1: f64,
    #[serde(default = "default_mse")]
    pub lambda_mse: f64,
    /// Normalized quality metric regressed by the metric discriminator.
    #[serde(default)]
    pub q_metric: Option<QualitySource>,
}

fn default_gp() -> f64 {
    10.0
}
fn default_l1() -> f64 {
    200.0
}
fn default_mse() -> f64 {
    4.0
}

impl LossConfig {
    pub fn new(family: Option<LossFamily>) -> Self {
        Self {
            family,
            lambda_gp: default_gp(),
            lambda_l1: default_l1(),
            lambda_mse: default_mse(),
            q_metric: (family == Some(LossFamily::Metric)).then_some(QualitySource::Surrogate),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("loss.lambda_gp", self.lambda_gp),
            ("loss.lambda_l1", self.lambda_l1),
            ("loss.lambda_mse", self.lambda_mse),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        match (self.family == Some(LossFamily::Metric), self.q_metric.is_some()) {
            (true, false) => Err(Error::config("loss.q_metric", "required for the metric family")),
            (false, true) => Err(Error::config("loss.q_metric", "only used by the metric family")),
            _ => Ok(()),
        }
    }

    /// GP weight, zero when the family has no penalty.
    pub fn gp_weight(&self) -> f64 {
        match self.family {
            Some(f) if f.uses_gradient_penalty() => self.lambda_gp,
            _ => 0.0,
        }
    }

    /// L1 weight in the generator loss, zero outside the penalized families.
    pub fn l1_weight(&self) -> f64 {
        match self.family {
            Some(f) if f.uses_gradient_penalty() => self.lambda_l1,
            _ => 0.0,
        }
    }
}

/// Scalar loss values from one step, split into named parts.
///
/// `d_total = adversarial_d + metric_regression + lambda_gp * gp` and
/// `g_total = adversarial_g + lambda_l1 * l1 + lambda_mse * mse`, each part
/// present only if it applies.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub d_total: f64,
    pub g_total: f64,
    pub components: BTreeMap<String, f64>,
}

impl LossBreakdown {
    pub fn component(&self, key: &str) -> f64 {
        self.components.get(key).copied().unwrap_or(0.0)
    }

    /// Totals recomputed from the components with the given weights.
    pub fn resum(&self, lambda_gp: f64, lambda_l1: f64, lambda_mse: f64) -> (f64, f64) {
        let c = |k| self.component(k);
        (
            c("adversarial_d") + c("metric_regression") + lambda_gp * c("gp"),
            c("adversarial_g") + lambda_l1 * c("l1") + lambda_mse * c("mse"),
        )
    }

    pub fn merge(&mut self, other: &LossBreakdown) {
        if other.components.keys().any(|k| k.ends_with("_d") || k == "gp" || k == "metric_regression") {
            self.d_total = other.d_total;
        }
        if other.components.keys().any(|k| k.ends_with("_g") || k == "l1" || k == "mse") {
            self.g_total = other.g_total;
        }
        self.components.extend(other.components.iter().map(|(k, v)| (k.clone(), *v)));
    }
}

fn batch_len(v: Var<'_>, what: &'static str) -> Result<usize> {
    let s = v.shape();
    if s.len() != 1 {
        return Err(Error::Shape {
            what,
            expected: vec![s.iter().product()],
            got: s,
        });
    }
    if s[0] == 0 {
        return Err(Error::Empty(what));
    }
    Ok(s[0])
}

fn same_batch(a: Var<'_>, b: Var<'_>) -> Result<()> {
    let (na, nb) = (batch_len(a, "real logits")?, batch_len(b, "fake logits")?);
    if na != nb {
        return Err(Error::Shape {
            what: "fake logits",
            expected: vec![na],
            got: vec![nb],
        });
    }
    Ok(())
}

/// `-mean D_l(y) + mean D_l(y_hat)`.
pub fn wasserstein_d<'g>(real: Var<'g>, fake: Var<'g>) -> Result<Var<'g>> {
    same_batch(real, fake)?;
    Ok(fake.mean() - real.mean())
}

/// `-mean D_l(y_hat)`.
pub fn wasserstein_g(fake: Var<'_>) -> Result<Var<'_>> {
    batch_len(fake, "fake logits")?;
    Ok(-fake.mean())
}

/// Penalty `mean_b (||grad_v D_l(v)||_2 - 1)^2` at `v = eps*y + (1-eps)*y_hat`
/// with one `eps` per batch element. `critic` maps the interpolated masks to
/// per-element logits; the result stays differentiable with respect to the
/// critic's parameters.
pub fn gradient_penalty<'g, F>(graph: &'g Graph, critic: F, real: Var<'g>, fake: Var<'g>, eps: &[f64]) -> Result<Var<'g>>
where
    F: FnOnce(Var<'g>) -> Result<Var<'g>>,
{
    let shape = real.shape();
    if fake.shape() != shape {
        return Err(Error::Shape {
            what: "fake masks",
            expected: shape,
            got: fake.shape(),
        });
    }
    let n = *shape.first().ok_or(Error::Empty("gradient penalty batch"))?;
    if n == 0 {
        return Err(Error::Empty("gradient penalty batch"));
    }
    if eps.len() != n {
        return Err(Error::Shape {
            what: "interpolation draws",
            expected: vec![n],
            got: vec![eps.len()],
        });
    }
    if eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::Invalid("interpolation draws must lie in [0, 1]".into()));
    }
    let mut bshape = vec![1; shape.len()];
    bshape[0] = n;
    let e = Rc::new(ArrayD::from_shape_vec(IxDyn(&bshape), eps.to_vec()).unwrap());
    let one_minus = Rc::new(e.mapv(|v| 1.0 - v));
    let mixed = real.mul_const(e) + fake.mul_const(one_minus);
    let logits = critic(mixed)?;
    if logits.shape() != [n] {
        return Err(Error::Invalid(format!(
            "critic must return one linear logit per element, got shape {:?}",
            logits.shape()
        )));
    }
    let grad = graph.grad(logits.sum(), &[mixed])[0];
    let sq = grad.square().reshape(&[n, shape[1..].iter().product()]).sum_axis(1);
    let norm = sq.add_scalar(NORM_EPS).sqrt();
    Ok(norm.add_scalar(-1.0).square().mean())
}

fn check_pair<'g>(est: Var<'g>, target: Var<'g>) -> Result<()> {
    if est.shape() != target.shape() {
        return Err(Error::Shape {
            what: "estimate",
            expected: target.shape(),
            got: est.shape(),
        });
    }
    if est.value().is_empty() {
        return Err(Error::Empty("estimate"));
    }
    Ok(())
}

/// Mean absolute difference over every element.
pub fn l1<'g>(est: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    check_pair(est, target)?;
    Ok((est - target).abs().mean())
}

/// Mean squared difference over every element.
pub fn mse<'g>(est: Var<'g>, target: Var<'g>) -> Result<Var<'g>> {
    check_pair(est, target)?;
    Ok((est - target).square().mean())
}

/// `(d, g)` with `d = -mean log sig(D_l(y) - D_l(y_hat))` and `g` its mirror.
pub fn relativistic<'g>(real: Var<'g>, fake: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
    same_batch(real, fake)?;
    let diff = real - fake;
    Ok((-diff.log_sigmoid().mean(), -(-diff).log_sigmoid().mean()))
}

/// Relativistic-average losses: each side is compared against the batch
/// mean of the other.
pub fn relativistic_average<'g>(real: Var<'g>, fake: Var<'g>) -> Result<(Var<'g>, Var<'g>)> {
    let n = batch_len(real, "real logits")?;
    same_batch(real, fake)?;
    let real_rel = real - fake.mean().broadcast_to(&[n]);
    let fake_rel = fake - real.mean().broadcast_to(&[n]);
    // log(1 - sig(z)) = log sig(-z)
    let d = -real_rel.log_sigmoid().mean() - (-fake_rel).log_sigmoid().mean();
    let g = -fake_rel.log_sigmoid().mean() - (-real_rel).log_sigmoid().mean();
    Ok((d, g))
}

/// Metric-family terms. Returns `(clean_term, regression_term, g)` where
/// the discriminator loss is `clean_term + regression_term`:
/// `mean (D_l(s,s) - 1)^2`, `mean (D_l(G(x),s) - q)^2` and
/// `g = mean (D_l(G(x),s) - 1)^2`.
pub fn metric_terms<'g>(enhanced: Var<'g>, clean: Var<'g>, q: &[f64]) -> Result<(Var<'g>, Var<'g>, Var<'g>)> {
    let n = batch_len(enhanced, "enhanced logits")?;
    same_batch(clean, enhanced)?;
    if q.len() != n {
        return Err(Error::Shape {
            what: "quality scores",
            expected: vec![n],
            got: vec![q.len()],
        });
    }
    if let Some(bad) = q.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Invalid(format!("normalized quality score {bad} outside [0, 1]")));
    }
    let graph = enhanced.graph();
    let qv = graph.leaf(ArrayD::from_shape_vec(IxDyn(&[n]), q.to_vec()).unwrap());
    let clean_term = clean.add_scalar(-1.0).square().mean();
    let regression = (enhanced - qv).square().mean();
    let g = enhanced.add_scalar(-1.0).square().mean();
    Ok((clean_term, regression, g))
}

/// `(d, g)` for the metric family.
pub fn metric<'g>(enhanced: Var<'g>, clean: Var<'g>, q: &[f64]) -> Result<(Var<'g>, Var<'g>)> {
    let (a, b, g) = metric_terms(enhanced, clean, q)?;
    Ok((a + b, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec1<'g>(g: &'g Graph, v: &[f64]) -> Var<'g> {
        g.leaf(ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.to_vec()).unwrap())
    }

    #[test]
    fn wasserstein_examples() {
        let g = Graph::new();
        let d = |r: &[f64], f: &[f64]| wasserstein_d(vec1(&g, r), vec1(&g, f)).unwrap().item();
        assert_eq!(d(&[3.0], &[1.0]), -2.0);
        assert_eq!(d(&[1.5, 2.0], &[1.5, 2.0]), 0.0);
        assert_eq!(d(&[1.0, 3.0], &[0.0, 0.0]), -2.0);
        let gl = |f: &[f64]| wasserstein_g(vec1(&g, f)).unwrap().item();
        assert_eq!(gl(&[0.0]), 0.0);
        assert_eq!(gl(&[2.0]), -2.0);
        assert_eq!(gl(&[-1.0, 3.0]), -1.0);
        assert!(matches!(wasserstein_g(vec1(&g, &[])), Err(Error::Empty(_))));
        assert!(wasserstein_d(vec1(&g, &[1.0]), vec1(&g, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn relativistic_values() {
        let g = Graph::new();
        let (d, gl) = relativistic(vec1(&g, &[0.3, -1.0]), vec1(&g, &[0.3, -1.0])).unwrap();
        assert!((d.item() - 2f64.ln()).abs() < 1e-12);
        assert!((gl.item() - 2f64.ln()).abs() < 1e-12);
        let (d, gl) = relativistic(vec1(&g, &[20.0]), vec1(&g, &[0.0])).unwrap();
        assert!((d.item() - 2.061153620314e-9).abs() < 1e-17);
        assert!((gl.item() - 20.0).abs() < 1e-8);
        let (d, gl) = relativistic(vec1(&g, &[-800.0]), vec1(&g, &[800.0])).unwrap();
        assert!(d.item().is_finite() && gl.item() == 0.0);
    }

    #[test]
    fn relativistic_average_batch_one() {
        let g = Graph::new();
        let (r, f) = (0.7, -0.4);
        let (d, gl) = relativistic_average(vec1(&g, &[r]), vec1(&g, &[f])).unwrap();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let d_ref = -sig(r - f).ln() - (1.0 - sig(f - r)).ln();
        let g_ref = -sig(f - r).ln() - (1.0 - sig(r - f)).ln();
        assert!((d.item() - d_ref).abs() < 1e-12);
        assert!((gl.item() - g_ref).abs() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        let g = Graph::new();
        let (d, gl) = metric(vec1(&g, &[0.2]), vec1(&g, &[0.5]), &[0.6]).unwrap();
        assert!((d.item() - 0.41).abs() < 1e-12);
        assert!((gl.item() - 0.64).abs() < 1e-12);
        let (d, _) = metric(vec1(&g, &[0.37]), vec1(&g, &[1.0]), &[0.37]).unwrap();
        assert_eq!(d.item(), 0.0);
        assert!(metric(vec1(&g, &[0.2]), vec1(&g, &[0.5]), &[1.2]).is_err());
    }

    #[test]
    fn penalty_of_linear_critics() {
        let g = Graph::new();
        let (t, f) = (4, 6);
        let y = g.leaf(ArrayD::from_elem(IxDyn(&[2, t, f]), 0.8));
        let yh = g.leaf(ArrayD::from_elem(IxDyn(&[2, t, f]), 0.1));
        let gp = gradient_penalty(&g, |v| Ok(v.reshape(&[2, t * f]).sum_axis(1)), y, yh, &[0.3, 0.9])
            .unwrap()
            .item();
        let expect = ((t * f) as f64).sqrt() - 1.0;
        assert!((gp - expect * expect).abs() < 1e-9);
        let gp = gradient_penalty(&g, |v| Ok(v.slice(1, 0, 1).slice(2, 0, 1).reshape(&[2])), y, yh, &[0.5, 0.5])
            .unwrap()
            .item();
        assert!(gp.abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::new(Some(LossFamily::Metric)).validate().is_ok());
        let mut c = LossConfig::new(Some(LossFamily::Metric));
        c.q_metric = None;
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "loss.q_metric"));
        let mut c = LossConfig::new(Some(LossFamily::Wasserstein));
        c.lambda_l1 = -1.0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn wasserstein_shift(v in prop::collection::vec(-5.0f64..5.0, 1..6), w in prop::collection::vec(-5.0f64..5.0, 1..6), c in -10.0f64..10.0) {
            let n = v.len().min(w.len());
            let g = Graph::new();
            let (r, f) = (&v[..n], &w[..n]);
            let rs: Vec<f64> = r.iter().map(|x| x + c).collect();
            let fs: Vec<f64> = f.iter().map(|x| x + c).collect();
            let d0 = wasserstein_d(vec1(&g, r), vec1(&g, f)).unwrap().item();
            let d1 = wasserstein_d(vec1(&g, &rs), vec1(&g, &fs)).unwrap().item();
            prop_assert!((d0 - d1).abs() < 1e-9);
            let g0 = wasserstein_g(vec1(&g, f)).unwrap().item();
            let g1 = wasserstein_g(vec1(&g, &fs)).unwrap().item();
            prop_assert!((g1 - (g0 - c)).abs() < 1e-9);
        }

        #[test]
        fn relativistic_swap(v in prop::collection::vec(-30.0f64..30.0, 1..6), w in prop::collection::vec(-30.0f64..30.0, 1..6)) {
            let n = v.len().min(w.len());
            let g = Graph::new();
            let (d, gl) = relativistic(vec1(&g, &v[..n]), vec1(&g, &w[..n])).unwrap();
            let (d2, g2) = relativistic(vec1(&g, &w[..n]), vec1(&g, &v[..n])).unwrap();
            prop_assert_eq!(d.item(), g2.item());
            prop_assert_eq!(gl.item(), d2.item());
            let (d, gl) = relativistic_average(vec1(&g, &v[..n]), vec1(&g, &w[..n])).unwrap();
            let (d2, g2) = relativistic_average(vec1(&g, &w[..n]), vec1(&g, &v[..n])).unwrap();
            prop_assert!((d.item() - g2.item()).abs() < 1e-12);
            prop_assert!((gl.item() - d2.item()).abs() < 1e-12);
            prop_assert!(d.item().is_finite() && gl.item().is_finite());
        }

        #[test]
        fn l1_mse_match_loops(pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..40)) {
            let g = Graph::new();
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let n = a.len() as f64;
            let l1_ref = pairs.iter().map(|p| (p.0 - p.1).abs()).sum::<f64>() / n;
            let mse_ref = pairs.iter().map(|p| (p.0 - p.1).powi(2)).sum::<f64>() / n;
            prop_assert!((l1(vec1(&g, &a), vec1(&g, &b)).unwrap().item() - l1_ref).abs() < 1e-7);
            prop_assert!((mse(vec1(&g, &a), vec1(&g, &b)).unwrap().item() - mse_ref).abs() < 1e-7);
        }
    }
}
