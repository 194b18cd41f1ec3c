use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::scalar::Scalar;

/// Lower clamp applied to every logarithm argument.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub lambda_f: f64,
    pub lambda_k: f64,
    pub lambda_i: f64,
    pub lambda_t: f64,
    pub lambda_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_p: 1.0,
            lambda_c: 1.0,
            lambda_f: 1.0,
            lambda_k: 1.0,
            lambda_i: 1.0,
            lambda_t: 1.0,
            lambda_r: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_p,
            self.lambda_c,
            self.lambda_f,
            self.lambda_k,
            self.lambda_i,
            self.lambda_t,
            self.lambda_r,
        ];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("loss weights must be non-negative".into()))
        }
    }
}

/// Sign of the target-side unmatched term of the cross-entropy loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnmatchedSign {
    /// `+ (1/|N_Y|) Σ log(1 − ŵ)`.
    #[default]
    AsPrinted,
    /// `− (1/|N_Y|) Σ log(1 − ŵ)`, symmetric with the source side.
    Nll,
}

fn check_probs<T: Scalar>(ps: &[T]) -> Result<()> {
    match ps.iter().find(|p| !(**p >= T::zero() && **p <= T::one())) {
        Some(p) => Err(Error::InvalidProbability(p.to_f64_lossy())),
        None => Ok(()),
    }
}

fn clamped_ln<T: Scalar>(x: T) -> T {
    x.max(T::lit(LOG_FLOOR)).ln()
}

fn mean<T: Scalar>(xs: impl ExactSizeIterator<Item = T>) -> T {
    let n = xs.len();
    if n == 0 {
        return T::zero();
    }
    xs.fold(T::zero(), |a, x| a + x) / T::lit(n as f64)
}

fn len_check(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingLossInput<T> {
    /// `P⁽ˡ⁾` for each layer, one entry per correspondence.
    pub layer_probs: Vec<Vec<T>>,
    /// `w_ij` for the layered term.
    pub layer_weights: Vec<T>,
    /// Final matching probabilities `P_ij`.
    pub final_probs: Vec<T>,
    /// Overlap weights `ω_ij` for the final term.
    pub overlap_weights: Vec<T>,
    /// Estimated overlap of source nodes outside every correspondence.
    pub unmatched_src: Vec<T>,
    /// Same for target nodes.
    pub unmatched_tar: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingLoss<T> {
    pub l_p: T,
    pub l_c: T,
    pub total: T,
}

/// Layered log-loss plus overlap-weighted cross-entropy with unmatched-node terms.
///
/// An empty unmatched set contributes nothing; so does the final term when
/// `Σω = 0`.
pub fn matching_loss<T: Scalar>(
    input: &MatchingLossInput<T>,
    lambda_p: T,
    lambda_c: T,
    sign: UnmatchedSign,
) -> Result<MatchingLoss<T>> {
    let n = input.layer_weights.len();
    for layer in &input.layer_probs {
        len_check("layer probabilities vs pairs", n, layer.len())?;
        check_probs(layer)?;
    }
    len_check("final probabilities vs overlap weights", input.overlap_weights.len(), input.final_probs.len())?;
    check_probs(&input.final_probs)?;
    check_probs(&input.unmatched_src)?;
    check_probs(&input.unmatched_tar)?;

    let layers = input.layer_probs.len();
    let mut l_p = T::zero();
    for layer in &input.layer_probs {
        for (&p, &w) in layer.iter().zip(&input.layer_weights) {
            l_p -= w * clamped_ln(p);
        }
    }
    if layers > 0 {
        l_p /= T::lit(layers as f64);
    }

    let omega_sum = input.overlap_weights.iter().fold(T::zero(), |a, &w| a + w);
    let mut l_c = T::zero();
    if omega_sum > T::zero() {
        let acc = input
            .final_probs
            .iter()
            .zip(&input.overlap_weights)
            .fold(T::zero(), |a, (&p, &w)| a + w * clamped_ln(p));
        l_c -= acc / omega_sum;
    }
    let unmatched = |v: &[T]| mean(v.iter().map(|&w| clamped_ln(T::one() - w)));
    l_c -= unmatched(&input.unmatched_src);
    match sign {
        UnmatchedSign::AsPrinted => l_c += unmatched(&input.unmatched_tar),
        UnmatchedSign::Nll => l_c -= unmatched(&input.unmatched_tar),
    }
    Ok(MatchingLoss {
        l_p,
        l_c,
        total: lambda_p * l_p + lambda_c * l_c,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceSample<T: Scalar> {
    pub anchor: DVector<T>,
    pub positive: DVector<T>,
    pub negatives: Vec<DVector<T>>,
}

/// Mean InfoNCE over samples with bilinear similarity `⟨d_x, W·d_y⟩`, evaluated
/// through a log-sum-exp so a sample without negatives contributes exactly 0.
pub fn info_nce<T: Scalar>(samples: &[InfoNceSample<T>], w: &DMatrix<T>) -> Result<T> {
    let sim = |a: &DVector<T>, b: &DVector<T>| -> Result<T> {
        if w.nrows() != a.len() || w.ncols() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "descriptor vs similarity matrix",
                expected: w.nrows(),
                got: a.len(),
            });
        }
        Ok(a.dot(&(w * b)))
    };
    let mut total = T::zero();
    for s in samples {
        let pos = sim(&s.anchor, &s.positive)?;
        let mut logits = vec![pos];
        for n in &s.negatives {
            logits.push(sim(&s.anchor, n)?);
        }
        let m = logits.iter().copied().fold(pos, |a, b| a.max(b));
        let lse = m + logits.iter().fold(T::zero(), |a, &l| a + (l - m).exp()).ln();
        total += lse - pos;
    }
    if samples.is_empty() {
        return Ok(T::zero());
    }
    Ok(total / T::lit(samples.len() as f64))
}

/// Mean squared residual `‖R·x + t − ŷ‖²`.
pub fn position_loss<T: Scalar>(keypoints: &[Vector3<T>], predicted: &[Vector3<T>], t_gt: &RigidTransform<T>) -> Result<T> {
    len_check("predicted vs keypoints", keypoints.len(), predicted.len())?;
    Ok(mean(
        keypoints
            .iter()
            .zip(predicted)
            .map(|(x, y)| (t_gt.apply_point(x) - y).norm_squared()),
    ))
}

/// Binary cross-entropy of confidences against `𝟙[‖R·x + t − ŷ‖ ≤ τ]`.
pub fn confidence_loss<T: Scalar>(
    keypoints: &[Vector3<T>],
    predicted: &[Vector3<T>],
    confidences: &[T],
    t_gt: &RigidTransform<T>,
    tau_conf: T,
) -> Result<T> {
    len_check("predicted vs keypoints", keypoints.len(), predicted.len())?;
    len_check("confidences vs keypoints", keypoints.len(), confidences.len())?;
    check_probs(confidences)?;
    let lo = T::lit(LOG_FLOOR);
    let hi = T::one() - lo;
    Ok(mean(keypoints.iter().zip(predicted).zip(confidences).map(|((x, y), &s)| {
        let s = s.clamp(lo, hi);
        if (t_gt.apply_point(x) - y).norm() <= tau_conf {
            -s.ln()
        } else {
            -(T::one() - s).ln()
        }
    })))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointLossInput<T: Scalar> {
    pub samples: Vec<InfoNceSample<T>>,
    pub similarity: DMatrix<T>,
    pub keypoints: Vec<Vector3<T>>,
    pub predicted: Vec<Vector3<T>>,
    pub confidences: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointLoss<T> {
    pub l_f: T,
    pub l_k: T,
    pub l_i: T,
    pub total: T,
}

pub fn keypoint_losses<T: Scalar>(
    input: &KeypointLossInput<T>,
    t_gt: &RigidTransform<T>,
    tau_conf: T,
    weights: &LossWeights,
) -> Result<KeypointLoss<T>> {
    let l_f = info_nce(&input.samples, &input.similarity)?;
    let l_k = position_loss(&input.keypoints, &input.predicted, t_gt)?;
    let l_i = confidence_loss(&input.keypoints, &input.predicted, &input.confidences, t_gt, tau_conf)?;
    Ok(KeypointLoss {
        l_f,
        l_k,
        l_i,
        total: T::lit(weights.lambda_f) * l_f + T::lit(weights.lambda_k) * l_k + T::lit(weights.lambda_i) * l_i,
    })
}

/// `λ_t‖t̂ − t‖² + λ_r‖R̂ᵀR − I‖²_F`.
///
/// The rotation term is evaluated as `‖R − R̂‖²_F`, equal for rotations, so
/// identical poses give exactly zero.
pub fn dense_loss<T: Scalar>(est: &RigidTransform<T>, gt: &RigidTransform<T>, lambda_t: T, lambda_r: T) -> T {
    let l_t = (est.translation() - gt.translation()).norm_squared();
    let l_r = (gt.rotation() - est.rotation()).norm_squared();
    lambda_t * l_t + lambda_r * l_r
}

pub fn total_loss<T: Scalar>(l_mat: T, l_key: T, l_den: T) -> T {
    l_mat + l_key + l_den
}
