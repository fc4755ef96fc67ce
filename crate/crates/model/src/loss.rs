use vkchain_core::ot::{emd, OtParams};
use vkchain_core::PointSet;
use vkchain_tensor::{Float, Tape, Var};

use crate::ModelError;

/// Ground-truth coordinates are clamped to this range before rescaling to `[0, 1]`.
pub const GT_RANGE: [f64; 2] = [-0.25, 1.25];

/// Image-normalized coordinate to the sigmoid output space.
pub fn to_target_space(v: f64) -> f64 {
    (v.clamp(GT_RANGE[0], GT_RANGE[1]) - GT_RANGE[0]) / (GT_RANGE[1] - GT_RANGE[0])
}

pub fn from_target_space(s: f64) -> f64 {
    s * (GT_RANGE[1] - GT_RANGE[0]) + GT_RANGE[0]
}

pub fn target_set(p: &PointSet) -> PointSet {
    PointSet::new(p.points.iter().map(|q| [to_target_space(q[0]), to_target_space(q[1])]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdLoss {
    /// Mean transport cost over the set pairs.
    pub value: f64,
    /// Mean entropic objective; `grad` is its exact gradient.
    pub entropic: f64,
    /// Gradient with respect to the predicted coordinates, flattened in input order.
    pub grad: Vec<f64>,
}

/// Mean earth-mover distance between matching prediction and ground-truth sets.
pub fn emd_loss(pred: &[PointSet], gt: &[PointSet], params: &OtParams) -> Result<EmdLoss, ModelError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(ModelError::Input(format!("{} predicted sets vs {} ground-truth sets", pred.len(), gt.len())));
    }
    let inv = 1.0 / pred.len() as f64;
    let mut out = EmdLoss { value: 0.0, entropic: 0.0, grad: Vec::new() };
    for (p, g) in pred.iter().zip(gt) {
        let r = emd(g, p, params)?;
        out.value += r.value * inv;
        out.entropic += r.entropic_value * inv;
        out.grad.extend(r.grad_q.iter().flat_map(|d| [d[0] * inv, d[1] * inv]));
    }
    Ok(out)
}

/// EMD loss of the point-head output `[G, T, N_points * 2]` against image-normalized
/// ground truth ordered by group then timestep.
///
/// The tape node carries the entropic objective so that its gradient is exact;
/// the returned float is the plain mean transport cost.
pub fn vkt_loss<F: Float>(t: &mut Tape<F>, points: Var, gt: &[PointSet], params: &OtParams) -> Result<(Var, f64), ModelError> {
    let shape = t.shape(points).to_vec();
    let n_sets = shape[0] * shape[1];
    let per_set = shape[2];
    if gt.len() != n_sets || gt.iter().any(|s| s.len() * 2 != per_set) {
        return Err(ModelError::Input(format!(
            "prediction {shape:?} vs {} ground-truth sets of {} points",
            gt.len(),
            gt.first().map_or(0, PointSet::len)
        )));
    }
    let vals = t.value(points).to_f64_vec();
    let pred: Vec<PointSet> = vals.chunks_exact(per_set).map(|c| PointSet::new(c.chunks_exact(2).map(|p| [p[0], p[1]]).collect())).collect();
    let targets: Vec<PointSet> = gt.iter().map(target_set).collect();
    let l = emd_loss(&pred, &targets, params)?;
    let grad = l.grad.iter().map(|&g| F::lit(g)).collect();
    let var = t.external_loss(points, F::lit(l.entropic), grad)?;
    Ok((var, l.value))
}

/// `|L_vkt - L_bct| / L_vkt`.
pub fn relative_precision(loss_vkt: f64, loss_bct: f64) -> Result<f64, ModelError> {
    if !(loss_vkt > 0.0) {
        return Err(ModelError::Input(format!("relative precision needs a positive VKT loss, got {loss_vkt}")));
    }
    Ok((loss_vkt - loss_bct).abs() / loss_vkt)
}
