//! Focal detection loss plus a gated offset regression term.

/// Probabilities are clamped here before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;
pub const DEFAULT_GAMMA: f64 = 4.0;

/// Value and gradients for one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub classification: f64,
    pub offset: f64,
    /// d(loss)/d(detection logit).
    pub grad_logit: f64,
    /// d(loss)/d(predicted offset).
    pub grad_offset: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.classification + self.offset
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(1 - p_t)^gamma * BCE + [label = 1] * (pred_offset - target)^2`, with
/// `p = sigmoid(logit)` and `p_t` the probability given to the true class.
///
/// `target` is ignored for negatives. Gradients are exact, including the
/// focal factor's dependence on `p` and the zero slope where the log clamp
/// is active.
pub fn segment_loss(logit: f64, label: u8, pred_offset: f64, target: Option<f64>, gamma: f64) -> LossTerms {
    let p = sigmoid(logit);
    let q = sigmoid(-logit);
    let cap = -LOG_CLAMP.ln();
    // bce = -ln(max(p_t, clamp)); p_t = p for positives, q for negatives.
    let (pt_mis, raw, dbce) = if label == 1 {
        (q, softplus(-logit), -q)
    } else {
        (p, softplus(logit), p)
    };
    let (bce, dbce) = if raw > cap { (cap, 0.0) } else { (raw, dbce) };
    // focal = pt_mis^gamma; d(pt_mis)/dz = -pq for positives, +pq for negatives.
    let sign = if label == 1 { -1.0 } else { 1.0 };
    let focal = pt_mis.powf(gamma);
    let dfocal = if gamma == 0.0 {
        0.0
    } else {
        // gamma * pt_mis^(gamma-1) * (+/-) p q, written without a negative power.
        sign * gamma * pt_mis.powf(gamma) * if label == 1 { p } else { q }
    };
    let classification = focal * bce;
    let grad_logit = dfocal * bce + focal * dbce;

    let (offset, grad_offset) = match (label, target) {
        (1, Some(d)) => {
            let r = pred_offset - d;
            (r * r, 2.0 * r)
        }
        _ => (0.0, 0.0),
    };
    LossTerms {
        classification,
        offset,
        grad_logit,
        grad_offset,
    }
}

/// Mean loss over a batch; gradients are already divided by the batch size.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchLoss {
    pub mean: f64,
    pub mean_classification: f64,
    pub mean_offset: f64,
    pub grad_logits: Vec<f64>,
    pub grad_offsets: Vec<f64>,
}

pub fn batch_loss(
    logits: &[f64],
    offsets: &[f64],
    labels: &[u8],
    targets: &[Option<f64>],
    gamma: f64,
) -> BatchLoss {
    let n = logits.len();
    assert!(offsets.len() == n && labels.len() == n && targets.len() == n);
    if n == 0 {
        return BatchLoss::default();
    }
    let scale = 1.0 / n as f64;
    let mut out = BatchLoss {
        grad_logits: Vec::with_capacity(n),
        grad_offsets: Vec::with_capacity(n),
        ..Default::default()
    };
    for i in 0..n {
        let t = segment_loss(logits[i], labels[i], offsets[i], targets[i], gamma);
        out.mean_classification += t.classification * scale;
        out.mean_offset += t.offset * scale;
        out.grad_logits.push(t.grad_logit * scale);
        out.grad_offsets.push(t.grad_offset * scale);
    }
    out.mean = out.mean_classification + out.mean_offset;
    out
}
