//! Accuracy metrics: Pearson correlation and band-threshold ROC AUC.

/// Weekly incidence threshold for the medium band (monthly 100 / 4).
pub const MEDIUM_THRESHOLD: f64 = 25.0;
/// Weekly incidence threshold for the high band (monthly 300 / 4).
pub const HIGH_THRESHOLD: f64 = 75.0;

/// Sample correlation. `None` when fewer than three pairs, lengths differ,
/// or either side is constant.
pub fn pearson(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    let n = actual.len();
    if n < 3 || n != predicted.len() {
        return None;
    }
    let nf = n as f64;
    let ma = actual.iter().sum::<f64>() / nf;
    let mp = predicted.iter().sum::<f64>() / nf;
    let (mut sap, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let (da, dp) = (a - ma, p - mp);
        sap += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if !(saa > 0.0 && spp > 0.0) {
        return None;
    }
    let r = sap / (saa.sqrt() * spp.sqrt());
    r.is_finite().then(|| r.clamp(-1.0, 1.0))
}

/// Area under the ROC curve for labels `actual >= threshold` scored by
/// `predicted`, as the Mann-Whitney statistic with ties counting one half.
/// `None` when either class is empty.
pub fn band_auc(actual: &[f64], predicted: &[f64], threshold: f64) -> Option<f64> {
    assert_eq!(actual.len(), predicted.len(), "band_auc: length mismatch");
    let labels: Vec<bool> = actual.iter().map(|a| *a >= threshold).collect();
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }

    // Average ranks (1-based) over tied score groups.
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && predicted[order[j + 1]] == predicted[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
