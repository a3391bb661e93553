use crate::error::{Error, Result};

/// Mean squared error over all entries.
pub fn evaluate_mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    let mask = vec![1.0; targets.len()];
    evaluate_masked_mse(predictions, targets, &mask)
}

/// Mean squared error over entries whose mask is 1.
pub fn evaluate_masked_mse(predictions: &[f64], targets: &[f64], mask: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || mask.len() != targets.len() {
        return Err(Error::shape(
            "evaluate_mse",
            format!("{} predictions, {} targets, {} mask entries", predictions.len(), targets.len(), mask.len()),
        ));
    }
    let count: f64 = mask.iter().sum();
    if count == 0.0 {
        return Err(Error::UndefinedMetric("mse over zero entries".into()));
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .zip(mask)
        .filter(|(_, m)| **m != 0.0)
        .map(|((p, t), _)| (p - t) * (p - t))
        .sum();
    Ok(total / count)
}

/// Twice the midrank of every value (integers, so ties compare exactly).
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean; doubled that is i + j + 2.
        for &o in &order[i..=j] {
            ranks[o] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-based AUC: the chance a random positive outscores a random negative, ties counting ½.
pub fn evaluate_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("evaluate_auc", format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if labels.iter().any(|l| *l != 0.0 && *l != 1.0) {
        return Err(Error::usage("labels must be 0 or 1"));
    }
    let pos = labels.iter().filter(|l| **l == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let ranks = doubled_ranks(scores);
    let r_pos: u64 = ranks.iter().zip(labels).filter(|(_, l)| **l == 1.0).map(|(r, _)| r).sum();
    let u = r_pos as f64 / 2.0 - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Two-sided Wilcoxon rank-sum p-value.
///
/// Combined sizes up to 12 enumerate every assignment of the pooled ranks;
/// larger inputs use the tie-corrected normal approximation.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("rank_sum_test needs two nonempty samples"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::usage("rank_sum_test inputs must be finite"));
    }
    let n = pooled.len();
    let ranks = doubled_ranks(&pooled);
    if n <= 12 {
        Ok(exact_p(&ranks, a.len()))
    } else {
        Ok(normal_p(&pooled, &ranks, a.len()))
    }
}

fn exact_p(ranks: &[u64], na: usize) -> f64 {
    let n = ranks.len();
    // Doubled expected rank sum: na·(n+1).
    let expected = (na * (n + 1)) as i64;
    let observed: i64 = ranks[..na].iter().sum::<u64>() as i64;
    let threshold = (observed - expected).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    let mut subset: Vec<usize> = (0..na).collect();
    loop {
        let w: i64 = subset.iter().map(|&i| ranks[i]).sum::<u64>() as i64;
        total += 1;
        if (w - expected).abs() >= threshold {
            extreme += 1;
        }
        // Next combination in lexicographic order.
        let mut i = na;
        while i > 0 && subset[i - 1] == n - na + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        subset[i - 1] += 1;
        for j in i..na {
            subset[j] = subset[j - 1] + 1;
        }
    }
    extreme as f64 / total as f64
}

fn normal_p(pooled: &[f64], ranks: &[u64], na: usize) -> f64 {
    let n = pooled.len() as f64;
    let (na_f, nb_f) = (na as f64, n - na as f64);
    let r_a = ranks[..na].iter().sum::<u64>() as f64 / 2.0;
    let u = r_a - na_f * (na_f + 1.0) / 2.0;
    let mu = na_f * nb_f / 2.0;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    let var = na_f * nb_f / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - mu).abs() / var.sqrt();
    libm::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Sample mean and standard deviation (`None` below two values).
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        assert_eq!(evaluate_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(evaluate_mse(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert!(matches!(evaluate_mse(&[0.0], &[1.0, 3.0]), Err(Error::Shape { .. })));
        assert_eq!(evaluate_masked_mse(&[0.0, 0.0], &[1.0, 3.0], &[0.0, 1.0]).unwrap(), 9.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(evaluate_auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(evaluate_auc(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(evaluate_auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert!(matches!(evaluate_auc(&[0.1, 0.4], &[1.0, 1.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn rank_sum_examples() {
        assert_eq!(rank_sum_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(rank_sum_test(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]).unwrap(), 0.1);
        assert!(rank_sum_test(&[], &[1.0]).is_err());
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 + 100.0).collect();
        assert!(rank_sum_test(&a, &b).unwrap() < 1e-3);
        assert_eq!(rank_sum_test(&[1.0; 10], &[1.0; 10]).unwrap(), 1.0);
    }

    #[test]
    fn mean_std_needs_two_values() {
        assert_eq!(mean_std(&[2.0]), (Some(2.0), None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(0u8..6, 1..7), b in prop::collection::vec(0u8..6, 1..7)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let p = rank_sum_test(&a, &b).unwrap();
            prop_assert_eq!(p, rank_sum_test(&b, &a).unwrap());
            prop_assert!(p > 0.0 && p <= 1.0);
        }

        #[test]
        fn mse_is_nonnegative(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20)) {
            let (p, t): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert!(evaluate_mse(&p, &t).unwrap() >= 0.0);
        }
    }
}
