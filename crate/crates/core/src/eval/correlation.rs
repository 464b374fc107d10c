use crate::error::{Error, Result};

fn check_pair(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "correlation needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min_len {
        return Err(Error::Input(format!(
            "correlation needs at least {min_len} points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("correlation input contains non-finite values".into()));
    }
    Ok(())
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input has zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    pearson_unchecked(x, y)
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson correlation of fractional ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    pearson_unchecked(&fractional_ranks(x), &fractional_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_monotone_relations() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up = [0.1, 0.5, 0.9, 7.0, 100.0];
        let down = [5.0, 3.0, 1.0, -2.0, -9.0];
        assert!((srcc(&x, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((srcc(&x, &down).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_swap_gives_point_eight() {
        let r = srcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(fractional_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn affine_relations_for_plcc() {
        let x = [0.3, -1.0, 2.5, 4.0, 0.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let n: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((plcc(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!((plcc(&x, &n).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_undefined() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(srcc(&x, &[2.0; 3]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(plcc(&[2.0; 3], &x), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn short_or_ragged_input_rejected() {
        assert!(srcc(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(plcc(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }
}
