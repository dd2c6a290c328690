/// `ln(e^a + e^b)` without overflow.
pub fn log_sum_exp_pair(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^x`. Terms are summed in descending order so the result does not
/// depend on input order. A single term is returned unchanged.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    match xs {
        [] => f64::NEG_INFINITY,
        [x] => *x,
        _ => {
            let mut v = xs.to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            let hi = v[0];
            if hi == f64::NEG_INFINITY {
                return hi;
            }
            hi + v.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
        }
    }
}
