//! Small overflow-safe scalar helpers.

/// `log(e^x - 1)` for `x >= 0`, without overflow for large `x`.
pub fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `log(e^x - 1 + c)` for `x >= 0`, `c >= 0`.
pub fn ln_expm1_plus(x: f64, c: f64) -> f64 {
    if x > 30.0 {
        x + ((c - 1.0) * (-x).exp()).ln_1p()
    } else {
        (x.exp_m1() + c).ln()
    }
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
