//! Numerical kernels shared by the estimators.

mod matrix;
mod normal;
mod rng;

pub use matrix::{dot, solve_least_squares, Matrix, QrFactor};
pub use normal::{normal_cdf, normal_cdf_pair, normal_pdf, normal_quantile, normal_sf};
pub use rng::{rng_derive_substream, rng_draw_uniform, RngState, StreamRng};

/// Two-sided p-value of a normal test statistic `estimate / se`.
///
/// A zero standard error gives 0 for a nonzero estimate and 1 otherwise.
pub fn normal_p_value(estimate: f64, standard_error: f64) -> f64 {
    if standard_error > 0.0 {
        2.0 * normal_cdf(-(estimate / standard_error).abs())
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with the n − 1 divisor; zero for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_value_conventions() {
        assert_eq!(normal_p_value(0.0, 0.0), 1.0);
        assert_eq!(normal_p_value(1.0, 0.0), 0.0);
        assert!((normal_p_value(1.959963984540054, 1.0) - 0.05).abs() < 1e-12);
    }
}
