//! Least-squares fits used by convergence and scaling studies.

/// Slope of the least-squares line through `(ln x, ln |y|)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly).0
}

/// `(slope, intercept)` of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Coefficients `c_0..c_degree` of the least-squares polynomial through `(x, y)`.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let a = nalgebra::DMatrix::from_fn(x.len(), degree + 1, |i, k| x[i].powi(k as i32));
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14)
        .expect("svd solve with both factors")
        .iter()
        .cloned()
        .collect()
}
