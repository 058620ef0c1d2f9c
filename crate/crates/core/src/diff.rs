//! Central finite differences shared by every module that needs a derivative
//! fallback.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

/// Central-difference step `eps^(1/3) * max(1, |x|)`.
pub fn step_for(x: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * x.norm().max(1.0)
}

/// Gradient of a scalar map by central differences.
pub fn gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut probe = x.clone();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let xi = x[i];
            probe[i] = xi + h;
            let fp = f(&probe);
            probe[i] = xi - h;
            let fm = f(&probe);
            probe[i] = xi;
            (fp - fm) / (2.0 * h)
        }),
    )
}

/// Jacobian `J[i][j] = d f_i / d x_j` by central differences.
pub fn jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let rows = f(x).len();
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        let xj = x[j];
        probe[j] = xj + h;
        let fp = f(&probe);
        probe[j] = xj - h;
        let fm = f(&probe);
        probe[j] = xj;
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Directional derivative `Df(x) . v` by a central difference along `v`.
pub fn directional<F>(f: F, x: &DVector<f64>, v: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let scale = v.norm();
    if scale == 0.0 {
        return DVector::zeros(f(x).len());
    }
    let dir = v / scale;
    let fp = f(&(x + &dir * h));
    let fm = f(&(x - &dir * h));
    (fp - fm) * (scale / (2.0 * h))
}

/// Lie bracket `[U, W] = DW . U - DU . W` of two vector fields.
pub fn lie_bracket<U, W>(u: U, w: W, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    U: Fn(&DVector<f64>) -> DVector<f64>,
    W: Fn(&DVector<f64>) -> DVector<f64>,
{
    let ux = u(x);
    let wx = w(x);
    directional(&w, x, &ux, h) - directional(&u, x, &wx, h)
}
