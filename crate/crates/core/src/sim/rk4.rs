use crate::error::Result;

/// One classical fourth-order Runge-Kutta step of `y' = f(y)`.
pub fn rk4_step<const N: usize, F>(y: &[f64; N], h: f64, mut f: F) -> Result<[f64; N]>
where
    F: FnMut(&[f64; N]) -> Result<[f64; N]>,
{
    let shifted = |base: &[f64; N], k: &[f64; N], scale: f64| {
        let mut out = *base;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += scale * ki;
        }
        out
    };
    let k1 = f(y)?;
    let k2 = f(&shifted(y, &k1, h / 2.0))?;
    let k3 = f(&shifted(y, &k2, h / 2.0))?;
    let k4 = f(&shifted(y, &k3, h))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}
