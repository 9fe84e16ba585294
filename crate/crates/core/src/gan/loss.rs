use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[LOG_EPS, 1 - LOG_EPS]` before taking logs.
pub const LOG_EPS: f64 = 1e-7;

/// Mean absolute difference between target `y` and prediction `p`.
pub fn l1_loss<T: Scalar>(y: &Tensor<T>, p: &Tensor<T>) -> Result<T> {
    y.expect_dims(p.dims(), "l1 loss")?;
    let n = T::lit(y.data().len() as f64);
    Ok(y.data().iter().zip(p.data()).map(|(&a, &b)| (a - b).abs()).sum::<T>() / n)
}

/// Gradient of [`l1_loss`] with respect to `p` (zero where `p == y`).
pub fn l1_loss_grad<T: Scalar>(y: &Tensor<T>, p: &Tensor<T>) -> Result<Tensor<T>> {
    let n = T::lit(y.data().len() as f64);
    p.zip_map(y, |pv, yv| {
        if pv > yv {
            T::one() / n
        } else if pv < yv {
            -T::one() / n
        } else {
            T::zero()
        }
    })
}

/// Conditional adversarial losses and their gradients w.r.t. the patch maps.
#[derive(Clone, Debug, PartialEq)]
pub struct CganLoss<T> {
    /// `-mean(log D(x,y)) - mean(log(1 - D(x,p)))`
    pub loss_d: T,
    /// Non-saturating generator term `-mean(log D(x,p))`.
    pub loss_g_adv: T,
    pub grad_d_real: Tensor<T>,
    pub grad_d_fake: Tensor<T>,
    pub grad_g_fake: Tensor<T>,
}

fn clamp_prob<T: Scalar>(v: T) -> (T, bool) {
    let lo = T::lit(LOG_EPS);
    let hi = T::one() - lo;
    if v < lo {
        (lo, true)
    } else if v > hi {
        (hi, true)
    } else {
        (v, false)
    }
}

pub fn cgan_loss<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<CganLoss<T>> {
    for v in d_real.data().iter().chain(d_fake.data()) {
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite discriminator output".into()));
        }
    }
    if d_real.data().is_empty() || d_fake.data().is_empty() {
        return Err(shape_err!("empty discriminator map"));
    }
    let nr = T::lit(d_real.data().len() as f64);
    let nf = T::lit(d_fake.data().len() as f64);

    let mut real_term = T::zero();
    let grad_d_real = d_real.map(|v| {
        let (c, clamped) = clamp_prob(v);
        if clamped {
            T::zero()
        } else {
            -T::one() / (nr * c)
        }
    });
    for &v in d_real.data() {
        real_term += clamp_prob(v).0.ln();
    }
    let mut fake_term = T::zero();
    let mut gen_term = T::zero();
    for &v in d_fake.data() {
        let c = clamp_prob(v).0;
        fake_term += (T::one() - c).ln();
        gen_term += c.ln();
    }
    let grad_d_fake = d_fake.map(|v| {
        let (c, clamped) = clamp_prob(v);
        if clamped {
            T::zero()
        } else {
            T::one() / (nf * (T::one() - c))
        }
    });
    let grad_g_fake = d_fake.map(|v| {
        let (c, clamped) = clamp_prob(v);
        if clamped {
            T::zero()
        } else {
            -T::one() / (nf * c)
        }
    });
    Ok(CganLoss {
        loss_d: -real_term / nr - fake_term / nf,
        loss_g_adv: -gen_term / nf,
        grad_d_real,
        grad_d_fake,
        grad_g_fake,
    })
}

/// Non-saturating generator term alone: `(-mean(log D(x,p)), d/dD)`.
pub fn generator_adv_loss<T: Scalar>(d_fake: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if d_fake.data().is_empty() || !d_fake.all_finite() {
        return Err(Error::Numeric("invalid discriminator output".into()));
    }
    let n = T::lit(d_fake.data().len() as f64);
    let loss = -d_fake.data().iter().map(|&v| clamp_prob(v).0.ln()).sum::<T>() / n;
    let grad = d_fake.map(|v| {
        let (c, clamped) = clamp_prob(v);
        if clamped {
            T::zero()
        } else {
            -T::one() / (n * c)
        }
    });
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_constant_cases() {
        let y = Tensor::<f64>::filled(3, 4, 5, 1.0);
        let p = Tensor::<f64>::zeros(3, 4, 5);
        assert_eq!(l1_loss(&y, &p).unwrap(), 1.0);
        assert_eq!(l1_loss(&y, &y).unwrap(), 0.0);
        assert!(l1_loss(&y, &Tensor::zeros(3, 4, 4)).is_err());
    }

    #[test]
    fn half_half_gives_two_ln_two() {
        let h = Tensor::<f64>::filled(1, 3, 3, 0.5);
        let l = cgan_loss(&h, &h).unwrap();
        assert!((l.loss_d - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l.loss_g_adv - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_limit() {
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
            let r = Tensor::<f64>::filled(1, 2, 2, 1.0 - eps);
            let f = Tensor::<f64>::filled(1, 2, 2, eps);
            let l = cgan_loss(&r, &f).unwrap().loss_d;
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 3e-5);
        // saturated inputs are clamped, never infinite
        let l = cgan_loss(&Tensor::<f64>::filled(1, 1, 1, 1.0), &Tensor::filled(1, 1, 1, 0.0)).unwrap();
        assert!(l.loss_d.is_finite() && l.loss_d < 1e-6);
    }
}
