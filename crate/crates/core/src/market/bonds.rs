use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Simply-compounded zero-coupon bond `1 / (1 + (T - t) rate)`.
pub fn simple_zcb<S: Scalar>(rate: S, t: S, maturity: S) -> Result<S> {
    let denom = S::one() + (maturity - t) * rate;
    if !(denom > S::zero()) {
        return Err(Error::NumericDomain(format!(
            "simple bond denominator 1 + ({maturity} - {t}) * {rate} = {denom} is not positive"
        )));
    }
    Ok(S::one() / denom)
}
