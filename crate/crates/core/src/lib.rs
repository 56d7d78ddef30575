//! Closed-form transmission schedules, exact LP oracles and a coding simulator for
//! cooperative data exchange when some clients may fail to transmit.

pub mod asymptotics;
pub mod clients;
pub mod coding;
pub mod duality;
pub mod error;
pub mod gf;
pub mod instance;
pub mod lp;
pub mod quantities;
pub mod schedules;
pub mod simplex;

use num_bigint::BigInt;

/// Exact rational arithmetic used for all LP and schedule values.
pub type Rational = num_rational::BigRational;

pub use clients::ClientSet;
pub use error::{Error, Result};
pub use instance::Instance;
pub use quantities::{DerivedParams, Relabeling};
pub use schedules::Schedule;

pub(crate) fn integer(value: impl Into<BigInt>) -> Rational {
    Rational::from_integer(value.into())
}

pub(crate) fn ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Rational {
    Rational::new(num.into(), den.into())
}

/// Always `num/den`, also for integers, so files never mix formats.
pub fn format_rational(value: &Rational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Accepts `num/den` or a bare integer.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let bad = || Error::Input(format!("not a rational number: {text:?}"));
    let (num, den) = match text.trim().split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text.trim(), "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den == BigInt::from(0) {
        return Err(bad());
    }
    Ok(Rational::new(num, den))
}
