//! Stability functionals and margin profiles.
//!
//! Permutations are 0-based: `sigma[j]` is the index in `c` matched to
//! `cstar[j]`.

mod functionals;
mod margin;
mod matching;

pub use functionals::{big_f_squared, confusion, f2, f2_with, stability_report, StabilityReport};
pub use margin::{
    a_mass, c_q_lambda, certified_margin, inflate_measure, lambda_n, linspace, margin_profile,
    p_of_t, p_star, CertifiedMargin, LambdaN, MarginProfile,
};
pub use matching::{f1, f1_with, hausdorff, PermutationSearch, EXHAUSTIVE_MAX_K};

/// Serializes reals that may be infinite: finite values as numbers,
/// infinities as the strings `"inf"` / `"-inf"`.
pub mod ext_real {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("expected a real, got {other:?}"))),
            },
        }
    }
}
