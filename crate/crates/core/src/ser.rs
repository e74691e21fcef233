//! Serde helpers for ratio fields that may legitimately be infinite: JSON
//! has no representation for non-finite floats, so they serialize as the
//! strings "inf" / "-inf" instead of null.

use serde::Serializer;

pub fn ext_real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn ext_real_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => ext_real(x, s),
        None => s.serialize_none(),
    }
}
