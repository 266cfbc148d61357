//! Serde helpers for extended reals: `±inf` are written as the strings
//! `"+inf"` / `"-inf"`, NaN as `null`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
    Null(()),
}

pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_nan() {
        s.serialize_none()
    } else if *v == f64::INFINITY {
        s.serialize_str("+inf")
    } else if *v == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(*v)
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match Option::<Repr>::deserialize(d)? {
        None | Some(Repr::Null(())) => Ok(f64::NAN),
        Some(Repr::Num(x)) => Ok(x),
        Some(Repr::Text(t)) => match t.as_str() {
            "+inf" | "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!("not an extended real: {other}"))),
        },
    }
}
