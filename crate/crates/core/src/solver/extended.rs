//! Serde helpers for extended reals: `+∞` is written as the string "inf".

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Ext {
    Num(f64),
    Tag(String),
}

fn to_ext(v: f64) -> Ext {
    if v.is_finite() {
        Ext::Num(v)
    } else if v > 0.0 {
        Ext::Tag("inf".into())
    } else if v < 0.0 {
        Ext::Tag("-inf".into())
    } else {
        Ext::Tag("nan".into())
    }
}

fn from_ext<E: serde::de::Error>(e: Ext) -> Result<f64, E> {
    match e {
        Ext::Num(v) => Ok(v),
        Ext::Tag(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("expected a number or \"inf\", got {other:?}"))),
        },
    }
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_ext(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_ext(Ext::deserialize(d)?)
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| to_ext(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Ext>::deserialize(d)?.into_iter().map(from_ext).collect()
    }
}

pub mod table {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|r| r.iter().map(|x| to_ext(*x)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<Ext>>::deserialize(d)?
            .into_iter()
            .map(|r| r.into_iter().map(from_ext).collect())
            .collect()
    }
}
