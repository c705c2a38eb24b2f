//! Serde helpers for the JSON interchange formats: complex numbers travel as
//! `[re, im]` pairs.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::Complex;

/// Serialize a `Complex` field as `[re, im]`.
pub mod complex_pair {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Complex, ser: S) -> Result<S::Ok, S::Error> {
        [value.re, value.im].serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Complex, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(de)?;
        Ok(Complex::new(re, im))
    }
}

/// Serialize a `Vec<Complex>` field as `[[re, im], …]`.
pub mod complex_list {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[Complex], ser: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = values.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Complex>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(de)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
    }
}

/// Optional complex field as `[re, im]` or `null`.
pub mod complex_opt {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Option<Complex>, ser: S) -> Result<S::Ok, S::Error> {
        value.map(|z| [z.re, z.im]).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Complex>, D::Error> {
        let pair = Option::<[f64; 2]>::deserialize(de)?;
        Ok(pair.map(|[re, im]| Complex::new(re, im)))
    }
}
