//! Complex numbers serialize as `[re, im]` pairs.

use num_complex::Complex64;
use serde::ser::{SerializeSeq, Serializer};

pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

pub mod option {
    use super::*;

    pub fn serialize<const K: usize, S: Serializer>(v: &Option<[Complex64; K]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(z) => super::serialize(z, s),
            None => s.serialize_none(),
        }
    }
}

pub mod single {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([z.re, z.im])
    }
}
