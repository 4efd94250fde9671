//! Complex numbers travel as `[re, im]` pairs in the interchange JSON.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn pair(c: &Complex64) -> [f64; 2] {
    [c.re, c.im]
}

pub mod array3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64; 3], s: S) -> Result<S::Ok, S::Error> {
        [pair(&v[0]), pair(&v[1]), pair(&v[2])].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Complex64; 3], D::Error> {
        let raw = <[[f64; 2]; 3]>::deserialize(d)?;
        Ok(raw.map(|[re, im]| Complex64::new(re, im)))
    }
}

pub mod matrix3 {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[[Complex64; 3]; 3], s: S) -> Result<S::Ok, S::Error> {
        let raw: [[[f64; 2]; 3]; 3] = [0, 1, 2].map(|i| [0, 1, 2].map(|j| pair(&m[i][j])));
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<[[Complex64; 3]; 3], D::Error> {
        let raw = <[[[f64; 2]; 3]; 3]>::deserialize(d)?;
        Ok(raw.map(|row| row.map(|[re, im]| Complex64::new(re, im))))
    }
}
