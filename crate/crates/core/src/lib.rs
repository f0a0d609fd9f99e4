//! Cued-speech recognition at desk scale: landmark featurization, a
//! three-stream recurrent encoder with temporal self-attention trained by
//! CTC, lexicon-constrained beam search with n-gram rescoring, and
//! attention-path segmentation of hand and lip movements.

pub mod ctc;
pub mod features;
pub mod metrics;
pub mod model;
pub mod search;
pub mod segmentation;
pub mod synth;

pub(crate) mod ser {
    //! Serde adapters storing ndarray matrices as nested JSON arrays.

    pub mod array2 {
        use ndarray::Array2;
        use serde::de::Error;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
            let rows: Vec<Vec<f64>> = m.outer_iter().map(|r| r.to_vec()).collect();
            serde::Serialize::serialize(&rows, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
            let rows: Vec<Vec<f64>> = Deserialize::deserialize(d)?;
            if rows.is_empty() {
                return Ok(Array2::zeros((0, 0)));
            }
            let cols = rows[0].len();
            if rows.iter().any(|r| r.len() != cols) {
                return Err(D::Error::custom("ragged matrix rows"));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            Array2::from_shape_vec((rows.len(), cols), flat).map_err(D::Error::custom)
        }
    }

    pub mod array1 {
        use ndarray::Array1;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
            serde::Serialize::serialize(&v.to_vec(), s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
            let v: Vec<f64> = Deserialize::deserialize(d)?;
            Ok(Array1::from(v))
        }
    }
}
