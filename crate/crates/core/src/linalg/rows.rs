//! Serde adapter writing a [`RealMatrix`] as a list of rows.
//!
//! Use with `#[serde(with = "crate::linalg::rows")]`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RealMatrix;

pub fn serialize<S: Serializer>(m: &RealMatrix, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    #[derive(Serialize)]
    struct Doc {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    }
    Doc { rows: m.nrows(), cols: m.ncols(), data: rows }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMatrix, D::Error> {
    #[derive(Deserialize)]
    struct Doc {
        rows: usize,
        cols: usize,
        data: Vec<Vec<f64>>,
    }
    let doc = Doc::deserialize(d)?;
    if doc.data.len() != doc.rows || doc.data.iter().any(|r| r.len() != doc.cols) {
        return Err(D::Error::custom(format!("matrix data does not match declared shape {}x{}", doc.rows, doc.cols)));
    }
    Ok(RealMatrix::from_fn(doc.rows, doc.cols, |r, c| doc.data[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Wrap(#[serde(with = "super")] RealMatrix);

    #[test]
    fn round_trip_keeps_shape_and_bits() {
        let m = RealMatrix::from_row_slice(2, 3, &[1.0, -0.1, 1e-300, 3.0, f64::MAX, 0.0]);
        let text = serde_json::to_string(&Wrap(m.clone())).unwrap();
        assert!(text.contains("[[1.0,-0.1,1e-300],"));
        let back: Wrap = serde_json::from_str(&text).unwrap();
        assert_eq!(back.0, m);
    }

    #[test]
    fn empty_matrix() {
        let m = RealMatrix::zeros(0, 4);
        let back: Wrap = serde_json::from_str(&serde_json::to_string(&Wrap(m.clone())).unwrap()).unwrap();
        assert_eq!(back.0.shape(), (0, 4));
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = r#"{"rows":2,"cols":2,"data":[[1.0,2.0],[3.0]]}"#;
        assert!(serde_json::from_str::<Wrap>(text).is_err());
    }
}
