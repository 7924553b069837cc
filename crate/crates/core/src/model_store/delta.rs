use serde::{Deserialize, Serialize};

use super::mdmw::{decode_prefix, encode_mdmw, Weights};
use super::ModelStoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaOperator {
    Xor,
    Subtract,
}

/// Encodes `target` relative to `base`.
///
/// Both operators produce an `MDMW` tensor of the target's shape. For
/// `Subtract` each word is `target − base`, except where `base + d` would not
/// round back to `target`; there the word holds the raw target bits and the
/// trailing mask (one bit per word, LSB first) is set.
pub fn make_delta(base: &Weights, target: &Weights, op: DeltaOperator) -> Result<Vec<u8>, ModelStoreError> {
    if base.shape != target.shape {
        return Err(ModelStoreError::ShapeMismatch { expected: base.shape.clone(), got: target.shape.clone() });
    }
    match op {
        DeltaOperator::Xor => {
            let data = base.data.iter().zip(&target.data).map(|(b, t)| f64::from_bits(b.to_bits() ^ t.to_bits())).collect();
            Ok(encode_mdmw(&Weights { shape: target.shape.clone(), data }))
        }
        DeltaOperator::Subtract => {
            let mut mask = vec![0u8; target.data.len().div_ceil(8)];
            let data = base
                .data
                .iter()
                .zip(&target.data)
                .enumerate()
                .map(|(i, (&b, &t))| {
                    let d = t - b;
                    if (b + d).to_bits() == t.to_bits() {
                        d
                    } else {
                        mask[i / 8] |= 1 << (i % 8);
                        t
                    }
                })
                .collect();
            let mut out = encode_mdmw(&Weights { shape: target.shape.clone(), data });
            out.extend_from_slice(&mask);
            Ok(out)
        }
    }
}

pub fn apply_delta(base: &Weights, delta: &[u8], op: DeltaOperator) -> Result<Weights, ModelStoreError> {
    let (d, end) = decode_prefix(delta)?;
    if d.shape != base.shape {
        return Err(ModelStoreError::ShapeMismatch { expected: base.shape.clone(), got: d.shape });
    }
    let n = d.data.len();
    match op {
        DeltaOperator::Xor => {
            if end != delta.len() {
                return Err(ModelStoreError::Format { offset: end as u64, reason: "trailing bytes".into() });
            }
            let data = base.data.iter().zip(&d.data).map(|(b, x)| f64::from_bits(b.to_bits() ^ x.to_bits())).collect();
            Ok(Weights { shape: d.shape, data })
        }
        DeltaOperator::Subtract => {
            let mask = &delta[end..];
            if mask.len() != n.div_ceil(8) {
                return Err(ModelStoreError::Format { offset: end as u64, reason: "mask length mismatch".into() });
            }
            let data = base
                .data
                .iter()
                .zip(&d.data)
                .enumerate()
                .map(|(i, (&b, &x))| if mask[i / 8] >> (i % 8) & 1 == 1 { x } else { b + x })
                .collect();
            Ok(Weights { shape: d.shape, data })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_models_xor_to_zero_words() {
        let w = Weights { shape: vec![2, 3], data: vec![1.5, -2.0, 3.25, 0.0, 1e-300, 7.0] };
        let d = make_delta(&w, &w, DeltaOperator::Xor).unwrap();
        let (dw, _) = decode_prefix(&d).unwrap();
        assert!(dw.data.iter().all(|v| v.to_bits() == 0));
    }

    #[test]
    fn inexact_subtraction_falls_back_to_raw_bits() {
        let base = Weights { shape: vec![3], data: vec![1e20, 0.0, 1.0] };
        let target = Weights { shape: vec![3], data: vec![1.0, -0.0, 1.0 + f64::EPSILON] };
        let d = make_delta(&base, &target, DeltaOperator::Subtract).unwrap();
        assert_eq!(*d.last().unwrap(), 0b011);
        assert!(apply_delta(&base, &d, DeltaOperator::Subtract).unwrap().bit_eq(&target));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Weights { shape: vec![2], data: vec![0.0; 2] };
        let b = Weights { shape: vec![1, 2], data: vec![0.0; 2] };
        assert!(matches!(make_delta(&a, &b, DeltaOperator::Xor), Err(ModelStoreError::ShapeMismatch { .. })));
    }
}
