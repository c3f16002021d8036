//! Distance-to-nearest-synthetic membership inference.

use serde::{Deserialize, Serialize};

use crate::codec::CodecState;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiaOutcome {
    /// Best balanced accuracy over all thresholds.
    pub accuracy: f64,
    /// Records at distance ≤ threshold are called members; `None` when the
    /// best rule calls nobody a member.
    pub threshold: Option<f64>,
}

/// Euclidean distance from each row of `queries` to its nearest row of
/// `reference`.
pub fn nearest_distances(queries: &Tensor, reference: &Tensor) -> Result<Vec<f64>> {
    if reference.rows() == 0 {
        return Err(Error::Data("no synthetic rows to compare against".into()));
    }
    if queries.cols() != reference.cols() {
        return Err(Error::Shape(format!(
            "records have width {}, synthetic rows {}",
            queries.cols(),
            reference.cols()
        )));
    }
    Ok(queries
        .iter_rows()
        .map(|q| {
            reference
                .iter_rows()
                .map(|r| q.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// Attack accuracy on encoded records. The attacker thresholds each
/// record's nearest-synthetic distance, with the threshold picked to
/// maximize balanced accuracy, so the result is never below 0.5.
pub fn mia(members: &Tensor, nonmembers: &Tensor, synth: &Tensor) -> Result<MiaOutcome> {
    if members.rows() == 0 || members.rows() != nonmembers.rows() {
        return Err(Error::Data(format!(
            "member and nonmember sets must be equal-sized and non-empty, got {} and {}",
            members.rows(),
            nonmembers.rows()
        )));
    }
    let dm = nearest_distances(members, synth)?;
    let dn = nearest_distances(nonmembers, synth)?;
    Ok(best_threshold(&dm, &dn))
}

/// Encodes raw records with the checkpoint codec and runs [`mia`].
pub fn mia_raw(
    codec: &CodecState,
    members: &[Vec<String>],
    nonmembers: &[Vec<String>],
    synth: &[Vec<String>],
) -> Result<MiaOutcome> {
    if members.len() != nonmembers.len() {
        return Err(Error::Data(format!(
            "unbalanced attack sets: {} members, {} nonmembers",
            members.len(),
            nonmembers.len()
        )));
    }
    let encode = |rows: &[Vec<String>], what: &str| -> Result<Tensor> {
        let (t, dropped) = codec.encode_rows(rows)?;
        if dropped > 0 {
            return Err(Error::Data(format!(
                "{dropped} {what} rows could not be encoded with the checkpoint codec"
            )));
        }
        Ok(t)
    };
    mia(
        &encode(members, "member")?,
        &encode(nonmembers, "nonmember")?,
        &encode(synth, "synthetic")?,
    )
}

fn best_threshold(members: &[f64], nonmembers: &[f64]) -> MiaOutcome {
    let mut scored: Vec<(f64, bool)> = members
        .iter()
        .map(|d| (*d, true))
        .chain(nonmembers.iter().map(|d| (*d, false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (np, nn) = (members.len() as f64, nonmembers.len() as f64);
    let mut best = MiaOutcome {
        accuracy: 0.5,
        threshold: None,
    };
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            if scored[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let acc = 0.5 * (tp / np + (nn - fp) / nn);
        if acc > best.accuracy {
            best = MiaOutcome {
                accuracy: acc,
                threshold: Some(t),
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_copy_and_distant_nonmember() {
        let synth = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let members = synth.clone();
        let nonmembers = Tensor::from_rows(&[vec![10.0, 10.0]]).unwrap();
        let out = mia(&members, &nonmembers, &synth).unwrap();
        assert_eq!(out.accuracy, 1.0);
        assert_eq!(out.threshold, Some(0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(1, 3);
        assert!(mia(&a, &b, &a).is_err());
        assert!(mia(&a, &a, &Tensor::zeros(0, 3)).is_err());
    }

    #[test]
    fn indistinguishable_sets_score_half() {
        let out = best_threshold(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(out.accuracy, 0.5);
        assert_eq!(out.threshold, None);
    }
}
