use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn hop_of(block: usize) -> Result<usize> {
    if block == 0 || !block.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "block length must be even and positive, got {block}"
        )));
    }
    Ok(block / 2)
}

/// Number of 50%-overlapping blocks needed to cover `len` samples, padding
/// the tail with zeros so the last block is full.
pub fn frame_count(len: usize, block: usize) -> Result<usize> {
    let hop = hop_of(block)?;
    if len <= block {
        return Ok(1);
    }
    Ok((len - block).div_ceil(hop) + 1)
}

/// Signal length after tail padding.
pub fn padded_len(len: usize, block: usize) -> Result<usize> {
    Ok((frame_count(len, block)? - 1) * hop_of(block)? + block)
}

/// Split `x` into `[frames × block]` rows; row ℓ starts at sample ℓ·block/2.
pub fn frame_signal(x: &[f64], block: usize) -> Result<Tensor> {
    let hop = hop_of(block)?;
    if x.is_empty() {
        return Err(Error::dim("frame_signal", "empty signal"));
    }
    let frames = frame_count(x.len(), block)?;
    let mut data = vec![0.0; frames * block];
    for (l, row) in data.chunks_exact_mut(block).enumerate() {
        let start = l * hop;
        let end = (start + block).min(x.len());
        row[..end - start].copy_from_slice(&x[start..end]);
    }
    Tensor::new(&[frames, block], data)
}

/// Sum 50%-overlapping `[frames × block]` rows back into a signal of length
/// `(frames−1)·block/2 + block`. No synthesis window is applied.
pub fn overlap_add(frames: &Tensor) -> Result<Vec<f64>> {
    frames.expect_rank("overlap_add", 2)?;
    let (count, block) = (frames.shape()[0], frames.shape()[1]);
    let hop = hop_of(block)?;
    let mut out = vec![0.0; (count - 1) * hop + block];
    for l in 0..count {
        for (o, &v) in out[l * hop..l * hop + block].iter_mut().zip(frames.row(l)) {
            *o += v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eight_samples_block_four() {
        let x: Vec<f64> = (0..8).map(f64::from).collect();
        let f = frame_signal(&x, 4).unwrap();
        assert_eq!(f.shape(), &[3, 4]);
        assert_eq!(f.row(0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.row(1), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(f.row(2), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn frame_counts() {
        assert_eq!(frame_count(16, 16).unwrap(), 1);
        assert_eq!(frame_count(3, 16).unwrap(), 1);
        assert_eq!(frame_count(17, 16).unwrap(), 2);
        assert_eq!(frame_count(24, 16).unwrap(), 2);
        assert_eq!(frame_count(25, 16).unwrap(), 3);
        assert_eq!(padded_len(25, 16).unwrap(), 32);
        assert_eq!(padded_len(32000, 16).unwrap(), 32000);
        assert!(matches!(frame_signal(&[1.0; 8], 5), Err(Error::Config(_))));
    }

    #[test]
    fn constant_signal_gives_identical_interior_blocks() {
        let f = frame_signal(&[0.7; 40], 8).unwrap();
        for l in 0..f.shape()[0] {
            assert_eq!(f.row(l), &[0.7; 8]);
        }
    }

    #[test]
    fn single_frame_passes_through() {
        let f = Tensor::new(&[1, 4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(overlap_add(&f).unwrap(), f.data());
    }

    #[test]
    fn halved_frames_reconstruct_interior() {
        let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.31).sin()).collect();
        let f = frame_signal(&x, 16).unwrap().map(|v| v / 2.0);
        let y = overlap_add(&f).unwrap();
        assert_eq!(&y[8..56], &x[8..56]);
    }

    proptest! {
        #[test]
        fn framing_then_ola_doubles_interior(x in proptest::collection::vec(-1.0f64..1.0, 32..200), half in 1usize..10) {
            let block = 2 * half;
            let f = frame_signal(&x, block).unwrap();
            let y = overlap_add(&f).unwrap();
            let end = padded_len(x.len(), block).unwrap() - half;
            for i in half..end.min(x.len()) {
                prop_assert_eq!(y[i], 2.0 * x[i]);
            }
        }

        #[test]
        fn ola_is_adjoint_of_framing(x in proptest::collection::vec(-1.0f64..1.0, 48), fr in proptest::collection::vec(-1.0f64..1.0, 5 * 16)) {
            let frames = Tensor::new(&[5, 16], fr).unwrap();
            let fx = frame_signal(&x, 16).unwrap();
            let ola = overlap_add(&frames).unwrap();
            let lhs = fx.dot(&frames);
            let rhs: f64 = x.iter().zip(&ola).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
