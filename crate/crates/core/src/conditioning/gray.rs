use crate::error::{ensure, Result};
use crate::synthkit::{Frame, CHANNELS};

/// ITU-R BT.601 luma weights.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Luminance of every pixel replicated to three channels.
pub fn to_grayscale_keyframe(frame: &Frame) -> Result<Frame> {
    ensure!(
        frame.channels == CHANNELS && frame.data.len() == frame.height * frame.width * CHANNELS,
        Shape,
        "grayscale conversion needs a {CHANNELS}-channel frame, got {}",
        frame.channels
    );
    let mut out = frame.clone();
    for px in out.data.chunks_exact_mut(CHANNELS) {
        // An already-gray pixel maps to itself exactly, whatever the
        // rounding of the weighted sum.
        let y = if px[0] == px[1] && px[1] == px[2] {
            px[0]
        } else {
            (LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2]).clamp(0.0, 1.0)
        };
        px.fill(y);
    }
    out.meta = None;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(rgb: [f32; 3]) -> Frame {
        let data = (0..64).flat_map(|_| rgb).collect();
        Frame::new(8, 8, 3, data).unwrap()
    }

    #[test]
    fn red_maps_to_its_luma() {
        let g = to_grayscale_keyframe(&solid([1.0, 0.0, 0.0])).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.299));
    }

    #[test]
    fn white_stays_white_and_gray_is_idempotent() {
        let g = to_grayscale_keyframe(&solid([1.0, 1.0, 1.0])).unwrap();
        assert!(g.data.iter().all(|&v| v == 1.0));
        let x = to_grayscale_keyframe(&solid([0.3, 0.6, 0.9])).unwrap();
        assert_eq!(to_grayscale_keyframe(&x).unwrap().data, x.data);
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let f = Frame {
            height: 2,
            width: 2,
            channels: 1,
            data: vec![0.0; 4],
            meta: None,
        };
        assert!(to_grayscale_keyframe(&f).is_err());
    }
}
