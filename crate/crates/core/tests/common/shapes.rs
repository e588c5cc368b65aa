//! Hand-derived per-layer shape tables of the four image models.

use cmem::image_models::ImageModelKind;

pub type Trace = Vec<Vec<usize>>;

/// Per-layer sample shapes (input first) of encoder and decoder for a
/// 28x56 input with `c` channels.
pub fn expected_trace(kind: ImageModelKind, c: usize) -> (Trace, Trace) {
    let mlp = 1568 * c;
    let v = |s: &[usize]| s.to_vec();
    match kind {
        ImageModelKind::ConvVae => (
            vec![
                v(&[c, 28, 56]),
                v(&[8, 28, 56]),
                v(&[8, 28, 56]),
                v(&[8, 14, 28]),
                v(&[256]),
                v(&[256]),
                v(&[100]),
            ],
            vec![
                v(&[100]),
                v(&[3136]),
                v(&[3136]),
                v(&[8, 14, 28]),
                v(&[8, 14, 28]),
                v(&[8, 14, 28]),
                v(&[8, 28, 56]),
                v(&[c, 28, 56]),
                v(&[c, 28, 56]),
            ],
        ),
        ImageModelKind::MlpVae => (
            vec![v(&[c, 28, 56]), v(&[256]), v(&[256]), v(&[100])],
            vec![
                v(&[100]),
                v(&[256]),
                v(&[256]),
                v(&[mlp]),
                v(&[mlp]),
                v(&[c, 28, 56]),
            ],
        ),
        ImageModelKind::ConvAe => (
            vec![
                v(&[c, 28, 56]),
                v(&[16, 28, 56]),
                v(&[16, 28, 56]),
                v(&[16, 14, 28]),
                v(&[8, 14, 28]),
                v(&[8, 14, 28]),
                v(&[8, 7, 14]),
                v(&[100]),
                v(&[100]),
            ],
            vec![
                v(&[100]),
                v(&[784]),
                v(&[784]),
                v(&[8, 7, 14]),
                v(&[8, 7, 14]),
                v(&[8, 7, 14]),
                v(&[8, 14, 28]),
                v(&[16, 14, 28]),
                v(&[16, 14, 28]),
                v(&[16, 28, 56]),
                v(&[c, 28, 56]),
                v(&[c, 28, 56]),
            ],
        ),
        ImageModelKind::MlpAe => (
            vec![v(&[c, 28, 56]), v(&[256]), v(&[256]), v(&[100]), v(&[100])],
            vec![
                v(&[100]),
                v(&[256]),
                v(&[256]),
                v(&[mlp]),
                v(&[mlp]),
                v(&[c, 28, 56]),
            ],
        ),
    }
}
