use std::f64::consts::PI;

/// Length of [`positional_encoding`] output for a `dim`-vector.
pub fn encoded_len(dim: usize, frequencies: usize, passthrough: bool) -> usize {
    dim * 2 * frequencies + if passthrough { dim } else { 0 }
}

/// Frequency encoding of `v`.
///
/// Layout: optional raw input first, then for each octave `k = 0..L-1`
/// the block `sin(2^k π v_0..)` followed by `cos(2^k π v_0..)`.
pub fn positional_encoding(v: &[f64], frequencies: usize, passthrough: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(v.len(), frequencies, passthrough));
    encode_into(v, frequencies, passthrough, &mut out);
    out
}

pub(crate) fn encode_into(v: &[f64], frequencies: usize, passthrough: bool, out: &mut Vec<f64>) {
    if passthrough {
        out.extend_from_slice(v);
    }
    // Octaves after the first use the double-angle identities; the absolute
    // error grows by about 4x per octave, ~1e-12 at ten octaves.
    let start = out.len();
    for k in 0..frequencies {
        if k == 0 {
            out.extend(v.iter().map(|x| (PI * x).sin()));
            out.extend(v.iter().map(|x| (PI * x).cos()));
        } else {
            let prev = out.len() - 2 * v.len();
            for i in 0..v.len() {
                let (s, c) = (out[prev + i], out[prev + v.len() + i]);
                out.push(2.0 * s * c);
            }
            for i in 0..v.len() {
                let s = out[prev + i];
                out.push(1.0 - 2.0 * s * s);
            }
        }
    }
    debug_assert_eq!(out.len() - start, 2 * frequencies * v.len());
}
