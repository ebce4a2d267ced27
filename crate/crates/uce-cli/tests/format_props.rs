//! Property tests for the binary matrix format: round-trips preserve bits,
//! the encoding is canonical, and every truncation or extension fails.

use proptest::prelude::*;
use uce_cli::format::{load_matrix, load_matrix_meta, save_matrix, Dtype};
use uce_core::Matrix;

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        // Values that fit f32 exactly, to exercise the narrow encoding.
        any::<f32>()
            .prop_filter("finite", |x| x.is_finite())
            .prop_map(|x| x as f64),
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(1.0),
    ]
}

fn matrices() -> impl Strategy<Value = Matrix> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        proptest::collection::vec(finite_f64(), r * c)
            .prop_map(move |data| Matrix::from_vec(r, c, data).unwrap())
    })
}

fn saved(m: &Matrix) -> Vec<u8> {
    let mut bytes = Vec::new();
    save_matrix(m, &mut bytes).unwrap();
    bytes
}

proptest! {
    #[test]
    fn round_trip_preserves_every_bit(m in matrices()) {
        let bytes = saved(&m);
        let back = load_matrix(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back.rows(), m.rows());
        prop_assert_eq!(back.cols(), m.cols());
        for (a, b) in m.data().iter().zip(back.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn encoding_is_canonical(m in matrices()) {
        let bytes = saved(&m);
        let back = load_matrix(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(saved(&back), bytes);
    }

    #[test]
    fn narrow_files_hold_only_narrow_values(m in matrices()) {
        let bytes = saved(&m);
        let (back, dtype) = load_matrix_meta(&mut bytes.as_slice()).unwrap();
        let n = m.rows() * m.cols();
        match dtype {
            Dtype::F32 => {
                prop_assert_eq!(bytes.len(), 17 + 4 * n);
                for &x in back.data() {
                    prop_assert_eq!(((x as f32) as f64).to_bits(), x.to_bits());
                }
            }
            Dtype::F64 => {
                prop_assert_eq!(bytes.len(), 17 + 8 * n);
                // At least one entry forced the wide encoding.
                prop_assert!(m
                    .data()
                    .iter()
                    .any(|&x| ((x as f32) as f64).to_bits() != x.to_bits()));
            }
        }
    }

    #[test]
    fn every_truncation_fails(m in matrices()) {
        let bytes = saved(&m);
        for cut in 0..bytes.len() {
            prop_assert!(
                load_matrix(&mut &bytes[..cut]).is_err(),
                "prefix of {cut} bytes loaded"
            );
        }
    }

    #[test]
    fn trailing_bytes_fail(m in matrices(), extra in 1usize..4) {
        let mut bytes = saved(&m);
        bytes.extend(std::iter::repeat_n(0u8, extra));
        prop_assert!(load_matrix(&mut bytes.as_slice()).is_err());
    }
}
