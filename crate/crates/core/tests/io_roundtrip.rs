use pseudopan::grid::Grid;
use pseudopan::io::{
    colorize_panoptic, decode_npy, encode_npy, read_npy, read_npy_with_validity, read_panoptic_png, write_npy, write_panoptic_png,
    PanopticLabel, Tensor, TensorData, IGNORE,
};
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0usize..6, 0..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        let data = prop_oneof![
            prop::collection::vec(any::<u32>(), n).prop_map(|v| TensorData::F32(v.into_iter().map(f32::from_bits).collect())),
            prop::collection::vec(any::<u8>(), n).prop_map(TensorData::U8),
            prop::collection::vec(any::<u16>(), n).prop_map(TensorData::U16),
            prop::collection::vec(any::<bool>(), n).prop_map(TensorData::Bool),
        ];
        (Just(shape), data).prop_map(|(s, d)| Tensor::new(s, d).unwrap())
    })
}

/// Arbitrary raw maps; `repaired` turns them into a valid label.
fn raw_label() -> impl Strategy<Value = (Grid<u8>, Grid<u16>)> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        let sem = prop::collection::vec(prop_oneof![0u8..6, Just(IGNORE)], w * h);
        let inst = prop::collection::vec(prop_oneof![Just(0u16), 1u16..6, 300u16..302], w * h);
        (sem, inst).prop_map(move |(s, i)| (Grid::from_vec(w, h, s).unwrap(), Grid::from_vec(w, h, i).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn npy_bytes_round_trip(t in tensor()) {
        prop_assert_eq!(decode_npy(&encode_npy(&t)).unwrap(), t);
    }

    #[test]
    fn repaired_labels_satisfy_invariants((sem, inst) in raw_label()) {
        let (label, _) = PanopticLabel::repaired(sem, inst).unwrap();
        let (s, i) = label.clone().into_parts();
        let rebuilt = PanopticLabel::new(s, i).unwrap();
        prop_assert_eq!(&rebuilt, &label);
        let (again, repairs) = PanopticLabel::repaired(label.semantic().clone(), label.instance().clone()).unwrap();
        prop_assert_eq!(repairs, 0);
        prop_assert_eq!(again, label);
    }

    #[test]
    fn png_round_trip((sem, inst) in raw_label()) {
        let (label, _) = PanopticLabel::repaired(sem, inst).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (sp, ip) = (dir.path().join("a_sem.png"), dir.path().join("a_inst.png"));
        write_panoptic_png(&label, &sp, &ip).unwrap();
        let (back, repairs) = read_panoptic_png(&sp, &ip).unwrap();
        prop_assert_eq!(repairs, 0);
        prop_assert_eq!(back, label);
    }

    #[test]
    fn colorization_is_pure((sem, inst) in raw_label(), seed in any::<u64>()) {
        let (label, _) = PanopticLabel::repaired(sem, inst).unwrap();
        prop_assert_eq!(colorize_panoptic(&label, seed), colorize_panoptic(&label.clone(), seed));
    }
}

#[test]
fn npy_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.npy");
    let t = Tensor::new(vec![2, 3], TensorData::F32(vec![0.5, -1.0, 1e-30, 3.25, 0.0, -0.0])).unwrap();
    write_npy(&path, &t).unwrap();
    assert_eq!(read_npy(&path).unwrap(), t);
}

#[test]
fn non_finite_values_become_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.npy");
    let t = Tensor::new(vec![4], TensorData::F32(vec![1.0, f32::NAN, f32::INFINITY, 2.0])).unwrap();
    write_npy(&path, &t).unwrap();
    assert!(read_npy(&path).is_err());
    let (back, valid) = read_npy_with_validity(&path).unwrap();
    assert_eq!(valid, Some(vec![true, false, false, true]));
    assert_eq!(back.to_f64(), vec![1.0, 0.0, 0.0, 2.0]);
}

#[test]
fn truncated_npy_is_rejected() {
    let t = Tensor::new(vec![4], TensorData::U16(vec![1, 2, 3, 4])).unwrap();
    let bytes = encode_npy(&t);
    assert!(decode_npy(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_npy(&bytes[..5]).is_err());
}
