//! Byte-level round trips of every on-disk format.

use lottery::data::{load_cifar10, load_idx, parse_cifar10, parse_idx, write_cifar10, write_idx, Dataset};
use lottery::nn::{build_network, InitSpec, NetworkSpec, ParamSet};
use lottery::pruning::{random_mask, Mask};
use lottery::Error;
use proptest::prelude::*;

fn bytes_to_dataset(shape: Vec<usize>, pixels: &[u8], labels: Vec<usize>) -> Dataset {
    let inputs = pixels.iter().map(|&b| b as f32 / 255.0).collect();
    Dataset::new(shape, inputs, labels, 10).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_round_trips_bit_exactly(
        n in 1usize..5,
        rows in 1usize..6,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let pixels: Vec<u8> = (0..n * rows * cols).map(|i| (seed.wrapping_mul(31).wrapping_add(i as u64 * 97) % 256) as u8).collect();
        let labels: Vec<usize> = (0..n).map(|i| ((seed >> 3) as usize + i) % 10).collect();
        let data = bytes_to_dataset(vec![rows, cols], &pixels, labels.clone());
        let (images, label_bytes) = write_idx(&data).unwrap();
        let back = parse_idx(&images, &label_bytes).unwrap();
        prop_assert_eq!(back.example_shape(), &[rows, cols]);
        prop_assert_eq!(back.labels(), labels.as_slice());
        prop_assert_eq!(back.inputs(), data.inputs());
        prop_assert_eq!(write_idx(&back).unwrap(), (images, label_bytes));
    }

    #[test]
    fn cifar_round_trips_bit_exactly(n in 1usize..3, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..n * 3072).map(|i| (seed.wrapping_add(i as u64 * 13) % 256) as u8).collect();
        let labels: Vec<usize> = (0..n).map(|i| (seed as usize + 3 * i) % 10).collect();
        let data = bytes_to_dataset(vec![3, 32, 32], &pixels, labels.clone());
        let bytes = write_cifar10(&data).unwrap();
        prop_assert_eq!(bytes.len(), n * 3073);
        let back = parse_cifar10(&bytes).unwrap();
        prop_assert_eq!(back.labels(), labels.as_slice());
        prop_assert_eq!(back.inputs(), data.inputs());
        prop_assert_eq!(write_cifar10(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_idx_is_a_format_error(cut in 1usize..20) {
        let data = bytes_to_dataset(vec![2, 2], &[0, 64, 128, 255, 1, 2, 3, 4], vec![3, 7]);
        let (images, labels) = write_idx(&data).unwrap();
        let short = &images[..images.len().saturating_sub(cut)];
        prop_assert!(
            matches!(parse_idx(short, &labels), Err(Error::Format { .. })),
            "expected a format error"
        );
    }

    #[test]
    fn masks_round_trip(keep in 0.05f64..1.0, seed in any::<u64>()) {
        let spec = NetworkSpec::vgg_like([1, 4, 4], &[3], &[5], 2);
        let mask = random_mask(&Mask::full(&spec), &[keep; 4], seed).unwrap();
        prop_assert_eq!(Mask::from_bytes(&mask.to_bytes()).unwrap(), mask);
    }
}

#[test]
fn files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let data = bytes_to_dataset(vec![28, 28], &vec![200; 2 * 784], vec![1, 9]);
    let (images, labels) = write_idx(&data).unwrap();
    let (ip, lp) = (dir.path().join("img"), dir.path().join("lbl"));
    std::fs::write(&ip, images).unwrap();
    std::fs::write(&lp, labels).unwrap();
    let loaded = load_idx(&ip, &lp).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded.example_shape(), &[28, 28]);
    assert!(matches!(load_idx(&dir.path().join("missing"), &lp), Err(Error::Io(_))));

    let cifar = bytes_to_dataset(vec![3, 32, 32], &vec![7; 3072], vec![4]);
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    std::fs::write(&a, write_cifar10(&cifar).unwrap()).unwrap();
    std::fs::write(&b, write_cifar10(&cifar).unwrap()).unwrap();
    let both = load_cifar10(&[&a, &b]).unwrap();
    assert_eq!(both.len(), 2);
    assert_eq!(both.example_shape(), &[3, 32, 32]);
}

#[test]
fn params_round_trip_in_both_precisions() {
    let spec = NetworkSpec::mlp(6, &[5], 3);
    let p: ParamSet<f64> = build_network(&spec, InitSpec::GaussianGlorot, 3).unwrap();
    let back = ParamSet::<f64>::from_bytes(&p.to_bytes(), &spec).unwrap();
    assert_eq!(back, p);
    let p32: ParamSet<f32> = p.cast();
    assert_eq!(ParamSet::<f32>::from_bytes(&p32.to_bytes(), &spec).unwrap(), p32);
    let bytes = p.to_bytes();
    assert!(matches!(
        ParamSet::<f64>::from_bytes(&bytes[..bytes.len() - 1], &spec),
        Err(Error::Format { .. })
    ));
    assert!(ParamSet::<f64>::from_bytes(&bytes, &NetworkSpec::mlp(6, &[4], 3)).is_err());
}
