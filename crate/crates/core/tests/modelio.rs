use proptest::prelude::*;
use tempfile::TempDir;

use vitguard::modelio::{
    checkpoint_bytes, compute_golden, load_checkpoint, load_dataset, model_digest, save_checkpoint, save_dataset,
    Container, GoldenCache, MAGIC,
};
use vitguard::toy::{random_model, synthetic_images};
use vitguard::vit::{Batch, ViTConfig};

fn small() -> ViTConfig {
    ViTConfig::toy_tiny()
}

#[test]
fn checkpoint_round_trip_is_byte_stable() {
    let tmp = TempDir::new().unwrap();
    let model = random_model(small(), 11).unwrap();
    let a = tmp.path().join("a.vtft");
    let b = tmp.path().join("b.vtft");
    let c = tmp.path().join("c.vtft");
    save_checkpoint(&model, &a).unwrap();
    save_checkpoint(&model, &b).unwrap();
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(&bytes[..4], &MAGIC);
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(loaded.num_params(), model.num_params());
    for (x, y) in loaded.params().iter().zip(model.params()) {
        assert_eq!(x.name, y.name);
        assert_eq!(x.shape, y.shape);
        assert!(x.bits().eq(y.bits()), "{}", x.name);
    }
    save_checkpoint(&loaded, &c).unwrap();
    assert_eq!(bytes, std::fs::read(&c).unwrap());
}

#[test]
fn dataset_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = small();
    let images = synthetic_images(&cfg, 5, 2).unwrap();
    let batch = Batch::new(images, Some(vec![0, 1, 2, 3, 4])).unwrap();
    let p = tmp.path().join("d.vtft");
    save_dataset(&batch, Some(cfg.num_classes), &p).unwrap();
    let back = load_dataset(&p).unwrap();
    assert_eq!(back.images.shape, batch.images.shape);
    assert_eq!(back.images.data, batch.images.data);
    assert_eq!(back.labels, batch.labels);

    let bad = Batch::new(batch.images.clone(), Some(vec![0, 1, 2, 3, cfg.num_classes as u32])).unwrap();
    let q = tmp.path().join("bad.vtft");
    save_dataset(&bad, Some(cfg.num_classes), &q).unwrap();
    assert!(load_dataset(&q).is_err());
}

#[test]
fn golden_cache_tracks_model_digest() {
    let tmp = TempDir::new().unwrap();
    let cfg = small();
    let mut model = random_model(cfg.clone(), 4).unwrap();
    let batch = Batch::new(synthetic_images(&cfg, 3, 1).unwrap(), None).unwrap();
    let golden = compute_golden(&model, &batch).unwrap();
    let p = tmp.path().join("g.vtft");
    golden.save(&p).unwrap();
    let back = GoldenCache::load(&p).unwrap();
    assert_eq!(back, golden);
    assert!(back.is_valid_for(&model).unwrap());
    assert_eq!(back.model_hash.len(), 64);
    assert_eq!(back.model_hash, model_digest(&model).unwrap());

    let v = &mut model.params_mut()[0].data[0];
    *v = f32::from_bits(v.to_bits() ^ 1);
    assert!(!back.is_valid_for(&model).unwrap());
}

fn valid_bytes() -> Vec<u8> {
    let mut c = Container::new(serde_json::json!({"kind": "test"}));
    c.insert_f32("a", vec![2, 3], (0..6).map(|i| i as f32).collect());
    c.insert_u32("b", vec![4], vec![1, 2, 3, 4]);
    c.to_bytes().unwrap()
}

#[test]
fn truncation_at_every_length_is_an_error() {
    let bytes = valid_bytes();
    assert!(Container::from_bytes(&bytes).is_ok());
    for n in 0..bytes.len() {
        assert!(Container::from_bytes(&bytes[..n]).is_err(), "prefix {n}");
    }
}

#[test]
fn toy_checkpoint_digest_is_stable() {
    let model = random_model(small(), 0).unwrap();
    assert_eq!(checkpoint_bytes(&model).unwrap(), checkpoint_bytes(&model.clone()).unwrap());
    assert_eq!(model_digest(&model).unwrap(), model_digest(&random_model(small(), 0).unwrap()).unwrap());
    assert_ne!(model_digest(&model).unwrap(), model_digest(&random_model(small(), 1).unwrap()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = Container::from_bytes(&bytes);
    }

    #[test]
    fn corrupted_header_never_panics(pos in 0usize..200, val in any::<u8>()) {
        let mut bytes = valid_bytes();
        let i = pos % bytes.len();
        bytes[i] = val;
        if let Ok(c) = Container::from_bytes(&bytes) {
            // anything accepted must re-serialise and parse again
            let again = c.to_bytes().unwrap();
            prop_assert!(Container::from_bytes(&again).is_ok());
        }
    }

    #[test]
    fn oversized_header_length_is_rejected(extra in 1u64..u64::MAX / 2) {
        let mut bytes = valid_bytes();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        bytes[8..16].copy_from_slice(&hlen.saturating_add(extra).to_le_bytes());
        prop_assert!(Container::from_bytes(&bytes).is_err());
    }
}
