use beac::checkpoint::{self, CheckpointError};
use beac::fseq::{self, FseqError};
use beac::manifest::{self, DataError};
use beac_core::data::{EmotionLabel, FeatureSequence};
use beac_core::model::{Model, ModelConfig, Variant};
use beac_core::Tensor;

fn frames(m: usize, d: usize) -> Tensor<f32> {
    Tensor::new(&[m, d], (0..m * d).map(|i| i as f32 * 0.5 - 3.0).collect()).unwrap()
}

#[test]
fn fseq_layout_is_bit_exact() {
    let t = Tensor::new(&[2, 3], vec![1.0f32, -2.0, 0.5, 3.25, f32::MIN_POSITIVE, -0.0]).unwrap();
    let bytes = fseq::encode(&t);
    let mut want = b"FSEQ".to_vec();
    want.push(1);
    want.extend_from_slice(&2u32.to_le_bytes());
    want.extend_from_slice(&3u32.to_le_bytes());
    for v in t.data() {
        want.extend_from_slice(&v.to_le_bytes());
    }
    assert_eq!(bytes, want);
    let back = fseq::decode(&bytes).unwrap();
    assert_eq!(back.shape(), &[2, 3]);
    let bits = |x: &Tensor<f32>| x.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&t));
}

#[test]
fn fseq_rejects_malformed_input() {
    let good = fseq::encode(&frames(3, 2));
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(fseq::decode(&bad), Err(FseqError::BadMagic(_))));
    let mut bad = good.clone();
    bad[4] = 2;
    assert!(matches!(fseq::decode(&bad), Err(FseqError::BadVersion(2))));
    assert!(matches!(
        fseq::decode(&good[..good.len() - 1]),
        Err(FseqError::Truncated { .. })
    ));
    let mut bad = good.clone();
    bad.push(0);
    assert!(matches!(fseq::decode(&bad), Err(FseqError::Trailing(1))));
    let mut bad = good.clone();
    bad[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(fseq::decode(&bad), Err(FseqError::NonFinite { frame: 1, dim: 0 })));
    let mut empty = good[..13].to_vec();
    empty[5..9].copy_from_slice(&0u32.to_le_bytes());
    assert!(matches!(fseq::decode(&empty), Err(FseqError::Empty { .. })));
}

#[test]
fn fseq_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.fseq");
    let t = frames(30, 64);
    fseq::write(&p, &t).unwrap();
    assert_eq!(std::fs::read(&p).unwrap().len(), 13 + 4 * 30 * 64);
    assert_eq!(fseq::read(&p).unwrap(), t);
}

fn seq(id: &str, label: usize, span: Option<(usize, usize)>) -> FeatureSequence<f32> {
    FeatureSequence::new(id.into(), frames(10, 4), EmotionLabel(label), span).unwrap()
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = vec![seq("a", 0, Some((2, 5))), seq("b", 3, None)];
    let entries = manifest::write_features(dir.path(), &seqs).unwrap();
    let path = dir.path().join("m.jsonl");
    manifest::write_entries(&path, &entries).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        r#"{"id":"a","path":"features/a.fseq","label":0,"span":[2,5]}"#
    );
    assert!(!text.lines().nth(1).unwrap().contains("span"));
    let back = manifest::load(&path).unwrap();
    assert_eq!(back, seqs);
}

#[test]
fn manifest_accepts_label_names() {
    let dir = tempfile::tempdir().unwrap();
    fseq::write(&dir.path().join("x.fseq"), &frames(10, 4)).unwrap();
    let path = dir.path().join("m.jsonl");
    std::fs::write(&path, "{\"id\":\"x\",\"path\":\"x.fseq\",\"label\":\"fear\",\"span\":[1,3]}\n\n").unwrap();
    let s = manifest::load(&path).unwrap();
    assert_eq!(s[0].label, EmotionLabel(2));
    assert_eq!(s[0].span, Some((1, 3)));
}

fn write_manifest(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fseq::write(&dir.path().join("x.fseq"), &frames(10, 4)).unwrap();
    let path = dir.path().join("m.jsonl");
    std::fs::write(&path, lines.join("\n")).unwrap();
    (dir, path)
}

#[test]
fn manifest_errors() {
    let (_d, p) = write_manifest(&[r#"{"id":"x","path":"x.fseq","label":0,"extra":1}"#]);
    assert!(matches!(manifest::load(&p), Err(DataError::Json { line: 1, .. })));
    let (_d, p) = write_manifest(&[r#"{"id":"x","path":"x.fseq","label":0,"span":[4,11]}"#]);
    assert!(matches!(manifest::load(&p), Err(DataError::Invalid { .. })));
    let (_d, p) = write_manifest(&[r#"{"id":"x","path":"x.fseq","label":"bored"}"#]);
    assert!(matches!(manifest::load(&p), Err(DataError::Invalid { .. })));
    let (_d, p) = write_manifest(&[
        r#"{"id":"x","path":"x.fseq","label":0}"#,
        r#"{"id":"x","path":"x.fseq","label":1}"#,
    ]);
    assert!(matches!(manifest::load(&p), Err(DataError::DuplicateId(_))));
    let (_d, p) = write_manifest(&[r#"{"id":"x","path":"missing.fseq","label":0}"#]);
    assert!(matches!(manifest::load(&p), Err(DataError::Io { .. } | DataError::Fseq { .. })));
    let (_d, p) = write_manifest(&[]);
    assert!(matches!(manifest::load(&p), Err(DataError::Empty(_))));
}

fn small_model(variant: Variant, seed: u64) -> Model<f32> {
    let mut c = ModelConfig::new(variant, 6, 8, 30);
    c.anet_hidden = 16;
    c.stream_units = 8;
    c.attention_hidden = 8;
    Model::init(c, &mut beac_core::rng_from_seed(seed)).unwrap()
}

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    for v in Variant::ALL {
        let m = small_model(v, 4);
        let bytes = checkpoint::encode(&m);
        let back: Model<f32> = checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, m, "{}", v.as_str());
        assert_eq!(checkpoint::encode(&back), bytes);
    }
}

#[test]
fn checkpoint_header_describes_payload() {
    let m = small_model(Variant::Full, 1);
    let bytes = checkpoint::encode(&m);
    let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let (header, payload) = checkpoint::decode_header(&bytes).unwrap();
    assert_eq!(payload.len(), bytes.len() - 8 - len);
    assert_eq!(header.format_version, 1);
    let total: usize = header
        .tensors
        .values()
        .map(|e| e.shape.iter().product::<usize>() * 4)
        .sum();
    assert_eq!(total, payload.len());
    assert!(header.tensors.values().all(|e| e.dtype == "F32"));
}

#[test]
fn c_stream_checkpoint_has_no_attribution_tensors() {
    let full = checkpoint::encode(&small_model(Variant::Full, 1));
    let cs = checkpoint::encode(&small_model(Variant::CStream, 1));
    let (hf, _) = checkpoint::decode_header(&full).unwrap();
    let (hc, _) = checkpoint::decode_header(&cs).unwrap();
    assert!(hf.tensors.keys().any(|k| k.starts_with("anet")));
    assert!(!hc.tensors.keys().any(|k| k.starts_with("anet")));
}

#[test]
fn checkpoint_rejects_corruption() {
    let bytes = checkpoint::encode(&small_model(Variant::Full, 2));
    assert!(matches!(
        checkpoint::decode::<f32>(&bytes[..bytes.len() - 4]),
        Err(CheckpointError::OutOfBounds(_) | CheckpointError::Truncated(_))
    ));
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 4]);
    assert!(matches!(checkpoint::decode::<f32>(&extra), Err(CheckpointError::Trailing(4))));
    assert!(matches!(checkpoint::decode::<f32>(&bytes[..4]), Err(CheckpointError::Truncated(_))));
    let mut huge = bytes.clone();
    huge[..8].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(matches!(checkpoint::decode::<f32>(&huge), Err(CheckpointError::HeaderTooLarge(_))));
}

#[test]
fn checkpoint_rejects_wrong_shapes() {
    let m = small_model(Variant::Full, 2);
    let bytes = checkpoint::encode(&m);
    let (mut header, payload) = checkpoint::decode_header(&bytes).unwrap();
    header.model.anet_hidden += 1;
    let json = serde_json::to_vec(&header).unwrap();
    let mut forged = (json.len() as u64).to_le_bytes().to_vec();
    forged.extend_from_slice(&json);
    forged.extend_from_slice(payload);
    assert!(matches!(checkpoint::decode::<f32>(&forged), Err(CheckpointError::Shape { .. })));
}
