mod common;

use common::*;
use proptest::prelude::*;
use streamdp::harness::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, make_gmm, run_protocol, save_checkpoint, Dataset,
    ProtocolRun, RunConfig, CHECKPOINT_VERSION,
};
use streamdp::Error;

fn dataset(seed: u64) -> Dataset {
    let (x, labels) = make_gmm(seed, 4, 2, 400, 10.0).unwrap();
    Dataset { x, labels: Some(labels) }
}

fn streaming_config() -> RunConfig {
    let mut pairs = LINEAR_CODEC.to_vec();
    pairs.extend([
        ("protocol.kind", "disjoint-streams"),
        ("protocol.holdout_fraction", "0.2"),
        ("pretrain.steps", "200"),
        ("stream.vae_steps", "5"),
    ]);
    config(&pairs)
}

fn mid_run_bytes() -> Vec<u8> {
    let data = dataset(1);
    let mut run = ProtocolRun::new(streaming_config(), &data).unwrap();
    run.step().unwrap();
    encode_checkpoint(&run.checkpoint()).unwrap()
}

#[test]
fn save_load_save_is_byte_identical() {
    let bytes = mid_run_bytes();
    let again = encode_checkpoint(&decode_checkpoint(&bytes).unwrap()).unwrap();
    assert_eq!(bytes, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    save_checkpoint(&path, &decode_checkpoint(&bytes).unwrap()).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(load_checkpoint(&path).unwrap(), decode_checkpoint(&bytes).unwrap());
}

#[test]
fn version_mismatch_is_reported() {
    let mut bytes = mid_run_bytes();
    bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    match decode_checkpoint(&bytes) {
        Err(Error::Version { found, expected }) => {
            assert_eq!(found, CHECKPOINT_VERSION + 1);
            assert_eq!(expected, CHECKPOINT_VERSION);
        }
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn truncation_and_corruption_are_integrity_errors() {
    let bytes = mid_run_bytes();
    for cut in [0, 5, 19, 100, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Integrity(_))),
            "cut at {cut}"
        );
    }
    let mut flipped = bytes.clone();
    let mid = flipped.len() - 40;
    flipped[mid] ^= 0x10;
    assert!(matches!(decode_checkpoint(&flipped), Err(Error::Integrity(_))));
}

#[test]
fn identical_runs_give_identical_reports() {
    let data = dataset(2);
    let (a, ca) = run_protocol(streaming_config(), &data).unwrap();
    let (b, cb) = run_protocol(streaming_config(), &data).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(encode_checkpoint(&ca).unwrap(), encode_checkpoint(&cb).unwrap());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = dataset(3);
    let (whole, _) = run_protocol(streaming_config(), &data).unwrap();

    let mut first = ProtocolRun::new(streaming_config(), &data).unwrap();
    first.step().unwrap();
    let bytes = encode_checkpoint(&first.checkpoint()).unwrap();
    drop(first);
    let mut resumed = ProtocolRun::resume(decode_checkpoint(&bytes).unwrap(), &data).unwrap();
    assert_eq!(resumed.completed_streams(), 1);
    resumed.run_to_end().unwrap();
    assert_eq!(resumed.report().unwrap().to_json().unwrap(), whole.to_json().unwrap());
}

#[test]
fn resume_rejects_other_data() {
    let bytes = mid_run_bytes();
    let err = ProtocolRun::resume(decode_checkpoint(&bytes).unwrap(), &dataset(9)).unwrap_err();
    assert!(matches!(err, Error::Domain(_)), "{err:?}");
}

#[test]
fn report_roundtrips_through_json() {
    let (report, _) = run_protocol(streaming_config(), &dataset(4)).unwrap();
    let text = report.to_json().unwrap();
    assert_eq!(streamdp::harness::RunReport::from_json(&text).unwrap(), report);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_single_byte_flip_is_rejected(pos in 0usize..1_000_000, bit in 0u8..8) {
        let bytes = mid_run_bytes();
        let mut bad = bytes.clone();
        let pos = pos % bad.len();
        bad[pos] ^= 1 << bit;
        prop_assert!(decode_checkpoint(&bad).is_err());
    }
}
