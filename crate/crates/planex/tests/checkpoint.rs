mod common;

use planex::checkpoint::{encode, inspect_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
use planex::error::Error;
use planex_core::radiance::{expert_param_count, NetConfig, TeacherMlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full_checkpoint() -> Checkpoint {
    let mut ck = common::small_checkpoint(5);
    ck.teacher = Some(TeacherMlp::new(NetConfig::teacher().with_hidden(16), 9));
    ck.scene.bake(8);
    ck
}

#[test]
fn round_trip_forward_outputs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ck");
    let ck = full_checkpoint();
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let pos = [rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0f32..1.0)];
        let d: [f32; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), -1.0];
        for (a, b) in ck.scene.experts.iter().zip(&back.scene.experts) {
            let (ca, aa) = a.eval(&pos, &d);
            let (cb, ab) = b.eval(&pos, &d);
            assert_eq!(ca.map(f32::to_bits), cb.map(f32::to_bits));
            assert_eq!(aa.to_bits(), ab.to_bits());
        }
        let p3 = [pos[0], pos[1], rng.gen_range(-1.0f32..1.0)];
        let (ta, _) = ck.teacher.as_ref().unwrap().eval(&p3, &d);
        let (tb, _) = back.teacher.as_ref().unwrap().eval(&p3, &d);
        assert_eq!(ta.map(f32::to_bits), tb.map(f32::to_bits));
    }
    for (a, b) in ck.scene.planes.iter().zip(&back.scene.planes) {
        assert_eq!(a.normal(), b.normal());
        assert_eq!(a.up(), b.up());
        assert_eq!(a.right(), b.right());
    }
}

#[test]
fn truncated_file_is_a_corrupt_block() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ck");
    let bytes = encode(&full_checkpoint()).unwrap();
    for cut in [bytes.len() - 1, bytes.len() / 2] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::CorruptBlock { .. })), "cut {cut}");
    }
}

#[test]
fn inspection_reads_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.ck");
    let bytes = encode(&full_checkpoint()).unwrap();
    let header_len = 12 + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    // parameter blocks dropped entirely: inspection still works
    std::fs::write(&path, &bytes[..header_len]).unwrap();
    let h = inspect_checkpoint(&path).unwrap();
    assert_eq!(h.plane_count(), 2);
    assert_eq!(h.expert_param_count, expert_param_count(32, 6, 4));
    assert_eq!(h.expert_param_count, 6948);
    assert!(h.blocks.iter().filter(|b| b.name.starts_with("expert/")).all(|b| b.len == 6948));
    assert_eq!(h.bake_resolution, Some([8, 8]));
}

#[test]
fn saving_leaves_no_temporary_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ck");
    save_checkpoint(&common::small_checkpoint(1), &path).unwrap();
    save_checkpoint(&common::small_checkpoint(2), &path).unwrap();
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("x.ck")]);
    assert_eq!(load_checkpoint(&path).unwrap().seed, 2);
}

#[test]
fn missing_checkpoint_is_reported() {
    assert!(matches!(
        load_checkpoint(std::path::Path::new("/nonexistent/planex.ck")),
        Err(Error::MissingFile(_))
    ));
}
