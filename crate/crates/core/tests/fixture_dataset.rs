use std::path::{Path, PathBuf};

use effectcast_core::dataset::{
    load_actions, load_detections, load_segmentations, select_frame_pair, FrameLayout,
};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/mini")
        .join(rel)
}

fn authored(kind: &str, video: &str, frame: u64) -> usize {
    let text = std::fs::read_to_string(fixture(&format!("{kind}/{video}.json"))).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc[frame.to_string()].as_array().map_or(0, Vec::len)
}

#[test]
fn actions_load_in_file_order() {
    let actions = load_actions(&fixture("actions.csv")).unwrap();
    let ids: Vec<&str> = actions.iter().map(|a| a.narration_id()).collect();
    assert_eq!(ids, ["P01_11_9", "P02_03_2", "P03_05_14"]);
    assert_eq!(actions[1].phrase(), "cut apple");
}

#[test]
fn loaders_return_every_authored_record() {
    for action in load_actions(&fixture("actions.csv")).unwrap() {
        let video = action.video_id();
        let frame = action.start_frame();
        let dets = load_detections(&fixture(&format!("detections/{video}.json")), frame).unwrap();
        assert_eq!(dets.len(), authored("detections", video, frame));
        let regs =
            load_segmentations(&fixture(&format!("segmentations/{video}.json")), frame).unwrap();
        assert_eq!(regs.len(), authored("segmentations", video, frame));
        assert!(
            load_detections(&fixture(&format!("detections/{video}.json")), frame + 1)
                .unwrap()
                .is_empty()
        );
    }
}

#[test]
fn frame_pairs_are_deterministic() {
    let layout = FrameLayout::default();
    for action in load_actions(&fixture("actions.csv")).unwrap() {
        let a = select_frame_pair(&action, &fixture("frames"), &layout).unwrap();
        let b = select_frame_pair(&action, &fixture("frames"), &layout).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.start().dims(), (160, 120));
        assert_ne!(a.start(), a.end_truth());
    }
}
