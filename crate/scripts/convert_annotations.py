"""Converts upstream annotation dumps into per-video intermediate JSON.

Segmentations: sparse polygon exports with a top-level ``video_annotations``
list, where each entry has ``image.name`` like ``P01_01_frame_0000000140.jpg``
and ``annotations[].{name, segments}``. Records get score 1.0.

Detections: pickled hand-object detections as produced by the
``epic_kitchens.hoa`` tooling (lists of frame detections with normalised
boxes). Unpickling needs that package installed.

Usage:
    convert_annotations.py segmentations SRC.json OUT_DIR [--scale SX SY]
    convert_annotations.py detections SRC.pkl OUT_DIR --size W H
"""

import argparse
import json
import pickle
import re
import sys
from collections import defaultdict
from pathlib import Path

FRAME_RE = re.compile(r"^(?P<video>.+?)_frame_(?P<index>\d+)\.\w+$")


def convert_segmentations(doc, sx=1.0, sy=1.0):
    """Returns {video_id: {frame_key: [record, ...]}}."""
    out = defaultdict(lambda: defaultdict(list))
    for entry in doc["video_annotations"]:
        m = FRAME_RE.match(entry["image"]["name"])
        if not m:
            raise ValueError(f"unrecognised frame name {entry['image']['name']!r}")
        video, index = m["video"], str(int(m["index"]))
        for ann in entry.get("annotations", []):
            polygons = [
                [[round(x * sx, 3), round(y * sy, 3)] for x, y in seg]
                for seg in ann.get("segments", [])
                if len(seg) >= 3
            ]
            if polygons:
                out[video][index].append(
                    {"category": ann["name"], "polygons": polygons, "score": 1.0}
                )
    return out


def _box(bbox, width, height):
    return [
        round(bbox.left * width, 3),
        round(bbox.top * height, 3),
        round(bbox.right * width, 3),
        round(bbox.bottom * height, 3),
    ]


def convert_detections(frames, width, height):
    out = defaultdict(lambda: defaultdict(list))
    for fd in frames:
        records = out[fd.video_id][str(fd.frame_number)]
        for hand in fd.hands:
            records.append({"kind": "hand", "box": _box(hand.bbox, width, height), "score": float(hand.score)})
        for obj in fd.objects:
            records.append({"kind": "object", "box": _box(obj.bbox, width, height), "score": float(obj.score)})
    return out


def write(out, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    for video, frames in sorted(out.items()):
        doc = {k: frames[k] for k in sorted(frames, key=int)}
        (out_dir / f"{video}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(f"{video}: {len(doc)} frame(s)")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="kind", required=True)
    seg = sub.add_parser("segmentations")
    seg.add_argument("src", type=Path)
    seg.add_argument("out_dir", type=Path)
    seg.add_argument("--scale", type=float, nargs=2, default=(1.0, 1.0), metavar=("SX", "SY"))
    det = sub.add_parser("detections")
    det.add_argument("src", type=Path)
    det.add_argument("out_dir", type=Path)
    det.add_argument("--size", type=int, nargs=2, required=True, metavar=("W", "H"))
    args = p.parse_args(argv)

    if args.kind == "segmentations":
        doc = json.loads(args.src.read_text())
        write(convert_segmentations(doc, *args.scale), args.out_dir)
    else:
        try:
            with args.src.open("rb") as f:
                frames = pickle.load(f)
        except ModuleNotFoundError as e:
            sys.exit(f"cannot unpickle detections ({e}); install the epic_kitchens.hoa tooling")
        write(convert_detections(frames, *args.size), args.out_dir)


if __name__ == "__main__":
    main()
