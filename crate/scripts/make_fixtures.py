"""Regenerates the synthetic mini-dataset under fixtures/mini."""

import json
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parent.parent / "fixtures" / "mini"
W, H = 160, 120

# (narration_id, participant, video, narration, start, stop, verb, noun)
ACTIONS = [
    ("P01_11_9", "P01", "P01_11", "add chicken", 400, 520, "add", "chicken"),
    ("P02_03_2", "P02", "P02_03", "cut apple", 100, 250, "cut", "apple"),
    ("P03_05_14", "P03", "P03_05", "remove lid", 1200, 1260, "remove", "lid"),
]


def counter(draw):
    draw.rectangle([0, 0, W, 50], fill=(200, 190, 170))
    draw.rectangle([0, 50, W, H], fill=(120, 90, 60))


def hand(draw, x, y):
    draw.ellipse([x, y, x + 30, y + 22], fill=(230, 180, 150))


def scenes(video):
    start = Image.new("RGB", (W, H))
    end = Image.new("RGB", (W, H))
    for img, after in ((start, False), (end, True)):
        d = ImageDraw.Draw(img)
        counter(d)
        if video == "P01_11":
            d.ellipse([50, 60, 110, 110], fill=(60, 60, 70))
            if after:
                d.ellipse([65, 72, 95, 95], fill=(235, 210, 170))
            else:
                d.rectangle([100, 40, 130, 60], fill=(235, 210, 170))
            hand(d, 105 if not after else 120, 30)
        elif video == "P02_03":
            if after:
                d.pieslice([60, 62, 90, 92], 90, 270, fill=(200, 30, 30))
                d.pieslice([74, 62, 104, 92], 270, 90, fill=(200, 30, 30))
            else:
                d.ellipse([65, 62, 95, 92], fill=(200, 30, 30))
            d.line([30, 100, 60, 80], fill=(180, 180, 190), width=3)
            hand(d, 20, 85)
        else:
            d.rectangle([55, 55, 105, 105], fill=(150, 150, 160))
            if after:
                d.rectangle([110, 30, 150, 40], fill=(90, 90, 100))
            else:
                d.rectangle([52, 50, 108, 58], fill=(90, 90, 100))
            hand(d, 60 if not after else 115, 35)
    return start, end


DETECTIONS = {
    "P01_11": [
        {"kind": "hand", "box": [105, 30, 135, 52], "score": 0.97},
        {"kind": "object", "box": [100, 40, 130, 60], "score": 0.81},
        {"kind": "object", "box": [5, 5, 20, 20], "score": 0.05},
    ],
    "P02_03": [
        {"kind": "hand", "box": [20, 85, 50, 107], "score": 0.93},
        {"kind": "object", "box": [65, 62, 95, 92], "score": 0.88},
        {"kind": "object", "box": [30, 80, 60, 100], "score": 0.1},
    ],
    "P03_05": [
        {"kind": "hand", "box": [60, 35, 90, 57], "score": 0.95},
        {"kind": "object", "box": [52, 50, 108, 58], "score": 0.74},
    ],
}

SEGMENTATIONS = {
    "P01_11": [
        {"category": "chicken", "polygons": [[[100, 40], [130, 40], [130, 60], [100, 60]]], "score": 0.9},
        {"category": "pan", "polygons": [[[50, 85], [80, 60], [110, 85], [80, 110]]], "score": 0.85},
        {"category": "hand", "polygons": [[[105, 41], [120, 30], [135, 41], [120, 52]]], "score": 0.92},
    ],
    "P02_03": [
        {"category": "apple", "polygons": [[[65, 77], [80, 62], [95, 77], [80, 92]]], "score": 0.9},
        {"category": "knife", "polygons": [[[29, 99], [59, 79], [61, 82], [31, 102]]], "score": 0.6},
        {"category": "hand", "polygons": [[[20, 96], [35, 85], [50, 96], [35, 107]]], "score": 0.95},
    ],
    "P03_05": [
        {"category": "lid", "polygons": [[[52, 50], [108, 50], [108, 58], [52, 58]]], "score": 0.8},
        {"category": "pot", "polygons": [[[55, 58], [105, 58], [105, 105], [55, 105]]], "score": 0.08},
        {"category": "hand", "polygons": [[[60, 46], [75, 35], [90, 46], [75, 57]]], "score": 0.9},
    ],
}

PAIRS = [
    ("cut apple", "Apple is cut in half with a knife"),
    ("open fridge", "The fridge door is open"),
    ("pour water", "The glass is full of water"),
    ("wash plate", "The plate is clean and wet"),
    ("put lid", "The pot is covered by the lid"),
]

COMPLETIONS = {
    "cut apple": " Apple is cut in half with a knife\n\nAction: open fridge",
    "add chicken": " After add chicken, there are now chicken in the pot.",
    "remove lid": " The lid is off the pot\n\n",
}


def main():
    header = "narration_id,participant_id,video_id,narration,start_frame,stop_frame,verb,noun\n"
    rows = "".join(",".join(map(str, a)) + "\n" for a in ACTIONS)
    ROOT.mkdir(parents=True, exist_ok=True)
    (ROOT / "actions.csv").write_text(header + rows)
    for nid, _, video, _, start, stop, _, _ in ACTIONS:
        frames = ROOT / "frames" / video
        frames.mkdir(parents=True, exist_ok=True)
        a, b = scenes(video)
        a.save(frames / f"frame_{start:010d}.png")
        b.save(frames / f"frame_{stop:010d}.png")
        for kind, table in (("detections", DETECTIONS), ("segmentations", SEGMENTATIONS)):
            (ROOT / kind).mkdir(exist_ok=True)
            doc = {str(start): table[video]}
            (ROOT / kind / f"{video}.json").write_text(json.dumps(doc, indent=2) + "\n")
    (ROOT / "pairs.tsv").write_text(
        "# action\teffect\n" + "".join(f"{a}\t{e}\n" for a, e in PAIRS)
    )
    (ROOT / "completions.json").write_text(json.dumps(COMPLETIONS, indent=2) + "\n")
    config = {
        "dataset": {
            "actions": "actions.csv",
            "frames_dir": "frames",
            "detections": "detections",
            "segmentations": "segmentations",
            "pairs": "pairs.tsv",
        },
        "completion": {"kind": "scripted", "table": "completions.json"},
        "backend": {"kind": "mock"},
        "seed": 7,
        "output_dir": "out",
    }
    (ROOT / "config.json").write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    main()
