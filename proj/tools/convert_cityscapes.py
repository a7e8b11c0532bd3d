#!/usr/bin/env python3
"""Convert a Cityscapes-format split into the svia dataset layout.

Reads leftImg8bit/<split>/<city>/*_leftImg8bit.png and the matching
gtFine/<split>/<city>/*_gtFine_labelIds.png, resizes both, and writes
images/, labels/ and cities.csv under --out.
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

# svia category ids: sky 0, road 1, building 2, vehicle 3, person 4,
# traffic sign 5, other 6
CATEGORIES = ["sky", "road", "building", "vehicle", "person", "traffic sign", "other"]
LABEL_MAP = {
    7: 1,  # road
    11: 2,  # building
    20: 5,  # traffic sign
    23: 0,  # sky
    24: 4,  # person
    25: 4,  # rider
}
LABEL_MAP.update({i: 3 for i in range(26, 34)})  # car .. bicycle


def convert_labels(ids):
    lut = np.full(256, 6, dtype=np.uint8)
    for src, dst in LABEL_MAP.items():
        lut[src] = dst
    return lut[ids]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, required=True, help="Cityscapes root")
    ap.add_argument("--split", default="val")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--size", type=int, nargs=2, default=[64, 128], metavar=("H", "W"))
    ap.add_argument("--limit", type=int, default=0, help="max images (0 = all)")
    args = ap.parse_args()

    image_root = args.root / "leftImg8bit" / args.split
    label_root = args.root / "gtFine" / args.split
    if not image_root.is_dir() or not label_root.is_dir():
        raise SystemExit(f"missing {image_root} or {label_root}")

    cities = sorted(p.name for p in image_root.iterdir() if p.is_dir())
    (args.out / "images").mkdir(parents=True, exist_ok=True)
    (args.out / "labels").mkdir(parents=True, exist_ok=True)
    h, w = args.size
    rows = []
    for city_id, city in enumerate(cities):
        for img_path in sorted((image_root / city).glob("*_leftImg8bit.png")):
            if args.limit and len(rows) >= args.limit:
                break
            stem = img_path.name.replace("_leftImg8bit.png", "")
            label_path = label_root / city / f"{stem}_gtFine_labelIds.png"
            if not label_path.exists():
                print(f"skipping {img_path.name}: no label file")
                continue
            name = f"{stem}.png"
            Image.open(img_path).convert("RGB").resize((w, h), Image.BILINEAR).save(args.out / "images" / name)
            ids = np.asarray(Image.open(label_path).resize((w, h), Image.NEAREST), dtype=np.uint8)
            Image.fromarray(convert_labels(ids), mode="L").save(args.out / "labels" / name)
            rows.append((name, city_id))

    with open(args.out / "cities.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "city_id"])
        writer.writerows(rows)
    meta = {"categories": CATEGORIES, "source": "cityscapes", "split": args.split, "cities": cities}
    (args.out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {len(rows)} images from {len(cities)} cities to {args.out}")


if __name__ == "__main__":
    main()
