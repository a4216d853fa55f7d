#!/usr/bin/env python3
"""Convert the MIT-licensed `mnist` and `fashion-mnist` npm packages into IDX files.

The npm packages ship their samples as JSON (`src/digits/<k>.json`,
`src/clothes/<k>.json`). This script rewrites them into the IDX layout read by
the loader and packs the result into data/idx.tar.gz.

    npm pack mnist@1.1.0 fashion-mnist@1.1.0
    mkdir m fm && tar xzf mnist-1.1.0.tgz -C m && tar xzf fashion-mnist-1.1.0.tgz -C fm
    python3 tools/build_idx_fixtures.py --digits m/package --clothes fm/package --out data
"""
import argparse
import io
import json
import struct
import tarfile
from pathlib import Path


def idx_bytes(dims, payload):
    header = bytes([0, 0, 0x08, len(dims)]) + b"".join(struct.pack(">I", d) for d in dims)
    return header + bytes(payload)


def load_digits(root):
    images, labels = [], []
    for k in range(10):
        flat = json.loads((root / "src" / "digits" / f"{k}.json").read_text())["data"]
        for i in range(0, len(flat), 784):
            images.append([min(255, max(0, round(v * 255))) for v in flat[i:i + 784]])
            labels.append(k)
    return images, labels


def load_clothes(root, per_class):
    images, labels = [], []
    for k in range(10):
        rows = json.loads((root / "src" / "clothes" / f"{k}.json").read_text())["data"]
        for row in rows[:per_class]:
            images.append([int(v) for v in row])
            labels.append(k)
    return images, labels


def interleave(images, labels):
    # Round-robin over classes so the files are not sorted by label.
    by_class = {}
    for img, lab in zip(images, labels):
        by_class.setdefault(lab, []).append(img)
    out_i, out_l = [], []
    depth = max(len(v) for v in by_class.values())
    for j in range(depth):
        for lab in sorted(by_class):
            if j < len(by_class[lab]):
                out_i.append(by_class[lab][j])
                out_l.append(lab)
    return out_i, out_l


def add(tar, name, data):
    info = tarfile.TarInfo(name)
    info.size = len(data)
    info.mtime = 0
    tar.addfile(info, io.BytesIO(data))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--digits", type=Path, required=True)
    ap.add_argument("--clothes", type=Path, required=True)
    ap.add_argument("--clothes-per-class", type=int, default=200)
    ap.add_argument("--out", type=Path, default=Path("data"))
    args = ap.parse_args()

    di, dl = interleave(*load_digits(args.digits))
    ci, cl = interleave(*load_clothes(args.clothes, args.clothes_per_class))

    files = {
        "idx/digits-images-idx3-ubyte": idx_bytes([len(di), 28, 28], [p for img in di for p in img]),
        "idx/digits-labels-idx1-ubyte": idx_bytes([len(dl)], dl),
        "idx/clothes-images-idx3-ubyte": idx_bytes([len(ci), 28, 28], [p for img in ci for p in img]),
        "idx/clothes-labels-idx1-ubyte": idx_bytes([len(cl)], cl),
    }
    args.out.mkdir(parents=True, exist_ok=True)
    with tarfile.open(args.out / "idx.tar.gz", "w:gz") as tar:
        for name, data in files.items():
            add(tar, name, data)
    print(f"digits: {len(di)}  clothes: {len(ci)}")


if __name__ == "__main__":
    main()
