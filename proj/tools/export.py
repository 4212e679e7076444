#!/usr/bin/env python3
"""Stub projector export.

Reads original (and optionally generated) images, runs deterministic stub
projectors and writes every artifact the toolkit ingests, plus a pair
manifest. Stub mode needs no weights and no network.

    export.py --images DIR [--generated DIR] --out DIR --seed S \
              [--backend seg=stub,depth=stub,det=stub,emb=stub,caption=stub]
"""

import argparse
import hashlib
import json
import struct
import sys
import warnings
from pathlib import Path

import numpy as np
from PIL import Image

BACKENDS = ("seg", "depth", "det", "emb", "caption")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
EMBED_DIM = 16
FEATURE_LAYERS = ((8, 2), (16, 4))  # (channels, pooling stride)
DETECTION_CLASSES = ("car", "truck", "person", "traffic light", "stop sign", "traffic cone")
MISMATCHES = 99


def write_actf(path, array):
    a = np.ascontiguousarray(np.asarray(array, dtype="<f4"))
    header = b"ACTF" + struct.pack("<III", 1, 0, a.ndim)
    header += struct.pack("<" + "I" * a.ndim, *a.shape)
    Path(path).write_bytes(header + a.tobytes(order="C"))


def parse_backends(spec):
    modes = {name: "stub" for name in BACKENDS}
    if spec:
        for item in spec.split(","):
            name, _, mode = item.partition("=")
            if name not in modes:
                raise SystemExit(f"unknown backend {name!r}; expected one of {', '.join(BACKENDS)}")
            if mode != "stub":
                raise SystemExit(f"backend {name}: only stub mode is available in this build")
            modes[name] = mode
    return modes


def image_seed(root, name):
    digest = hashlib.sha256(f"{root}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def luma(rgb):
    return (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255.0


def stub_segmentation(gray):
    """Blocky labels: 8x8 block means quantized onto road/building/vegetation/sky."""
    h, w = gray.shape
    classes = np.array([0, 2, 8, 10], dtype=np.uint8)
    out = np.empty((h, w), dtype=np.uint8)
    for r in range(0, h, 8):
        for c in range(0, w, 8):
            level = gray[r : r + 8, c : c + 8].mean()
            out[r : r + 8, c : c + 8] = classes[min(3, int(level * 4))]
    return out


def stub_depth(gray):
    """Depth grows toward the top of the frame and darker pixels read farther."""
    h, w = gray.shape
    rows = np.linspace(80.0, 2.0, h)[:, None]
    return rows * (1.25 - 0.5 * gray) + np.zeros((1, w))


def stub_detections(gray, rng):
    h, w = gray.shape
    boxes = []
    for _ in range(int(rng.integers(1, 4))):
        bw = float(rng.uniform(0.15, 0.4) * w)
        bh = float(rng.uniform(0.15, 0.4) * h)
        x = float(rng.uniform(0, w - bw))
        y = float(rng.uniform(0, h - bh))
        cls = DETECTION_CLASSES[int(rng.integers(len(DETECTION_CLASSES)))]
        boxes.append({"cls": cls, "score": round(float(rng.uniform(0.3, 1.0)), 4),
                      "box": [round(x, 3), round(y, 3), round(x + bw, 3), round(y + bh, 3)]})
    return boxes


def normalize_lpips_features(raw):
    """Unit L2 norm along channels at every site; zero vectors stay zero."""
    raw = np.asarray(raw, dtype=np.float64)
    norms = np.sqrt((raw * raw).sum(axis=0, keepdims=True))
    zero = norms == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero feature vector(s) left as zeros")
    return np.where(zero, 0.0, raw / np.where(zero, 1.0, norms))


def stub_features(rgb, projections):
    layers = []
    planes = np.moveaxis(rgb / 255.0, -1, 0)
    for proj, (_, stride) in zip(projections, FEATURE_LAYERS):
        c, h, w = planes.shape
        hh, ww = h // stride, w // stride
        pooled = planes[:, : hh * stride, : ww * stride].reshape(c, hh, stride, ww, stride).mean(axis=(2, 4))
        raw = np.tanh(np.einsum("oc,chw->ohw", proj, pooled - 0.5))
        layers.append(normalize_lpips_features(raw))
    return layers


def stub_embedding(rgb, projection):
    gray = luma(rgb)
    h, w = gray.shape
    pooled = gray[: h // 4 * 4, : w // 4 * 4].reshape(4, h // 4, 4, w // 4).mean(axis=(1, 3)).ravel()
    stats = np.concatenate([rgb.reshape(-1, 3).mean(axis=0) / 255.0, [gray.std()], pooled])
    return np.tanh(projection @ (stats - 0.5))


def stub_caption(gray, boxes):
    side = "left" if gray[:, : gray.shape[1] // 2].mean() > gray[:, gray.shape[1] // 2 :].mean() else "right"
    names = sorted({b["cls"] for b in boxes})
    return (f"A street scene with {', '.join(names)} and a brighter {side} side.\n"
            if names else f"A street scene with a brighter {side} side.\n")


def list_images(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_rgb(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def save_rgb(rgb, path):
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path)


def export_projections(image_dir, out_dir, seed, generated_dir=None, backends=None):
    parse_backends(backends)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    originals = list_images(image_dir)
    if not originals:
        raise SystemExit(f"no images under {image_dir}")
    generated = list_images(generated_dir) if generated_dir else originals
    if len(generated) != len(originals):
        raise SystemExit("original and generated directories hold different image counts")

    model = np.random.default_rng(seed)
    projections = []
    in_ch = 3
    for channels, _ in FEATURE_LAYERS:
        projections.append(model.normal(size=(channels, in_ch)))
    emb_proj = model.normal(size=(EMBED_DIM, 20)) / 2.0
    label_emb = model.normal(size=(8, EMBED_DIM))

    manifest = {"version": 1, "pairs": []}
    emb_src, emb_gen, failures = [], [], []
    for i, (orig_path, gen_path) in enumerate(zip(originals, generated)):
        try:
            sides = {}
            for side, path in (("src", orig_path), ("gen", gen_path)):
                rgb = load_rgb(path)
                gray = luma(rgb)
                rng = np.random.default_rng(image_seed(seed, path.name))
                image_name = f"{side}_{i}.png"
                save_rgb(rgb, out / image_name)
                seg = f"seg_{side}_{i}.png"
                Image.fromarray(stub_segmentation(gray), mode="L").save(out / seg)
                depth = f"depth_{side}_{i}.actf"
                write_actf(out / depth, stub_depth(gray))
                boxes = stub_detections(gray, rng)
                det = f"det_{side}_{i}.jsonl"
                (out / det).write_text("".join(json.dumps(b) + "\n" for b in boxes))
                feats = []
                for level, layer in enumerate(stub_features(rgb, projections)):
                    name = f"lpips_{side}_{i}_l{level}.actf"
                    write_actf(out / name, layer)
                    feats.append(name)
                emb = stub_embedding(rgb, emb_proj)
                sides[side] = dict(image=image_name, seg=seg, depth=depth, det=det, feats=feats,
                                   emb=emb, gray=gray, boxes=boxes)
            src, gen = sides["src"], sides["gen"]
            clip = f"clip_src_{i}.actf"
            write_actf(out / clip, src["emb"])
            caption = f"caption_raw_{i}.txt"
            (out / caption).write_text(stub_caption(src["gray"], src["boxes"]))
            emb_src.append(src["emb"])
            emb_gen.append(gen["emb"])
            manifest["pairs"].append({
                "id": i,
                "original": src["image"],
                "generated": gen["image"],
                "artifacts": {
                    "seg_src": src["seg"], "seg_gen": gen["seg"],
                    "depth_src": src["depth"], "depth_gen": gen["depth"],
                    "det_src": src["det"], "det_gen": gen["det"],
                    "clip_src": clip, "caption_raw": caption,
                    "lpips_src": src["feats"], "lpips_gen": gen["feats"],
                },
            })
        except (OSError, ValueError) as err:
            failures.append({"image": orig_path.name, "error": str(err)})

    if len(emb_src) >= 2:
        write_actf(out / "emb_src.actf", np.stack(emb_src))
        write_actf(out / "emb_gen.actf", np.stack(emb_gen))
        manifest["embeddings"] = {"src": "emb_src.actf", "gen": "emb_gen.actf"}
    if emb_src:
        text_rng = np.random.default_rng(seed ^ 0x5EED)
        records = np.empty((len(emb_src), 2 + MISMATCHES, EMBED_DIM))
        for r, (img, gen) in enumerate(zip(emb_src, emb_gen)):
            records[r, 0] = gen
            records[r, 1] = img + 0.1 * text_rng.normal(size=EMBED_DIM)
            records[r, 2:] = text_rng.normal(size=(MISMATCHES, EMBED_DIM))
        write_actf(out / "text_records.actf", records)
        manifest["text_records"] = "text_records.actf"
    write_actf(out / "label_embeddings.actf", label_emb)
    manifest["label_embeddings"] = "label_embeddings.actf"
    weights = [[1.0] * channels for channels, _ in FEATURE_LAYERS]
    (out / "lpips_weights.json").write_text(json.dumps({"layers": weights}) + "\n")
    manifest["lpips_weights"] = "lpips_weights.json"
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if failures:
        (out / "export_failures.json").write_text(json.dumps(failures, indent=2) + "\n")
    return manifest, failures


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", required=True, help="directory of original images")
    ap.add_argument("--generated", help="directory of generated images (defaults to --images)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--backend", default="", help="comma list of name=mode, e.g. seg=stub")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    manifest, failures = export_projections(args.images, args.out, args.seed, args.generated, args.backend)
    print(json.dumps({"pairs": len(manifest["pairs"]), "failures": len(failures)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
