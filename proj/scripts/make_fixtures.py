#!/usr/bin/env python3
"""Regenerate the committed test fixtures under tests/fixtures/.

Trains a tiny conv-pool-dense classifier on a procedurally generated
10-class shapes dataset (64x64 RGB), exports it as an SRW1 weight
container, and writes labeled test images, per-image object saliency maps
and reference logits.

    python3 scripts/make_fixtures.py --out tests/fixtures --seed 7
"""

import argparse
import csv
import json
import os
import struct
import sys

import numpy as np
import torch
from PIL import Image
from scipy.ndimage import gaussian_filter

SIDE = 64
NUM_CLASSES = 10
CLASS_NAMES = [
    "disk", "square", "triangle", "plus", "ring",
    "hbars", "vbars", "diamond", "cross", "ell",
]

LAYER_CONV, LAYER_DENSE, LAYER_RELU, LAYER_MAXPOOL, LAYER_AVGPOOL, LAYER_FLATTEN = 1, 2, 3, 4, 5, 6


def shape_mask(kind, rng):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float32)
    cy, cx = rng.uniform(20, 44, size=2)
    r = rng.uniform(10, 15)
    dy, dx = yy - cy, xx - cx
    ady, adx = np.abs(dy), np.abs(dx)
    t = max(2.5, r * 0.3)
    if kind == 0:
        m = dy**2 + dx**2 <= r**2
    elif kind == 1:
        m = (ady <= r * 0.85) & (adx <= r * 0.85)
    elif kind == 2:
        m = (dy <= r * 0.8) & (dy >= -r) & (adx <= (dy + r) * 0.6)
    elif kind == 3:
        m = ((ady <= t) & (adx <= r)) | ((adx <= t) & (ady <= r))
    elif kind == 4:
        d = np.sqrt(dy**2 + dx**2)
        m = (d <= r) & (d >= r * 0.55)
    elif kind == 5:
        m = (ady <= r) & (adx <= r) & ((np.floor((dy + r) / 4) % 2) == 0)
    elif kind == 6:
        m = (ady <= r) & (adx <= r) & ((np.floor((dx + r) / 4) % 2) == 0)
    elif kind == 7:
        m = ady + adx <= r
    elif kind == 8:
        m = ((np.abs(dy - dx) <= t) | (np.abs(dy + dx) <= t)) & (ady <= r * 0.8) & (adx <= r * 0.8)
    else:
        m = ((adx <= t) & (ady <= r)) | ((dy >= r - 2 * t) & (dy <= r) & (dx >= -t) & (dx <= r))
    return m.astype(np.float32)


def render(kind, rng):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float32) / SIDE
    base = rng.uniform(0.25, 0.75, size=3).astype(np.float32)
    grad = rng.uniform(-0.12, 0.12, size=(2, 3)).astype(np.float32)
    bg = base[None, None, :] + yy[..., None] * grad[0] + xx[..., None] * grad[1]
    bg += rng.normal(0, 0.015, size=bg.shape).astype(np.float32)

    m = shape_mask(kind, rng)
    contrast = rng.uniform(0.18, 0.35) * rng.choice([-1.0, 1.0], size=3)
    fg = np.clip(base + contrast, 0.05, 0.95).astype(np.float32)
    tex = rng.normal(0, 0.04, size=bg.shape).astype(np.float32)
    obj = fg[None, None, :] + tex
    img = bg * (1 - m[..., None]) + obj * m[..., None]
    return np.clip(img, 0, 1), m


def make_set(n, rng):
    xs = np.zeros((n, SIDE, SIDE, 3), np.float32)
    ms = np.zeros((n, SIDE, SIDE), np.float32)
    ys = np.zeros(n, np.int64)
    for i in range(n):
        k = i % NUM_CLASSES
        xs[i], ms[i] = render(k, rng)
        ys[i] = k
    return xs, ms, ys


def quantize(x):
    return np.round(np.clip(x, 0, 1) * 255).astype(np.uint8)


def build_model():
    return torch.nn.Sequential(
        torch.nn.AvgPool2d(2),
        torch.nn.Conv2d(3, 8, 3, padding=1),
        torch.nn.ReLU(),
        torch.nn.MaxPool2d(2),
        torch.nn.Conv2d(8, 16, 3, padding=1),
        torch.nn.ReLU(),
        torch.nn.MaxPool2d(2),
        torch.nn.Flatten(),
        torch.nn.Linear(16 * 8 * 8, 32),
        torch.nn.ReLU(),
        torch.nn.Linear(32, NUM_CLASSES),
    )


def export_srw1(model, path):
    def u32(*vals):
        return b"".join(struct.pack("<I", v) for v in vals)

    def f32(t):
        return t.detach().cpu().numpy().astype("<f4").tobytes()

    layers = []
    for mod in model:
        if isinstance(mod, torch.nn.Conv2d):
            layers.append(u32(LAYER_CONV, mod.in_channels, mod.out_channels,
                              mod.kernel_size[0], mod.padding[0]) + f32(mod.weight) + f32(mod.bias))
        elif isinstance(mod, torch.nn.Linear):
            layers.append(u32(LAYER_DENSE, mod.in_features, mod.out_features) + f32(mod.weight) + f32(mod.bias))
        elif isinstance(mod, torch.nn.ReLU):
            layers.append(u32(LAYER_RELU))
        elif isinstance(mod, torch.nn.MaxPool2d):
            layers.append(u32(LAYER_MAXPOOL, mod.kernel_size))
        elif isinstance(mod, torch.nn.AvgPool2d):
            layers.append(u32(LAYER_AVGPOOL, mod.kernel_size))
        elif isinstance(mod, torch.nn.Flatten):
            layers.append(u32(LAYER_FLATTEN))
        else:
            raise RuntimeError(f"unsupported layer {mod}")
    with open(path, "wb") as f:
        f.write(b"SRW1" + u32(1, SIDE, SIDE, 3, NUM_CLASSES, len(layers)))
        for blob in layers:
            f.write(blob)


def to_tensor(x):
    return torch.from_numpy(np.ascontiguousarray(x.transpose(0, 3, 1, 2)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/fixtures")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--test", type=int, default=120)
    ap.add_argument("--epochs", type=int, default=12)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    torch.manual_seed(args.seed)
    torch.set_num_threads(1)

    xtr, _, ytr = make_set(args.train, rng)
    xtr = quantize(xtr).astype(np.float32) / 255.0
    model = build_model()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    xt, yt = to_tensor(xtr), torch.from_numpy(ytr)
    for epoch in range(args.epochs):
        perm = torch.randperm(len(xt))
        total = 0.0
        for i in range(0, len(xt), 64):
            idx = perm[i:i + 64]
            opt.zero_grad()
            loss = torch.nn.functional.cross_entropy(model(xt[idx]), yt[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        with torch.no_grad():
            acc = (model(xt).argmax(1) == yt).float().mean().item()
        print(f"epoch {epoch}: loss {total / len(xt):.4f} train acc {acc:.3f}", file=sys.stderr)
    if acc < 0.9:
        sys.exit(f"training did not converge (train acc {acc:.3f})")

    # Held-out pool; keep the first `test` images the model classifies correctly.
    xpool, mpool, ypool = make_set(args.test * 3, rng)
    qpool = quantize(xpool)
    model.eval()
    with torch.no_grad():
        logits = model(to_tensor(qpool.astype(np.float32) / 255.0))
    correct = (logits.argmax(1).numpy() == ypool)
    print(f"held-out acc {correct.mean():.3f}", file=sys.stderr)
    keep = np.flatnonzero(correct)[:args.test]

    os.makedirs(os.path.join(args.out, "images"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "saliency"), exist_ok=True)
    export_srw1(model, os.path.join(args.out, "model.srw"))

    refs = []
    with open(os.path.join(args.out, "labels.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for n, i in enumerate(keep):
            name = f"img_{n:03d}.png"
            Image.fromarray(qpool[i], "RGB").save(os.path.join(args.out, "images", name))
            sal = gaussian_filter(mpool[i], sigma=1.5)
            sal = sal / max(sal.max(), 1e-6)
            Image.fromarray(quantize(sal), "L").save(os.path.join(args.out, "saliency", name))
            w.writerow([name, int(ypool[i])])
            if n < 10:
                refs.append({"image": name, "logits": [float(v) for v in logits[i].numpy()]})
    with open(os.path.join(args.out, "reference_logits.json"), "w") as f:
        json.dump({"model": "model.srw", "references": refs}, f, indent=1)


if __name__ == "__main__":
    main()
