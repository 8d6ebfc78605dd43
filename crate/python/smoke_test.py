#!/usr/bin/env python3
"""Builds the crispedge_py extension and exercises every binding once.

Run from anywhere: python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_extension() -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "crispedge-py"], cwd=ROOT, check=True
    )
    lib = ROOT / "target" / "debug" / "libcrispedge_py.so"
    if not lib.exists():  # macOS
        lib = ROOT / "target" / "debug" / "libcrispedge_py.dylib"
    if not lib.exists():
        sys.exit(f"built extension not found under {ROOT / 'target' / 'debug'}")
    stage = Path(tempfile.mkdtemp(prefix="crispedge_py_"))
    shutil.copy(lib, stage / "crispedge_py.so")
    return stage


def main() -> None:
    sys.path.insert(0, str(build_extension()))
    import crispedge_py as ce

    h = w = 32
    pairs = ce.synth(3, width=w, height=h, seed=5)
    assert len(pairs) == 3
    image, truth = pairs[0]
    assert len(image) == h * w and len(truth) == h * w
    assert set(truth) <= {0, 1} and sum(truth) > 0

    # Loss values and a finite-difference check on one fusion gradient entry.
    p = [0.2 + 0.6 * t for t in truth]
    value, grad = ce.fusion_loss(h, w, p, truth, epsilon=0.0)
    assert len(grad) == h * w
    k = truth.index(1)
    step = 1e-6
    bumped = list(p)
    bumped[k] += step
    up, _ = ce.fusion_loss(h, w, bumped, truth, epsilon=0.0)
    bumped[k] -= 2 * step
    down, _ = ce.fusion_loss(h, w, bumped, truth, epsilon=0.0)
    numeric = (up - down) / (2 * step)
    assert math.isclose(grad[k], numeric, rel_tol=1e-4), (grad[k], numeric)

    dice_val, _ = ce.dice_loss(h, w, [float(t) if t else 1e-6 for t in truth], truth, epsilon=0.0)
    assert dice_val >= 1.0
    for fn in (ce.weighted_ce, ce.paper_ce, ce.standard_bce):
        v, g = fn(h, w, p, truth)
        assert math.isfinite(v) and len(g) == h * w

    # NMS keeps values in range and is idempotent.
    thin = ce.nms_thin(h, w, p)
    assert ce.nms_thin(h, w, thin) == thin

    # Matching a mask against itself is exact.
    tp, fp, fn_ = ce.match_boundaries(h, w, truth, truth, 1.0)
    assert fp == 0 and fn_ == 0 and tp == sum(truth)

    # Perfect predictions sweep to ODS = OIS = 1.
    gts = [t for _, t in pairs]
    perfect = [[float(v) for v in t] for t in gts]
    report = ce.pr_sweep(h, w, perfect, gts)
    assert report.ods_f == 1.0 and report.ois_f == 1.0
    assert len(report.points) == 99
    # Thinning may drop tie pixels at shape junctions, so post-NMS metrics
    # sit just below the perfect pre-NMS ones.
    pre_ods, post_ods, ratio = ce.crispness(h, w, perfect, gts)
    assert pre_ods == 1.0 and post_ods > 0.95 and 1.0 <= ratio < 1.1

    # A few training steps reduce the loss; prediction and round-trip I/O.
    net = ce.EdgeNet(seed=11)
    assert net.param_count() > 0
    losses = [
        net.train_step(h, w, [image], [truth], lr=1e-3, ce="bce")
        for _ in range(30)
    ]
    assert losses[-1] < losses[0], (losses[0], losses[-1])
    probs = net.predict(h, w, image)
    assert len(probs) == h * w and all(0.0 <= v <= 1.0 for v in probs)
    odd = net.predict(h - 1, w - 3, image[: (h - 1) * (w - 3)])
    assert len(odd) == (h - 1) * (w - 3)

    with tempfile.TemporaryDirectory() as tmp:
        path = str(Path(tmp) / "net.ckpt")
        net.save(path)
        again = ce.EdgeNet.load(path)
        assert again.predict(h, w, image) == probs

    print("smoke test: all bindings OK")


if __name__ == "__main__":
    main()
