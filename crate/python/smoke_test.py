#!/usr/bin/env python3
"""Smoke test for the rbdg_py extension module.

Builds are produced by `cargo build -p rbdg-py --release`; this script
locates the compiled cdylib, imports it, and runs a small end-to-end check:
graph synthesis, diffusion, the inverse-filter solver on a perturbed graph,
and a handful of kernel identities.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np


def locate_module() -> Path:
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "librbdg_py.so",
        root / "target" / "debug" / "librbdg_py.so",
        root / "target" / "release" / "rbdg_py.dll",
        root / "target" / "debug" / "rbdg_py.dll",
        root / "target" / "release" / "librbdg_py.dylib",
        root / "target" / "debug" / "librbdg_py.dylib",
    ]
    for cand in candidates:
        if cand.exists():
            return cand
    sys.exit("rbdg_py cdylib not found; run `cargo build -p rbdg-py --release` first")


def import_module():
    lib = locate_module()
    staging = Path(tempfile.mkdtemp(prefix="rbdg_py_"))
    suffix = ".pyd" if lib.suffix == ".dll" else ".so"
    shutil.copy2(lib, staging / f"rbdg_py{suffix}")
    sys.path.insert(0, str(staging))
    import rbdg_py

    return rbdg_py


def check(name: str, condition: bool) -> None:
    print(f"{'PASS' if condition else 'FAIL'}  {name}")
    if not condition:
        sys.exit(1)


def main() -> None:
    m = import_module()

    s = m.generate_small_world(20, 4, 0.2, seed=7)
    check("small-world adjacency is 20x20", s.shape == (20, 20))
    check("adjacency is symmetric and hollow",
          np.array_equal(s, s.T) and not s.diagonal().any())
    check("edge count preserved", int(s.sum()) == 2 * 40)

    s_bar = m.perturb_rewire(s, 0.1, seed=11)
    flipped = int(np.abs(s_bar - s).sum())
    check("rewiring flips 8 upper-triangle entries", flipped == 16)
    check("rewiring preserves edge count", int(s_bar.sum()) == int(s.sum()))

    filt = m.synthesize_filter(s, 3, seed=13, cond_limit=30.0)
    h = filt.forward
    g = filt.inverse
    check("filter commutes with the shift operator",
          np.linalg.norm(h @ s - s @ h) <= 1e-10 * np.linalg.norm(h) * np.linalg.norm(s))
    check("inverse has unit trace", math.isclose(np.trace(g), 1.0, abs_tol=1e-10))
    eye_scaled = np.eye(20) / filt.trace_scale
    check("forward times inverse is identity over the trace scale",
          np.linalg.norm(h @ g - eye_scaled) <= 1e-8 * np.linalg.norm(h))

    x = m.generate_sources(20, 50, 2, seed=17)
    check("sources have exactly 2 nonzeros per column",
          all(int((x[:, c] != 0).sum()) == 2 for c in range(50)))

    y = m.diffuse(filt, x, noise_power=0.0, seed=0)
    g_ref, x_ref = m.normalize_ground_truth(filt, x)
    check("noiseless inversion identity",
          np.linalg.norm(g_ref @ y - x_ref) <= 1e-9 * np.linalg.norm(x_ref))

    check("double_l1_prox reduces to anchor shrinkage",
          m.double_l1_prox(2.0, 0.0, 0.5, 1.0) == 1.5)

    hp = m.Hyperparams(0.15, 0.0675, 2.25e5, 0.6, outer_iters=80,
                       reweight=True, reweight_rounds=30, reweight_warmup=5)
    out = m.rbdg_run(y, s_bar, hp)
    check("solver returns a unit-trace filter estimate",
          math.isclose(np.trace(out.g_hat), 1.0, abs_tol=1e-10))
    trace = out.objective_trace
    check("objective trace is populated", len(trace) > 0)
    err_g = m.normalized_error(g_ref, out.g_hat)
    err_s = m.normalized_error(s, out.s_hat)
    raw_err_s = m.normalized_error(s, s_bar)
    print(f"      err_G={err_g:.3e} err_S={err_s:.3e} (raw {raw_err_s:.3e})")
    check("solver output is finite", np.isfinite(out.g_hat).all()
          and np.isfinite(out.x_hat).all() and np.isfinite(out.s_hat).all())
    check("denoised graph beats the raw observation", err_s < raw_err_s)

    print("smoke test passed")


if __name__ == "__main__":
    main()
