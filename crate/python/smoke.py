"""Smoke test for the Python bindings.

Build first:
    cargo build --release -p shearflame-py --features extension-module
then run:
    python3 python/smoke.py [path/to/libshearflame_py.so]
"""

import importlib.util
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load(lib: Path):
    tmp = Path(tempfile.mkdtemp())
    target = tmp / "shearflame_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("shearflame_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main() -> int:
    lib = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "target" / "release" / "libshearflame_py.so"
    sf = load(lib)

    assert sf.driven_force([0.0, 0.0, -1.0]) == 2.0

    est = json.loads(sf.effective([0.3, 0.0, 1.0], 0.2, 0.0, grid_n=16))
    assert abs(est["value"] - math.hypot(0.3, 1.0)) < 1e-9, est["value"]

    est = json.loads(sf.effective([0.0, 0.0, 1.0], 0.2, 0.8, profile="constant:-0.5", grid_n=16))
    assert abs(est["value"] - 0.6) < 1e-9, est["value"]

    a1, lo, hi = sf.find_a1(0.2, grid_n=16, tol_a=1e-2)
    assert lo < a1 < hi and hi - lo <= 1e-2, (a1, lo, hi)

    try:
        sf.effective([1.0, 0.0, 0.0], 0.2, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("a horizontal direction must be rejected")

    print(f"ok: A1 = {a1:.4f} in [{lo:.4f}, {hi:.4f}]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
