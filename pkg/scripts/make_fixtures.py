#!/usr/bin/env python3
"""Build the desk-scale fixture models and save them as fsplat files.

Usage: python scripts/make_fixtures.py out_dir [--quick]

--quick skips the foveation-level derivation (the slow stage) and emits only
the dense fit and the pruned level-1 model.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from fovsplat import fixtures, save_model


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    print("fitting the dense textured plane ...", flush=True)
    fix = fixtures.build_plane_fixture()
    save_model(fix.dense, out / "plane_dense.fsplat")
    print(f"  dense PSNR {fix.dense_psnr:.2f} dB ({time.time()-t0:.0f}s)")

    print("pruning to the level-1 model ...", flush=True)
    l1 = fixtures.build_l1_model(fix)
    save_model(l1.model, out / "plane_l1.fsplat")
    report = {"dense_psnr": fix.dense_psnr, "l1_points": l1.model.n_points,
              "rounds": [r.to_dict() for r in l1.rounds]}

    if not args.quick:
        print("deriving foveation levels 2..4 (takes several minutes) ...", flush=True)
        fr = fixtures.build_fr_model(fix, l1.model)
        save_model(fr.model, out / "plane_fr.fsplat")
        report["fr_levels"] = [r.to_dict() for r in fr.reports]
        report["level_sizes"] = fr.model.level_sizes
    (out / "fixtures.json").write_text(json.dumps(report, indent=1))
    print(f"done in {time.time()-t0:.0f}s -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
