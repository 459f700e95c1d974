"""Batch pipeline: author a script in memory, then replay it through the CLI.

Builds the crawl-style fixture (feet pinned by corner contact anchors, CoM
nudged per keyframe), writes model/environment/script JSON, and runs the
``solve``, ``report`` and ``compile`` subcommands end to end.
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from fixtures_build import build_crawl_fixture  # noqa: E402

from poseworks.cli import main  # noqa: E402

with tempfile.TemporaryDirectory() as d:
    d = Path(d)
    model, env, script, _ = build_crawl_fixture(d)
    out = d / "out"

    code = main(["solve", "--model", str(model), "--env", str(env), "--script", str(script), "--out", str(out)])
    print("poseworks solve ->", code)
    diag = json.loads((out / "solve_diagnostics.json").read_text())
    for kf in diag["keyframes"]:
        print(f"  keyframe {kf['keyframe']}: {kf['status']:10s} {kf['iterations']:3d} iterations, "
              f"deviation {kf['deviation_from_stored']:.2e}")

    code = main(["report", "--model", str(model), "--env", str(env), "--script", str(script), "--out", str(out)])
    print("poseworks report ->", code)
    print("  " + (out / "margins.csv").read_text().replace("\n", "\n  ").rstrip())

    code = main([
        "compile", "--model", str(model), "--env", str(env),
        "--script", str(out / "solved_script.json"), "--out", str(out),
    ])
    print("poseworks compile ->", code)
    validation = json.loads((out / "validation.json").read_text())
    print(f"  duration {validation['duration_s']} s, clean={validation['clean']}")
    print("  wrote:", sorted(p.name for p in out.iterdir()))
