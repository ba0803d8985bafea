#!/usr/bin/env python3
"""Regenerate the golden still render pinned by the acceptance suite.

Builds the deterministic demo scene in a temporary directory, runs the
`render` command on it, and copies the float render into tests/golden/.
"""

import shutil
import sys
import tempfile
from pathlib import Path

from relight3d import cli, synthetic


def main():
    golden_dir = Path(__file__).resolve().parent.parent / "tests" / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        config = synthetic.write_demo_scene(tmp)
        code = cli.main(["render", "--config", str(config), "--out", str(tmp / "out")])
        if code != 0:
            print(f"render failed with exit code {code}", file=sys.stderr)
            return code
        for name in ("render.pfm", "render.png"):
            shutil.copy(tmp / "out" / name, golden_dir / name)
            print(f"wrote {golden_dir / name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
