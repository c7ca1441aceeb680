"""Acceptance gate: extracted feature files feed the search CLI cleanly.

One labelled criterion, printed pass/fail, covering the full round trip:
toy image folders -> extraction -> manifest -> the search CLI's validate
subcommand run as a separate process.
"""

import subprocess
import sys
from contextlib import contextmanager

from imagetree import make_image_tree
from featx.cli import main


@contextmanager
def criterion(label: str):
    try:
        yield
    except BaseException:
        print(f"FAIL {label}", flush=True)
        raise
    print(f"PASS {label}", flush=True)


def _extract(root, out_dir, stem):
    code = main(
        [
            "extract",
            "--images", str(root),
            "--out-train", str(out_dir / f"{stem}_train.featset"),
            "--out-test", str(out_dir / f"{stem}_test.featset"),
            "--weights", "random",
            "--size", "64",
        ]
    )
    assert code == 0
    return out_dir / f"{stem}_train.featset", out_dir / f"{stem}_test.featset"


def test_extractor_round_trip(tmp_path):
    with criterion(
        "extractor round-trip: toy folder features pass the search CLI's "
        "validation with the documented width"
    ):
        toy = make_image_tree(
            tmp_path / "toy", {"cup": 10, "fork": 10, "spoon": 10}, seed=7
        )
        shifted = make_image_tree(tmp_path / "shifted", {"xa": 6, "xb": 6}, seed=9)
        out = tmp_path / "features"

        toy_train, toy_test = _extract(toy, out, "toy")
        ood_train, ood_test = _extract(shifted, out, "shifted")

        # Split arithmetic: 3 classes x 10 images at 0.8 -> 24 / 6.
        assert toy_train.read_text().splitlines()[1] == "24 2048 3"
        assert toy_test.read_text().splitlines()[1] == "6 2048 3"

        manifest = out / "manifest.txt"
        code = main(
            [
                "manifest",
                "--out", str(manifest),
                "--ind", "toy",
                f"toy={toy_train},{toy_test}",
                f"shifted={ood_train},{ood_test}",
            ]
        )
        assert code == 0

        proc = subprocess.run(
            [sys.executable, "-m", "moprune.cli", "validate", str(manifest)],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.rstrip().endswith("ok")
        table = proc.stdout.splitlines()
        ind_rows = [ln for ln in table if ln.startswith("ind(")]
        assert len(ind_rows) == 2
        assert all("2048" in ln for ln in ind_rows)
