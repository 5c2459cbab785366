import subprocess
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"


@pytest.mark.parametrize(
    "name, extra, output",
    [
        ("contraction_curves", ["--points", "64"], "contraction_curves.csv"),
        ("bias_regimes", [], "bias_regimes.csv"),
        ("overdamped_limit", [], "overdamped_limit.csv"),
        ("gaussian_sandwich", ["--n", "20"], "gaussian_sandwich.csv"),
    ],
)
def test_script_runs_and_writes_csv(name, extra, output, tmp_path):
    res = subprocess.run(
        [sys.executable, str(SCRIPTS / f"{name}.py"), "--out-dir", str(tmp_path), *extra],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert res.returncode == 0, res.stderr
    lines = (tmp_path / output).read_text().splitlines()
    assert len(lines) > 2
