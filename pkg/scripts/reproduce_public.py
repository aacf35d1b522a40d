"""Rerun the public-data audits and replays on user-supplied CSV files.

The datasets are not bundled. Prepare a directory laid out as::

    DATA/tox21.csv              id, seven e_* assay columns, d_label (SR-p53)
    DATA/matbench/*.csv         id, e_pred (formation-energy prediction), d_label (stable)
    DATA/jarvis/*.csv           id, e_pred (formation-energy prediction), d_label (E_gap > 1 eV)
    DATA/jarvis_tolerances.json {"<file stem>": calibration MAE, ...}   optional

Use ``--map`` style renames beforehand if the raw headers differ. Every check
prints one line; the exit status is 0 only when all present checks pass.

    python scripts/reproduce_public.py DATA
"""

import argparse
import contextlib
import io
import json
import statistics
import sys
from pathlib import Path

from benchcert.cli import main


def cli(*argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main([str(a) for a in argv])
    if code != 0:
        raise SystemExit(f"benchcert {' '.join(map(str, argv))} exited with {code}")
    return json.loads(buf.getvalue())["payload"]


def check(results, name, value, lo, hi):
    ok = lo <= value <= hi
    results.append(ok)
    print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.4f} (expected {lo}..{hi})")


def tox21(path, results):
    audit = cli("audit", "--candidates", path)["rows"][0]
    check(results, "tox21 mixed-fiber share", audit["amb_fraction"], 0.974, 0.984)
    check(results, "tox21 rho", audit["rho"], 0.80, 0.90)
    rep = cli("replay", "--candidates", path, "--splits", 100, "--frac", 0.5, "--min-support", 50)
    s = rep["summary"]
    check(results, "tox21 false rate before", s["false_rate_before"]["mean"], 0.0100, 0.0137)
    check(results, "tox21 false rate after", s["false_rate_after"]["mean"], 0.0, 0.0018)


def quantile_median(files, label, results):
    fractions = [cli("audit", "--candidates", f, "--rule", "quantile", "--bins", 20)["rows"][0]["cert_fraction"]
                 for f in files]
    check(results, f"{label} median certifiable fraction at 20 quantiles", statistics.median(fractions), 0.0, 0.0)


def jarvis_replay(files, tolerances, results):
    before, after = [], []
    for f in files:
        if f.stem not in tolerances:
            print(f"skip replay for {f.name}: no tolerance in jarvis_tolerances.json")
            continue
        s = cli("replay", "--candidates", f, "--rule", "window", "--tol", tolerances[f.stem],
                "--splits", 50, "--frac", 0.5, "--min-support", 1)["summary"]
        before.append(s["false_rate_before"]["mean"])
        after.append(s["false_rate_after"]["mean"])
    if before:
        check(results, "jarvis false rate before", statistics.mean(before), 0.192, 0.216)
        check(results, "jarvis false rate after", statistics.mean(after), 0.0, 0.0029)


def run(data: Path) -> int:
    results: list[bool] = []
    if (data / "tox21.csv").is_file():
        tox21(data / "tox21.csv", results)
    for name in ("matbench", "jarvis"):
        files = sorted((data / name).glob("*.csv"))
        if files:
            quantile_median(files, name, results)
    tol_file = data / "jarvis_tolerances.json"
    if tol_file.is_file():
        jarvis_replay(sorted((data / "jarvis").glob("*.csv")), json.loads(tol_file.read_text()), results)
    if not results:
        print("no datasets found")
        return 2
    print(f"{sum(results)}/{len(results)} public-data checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("data", type=Path)
    sys.exit(run(parser.parse_args().data))
