import shutil
import subprocess
import sys
from pathlib import Path

import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "smoke_out"
FSI = [sys.executable, "fsi.py"]


def run(args, expect=0):
    cmd = FSI + args
    p = subprocess.run(cmd, cwd=ROOT, capture_output=True, text=True)
    if p.returncode != expect:
        raise RuntimeError(f"cmd failed ({p.returncode} != {expect}): {' '.join(cmd)}\nstdout={p.stdout}\nstderr={p.stderr}")
    return p.stdout.strip()


if OUT.exists():
    shutil.rmtree(OUT)

out = run(["mesh", "--refinement", "1", "--out", str(OUT / "mesh")])
assert "interface_edges = 4" in out, out
run(["mesh", "--refinement", "9", "--out", str(OUT / "bad")], expect=2)
run(["mesh", "--in", str(OUT / "mesh" / "mesh.txt"), "--out", str(OUT / "mesh2")])

run(["simulate", "--refinement", "1", "--dt", "0.05", "--t-end", "2", "--out", str(OUT / "sim")])
trace = pd.read_csv(OUT / "sim" / "energy.csv")
assert (trace["E_total"].diff().dropna() <= 1e-12).all()
run(["simulate", "--refinement", "1", "--dt", "0", "--out", str(OUT / "sim_bad")], expect=2)

run(["spectrum", "--refinement", "1", "--betas", "0,1,10", "--out", str(OUT / "spec")])
scan = pd.read_csv(OUT / "spec" / "scan.csv")
assert (scan["sigma_min"] > 0).all()

out = run(["check", "--refinement", "1", "--out", str(OUT / "check")])
assert "FAIL" not in out, out
out = run(["check", "--refinement", "1", "--inject-fault", "coupling-sign", "--out", str(OUT / "fault")], expect=3)
assert "FAIL dissipation_identity" in out or "FAIL adjoint_identity" in out, out

shutil.rmtree(OUT)
print("smoke_test_cli: PASS")
