"""Drive the ``blochmass`` command line from Python.

Equivalent shell commands:

    blochmass presets
    blochmass bands --s 7 --points 5 --out -
    blochmass run rb-s7 --engines firstorder,baseline --out demo_out
    blochmass compare demo_out/rb-s7_firstorder.csv demo_out/rb-s7_baseline.csv --resample
"""
import tempfile
from pathlib import Path

from blochmass.cli import main

main(["presets"])
main(["bands", "--s", "7", "--points", "5", "--out", "-"])

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)
    main(["run", "rb-s7", "--engines", "firstorder,baseline", "--out", str(out)])
    print("\nfiles:", ", ".join(sorted(p.name for p in out.iterdir())))
    print((out / "rb-s7_summary.txt").read_text())
    main(["compare", str(out / "rb-s7_firstorder.csv"), str(out / "rb-s7_baseline.csv"), "--resample"])
