#!/usr/bin/env python3
"""Download the benchmark datasets into data/ as plain numeric CSV.

Datasets are not shipped with the repository. This script pulls them from
PyPI packages that redistribute the public copies:

  boston.csv    506 x (13 inputs + medv), from pydataset (MASS::Boston)
  concrete.csv  1030 x (8 inputs + compressive_strength), from rdatasets

The CATS series has no PyPI mirror. Place it by hand as data/cats.csv
(5000 rows, single column, blanks or NaN for the missing blocks) and the
100 hidden values as data/cats_truth.csv.
"""

import argparse
import csv
import io
import lzma
import pathlib
import pickle
import subprocess
import sys
import tarfile
import tempfile
import zipfile


def pip_download(package: str, dest: pathlib.Path, binary: bool) -> pathlib.Path:
    cmd = [sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "120", "--retries", "5",
           "-d", str(dest), package]
    cmd += ["--only-binary=:all:"] if binary else ["--no-binary=:all:"]
    subprocess.run(cmd, check=True)
    return next(p for p in dest.iterdir() if p.name.lower().startswith(package.split("=")[0].lower()))


def write_rows(path: pathlib.Path, header, rows) -> None:
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def fetch_boston(tmp: pathlib.Path, out: pathlib.Path) -> None:
    archive = pip_download("pydataset==0.2.0", tmp, binary=False)
    # The sdist nests the data in a second archive.
    with tarfile.open(archive) as tar:
        member = next(m for m in tar.getmembers() if m.name.endswith("pydataset/resources.tar.gz"))
        inner = tar.extractfile(member).read()
    with tarfile.open(fileobj=io.BytesIO(inner)) as tar:
        member = next(m for m in tar.getmembers() if m.name.endswith("rdata/csv/MASS/Boston.csv"))
        text = tar.extractfile(member).read().decode()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0][1:], [r[1:] for r in rows[1:] if r]
    write_rows(out / "boston.csv", header, body)


def fetch_concrete(tmp: pathlib.Path, out: pathlib.Path) -> None:
    wheel = pip_download("rdatasets==0.2.10", tmp, binary=True)
    with zipfile.ZipFile(wheel) as z:
        blob = z.read("rdatasets/_data/modeldata/concrete.pkl.compress")
    frame = pickle.loads(lzma.decompress(blob))
    header = [c for c in frame.columns if c != "rownames"]
    body = [[repr(float(v)) if isinstance(v, float) else str(v) for v in row]
            for row in frame[header].itertuples(index=False)]
    write_rows(out / "concrete.csv", header, body)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    parser.add_argument("which", nargs="*", help="boston and/or concrete (default: both)")
    args = parser.parse_args()

    which = args.which or ["boston", "concrete"]
    unknown = set(which) - {"boston", "concrete"}
    if unknown:
        parser.error(f"unknown dataset(s): {', '.join(sorted(unknown))}")
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as t:
        tmp = pathlib.Path(t)
        if "boston" in which:
            fetch_boston(tmp, out)
        if "concrete" in which:
            fetch_concrete(tmp, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
