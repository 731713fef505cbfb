#!/usr/bin/env python3
"""Fetch the UCI mushroom and adult (census income) tables and write them as
CSV files plus schema sidecars under data/.

The UCI archive is tried first. When it is unreachable the same files are
pulled from package registries that redistribute them verbatim:
  mushroom: the xgboost-sys crate (xgboost/demo/binary_classification)
  adult:    the `responsibly` wheel on PyPI (responsibly/dataset/adult)
"""
import argparse
import csv
import io
import os
import subprocess
import sys
import tarfile
import tempfile
import urllib.request
import zipfile

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
CRATE = "https://static.crates.io/crates/xgboost-sys/xgboost-sys-0.1.2.crate"
CRATE_MEMBER = "xgboost-sys-0.1.2/xgboost/demo/binary_classification/agaricus-lepiota.data"

MUSHROOM_COLUMNS = [
    ("cap-shape", "b,c,x,f,k,s"),
    ("cap-surface", "f,g,y,s"),
    ("cap-color", "n,b,c,g,r,p,u,e,w,y"),
    ("bruises", "t,f"),
    ("odor", "a,l,c,y,f,m,n,p,s"),
    ("gill-attachment", "a,d,f,n"),
    ("gill-spacing", "c,w,d"),
    ("gill-size", "b,n"),
    ("gill-color", "k,n,b,h,g,r,o,p,u,e,w,y"),
    ("stalk-shape", "e,t"),
    ("stalk-root", "b,c,u,e,z,r,?"),
    ("stalk-surface-above-ring", "f,y,k,s"),
    ("stalk-surface-below-ring", "f,y,k,s"),
    ("stalk-color-above-ring", "n,b,c,g,o,p,e,w,y"),
    ("stalk-color-below-ring", "n,b,c,g,o,p,e,w,y"),
    ("veil-type", "p,u"),
    ("veil-color", "n,o,w,y"),
    ("ring-number", "n,o,t"),
    ("ring-type", "c,e,f,l,n,p,s,z"),
    ("spore-print-color", "k,n,b,h,r,o,u,w,y"),
    ("population", "a,c,n,s,v,y"),
    ("habitat", "g,l,m,p,u,w,d"),
]

ADULT_FIELDS = ["age", "workclass", "fnlwgt", "education", "education-num",
                "marital-status", "occupation", "relationship", "race", "sex",
                "capital-gain", "capital-loss", "hours-per-week",
                "native-country", "income"]
# education is dropped: it is a one-to-one relabeling of education-num.
ADULT_CONTINUOUS = ["age", "fnlwgt", "education-num", "capital-gain",
                    "capital-loss", "hours-per-week"]
# Values listed in adult.names that vanish once rows with "?" are dropped.
DECLARED = {"workclass": ["Never-worked"]}
ADULT_CATEGORICAL = ["workclass", "marital-status", "occupation",
                     "relationship", "race", "sex", "native-country"]


def fetch(url, timeout=30):
    with urllib.request.urlopen(url, timeout=timeout) as r:
        return r.read()


def mushroom_rows():
    try:
        text = fetch(f"{UCI}/mushroom/agaricus-lepiota.data").decode()
    except Exception:
        blob = fetch(CRATE, timeout=120)
        with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
            text = tar.extractfile(CRATE_MEMBER).read().decode()
    return [line.split(",") for line in text.splitlines() if line.strip()]


def adult_texts():
    try:
        return [fetch(f"{UCI}/adult/adult.data").decode(),
                fetch(f"{UCI}/adult/adult.test").decode()]
    except Exception:
        with tempfile.TemporaryDirectory() as tmp:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                            "--quiet", "-d", tmp, "responsibly==0.1.2"], check=True)
            wheel = next(os.path.join(tmp, n) for n in os.listdir(tmp) if n.endswith(".whl"))
            z = zipfile.ZipFile(wheel)
            return [z.read("responsibly/dataset/adult/adult.data").decode(),
                    z.read("responsibly/dataset/adult/adult.test").decode()]


def write_mushroom(out):
    rows = mushroom_rows()
    with open(os.path.join(out, "mushroom.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class"] + [c for c, _ in MUSHROOM_COLUMNS])
        w.writerows(rows)
    with open(os.path.join(out, "mushroom.schema"), "w") as f:
        f.write("# UCI mushroom: edible vs poisonous, 22 categorical columns\n")
        f.write("class label positive=p negative=e\n")
        for name, values in MUSHROOM_COLUMNS:
            f.write(f"{name} categorical {values}\n")
    print(f"mushroom: {len(rows)} rows")


def write_census(out):
    rows = []
    for text in adult_texts():
        for line in text.splitlines():
            if not line.strip() or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(ADULT_FIELDS) or "?" in cells:
                continue
            cells[-1] = cells[-1].rstrip(".")
            rows.append(dict(zip(ADULT_FIELDS, cells)))
    keep = [c for c in ADULT_FIELDS if c in ADULT_CONTINUOUS or c in ADULT_CATEGORICAL]
    with open(os.path.join(out, "census.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(keep + ["income"])
        for r in rows:
            w.writerow([r[c] for c in keep] + [r["income"]])
    with open(os.path.join(out, "census.schema"), "w") as f:
        f.write("# UCI adult (census income), rows with missing values removed\n")
        for c in keep:
            if c in ADULT_CONTINUOUS:
                f.write(f"{c} continuous\n")
            else:
                values = sorted({r[c] for r in rows} | set(DECLARED.get(c, [])))
                f.write(f"{c} categorical {','.join(values)}\n")
        f.write("income label positive=>50K negative=<=50K\n")
    print(f"census: {len(rows)} rows")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = p.parse_args()
    os.makedirs(args.out, exist_ok=True)
    write_mushroom(args.out)
    write_census(args.out)


if __name__ == "__main__":
    main()
