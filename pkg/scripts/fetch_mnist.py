#!/usr/bin/env python3
"""Download the MNIST IDX files into data/mnist/ (or a given directory).

Tries the mirrors in order and gunzips in place. The trained experiments and
the digits acceptance test look for the four uncompressed files there.
"""

import argparse
import gzip
import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]

FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]


def fetch(name, dest):
    target = dest / name
    if target.exists():
        print(f"{name}: already present")
        return True
    for mirror in MIRRORS:
        url = f"{mirror}{name}.gz"
        try:
            print(f"{name}: downloading from {url}")
            with urllib.request.urlopen(url, timeout=60) as response:
                payload = gzip.decompress(response.read())
            target.write_bytes(payload)
            return True
        except Exception as exc:  # noqa: BLE001 - report and try the next mirror
            print(f"  failed: {exc}")
    return False


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--dest", default=str(Path(__file__).resolve().parent.parent / "data" / "mnist")
    )
    args = parser.parse_args()
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    ok = all(fetch(name, dest) for name in FILES)
    if not ok:
        print("some files could not be downloaded", file=sys.stderr)
        return 1
    print(f"MNIST ready under {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
