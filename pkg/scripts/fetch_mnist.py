#!/usr/bin/env python3
"""Download the MNIST IDX files into a local data directory.

The files are taken from the ``mnist-data`` npm tarball, which carries the
four original IDX files uncompressed; they are re-written gzip-compressed.
Nothing in the package or test suite calls this script.

    python scripts/fetch_mnist.py [--out data/mnist]
"""
import argparse
import gzip
import io
import os
import tarfile
import urllib.request
from pathlib import Path

TARBALL = "https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz"
NAMES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def main():
    default = Path(os.environ.get("HDCOS_DATA_DIR", Path(__file__).resolve().parents[1] / "data")) / "mnist"
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=default)
    parser.add_argument("--url", default=TARBALL)
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    print(f"fetching {args.url}")
    with urllib.request.urlopen(args.url, timeout=120) as resp:
        blob = resp.read()
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        for name in NAMES:
            member = tar.getmember(f"package/data/{name}")
            raw = tar.extractfile(member).read()
            dest = args.out / f"{name}.gz"
            with gzip.open(dest, "wb") as fh:
                fh.write(raw)
            print(f"wrote {dest} ({len(raw)} bytes uncompressed)")


if __name__ == "__main__":
    main()
