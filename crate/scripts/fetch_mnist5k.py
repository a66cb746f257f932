#!/usr/bin/env python3
"""Write the 5000-image MNIST subset bundled with mlxtend as IDX files.

Usage: python3 scripts/fetch_mnist5k.py [OUT_DIR]

Downloads the mlxtend wheel with pip (no install), reads
mlxtend/data/data/mnist_5k.csv.gz and emits
  OUT_DIR/images-idx3-ubyte   (magic 0x00000803, 5000 x 28 x 28)
  OUT_DIR/labels-idx1-ubyte   (magic 0x00000801, 5000)
in the original row order.
"""
import glob
import gzip
import os
import struct
import subprocess
import sys
import tempfile
import zipfile

out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist5k")
os.makedirs(out, exist_ok=True)

with tempfile.TemporaryDirectory() as tmp:
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, "mlxtend==0.24.0"]
    )
    wheel = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")

rows = [line.split(",") for line in gzip.decompress(raw).decode().splitlines() if line]
images = bytearray()
labels = bytearray()
for row in rows:
    assert len(row) == 785
    images.extend(int(float(v)) for v in row[:784])
    labels.append(int(float(row[784])))

with open(os.path.join(out, "images-idx3-ubyte"), "wb") as f:
    f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
    f.write(images)
with open(os.path.join(out, "labels-idx1-ubyte"), "wb") as f:
    f.write(struct.pack(">II", 0x00000801, len(rows)))
    f.write(labels)
print(f"wrote {len(rows)} images to {out}")
