"""Builds the extension module and exercises it end to end.

    python3 python/smoke_test.py
"""

import os
import random
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build(dest):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "qac-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = os.path.join(ROOT, "target", "release", "libsubword_qac.so")
    if not os.path.exists(lib):
        lib = os.path.join(ROOT, "target", "release", "libsubword_qac.dylib")
    shutil.copy(lib, os.path.join(dest, "subword_qac.so"))
    sys.path.insert(0, dest)


def toy_log(path, n=2000, seed=0):
    rng = random.Random(seed)
    words = ["rest", "restaurant", "rent", "red", "read", "apple", "apply", "band", "banana", "cat"]
    with open(path, "w") as f:
        for i in range(n):
            q = " ".join(rng.choice(words) for _ in range(rng.randint(1, 3)))
            f.write(f"u{i % 31}\t{q}\t{i}\n")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        build(tmp)
        import subword_qac as qac

        raw = os.path.join(tmp, "raw.tsv")
        toy_log(raw)
        counts = qac.ingest(raw, os.path.join(tmp, "corpus"))
        print("ingest", counts)
        for kind in ["char", "bpe", "unigram"]:
            models = os.path.join(tmp, "models-" + kind)
            run = qac.train(os.path.join(tmp, "corpus"), models, seed=1, kind=kind, vocab_size=48, order=4)
            assert run["segmenter"] == kind
            model = qac.Model(models, retrace="inf", marginalize=True)
            rows = model.complete("res", n=5)
            assert rows and all(r["query"].startswith("res") for r in rows), rows
            assert rows == model.complete("res", n=5)
            mpc = model.complete("res", n=5, model="mpc")
            print(kind, [r["query"] for r in rows], "| mpc:", [r["query"] for r in mpc])
        try:
            model.complete("", n=5)
        except ValueError as e:
            print("empty prefix rejected:", e)
        else:
            raise AssertionError("empty prefix accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
