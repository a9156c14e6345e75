"""Writes the UCI digit and letter datasets as label-last CSV train/test files.

Input: the raw `.dat` files shipped in the `keel-ds` package
(`pip download keel-ds==0.2.5 --no-deps`, unzip, then pass the directory
`keel_ds/data/balanced/raw`).
"""
import pathlib
import sys

# name in the package -> (output name, training rows)
SPLITS = {
    "optdigits": ("optdigits", 3823),
    "penbased": ("pendigits", 7494),
    "letter": ("letter", 16000),
}


def rows(path):
    for line in path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("@"):
            yield ",".join(field.strip() for field in line.split(","))


def main(raw_dir, out_dir):
    raw_dir, out_dir = pathlib.Path(raw_dir), pathlib.Path(out_dir)
    for source, (name, n_train) in SPLITS.items():
        data = list(rows(raw_dir / f"{source}.dat"))
        (out_dir / f"{name}_train.csv").write_text("\n".join(data[:n_train]) + "\n")
        (out_dir / f"{name}_test.csv").write_text("\n".join(data[n_train:]) + "\n")
        print(f"{name}: {n_train} train, {len(data) - n_train} test")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else pathlib.Path(__file__).parent)
