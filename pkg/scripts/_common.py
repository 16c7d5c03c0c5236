import argparse
import csv
from pathlib import Path


def parser(description: str, replications: int = 20_000) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--replications", type=int, default=replications)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", type=Path, default=Path("results"))
    return ap


def parse(ap: argparse.ArgumentParser) -> argparse.Namespace:
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    return args


def write_rows(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}")


def gain_rows(cmp):
    return [(g.base, g.other, f"{g.percent:.4f}", f"{g.se:.4f}") for g in cmp.gains]
