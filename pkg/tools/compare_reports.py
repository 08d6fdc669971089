#!/usr/bin/env python3
import argparse
from pathlib import Path

TIMING_SUFFIX = ".timing.json"


def report_files(root: Path) -> dict[str, Path]:
    """Report files under root keyed by relative path, timing sidecars excluded."""
    return {
        str(p.relative_to(root)): p
        for p in sorted(root.rglob("*"))
        if p.is_file() and not p.name.endswith(TIMING_SUFFIX)
    }


def compare_dirs(a: Path, b: Path) -> list[str]:
    """Differences between two report directories; empty when they are byte-identical."""
    left, right = report_files(a), report_files(b)
    problems = [f"only in {a}: {name}" for name in sorted(left.keys() - right.keys())]
    problems += [f"only in {b}: {name}" for name in sorted(right.keys() - left.keys())]
    for name in sorted(left.keys() & right.keys()):
        if left[name].read_bytes() != right[name].read_bytes():
            problems.append(f"differs: {name}")
    return problems


def main() -> int:
    parser = argparse.ArgumentParser(description="Check that two report directories are byte-identical.")
    parser.add_argument("dir_a", type=Path)
    parser.add_argument("dir_b", type=Path)
    args = parser.parse_args()
    for d in (args.dir_a, args.dir_b):
        if not d.is_dir():
            print(f"not a directory: {d}")
            return 2
    problems = compare_dirs(args.dir_a, args.dir_b)
    if problems:
        print("Differences:")
        for p in problems:
            print(f"- {p}")
        return 1
    print("OK")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
