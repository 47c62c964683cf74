"""Stored-unit counts and compression ratios for a grid of (r, k) choices."""

import argparse

from tensormap.map_builder import map_units


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--I", type=int, default=30)
    p.add_argument("--J", type=int, default=361)
    p.add_argument("--K", type=int, default=3800)
    p.add_argument("--returns-per-scan", type=int, default=77_000)
    p.add_argument("--ranks", default="2,5,10,20")
    p.add_argument("--segments", default="1,5,10,38")
    a = p.parse_args()
    full = a.I * a.J * a.K
    raw = 3 * a.returns_per_scan * a.K
    print(f"full tensor {full} units, raw clouds {raw} units")
    print("r,L,k,map_units,full_ratio,raw_ratio")
    for r in (int(v) for v in a.ranks.split(",")):
        for L in (int(v) for v in a.segments.split(",")):
            units = map_units(a.I, a.J, a.K, r, r, L)
            print(f"{r},{L},{-(-a.K // L)},{units},{full / units:.1f},{raw / units:.0f}")


if __name__ == "__main__":
    main()
