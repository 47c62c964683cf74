"""Write a corridor scene description to JSON for ``tensormap synth --scene``."""

import argparse

from tensormap.range_image import GridSpec
from tensormap.synthetic import corridor_scene, save_scene


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--segments", type=int, default=8)
    p.add_argument("--scans-per-segment", type=int, default=50)
    p.add_argument("--step", type=float, default=0.5, help="meters between scans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=GridSpec.parse, default=GridSpec())
    p.add_argument("--stationary-boundary", type=int, help="segment whose start gets a stationary span")
    p.add_argument("--stationary-scans", type=int, default=20)
    p.add_argument("--no-ground", action="store_true")
    a = p.parse_args()
    spec = corridor_scene(a.segments, a.scans_per_segment, a.step, a.seed, a.grid,
                          stationary_boundary=a.stationary_boundary, stationary_scans=a.stationary_scans,
                          ground=not a.no_ground)
    save_scene(spec, a.out)
    print(f"{len(spec.walls)} walls, {len(spec.trajectory)} poses -> {a.out}")


if __name__ == "__main__":
    main()
