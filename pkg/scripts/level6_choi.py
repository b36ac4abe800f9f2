#!/usr/bin/env python3
"""Deep-level probe of the plain extension hierarchy on the 3x3 family.

With the partial-transpose blocks switched off, the extension hierarchy
is strictly weaker on this family: it stays feasible up to level 6 for
parameters below roughly 3.84, even though the family is entangled for
every parameter above 3.  Probing that boundary needs level-6 solves on
3x3, far beyond desk scale, so this script first discloses the projected
problem size and refuses to start unless --yes-really is passed.  It is
deliberately excluded from the test suite.
"""

import argparse
import sys
import time

from sepcert.hierarchy import ExtensionSpec, required_resources, run_test
from sepcert.states import choi_family_state


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="level-6 plain-extension probe of the 3x3 family"
    )
    parser.add_argument(
        "--yes-really",
        action="store_true",
        help="actually run the solves instead of only printing the cost",
    )
    parser.add_argument(
        "--alphas",
        default="3.80,3.84,3.88,4.00",
        help="comma-separated family parameters to probe",
    )
    parser.add_argument("--k", type=int, default=6, help="hierarchy level")
    parser.add_argument(
        "--ppt",
        action="store_true",
        help="keep the partial-transpose blocks (heavier, detects earlier)",
    )
    args = parser.parse_args(argv)

    spec = ExtensionSpec(k=args.k, ppt=args.ppt, reduced=True)
    res = required_resources(3, 3, spec)
    print(f"level {args.k} probe of the 3x3 family, ppt={args.ppt}")
    print("required resources:")
    print(f"  free directions:       {res['free_directions']}")
    print(f"  block sides:           {res['block_sides']}")
    print(f"  stacked block storage: {res['stack_bytes'] / 1e9:.2f} GB")
    print(f"  schur flops/iteration: {res['schur_flops_per_iteration']:.2e}")
    if not args.yes_really:
        print("dry run only; pass --yes-really to start the solves")
        return 0

    for token in args.alphas.split(","):
        alpha = float(token)
        start = time.perf_counter()
        report = run_test(choi_family_state(alpha), spec, keep_extension=False)
        elapsed = time.perf_counter() - start
        print(
            f"alpha={alpha:.4f} status={report.status} "
            f"margin={report.margin:.3e} iterations={report.iterations} "
            f"elapsed={elapsed:.0f}s"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
