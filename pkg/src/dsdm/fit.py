"""Regenerate the shipped default parameter file from the prototype figures.

    python -m dsdm.fit [--out PATH]
"""

import argparse
import sys

from .params import dumps_params, fitted_prototype_params


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m dsdm.fit", description=__doc__.splitlines()[0])
    ap.add_argument("--out", help="write the INI file here instead of stdout")
    args = ap.parse_args(argv)
    p = fitted_prototype_params()
    text = "; fitted from per-mode reflected inertias (HS 0.004, HF 0.22 kg.m^2), R2^2 I2 / R1^2 I1 = 425\n"
    text += dumps_params(p)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
