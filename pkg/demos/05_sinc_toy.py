"""Fit 1000 free parameters to a sinc pulse with period- or pool-based critics.

Writes columnar text files (signals, views, frequency responses) for plotting.

Run: python demos/05_sinc_toy.py [steps] [out_dir]
"""

import sys

from hifigan import experiments as ex


def main(steps=2000, out_dir="sinc_toy_out"):
    cfg = ex.B2Config(steps=steps)
    for kind in ex.KINDS:
        res = ex.run_b2(kind, seed=0, cfg=cfg, log=print)
        files = ex.write_b2_columns(res, out_dir)
        print(f"{kind}: relative L2 error {res.rel_l2:.4f}; wrote {len(files)} files to {out_dir}/")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 2000, args[1] if len(args) > 1 else "sinc_toy_out")
