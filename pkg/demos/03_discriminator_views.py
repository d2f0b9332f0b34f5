"""What each sub-discriminator gets to see.

MPD folds the waveform into a [T/p, p] grid, so each column holds every p-th
sample; MSD average-pools, which acts as a low-pass filter. The printout
compares how much high-band energy of a sinc pulse survives each view.

Run: python demos/03_discriminator_views.py
"""

import numpy as np

from hifigan import experiments as ex
from hifigan.discriminators import period_reshape
from hifigan.tensor import Tensor


def main():
    x = np.arange(1.0, 8.0)
    grid = period_reshape(Tensor(x[None, None]), 3).data[0, 0]
    print("period 3 view of [1..7] (tail reflect-padded):")
    print(grid)

    target = ex.SincTarget().values
    for kind in ex.KINDS:
        kept = ex.high_band_retention(target, kind)
        print(f"{kind}: share of the [1/16, 1/8] cycles/sample band kept per view:",
              ", ".join(f"{k:.3f}" for k in kept))


if __name__ == "__main__":
    main()
