"""tubeseg: desk-scale video tube segmentation.

A mask-transformer model that predicts class-labeled spatio-temporal tubes,
trained with a set-matching loss and evaluated with STQ/VPQ/DSTQ, all on a
self-contained float64 autodiff core so every gradient is verifiable by
finite differences.
"""

__version__ = "0.1.0"
