"""Pure numpy 3x3 convolution kernels (zero padding 1, stride 1).

These are the fallback implementations for the compiled extension in
``_convext``; both expose the same three functions and must agree numerically.
"""

import numpy as np


def conv3x3_forward(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Cross-correlate x (C_in,H,W) with k (C_out,C_in,3,3) -> (C_out,H,W)."""
    c_in, h, w = x.shape
    c_out = k.shape[0]
    xp = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    xp[:, 1 : h + 1, 1 : w + 1] = x
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for kh in range(3):
        for kw in range(3):
            window = xp[:, kh : kh + h, kw : kw + w]
            out += np.tensordot(k[:, :, kh, kw], window, axes=([1], [0]))
    return out


def conv3x3_grad_input(k: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the input, given dout (C_out,H,W)."""
    c_out, c_in = k.shape[0], k.shape[1]
    h, w = dout.shape[1], dout.shape[2]
    dxp = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    for kh in range(3):
        for kw in range(3):
            dxp[:, kh : kh + h, kw : kw + w] += np.tensordot(
                k[:, :, kh, kw], dout, axes=([0], [0])
            )
    return dxp[:, 1 : h + 1, 1 : w + 1]


def conv3x3_grad_kernel(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the kernel, given dout (C_out,H,W)."""
    c_in, h, w = x.shape
    c_out = dout.shape[0]
    xp = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    xp[:, 1 : h + 1, 1 : w + 1] = x
    dk = np.zeros((c_out, c_in, 3, 3), dtype=np.float64)
    for kh in range(3):
        for kw in range(3):
            window = xp[:, kh : kh + h, kw : kw + w]
            dk[:, :, kh, kw] = np.tensordot(dout, window, axes=([1, 2], [1, 2]))
    return dk
