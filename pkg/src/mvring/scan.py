"""Selective-scan state space operator over spiral-ordered multiview tokens.

Spatial tokens are serialized by an outward spiral from the image centre so
that object content sits in a short sequence window, views are stacked into
contiguous blocks, and the whole sequence is scanned in both view orders by
a diagonal selective SSM. The recurrence itself runs in the compiled kernel
when built (see _kernel.backend_name).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernel import backend_name
from .geometry import LatentStack
from .tensor import Tensor, linear_recurrence, matmul, take_rows

__all__ = [
    "ScanOrder",
    "SsmParams",
    "spiral_order",
    "row_major_order",
    "build_scan_order",
    "sbscan_permute",
    "sbscan_restore",
    "discretize_zoh",
    "selective_scan_sequential",
    "selective_scan",
    "rapid_glance",
    "SCAN_STRATEGIES",
    "backend_name",
]

SCAN_STRATEGIES = ("spiral-bidirectional", "spatial-first-bidirectional", "row-major")


def spiral_order(H, W):
    """Row-major indices of an outward spiral walk from the grid centre.

    Starts at (floor((H-1)/2), floor((W-1)/2)), walks right, down, left, up
    with leg lengths 1,1,2,2,3,3,... and skips cells outside the grid.
    """
    if H < 1 or W < 1:
        raise ValueError(f"grid extents must be >= 1, got {H}x{W}")
    r, c = (H - 1) // 2, (W - 1) // 2
    order = [r * W + c]
    total = H * W
    moves = ((0, 1), (1, 0), (0, -1), (-1, 0))
    leg, di = 1, 0
    while len(order) < total:
        for _ in range(2):
            dr, dc = moves[di]
            for _ in range(leg):
                r += dr
                c += dc
                if 0 <= r < H and 0 <= c < W:
                    order.append(r * W + c)
                    if len(order) == total:
                        return np.asarray(order, dtype=np.int64)
            di = (di + 1) % 4
        leg += 1
    return np.asarray(order, dtype=np.int64)


def row_major_order(H, W):
    return np.arange(H * W, dtype=np.int64)


@dataclass(frozen=True)
class ScanOrder:
    """Bijection between (view, row, col) token positions and sequence slots.

    perm[s] is the flat token index (v*H*W + r*W + c) read at sequence slot s;
    inv is its inverse. Each view's tokens form one contiguous block.
    """

    f: int
    tokens_per_view: int
    perm: np.ndarray
    inv: np.ndarray

    def reversed_views(self):
        """Same spatial order, view blocks concatenated in descending order."""
        blocks = self.perm.reshape(self.f, self.tokens_per_view)[::-1]
        perm = blocks.reshape(-1)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        return ScanOrder(self.f, self.tokens_per_view, perm, inv)


def build_scan_order(f, H, W, strategy="spiral-bidirectional"):
    if strategy not in SCAN_STRATEGIES:
        raise ValueError(f"unknown scan strategy {strategy!r}; "
                         f"choose one of {SCAN_STRATEGIES}")
    spatial = spiral_order(H, W) if strategy == "spiral-bidirectional" \
        else row_major_order(H, W)
    hw = H * W
    perm = (np.arange(f, dtype=np.int64)[:, None] * hw + spatial[None, :]).reshape(-1)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return ScanOrder(f=f, tokens_per_view=hw, perm=perm, inv=inv)


def sbscan_permute(stack: LatentStack, order: ScanOrder, reverse_views=False):
    """Flatten a latent stack to a [f*H*W, C] token sequence in scan order."""
    f, C, H, W = stack.data.shape
    if order.f != f or order.tokens_per_view != H * W:
        raise ValueError(
            f"scan order built for f={order.f}, {order.tokens_per_view} "
            f"tokens/view; stack has f={f}, {H * W}")
    if reverse_views:
        order = order.reversed_views()
    tokens = stack.data.transpose((0, 2, 3, 1)).reshape(f * H * W, C)
    return take_rows(tokens, order.perm, inverse=order.inv)


def sbscan_restore(seq: Tensor, order: ScanOrder, stack_shape, reverse_views=False):
    """Inverse of sbscan_permute back to a [f, C, H, W] tensor."""
    f, C, H, W = stack_shape
    if reverse_views:
        order = order.reversed_views()
    tokens = take_rows(seq, order.inv, inverse=order.perm)
    return tokens.reshape(f, H, W, C).transpose((0, 3, 1, 2))


# -- selective state space model ------------------------------------------------


@dataclass
class SsmParams:
    """Diagonal selective-SSM parameters for channel dim D and state dim N.

    The state matrix is A = -exp(a_log), always negative. Step size, input
    and output projections are affine functions of the token:
    delta = softplus(x @ w_delta + b_delta), B = x @ w_b + b_b,
    C = x @ w_c + b_c.
    """

    a_log: Tensor   # [D, N]
    w_delta: Tensor  # [D, D]
    b_delta: Tensor  # [D]
    w_b: Tensor     # [D, N]
    b_b: Tensor     # [N]
    w_c: Tensor     # [D, N]
    b_c: Tensor     # [N]

    @property
    def d_model(self):
        return self.a_log.shape[0]

    @property
    def d_state(self):
        return self.a_log.shape[1]

    def tensors(self):
        return [self.a_log, self.w_delta, self.b_delta,
                self.w_b, self.b_b, self.w_c, self.b_c]

    @classmethod
    def init(cls, tape, prefix, d_model, d_state, out_scale=None):
        """Stable default init: A = -(1..N), delta ~ softplus(0) per token.

        The output projection starts at zero (operator is a no-op inside its
        residual) unless `out_scale` sets a small random magnitude.
        """
        a0 = np.log(np.tile(np.arange(1, d_state + 1, dtype=np.float64),
                            (d_model, 1)))
        scale = 0.05 / np.sqrt(d_model)
        return cls(
            a_log=tape.param(f"{prefix}.a_log", a0),
            w_delta=tape.normal(f"{prefix}.w_delta", (d_model, d_model), scale),
            b_delta=tape.zeros(f"{prefix}.b_delta", (d_model,)),
            w_b=tape.normal(f"{prefix}.w_b", (d_model, d_state), 1.0 / np.sqrt(d_model)),
            b_b=tape.zeros(f"{prefix}.b_b", (d_state,)),
            w_c=(tape.zeros(f"{prefix}.w_c", (d_model, d_state)) if out_scale is None
                 else tape.normal(f"{prefix}.w_c", (d_model, d_state),
                                  out_scale / np.sqrt(d_model))),
            b_c=tape.zeros(f"{prefix}.b_c", (d_state,)),
        )


def discretize_zoh(a_diag, b, delta):
    """Zero-order-hold state decay with Euler input: (exp(delta*a), delta*b)."""
    a_diag = np.asarray(a_diag, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta < 0):
        raise ValueError("step size must be positive")
    return np.exp(delta * a_diag), delta * b


def selective_scan_sequential(x, params: SsmParams):
    """Reference scan: strictly left-to-right token recurrence, no tape.

    h_t = exp(delta_t * A) h_{t-1} + (delta_t * x_t) B_t, y_t = h_t C_t.
    """
    x_np = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    L, D = x_np.shape
    N = params.d_state
    a = -np.exp(params.a_log.data)
    y = np.empty_like(x_np)
    h = np.zeros((D, N), dtype=x_np.dtype)
    for t in range(L):
        xt = x_np[t]
        delta_t = np.logaddexp(0.0, xt @ params.w_delta.data + params.b_delta.data)
        b_t = xt @ params.w_b.data + params.b_b.data
        c_t = xt @ params.w_c.data + params.b_c.data
        abar, bbar = discretize_zoh(a, b_t[None, :], delta_t[:, None])
        h = abar * h + bbar * xt[:, None]
        y[t] = h @ c_t
    return Tensor(y) if isinstance(x, Tensor) else y


def selective_scan(x: Tensor, params: SsmParams, chunk=64):
    """Production scan: vectorized coefficients, kernel recurrence, tape-aware.

    Matches selective_scan_sequential exactly up to vectorization rounding;
    output is bit-identical for every chunk size.
    """
    L, D = x.shape
    N = params.d_state
    a = -params.a_log.exp()                                   # [D, N]
    delta = (matmul(x, params.w_delta) + params.b_delta).softplus()   # [L, D]
    b = matmul(x, params.w_b) + params.b_b                    # [L, N]
    c = matmul(x, params.w_c) + params.b_c                    # [L, N]
    abar = (delta.reshape(L, D, 1) * a.reshape(1, D, N)).exp()        # [L, D, N]
    u = (delta * x).reshape(L, D, 1) * b.reshape(L, 1, N)             # [L, D, N]
    h = linear_recurrence(abar, u, chunk=chunk)                       # [L, D, N]
    return (h * c.reshape(L, 1, N)).sum(axis=2)                       # [L, D]


def rapid_glance(stack: LatentStack, params: SsmParams,
                 strategy="spiral-bidirectional", chunk=64):
    """Bidirectional selective scan over the whole view ring, plus residual.

    Pass one scans view blocks in ascending order, pass two in descending
    order (spatial order within a view is unchanged); the output is the mean
    of both passes added back onto the input.
    """
    f, C, H, W = stack.data.shape
    if params.d_model != C:
        raise ValueError(f"ssm channel dim {params.d_model} != stack channels {C}")
    order = build_scan_order(f, H, W, strategy)
    y_fwd = selective_scan(sbscan_permute(stack, order), params, chunk)
    maps_fwd = sbscan_restore(y_fwd, order, stack.data.shape)
    if strategy == "row-major":
        out = maps_fwd + stack.data
    else:
        y_bwd = selective_scan(sbscan_permute(stack, order, reverse_views=True),
                               params, chunk)
        maps_bwd = sbscan_restore(y_bwd, order, stack.data.shape,
                                  reverse_views=True)
        out = (maps_fwd + maps_bwd) * 0.5 + stack.data
    return stack.with_data(out)
