"""Pairwise interaction sums over labels.

Every right-hand side of the dynamics reduces to sums of the form

    S_i = sum_j w_j q_j k(X_i - X_j, y_i - y_j)

where ``k`` is the kernel, one of its derivatives, or its signed primitive,
``q`` is a per-label charge and ``y`` the frozen lateral coordinate.  Two
engines compute them:

``DirectSummer``
    Exact O(N^2) evaluation.  Sources are cut into fixed blocks, each block
    sum is formed independently (optionally on worker threads) and the block
    partials are merged by a fixed binary tree with compensated (two-sum)
    addition, so results are bit-identical for any worker count.

``ChebyshevSummer``
    For kernels analytic in a strip around the real axis.  The kernel is
    interpolated jointly in target and source position on Chebyshev nodes
    spanning the flock hull, which turns the sum into
    ``B (K (B^T (w q)))`` with an ``N x p`` barycentric basis ``B``; the
    lateral coupling between slices of a uniform grid is a discrete
    convolution done by FFT.  Cost is O(N p + S p^2 log S).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernel import Kernel

KERNEL_PARTS = ("phi", "d1", "dlat", "prim", "prim_dlat")
_LATERAL_PARTS = ("dlat", "prim_dlat")


def two_sum(a, b):
    """Error-free transformation ``a + b = s + e``."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def tree_sum(parts: list[np.ndarray]) -> np.ndarray:
    """Sum arrays in a fixed pairwise tree, carrying the rounding errors."""
    if not parts:
        raise ValueError("nothing to sum")
    level = [(np.asarray(p, dtype=float), 0.0) for p in parts]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            (s1, e1), (s2, e2) = level[i], level[i + 1]
            s, e = two_sum(s1, s2)
            nxt.append((s, e + e1 + e2))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    s, e = level[0]
    return s + e


def compensated_sum(values) -> float:
    """Correctly rounded sum of a 1D array."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


@dataclass(frozen=True)
class LabelLayout:
    """Arrangement of labels: ``n_slices`` lateral slices stored slice-major.

    ``lateral`` holds the lateral coordinate of each slice (uniformly spaced)
    or is ``None`` in one dimension.
    """

    n_slices: int = 1
    lateral: np.ndarray | None = None

    def label_lateral(self, n_labels: int) -> np.ndarray | None:
        if self.lateral is None:
            return None
        per = n_labels // self.n_slices
        return np.repeat(np.asarray(self.lateral, dtype=float), per)


def _kernel_part(kernel: Kernel, part: str):
    if part == "phi":
        return kernel.__call__
    if part == "d1":
        return kernel.d1
    if part == "dlat":
        return kernel.d_lateral
    if part == "prim":
        return kernel.primitive
    if part == "prim_dlat":
        return kernel.primitive_dlat
    raise ValueError(f"unknown kernel part {part!r}")


class DirectSummer:
    """Exact pairwise sums with a deterministic blocked reduction.

    Parameters
    ----------
    kernel : Kernel
    weights : ndarray
        Label masses ``w_j``.
    layout : LabelLayout
    block : int
        Source block size; fixed so the reduction tree never depends on
        ``workers``.
    workers : int
        Threads used to evaluate blocks.
    """

    def __init__(self, kernel: Kernel, weights, layout: LabelLayout | None = None,
                 block: int = 256, workers: int = 1):
        self.kernel = kernel
        self.weights = np.asarray(weights, dtype=float)
        self.layout = layout or LabelLayout()
        self.block = int(block)
        self.workers = max(1, int(workers))
        self.y = self.layout.label_lateral(self.weights.size)

    def sum(self, part: str, X, charges=None, targets=None, target_lateral=None):
        X = np.asarray(X, dtype=float)
        fn = _kernel_part(self.kernel, part)
        wq = self.weights if charges is None else self.weights * np.asarray(charges, float)
        tx = X if targets is None else np.asarray(targets, dtype=float)
        if self.y is None:
            ty = None
        elif targets is None:
            ty = self.y
        else:
            ty = np.broadcast_to(np.asarray(target_lateral, dtype=float), tx.shape)
        starts = range(0, X.size, self.block)

        def block_sum(s0):
            sl = slice(s0, s0 + self.block)
            dx = tx[:, None] - X[None, sl]
            if ty is None:
                vals = np.zeros_like(dx) if part in _LATERAL_PARTS else fn(dx)
            else:
                vals = fn(dx, ty[:, None] - self.y[None, sl])
            return np.sum(vals * wq[None, sl], axis=1)

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(block_sum, starts))
        else:
            parts = [block_sum(s0) for s0 in starts]
        return tree_sum(parts)


def chebyshev_nodes(lo: float, hi: float, p: int) -> np.ndarray:
    t = np.cos(np.pi * np.arange(p) / (p - 1))
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t


def barycentric_basis(x, nodes) -> np.ndarray:
    """Matrix ``B[i, k] = l_k(x_i)`` of Chebyshev-Lobatto Lagrange polynomials."""
    x = np.asarray(x, dtype=float)
    p = nodes.size
    lam = np.ones(p)
    lam[1::2] = -1.0
    lam[0] *= 0.5
    lam[-1] *= 0.5
    diff = x[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    terms = lam[None, :] / diff
    B = terms / np.sum(terms, axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        B[rows] = exact[rows].astype(float)
    return B


class ChebyshevSummer:
    """Low-rank interaction sums for kernels analytic in a strip.

    The interpolation interval covers the current flock hull with a margin
    and is rebuilt only when positions leave it, so kernel matrices are
    formed a handful of times per run.
    """

    def __init__(self, kernel: Kernel, weights, layout: LabelLayout | None = None,
                 rtol: float = 1e-16, max_nodes: int = 400, margin: float = 0.05):
        if kernel.singularity_distance(0.0) is None:
            raise ValueError("kernel is not analytic; use the direct engine")
        self.kernel = kernel
        self.weights = np.asarray(weights, dtype=float)
        self.layout = layout or LabelLayout()
        self.rtol = rtol
        self.max_nodes = max_nodes
        self.margin = margin
        self.n_slices = self.layout.n_slices
        if self.weights.size % self.n_slices:
            raise ValueError("labels must split evenly into slices")
        self.per_slice = self.weights.size // self.n_slices
        lat = self.layout.lateral
        if lat is not None and self.n_slices > 1:
            steps = np.diff(np.asarray(lat, dtype=float))
            if not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
                raise ValueError("lateral slices must be uniformly spaced")
            self.dy = float(steps[0])
        else:
            self.dy = 0.0
        self.interval = None
        self._cache: dict[str, np.ndarray] = {}
        self._basis_key = None
        self._basis = None
        self.fallback = None

    def nodes_for(self, lo: float, hi: float) -> int:
        half = 0.5 * (hi - lo)
        d = self.kernel.singularity_distance(0.0)
        if math.isinf(d):
            return 4
        beta = 0.45 * d
        if half <= 0:
            return 8
        rho = beta / half + math.sqrt(1.0 + (beta / half) ** 2)
        p = int(math.ceil(math.log(1.0 / self.rtol) / math.log(rho))) + 8
        return max(8, p)

    def _ensure_interval(self, X):
        xmin, xmax = float(np.min(X)), float(np.max(X))
        if self.interval is not None:
            lo, hi = self.interval
            if lo <= xmin and xmax <= hi:
                return
        width = max(xmax - xmin, 1e-12)
        lo = xmin - self.margin * width
        hi = xmax + self.margin * width
        p = self.nodes_for(lo, hi)
        if p > self.max_nodes:
            self.fallback = DirectSummer(self.kernel, self.weights, self.layout)
        else:
            self.fallback = None
        self.interval = (lo, hi)
        self.nodes = chebyshev_nodes(lo, hi, p)
        self._cache.clear()
        self._basis_key = None

    def _kernel_matrices(self, part: str) -> np.ndarray:
        """Kernel on node pairs for every slice offset, FFT'd along the offset axis."""
        if part in self._cache:
            return self._cache[part]
        fn = _kernel_part(self.kernel, part)
        dx = self.nodes[:, None] - self.nodes[None, :]
        S = self.n_slices
        if S == 1:
            if part in _LATERAL_PARTS:
                mat = np.zeros_like(dx)
            elif self.layout.lateral is None:
                mat = fn(dx)
            else:
                mat = fn(dx, np.zeros_like(dx))
            self._cache[part] = mat
            return mat
        P = 2 * S
        stack = np.zeros((P, dx.shape[0], dx.shape[1]))
        for d in range(-(S - 1), S):
            stack[d % P] = fn(dx, np.full_like(dx, d * self.dy))
        spec = np.fft.rfft(stack, axis=0)
        self._cache[part] = spec
        return spec

    def _basis_for(self, X):
        key = (X.ctypes.data, X.size, hash(X.tobytes()))
        if self._basis_key != key:
            self._basis = barycentric_basis(X, self.nodes)
            self._basis_key = key
        return self._basis

    def sum(self, part: str, X, charges=None, targets=None, target_lateral=None):
        X = np.asarray(X, dtype=float)
        if targets is not None:
            return DirectSummer(self.kernel, self.weights, self.layout).sum(
                part, X, charges, targets, target_lateral)
        self._ensure_interval(X)
        if self.fallback is not None:
            return self.fallback.sum(part, X, charges)
        B = self._basis_for(X)
        wq = self.weights if charges is None else self.weights * np.asarray(charges, float)
        S, n1 = self.n_slices, self.per_slice
        p = self.nodes.size
        Bs = B.reshape(S, n1, p)
        moments = np.einsum("snk,sn->sk", Bs, wq.reshape(S, n1))
        kmat = self._kernel_matrices(part)
        if S == 1:
            G = moments @ kmat.T
        else:
            P = 2 * S
            mpad = np.zeros((P, p))
            mpad[:S] = moments
            mhat = np.fft.rfft(mpad, axis=0)
            ghat = np.einsum("fpq,fq->fp", kmat, mhat)
            G = np.fft.irfft(ghat, n=P, axis=0)[:S]
        return np.einsum("snk,sk->sn", Bs, G).reshape(-1)


def make_summer(kernel: Kernel, weights, layout: LabelLayout | None = None,
                engine: str = "auto", workers: int = 1, auto_threshold: int = 1024):
    """Pick a summation engine.

    ``auto`` uses the Chebyshev engine for analytic kernels once the label
    count reaches ``auto_threshold`` (or in two dimensions), otherwise the
    direct engine.
    """
    n = np.asarray(weights).size
    layout = layout or LabelLayout()
    analytic = kernel.singularity_distance(0.0) is not None
    if engine == "auto":
        engine = "chebyshev" if analytic and (n >= auto_threshold or layout.n_slices > 1) \
            else "direct"
    if engine == "chebyshev":
        return ChebyshevSummer(kernel, weights, layout)
    if engine == "direct":
        return DirectSummer(kernel, weights, layout, workers=workers)
    raise ValueError(f"unknown summation engine {engine!r}")
