"""Arithmetic of truncated Fourier series on the d-torus.

A series is a table of complex coefficients f_hat(k), k in Z^d with
|k|_inf <= cutoff, optionally matrix-valued.  The analyticity-strip norm
sum_k |f_hat(k)| e^{s|k|} is the computable upper bound used everywhere in
place of sup-norms on complex strips; it is submultiplicative, which is what
every estimate downstream relies on.

Conventions: the cutoff box and all cube geometry use |k|_inf; the
exponential weights e^{s|k|} and lattice distances in decay statements use
|k|_1 (the triangle inequality makes the weighted norm a Banach algebra).

Coefficients are stored densely over the cutoff box (index k maps to
k + cutoff per axis); the sparse map interface is `coeffs`/`from_coeffs`.
All operations return new objects; instances are treated as immutable.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve


@lru_cache(maxsize=256)
def _l1_grid(d: int, cutoff: int) -> np.ndarray:
    """|k|_1 over the box [-cutoff, cutoff]^d, shape (2*cutoff+1,)*d."""
    axes = np.meshgrid(*[np.abs(np.arange(-cutoff, cutoff + 1))] * d,
                       indexing="ij")
    return sum(axes) if d > 0 else np.zeros(())


@lru_cache(maxsize=256)
def _mode_grid(d: int, cutoff: int) -> np.ndarray:
    """Integer modes over the box, shape (2*cutoff+1,)*d + (d,)."""
    axes = np.meshgrid(*[np.arange(-cutoff, cutoff + 1)] * d, indexing="ij")
    return np.stack(axes, axis=-1)


class FourierSeries:
    __slots__ = ("d", "shape", "cutoff", "data")

    def __init__(self, d: int, shape: tuple[int, int], cutoff: int,
                 data: np.ndarray | None = None):
        if d < 1:
            raise ValueError("d must be >= 1")
        if cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        self.d = d
        self.shape = (int(shape[0]), int(shape[1]))
        self.cutoff = int(cutoff)
        box = (2 * self.cutoff + 1,) * d
        if data is None:
            data = np.zeros(self.shape + box, dtype=complex)
        else:
            data = np.asarray(data, dtype=complex)
            if data.shape != self.shape + box:
                raise ValueError(
                    f"data shape {data.shape} != {self.shape + box}")
            data = data.copy()
        data.flags.writeable = False
        self.data = data

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    @classmethod
    def zero(cls, d: int, shape: tuple[int, int] = (1, 1),
             cutoff: int = 0) -> "FourierSeries":
        return cls(d, shape, cutoff)

    @classmethod
    def constant(cls, d: int, value, shape: tuple[int, int] | None = None
                 ) -> "FourierSeries":
        value = np.atleast_2d(np.asarray(value, dtype=complex))
        if shape is None:
            shape = value.shape
        out = np.zeros(shape + (1,) * d, dtype=complex)
        out[(Ellipsis,) + (0,) * d] = value
        return cls(d, shape, 0, out)

    @classmethod
    def from_coeffs(cls, d: int, entries: dict, shape: tuple[int, int] = (1, 1),
                    cutoff: int | None = None) -> "FourierSeries":
        """Build from a sparse map k-tuple -> complex (or (rows, cols) array)."""
        if cutoff is None:
            cutoff = max((max(abs(c) for c in k) for k in entries), default=0)
        box = (2 * cutoff + 1,) * d
        data = np.zeros(shape + box, dtype=complex)
        for k, v in entries.items():
            if len(k) != d:
                raise ValueError(f"index {k} has wrong dimension")
            if max(abs(c) for c in k) > cutoff:
                raise ValueError(f"index {k} beyond cutoff {cutoff}")
            idx = tuple(c + cutoff for c in k)
            data[(slice(None), slice(None)) + idx] += np.asarray(v, dtype=complex)
        return cls(d, shape, cutoff, data)

    @classmethod
    def mode(cls, d: int, k: tuple, value=1.0,
             shape: tuple[int, int] = (1, 1)) -> "FourierSeries":
        """Single-mode series value * e^{i<k,x>}."""
        v = np.broadcast_to(np.asarray(value, dtype=complex), shape)
        return cls.from_coeffs(d, {tuple(k): v}, shape=shape)

    @classmethod
    def cosine(cls, d: int, k: tuple, amplitude=1.0) -> "FourierSeries":
        k = tuple(k)
        mk = tuple(-c for c in k)
        a = complex(amplitude) / 2.0
        return cls.from_coeffs(d, {k: a, mk: a} if k != mk else {k: 2 * a})

    @classmethod
    def sine(cls, d: int, k: tuple, amplitude=1.0) -> "FourierSeries":
        k = tuple(k)
        mk = tuple(-c for c in k)
        a = complex(amplitude) / (2.0j)
        if k == mk:
            return cls.zero(d)
        return cls.from_coeffs(d, {k: a, mk: -a})

    # ------------------------------------------------------------------
    # access
    # ------------------------------------------------------------------
    def coeff(self, k: tuple) -> np.ndarray:
        """Coefficient matrix at mode k (zero beyond the cutoff)."""
        if max((abs(c) for c in k), default=0) > self.cutoff:
            return np.zeros(self.shape, dtype=complex)
        idx = tuple(c + self.cutoff for c in k)
        return np.array(self.data[(slice(None), slice(None)) + idx])

    def coeffs(self, tol: float = 0.0) -> dict:
        """Sparse map of modes with some entry of magnitude > tol."""
        mags = np.abs(self.data).max(axis=(0, 1))
        out = {}
        for idx in np.argwhere(mags > tol):
            k = tuple(int(c) - self.cutoff for c in idx)
            out[k] = self.coeff(k)
        return out

    @property
    def is_scalar(self) -> bool:
        return self.shape == (1, 1)

    def entry(self, i: int, j: int) -> "FourierSeries":
        return FourierSeries(self.d, (1, 1), self.cutoff,
                             self.data[i:i + 1, j:j + 1])

    # ------------------------------------------------------------------
    # algebra
    # ------------------------------------------------------------------
    def _aligned(self, other: "FourierSeries"):
        N = max(self.cutoff, other.cutoff)
        return self.pad(N), other.pad(N)

    def pad(self, cutoff: int) -> "FourierSeries":
        """Embed into a larger cutoff box (identity if already that size)."""
        if cutoff < self.cutoff:
            raise ValueError("pad target smaller than cutoff; use truncate")
        if cutoff == self.cutoff:
            return self
        w = cutoff - self.cutoff
        pad = [(0, 0), (0, 0)] + [(w, w)] * self.d
        return FourierSeries(self.d, self.shape, cutoff,
                             np.pad(self.data, pad))

    def __add__(self, other: "FourierSeries") -> "FourierSeries":
        if not isinstance(other, FourierSeries):
            return NotImplemented
        if self.d != other.d or self.shape != other.shape:
            raise ValueError("shape mismatch in add")
        a, b = self._aligned(other)
        return FourierSeries(self.d, self.shape, a.cutoff, a.data + b.data)

    def __sub__(self, other: "FourierSeries") -> "FourierSeries":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "FourierSeries":
        if isinstance(scalar, FourierSeries):
            return NotImplemented
        return FourierSeries(self.d, self.shape, self.cutoff,
                             self.data * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "FourierSeries":
        return (-1.0) * self

    def transpose(self) -> "FourierSeries":
        return FourierSeries(self.d, (self.shape[1], self.shape[0]),
                             self.cutoff, np.swapaxes(self.data, 0, 1))

    def conj_function(self) -> "FourierSeries":
        """Series of the entrywise complex conjugate function.

        (conj f)_hat(k) = conj(f_hat(-k)).
        """
        flipped = np.flip(self.data, axis=tuple(range(2, 2 + self.d)))
        return FourierSeries(self.d, self.shape, self.cutoff,
                             np.conj(flipped))

    def reflect(self) -> "FourierSeries":
        """Series with coefficients f_hat(-k)."""
        flipped = np.flip(self.data, axis=tuple(range(2, 2 + self.d)))
        return FourierSeries(self.d, self.shape, self.cutoff, flipped)

    def reality_error(self) -> float:
        """Max |conj(f_hat(k)) - f_hat(-k)| over modes and entries."""
        return float(np.abs(np.conj(self.data)
                            - self.reflect().data).max(initial=0.0))

    def max_abs_coeff(self) -> float:
        return float(np.abs(self.data).max(initial=0.0))

    def evaluate(self, x) -> np.ndarray:
        """Pointwise value sum_k f_hat(k) e^{i<k,x>}, shape (rows, cols)."""
        x = np.asarray(x, dtype=float)
        modes = _mode_grid(self.d, self.cutoff)
        phases = np.exp(1j * (modes @ x))
        return np.tensordot(self.data, phases, axes=(tuple(range(2, 2 + self.d)),
                                                     tuple(range(self.d))))


# ----------------------------------------------------------------------
# the four contract operations
# ----------------------------------------------------------------------

def truncate(f: FourierSeries, N: int) -> FourierSeries:
    """Keep exactly the modes with |k|_inf <= N (linear, idempotent)."""
    if N < 0:
        raise ValueError("N must be >= 0")
    if N >= f.cutoff:
        return f
    w = f.cutoff - N
    sl = (slice(None), slice(None)) + (slice(w, -w),) * f.d
    return FourierSeries(f.d, f.shape, N, f.data[sl])


def tail(f: FourierSeries, N: int) -> FourierSeries:
    """The complement (1 - Gamma_N) f = f - truncate(f, N)."""
    return f - truncate(f, N).pad(f.cutoff)


def strip_norm(f: FourierSeries, s: float) -> float:
    """sum_k max_entries |f_hat(k)| e^{s|k|_1}; monotone in s."""
    if s < 0:
        raise ValueError("s must be >= 0")
    mags = np.abs(f.data).max(axis=(0, 1)) if f.data.size else 0.0
    w = np.exp(s * _l1_grid(f.d, f.cutoff))
    return float(np.sum(mags * w))


def product(f: FourierSeries, g: FourierSeries) -> FourierSeries:
    """Matrix product with coefficient convolution; cutoff adds.

    Scalar (1x1) factors multiply entrywise against any shape.
    """
    if f.d != g.d:
        raise ValueError("dimension mismatch in product")
    scalar_f, scalar_g = f.is_scalar, g.is_scalar
    if not (scalar_f or scalar_g) and f.shape[1] != g.shape[0]:
        raise ValueError(f"shapes {f.shape} x {g.shape} do not compose")
    if scalar_f and not scalar_g:
        rows, cols, inner = g.shape[0], g.shape[1], None
    elif scalar_g and not scalar_f:
        rows, cols, inner = f.shape[0], f.shape[1], None
    else:
        rows, cols, inner = f.shape[0], g.shape[1], f.shape[1]
    N = f.cutoff + g.cutoff
    box = (2 * N + 1,) * f.d
    out = np.zeros((rows, cols) + box, dtype=complex)
    conv_axes = tuple(range(f.d))
    if inner is None:
        a = f.data[0, 0] if scalar_f else g.data[0, 0]
        m = g.data if scalar_f else f.data
        for i in range(rows):
            for j in range(cols):
                out[i, j] = fftconvolve(m[i, j], a, mode="full",
                                        axes=conv_axes)
    else:
        for i in range(rows):
            for j in range(cols):
                acc = np.zeros(box, dtype=complex)
                for m in range(inner):
                    acc += fftconvolve(f.data[i, m], g.data[m, j],
                                       mode="full", axes=conv_axes)
                out[i, j] = acc
    return FourierSeries(f.d, (rows, cols), N, out)


def dir_derivative(f: FourierSeries, omega) -> FourierSeries:
    """Directional derivative sum_j omega_j dF/dx_j: multiply by i<k,omega>."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (f.d,):
        raise ValueError("omega must have length d")
    modes = _mode_grid(f.d, f.cutoff)
    factor = 1j * (modes @ omega)
    return FourierSeries(f.d, f.shape, f.cutoff, f.data * factor)


def partial_x(f: FourierSeries, axis: int) -> FourierSeries:
    """d/dx_axis: multiply coefficient at k by i*k_axis."""
    e = np.zeros(f.d)
    e[axis] = 1.0
    return dir_derivative(f, e)
