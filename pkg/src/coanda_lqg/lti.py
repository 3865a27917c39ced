"""Discrete LTI primitives shared by the plant, identification and synthesis code.

Transfer functions are stored as polynomials in ``z^-1`` with ascending powers,
so ``num[k]`` multiplies ``z^-k``. This is the convention used by
:func:`scipy.signal.lfilter`, which keeps simulation and evaluation aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dsp import FrequencyResponse

DEFAULT_FS = 50_000.0


def batch_matmul(x: np.ndarray, M: np.ndarray) -> np.ndarray:
    """``x @ M`` for a batch of row vectors, one product per row.

    A plain 2-D product lets BLAS pick kernels and summation orders by batch
    size. Stacking the rows as separate ``1 x n`` products keeps each
    member's result independent of the batch, so an ensemble of identical
    members stays bitwise equal to a single run.
    """
    return (x[:, None, :] @ M)[:, 0]


def _as_coeffs(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D coefficient array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coefficients")
    return arr


def exact_sum(values) -> float:
    """Correctly rounded sum of float coefficients.

    Polynomials evaluated at ``z = 1`` suffer heavy cancellation for
    lightly damped plants, so the sum is carried out in rational arithmetic.
    """
    total = sum((Fraction(float(v)) for v in values), Fraction(0))
    return float(total)


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function in ``z^-1`` with an integer transport delay.

    Parameters
    ----------
    num : array_like
        Numerator coefficients, ascending powers of ``z^-1``.
    den : array_like
        Denominator coefficients, ascending powers of ``z^-1``; ``den[0]``
        must equal 1.
    delay : int
        Transport delay in samples, applied as ``z^-delay``.
    ts : float
        Sampling period in seconds.
    """

    num: np.ndarray
    den: np.ndarray
    delay: int = 0
    ts: float = 1.0 / DEFAULT_FS

    def __post_init__(self):
        num = _as_coeffs(self.num, "num")
        den = _as_coeffs(self.den, "den")
        if den[0] != 1.0:
            raise ValueError("den[0] must be 1; normalise with TransferFunction.normalized")
        if int(self.delay) != self.delay or self.delay < 0:
            raise ValueError("delay must be a non-negative integer")
        if not self.ts > 0:
            raise ValueError("ts must be positive")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        object.__setattr__(self, "delay", int(self.delay))
        object.__setattr__(self, "ts", float(self.ts))

    @classmethod
    def normalized(cls, num, den, delay: int = 0, ts: float = 1.0 / DEFAULT_FS):
        """Build a transfer function after dividing through by ``den[0]``."""
        den = _as_coeffs(den, "den")
        if den[0] == 0:
            raise ValueError("den[0] must be nonzero")
        return cls(_as_coeffs(num, "num") / den[0], den / den[0], delay, ts)

    @property
    def fs(self) -> float:
        return 1.0 / self.ts

    @property
    def order(self) -> int:
        return self.den.size - 1

    def dc_gain(self) -> float:
        """Gain at ``z = 1``, summed exactly to avoid cancellation."""
        d = exact_sum(self.den)
        if d == 0.0:
            return math.inf
        return exact_sum(self.num) / d

    def evaluate(self, z) -> np.ndarray:
        """Evaluate at complex points ``z``, including the delay term."""
        zi = 1.0 / np.asarray(z, dtype=complex)
        # polyval wants descending powers of its argument
        n = np.polyval(self.num[::-1], zi)
        d = np.polyval(self.den[::-1], zi)
        return n / d * zi**self.delay

    def freqresp(self, freqs) -> FrequencyResponse:
        """Frequency response on a grid in Hz, delay phase included."""
        f = np.asarray(freqs, dtype=float)
        value = self.evaluate(np.exp(2j * np.pi * f * self.ts))
        zero = f == 0
        if np.any(zero):
            value = value.copy()
            value[zero] = self.dc_gain()
        return FrequencyResponse(f, value)

    def poles(self) -> np.ndarray:
        # den in z^-1 ascending equals the z-polynomial in descending powers
        if self.order == 0:
            return np.zeros(0, dtype=complex)
        return np.roots(self.den)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def without_delay(self) -> TransferFunction:
        return TransferFunction(self.num, self.den, 0, self.ts)

    def with_delay(self, delay: int) -> TransferFunction:
        return TransferFunction(self.num, self.den, delay, self.ts)

    def impulse(self, n: int) -> np.ndarray:
        """First ``n`` samples of the impulse response, delay included."""
        from scipy.signal import lfilter

        x = np.zeros(n)
        if self.delay < n:
            x[self.delay] = 1.0
        return lfilter(self.num, self.den, x)

    def simulate(self, u) -> np.ndarray:
        """Zero-state response to the input sequence ``u``."""
        from scipy.signal import lfilter

        u = np.asarray(u, dtype=float)
        if self.delay:
            u = np.concatenate([np.zeros(self.delay), u[: max(u.size - self.delay, 0)]])
        return lfilter(self.num, self.den, u)

    def to_dict(self) -> dict:
        return {
            "num": [float(v) for v in self.num],
            "den": [float(v) for v in self.den],
            "delay": self.delay,
            "ts": self.ts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TransferFunction:
        return cls(data["num"], data["den"], data.get("delay", 0), data.get("ts", 1.0 / DEFAULT_FS))


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete single-input single-output realization.

    ``x(k+1) = A x(k) + B u(k) + F_dist w(k)``, ``y(k) = C x(k) + D u(k)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    F_dist: np.ndarray | None = None
    ts: float = 1.0 / DEFAULT_FS

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float)) if np.size(self.A) else np.zeros((0, 0))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, 1)
        C = np.asarray(self.C, dtype=float).reshape(1, n)
        F = B.copy() if self.F_dist is None else np.asarray(self.F_dist, dtype=float).reshape(n, 1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(self.D))
        object.__setattr__(self, "F_dist", F)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def impulse(self, n: int) -> np.ndarray:
        """Markov parameters ``D, CB, CAB, ...`` for ``n`` samples."""
        h = np.zeros(n)
        if n == 0:
            return h
        h[0] = self.D
        x = self.B[:, 0].copy()
        for k in range(1, n):
            h[k] = float(self.C[0] @ x)
            x = self.A @ x
        return h

    def evaluate(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        n = self.n_states
        out = np.full(z.shape, self.D, dtype=complex)
        if n == 0:
            return out
        eye = np.eye(n)
        for i, zk in enumerate(z.flat):
            out.flat[i] += (self.C @ np.linalg.solve(zk * eye - self.A, self.B))[0, 0]
        return out

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B[:, 0].tolist(),
            "C": self.C[0].tolist(),
            "D": self.D,
            "F_dist": self.F_dist[:, 0].tolist(),
            "ts": self.ts,
        }


def realize(tf: TransferFunction, scaling=None, c_gain: float | None = None) -> StateSpaceModel:
    """Controllable-canonical realization of a delay-free transfer function.

    Parameters
    ----------
    tf : TransferFunction
        Proper transfer function. Its transport delay is not realized; callers
        model it separately as a FIFO.
    scaling : array_like, optional
        Diagonal similarity ``T``; the returned matrices are ``T^-1 A T``,
        ``T^-1 B``, ``C T``. Defaults to powers that reproduce the published
        sub-diagonal ``(2, 1, 0.5)`` for a fourth-order plant.
    c_gain : float, optional
        When the numerator has a single nonzero coefficient at ``z^-1`` the
        input/output gain split between B and C is arbitrary. If given, C is
        fixed to this value and B absorbs the rest.

    Returns
    -------
    StateSpaceModel
        Realization whose impulse response equals that of ``tf`` without delay.
    """
    n = tf.order
    m = tf.num.size - 1
    if m > n:
        raise ValueError("improper transfer function: numerator order exceeds denominator order")
    num = np.zeros(n + 1)
    num[: m + 1] = tf.num
    a = tf.den[1:]
    d = num[0]
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), d, None, tf.ts)
    # strictly proper remainder: b_k - d a_k, k = 1..n
    c = num[1:] - d * a
    A = np.zeros((n, n))
    A[0, :] = -a
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = c.reshape(1, n)
    if c_gain is not None:
        if np.count_nonzero(c[1:]) or c[0] == 0:
            raise ValueError("c_gain requires a numerator with only a z^-1 term")
        B[0, 0] = c[0] / c_gain
        C = np.zeros((1, n))
        C[0, 0] = c_gain
    if scaling is None:
        scaling = default_scaling(n)
    T = np.asarray(scaling, dtype=float)
    if T.shape != (n,) or np.any(T == 0):
        raise ValueError("scaling must be a nonzero vector of length n")
    A = A * T[None, :] / T[:, None]
    B = B / T[:, None]
    C = C * T[None, :]
    return StateSpaceModel(A, B, C, d, None, tf.ts)


def default_scaling(n: int) -> np.ndarray:
    """Diagonal similarity giving sub-diagonal ``2, 1, 0.5`` for ``n = 4``.

    With ``T = diag(t)`` the sub-diagonal entry ``i`` becomes ``t[i]/t[i+1]``.
    Other orders use unit scaling.
    """
    if n == 4:
        return np.array([1.0, 0.5, 0.5, 1.0])
    return np.ones(n)


def ss_to_tf(ss: StateSpaceModel) -> TransferFunction:
    """Transfer function of a realization, via its characteristic polynomial.

    The numerator follows from ``C adj(zI - A) B = det(zI - A + B C) - det(zI - A)``.
    """
    n = ss.n_states
    if n == 0:
        return TransferFunction([ss.D], [1.0], 0, ss.ts)
    den = np.real(np.poly(ss.A))
    num = np.real(np.poly(ss.A - ss.B @ ss.C)) - den
    num = num + ss.D * den
    den_coeffs = den / den[0]
    return TransferFunction(num / den[0], den_coeffs, 0, ss.ts)
