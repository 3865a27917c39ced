"""LQG/LTR synthesis for the delay-free design plant.

The design model is the identified plant without its transport delay,
realized in scaled controllable form and augmented with an integrator of the
measured output. The regulator and the Kalman predictor come from discrete
algebraic Riccati equations. The loop, sensitivity and margins are evaluated
on the delay-free loop, with the delayed loop reported alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import FrequencyResponse
from .lti import StateSpaceModel, TransferFunction, realize, ss_to_tf
from .plant import PRINTED_C0, default_plant_tf

__all__ = [
    "StateSpaceModel",
    "realize",
    "default_realization",
    "AugmentedModel",
    "augment",
    "solve_dare",
    "riccati_residual",
    "LqrDesign",
    "design_lqr",
    "KalmanDesign",
    "design_kalman",
    "compensator_ss",
    "compensator_tf",
    "sensitivity",
    "loop_response",
    "margin_grid",
    "MarginReport",
    "margins",
    "LtrPoint",
    "LtrSweep",
    "ltr_sweep",
    "closed_loop_eigenvalues",
    "LqgDesign",
    "synthesize",
]

DEFAULT_R = 1e6
DEFAULT_INTEGRATOR_COST = 1e3
DEFAULT_V = ((1e-1, 0.0), (0.0, 1e1))
DEFAULT_W = 1.0


class RiccatiError(ArithmeticError):
    """The Riccati iteration failed to converge or produced an invalid solution."""


def default_realization(tf: TransferFunction | None = None) -> StateSpaceModel:
    """Scaled controllable-form realization of the design plant.

    For a numerator of the form ``b z^-1`` the output row is fixed to the
    published ``C = [0.00297, 0, 0, 0]`` and ``B`` carries the remaining gain.
    """
    tf = default_plant_tf() if tf is None else tf
    plain = tf.without_delay()
    nz = np.flatnonzero(plain.num)
    c_gain = PRINTED_C0 if plain.order == 4 and nz.size == 1 and nz[0] == 1 else None
    return realize(plain, c_gain=c_gain)


@dataclass(frozen=True)
class AugmentedModel:
    """Plant plus an integrator ``z(k+1) = z(k) + y(k)`` of its output.

    The measured vector is ``[y, z]``; the integrator is the last state.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    ts: float
    n_plant: int

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def integrator_index(self) -> int:
        return self.n_plant

    @property
    def plant(self) -> StateSpaceModel:
        k = self.n_plant
        return StateSpaceModel(self.A[:k, :k], self.B[:k], self.C[:1, :k], 0.0, self.F[:k], self.ts)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B[:, 0].tolist(),
            "C": self.C.tolist(),
            "F": self.F[:, 0].tolist(),
            "ts": self.ts,
        }


def augment(ss: StateSpaceModel) -> AugmentedModel:
    """Append the output integrator to a strictly proper realization.

    Raises
    ------
    ValueError
        If the realization has direct feedthrough.
    """
    if ss.D != 0:
        raise ValueError("augmentation requires D = 0")
    n = ss.n_states
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = ss.A
    A[n, :n] = ss.C[0]
    A[n, n] = 1.0
    B = np.vstack([ss.B, [[0.0]]])
    F = np.vstack([ss.F_dist, [[0.0]]])
    C = np.zeros((2, n + 1))
    C[0, :n] = ss.C[0]
    C[1, n] = 1.0
    return AugmentedModel(A, B, C, F, ss.ts, n)


def _inf_norm(M) -> float:
    return float(np.max(np.sum(np.abs(M), axis=1))) if np.size(M) else 0.0


def riccati_residual(A, B, Q, R, P) -> np.ndarray:
    """``P - A'PA + A'PB (R + B'PB)^-1 B'PA - Q``."""
    A, B, Q, R, P = (np.atleast_2d(np.asarray(M, float)) for M in (A, B, Q, R, P))
    BtP = B.T @ P
    return P - A.T @ P @ A + (A.T @ P @ B) @ np.linalg.solve(R + BtP @ B, BtP @ A) - Q


def _doubling(A, G, H, tol, max_iter):
    """Structure-preserving doubling; ``H`` converges to the stabilizing solution."""
    n = A.shape[0]
    eye = np.eye(n)
    for it in range(1, max_iter + 1):
        M = np.linalg.solve(eye + G @ H, np.hstack([A, G]))
        W1, W2 = M[:, :n], M[:, n:]
        H_new = H + A.T @ H @ W1
        G_new = G + A @ W2 @ A.T
        A = A @ W1
        H_new = 0.5 * (H_new + H_new.T)
        G = 0.5 * (G_new + G_new.T)
        step = _inf_norm(H_new - H)
        H = H_new
        if not np.all(np.isfinite(H)):
            raise RiccatiError("doubling iteration diverged")
        if step <= tol * max(1.0, _inf_norm(H)):
            return H, it
    raise RiccatiError("doubling iteration did not converge")


def _recursion(A, B, Q, R, P, tol, max_iter, stall):
    best_step, best_P, since = np.inf, P, 0
    for _ in range(max_iter):
        BtP = B.T @ P
        P_new = Q + A.T @ P @ A - (A.T @ P @ B) @ np.linalg.solve(R + BtP @ B, BtP @ A)
        P_new = 0.5 * (P_new + P_new.T)
        step = float(np.max(np.abs(P_new - P).sum(axis=1)))
        P = P_new
        if not np.all(np.isfinite(P)):
            raise RiccatiError("Riccati recursion diverged")
        if step <= tol * max(1.0, float(np.max(np.abs(P).sum(axis=1)))):
            return P
        if stall is not None:
            if step < best_step:
                best_step, best_P, since = step, P, 0
            else:
                since += 1
                if since >= stall:
                    return best_P
    if stall is not None:
        return best_P
    raise RiccatiError("Riccati recursion did not converge")


def solve_dare(A, B, Q, R, method: str = "doubling", tol: float = 1e-12, max_iter: int = 1_000_000):
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Parameters
    ----------
    A, B, Q, R : array_like
        System and weights; ``R`` may be a scalar.
    method : {"doubling", "recursion"}
        ``"recursion"`` iterates ``P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA``
        from ``P = Q``. ``"doubling"`` reaches the same fixed point in a few
        dozen squarings and then finishes with the recursion, so the returned
        ``P`` is a fixed point of the recursion to working precision.
    tol : float
        Stop when ``||P_{k+1} - P_k||_inf <= tol * max(1, ||P||_inf)``.

    Returns
    -------
    P : numpy.ndarray
        Riccati solution.
    K : numpy.ndarray
        Gain ``(R + B'PB)^-1 B'PA``.

    Raises
    ------
    ValueError
        If ``R`` is not positive definite.
    RiccatiError
        On non-convergence, a relative residual above 1e-9 or an indefinite ``P``.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    if R.shape != (B.shape[1], B.shape[1]) or np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) <= 0):
        raise ValueError("R must be positive definite")
    with np.errstate(over="ignore", invalid="ignore"):
        P = _solve_dare_raw(A, B, Q, R, method, tol, max_iter)
    scale = max(1.0, _inf_norm(P))
    if not np.all(np.isfinite(P)):
        raise RiccatiError("Riccati iteration diverged")
    if _inf_norm(riccati_residual(A, B, Q, R, P)) > 1e-9 * scale:
        raise RiccatiError("Riccati residual exceeds tolerance")
    if np.min(np.linalg.eigvalsh(P)) < -1e-9 * scale:
        raise RiccatiError("Riccati solution is indefinite")
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return P, K


def _solve_dare_raw(A, B, Q, R, method, tol, max_iter):
    if method == "doubling":
        G = B @ np.linalg.solve(R, B.T)
        P, _ = _doubling(A.copy(), 0.5 * (G + G.T), Q.copy(), tol, 200)
        # polish towards the recursion's own fixed point; stop once the step
        # reaches the tolerance or stalls at the rounding floor
        P = _recursion(A, B, Q, R, P, tol, 20_000, stall=100)
    elif method == "recursion":
        P = _recursion(A, B, Q, R, Q.copy(), tol, max_iter, stall=None)
    else:
        raise ValueError("method must be 'doubling' or 'recursion'")
    return P


@dataclass(frozen=True)
class LqrDesign:
    """Regulator weights, gain ``K`` (1 x (n+1)) and Riccati solution."""

    Q: np.ndarray
    R: float
    K: np.ndarray
    P: np.ndarray

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "R": self.R, "K": self.K[0].tolist(), "P": self.P.tolist()}


def default_q(aug: AugmentedModel, integrator_cost: float = DEFAULT_INTEGRATOR_COST) -> np.ndarray:
    """Output weighting ``C'C`` normalised to a unit leading entry, plus integrator cost."""
    C = aug.C[0, : aug.n_plant]
    qp = np.outer(C, C)
    lead = np.max(np.abs(np.diag(qp)))
    Q = np.zeros((aug.n, aug.n))
    Q[: aug.n_plant, : aug.n_plant] = qp / lead if lead > 0 else qp
    Q[aug.n_plant, aug.n_plant] = integrator_cost
    return Q


def design_lqr(aug: AugmentedModel, Q=None, R: float = DEFAULT_R, **kwargs) -> LqrDesign:
    """Discrete LQR on the augmented model.

    Raises
    ------
    ValueError
        If ``R <= 0`` or ``Q`` is not symmetric positive semidefinite.
    RiccatiError
        If the resulting regulator is not stabilizing.
    """
    Q = default_q(aug) if Q is None else np.atleast_2d(np.asarray(Q, float))
    if not np.isscalar(R) and np.size(R) != 1:
        raise ValueError("R must be a scalar for the single-input plant")
    R = float(np.asarray(R).ravel()[0])
    if not R > 0:
        raise ValueError("R must be positive")
    if Q.shape != (aug.n, aug.n) or not np.allclose(Q, Q.T) or np.min(np.linalg.eigvalsh(Q)) < -1e-12:
        raise ValueError("Q must be a symmetric positive semidefinite (n+1)x(n+1) matrix")
    P, K = solve_dare(aug.A, aug.B, Q, R, **kwargs)
    if np.max(np.abs(np.linalg.eigvals(aug.A - aug.B @ K))) >= 1.0:
        raise RiccatiError("regulator is not stabilizing")
    return LqrDesign(Q, R, K, P)


@dataclass(frozen=True)
class KalmanDesign:
    """Steady-state Kalman filter.

    ``K_f`` is the one-step predictor gain ``A S C' (C S C' + V)^-1`` and
    ``M`` the filter (current-estimate) gain ``S C' (C S C' + V)^-1``.
    """

    W: float
    V: np.ndarray
    K_f: np.ndarray
    M: np.ndarray
    S: np.ndarray

    def to_dict(self) -> dict:
        return {"W": self.W, "V": self.V.tolist(), "K_f": self.K_f.tolist(), "M": self.M.tolist(), "S": self.S.tolist()}


def design_kalman(aug: AugmentedModel, W: float = DEFAULT_W, V=DEFAULT_V, **kwargs) -> KalmanDesign:
    """Kalman predictor through the dual Riccati equation.

    Raises
    ------
    ValueError
        If ``V`` is not positive definite or ``W`` is negative.
    RiccatiError
        If the observer is not strictly stable.
    """
    V = np.atleast_2d(np.asarray(V, float))
    if V.shape != (2, 2) or not np.allclose(V, V.T) or np.min(np.linalg.eigvalsh(V)) <= 0:
        raise ValueError("V must be a symmetric positive definite 2x2 matrix")
    W = float(W)
    if W < 0:
        raise ValueError("W must be non-negative")
    S, L = solve_dare(aug.A.T, aug.C.T, W * (aug.F @ aug.F.T), V, **kwargs)
    K_f = L.T
    M = S @ aug.C.T @ np.linalg.inv(aug.C @ S @ aug.C.T + V)
    if np.max(np.abs(np.linalg.eigvals(aug.A - K_f @ aug.C))) >= 1.0:
        raise RiccatiError("observer is not strictly stable")
    return KalmanDesign(W, V, K_f, M, S)


def compensator_ss(aug: AugmentedModel, K, K_f, observer: str = "predictor", M=None) -> StateSpaceModel:
    """Output-feedback compensator from ``dy'`` to ``-du``.

    The states are the estimate ``x_hat`` and the internal integral ``z'`` of
    the measurement, which feeds the second innovation channel.

    Parameters
    ----------
    observer : {"predictor", "current"}
        Predictor form uses ``u = -K x_hat``; current form first corrects the
        estimate with the filter gain ``M`` and so has direct feedthrough.
    """
    K = np.asarray(K, float).reshape(1, aug.n)
    K_f = np.asarray(K_f, float).reshape(aug.n, 2)
    n = aug.n
    A, B, C = aug.A, aug.B, aug.C
    Ac = np.zeros((n + 1, n + 1))
    Bc = np.zeros((n + 1, 1))
    Cc = np.zeros((1, n + 1))
    if observer == "predictor":
        Ac[:n, :n] = A - B @ K - K_f @ C
        Ac[:n, n] = K_f[:, 1]
        Bc[:n, 0] = K_f[:, 0]
        Cc[0, :n] = K[0]
        D = 0.0
    elif observer == "current":
        if M is None:
            raise ValueError("current observer needs the filter gain M")
        M = np.asarray(M, float).reshape(n, 2)
        # x_bar = x_hat + M (y - C x_hat); u = -K x_bar; x_hat+ = A x_bar + B u
        G = np.eye(n) - M @ C
        Ac[:n, :n] = (A - B @ K) @ G
        Ac[:n, n] = ((A - B @ K) @ M)[:, 1]
        Bc[:n, 0] = ((A - B @ K) @ M)[:, 0]
        Cc[0, :n] = (K @ G)[0]
        Cc[0, n] = (K @ M)[0, 1]
        D = float((K @ M)[0, 0])
    else:
        raise ValueError("observer must be 'predictor' or 'current'")
    Ac[n, n] = 1.0
    Bc[n, 0] = 1.0
    return StateSpaceModel(Ac, Bc, Cc, D, np.zeros((n + 1, 1)), aug.ts)


def compensator_tf(aug: AugmentedModel, K, K_f, observer: str = "predictor", M=None) -> TransferFunction:
    """SISO compensator ``C(z)`` from ``dy'`` to ``-du``."""
    return ss_to_tf(compensator_ss(aug, K, K_f, observer, M))


def _eval(model, freqs, ts):
    z = np.exp(2j * np.pi * np.asarray(freqs, float) * ts)
    if isinstance(model, TransferFunction):
        return model.evaluate(z)
    return model.evaluate(z)


def loop_response(C, H, grid) -> FrequencyResponse:
    """``L = C H`` on ``grid``; either factor may be a transfer function or realization."""
    grid = np.asarray(grid, float)
    return FrequencyResponse(grid, _eval(C, grid, C.ts) * _eval(H, grid, H.ts))


def sensitivity(C, H, grid) -> FrequencyResponse:
    """``S = 1 / (1 + C H)`` on ``grid`` (Hz)."""
    L = loop_response(C, H, grid)
    return FrequencyResponse(L.grid, 1.0 / (1.0 + L.value))


def margin_grid(f_s: float = 50_000.0, n: int = 4096, f_min: float = 0.1) -> np.ndarray:
    """Log-spaced grid from ``f_min`` to the Nyquist frequency inclusive."""
    return np.logspace(np.log10(f_min), np.log10(0.5 * f_s), n)


@dataclass(frozen=True)
class MarginReport:
    """Classical margins of a loop; ``None`` marks a missing crossing."""

    gain_margin: float | None
    phase_margin: float | None
    crossover: float | None
    phase_crossover: float | None
    sensitivity_peak: float

    def to_dict(self) -> dict:
        return {
            "gain_margin_db": self.gain_margin,
            "phase_margin_deg": self.phase_margin,
            "crossover_hz": self.crossover,
            "phase_crossover_hz": self.phase_crossover,
            "sensitivity_peak_db": self.sensitivity_peak,
        }


def _crossings(x, y, level, touch: float = 1e-9):
    """Interpolated abscissae where ``y`` crosses ``level``, with bracketing indices.

    Samples within ``touch`` of the level count as crossings, so a phase of
    exactly -180 deg at the Nyquist end is not lost to rounding.
    """
    d = y - level
    d = np.where(np.abs(d) <= touch, 0.0, d)
    out = []
    for i in range(d.size - 1):
        if d[i] == 0:
            out.append((x[i], i))
        elif d[i] * d[i + 1] < 0:
            t = d[i] / (d[i] - d[i + 1])
            out.append((x[i] + t * (x[i + 1] - x[i]), i))
    if d.size and d[-1] == 0:
        out.append((x[-1], d.size - 1))
    return out


def margins(L: FrequencyResponse) -> MarginReport:
    """Gain and phase margins of a loop response, interpolated in log frequency.

    The gain margin is the smallest ``-20 log10 |L|`` over the phase
    crossings of ``-180 deg (mod 360)``; the phase margin is the smallest
    ``180 + arg L`` over the unity-gain crossings.
    """
    f = L.grid
    lf = np.log10(np.maximum(f, 1e-300))
    mag_db = 20.0 * np.log10(np.abs(L.value))
    phase = np.degrees(np.unwrap(np.angle(L.value)))
    s_peak = float(np.max(-20.0 * np.log10(np.abs(1.0 + L.value))))

    pm = wc = None
    for x, i in _crossings(lf, mag_db, 0.0):
        j = min(i + 1, f.size - 1)
        t = 0.0 if j == i else (x - lf[i]) / (lf[j] - lf[i])
        ph = phase[i] + t * (phase[j] - phase[i])
        cand = (ph + 180.0 + 180.0) % 360.0 - 180.0
        if pm is None or cand < pm:
            pm, wc = float(cand), float(10**x)

    gm = wpc = None
    lo = np.floor((np.min(phase) + 180.0) / 360.0)
    hi = np.ceil((np.max(phase) + 180.0) / 360.0)
    for m in np.arange(lo, hi + 1):
        for x, i in _crossings(lf, phase, -180.0 + 360.0 * m):
            j = min(i + 1, f.size - 1)
            t = 0.0 if j == i else (x - lf[i]) / (lf[j] - lf[i])
            g = -(mag_db[i] + t * (mag_db[j] - mag_db[i]))
            if gm is None or g < gm:
                gm, wpc = float(g), float(10**x)
    return MarginReport(gm, pm, wc, wpc, s_peak)


@dataclass(frozen=True)
class LtrPoint:
    ratio: float
    kalman: KalmanDesign
    sensitivity: FrequencyResponse
    margins: MarginReport
    gap: float


@dataclass(frozen=True)
class LtrSweep:
    """LQG sensitivities over a ladder of noise ratios and the LQR limit."""

    reference: FrequencyResponse
    points: list = field(default_factory=list)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([p.gap for p in self.points])


def lqr_loop(aug: AugmentedModel, K, grid) -> FrequencyResponse:
    """Full-state loop ``K (zI - A)^-1 B`` broken at the plant input."""
    ss = StateSpaceModel(aug.A, aug.B, np.asarray(K, float).reshape(1, aug.n), 0.0, None, aug.ts)
    z = np.exp(2j * np.pi * np.asarray(grid, float) * aug.ts)
    return FrequencyResponse(grid, ss.evaluate(z))


def ltr_sweep(aug: AugmentedModel, lqr: LqrDesign, ratios, V=DEFAULT_V, grid=None) -> LtrSweep:
    """Kalman redesign for each ``W/V`` ratio and sup-norm gap to the LQR sensitivity.

    ``W`` is set to ``ratio * V[0, 0]``. The LQG loop is ``C(z) H(z)`` with
    the delay-free design plant.

    Raises
    ------
    ValueError
        If the ratios are not positive and strictly ascending.
    """
    ratios = [float(r) for r in ratios]
    if not ratios or any(r <= 0 for r in ratios) or any(b <= a for a, b in zip(ratios, ratios[1:])):
        raise ValueError("ratios must be positive and strictly ascending")
    V = np.atleast_2d(np.asarray(V, float))
    grid = margin_grid(1.0 / aug.ts) if grid is None else np.asarray(grid, float)
    L_ref = lqr_loop(aug, lqr.K, grid)
    S_ref = FrequencyResponse(grid, 1.0 / (1.0 + L_ref.value))
    H = aug.plant
    points = []
    for r in ratios:
        kd = design_kalman(aug, r * V[0, 0], V)
        C = compensator_ss(aug, lqr.K, kd.K_f)
        L = loop_response(C, H, grid)
        S = FrequencyResponse(grid, 1.0 / (1.0 + L.value))
        gap = float(np.max(np.abs(S.value - S_ref.value)))
        points.append(LtrPoint(r, kd, S, margins(L), gap))
    return LtrSweep(S_ref, points)


def closed_loop_eigenvalues(aug: AugmentedModel, K, K_f) -> np.ndarray:
    """Spectrum of the regulator and observer in state/error coordinates.

    The matrix ``[[A - BK, BK], [0, A - K_f C]]`` is block upper triangular.
    """
    K = np.asarray(K, float).reshape(1, aug.n)
    K_f = np.asarray(K_f, float).reshape(aug.n, 2)
    n = aug.n
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = aug.A - aug.B @ K
    M[:n, n:] = aug.B @ K
    M[n:, n:] = aug.A - K_f @ aug.C
    return np.linalg.eigvals(M)


@dataclass(frozen=True)
class LqgDesign:
    """Complete output-feedback design.

    ``margins`` refers to the delay-free design loop and
    ``margins_delayed`` to the loop including the plant's transport delay.
    """

    plant: TransferFunction
    ss: StateSpaceModel
    aug: AugmentedModel
    lqr: LqrDesign
    kalman: KalmanDesign
    compensator: TransferFunction
    margins: MarginReport
    margins_delayed: MarginReport
    stable: bool

    @property
    def K_DC(self) -> float:
        return self.plant.dc_gain()

    def sensitivity(self, grid=None, with_delay: bool = False) -> FrequencyResponse:
        grid = margin_grid(1.0 / self.aug.ts) if grid is None else grid
        H = self.plant if with_delay else self.plant.without_delay()
        return sensitivity(self.compensator, H, grid)

    def to_dict(self) -> dict:
        return {
            "plant": self.plant.to_dict(),
            "realization": self.ss.to_dict(),
            "augmented": self.aug.to_dict(),
            "lqr": self.lqr.to_dict(),
            "kalman": self.kalman.to_dict(),
            "compensator": self.compensator.to_dict(),
            "margins": self.margins.to_dict(),
            "margins_with_delay": self.margins_delayed.to_dict(),
            "closed_loop_spectral_radius": float(
                np.max(np.abs(closed_loop_eigenvalues(self.aug, self.lqr.K, self.kalman.K_f)))
            ),
            "stable": self.stable,
            "K_DC": self.K_DC,
        }


def synthesize(
    tf: TransferFunction | None = None,
    Q=None,
    R: float = DEFAULT_R,
    W: float = DEFAULT_W,
    V=DEFAULT_V,
    F=None,
    grid=None,
) -> LqgDesign:
    """Realize, augment and design the LQG compensator for a plant.

    Parameters
    ----------
    tf : TransferFunction, optional
        Plant with delay; the default identified plant when omitted.
    Q, R, W, V : optional
        Regulator and noise weights.
    F : array_like, optional
        Process-noise input vector in realization coordinates; ``B`` by default.
    """
    tf = default_plant_tf() if tf is None else tf
    ss = default_realization(tf)
    if F is not None:
        ss = StateSpaceModel(ss.A, ss.B, ss.C, ss.D, F, ss.ts)
    aug = augment(ss)
    lqr = design_lqr(aug, Q, R)
    kd = design_kalman(aug, W, V)
    comp = compensator_tf(aug, lqr.K, kd.K_f)
    grid = margin_grid(1.0 / tf.ts) if grid is None else grid
    comp_ss = compensator_ss(aug, lqr.K, kd.K_f)
    m = margins(loop_response(comp_ss, ss, grid))
    md = margins(loop_response(comp_ss, tf, grid))
    stable = bool(np.max(np.abs(closed_loop_eigenvalues(aug, lqr.K, kd.K_f))) < 1.0)
    return LqgDesign(tf, ss, aug, lqr, kd, comp, m, md, stable)
