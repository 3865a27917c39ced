"""System identification from simulated campaigns.

Covers delay estimation, Sanathanan-Koerner rational fitting of an empirical
frequency response, rational fitting of the static input nonlinearity and the
stepped-sine identification campaign itself.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dsp import AmSpec, FrequencyResponse, SteppedSineSpec, estimate_spectra, etfe, gen_stepped_sine
from .lti import TransferFunction
from .plant import PlantInstance, QuasiSteadyCurve, StaticNonlinearity

log = logging.getLogger(__name__)


class DelayEstimate(NamedTuple):
    lag: int
    confidence: float


def estimate_delay(u, y, max_lag: int | None = None, method: str = "arx", arx_order: int = 4) -> DelayEstimate:
    """Input-output delay in samples.

    Parameters
    ----------
    u, y : array_like
        Equal-length input and output records.
    max_lag : int, optional
        Largest lag searched; defaults to a quarter of the record.
    method : {"xcorr", "arx"}
        ``"xcorr"`` picks the lag of the largest input-output cross-correlation.
        ``"arx"`` (default) fits ``A(q) y(k) = b u(k - d)`` for each candidate
        ``d`` and picks the smallest residual. It finds the first sample that
        responds, whereas the cross-correlation of a smooth plant peaks at the
        maximum of its impulse response, well after the onset.

    Returns
    -------
    DelayEstimate
        Lag and a confidence ratio: peak over second-highest correlation for
        ``"xcorr"``, second-smallest over smallest residual for ``"arx"``.

    Raises
    ------
    ValueError
        If the correlation or residual curve is flat.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError("u and y must be 1-D sequences of equal length")
    n = u.size
    max_lag = n // 4 if max_lag is None else int(max_lag)
    if method == "xcorr":
        uc = u - u.mean()
        yc = y - y.mean()
        nfft = 1 << int(np.ceil(np.log2(2 * n)))
        r = np.fft.irfft(np.fft.rfft(yc, nfft) * np.conj(np.fft.rfft(uc, nfft)), nfft)[: max_lag + 1]
        mag = np.abs(r)
        order = np.argsort(mag)[::-1]
        peak = mag[order[0]]
        second = mag[order[1]] if mag.size > 1 else 0.0
        if peak <= 1e-300 or np.ptp(mag) <= 1e-12 * peak:
            raise ValueError("flat cross-correlation: no identifiable delay")
        conf = np.inf if second == 0 else float(peak / second)
        return DelayEstimate(int(order[0]), conf)
    if method == "arx":
        na = int(arx_order)
        start = max_lag + na
        if start >= n - 1:
            raise ValueError("record too short for the ARX delay search")
        target = y[start:]
        lagged_y = np.column_stack([y[start - i : n - i] for i in range(1, na + 1)]) if na else np.zeros((n - start, 0))
        res = np.empty(max_lag + 1)
        for d in range(max_lag + 1):
            X = np.column_stack([lagged_y, u[start - d : n - d]])
            coef, *_ = np.linalg.lstsq(X, target, rcond=None)
            res[d] = float(np.sum((target - X @ coef) ** 2))
        best = int(np.argmin(res))
        srt = np.sort(res)
        if srt[-1] - srt[0] <= 1e-12 * max(srt[-1], 1e-300):
            raise ValueError("flat residual curve: no identifiable delay")
        conf = np.inf if srt[0] == 0 else float(srt[1] / srt[0])
        return DelayEstimate(best, conf)
    raise ValueError("method must be 'xcorr' or 'arx'")


@dataclass(frozen=True)
class FitSpec:
    """Orders and options of a rational frequency-domain fit.

    ``num_order`` and ``den_order`` are polynomial degrees in ``z^-1``. The
    numerator coefficients from ``z^-num_lead`` up to ``z^-num_order`` are
    fitted and lower powers are held at zero; ``num_lead = 1`` gives the
    ``b z^-1`` structure of a sampled strictly proper plant.
    ``delay`` is a fixed sample count or ``"estimate"`` to search
    ``0..max_delay`` for the smallest residual.
    """

    num_order: int = 1
    den_order: int = 4
    num_lead: int = 0
    delay: int | str = "estimate"
    weighting: np.ndarray | None = None
    max_iterations: int = 50
    tolerance: float = 1e-10
    force_stable: bool = False
    max_delay: int = 100

    def __post_init__(self):
        if self.num_order < 0 or self.den_order < 0:
            raise ValueError("orders must be non-negative")
        if not 0 <= self.num_lead <= self.num_order:
            raise ValueError("num_lead must lie in [0, num_order]")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.delay != "estimate" and (int(self.delay) != self.delay or self.delay < 0):
            raise ValueError("delay must be a non-negative integer or 'estimate'")


@dataclass(frozen=True)
class FitResult:
    """Fitted transfer function and fit diagnostics.

    ``residual`` is the weighted RMS of the complex relative error expressed in
    dB, ``20 log10(1 + |G_fit - G| / |G|)``, over the fitted bins.
    """

    tf: TransferFunction
    residual: float
    converged: bool
    stable: bool
    iterations: int

    def to_dict(self) -> dict:
        d = self.tf.to_dict()
        d.update(residual=self.residual, converged=self.converged, stable=self.stable, iterations=self.iterations)
        return d


def _sk_fit(zinv, G, w, lead, nb, na, max_iter, tol):
    """Sanathanan-Koerner iterations; returns ``(b, a, iterations, converged)``."""
    # basis columns: z^-i G for the denominator, -z^-j for the numerator
    pa = np.stack([zinv**i for i in range(1, na + 1)], axis=1) if na else np.zeros((G.size, 0))
    pb = np.stack([zinv**j for j in range(lead, nb + 1)], axis=1)
    M = np.hstack([pa * G[:, None], -pb])
    rhs = -G
    prev_den = np.ones(G.size, dtype=complex)
    theta = None
    for it in range(1, max_iter + 1):
        wt = w / np.abs(prev_den)
        Mw = M * wt[:, None]
        X = np.vstack([Mw.real, Mw.imag])
        r = np.concatenate([(rhs * wt).real, (rhs * wt).imag])
        scale = np.linalg.norm(X, axis=0)
        if np.any(scale == 0):
            raise np.linalg.LinAlgError("singular normal equations: zero basis column")
        sol, _, rank, sv = np.linalg.lstsq(X / scale, r, rcond=None)
        if rank < X.shape[1]:
            raise np.linalg.LinAlgError("singular normal equations: rank-deficient fit")
        new = sol / scale
        a = new[:na]
        prev_den = 1.0 + (pa @ a if na else 0.0)
        if theta is not None and np.max(np.abs(new - theta)) <= tol * max(np.max(np.abs(new)), 1e-300):
            theta = new
            return theta[na:], theta[:na], it, True
        theta = new
    return theta[na:], theta[:na], max_iter, False


def _refit_numerator(zinv, G, w, lead, nb, den):
    pb = np.stack([zinv**j for j in range(lead, nb + 1)], axis=1)
    d = np.polyval(den[::-1], zinv)
    target = G * d
    X = pb * w[:, None]
    A = np.vstack([X.real, X.imag])
    r = np.concatenate([(target * w).real, (target * w).imag])
    return np.linalg.lstsq(A, r, rcond=None)[0]


def _residual_db(tf, resp, w):
    model = tf.without_delay().evaluate(np.exp(2j * np.pi * resp.grid * tf.ts)) * np.exp(
        -2j * np.pi * resp.grid * tf.ts * tf.delay
    )
    rel = np.abs(model - resp.value) / np.abs(resp.value)
    err = 20.0 * np.log10(1.0 + rel)
    ww = w / np.sum(w)
    return float(np.sqrt(np.sum(ww * err**2)))


def _fit_fixed_delay(resp, spec, delay, ts):
    zinv = np.exp(-2j * np.pi * resp.grid * ts)
    G = resp.value * zinv ** (-delay)
    w = np.ones(G.size) / np.abs(G) if spec.weighting is None else np.asarray(spec.weighting, float)
    b, a, iters, conv = _sk_fit(
        zinv, G, w, spec.num_lead, spec.num_order, spec.den_order, spec.max_iterations, spec.tolerance
    )
    den = np.r_[1.0, a]
    stable = bool(np.all(np.abs(np.roots(den)) < 1.0)) if spec.den_order else True
    if not stable and spec.force_stable:
        roots = np.roots(den)
        roots = np.where(np.abs(roots) >= 1.0, 1.0 / np.conj(roots), roots)
        den = np.real(np.poly(roots))
        b = _refit_numerator(zinv, G, w, spec.num_lead, spec.num_order, den)
        stable = True
    tf = TransferFunction(np.r_[np.zeros(spec.num_lead), b], den, delay, ts)
    return FitResult(tf, _residual_db(tf, resp, w), conv, stable, iters)


def fit_rational_tf(resp: FrequencyResponse, spec: FitSpec = FitSpec(), ts: float = 1.0 / 50_000.0) -> FitResult:
    """Fit ``z^-d B(z^-1)/A(z^-1)`` to a frequency response.

    Each Sanathanan-Koerner iteration solves the linear least-squares problem
    ``min sum |w (A G - B)|^2 / |A_prev|^2`` over the bins, which converges to
    the output-error fit. With ``spec.delay == "estimate"`` every integer delay
    up to ``spec.max_delay`` is tried and the smallest residual wins.

    Raises
    ------
    ValueError
        If there are too few bins.
    RuntimeError
        If the iteration does not converge within ``max_iterations``.
    numpy.linalg.LinAlgError
        If the normal equations are singular.
    """
    n_par = spec.num_order - spec.num_lead + spec.den_order + 1
    if resp.grid.size < n_par:
        raise ValueError("fewer valid bins than fitted parameters")
    if spec.delay == "estimate":
        best = None
        for d in range(spec.max_delay + 1):
            try:
                res = _fit_fixed_delay(resp, spec, d, ts)
            except np.linalg.LinAlgError:
                continue
            if res.converged and (best is None or res.residual < best.residual):
                best = res
        if best is None:
            raise RuntimeError("no delay candidate produced a converged fit")
        result = best
    else:
        result = _fit_fixed_delay(resp, spec, int(spec.delay), ts)
    if not result.converged:
        raise RuntimeError(f"fit did not converge within {spec.max_iterations} iterations")
    return result


def fit_nonlinearity(ramp_input, response_rms, order=(2, 2), x_max: float | None = None) -> StaticNonlinearity:
    """Rational fit of the static input map from a slow amplitude ramp.

    Fits ``F(x) = (p_1 x + ... + p_p x^p) / (1 + q_1 x + ... + q_q x^q)`` by
    linear least squares on ``F Q - P = 0``. The data are cropped at the first
    sample where the response stops increasing.

    Raises
    ------
    ValueError
        If fewer than ``p + q + 1`` points survive cropping.
    """
    x = np.asarray(ramp_input, dtype=float)
    y = np.asarray(response_rms, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("ramp_input and response_rms must be equal-length 1-D arrays")
    idx = np.argsort(x, kind="stable")
    x, y = x[idx], y[idx]
    drops = np.nonzero(np.diff(y) <= 0)[0]
    if drops.size:
        x, y = x[: drops[0] + 1], y[: drops[0] + 1]
    p, q = int(order[0]), int(order[1])
    if x.size < p + q + 1:
        raise ValueError("too few monotone points to fit the requested order")
    cols = [x**k for k in range(1, p + 1)] + [-(y * x**k) for k in range(1, q + 1)]
    X = np.column_stack(cols)
    scale = np.linalg.norm(X, axis=0)
    scale[scale == 0] = 1.0
    sol = np.linalg.lstsq(X / scale, y, rcond=None)[0] / scale
    num = (0.0, *sol[:p])
    den = (1.0, *sol[p:])
    return StaticNonlinearity(num, den, float(x[-1]) if x_max is None else x_max)


@dataclass(frozen=True)
class CampaignResult:
    """Per-step ETFE of an identification campaign.

    ``response`` is referred to the uncompensated modulation ``A sin`` in
    model units, so it estimates the plant transfer function directly.
    """

    response: FrequencyResponse
    input: np.ndarray
    output: np.ndarray


def run_identification_campaign(
    plant: PlantInstance,
    protocol: SteppedSineSpec = SteppedSineSpec(A=0.3),
    am: AmSpec = AmSpec(),
    psi_compensation: QuasiSteadyCurve | None = None,
    segment_length: int = 2**15,
    settle: float = 0.1,
    deembed_sensor: bool = True,
    keep_records: bool = False,
) -> FrequencyResponse | CampaignResult:
    """Stepped-sine campaign on the simulated plant.

    The modulation ``g_m`` is the stepped sine, optionally scaled per step by
    ``1/psi_D(f)``. The drive envelope is ``F^-1{g_m + B}``, so the plant's
    own nonlinearity is cancelled. For each step the first ``settle`` seconds
    are discarded and the ETFE is read at the bin of peak input power, then
    assigned to the exact tone frequency. With ``deembed_sensor`` the known
    anti-alias filter response is divided out, as for a calibrated sensor.

    Raises
    ------
    ValueError
        On zero modulation amplitude or an envelope outside the invertible
        range.
    """
    if protocol.A == 0:
        raise ValueError("no excitation energy: modulation amplitude is zero")
    ss = plant.sample_spec
    freqs = protocol.frequencies
    amps = np.full(freqs.size, protocol.A)
    if psi_compensation is not None:
        amps = amps / psi_compensation(freqs)
    g_m = gen_stepped_sine(protocol, ss, amplitudes=amps)
    envelope = plant.nonlinearity.inverse(g_m + am.B, clamp=False)
    log.info("identification campaign: %d samples", g_m.size)
    y = plant.simulate(envelope)
    reference = gen_stepped_sine(protocol, ss) * plant.units_per_volt
    n_dwell = protocol.dwell_samples(ss)
    skip = ss.samples(settle)
    values = np.empty(freqs.size, dtype=complex)
    for i, f in enumerate(freqs):
        sl = slice(i * n_dwell + skip, (i + 1) * n_dwell)
        est = estimate_spectra(reference[sl], y[sl], segment_length, ss)
        k = int(np.argmax(est.Phi_uu))
        g = etfe(est)
        values[i] = g.value[np.searchsorted(g.grid, est.grid[k])]
    if deembed_sensor:
        values = values / plant.sensor_response(freqs)
    resp = FrequencyResponse(freqs, values)
    if keep_records:
        return CampaignResult(resp, reference, y)
    return resp
