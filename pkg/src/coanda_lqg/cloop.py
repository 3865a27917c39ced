"""Closed-loop runtime and experiments.

The control law follows the implemented form: an observer driven by the
measured deviation and an internally integrated copy of it, state feedback,
a feed-forward term from the model DC gain, saturation of the command and an
anti-windup correction on the integrator. Commands are in volts of
linearised drive. The observer works in the plant's model units.

Ensembles run as one batch: every array carries a leading member axis and
each member draws noise from its own spawned stream.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import signal

from .control import AugmentedModel, LqgDesign
from .dsp import SampleSpec, ensemble_average, notch_filter
from .lti import batch_matmul
from .plant import NoiseSpec, PlantInstance

log = logging.getLogger(__name__)

POST_NOTCHES = ((2750.0, 30.0), (650.0, 2.0))


@dataclass(frozen=True)
class ControlLawConfig:
    """Gains and limits of the implemented control law.

    Parameters
    ----------
    K_LQR, K_f : numpy.ndarray
        Regulator gain (1 x n) and observer gain (n x 2) in model units.
    aug : AugmentedModel
        Design model used by the observer.
    alpha : float
        Feed-forward gain.
    K_DC : float
        Model DC gain in Pa per volt.
    X_unforced : float
        Output with no excitation, Pa.
    r : float
        Reference, Pa.
    sat_lo, sat_hi : float
        Command limits in volts.
    K_AW : float
        Anti-windup gain on the saturation excess in model units.
    units_per_volt : float
        Model units per volt.
    observer : {"predictor", "current"}
        Observer form; the current form also needs the filter gain ``M``.
    """

    K_LQR: np.ndarray
    K_f: np.ndarray
    aug: AugmentedModel
    alpha: float = 1.0
    K_DC: float = 202.5
    X_unforced: float = 0.0
    r: float = 0.0
    sat_lo: float = 0.0
    sat_hi: float = 0.8
    K_AW: float = 1e-5
    units_per_volt: float = 1000.0
    observer: str = "predictor"
    M: np.ndarray | None = None

    def __post_init__(self):
        if not self.sat_lo < self.sat_hi:
            raise ValueError("sat_lo must be below sat_hi")
        if self.K_AW < 0:
            raise ValueError("K_AW must be non-negative")
        if self.K_DC == 0:
            raise ValueError("K_DC must be nonzero")
        if self.observer not in ("predictor", "current"):
            raise ValueError("observer must be 'predictor' or 'current'")
        if self.observer == "current" and self.M is None:
            raise ValueError("current observer needs the filter gain M")

    @classmethod
    def from_design(cls, design: LqgDesign, units_per_volt: float = 1000.0, **kwargs) -> ControlLawConfig:
        return cls(
            K_LQR=design.lqr.K,
            K_f=design.kalman.K_f,
            aug=design.aug,
            K_DC=design.K_DC * units_per_volt,
            units_per_volt=units_per_volt,
            M=design.kalman.M,
            **kwargs,
        )

    def feed_forward(self, r) -> np.ndarray:
        return self.alpha * (np.asarray(r, dtype=float) - self.X_unforced) / self.K_DC


@dataclass
class LoopState:
    """Controller memory for every ensemble member."""

    x_hat: np.ndarray
    z: np.ndarray
    u_prev: np.ndarray
    saturation_active: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_members: int = 1) -> LoopState:
        return cls(
            np.zeros((n_members, n_states)),
            np.zeros(n_members),
            np.zeros(n_members),
            np.zeros(n_members, dtype=bool),
        )

    @property
    def z_hat(self) -> np.ndarray:
        return self.x_hat[:, -1]


class ControlOutput(NamedTuple):
    drive: np.ndarray
    g_m: np.ndarray
    g_m_prime: np.ndarray
    saturated: np.ndarray


def control_step(
    state: LoopState,
    measurement,
    cfg: ControlLawConfig,
    aug: AugmentedModel | None = None,
    r=None,
    feed_forward: bool | np.ndarray = True,
    feedback: bool = True,
) -> tuple[ControlOutput, LoopState]:
    """One sample of the control law; updates ``state`` in place.

    Parameters
    ----------
    state : LoopState
        Observer estimate, measurement integral and saturation memory.
    measurement : array_like
        Deviation ``dy' = y' - r`` in Pa for each member.
    cfg : ControlLawConfig
        Gains and limits.
    aug : AugmentedModel, optional
        Overrides ``cfg.aug``.
    r : array_like, optional
        Reference for the feed-forward term; ``cfg.r`` when omitted.
    feed_forward : bool or array of bool
        Whether ``u_FF`` is applied (per member when an array).
    feedback : bool
        With ``False`` the loop is open: only ``u_FF`` is applied.

    Returns
    -------
    ControlOutput
        Saturated drive ``H{g_m'}``, feedback ``g_m``, command ``g_m'`` and
        saturation flags, all in volts.
    LoopState
        The same object, advanced to the next sample.
    """
    aug = cfg.aug if aug is None else aug
    dy = np.asarray(measurement, dtype=float)
    r = cfg.r if r is None else r
    u_ff = cfg.alpha * (r - cfg.X_unforced) / cfg.K_DC
    if feed_forward is not True:
        u_ff = u_ff * np.asarray(feed_forward, dtype=float)
    upv = cfg.units_per_volt
    if feedback:
        x = state.x_hat
        innov_y = (dy - batch_matmul(x, aug.C[0]))[:, None]
        innov_z = (state.z - x[:, -1])[:, None]
        if cfg.observer == "current":
            x = x + innov_y * cfg.M[:, 0] + innov_z * cfg.M[:, 1]
        g_m = -batch_matmul(x, cfg.K_LQR[0]) / upv
    else:
        g_m = np.zeros_like(dy)
    g_mp = g_m + u_ff
    drive = np.clip(g_mp, cfg.sat_lo, cfg.sat_hi)
    sat = drive != g_mp
    if feedback:
        du = ((drive - u_ff) * upv)[:, None]
        x_next = batch_matmul(x, aug.A.T) + du * aug.B[:, 0]
        if cfg.observer == "predictor":
            x_next += innov_y * cfg.K_f[:, 0] + innov_z * cfg.K_f[:, 1]
        state.x_hat = x_next
        # correction moves z so that its feedback shrinks the saturation excess
        k_z = cfg.K_LQR[0, -1]
        state.z = state.z + dy + np.sign(k_z) * cfg.K_AW * (g_mp - drive) * upv
    state.u_prev = drive
    state.saturation_active = sat
    return ControlOutput(drive, g_m, g_mp, sat), state


@dataclass(frozen=True)
class LoopTrace:
    """Time-aligned record of a closed-loop run (ensemble mean when batched).

    ``y`` is the measured output; ``dy_meas`` its deviation from ``r``.
    ``sat_flag`` is the fraction of members saturated at each sample.
    """

    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    dy_meas: np.ndarray
    g_m: np.ndarray
    g_m_prime: np.ndarray
    drive: np.ndarray
    sat_flag: np.ndarray
    z_hat: np.ndarray
    x_hat: np.ndarray
    drive_min: float = 0.0
    drive_max: float = 0.0
    z_hat_abs_max: np.ndarray | None = None

    @property
    def ts(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def with_output(self, y) -> LoopTrace:
        y = np.asarray(y, dtype=float)
        return replace(self, y=y, dy_meas=y - self.r)


_REC_FIELDS = ("y", "dy_meas", "g_m", "g_m_prime", "drive", "sat_flag", "z_hat")


def _member_mean(arr: np.ndarray) -> np.ndarray:
    # first member plus mean deviation: bitwise exact when members agree
    return arr[0] + np.mean(arr - arr[0], axis=0)


def run_loop(
    plant: PlantInstance,
    cfg: ControlLawConfig,
    duration: float,
    reference=None,
    n_members: int = 1,
    feedback: bool = True,
    ff_off_time: float | None = None,
    keep_members: bool = False,
):
    """Simulate the loop from rest.

    Parameters
    ----------
    plant : PlantInstance
        Reset to ``n_members`` members before the run.
    cfg : ControlLawConfig
        Control law.
    duration : float
        Seconds.
    reference : callable or array_like, optional
        ``r(t)`` per sample (array over time, optionally per member) or a
        function of the time vector; constant ``cfg.r`` by default.
    feedback : bool
        ``False`` runs the open loop on feed-forward alone.
    ff_off_time : float, optional
        Time at which the feed-forward term is removed.
    keep_members : bool
        Also return the per-member measured output, shape ``(n, members)``.

    Returns
    -------
    LoopTrace or (LoopTrace, numpy.ndarray)
    """
    ts = plant.dynamics.ts
    n = int(round(duration / ts))
    t = np.arange(n) * ts
    if reference is None:
        r_t = np.full(n, float(cfg.r))
    elif callable(reference):
        r_t = np.asarray(reference(t), dtype=float)
    else:
        r_t = np.asarray(reference, dtype=float)
    if r_t.shape[0] != n:
        raise ValueError("reference must have one entry per sample")
    r_per_member = r_t.ndim == 2
    plant.reset(n_members)
    state = LoopState.zeros(cfg.aug.n, n_members)
    ff_on = np.ones(n, dtype=bool)
    if ff_off_time is not None:
        ff_on[t >= ff_off_time - 0.5 * ts] = False
    nl = plant.nonlinearity
    rec = np.empty((n, len(_REC_FIELDS)))
    x_rec = np.empty((n, cfg.aug.n))
    y_members = np.empty((n, n_members)) if keep_members else None
    d_lo, d_hi = math.inf, -math.inf
    z_abs = np.empty(n)
    block = np.empty((n_members, len(_REC_FIELDS)))
    single = n_members == 1
    for k in range(n):
        rk = r_t[k]
        y = plant.measure()
        dy = y - rk
        out, state = control_step(state, dy, cfg, r=rk, feed_forward=ff_on[k], feedback=feedback)
        plant.advance(nl.inverse(out.drive, clamp=True))
        block[:, 0] = y
        block[:, 1] = dy
        block[:, 2] = out.g_m
        block[:, 3] = out.g_m_prime
        block[:, 4] = out.drive
        block[:, 5] = out.saturated
        block[:, 6] = state.x_hat[:, -1]
        if single:
            rec[k] = block[0]
            x_rec[k] = state.x_hat[0]
        else:
            rec[k] = _member_mean(block)
            x_rec[k] = _member_mean(state.x_hat)
        d_lo = min(d_lo, float(out.drive.min()))
        d_hi = max(d_hi, float(out.drive.max()))
        z_abs[k] = float(np.max(np.abs(state.x_hat[:, -1])))
        if keep_members:
            y_members[k] = y
    r_mean = r_t.mean(axis=1) if r_per_member else r_t
    trace = LoopTrace(
        t, r_mean, rec[:, 0], rec[:, 1], rec[:, 2], rec[:, 3], rec[:, 4], rec[:, 5], rec[:, 6], x_rec,
        d_lo, d_hi, z_abs,
    )
    if keep_members:
        return trace, y_members
    return trace


def postprocess(y, sample_spec: SampleSpec = SampleSpec(), notches=POST_NOTCHES) -> np.ndarray:
    """Zero-phase notch filtering of an averaged trace (offline post-processing)."""
    y = np.asarray(y, dtype=float)
    for f0, q in notches:
        nf = notch_filter(f0, q, sample_spec)
        y = signal.filtfilt(nf.b, nf.a, y, method="gust")
    return y


@dataclass(frozen=True)
class ExperimentMetrics:
    """Response metrics; ``None`` marks a quantity that does not exist."""

    rise_time: float | None = None
    recovery_time: float | None = None
    steady_state_error: float | None = None
    response_time_variation: float | None = None

    def to_dict(self) -> dict:
        return {
            "rise_time": self.rise_time,
            "recovery_time": self.recovery_time,
            "steady_state_error": self.steady_state_error,
            "response_time_variation": self.response_time_variation,
        }


def _first_crossing(t, y, level, rising):
    above = y >= level if rising else y <= level
    idx = np.flatnonzero(above)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return float(t[0])
    y0, y1 = y[i - 1], y[i]
    frac = 0.0 if y1 == y0 else (level - y0) / (y1 - y0)
    return float(t[i - 1] + frac * (t[i] - t[i - 1]))


def band_entry_time(t, y, target, half_width, persist):
    """Start of the first run inside ``target +- half_width`` lasting ``persist`` s.

    A run still open at the end of the record must itself span ``persist``.
    Returns ``None`` if no such run exists.
    """
    inside = np.abs(np.asarray(y) - target) <= half_width
    if not np.any(inside):
        return None
    ts = t[1] - t[0] if t.size > 1 else 1.0
    need = int(math.ceil(persist / ts - 1e-9))
    edges = np.diff(np.r_[0, inside.astype(np.int8), 0])
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    for s, e in zip(starts, ends):
        if e - s >= need:
            return float(t[s])
    return None


def compute_metrics(
    trace,
    r=None,
    event_time: float = 0.0,
    y_initial: float | None = None,
    band: float = 0.05,
    band_scale: float | None = None,
    persist: float = 0.010,
    target: float | None = None,
) -> ExperimentMetrics:
    """Rise, recovery and steady-state error of a response.

    Parameters
    ----------
    trace : LoopTrace or tuple of (t, y)
        Response record.
    r : float
        Final reference; the last reference value of the trace by default.
    event_time : float
        Time of the step or disturbance.
    y_initial : float, optional
        Level before the event; the mean output before it by default.
    band, band_scale : float
        Recovery band half-width is ``band * band_scale``; ``band_scale``
        defaults to the step size ``|r - y_initial|``.
    persist : float
        Seconds the response must stay inside the band.
    target : float, optional
        Level the band is centred on; ``r`` by default.

    Notes
    -----
    Rise time is the interval between the first 10 % and 90 % crossings of the
    step after the event, floored at one sample. It is absent when the output
    never reaches 90 %. Steady-state error is the mean error over the final
    20 % of the record.
    """
    if isinstance(trace, LoopTrace):
        t, y = trace.t, trace.y
        r = float(trace.r[-1]) if r is None else float(r)
    else:
        t, y = (np.asarray(a, dtype=float) for a in trace)
        if r is None:
            raise ValueError("r is required for a bare (t, y) trace")
        r = float(r)
    if t.size < 2:
        raise ValueError("trace too short")
    ts = float(t[1] - t[0])
    target = r if target is None else float(target)
    after = t >= event_time - 0.5 * ts
    if not np.any(after):
        raise ValueError("trace does not include the event time")
    if y_initial is None:
        before = ~after
        y_initial = float(np.mean(y[before])) if np.any(before) else float(y[0])
    step = target - y_initial
    ta, ya = t[after], y[after]
    rise = None
    if step != 0:
        rising = step > 0
        t10 = _first_crossing(ta, ya, y_initial + 0.1 * step, rising)
        t90 = _first_crossing(ta, ya, y_initial + 0.9 * step, rising)
        if t10 is not None and t90 is not None:
            rise = max(ts, t90 - t10)
    scale = abs(step) if band_scale is None else abs(band_scale)
    entry = band_entry_time(ta, ya, target, band * scale, persist) if scale > 0 else None
    recovery = None if entry is None else max(0.0, entry - event_time)
    tail = y[int(math.floor(0.8 * y.size)) :]
    sse = float(np.mean(tail) - target)
    return ExperimentMetrics(rise, recovery, sse, None)


@dataclass(frozen=True)
class StepResult:
    trace: LoopTrace
    filtered: np.ndarray
    metrics: ExperimentMetrics


def run_step_experiment(
    plant: PlantInstance,
    cfg: ControlLawConfig,
    n_ensemble: int = 50,
    seed: int | None = None,
    r_from: float = 0.0,
    r_to: float = 74.0,
    t_step: float = 0.01,
    duration: float = 0.1,
    notch: bool = True,
) -> StepResult:
    """Reference step, ensemble averaged and notch filtered.

    Parameters
    ----------
    seed : int, optional
        Overrides the plant's noise seed.
    """
    if seed is not None:
        plant = replace(plant, noise=replace(plant.noise, seed=int(seed)))
    ts = plant.dynamics.ts
    reference = lambda t: np.where(t >= t_step - 0.5 * ts, r_to, r_from)  # noqa: E731
    trace = run_loop(plant, cfg, duration, reference, n_ensemble)
    filtered = postprocess(trace.y, plant.sample_spec) if notch else trace.y
    metrics = compute_metrics((trace.t, filtered), r_to, event_time=t_step, y_initial=r_from)
    return StepResult(trace.with_output(filtered), filtered, metrics)


@dataclass(frozen=True)
class DisturbanceResult:
    """Closed- and open-loop responses to removal of the feed-forward term.

    ``open_loop_settling`` is the time the open loop takes to settle at its
    unforced level, the open-loop response time.
    """

    closed: LoopTrace
    open: LoopTrace
    closed_metrics: ExperimentMetrics
    open_metrics: ExperimentMetrics
    open_loop_settling: float | None
    mean_drive: float
    reachable: bool


def _grouped_average(y_members, n_groups, sample_spec, notch):
    groups = np.split(y_members, n_groups, axis=1)
    averaged = []
    for g in groups:
        m = ensemble_average(g.T)
        averaged.append(postprocess(m, sample_spec) if notch else m)
    return ensemble_average(averaged)


def run_input_disturbance(
    plant: PlantInstance,
    cfg: ControlLawConfig,
    r: float = 50.0,
    t_disturbance: float = 0.5,
    duration: float = 0.7,
    n_ensemble: int = 50,
    repeats: int = 6,
    seed: int | None = None,
    notch: bool = True,
) -> DisturbanceResult:
    """Feed-forward removal while tracking ``r``, closed and open loop.

    The loop starts from rest with reference ``r`` and settles before the
    feed-forward term is zeroed at ``t_disturbance``. Each of ``repeats``
    groups of ``n_ensemble`` members is averaged and notch filtered, then the
    groups are averaged.
    """
    if seed is not None:
        plant = replace(plant, noise=replace(plant.noise, seed=int(seed)))
    cfg = replace(cfg, r=r)
    m = n_ensemble * repeats
    results = []
    for fb in (True, False):
        trace, ym = run_loop(plant, cfg, duration, None, m, feedback=fb, ff_off_time=t_disturbance, keep_members=True)
        y = _grouped_average(ym, repeats, plant.sample_spec, notch)
        results.append(trace.with_output(y))
    closed, opened = results
    scale = abs(r - cfg.X_unforced)
    cm = compute_metrics(closed, r, t_disturbance, y_initial=r, band_scale=scale)
    om = compute_metrics(opened, r, t_disturbance, y_initial=r, band_scale=scale)
    settle = band_entry_time(
        opened.t[opened.t >= t_disturbance], opened.y[opened.t >= t_disturbance], cfg.X_unforced, 0.05 * scale, 0.010
    )
    settle = None if settle is None else settle - t_disturbance
    window = (closed.t >= t_disturbance - 0.1) & (closed.t < t_disturbance)
    mean_drive = float(np.mean(closed.drive[window]))
    steady_err = abs(float(np.mean(closed.y[window])) - r)
    reachable = bool(np.mean(closed.sat_flag[window]) < 0.5 and steady_err <= 0.05 * scale)
    return DisturbanceResult(closed, opened, cm, om, settle, mean_drive, reachable)


@dataclass(frozen=True)
class FlowSweepResult:
    """Mean steady drive and normalised response times across flow rates."""

    flow_rates: np.ndarray
    dc_gain: np.ndarray
    mean_input: np.ndarray
    reachable: np.ndarray
    closed_recovery: np.ndarray
    open_response: np.ndarray
    closed_normalized: np.ndarray
    open_normalized: np.ndarray
    closed_spread: float
    open_spread: float


def _spread(x):
    x = x[np.isfinite(x)]
    return float(np.max(x) - np.min(x)) if x.size else math.nan


def run_flowrate_sweep(
    bank: dict,
    cfg: ControlLawConfig,
    r: float = 50.0,
    n_ensemble: int = 1,
    repeats: int = 1,
    t_disturbance: float = 0.5,
    duration: float = 0.7,
    threads: int = 1,
) -> FlowSweepResult:
    """Disturbance experiment on every plant of a bank with one fixed controller.

    Unreachable plants get ``NaN`` entries and are excluded from the curves
    and spreads. Response times are normalised to the 40 lpm plant.
    """
    rates = sorted(bank)
    if 40.0 not in rates:
        raise ValueError("bank must contain the 40 lpm design plant")

    def one(q):
        return run_input_disturbance(bank[q], cfg, r, t_disturbance, duration, n_ensemble, repeats)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(one, rates))
    else:
        res = [one(q) for q in rates]
    reach = np.array([x.reachable for x in res])
    mean_in = np.array([x.mean_drive if x.reachable else math.nan for x in res])
    closed = np.array(
        [x.closed_metrics.recovery_time if x.reachable and x.closed_metrics.recovery_time is not None else math.nan for x in res]
    )
    opened = np.array([x.open_loop_settling if x.reachable and x.open_loop_settling is not None else math.nan for x in res])
    i40 = rates.index(40.0)
    cn = closed / closed[i40]
    on = opened / opened[i40]
    gains = np.array([bank[q].K_DC_volts for q in rates])
    return FlowSweepResult(
        np.array(rates), gains, mean_in, reach, closed, opened, cn, on, _spread(cn), _spread(on)
    )
