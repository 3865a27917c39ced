"""Simulated Hammerstein jet plant.

The plant maps a drive envelope in volts through a static nonlinearity, a
transport-delay FIFO and the identified fourth-order dynamics, then adds
process noise, coloured sensor noise and a first-order anti-alias filter.
Inside the plant the drive is expressed in model units (millivolts by default),
the unit in which the published transfer function has its gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .dsp import FrequencyResponse, SampleSpec, estimate_spectra
from .lti import StateSpaceModel, TransferFunction, batch_matmul, exact_sum, realize, ss_to_tf

# Published fit, rounded to three significant figures. Its denominator is not
# stable as printed, see DESIGN_DEN.
PRINTED_NUM = (0.0, 4.86e-6)
PRINTED_DEN = (1.0, -3.88, 5.67, -3.68, 0.899)
PRINTED_DELAY = 36
# Stable denominator that rounds to PRINTED_DEN and sums to exactly 2.4e-5.
DESIGN_DEN = (1.0, -3.883235, 5.666271, -3.681975, 0.898963)
# Published realization output row, used to split the B*C product.
PRINTED_C0 = 0.00297

MODEL_UNITS_PER_VOLT = 1000.0
RHO_STANDARD = 1.2
DESIGN_FLOW_LPM = 40.0


def default_plant_tf(ts: float = 1.0 / 50_000.0) -> TransferFunction:
    """Identified plant with the stable reconstruction of the denominator."""
    return TransferFunction(PRINTED_NUM, DESIGN_DEN, PRINTED_DELAY, ts)


def printed_plant_tf(ts: float = 1.0 / 50_000.0) -> TransferFunction:
    """Identified plant exactly as printed (unstable through rounding)."""
    return TransferFunction(PRINTED_NUM, PRINTED_DEN, PRINTED_DELAY, ts)


# ---------------------------------------------------------------------------
# jet physics


@dataclass(frozen=True)
class JetGeometry:
    """Nozzle geometry and mass flow of the wall jet.

    Parameters
    ----------
    m_dot : float
        Inlet mass flow, kg/s.
    rho : float
        Air density, kg/m^3.
    b : float
        Nozzle width, m.
    d : float
        Nozzle height, m.
    """

    m_dot: float
    rho: float = 1.2
    b: float = 1.6e-3
    d: float = 4.8e-3

    def __post_init__(self):
        for name in ("m_dot", "rho", "b", "d"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_slpm(cls, slpm: float, rho_standard: float = RHO_STANDARD, **kwargs) -> JetGeometry:
        """Convert a standard volumetric flow in litres per minute to mass flow."""
        return cls(m_dot=slpm * 1e-3 / 60.0 * rho_standard, **kwargs)


def jet_pressure_difference(geom: JetGeometry, R: float) -> float:
    """Pressure difference across a jet bent to radius ``R``.

    ``dP = m_dot^2 / (rho b d^2) / R``.
    """
    if not R > 0:
        raise ValueError("attachment radius must be positive")
    if math.isinf(R):
        return 0.0
    return geom.m_dot**2 / (geom.rho * geom.b * geom.d**2) / R


# ---------------------------------------------------------------------------
# static nonlinearity


@dataclass(frozen=True)
class StaticNonlinearity:
    """Monotone rational input map ``F(x) = P(x)/Q(x)`` on ``[0, x_max]`` volts.

    ``num`` and ``den`` hold ascending powers of ``x``; ``num[0]`` must be 0 so
    that ``F(0) = 0``. The inverse uses a dense linear-interpolation table.
    """

    num: tuple
    den: tuple
    x_max: float = 0.8
    lut_size: int = 4001
    _x_lut: np.ndarray = field(init=False, repr=False, compare=False)
    _y_lut: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        num = tuple(float(v) for v in self.num)
        den = tuple(float(v) for v in self.den)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        if num[0] != 0.0:
            raise ValueError("F(0) must be 0: constant numerator term must vanish")
        x = np.linspace(0.0, self.x_max, int(self.lut_size))
        y = self._rational(x)
        if not np.all(np.isfinite(y)) or np.any(np.diff(y) <= 0):
            raise ValueError("F must be finite and strictly increasing on [0, x_max]")
        object.__setattr__(self, "_x_lut", x)
        object.__setattr__(self, "_y_lut", y)

    def _rational(self, x):
        # Horner on ascending coefficients; cheaper than polyval for short arrays
        p = 0.0
        for c in self.num[::-1]:
            p = p * x + c
        q = 0.0
        for c in self.den[::-1]:
            q = q * x + c
        return p / q

    @property
    def y_max(self) -> float:
        return float(self._y_lut[-1])

    @property
    def coeffs(self) -> dict:
        return {"num": list(self.num), "den": list(self.den)}

    def __call__(self, x, clamp: bool = False):
        x = np.asarray(x, dtype=float)
        if clamp:
            x = np.clip(x, 0.0, self.x_max)
        elif np.any(x < 0) or np.any(x > self.x_max):
            raise ValueError("drive outside the nonlinearity domain [0, x_max]")
        return self._rational(x)

    def inverse(self, y, clamp: bool = False):
        """Drive that produces output ``y``.

        Parameters
        ----------
        clamp : bool
            Clip out-of-range requests to the curve ends (closed-loop mode)
            instead of raising (identification mode).
        """
        y = np.asarray(y, dtype=float)
        tol = 1e-12 * max(1.0, self.y_max)
        if not clamp and (np.any(y < -tol) or np.any(y > self.y_max + tol)):
            raise ValueError("requested output outside the invertible range of F")
        return np.interp(y, self._y_lut, self._x_lut)

    def out_of_range(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y < 0) | (y > self.y_max)

    @classmethod
    def identity(cls, x_max: float = 0.8) -> StaticNonlinearity:
        return cls((0.0, 1.0), (1.0,), x_max)


def default_nonlinearity() -> StaticNonlinearity:
    """Saturating (2,2) rational curve with ``F(0) = 0`` and ``F(0.8) = 0.8``."""
    return StaticNonlinearity((0.0, 2.0, 1.0), (1.0, 2.0, 0.3125), 0.8)


def eval_nonlinearity(nl: StaticNonlinearity, x):
    return nl(x)


def invert_nonlinearity(nl: StaticNonlinearity, y, clamp: bool = False):
    return nl.inverse(y, clamp=clamp)


# ---------------------------------------------------------------------------
# deflection and quasi-steady curves


@dataclass(frozen=True)
class DeflectionCurve:
    """Steady deflection pressure against excitation tone frequency."""

    grid: np.ndarray
    deflection: np.ndarray
    flow_rate: float = DESIGN_FLOW_LPM

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        val = np.asarray(self.deflection, dtype=float)
        if grid.shape != val.shape or grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid and deflection must be equal-length 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("deflection values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "deflection", val)

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        if np.any(f < self.grid[0]) or np.any(f > self.grid[-1]):
            raise ValueError("frequency outside the deflection curve grid")
        return np.interp(f, self.grid, self.deflection)

    @classmethod
    def flat(cls, value: float = 1.0, lo: float = 1300.0, hi: float = 4800.0) -> DeflectionCurve:
        return cls(np.array([lo, hi]), np.array([value, value]))


def default_deflection_curve(flow_rate: float = DESIGN_FLOW_LPM) -> DeflectionCurve:
    """Synthetic band-shaped curve peaked near 2.2 kHz over 1.3 to 4.8 kHz.

    Higher flow rates shift the peak up and raise the level slightly.
    """
    grid = np.arange(1300.0, 4800.0 + 1e-9, 10.0)
    scale = flow_rate / DESIGN_FLOW_LPM
    peak = 2200.0 * math.sqrt(scale)
    width = 1200.0
    level = 60.0 * scale
    return DeflectionCurve(grid, level * np.exp(-0.5 * ((grid - peak) / width) ** 2), flow_rate)


@dataclass(frozen=True)
class QuasiSteadyCurve:
    """Magnitude-only effective gain of the jet against modulation frequency."""

    grid: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if grid.shape != psi.shape or grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid and psi must be equal-length 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(psi <= 0) or not np.all(np.isfinite(psi)):
            raise ValueError("psi must be positive and finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "psi", psi)

    def __call__(self, f):
        """Interpolated magnitude, held constant beyond the grid ends."""
        return np.interp(np.abs(np.asarray(f, dtype=float)), self.grid, self.psi)

    def psi_db(self) -> np.ndarray:
        return 20.0 * np.log10(self.psi)

    @classmethod
    def flat(cls, f_max: float = 1350.0) -> QuasiSteadyCurve:
        return cls(np.array([0.0, f_max]), np.array([1.0, 1.0]))


def _sweep_psd(curve, f_c, gamma, duration, sample_spec, segment_length, swap):
    n = sample_spec.samples(duration)
    t = sample_spec.time(n)
    theta = np.pi * gamma * t**2
    carrier = 2 * np.pi * f_c * t
    lower = curve(f_c - gamma * t) * np.cos(carrier - theta)
    upper = curve(f_c + gamma * t) * np.cos(carrier + theta)
    s = 0.5 * (upper - lower) if swap else 0.5 * (lower - upper)
    base = s * np.sin(carrier)
    est = estimate_spectra(base, base, segment_length, sample_spec)
    return est.grid, est.Phi_uu


def simulate_quasi_steady(
    curve: DeflectionCurve,
    f_c: float = 2750.0,
    sweep_rate: float = 28.0,
    duration: float = 50.0,
    sample_spec: SampleSpec = SampleSpec(),
    segment_length: int = 2**15,
    f_max: float = 1350.0,
    swap: bool = False,
) -> QuasiSteadyCurve:
    """Quasi-steady gain from two counter-sweeping tones.

    Two tones start at ``f_c`` in antiphase and sweep to ``f_c -+ gamma t``
    with amplitudes read from the deflection curve. Their sum is multiplied by
    the carrier and the power spectral density of the product is taken. The
    result is normalised by the same simulation with a flat curve at
    ``curve(f_c)``, so the gain is 1 at zero modulation frequency.

    Raises
    ------
    ValueError
        If the sweep leaves the curve grid.
    """
    lo = f_c - sweep_rate * duration
    hi = f_c + sweep_rate * duration
    if lo < curve.grid[0] or hi > curve.grid[-1]:
        raise ValueError("sweep exits the deflection curve grid")
    ref_level = float(curve(f_c))
    if ref_level == 0:
        raise ValueError("deflection curve vanishes at the carrier frequency")
    flat = DeflectionCurve.flat(ref_level, curve.grid[0], curve.grid[-1])
    f, p = _sweep_psd(curve, f_c, sweep_rate, duration, sample_spec, segment_length, swap)
    _, p_ref = _sweep_psd(flat, f_c, sweep_rate, duration, sample_spec, segment_length, swap)
    keep = (f <= min(f_max, sweep_rate * duration)) & (p_ref > 0)
    return QuasiSteadyCurve(f[keep], np.sqrt(p[keep] / p_ref[keep]))


def quasi_steady_analytic(curve: DeflectionCurve, f, f_c: float = 2750.0):
    """Closed form ``(D(f_c - f) + D(f_c + f)) / (2 D(f_c))``."""
    f = np.asarray(f, dtype=float)
    return (curve(f_c - f) + curve(f_c + f)) / (2.0 * curve(f_c))


# ---------------------------------------------------------------------------
# noise


def resonant_shaping(f_0: float = 650.0, zeta: float = 0.3, sample_spec: SampleSpec = SampleSpec()):
    """Second-order resonant low-pass normalised to unit output variance."""
    w0 = 2 * np.pi * f_0
    b, a = signal.bilinear([w0**2], [1.0, 2 * zeta * w0, w0**2], fs=sample_spec.f_s)
    h = signal.lfilter(b, a, np.r_[1.0, np.zeros(2**16 - 1)])
    return tuple(b / math.sqrt(float(np.sum(h**2)))), tuple(a)


@dataclass(frozen=True)
class NoiseSpec:
    """Process and sensor noise levels.

    Parameters
    ----------
    process_sigma : float
        Standard deviation of ``w`` entering through the disturbance input, in
        model units.
    sensor_sigma : float
        Standard deviation of the coloured sensor noise, Pa.
    shaping : tuple of (b, a) or None
        Colouring filter for the sensor noise; white when ``None``.
    seed : int
        Root seed; ensemble members draw from spawned child streams.
    """

    process_sigma: float = 1.0
    sensor_sigma: float = math.sqrt(0.1)
    shaping: tuple | None = field(default_factory=resonant_shaping)
    seed: int = 0

    def __post_init__(self):
        if self.process_sigma < 0 or self.sensor_sigma < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def none(cls) -> NoiseSpec:
        return cls(0.0, 0.0, None, 0)

    @property
    def silent(self) -> bool:
        return self.process_sigma == 0 and self.sensor_sigma == 0


class _NoiseSource:
    """Per-member white noise drawn in fixed-size blocks.

    Each member owns a generator spawned from the root seed, so member ``i``
    sees the same sequence whatever the ensemble size.
    """

    block = 4096

    def __init__(self, seed: int, n_members: int, first_member: int = 0):
        root = np.random.SeedSequence(seed)
        children = root.spawn(first_member + n_members)[first_member:]
        self._rngs = [np.random.default_rng(c) for c in children]
        self._buf = np.zeros((len(self._rngs), self.block, 2))
        self._pos = self.block

    def _refill(self) -> None:
        for i, rng in enumerate(self._rngs):
            self._buf[i] = rng.standard_normal((self.block, 2))
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos == self.block:
            self._refill()
        out = self._buf[:, self._pos, :]
        self._pos += 1
        return out

    def take(self, n: int) -> np.ndarray:
        """Next ``n`` samples for every member, shape ``(members, n, 2)``."""
        parts = []
        need = n
        while need:
            if self._pos == self.block:
                self._refill()
            k = min(need, self.block - self._pos)
            parts.append(self._buf[:, self._pos:self._pos + k, :].copy())
            self._pos += k
            need -= k
        return np.concatenate(parts, axis=1) if parts else np.zeros((len(self._rngs), 0, 2))


# ---------------------------------------------------------------------------
# plant instance


@dataclass
class PlantInstance:
    """Hammerstein plant with delay FIFO, noise and anti-alias filter.

    Parameters
    ----------
    nonlinearity : StaticNonlinearity
        Input map applied to the drive envelope in volts.
    dynamics : TransferFunction
        Linear dynamics from model units to Pa, with the transport delay.
    noise : NoiseSpec
        Noise levels and seed.
    X_unforced : float
        Output with zero excitation, Pa.
    units_per_volt : float
        Model units per volt of drive.
    F_dist : array_like, optional
        Process-noise input vector in the internal realization; defaults to B.
    psi : QuasiSteadyCurve, optional
        Quasi-steady gain applied to the envelope. Being magnitude-only it is
        applied in the frequency domain and only :meth:`simulate` supports it.
    anti_alias : bool
        Apply the first-order low-pass with its corner at ``f_s/2``.
    flow_rate : float
        Label in lpm.
    """

    nonlinearity: StaticNonlinearity = field(default_factory=default_nonlinearity)
    dynamics: TransferFunction = field(default_factory=default_plant_tf)
    noise: NoiseSpec = field(default_factory=NoiseSpec.none)
    X_unforced: float = 0.0
    units_per_volt: float = MODEL_UNITS_PER_VOLT
    F_dist: np.ndarray | None = None
    psi: QuasiSteadyCurve | None = None
    anti_alias: bool = True
    flow_rate: float = DESIGN_FLOW_LPM

    def __post_init__(self):
        self.ss: StateSpaceModel = realize(self.dynamics.without_delay(), scaling=np.ones(self.dynamics.order))
        if self.ss.D != 0:
            raise ValueError("plant dynamics must be strictly proper")
        if self.F_dist is not None:
            self.ss = StateSpaceModel(self.ss.A, self.ss.B, self.ss.C, 0.0, self.F_dist, self.ss.ts)
        self._aa = math.exp(-math.pi) if self.anti_alias else 0.0
        self.reset()

    @property
    def delay(self) -> int:
        return self.dynamics.delay

    @property
    def sample_spec(self) -> SampleSpec:
        return SampleSpec(1.0 / self.dynamics.ts)

    @property
    def K_DC(self) -> float:
        """DC gain in Pa per model unit."""
        return self.dynamics.dc_gain()

    @property
    def K_DC_volts(self) -> float:
        """DC gain in Pa per volt of linearised drive."""
        return self.K_DC * self.units_per_volt

    def sensor_response(self, freqs) -> np.ndarray:
        """Complex response of the anti-alias filter on ``freqs`` (Hz)."""
        zinv = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) * self.dynamics.ts)
        return (1.0 - self._aa) / (1.0 - self._aa * zinv)

    def reset(self, n_members: int = 1, first_member: int = 0) -> None:
        """Zero all states and restart the noise streams."""
        n = self.ss.n_states
        self.n_members = n_members
        self._x = np.zeros((n_members, n))
        self._fifo = np.zeros((n_members, max(self.delay, 1)))
        self._head = 0
        self._aa_state = np.zeros(n_members)
        sh = self.noise.shaping
        self._shape_b = np.asarray(sh[0] if sh else (1.0,), float)
        self._shape_a = np.asarray(sh[1] if sh else (1.0,), float)
        self._shape_z = np.zeros((n_members, max(len(self._shape_a), len(self._shape_b)) - 1))
        self._noise = None if self.noise.silent else _NoiseSource(self.noise.seed, n_members, first_member)
        self._y = None
        self._w = None

    def _sensor_filter(self, e: np.ndarray) -> np.ndarray:
        # transposed direct form II, vectorised over members
        b, a, z = self._shape_b, self._shape_a, self._shape_z
        y = b[0] * e + (z[:, 0] if z.shape[1] else 0.0)
        for i in range(z.shape[1]):
            nxt = z[:, i + 1] if i + 1 < z.shape[1] else 0.0
            bi = b[i + 1] if i + 1 < b.size else 0.0
            ai = a[i + 1] if i + 1 < a.size else 0.0
            z[:, i] = nxt + bi * e - ai * y
        return y

    def measure(self) -> np.ndarray:
        """Sensor reading of the current sample, in Pa, one entry per member.

        The output does not depend on the drive applied at the same sample, so
        a controller may read it before choosing that drive. Repeated calls
        within one sample return the same reading.
        """
        if self._y is not None:
            return self._y
        y = batch_matmul(self._x, self.ss.C[0])
        if self._noise is not None:
            self._w = self._noise.next()
            y = y + self._sensor_filter(self.noise.sensor_sigma * self._w[:, 1])
        if self._aa:
            self._aa_state = self._aa * self._aa_state + (1.0 - self._aa) * y
            y = self._aa_state
        self._y = y + self.X_unforced
        return self._y

    def advance(self, envelope) -> None:
        """Apply the drive envelope (volts) and move to the next sample."""
        if self.psi is not None:
            raise ValueError("quasi-steady shaping is magnitude-only; use simulate()")
        if self._y is None:
            self.measure()
        env = np.asarray(envelope, dtype=float)
        if env.shape != (self.n_members,):
            env = np.broadcast_to(env, (self.n_members,))
        v = self.units_per_volt * self.nonlinearity(env)
        if self.delay:
            u = self._fifo[:, self._head].copy()
            self._fifo[:, self._head] = v
            self._head = (self._head + 1) % self.delay
        else:
            u = v
        xn = batch_matmul(self._x, self.ss.A.T) + u[:, None] * self.ss.B[:, 0]
        if self._noise is not None:
            xn += (self.noise.process_sigma * self._w[:, 0])[:, None] * self.ss.F_dist[:, 0]
        self._x = xn
        self._y = None

    def step(self, envelope) -> np.ndarray:
        """Read the sensor, then apply ``envelope``; returns the reading in Pa."""
        y = self.measure()
        self.advance(envelope)
        return y

    def simulate(self, envelope, member: int = 0) -> np.ndarray:
        """Open-loop response to a whole envelope record, from rest.

        Matches repeated :meth:`step` calls for ensemble member ``member``
        when no quasi-steady curve is set.
        """
        env = np.asarray(envelope, dtype=float)
        n = env.size
        v = self.units_per_volt * self.nonlinearity(env)
        if self.psi is not None:
            spec = np.fft.rfft(v)
            spec *= self.psi(np.fft.rfftfreq(n, d=self.dynamics.ts))
            v = np.fft.irfft(spec, n)
        u = np.zeros(n)
        d = self.delay
        if d < n:
            u[d:] = v[: n - d]
        plant = self.dynamics.without_delay()
        y = signal.lfilter(plant.num, plant.den, u)
        if not self.noise.silent:
            w = _NoiseSource(self.noise.seed, 1, member).take(n)[0]
            dist = ss_to_tf(StateSpaceModel(self.ss.A, self.ss.F_dist, self.ss.C, 0.0, None, self.ss.ts))
            y = y + signal.lfilter(dist.num, dist.den, self.noise.process_sigma * w[:, 0])
            y = y + signal.lfilter(self._shape_b, self._shape_a, self.noise.sensor_sigma * w[:, 1])
        if self._aa:
            y = signal.lfilter([1.0 - self._aa], [1.0, -self._aa], y)
        return y + self.X_unforced


def plant_step(p: PlantInstance, g_amp_envelope) -> np.ndarray:
    return p.step(g_amp_envelope)


def plant_frequency_response(tf: TransferFunction, grid) -> FrequencyResponse:
    """Frequency response on ``grid`` (Hz), delay phase included."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid >= 0.5 / tf.ts):
        raise ValueError("grid must stay below the Nyquist frequency")
    return tf.freqresp(grid)


# ---------------------------------------------------------------------------
# flow-rate bank


def relative_gain(flow_rate: float, peak: float = 30.0, width: float = 25.0) -> float:
    """Gaussian DC-gain curve over flow rate, equal to 1 at the design flow."""
    def g(q):
        return math.exp(-(((q - peak) / width) ** 2))

    return g(flow_rate) / g(DESIGN_FLOW_LPM)


def scaled_plant_tf(flow_rate: float, gain: float, base: TransferFunction | None = None) -> TransferFunction:
    """Design plant with poles mapped ``z -> z^(Q/40)`` and delay scaled by ``40/Q``.

    The single numerator coefficient is set so the DC gain is ``gain`` times
    the design value.
    """
    base = default_plant_tf() if base is None else base
    if flow_rate == DESIGN_FLOW_LPM:
        tf = base
    else:
        s = flow_rate / DESIGN_FLOW_LPM
        poles = base.poles() ** s
        den = np.real(np.poly(poles))
        delay = int(round(base.delay / s))
        b1 = base.dc_gain() * exact_sum(den)
        tf = TransferFunction(np.array([0.0, b1]), den, delay, base.ts)
    if gain != 1.0:
        tf = TransferFunction(tf.num * gain, tf.den, tf.delay, tf.ts)
    return tf


def make_plant_bank(config: dict | None = None) -> dict:
    """Plants keyed by flow rate in lpm.

    Parameters
    ----------
    config : dict, optional
        ``flow_rates`` (list, default 20 to 50 in 5 lpm steps),
        ``gain_peak`` and ``gain_width`` for the DC-gain curve,
        ``tfs`` mapping a flow rate to an explicit ``{num, den, delay}``,
        ``noise`` (a :class:`NoiseSpec`) and ``X_unforced``.

    Raises
    ------
    ValueError
        If the 40 lpm design entry is missing.
    """
    cfg = dict(config or {})
    rates = [float(q) for q in cfg.get("flow_rates", [20, 25, 30, 35, 40, 45, 50])]
    explicit = {float(k): v for k, v in cfg.get("tfs", {}).items()}
    if DESIGN_FLOW_LPM not in rates:
        raise ValueError("plant bank must contain the 40 lpm design entry")
    peak = float(cfg.get("gain_peak", 30.0))
    width = float(cfg.get("gain_width", 25.0))
    noise = cfg.get("noise", NoiseSpec.none())
    nl = cfg.get("nonlinearity", default_nonlinearity())
    bank = {}
    for q in sorted(rates):
        if q in explicit:
            e = explicit[q]
            tf = TransferFunction(e["num"], e["den"], e.get("delay", 0))
        elif q == DESIGN_FLOW_LPM:
            tf = default_plant_tf()
        else:
            tf = scaled_plant_tf(q, relative_gain(q, peak, width))
        bank[q] = PlantInstance(
            nonlinearity=nl,
            dynamics=tf,
            noise=noise,
            X_unforced=float(cfg.get("X_unforced", 0.0)),
            flow_rate=q,
        )
    return bank
