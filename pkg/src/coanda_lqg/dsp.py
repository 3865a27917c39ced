"""Excitation signals, amplitude modulation, filtering and spectral estimation.

Everything works on plain NumPy arrays sampled at a :class:`SampleSpec` rate.
Spectra use NumPy's FFT restricted to power-of-two segment lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal


@dataclass(frozen=True)
class SampleSpec:
    """Sampling rate of every simulated sequence (default 50 kHz)."""

    f_s: float = 50_000.0

    def __post_init__(self):
        if not self.f_s > 0:
            raise ValueError("f_s must be positive")

    @property
    def T_s(self) -> float:
        return 1.0 / self.f_s

    @property
    def nyquist(self) -> float:
        return 0.5 * self.f_s

    def time(self, n: int) -> np.ndarray:
        return np.arange(n) / self.f_s

    def samples(self, duration: float) -> int:
        return int(round(duration * self.f_s))


@dataclass(frozen=True)
class ChirpSpec:
    """Linear chirp ``A sin(2 pi (xi t + gamma t^2 / 2))``."""

    A: float
    xi: float
    gamma: float
    duration: float

    def final_frequency(self) -> float:
        return self.xi + self.gamma * self.duration


@dataclass(frozen=True)
class SteppedSineSpec:
    """Sinusoid whose frequency steps by ``step`` Hz every ``dwell`` seconds."""

    A: float
    f_0: float = 10.0
    step: float = 30.0
    dwell: float = 3.03
    n_steps: int = 66

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_0 + self.step * np.arange(self.n_steps)

    def final_frequency(self) -> float:
        return self.f_0 + self.step * (self.n_steps - 1)

    def dwell_samples(self, sample_spec: SampleSpec) -> int:
        n = self.dwell * sample_spec.f_s
        if abs(n - round(n)) > 1e-6 or round(n) < 1:
            raise ValueError("dwell must span a whole, positive number of samples")
        return int(round(n))


@dataclass(frozen=True)
class AmSpec:
    """Amplitude-modulated carrier: ``sin(2 pi f_c t) F^-1{g_m(t) + B}``."""

    f_c: float = 2750.0
    B: float = 0.3


@dataclass(frozen=True)
class SpectralEstimate:
    """Segment-averaged input auto-spectrum and input/output cross-spectrum."""

    grid: np.ndarray
    Phi_uu: np.ndarray
    Phi_yu: np.ndarray
    n_segments: int
    segment_length: int
    f_s: float

    @property
    def bin_width(self) -> float:
        return self.f_s / self.segment_length


@dataclass(frozen=True)
class FrequencyResponse:
    """Complex gain sampled on a strictly increasing frequency grid in Hz."""

    grid: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        value = np.atleast_1d(np.asarray(self.value, dtype=complex))
        if grid.shape != value.shape or grid.ndim != 1:
            raise ValueError("grid and value must be 1-D arrays of equal length")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "value", value)

    def magnitude_db(self) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.value))

    def phase_deg(self, unwrap: bool = True) -> np.ndarray:
        ph = np.angle(self.value)
        return np.degrees(np.unwrap(ph) if unwrap else ph)

    def __mul__(self, other):
        if isinstance(other, FrequencyResponse):
            if not np.array_equal(self.grid, other.grid):
                raise ValueError("grids differ")
            return FrequencyResponse(self.grid, self.value * other.value)
        return FrequencyResponse(self.grid, self.value * other)

    def __truediv__(self, other):
        if isinstance(other, FrequencyResponse):
            if not np.array_equal(self.grid, other.grid):
                raise ValueError("grids differ")
            return FrequencyResponse(self.grid, self.value / other.value)
        return FrequencyResponse(self.grid, self.value / other)


def gen_chirp(spec: ChirpSpec, sample_spec: SampleSpec = SampleSpec()) -> np.ndarray:
    """Linear chirp with instantaneous frequency ``xi + gamma t``.

    Raises
    ------
    ValueError
        If the sweep leaves ``(0, f_s/2)``.
    """
    if spec.xi <= 0:
        raise ValueError("chirp start frequency must be positive")
    f_end = spec.final_frequency()
    if not 0 < f_end < sample_spec.nyquist or spec.xi >= sample_spec.nyquist:
        raise ValueError("chirp sweep exceeds the Nyquist frequency")
    t = sample_spec.time(sample_spec.samples(spec.duration))
    return spec.A * np.sin(2 * np.pi * (spec.xi * t + 0.5 * spec.gamma * t**2))


def gen_stepped_sine(
    spec: SteppedSineSpec,
    sample_spec: SampleSpec = SampleSpec(),
    amplitudes=None,
) -> np.ndarray:
    """Stepped sine with a phase-continuous accumulator.

    Parameters
    ----------
    spec : SteppedSineSpec
        Frequency ladder and dwell.
    sample_spec : SampleSpec
        Sampling rate.
    amplitudes : array_like, optional
        Per-step amplitudes overriding ``spec.A``, used for compensated inputs.

    Returns
    -------
    numpy.ndarray
        ``n_steps * dwell_samples`` samples.
    """
    freqs = spec.frequencies
    if spec.f_0 <= 0:
        raise ValueError("stepped sine start frequency must be positive")
    if spec.final_frequency() >= sample_spec.nyquist:
        raise ValueError("stepped sine final frequency reaches the Nyquist frequency")
    n_dwell = spec.dwell_samples(sample_spec)
    amp = np.full(spec.n_steps, spec.A, dtype=float) if amplitudes is None else np.asarray(amplitudes, float)
    if amp.shape != (spec.n_steps,):
        raise ValueError("amplitudes must have one entry per step")
    inst = np.repeat(freqs, n_dwell) / sample_spec.f_s
    # phase at sample k is the sum of the per-sample increments before it
    cycles = np.concatenate([[0.0], np.cumsum(inst[:-1])])
    cycles -= np.floor(cycles)
    return np.repeat(amp, n_dwell) * np.sin(2 * np.pi * cycles)


def am_modulate(
    am: AmSpec,
    g_m,
    compensator=None,
    sample_spec: SampleSpec = SampleSpec(),
    clamp: bool = False,
) -> np.ndarray:
    """Amplitude-modulate a carrier with the compensated envelope.

    Parameters
    ----------
    am : AmSpec
        Carrier frequency and offset ``B``.
    g_m : array_like
        Modulating signal.
    compensator : StaticNonlinearity, optional
        Its inverse pre-distorts the envelope; identity when omitted.
    clamp : bool
        Closed-loop behaviour: clip the envelope into the invertible range
        instead of raising.

    Returns
    -------
    numpy.ndarray
        ``sin(2 pi f_c t) F^-1{g_m + B}``.
    """
    if am.f_c >= sample_spec.nyquist:
        raise ValueError("carrier frequency must be below Nyquist")
    env = np.asarray(g_m, dtype=float) + am.B
    if compensator is not None:
        env = compensator.inverse(env, clamp=clamp)
    t = sample_spec.time(env.size)
    return np.sin(2 * np.pi * am.f_c * t) * env


def lowpass_sos(cutoff: float, sample_spec: SampleSpec = SampleSpec(), order: int = 4) -> np.ndarray:
    """Butterworth low-pass as second-order sections."""
    return signal.butter(order, cutoff, btype="low", fs=sample_spec.f_s, output="sos")


def demodulate(
    x,
    f_c: float = 2750.0,
    lpf_cutoff: float | None = None,
    sample_spec: SampleSpec = SampleSpec(),
) -> np.ndarray:
    """Coherent demodulation: multiply by the carrier, low-pass, rescale by 2.

    The fourth-order Butterworth is run forward and backward, which squares
    its magnitude response and removes its group delay.
    """
    cutoff = f_c / 4.0 if lpf_cutoff is None else lpf_cutoff
    if not 0 < cutoff < f_c:
        raise ValueError("lpf_cutoff must lie in (0, f_c)")
    x = np.asarray(x, dtype=float)
    t = sample_spec.time(x.size)
    mixed = 2.0 * x * np.sin(2 * np.pi * f_c * t)
    return signal.sosfiltfilt(lowpass_sos(cutoff, sample_spec), mixed)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def estimate_spectra(
    u,
    y,
    segment_length: int = 2048,
    sample_spec: SampleSpec = SampleSpec(),
    window: str = "hann",
    overlap: float = 0.5,
) -> SpectralEstimate:
    """Welch-averaged one-sided ``Phi_uu`` and ``Phi_yu = E[Y U*]``.

    Parameters
    ----------
    u, y : array_like
        Equal-length input and output records.
    segment_length : int
        Power-of-two FFT length.
    window : {"hann", "rect"}
        Segment taper; "rect" gives plain segmentation.
    overlap : float
        Fractional overlap of consecutive segments.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError("u and y must be 1-D sequences of equal length")
    if not _is_power_of_two(int(segment_length)):
        raise ValueError("segment_length must be a power of two")
    n = int(segment_length)
    if u.size < 2 * n:
        raise ValueError("record must hold at least two segments")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    if window == "hann":
        w = signal.get_window("hann", n)
    elif window == "rect":
        w = np.ones(n)
    else:
        raise ValueError("window must be 'hann' or 'rect'")
    hop = max(1, int(round(n * (1 - overlap))))
    starts = np.arange(0, u.size - n + 1, hop)
    idx = starts[:, None] + np.arange(n)[None, :]
    U = np.fft.rfft(u[idx] * w, axis=1)
    Y = np.fft.rfft(y[idx] * w, axis=1)
    scale = 1.0 / (sample_spec.f_s * np.sum(w**2))
    phi_uu = np.mean(np.abs(U) ** 2, axis=0) * scale
    phi_yu = np.mean(Y * np.conj(U), axis=0) * scale
    # one-sided density: double every bin except DC and Nyquist
    phi_uu[1:-1] *= 2.0
    phi_yu[1:-1] *= 2.0
    grid = np.fft.rfftfreq(n, d=sample_spec.T_s)
    return SpectralEstimate(grid, phi_uu, phi_yu, int(starts.size), n, sample_spec.f_s)


def etfe(spec: SpectralEstimate, threshold: float = 1e-6) -> FrequencyResponse:
    """Empirical transfer function estimate ``Phi_yu / Phi_uu``.

    Bins whose input power is below ``threshold`` times the peak input power
    carry no excitation and are dropped.
    """
    peak = float(np.max(spec.Phi_uu)) if spec.Phi_uu.size else 0.0
    valid = spec.Phi_uu > threshold * peak if peak > 0 else np.zeros(spec.Phi_uu.shape, bool)
    if not np.any(valid):
        raise ValueError("no excited bins: input carries no energy")
    return FrequencyResponse(spec.grid[valid], spec.Phi_yu[valid] / spec.Phi_uu[valid])


@dataclass
class NotchFilter:
    """Second-order IIR notch with its own filter state."""

    b: np.ndarray
    a: np.ndarray
    f_notch: float
    q_factor: float
    zi: np.ndarray | None = field(default=None, repr=False)

    def reset(self) -> None:
        self.zi = None

    def apply(self, x, stateful: bool = False) -> np.ndarray:
        """Filter ``x`` along its last axis.

        With ``stateful`` the internal state carries over between calls and
        starts from the steady state of the first sample, otherwise every call
        starts from that steady state.
        """
        x = np.asarray(x, dtype=float)
        if stateful and self.zi is not None:
            zi = self.zi
        else:
            zi = signal.lfilter_zi(self.b, self.a) * x[..., :1]
        out, zf = signal.lfilter(self.b, self.a, x, axis=-1, zi=zi)
        if stateful:
            self.zi = zf
        return out


def notch_filter(f_notch: float, q_factor: float, sample_spec: SampleSpec = SampleSpec()) -> NotchFilter:
    """Design a unity-DC-gain notch at ``f_notch`` with quality ``q_factor``."""
    if not 0 < f_notch < sample_spec.nyquist:
        raise ValueError("f_notch must lie in (0, f_s/2)")
    if not q_factor > 0:
        raise ValueError("q_factor must be positive")
    b, a = signal.iirnotch(f_notch, q_factor, fs=sample_spec.f_s)
    return NotchFilter(b, a, float(f_notch), float(q_factor))


def apply(filt: NotchFilter, x) -> np.ndarray:
    """Run a notch filter over a sequence from its steady initial state."""
    return filt.apply(x)


def ensemble_average(traces) -> np.ndarray:
    """Pointwise mean of equal-length traces, summed in fixed order.

    The mean is formed as the first trace plus the mean deviation from it, so
    identical traces average to themselves bit for bit.
    """
    if isinstance(traces, np.ndarray):
        arr = np.atleast_2d(traces)
    else:
        seqs = [np.asarray(t, dtype=float) for t in traces]
        if not seqs:
            raise ValueError("need at least one trace")
        if len({s.shape for s in seqs}) != 1:
            raise ValueError("traces must have equal lengths")
        arr = np.stack(seqs)
    if arr.shape[0] < 1:
        raise ValueError("need at least one trace")
    first = arr[0]
    return first + np.mean(arr - first, axis=0)
