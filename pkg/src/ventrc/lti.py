"""Discrete-time LTI primitives.

Transfer functions are stored as polynomials in z^-1 (coefficients low order
first) with an explicit nonnegative integer pure-delay count, so that large
transport delays stay exact instead of being absorbed into high-order
polynomials.  Frequencies are Hz at every public surface; radians/sample only
appear internally (see :func:`hz_to_rad_per_sample`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError, SingularityError, UnstableFilterWarning

# Denominators above this order are not root-checked in filter_stream (the
# companion-matrix eigensolve gets expensive and the result is only a warning).
_STABILITY_CHECK_MAX_ORDER = 64


def hz_to_rad_per_sample(frequencies_hz, sample_time: float) -> np.ndarray:
    """Convert frequency in Hz to radians per sample for a given sample time."""
    return 2.0 * np.pi * np.asarray(frequencies_hz, dtype=float) * sample_time


def polyval_zinv(coeffs, zinv) -> np.ndarray:
    """Evaluate a polynomial in z^-1 (coefficients low order first) at zinv."""
    zinv = np.asarray(zinv)
    out = np.zeros_like(zinv, dtype=complex)
    for c in np.asarray(coeffs)[::-1]:
        out = out * zinv + c
    return out


def _trim_trailing(coeffs, tol: float = 0.0) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    n = len(c)
    while n > 1 and abs(c[n - 1]) <= tol:
        n -= 1
    return c[:n]


@dataclass
class DiscreteTransferFunction:
    """Rational function in z^-1 with an explicit pure delay.

    H(z) = z^-pure_delay * num(z^-1) / den(z^-1), with den normalized so its
    z^0 coefficient is 1.
    """

    numerator_coeffs: np.ndarray
    denominator_coeffs: np.ndarray
    pure_delay: int = 0
    sample_time: float = 0.002

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.numerator_coeffs, dtype=float))
        den = np.atleast_1d(np.asarray(self.denominator_coeffs, dtype=float))
        if self.sample_time <= 0:
            raise ValueError(f"sample_time must be positive, got {self.sample_time}")
        if self.pure_delay < 0 or int(self.pure_delay) != self.pure_delay:
            raise ValueError(f"pure_delay must be a nonnegative integer, got {self.pure_delay}")
        if den.size == 0 or abs(den[0]) < 1e-300:
            raise ValueError("denominator leading (z^0) coefficient must be nonzero")
        lead = den[0]
        self.numerator_coeffs = num / lead
        self.denominator_coeffs = den / lead
        self.pure_delay = int(self.pure_delay)

    @property
    def nyquist_hz(self) -> float:
        return 0.5 / self.sample_time

    def poles(self) -> np.ndarray:
        """Roots of the denominator in the z plane."""
        den = _trim_trailing(self.denominator_coeffs)
        if len(den) == 1:
            return np.array([])
        return np.roots(den)

    def zeros(self) -> np.ndarray:
        """Roots of the numerator in the z plane (pure delay excluded)."""
        num = _trim_trailing(self.numerator_coeffs)
        if len(num) == 1:
            return np.array([])
        return np.roots(num)

    def is_stable(self, tol: float = 0.0) -> bool:
        p = self.poles()
        return bool(p.size == 0 or np.all(np.abs(p) < 1.0 - tol))

    def dc_gain(self) -> float:
        return float(np.sum(self.numerator_coeffs) / np.sum(self.denominator_coeffs))

    # -- composition ------------------------------------------------------

    def cascade(self, other: "DiscreteTransferFunction") -> "DiscreteTransferFunction":
        """Series connection self * other (sample times must match)."""
        if abs(self.sample_time - other.sample_time) > 1e-15:
            raise ValueError("cascade requires identical sample times")
        return DiscreteTransferFunction(
            np.convolve(self.numerator_coeffs, other.numerator_coeffs),
            np.convolve(self.denominator_coeffs, other.denominator_coeffs),
            self.pure_delay + other.pure_delay,
            self.sample_time,
        )

    def feedback_complementary(self) -> "DiscreteTransferFunction":
        """Closed-loop self/(1+self) under unit negative feedback.

        The pure delay of the open loop is folded into the closed-loop
        denominator polynomial (it appears inside the loop), while the
        returned transfer function keeps the same explicit pure delay for its
        numerator path.
        """
        num = self.numerator_coeffs
        den = self.denominator_coeffs
        d = self.pure_delay
        shifted = np.concatenate([np.zeros(d), num])
        n = max(len(den), len(shifted))
        cl_den = np.zeros(n)
        cl_den[: len(den)] = den
        cl_den[: len(shifted)] += shifted
        return DiscreteTransferFunction(num, cl_den, d, self.sample_time)


@dataclass
class FirKernel:
    """Causal FIR taps realized with a forward shift: z^forward_shift * FIR(taps)."""

    taps: np.ndarray
    forward_shift: int = 0
    zero_phase: bool = False

    def __post_init__(self):
        self.taps = np.atleast_1d(np.asarray(self.taps, dtype=float))
        if self.taps.size < 1:
            raise ValueError("FirKernel needs at least one tap")
        if self.forward_shift < 0 or int(self.forward_shift) != self.forward_shift:
            raise ValueError(f"forward_shift must be a nonnegative integer, got {self.forward_shift}")
        self.forward_shift = int(self.forward_shift)
        if self.zero_phase:
            sym = self.taps[::-1]
            if len(self.taps) != 2 * self.forward_shift + 1 or not np.allclose(
                self.taps, sym, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(self.taps)))
            ):
                raise ValueError("zero_phase kernel must be symmetric about index forward_shift")

    def dc_gain(self) -> float:
        return float(np.sum(self.taps))

    def frequency_response(self, frequencies_hz, sample_time: float) -> np.ndarray:
        """Complex response of z^forward_shift * FIR(taps) on a Hz grid."""
        w = hz_to_rad_per_sample(frequencies_hz, sample_time)
        zinv = np.exp(-1j * w)
        return polyval_zinv(self.taps, zinv) * np.exp(1j * w * self.forward_shift)


@dataclass
class FrequencyResponse:
    """Complex response samples on a strictly increasing Hz grid."""

    frequencies_hz: np.ndarray
    values: np.ndarray
    sample_time: float

    def __post_init__(self):
        self.frequencies_hz = np.atleast_1d(np.asarray(self.frequencies_hz, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=complex))
        if self.sample_time <= 0:
            raise ValueError("sample_time must be positive")
        if len(self.frequencies_hz) != len(self.values):
            raise ValueError("frequencies and values must have equal length")
        nyq = 0.5 / self.sample_time
        if np.any(self.frequencies_hz <= 0) or np.any(self.frequencies_hz > nyq + 1e-12):
            raise ValueError(f"frequencies must lie in (0, {nyq}] Hz")
        if np.any(np.diff(self.frequencies_hz) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frequencies_hz)

    def same_grid(self, other: "FrequencyResponse", tol: float = 1e-9) -> bool:
        return (
            len(self) == len(other)
            and abs(self.sample_time - other.sample_time) < 1e-15
            and np.allclose(self.frequencies_hz, other.frequencies_hz, rtol=0.0, atol=tol)
        )


def evaluate(tf: DiscreteTransferFunction, frequencies_hz) -> FrequencyResponse:
    """Evaluate a transfer function on a Hz grid.

    The value at f is num(e^-iw)/den(e^-iw) * e^(-iw*pure_delay) with
    w = 2*pi*f*sample_time.  Frequencies above Nyquist raise; a denominator
    magnitude below 1e-14 at a grid point raises naming the frequency.
    """
    f = np.atleast_1d(np.asarray(frequencies_hz, dtype=float))
    if np.any(f <= 0) or np.any(f > tf.nyquist_hz + 1e-12):
        bad = f[(f <= 0) | (f > tf.nyquist_hz + 1e-12)][0]
        raise ValueError(f"frequency {bad} Hz outside (0, {tf.nyquist_hz}] Hz")
    w = hz_to_rad_per_sample(f, tf.sample_time)
    zinv = np.exp(-1j * w)
    den = polyval_zinv(tf.denominator_coeffs, zinv)
    small = np.abs(den) < 1e-14
    if np.any(small):
        raise SingularityError(
            f"denominator vanishes at {f[small][0]:.6g} Hz (|den| < 1e-14)"
        )
    vals = polyval_zinv(tf.numerator_coeffs, zinv) / den * zinv**tf.pure_delay
    return FrequencyResponse(f, vals, tf.sample_time)


def filter_stream(tf: DiscreteTransferFunction, input_sequence, initial_state=None) -> np.ndarray:
    """Filter a sequence through a causal rational filter (direct-form recursion).

    Zero initial state by default; output length equals input length.  An
    unstable denominator is not an error (simulations may legitimately
    diverge) but emits an UnstableFilterWarning when the order is small
    enough to root-check cheaply.
    """
    u = np.asarray(input_sequence, dtype=float)
    den = _trim_trailing(tf.denominator_coeffs)
    if len(den) - 1 <= _STABILITY_CHECK_MAX_ORDER and len(den) > 1:
        if np.any(np.abs(np.roots(den)) > 1.0 + 1e-9):
            warnings.warn(
                "filter denominator has poles outside the unit circle; output may diverge",
                UnstableFilterWarning,
                stacklevel=2,
            )
    if initial_state is not None:
        y = lfilter(tf.numerator_coeffs, tf.denominator_coeffs, u, zi=initial_state)[0]
    else:
        y = lfilter(tf.numerator_coeffs, tf.denominator_coeffs, u)
    d = tf.pure_delay
    if d > 0:
        y = np.concatenate([np.zeros(d), y[:-d] if d < len(y) else y[:0]])
        if len(y) < len(u):  # input shorter than the delay
            y = np.concatenate([y, np.zeros(len(u) - len(y))])[: len(u)]
    return y


def apply_fir_zero_phase(kernel: FirKernel, input_sequence, wrap_length: int | None = None) -> np.ndarray:
    """Apply z^forward_shift * FIR(taps): linear convolution advanced by the shift.

    With wrap_length N the input must be one N-sample period and indices wrap
    modulo N (the circular application used over one period of a memory loop).
    """
    u = np.asarray(input_sequence, dtype=float)
    if kernel.forward_shift > len(kernel.taps):
        raise ConfigurationError(
            f"forward_shift {kernel.forward_shift} exceeds tap count {len(kernel.taps)}"
        )
    if wrap_length is not None:
        if len(u) != wrap_length:
            raise ValueError(f"input length {len(u)} must equal wrap_length {wrap_length}")
        n = wrap_length
        out = np.zeros(n)
        for j, t in enumerate(kernel.taps):
            out += t * np.roll(u, j - kernel.forward_shift)
        return out
    full = np.convolve(u, kernel.taps)
    shifted = full[kernel.forward_shift : kernel.forward_shift + len(u)]
    if len(shifted) < len(u):
        shifted = np.concatenate([shifted, np.zeros(len(u) - len(shifted))])
    return shifted


class DelayLine:
    """Fixed-capacity FIFO: step() returns the sample inserted `capacity` steps ago.

    Returns zeros during warm-up.  Capacity must be positive; a budget of
    zero or less means the surrounding loop's forward shifts exceed the
    available period and is a configuration error.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ConfigurationError(f"delay line capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self._buf = [0.0] * self.capacity
        self._pos = 0

    def oldest(self) -> float:
        """Value that the next step() call will return."""
        return self._buf[self._pos]

    def push(self, value: float) -> None:
        self._buf[self._pos] = value
        self._pos = (self._pos + 1) % self.capacity

    def step(self, value: float) -> float:
        out = self._buf[self._pos]
        self.push(value)
        return out

    def contents(self) -> list[float]:
        """Last `capacity` inputs, oldest first (zeros before warm-up)."""
        return self._buf[self._pos:] + self._buf[: self._pos]

    def reset(self) -> None:
        self._buf = [0.0] * self.capacity
        self._pos = 0


class StreamingFilter:
    """Per-sample direct-form II transposed realization of a causal tf.

    Single-owner stateful counterpart of filter_stream; the pure delay is a
    FIFO on the input.
    """

    def __init__(self, tf: DiscreteTransferFunction):
        n = max(len(tf.numerator_coeffs), len(tf.denominator_coeffs))
        self._b = np.zeros(n)
        self._a = np.zeros(n)
        self._b[: len(tf.numerator_coeffs)] = tf.numerator_coeffs
        self._a[: len(tf.denominator_coeffs)] = tf.denominator_coeffs
        self._state = [0.0] * (n - 1)
        self._delay = DelayLine(tf.pure_delay) if tf.pure_delay > 0 else None

    def step(self, u: float) -> float:
        if self._delay is not None:
            u = self._delay.step(u)
        b, a, z = self._b, self._a, self._state
        y = b[0] * u + (z[0] if z else 0.0)
        for i in range(len(z) - 1):
            z[i] = b[i + 1] * u + z[i + 1] - a[i + 1] * y
        if z:
            z[-1] = b[len(z)] * u - a[len(z)] * y
        return y

    def reset(self) -> None:
        self._state = [0.0] * len(self._state)
        if self._delay is not None:
            self._delay.reset()


# -- coefficient file I/O ---------------------------------------------------
#
# Plain-text format: one header line, then one coefficient per line.
#   transfer function:  "tf <sample_time> <pure_delay>" then "num <k>" /
#                       "den <m>" section markers.
#   FIR kernel:         "fir <sample_time> <forward_shift>" then the taps.


def save_transfer_function(tf: DiscreteTransferFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"tf {float(tf.sample_time)!r} {tf.pure_delay}\n")
        fh.write(f"num {len(tf.numerator_coeffs)}\n")
        for c in tf.numerator_coeffs:
            fh.write(f"{float(c)!r}\n")
        fh.write(f"den {len(tf.denominator_coeffs)}\n")
        for c in tf.denominator_coeffs:
            fh.write(f"{float(c)!r}\n")


def load_transfer_function(path) -> DiscreteTransferFunction:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "tf":
        raise ValueError(f"{path}: expected 'tf' header, got {lines[0]!r}")
    sample_time, delay = float(head[1]), int(head[2])
    idx = 1
    sections = {}
    while idx < len(lines):
        name, count = lines[idx].split()
        count = int(count)
        vals = [float(v) for v in lines[idx + 1 : idx + 1 + count]]
        sections[name] = vals
        idx += 1 + count
    return DiscreteTransferFunction(sections["num"], sections["den"], delay, sample_time)


def save_fir_kernel(kernel: FirKernel, sample_time: float, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"fir {float(sample_time)!r} {kernel.forward_shift}\n")
        for t in kernel.taps:
            fh.write(f"{float(t)!r}\n")


def load_fir_kernel(path) -> tuple[FirKernel, float]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "fir":
        raise ValueError(f"{path}: expected 'fir' header, got {lines[0]!r}")
    sample_time, shift = float(head[1]), int(head[2])
    taps = [float(v) for v in lines[1:]]
    kernel = FirKernel(taps, shift)
    return kernel, sample_time
