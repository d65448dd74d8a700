"""Blower-hose-patient simulation.

The pressure path is: control command -> blower delay queue -> first-order
blower lag (exact zero-order-hold discretization) -> outlet pressure ->
static three-resistor airway node (hose, leak, lung branches) -> lung
pressure integration (exact ZOH of the equivalent one-pole RC dynamics) ->
measurement delay queue -> measured airway pressure.

The streaming simulator and the closed-form transfer function are derived
from the same recursions, so they agree sample-by-sample to float rounding;
tests lean on that as a mutual oracle.
"""

from __future__ import annotations

import configparser
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .lti import DiscreteTransferFunction


@dataclass
class PatientScenario:
    """Lung parameters and ventilator settings for one standardized scenario."""

    r_lung: float          # mbar s / L
    c_lung: float          # L / mbar
    respiratory_rate: float  # breaths / min
    peep: float            # mbar
    ipap: float            # mbar
    t_insp: float          # s
    t_exp: float           # s
    name: str = "scenario"

    def __post_init__(self):
        if self.r_lung <= 0 or self.c_lung <= 0:
            raise ValueError("r_lung and c_lung must be positive")
        period = 60.0 / self.respiratory_rate
        if abs(self.t_insp + self.t_exp - period) > 1e-9:
            raise ValueError(
                f"t_insp + t_exp = {self.t_insp + self.t_exp} s does not match "
                f"60/respiratory_rate = {period} s"
            )
        # equality allowed so a flat (zero-amplitude) profile is constructible
        if not (self.ipap >= self.peep >= 0):
            raise ValueError("require ipap >= peep >= 0")

    @property
    def period_s(self) -> float:
        return self.t_insp + self.t_exp


@dataclass
class CircuitParameters:
    """Hose/leak resistances, blower lag, and the loop delay split."""

    r_hose: float = 5.0            # mbar s / L
    r_leak: float = 50.0           # mbar s / L
    blower_time_constant: float = 0.010   # s
    blower_delay_samples: int = 6
    measurement_delay_samples: int = 6
    sample_time: float = 0.002     # s

    def __post_init__(self):
        if self.r_hose <= 0 or self.r_leak <= 0:
            raise ValueError("r_hose and r_leak must be positive")
        if self.blower_time_constant < 0:
            raise ValueError("blower_time_constant must be nonnegative")
        if self.blower_delay_samples < 0 or self.measurement_delay_samples < 0:
            raise ValueError("delay sample counts must be nonnegative")
        if self.sample_time <= 0:
            raise ValueError("sample_time must be positive")

    @property
    def total_delay_samples(self) -> int:
        return self.blower_delay_samples + self.measurement_delay_samples


def airway_pressure_node(p_out: float, p_lung: float, circuit: CircuitParameters,
                         patient: PatientScenario):
    """Solve the static flow balance at the airway node.

    (p_out - p_aw)/R_hose = p_aw/R_leak + (p_aw - p_lung)/R_lung.
    Returns (p_aw, q_out, q_leak, q_pat) in (mbar, L/s, L/s, L/s).
    """
    g_hose = 1.0 / circuit.r_hose
    g_leak = 1.0 / circuit.r_leak
    g_lung = 1.0 / patient.r_lung
    p_aw = (p_out * g_hose + p_lung * g_lung) / (g_hose + g_leak + g_lung)
    q_out = (p_out - p_aw) * g_hose
    q_leak = p_aw * g_leak
    q_pat = (p_aw - p_lung) * g_lung
    return p_aw, q_out, q_leak, q_pat


@dataclass
class PlantState:
    """Mutable state of one simulator instance."""

    p_lung: float = 0.0
    blower_lag_state: float = 0.0
    blower_queue: deque = field(default_factory=deque)
    measurement_queue: deque = field(default_factory=deque)


class VentilatorPlant:
    """Streaming simulator of the blower-hose-patient chain.

    Single-owner: one instance per experiment.  `measurement_noise_rms`
    enables the optional additive sensor-noise hook used for identification
    realism; it defaults to off and never affects the underlying dynamics.
    """

    def __init__(self, patient: PatientScenario, circuit: CircuitParameters | None = None,
                 measurement_noise_rms: float = 0.0, seed: int | None = None):
        self.patient = patient
        self.circuit = circuit or CircuitParameters()
        self.measurement_noise_rms = float(measurement_noise_rms)
        self._rng = np.random.default_rng(seed)
        c = self.circuit
        g_hose = 1.0 / c.r_hose
        g_leak = 1.0 / c.r_leak
        g_lung = 1.0 / patient.r_lung
        g_total = g_hose + g_leak + g_lung
        self._g_hose, self._g_leak, self._g_lung, self._g_total = g_hose, g_leak, g_lung, g_total
        # blower lag pole; output sampled at the end of the ZOH interval so a
        # zero time constant degenerates to exact pass-through
        self._a_blower = math.exp(-c.sample_time / c.blower_time_constant) \
            if c.blower_time_constant > 0 else 0.0
        # lung node reduces to dp_lung/dt = (k_dc*p_out - p_lung) * beta / c_lung
        # (k_dc in conductance form so an infinite leak resistance stays finite)
        self._k_dc = g_hose / (g_hose + g_leak)
        beta = (g_hose + g_leak) / (patient.r_lung * g_total)
        self._a_lung = math.exp(-beta * c.sample_time / patient.c_lung)
        self.reset()

    def reset(self) -> None:
        c = self.circuit
        self.state = PlantState(
            blower_queue=deque([0.0] * c.blower_delay_samples),
            measurement_queue=deque([0.0] * c.measurement_delay_samples),
        )
        self._pending_noise = None

    def _sample_noise(self) -> float:
        # one draw per sample, shared between peek_measurement() and step()
        if self.measurement_noise_rms <= 0.0:
            return 0.0
        if self._pending_noise is None:
            self._pending_noise = self.measurement_noise_rms * self._rng.standard_normal()
        return self._pending_noise

    def peek_measurement(self) -> float:
        """Measured airway pressure for the current sample, before step().

        Requires measurement_delay_samples >= 1 (otherwise the measurement
        depends on the yet-unknown control input of this sample).
        """
        if self.circuit.measurement_delay_samples < 1:
            raise ConfigurationError(
                "peek_measurement needs measurement_delay_samples >= 1"
            )
        return self.state.measurement_queue[0] + self._sample_noise()

    def step(self, p_control: float):
        """Advance one sample; returns (measured_p_aw, q_pat) for this sample."""
        st = self.state
        c = self.circuit
        # blower delay queue
        if c.blower_delay_samples > 0:
            st.blower_queue.append(p_control)
            u_delayed = st.blower_queue.popleft()
        else:
            u_delayed = p_control
        # blower lag, output at end of interval
        p_out = self._a_blower * st.blower_lag_state + (1.0 - self._a_blower) * u_delayed
        # static airway node
        p_aw = (p_out * self._g_hose + st.p_lung * self._g_lung) / self._g_total
        q_pat = (p_aw - st.p_lung) * self._g_lung
        self.last_flows = (
            p_aw,
            (p_out - p_aw) * self._g_hose,   # q_out
            p_aw * self._g_leak,             # q_leak
            q_pat,
        )
        # measurement delay queue
        if c.measurement_delay_samples > 0:
            st.measurement_queue.append(p_aw)
            measured = st.measurement_queue.popleft()
        else:
            measured = p_aw
        measured += self._sample_noise()
        self._pending_noise = None
        # state updates (exact ZOH over the step)
        st.p_lung = self._a_lung * st.p_lung + (1.0 - self._a_lung) * self._k_dc * p_out
        st.blower_lag_state = p_out
        return measured, q_pat

    def closed_form_tf(self) -> DiscreteTransferFunction:
        """Exact transfer function from p_control to measured p_aw.

        Matches step() sample-by-sample; the delay field carries the full
        blower + measurement delay.
        """
        c = self.circuit
        a_b, a_l = self._a_blower, self._a_lung
        c0 = self._g_hose / self._g_total
        c1 = -a_l * c0 + self._k_dc * (1.0 - a_l) * self._g_lung / self._g_total
        num = np.convolve([1.0 - a_b] if a_b > 0 else [1.0], [c0, c1])
        den = np.convolve([1.0, -a_b] if a_b > 0 else [1.0], [1.0, -a_l])
        return DiscreteTransferFunction(num, den, c.total_delay_samples, c.sample_time)


def reference_profile(scenario: PatientScenario, sample_time: float,
                      smoothing_rise_time: float | None = None) -> np.ndarray:
    """One period of the target pressure: PEEP -> IPAP -> PEEP square wave.

    N = round(period/sample_time) samples.  Optional first-order smoothing of
    the edges with the given rise time; the smoothed profile is the exact
    periodic steady state of a one-pole filter, so it stays N-periodic.
    """
    if sample_time <= 0:
        raise ConfigurationError("sample_time must be positive")
    n_insp = round(scenario.t_insp / sample_time)
    n_total = round(scenario.period_s / sample_time)
    if abs(scenario.t_insp - n_insp * sample_time) > sample_time / 2 or n_total <= 0:
        raise ConfigurationError(
            f"sample_time {sample_time} s does not divide the breath timing"
        )
    if n_total <= 0:
        raise ConfigurationError("profile needs at least one sample")
    profile = np.full(n_total, float(scenario.peep))
    profile[:n_insp] = scenario.ipap
    if smoothing_rise_time is not None and smoothing_rise_time > 0:
        a = math.exp(-sample_time / smoothing_rise_time)
        # periodic steady state: fixed point of the one-pole recursion over N
        forced = 0.0
        for x in profile:
            forced = a * forced + (1 - a) * x
        s = forced / (1.0 - a ** n_total)
        out = np.empty_like(profile)
        for k, x in enumerate(profile):
            s = a * s + (1 - a) * x
            out[k] = s
        profile = out
    return profile


# -- scenario config files ----------------------------------------------------
#
# INI-style files with [patient], [ventilator], [circuit] sections; the three
# canonical files (adult.cfg, pediatric.cfg, baby.cfg) ship with the package.

_SCENARIO_DIR = Path(__file__).parent / "scenarios"


def builtin_scenario_path(name: str) -> Path:
    path = _SCENARIO_DIR / f"{name}.cfg"
    if not path.exists():
        known = sorted(p.stem for p in _SCENARIO_DIR.glob("*.cfg"))
        raise ConfigurationError(f"unknown scenario {name!r}; built-ins: {known}")
    return path


def resolve_scenario_path(name_or_path) -> Path:
    """Accept a filesystem path or a built-in scenario name (with/without .cfg)."""
    p = Path(name_or_path)
    if p.exists():
        return p
    return builtin_scenario_path(p.stem if p.suffix == ".cfg" else str(name_or_path))


def load_scenario(path) -> tuple[PatientScenario, CircuitParameters]:
    path = resolve_scenario_path(path)
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigurationError(f"cannot read scenario file {path}")
    try:
        pat = cp["patient"]
        vent = cp["ventilator"]
        scenario = PatientScenario(
            r_lung=pat.getfloat("r_lung"),
            c_lung=pat.getfloat("c_lung"),
            respiratory_rate=vent.getfloat("respiratory_rate"),
            peep=vent.getfloat("peep"),
            ipap=vent.getfloat("ipap"),
            t_insp=vent.getfloat("t_insp"),
            t_exp=vent.getfloat("t_exp"),
            name=pat.get("name", Path(path).stem),
        )
        circ = cp["circuit"] if cp.has_section("circuit") else {}
        defaults = CircuitParameters()
        circuit = CircuitParameters(
            r_hose=float(circ.get("r_hose", defaults.r_hose)),
            r_leak=float(circ.get("r_leak", defaults.r_leak)),
            blower_time_constant=float(circ.get("blower_time_constant",
                                                defaults.blower_time_constant)),
            blower_delay_samples=int(circ.get("blower_delay_samples",
                                              defaults.blower_delay_samples)),
            measurement_delay_samples=int(circ.get("measurement_delay_samples",
                                                   defaults.measurement_delay_samples)),
            sample_time=float(circ.get("sample_time", defaults.sample_time)),
        )
    except (KeyError, configparser.Error) as exc:
        raise ConfigurationError(f"scenario file {path} is incomplete: {exc}") from exc
    return scenario, circuit


def save_scenario(scenario: PatientScenario, circuit: CircuitParameters, path) -> None:
    cp = configparser.ConfigParser()
    cp["patient"] = {
        "name": scenario.name,
        "r_lung": repr(scenario.r_lung),
        "c_lung": repr(scenario.c_lung),
    }
    cp["ventilator"] = {
        "respiratory_rate": repr(scenario.respiratory_rate),
        "peep": repr(scenario.peep),
        "ipap": repr(scenario.ipap),
        "t_insp": repr(scenario.t_insp),
        "t_exp": repr(scenario.t_exp),
    }
    cp["circuit"] = {
        "r_hose": repr(circuit.r_hose),
        "r_leak": repr(circuit.r_leak),
        "blower_time_constant": repr(circuit.blower_time_constant),
        "blower_delay_samples": str(circuit.blower_delay_samples),
        "measurement_delay_samples": str(circuit.measurement_delay_samples),
        "sample_time": repr(circuit.sample_time),
    }
    with open(path, "w") as fh:
        cp.write(fh)
