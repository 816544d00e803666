"""Synthetic multipath CIR generation with controllable NLOS error statistics.

A link is rendered as a superposition of pulse-shaped path components. LOS
links put the strongest component at the geometric delay; NLOS links
attenuate it and add a dominant component at a positive excess delay, so
device-style detection is positively biased while the stored ground truth
stays geometric. The device first-path report is emulated by running the
peak detector (beta = 0.2) on the rendered CIR.

Per-link randomness derives from (seed, anchor_id, tag_idx, rep), so corpus
generation is schedule-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PhysConstants, Position2D, CirRecord
from .detectors import peak_indices
from .errors import DelayOutOfRange, NoPeakFound

# Gaussian pulse sigma (ns) matched to a -3 dB two-sided bandwidth of
# 499.2 MHz: sigma = sqrt(ln 2) / (pi * B).
DEFAULT_BANDWIDTH_GHZ = 0.4992


def gaussian_width_for_bandwidth(bandwidth_ghz: float = DEFAULT_BANDWIDTH_GHZ) -> float:
    """Gaussian sigma (ns) whose power spectrum is -3 dB at +-bandwidth/2."""
    return math.sqrt(math.log(2.0)) / (math.pi * bandwidth_ghz)


# Diffuse-tail shape constants (not exposed per scenario: the tail only has
# to stress the detectors, not model a specific site).
TAIL_MEAN_SPACING_NS = 3.0
TAIL_DECAY_NS = 12.0
TAIL_AMP_RANGE = (0.15, 0.8)

# Threshold factor of the emulated on-device first-path detector.
DEVICE_PEAK_BETA = 0.2


@dataclass(frozen=True)
class PathComponent:
    """One multipath component: magnitude and absolute delay."""

    amplitude: float
    delay_ns: float

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.delay_ns < 0:
            raise ValueError("delay_ns must be non-negative")


@dataclass(frozen=True)
class PulseShape:
    """Band-limited pulse standing in for the distorted per-path waveform.

    ``gaussian``: exp(-t^2 / (2 width^2)), width = sigma in ns.
    ``raised_cosine``: single raised-cosine lobe 0.5 (1 + cos(pi t / width))
    supported on |t| < width.
    """

    kind: str = "gaussian"
    width_ns: float = field(default_factory=gaussian_width_for_bandwidth)

    def __post_init__(self):
        if self.kind not in ("gaussian", "raised_cosine"):
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        if self.width_ns <= 0:
            raise ValueError("width_ns must be positive")

    def evaluate(self, t_ns: np.ndarray) -> np.ndarray:
        if self.kind == "gaussian":
            return np.exp(-0.5 * (t_ns / self.width_ns) ** 2)
        out = 0.5 * (1.0 + np.cos(np.pi * t_ns / self.width_ns))
        out[np.abs(t_ns) >= self.width_ns] = 0.0
        return out


@dataclass(frozen=True, kw_only=True)
class Scenario:
    """Anchor geometry, tag locations, and propagation parameters for one corpus."""

    anchors: tuple
    tag_points: tuple
    env_id: str = "synth"
    n_repetitions: int = 1
    nlos_prob: float = 0.0
    nlos_excess_delay_mean_ns: float = 8.0
    nlos_excess_delay_std_ns: float = 4.0
    nlos_first_path_atten_db: float = 12.0
    n_paths: int = 8
    noise_floor: float = 0.0
    n_samples: int = 256
    pulse: PulseShape = PulseShape()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "anchors", tuple(self.anchors))
        object.__setattr__(self, "tag_points", tuple(self.tag_points))
        if len(self.anchors) < 3:
            raise ValueError("need at least 3 anchors")
        if not self.tag_points:
            raise ValueError("need at least one tag point")
        if not 0.0 <= self.nlos_prob <= 1.0:
            raise ValueError("nlos_prob must be in [0, 1]")
        if self.nlos_first_path_atten_db < 0:
            raise ValueError("nlos_first_path_atten_db must be >= 0")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")


@dataclass(frozen=True, kw_only=True, eq=False)
class SynthRecord(CirRecord):
    """A simulated CirRecord carrying its ground truth."""

    true_toa: float
    is_nlos: bool


@dataclass
class SynthCorpus:
    """Simulated records plus the (tag_id, rep_id) -> record indices grouping."""

    records: list
    fingerprint_groups: dict


def render_cir(
    paths,
    pulse: PulseShape,
    n_samples: int,
    noise_floor: float,
    rng: np.random.Generator,
    delta_t: float = 1.0,
) -> np.ndarray:
    """Superpose pulse-shaped path components on a uniform delay grid.

    Additive white noise with std = noise_floor * max(clean) is applied to the
    magnitude and the result clipped at zero.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path component")
    horizon = n_samples * delta_t
    for p in paths:
        if p.delay_ns >= horizon:
            raise DelayOutOfRange(
                f"path delay {p.delay_ns} ns >= buffer horizon {horizon} ns"
            )
    t = np.arange(n_samples) * delta_t
    clean = np.zeros(n_samples)
    for p in paths:
        clean += p.amplitude * pulse.evaluate(t - p.delay_ns)
    if noise_floor > 0:
        noise = rng.normal(0.0, noise_floor * clean.max(), n_samples)
        return np.clip(clean + noise, 0.0, None)
    return clean


def link_rng(scenario: Scenario, anchor_id: int, tag_idx: int, rep: int) -> np.random.Generator:
    """Deterministic per-link generator; independent of generation order."""
    return np.random.default_rng(
        np.random.SeedSequence((scenario.seed, anchor_id, tag_idx, rep))
    )


def simulate_link(
    anchor: Position2D,
    tag: Position2D,
    scenario: Scenario,
    rng: np.random.Generator,
    *,
    anchor_id: int = 0,
    tag_id: int = 0,
    rep_id: int = 0,
    k: PhysConstants = PhysConstants(),
) -> SynthRecord:
    """Simulate one anchor-tag CIR and emulate the device's first-path report."""
    dist_cm = anchor.distance_to(tag)
    true_toa = dist_cm / (k.c * k.delta_t)
    direct_ns = true_toa * k.delta_t

    is_nlos = bool(rng.random() < scenario.nlos_prob)
    paths = []
    if is_nlos:
        excess_ns = max(
            rng.normal(
                scenario.nlos_excess_delay_mean_ns, scenario.nlos_excess_delay_std_ns
            ),
            0.0,
        )
        direct_amp = 10.0 ** (-scenario.nlos_first_path_atten_db / 20.0)
        paths.append(PathComponent(direct_amp, direct_ns))
        tail_origin = direct_ns + excess_ns
        paths.append(PathComponent(1.0, tail_origin))
    else:
        paths.append(PathComponent(1.0, direct_ns))
        tail_origin = direct_ns

    horizon = scenario.n_samples * k.delta_t
    if tail_origin >= horizon:
        raise DelayOutOfRange(
            f"link at {dist_cm:.1f} cm needs more than {scenario.n_samples} samples"
        )

    delay = tail_origin
    for _ in range(scenario.n_paths - len(paths)):
        delay += rng.exponential(TAIL_MEAN_SPACING_NS)
        amp = rng.uniform(*TAIL_AMP_RANGE) * math.exp(
            -(delay - tail_origin) / TAIL_DECAY_NS
        )
        if delay < horizon and amp > 1e-4:
            paths.append(PathComponent(amp, delay))

    samples = render_cir(
        paths, scenario.pulse, scenario.n_samples, scenario.noise_floor, rng, k.delta_t
    )

    fp_idx = int(peak_indices(samples, DEVICE_PEAK_BETA)[0])
    if fp_idx < 0:
        raise NoPeakFound("emulated detector found no first path")
    toa_dwm = float(fp_idx)
    range_err_cm = (toa_dwm - true_toa) * k.c * k.delta_t

    return SynthRecord(
        env_id=scenario.env_id,
        anchor_id=anchor_id,
        tag_id=tag_id,
        rep_id=rep_id,
        samples=samples,
        first_path_idx=fp_idx,
        toa_dwm=toa_dwm,
        anchor_pos=anchor,
        tag_pos=tag,
        range_err_cm=range_err_cm,
        true_toa=true_toa,
        is_nlos=is_nlos,
    )


def generate_corpus(scenario: Scenario, k: PhysConstants = PhysConstants()) -> SynthCorpus:
    """One record per (anchor, tag point, repetition), grouped per fingerprint set."""
    records = []
    groups = {}
    for tag_idx, tag in enumerate(scenario.tag_points):
        for rep in range(scenario.n_repetitions):
            group = []
            for anchor_id, anchor in enumerate(scenario.anchors):
                rng = link_rng(scenario, anchor_id, tag_idx, rep)
                rec = simulate_link(
                    anchor,
                    tag,
                    scenario,
                    rng,
                    anchor_id=anchor_id,
                    tag_id=tag_idx,
                    rep_id=rep,
                    k=k,
                )
                group.append(len(records))
                records.append(rec)
            groups[(tag_idx, rep)] = group
    return SynthCorpus(records=records, fingerprint_groups=groups)


def grid_points(nx: int, ny: int, x0: float, y0: float, x1: float, y1: float):
    """Regular nx-by-ny grid of tag points spanning [x0, x1] x [y0, y1]."""
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    return tuple(Position2D(float(x), float(y)) for y in ys for x in xs)


def scenario_from_config(config: dict) -> Scenario:
    """Build a Scenario from a parsed key=value mapping.

    Point lists use ``x,y; x,y; ...``; tag points also accept the shorthand
    ``grid:NXxNY:x0,y0:x1,y1``.
    """
    def parse_points(text: str):
        pts = []
        for chunk in text.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            x, y = chunk.split(",")
            pts.append(Position2D(float(x), float(y)))
        return tuple(pts)

    def parse_tag_points(text: str):
        text = text.strip()
        if text.startswith("grid:"):
            _, shape, p0, p1 = text.split(":")
            nx, ny = shape.lower().split("x")
            x0, y0 = p0.split(",")
            x1, y1 = p1.split(",")
            return grid_points(int(nx), int(ny), float(x0), float(y0), float(x1), float(y1))
        return parse_points(text)

    pulse_kind = config.get("pulse_kind", "gaussian")
    if "pulse_width_ns" in config:
        pulse = PulseShape(kind=pulse_kind, width_ns=float(config["pulse_width_ns"]))
    else:
        pulse = PulseShape(kind=pulse_kind)

    return Scenario(
        anchors=parse_points(config["anchors"]),
        tag_points=parse_tag_points(config["tag_points"]),
        env_id=config.get("env_id", "synth"),
        n_repetitions=int(config.get("n_repetitions", 1)),
        nlos_prob=float(config.get("nlos_prob", 0.0)),
        nlos_excess_delay_mean_ns=float(config.get("nlos_excess_delay_mean_ns", 8.0)),
        nlos_excess_delay_std_ns=float(config.get("nlos_excess_delay_std_ns", 4.0)),
        nlos_first_path_atten_db=float(config.get("nlos_first_path_atten_db", 12.0)),
        n_paths=int(config.get("n_paths", 8)),
        noise_floor=float(config.get("noise_floor", 0.0)),
        n_samples=int(config.get("n_samples", 256)),
        pulse=pulse,
        seed=int(config.get("seed", 0)),
    )
