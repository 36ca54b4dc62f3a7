"""Experiment configuration: INI files with one section per pipeline stage.

Example
-------
::

    [metric]
    kind = weierstrass
    tau = 2.0
    amplitude = 0.15
    depth = 8
    seed = 1

    [discretization]
    n = 1024
    N = 128

Every numeric field is checked against the preconditions of the module that
consumes it when the file is loaded, so a bad file fails before any work is
done.
"""

import configparser
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

from .dyadic import TWO_PI
from .errors import PreconditionError
from .io import stable_hash

PRESETS = ("flat-d1", "flat-d2", "rough-tau2.7", "rough-C11", "rough-tau3.5")
STAGES = ("spectrum", "kernel", "norm", "wavefront", "compare")
CACHE_POLICIES = ("use", "refresh", "off")


@dataclass(frozen=True)
class MetricSection:
    kind: str = "flat"
    dim: int = 1
    mass: float = 1.0
    period: float = TWO_PI
    tau: float = math.inf
    amplitude: float = 0.0
    depth: int = 0
    seed: int = 0


@dataclass(frozen=True)
class DiscretizationSection:
    n: int = 512
    N: int = 128


@dataclass(frozen=True)
class KernelSection:
    nt: int = 17
    dt: float = 0.05
    x_stride: int = 16
    causal_N: Tuple[int, ...] = (64, 128, 256)
    source_radius: float = 0.3
    unrelated_limit: Optional[float] = 1e-2


@dataclass(frozen=True)
class NormSection:
    n: int = 4096
    N_list: Tuple[int, ...] = (64, 128, 256, 512, 1024)
    s_orders: Tuple[float, ...] = (-0.75, 0.25)
    window_radius: float = 1.0
    growth_from: int = 256
    growth_to: int = 512


@dataclass(frozen=True)
class WavefrontSection:
    mode: str = "auto"
    radius: float = 0.75
    alpha: float = 8.0
    half_angle_deg: float = 8.0
    shells: Tuple[int, ...] = (3, 4, 5, 6)
    threshold: Optional[float] = None
    bases: Tuple[Tuple[float, ...], ...] = ((0, 0, 0, 0), (1, 1, 0, 0), (1, -1, 0, 0), (-1, 1, 0, 0),
                                            (1.5, 0, 0, 0), (0, 2, 0, 0), (1, 3, 0, 0))
    times: Tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
    s0: float = 0.0
    y0_index: int = 0
    n_directions: int = 64
    sigma_b: float = 1.0
    n_samples: int = 4096


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``hash`` covers everything that influences numerical results; output
    location, thread count and cache policy are excluded.
    """

    name: str = "custom"
    metric: MetricSection = field(default_factory=MetricSection)
    discretization: DiscretizationSection = field(default_factory=DiscretizationSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    norm: NormSection = field(default_factory=NormSection)
    wavefront: WavefrontSection = field(default_factory=WavefrontSection)
    stages: Tuple[str, ...] = STAGES
    seed: int = 0
    out: str = "wflab-out"
    cache: str = "use"
    threads: int = 1

    def science(self) -> dict:
        d = asdict(self)
        for k in ("out", "cache", "threads", "name", "stages"):
            d.pop(k)
        return d

    @property
    def hash(self) -> str:
        return stable_hash(self.science())

    def subset_hash(self, *sections: str) -> str:
        d = self.science()
        return stable_hash({k: d[k] for k in sections})

    def with_overrides(self, out=None, threads=None, seed=None) -> "ExperimentConfig":
        kw = {}
        if out is not None:
            kw["out"] = str(out)
        if threads is not None:
            kw["threads"] = int(threads)
        if seed is not None:
            kw["seed"] = int(seed)
        cfg = replace(self, **kw)
        validate(cfg)
        return cfg

    def build_metric(self):
        from .spectral import MetricModel

        m = self.metric
        if m.kind == "flat":
            return MetricModel.flat(m.dim, m.mass, m.period)
        if m.kind == "weierstrass":
            return MetricModel.weierstrass(m.tau, m.amplitude, m.depth, m.dim, m.mass, m.seed, m.period)
        raise PreconditionError("rule metric.kind: expected flat or weierstrass, got %r" % m.kind)


def _tuple(text, conv):
    return tuple(conv(v) for v in text.replace(",", " ").split())


def _points(text):
    return tuple(_tuple(chunk, float) for chunk in text.split(";") if chunk.strip())


def _threshold(text):
    return None if text.strip().lower() in ("auto", "none") else float(text)


_PARSERS = {
    "metric": (MetricSection, {"kind": str, "dim": int, "mass": float, "period": float, "tau": float,
                               "amplitude": float, "depth": int, "seed": int}),
    "discretization": (DiscretizationSection, {"n": int, "N": int}),
    "kernel": (KernelSection, {"nt": int, "dt": float, "x_stride": int, "causal_N": lambda s: _tuple(s, int),
                               "source_radius": float, "unrelated_limit": _threshold}),
    "norm": (NormSection, {"n": int, "N_list": lambda s: _tuple(s, int), "s_orders": lambda s: _tuple(s, float),
                           "window_radius": float, "growth_from": int, "growth_to": int}),
    "wavefront": (WavefrontSection, {"mode": str, "radius": float, "alpha": float, "half_angle_deg": float,
                                     "shells": lambda s: _tuple(s, int), "threshold": _threshold,
                                     "bases": _points, "times": lambda s: _tuple(s, float), "s0": float,
                                     "y0_index": int, "n_directions": int, "sigma_b": float,
                                     "n_samples": int}),
}


def parse_config(text: str, name: str = "custom") -> ExperimentConfig:
    """Parse INI text into a validated :class:`ExperimentConfig`.

    Raises
    ------
    PreconditionError
        Unknown sections or keys, unparsable values, or a violated rule.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise PreconditionError("malformed config: %s" % exc) from exc
    kw = {}
    for section in cp.sections():
        if section == "run":
            continue
        if section not in _PARSERS:
            raise PreconditionError("unknown config section [%s]" % section)
        cls, fields = _PARSERS[section]
        values = {}
        for key, raw in cp.items(section):
            if key not in fields:
                raise PreconditionError("unknown key %s.%s" % (section, key))
            try:
                values[key] = fields[key](raw)
            except ValueError as exc:
                raise PreconditionError("bad value for %s.%s: %r" % (section, key, raw)) from exc
        kw[section] = cls(**values)
    if cp.has_section("run"):
        run = dict(cp.items("run"))
        unknown = set(run) - {"name", "stages", "seed", "out", "cache", "threads"}
        if unknown:
            raise PreconditionError("unknown key run.%s" % sorted(unknown)[0])
        if "name" in run:
            name = run["name"]
        if "stages" in run:
            kw["stages"] = _tuple(run["stages"], str)
        for key, conv in (("seed", int), ("out", str), ("cache", str), ("threads", int)):
            if key in run:
                try:
                    kw[key] = conv(run[key])
                except ValueError as exc:
                    raise PreconditionError("bad value for run.%s: %r" % (key, run[key])) from exc
    cfg = ExperimentConfig(name=name, **kw)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise PreconditionError("config file not found: %s" % p)
    return parse_config(p.read_text(), name=p.stem)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise PreconditionError("unknown preset %r (choose from %s)" % (name, ", ".join(PRESETS)))
    return resources.files("wflab.presets").joinpath(name + ".ini").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name), name=name)


def _rule(ok: bool, rule: str):
    if not ok:
        raise PreconditionError("rule %s violated" % rule)


def validate(cfg: ExperimentConfig) -> None:
    """Check every field against the preconditions of its consumer.

    Raises
    ------
    PreconditionError
        Message names the violated rule.
    """
    m, d, k, nm, w = cfg.metric, cfg.discretization, cfg.kernel, cfg.norm, cfg.wavefront
    _rule(m.kind in ("flat", "weierstrass"), "metric.kind in {flat, weierstrass}")
    _rule(m.dim in (1, 2), "metric.dim in {1, 2}")
    _rule(m.mass > 0, "metric.mass > 0")
    _rule(m.period > 0, "metric.period > 0")
    _rule(d.n >= 8 and d.n & (d.n - 1) == 0, "discretization.n is a power of two >= 8")
    _rule(1 <= d.N <= d.n ** m.dim // 4, "discretization.N <= n^d/4")
    _rule(nm.n >= 8 and nm.n & (nm.n - 1) == 0, "norm.n is a power of two >= 8")
    _rule(all(1 <= N <= nm.n ** m.dim // 4 for N in nm.N_list), "norm.N_list <= norm.n^d/4")
    _rule(list(nm.N_list) == sorted(set(nm.N_list)) and len(nm.N_list) >= 3, "norm.N_list increasing, >= 3 entries")
    _rule(nm.growth_from in nm.N_list and nm.growth_to in nm.N_list, "norm.growth_from/to in norm.N_list")
    _rule(all(-2 <= s <= 2 for s in nm.s_orders), "norm.s_orders in [-2, 2]")
    _rule(nm.window_radius > 0, "norm.window_radius > 0")
    _rule(k.nt >= 3 and k.dt > 0 and k.x_stride >= 1, "kernel.nt >= 3, kernel.dt > 0, kernel.x_stride >= 1")
    _rule(all(1 <= N <= d.n ** m.dim // 4 for N in k.causal_N), "kernel.causal_N <= n^d/4")
    _rule(0 < w.half_angle_deg <= 45, "wavefront.half_angle_deg in (0, 45]")
    _rule(w.radius > 0 and w.alpha > 0, "wavefront.radius > 0 and wavefront.alpha > 0")
    _rule(len(w.shells) >= 4 and list(w.shells) == list(range(w.shells[0], w.shells[0] + len(w.shells))),
          "wavefront.shells are >= 4 consecutive integers")
    _rule(w.mode in ("auto", "doubled", "column", "off"), "wavefront.mode in {auto, doubled, column, off}")
    _rule(all(len(b) == 4 for b in w.bases), "wavefront.bases are (t, x, s, y) points")
    _rule(0 <= w.y0_index < d.n, "wavefront.y0_index < n")
    _rule(w.n_directions >= 16 and w.n_samples >= 256, "wavefront.n_directions >= 16, n_samples >= 256")
    _rule(set(cfg.stages) <= set(STAGES), "run.stages within %s" % (STAGES,))
    _rule(cfg.cache in CACHE_POLICIES, "run.cache in %s" % (CACHE_POLICIES,))
    _rule(cfg.threads >= 1, "run.threads >= 1")
    if m.kind == "weierstrass":
        _rule(m.tau > 0 and m.amplitude > 0 and m.depth >= 1, "weierstrass tau, amplitude > 0 and depth >= 1")
        _rule(2 ** m.depth < d.n / 2, "weierstrass 2^depth below the grid Nyquist n/2")
        try:
            cfg.build_metric()
        except PreconditionError as exc:
            raise PreconditionError("rule metric constructible violated: %s" % exc) from exc
