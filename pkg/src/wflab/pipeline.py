"""Staged experiment pipeline: spectrum -> kernel -> norm -> wavefront -> compare.

Each stage writes CSV/JSON artifacts into ``<out>/<name>-<hash8>/`` and adds
verdicts (named checks with a value and a limit) to the run record. Bases
and sampled kernels are cached under ``<out>/cache`` keyed by hashes of the
config sections they depend on; a cache whose header hash differs is never
loaded. Run records are appended to ``<out>/runs.jsonl``.
"""

import csv
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import STAGES, ExperimentConfig
from .errors import CacheMismatchError, NumericalDiagnostic, PreconditionError, WflabError
from .io import read_container, write_container

log = logging.getLogger("wflab")

KERNEL_MAGIC = b"WFLAB-KERNEL\x00\x00\x00\x00"


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float
    limit: str

    def as_dict(self):
        v = self.value
        return {"name": self.name, "passed": bool(self.passed),
                "value": None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v,
                "limit": self.limit}


@dataclass
class RunRecord:
    """Append-only record of one pipeline run."""

    name: str
    config_hash: str
    versions: dict
    stages: List[str]
    timings: dict = field(default_factory=dict)
    verdicts: List[dict] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    status: str = "ok"
    error: Optional[str] = None
    started: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(v["passed"] for v in self.verdicts)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _versions() -> dict:
    import numpy
    import scipy

    out = {"wflab": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
           "python": platform.python_version()}
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["numba"] = None
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


class Pipeline:
    """Run context holding the config, output paths and lazily built objects."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = Path(cfg.out)
        self.dir = self.root / ("%s-%s" % (cfg.name, cfg.hash[:8]))
        self.cache_dir = self.root / "cache"
        self.dir.mkdir(parents=True, exist_ok=True)
        if cfg.cache != "off":
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.metric = cfg.build_metric()
        self._basis = None
        self.record = RunRecord(cfg.name, cfg.hash, _versions(), [])
        self.verdicts: List[Verdict] = []

    # -- helpers -------------------------------------------------------------

    def check(self, name: str, passed: bool, value, limit: str):
        v = Verdict(name, bool(passed), _clean(float(value)) if value is not None else None, limit)
        self.verdicts.append(v)
        log.info("%-32s %s  value=%s  limit=%s", name, "PASS" if passed else "FAIL", value, limit)

    def basis(self):
        """Eigenbasis for ``discretization``, loaded from or stored to the cache."""
        if self._basis is not None:
            return self._basis
        from .spectral import load_basis, save_basis, solve

        key = self.cfg.subset_hash("metric", "discretization")
        path = self.cache_dir / ("basis-%s.bin" % key[:16])
        if self.cfg.cache == "use" and path.exists():
            try:
                self._basis = load_basis(path, self.metric, key)
                log.info("loaded cached basis %s", path.name)
                return self._basis
            except CacheMismatchError:
                log.warning("cache %s does not match this config; recomputing", path.name)
        d = self.cfg.discretization
        self._basis = solve(self.metric, d.n, d.N)
        if self.cfg.cache != "off":
            save_basis(path, self._basis, key)
        return self._basis

    # -- stages --------------------------------------------------------------

    def stage_spectrum(self):
        from .spectral import residuals, weyl_check

        b = self.basis()
        d = self.metric.dim
        res = float(np.max(residuals(_pair_for(self), b))) if self.cfg.discretization.n ** d <= 4096 else None
        rows = [(j, lam, lam * lam) for j, lam in enumerate(b.lambdas)]
        write_csv(self.dir / "spectrum.csv", ["index", "lambda", "lambda_sq"], rows)
        if self.metric.kind == "flat":
            exact = flat_spectrum(d, self.cfg.discretization.n, self.metric.mass, b.N)
            sel = b.lambdas <= self.cfg.discretization.n / 4
            err = float(np.max(np.abs(b.lambdas[sel] ** 2 - exact[sel]) / exact[sel]))
            self.check("spectrum.flat_exact", err <= 1e-10, err, "<= 1e-10")
        lo, hi = max(20, -(-b.N // 10)), min(200, b.N)
        fit = weyl_check(b, d, (lo, hi))
        rel = abs(fit.slope - 1.0 / d) * d
        self.check("spectrum.weyl_slope", rel <= 0.1, fit.slope, "within 10%% of 1/%d" % d)
        if res is not None:
            self.check("spectrum.residual", res <= 1e-8, res, "<= 1e-8")
        self.record.results["spectrum"] = {"N": b.N, "method": b.method, "weyl_slope": fit.slope,
                                           "weyl_range": [lo, hi]}

    def stage_kernel(self):
        from .propagator import KernelGrid, apply_G, build_kernel, column_kernel
        from .microlocal import causal_future_mask
        from .dyadic import bump

        b = self.basis()
        k = self.cfg.kernel
        N = self.cfg.discretization.N
        npts = int(np.prod(b.grid_shape))
        grid = KernelGrid.symmetric(k.dt, k.nt, np.arange(0, npts, k.x_stride))
        key = self.cfg.subset_hash("metric", "discretization", "kernel")
        path = self.cache_dir / ("kernel-%s.bin" % key[:16])
        KG = None
        if self.cfg.cache == "use" and path.exists():
            try:
                header, arr = read_container(path, KERNEL_MAGIC, {"config_hash": key})
                from .propagator import SampledKernel

                KG = SampledKernel("K_G", N, grid, arr["table"], int(header["lag_min"]), b)
            except CacheMismatchError:
                log.warning("kernel cache does not match; recomputing")
        if KG is None:
            KG = build_kernel(b, "K_G", N, grid)
            if self.cfg.cache != "off":
                write_container(path, KERNEL_MAGIC, {"config_hash": key, "lag_min": int(KG.lag_min)},
                                {"table": KG.table})
        KD = build_kernel(b, "dt_K_A", N, grid)
        scale = float(np.max(np.abs(KG.table)))
        anti = KG.antisymmetry_defect()
        trans = KG.translation_defect()
        dev = float(np.max(np.abs(KG.table - KD.table)))
        self.check("kernel.antisymmetry", anti <= 1e-12 * max(1.0, scale), anti, "<= 1e-12")
        self.check("kernel.translation", trans <= 1e-12 * max(1.0, scale), trans, "<= 1e-12")
        self.check("kernel.dt_KA_equals_KG", dev <= 1e-10, dev, "<= 1e-10")
        results = {"antisymmetry": anti, "translation": trans, "dt_KA_deviation": dev, "scale": scale}
        if self.metric.dim == 1:
            x = np.asarray(b.coords()).ravel()
            t = np.linspace(-1.0, 2.5, 701)
            r = k.source_radius
            v = bump(np.sqrt((t[:, None] / r) ** 2 + ((x[None, :] - x[x.size // 2]) / r) ** 2), 1.0)
            mask = causal_future_mask(self.metric, t, x, v > 0)
            leaks = []
            for Nc in k.causal_N:
                u = apply_G(b, v, t, "retarded", N=Nc)
                leaks.append(float(np.sqrt(np.sum(u[~mask] ** 2) / np.sum(u ** 2))))
            mono = all(a > c for a, c in zip(leaks, leaks[1:]))
            self.check("kernel.causal_leak", leaks[-1] <= 1e-2, leaks[-1], "<= 1e-2")
            self.check("kernel.causal_leak_monotone", mono, float(mono), "decreasing in N")
            col = column_kernel(b, N, 0.0, 0, np.array([1.0]))[0]
            dist = self.metric.optical_distance(x, x[0])
            cone = float(np.max(np.abs(col[np.abs(dist - 1.0) <= 2 * b.spacing])))
            far = float(np.max(np.abs(col[dist >= 1.5])))
            if k.unrelated_limit is not None:
                self.check("kernel.unrelated_ratio", far <= k.unrelated_limit * cone, far / cone,
                           "<= %g" % k.unrelated_limit)
            write_csv(self.dir / "causal.csv", ["N", "leak"], list(zip(k.causal_N, leaks)))
            results.update(causal_leaks=leaks, unrelated_ratio=far / cone)
        write_json(self.dir / "kernel_checks.json", {"config_hash": self.cfg.hash, **results})
        self.record.results["kernel"] = results

    def stage_norm(self):
        from .propagator import WindowFunction, kernel_norm_experiment
        from .spectral import solve

        nm = self.cfg.norm
        d = self.metric.dim
        disc = self.cfg.discretization
        need = max(nm.N_list)
        if nm.n == disc.n and need <= disc.N:
            lam = self.basis().lambdas
        elif self.metric.kind == "flat":
            lam = np.sqrt(flat_spectrum(d, nm.n, self.metric.mass, need))
        else:
            lam = solve(self.metric, nm.n, need).lambdas
        window = WindowFunction(0.0, nm.window_radius, 0.0, nm.window_radius)
        rows, results = [], {}
        threshold = 1.0 - d / 2.0
        for s in nm.s_orders:
            tab = kernel_norm_experiment(lam, window, s, nm.N_list, "K_G")
            rows += [("K_G", s, N, S) for N, S in zip(tab.N_list, tab.partial_sums)]
            growth = tab.growth(nm.growth_from, nm.growth_to)
            pred = (2.0 * s - 2.0) / d + 1.0
            results["K_G s=%g" % s] = {"tail_exponent": tab.tail_exponent, "predicted": pred, "growth": growth}
            if pred < 0:
                rel = abs(tab.tail_exponent - pred) / abs(pred)
                self.check("norm.tail_exponent[s=%g]" % s, rel <= 0.2, tab.tail_exponent,
                           "within 20%% of %.3g" % pred)
            if s > threshold:
                self.check("norm.non_cauchy[s=%g]" % s, growth >= 0.05, growth, ">= 0.05 growth")
        s_top = max(nm.s_orders)
        tab = kernel_norm_experiment(lam, window, s_top, nm.N_list, "K_A")
        rows += [("K_A", s_top, N, S) for N, S in zip(tab.N_list, tab.partial_sums)]
        growth = tab.growth(nm.growth_from, nm.growth_to)
        self.check("norm.KA_converges[s=%g]" % s_top, tab.tail_exponent < 0 and growth < 0.05, growth,
                   "tail < 0, growth < 0.05")
        results["K_A s=%g" % s_top] = {"tail_exponent": tab.tail_exponent, "growth": growth}
        results["cauchy_threshold"] = threshold
        write_csv(self.dir / "norm.csv", ["kernel", "s", "N", "partial_sum"], rows)
        write_json(self.dir / "norm.json", {"config_hash": self.cfg.hash, **results})
        self.record.results["norm"] = results

    def _wavefront_mode(self):
        mode = self.cfg.wavefront.mode
        if mode == "auto":
            if self.metric.dim != 1:
                return "off"
            return "doubled" if self.metric.kind == "flat" else "column"
        if mode in ("doubled", "column") and self.metric.dim != 1:
            raise PreconditionError("rule wavefront.mode=%s needs a 1-D metric" % mode)
        return mode

    def stage_wavefront(self):
        from . import microlocal as ml

        mode = self._wavefront_mode()
        if mode == "off":
            self.record.results["wavefront"] = {"mode": "off"}
            return
        w = self.cfg.wavefront
        b = self.basis()
        N = self.cfg.discretization.N
        ha = math.radians(w.half_angle_deg)
        if mode == "doubled":
            rep = ml.wavefront_scan_flat(b, N, w.bases, half_angle=ha, radius=w.radius, alpha=w.alpha,
                                         sigma_b=w.sigma_b, shells=w.shells, s_threshold=w.threshold,
                                         n_samples=w.n_samples, seed=self.cfg.seed, threads=self.cfg.threads)
            diag = ml.diagonal_scan(b, N, radius=w.radius, alpha=w.alpha, shells=w.shells)
            self.record.results["diagonal"] = {"ray": diag.ray.tolist(), "ray_spread": diag.ray_spread,
                                               "transverse_saturated": diag.transverse.saturated,
                                               "conormal_s_hat": diag.conormal.s_hat}
        else:
            rep = ml.wavefront_scan_column(b, N, w.s0, w.y0_index, w.times, n_directions=w.n_directions,
                                           half_angle=ha, radius=w.radius, alpha=w.alpha, shells=w.shells,
                                           s_threshold=w.threshold, threads=self.cfg.threads)
        self.report = rep
        rows = rep.rows()
        keys = list(rows[0].keys())
        write_csv(self.dir / "wavefront.csv", keys, [[r[k] for k in keys] for r in rows])
        polar = []
        for e in rep.entries:
            ang = math.degrees(math.atan2(e.direction[1], e.direction[0]))
            polar.append((e.label, " ".join("%.6g" % v for v in e.base), ang, e.fit.s_hat))
        write_csv(self.dir / "polar.csv", ["label", "base", "angle_deg", "s_hat"], polar)
        summary = {"config_hash": self.cfg.hash, "mode": mode, "s_threshold": rep.s_threshold,
                   "floor": rep.floor, "calibration": rep.calibration.as_dict(),
                   "meta": {k: v for k, v in rep.meta.items()}}
        write_json(self.dir / "wavefront_summary.json", summary)
        self.record.results["wavefront"] = {"mode": mode, "s_threshold": rep.s_threshold,
                                            "entries": len(rep.entries),
                                            "c_directions": {e.label: _clean(e.fit.s_hat) for e in rep.entries
                                                             if e.oracle_in_C and mode == "column"}}

    def stage_compare(self):
        from . import microlocal as ml

        rep = getattr(self, "report", None)
        if rep is None:
            if self._wavefront_mode() == "off":
                self.record.results["compare"] = {"skipped": "no wavefront scan for this metric"}
                return
            self.stage_wavefront()
            rep = self.report
        summ = ml.compare_to_C(rep, self.metric)
        self.check("compare.precision", summ["precision"] == 1.0, summ["precision"], "== 1.0")
        self.check("compare.time_law", summ["time_law"], float(summ["time_law"]), "all singular in xi0+eta0=0")
        self.check("compare.char_law", summ["char_law"], float(summ["char_law"]), "all singular in Char x Char")
        if rep.kind == "doubled":
            self.check("compare.recall", summ["recall"] >= 0.9, summ["recall"], ">= 0.9")
            diag = self.record.results.get("diagonal")
            if diag is not None:
                self.check("compare.diagonal_flat", diag["ray_spread"] <= 2.0, diag["ray_spread"], "<= 2")
                self.check("compare.transverse_saturates", diag["transverse_saturated"],
                           float(diag["transverse_saturated"]), "saturated")
        else:
            p2 = rep.meta["p2_max"]
            self.check("compare.flow_conservation", p2 <= 1e-7, p2, "<= 1e-7")
            self.check("compare.nonempty", summ["n_singular"] > 0, summ["n_singular"], "> 0 detections")
        write_json(self.dir / "compare.json", {"config_hash": self.cfg.hash, **summ})
        self.record.results["compare"] = {k: _clean(v) if isinstance(v, float) else v for k, v in summ.items()}


def _pair_for(p: Pipeline):
    from .spectral import assemble

    return assemble(p.metric, p.cfg.discretization.n)


def flat_spectrum(dim: int, n: int, mass: float, N: int) -> np.ndarray:
    """Sorted ``|k|^2 + m^2`` over the modes of an ``n``-point trigonometric grid (unit period ``2 pi``)."""
    k = np.arange(-(n // 2) + 1, n // 2)
    if dim == 1:
        vals = k.astype(float) ** 2
    else:
        vals = (k[:, None] ** 2 + k[None, :] ** 2).ravel().astype(float)
    return np.sort(vals, kind="stable")[:N] + mass ** 2


def run(cfg: ExperimentConfig, stages=None) -> RunRecord:
    """Execute the requested stages (default: those of the config).

    Errors abort the run with the stage name; the record is still appended
    to ``runs.jsonl`` and the exception re-raised.
    """
    stages = tuple(cfg.stages if stages is None else stages)
    pipe = Pipeline(cfg)
    rec = pipe.record
    rec.started = time.strftime("%Y-%m-%dT%H:%M:%S")
    try:
        for st in STAGES:
            if st not in stages:
                continue
            t0 = time.perf_counter()
            try:
                getattr(pipe, "stage_" + st)()
            except WflabError as exc:
                rec.error = "%s: %s" % (st, exc)
                rec.status = "numerical-diagnostic" if isinstance(exc, NumericalDiagnostic) else "precondition-error"
                raise
            finally:
                rec.timings[st] = round(time.perf_counter() - t0, 3)
                rec.stages.append(st)
    finally:
        rec.verdicts = [v.as_dict() for v in pipe.verdicts]
        if rec.status == "ok" and not all(v["passed"] for v in rec.verdicts):
            rec.status = "acceptance-failure"
        with open(pipe.root / "runs.jsonl", "a") as fh:
            fh.write(rec.to_json() + "\n")
        write_json(pipe.dir / "record.json", asdict(rec))
    return rec


def read_records(path) -> List[dict]:
    p = Path(path)
    if p.is_dir():
        p = p / "runs.jsonl"
    if not p.exists():
        return []
    return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]
