"""Experiment drivers: evaluation over channel draws, sweeps, timing, persistence.

The evaluation loop compares three precoding methods on identical scene and
sounding realizations:

  proposed       the trained network applied to raw sounding data
  perfect-csi    penalty ascent given the true channels
  estimated-csi  the same ascent given channels recovered from the sounding

Every realization has its own derived random stream, so results are
reproducible from (seed, realization index) alone and independent of worker
scheduling. Timing columns are the only non-deterministic output.
"""

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .linalg import RngStream, check_finite
from .units import db_to_linear, dbw_to_watts, linear_to_db
from .scene import Scene, SceneConfig, Target, sample_scene
from .sounding import SoundingConfig, SoundingData, sound_scene
from .metrics import all_sinr, worst_case_illumination
from .network import precode
from .training import Hyperparams
from .baselines import estimate_scene, optimize_precoder

EVAL_STREAM_BASE = 10_000_000   # keeps evaluation streams clear of training's
METHODS = ("proposed", "perfect-csi", "estimated-csi")
FEAS_TOL = 1e-6                 # linear SINR slack counted as satisfied

RESULTS_SCHEMA = "# results-schema v1"
RESULT_COLUMNS = ("method", "sweep", "gamma_min_db", "q_db",
                  "user_mean_sinr_db", "feasible_frac", "infer_ms", "seed")

SWEEP_AXES = ("none", "pd_dbw", "gamma_db", "k_test", "area")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one training-plus-evaluation campaign needs."""

    scene: SceneConfig
    sounding: SoundingConfig
    hyper: Hyperparams
    lift_dim: int = 1024
    seed: int = 0
    realizations: int = 100
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    known_range_m: float = 12.5   # range the echo-based reconstruction assumes
    out_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        if self.sweep_axis != "none" and len(self.sweep_values) == 0:
            raise ConfigError("sweep axis set but sweep_values is empty")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.lift_dim < 1:
            raise ConfigError("lift_dim must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.known_range_m <= 0:
            raise ConfigError("known_range_m must be positive")

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "sounding": self.sounding.to_dict(),
            "hyper": self.hyper.to_dict(),
            "lift_dim": self.lift_dim,
            "seed": self.seed,
            "realizations": self.realizations,
            "sweep_axis": self.sweep_axis,
            "sweep_values": [list(v) if isinstance(v, (tuple, list)) else v
                             for v in self.sweep_values],
            "known_range_m": self.known_range_m,
            "out_dir": self.out_dir,
            "threads": self.threads,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown experiment config fields: {sorted(extra)}")
        d = dict(d)
        for key, sub in (("scene", SceneConfig), ("sounding", SoundingConfig),
                         ("hyper", Hyperparams)):
            if key not in d:
                raise ConfigError(f"experiment config missing {key!r} section")
            if isinstance(d[key], dict):
                d[key] = sub.from_dict(d[key])
        vals = d.get("sweep_values", ())
        d["sweep_values"] = tuple(tuple(v) if isinstance(v, (tuple, list)) else v
                                  for v in vals)
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    """Parse an experiment config from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return ExperimentConfig.from_dict(doc)


def save_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class MethodStats:
    """Raw per-realization metrics for one method at one sweep point."""

    sinr_lin: np.ndarray    # (realizations, K) linear SINR per user
    q_lin: np.ndarray       # (realizations,) worst-case illumination, watts
    feasible: np.ndarray    # (realizations,) all users at or above threshold
    infer_s: np.ndarray     # (realizations,) precoder computation seconds


@dataclass(frozen=True)
class ResultRow:
    """One aggregated line of the results table."""

    method: str
    sweep: str
    gamma_min_db: float       # min over users of mean linear SINR, in dB
    q_db: float               # mean worst-case illumination, in dB
    user_mean_sinr_db: tuple  # per-user mean linear SINR, in dB
    feasible_frac: float
    infer_ms: float
    seed: int


def summarize(method: str, sweep: str, stats: MethodStats, seed: int) -> ResultRow:
    user_mean = stats.sinr_lin.mean(axis=0)
    return ResultRow(
        method=method,
        sweep=sweep,
        gamma_min_db=float(linear_to_db(user_mean.min())),
        q_db=float(linear_to_db(stats.q_lin.mean())),
        user_mean_sinr_db=tuple(float(linear_to_db(v)) for v in user_mean),
        feasible_frac=float(stats.feasible.mean()),
        infer_ms=float(np.median(stats.infer_s) * 1e3),
        seed=seed,
    )


def _realization(params, scene_cfg: SceneConfig, snd_cfg: SoundingConfig,
                 *, r: int, seed: int, pd_w: float, gamma_db: float,
                 known_range_m: float, methods) -> dict:
    """Metrics of every requested method on realization r. Thread-safe."""
    rng = RngStream(seed, EVAL_STREAM_BASE + r)
    scene = sample_scene(scene_cfg, rng)
    data = sound_scene(scene, snd_cfg, rng, scene_cfg.nu2_w)
    g_mat = scene.target_channel_matrix()
    gamma_lin = db_to_linear(gamma_db)

    out = {}
    for method in methods:
        t0 = time.perf_counter()
        if method == "proposed":
            prec = precode(params, data, pd_w)
        elif method == "perfect-csi":
            prec, _ = optimize_precoder(scene.h_mat, g_mat, gamma_db, pd_w,
                                        scene_cfg.sigma2_w, seed=r)
        elif method == "estimated-csi":
            est = estimate_scene(data, snd_cfg, scene.t,
                                 scene_cfg.radar_pathloss_db, known_range_m)
            prec, _ = optimize_precoder(est.h_hat, est.g_hat, gamma_db, pd_w,
                                        scene_cfg.sigma2_w, seed=r)
        else:
            raise InvalidArgumentError(f"unknown method {method!r}")
        elapsed = time.perf_counter() - t0
        sinr = all_sinr(prec, scene, scene_cfg.sigma2_w)
        q, _ = worst_case_illumination(prec, scene)
        feas = bool(sinr.min() - gamma_lin >= -FEAS_TOL)
        out[method] = (sinr, q, feas, elapsed)
    return out


def eval_methods(params, scene_cfg: SceneConfig, snd_cfg: SoundingConfig,
                 *, realizations: int, seed: int, pd_w: float, gamma_db: float,
                 known_range_m: float = 12.5, methods=METHODS,
                 threads: int = 1) -> dict:
    """Evaluate the requested methods on shared realizations.

    Returns {method: MethodStats}. Realization r always uses the stream
    (seed, EVAL_STREAM_BASE + r), so metric outputs do not depend on the
    thread count; only the timing column varies between runs.
    """
    if "proposed" in methods and params is None:
        raise InvalidArgumentError("proposed method requested without parameters")

    def work(r):
        return _realization(params, scene_cfg, snd_cfg, r=r, seed=seed,
                            pd_w=pd_w, gamma_db=gamma_db,
                            known_range_m=known_range_m, methods=methods)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_real = list(pool.map(work, range(realizations)))
    else:
        per_real = [work(r) for r in range(realizations)]

    stats = {}
    for method in methods:
        sinr = np.stack([per_real[r][method][0] for r in range(realizations)])
        q = np.array([per_real[r][method][1] for r in range(realizations)])
        feas = np.array([per_real[r][method][2] for r in range(realizations)])
        secs = np.array([per_real[r][method][3] for r in range(realizations)])
        check_finite(sinr, "sinr")
        check_finite(q, "illumination")
        stats[method] = MethodStats(sinr_lin=sinr, q_lin=q, feasible=feas,
                                    infer_s=secs)
    return stats


def _sweep_point(exp: ExperimentConfig, value):
    """Scene/power/threshold overrides and a label for one sweep value."""
    scene_cfg = exp.scene
    pd_dbw = exp.hyper.pd_dbw
    gamma_db = exp.hyper.gamma_db
    axis = exp.sweep_axis
    if axis == "none":
        label = ""
    elif axis == "pd_dbw":
        pd_dbw = float(value)
        label = repr(float(value))
    elif axis == "gamma_db":
        gamma_db = float(value)
        label = repr(float(value))
    elif axis == "k_test":
        scene_cfg = replace(scene_cfg, k=int(value))
        label = repr(int(value))
    elif axis == "area":
        x0, x1, y0, y1 = (float(v) for v in value)
        scene_cfg = replace(scene_cfg, user_x_range_m=(x0, x1),
                            user_y_range_m=(y0, y1))
        label = f"{x0:g}:{x1:g}x{y0:g}:{y1:g}"
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return scene_cfg, dbw_to_watts(pd_dbw), gamma_db, label


def run_eval(params, exp: ExperimentConfig, methods=METHODS) -> list:
    """Aggregate ResultRows for every sweep point (a single point when
    no axis is set). The network is applied as-is at every point; only the
    baselines re-solve their optimization per point."""
    values = exp.sweep_values if exp.sweep_axis != "none" else (None,)
    rows = []
    for value in values:
        scene_cfg, pd_w, gamma_db, label = _sweep_point(exp, value)
        stats = eval_methods(params, scene_cfg, exp.sounding,
                             realizations=exp.realizations, seed=exp.seed,
                             pd_w=pd_w, gamma_db=gamma_db,
                             known_range_m=exp.known_range_m,
                             methods=methods, threads=exp.threads)
        for method in methods:
            rows.append(summarize(method, label, stats[method], exp.seed))
    return rows


def write_results(path, rows) -> None:
    """Emit the versioned results table.

    Floats are written with shortest round-trip formatting, so identical
    metric values produce identical bytes.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(RESULTS_SCHEMA + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([
                row.method,
                row.sweep,
                repr(row.gamma_min_db),
                repr(row.q_db),
                "|".join(repr(v) for v in row.user_mean_sinr_db),
                repr(row.feasible_frac),
                repr(row.infer_ms),
                repr(row.seed),
            ])


def read_results(path) -> list:
    """Parse a results table back into ResultRow objects."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != RESULTS_SCHEMA:
            raise ConfigError(f"unrecognized results file header {first!r}")
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise ConfigError("results file columns do not match schema v1")
        rows = []
        for rec in reader:
            rows.append(ResultRow(
                method=rec[0],
                sweep=rec[1],
                gamma_min_db=float(rec[2]),
                q_db=float(rec[3]),
                user_mean_sinr_db=tuple(float(v) for v in rec[4].split("|") if v),
                feasible_frac=float(rec[5]),
                infer_ms=float(rec[6]),
                seed=int(rec[7]),
            ))
        return rows


@dataclass(frozen=True)
class ScalingReport:
    """Inference-time scaling against the user count."""

    k_values: tuple
    median_s: tuple
    exponent: float        # slope of log(time) vs log(K)
    r2_linear: float       # goodness of a plain linear time-vs-K fit


def measure_scaling(params, scene_cfg: SceneConfig, snd_cfg: SoundingConfig,
                    k_values, *, pd_w: float, seed: int = 0,
                    repeats: int = 25) -> ScalingReport:
    """Median single-inference wall time per user count, plus fits.

    One realization is drawn per K; the same sounding snapshot is mapped
    repeatedly and the median over `repeats` timings is kept, which is
    robust to scheduler noise at millisecond scales.
    """
    k_values = tuple(int(k) for k in k_values)
    if len(k_values) == 0:
        raise InvalidArgumentError("k_values must be nonempty")
    medians = []
    for k in k_values:
        cfg_k = replace(scene_cfg, k=k)
        rng = RngStream(seed, EVAL_STREAM_BASE + k)
        scene = sample_scene(cfg_k, rng)
        data = sound_scene(scene, snd_cfg, rng, cfg_k.nu2_w)
        precode(params, data, pd_w)          # warm caches before timing
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            precode(params, data, pd_w)
            times.append(time.perf_counter() - t0)
        medians.append(float(np.median(times)))

    if len(k_values) < 2:
        return ScalingReport(k_values=k_values, median_s=tuple(medians),
                             exponent=float("nan"), r2_linear=float("nan"))
    logk = np.log(np.asarray(k_values, dtype=np.float64))
    logt = np.log(np.asarray(medians))
    exponent = float(np.polyfit(logk, logt, 1)[0])
    kv = np.asarray(k_values, dtype=np.float64)
    tv = np.asarray(medians)
    coef = np.polyfit(kv, tv, 1)
    resid = tv - np.polyval(coef, kv)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((tv - tv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return ScalingReport(k_values=k_values, median_s=tuple(medians),
                         exponent=exponent, r2_linear=r2)


def write_scaling(path, report: ScalingReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(RESULTS_SCHEMA + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("k", "median_infer_ms"))
        for k, s in zip(report.k_values, report.median_s):
            writer.writerow([k, repr(s * 1e3)])
        writer.writerow(("exponent", repr(report.exponent)))
        writer.writerow(("r2_linear", repr(report.r2_linear)))


_CACHE_VERSION = 1


def _complex_fields(scene: Scene, data: SoundingData) -> list:
    """(name, float64 view, complex flag) triplets in a fixed order."""
    return [
        ("h_mat", scene.h_mat, True),
        ("user_pos_m", scene.user_pos_m, False),
        ("angle_rad", np.array([t.angle_rad for t in scene.targets]), False),
        ("range_m", np.array([t.range_m for t in scene.targets]), False),
        ("gain", np.array([t.gain for t in scene.targets]), True),
        ("rcs", np.array([t.rcs for t in scene.targets]), True),
        ("channel", np.stack([t.channel for t in scene.targets]), True),
        ("pilots", data.pilots, True),
        ("echoes", data.echoes, True),
    ]


def save_dataset(path, records, meta: dict = None) -> None:
    """Persist (Scene, SoundingData) pairs: raw little-endian float64 blob
    plus a JSON sidecar describing shapes. Complex arrays are stored as
    interleaved real/imaginary pairs."""
    path = str(path)
    sidecar = {"version": _CACHE_VERSION, "meta": meta or {}, "records": []}
    with open(path, "wb") as fh:
        offset = 0
        for scene, data in records:
            fields = []
            for name, arr, is_complex in _complex_fields(scene, data):
                flat = np.ascontiguousarray(arr)
                raw = flat.view(np.float64) if is_complex else flat.astype(np.float64)
                blob = raw.astype("<f8").tobytes()
                fh.write(blob)
                fields.append({"name": name, "shape": list(arr.shape),
                               "complex": bool(is_complex), "offset": offset,
                               "bytes": len(blob)})
                offset += len(blob)
            sidecar["records"].append(fields)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path):
    """Inverse of save_dataset: returns (records, meta)."""
    path = str(path)
    with open(path + ".json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("version") != _CACHE_VERSION:
        raise ConfigError(f"unsupported dataset cache version {sidecar.get('version')!r}")
    raw = np.fromfile(path, dtype="<f8")
    records = []
    for fields in sidecar["records"]:
        vals = {}
        for f in fields:
            start = f["offset"] // 8
            count = f["bytes"] // 8
            arr = raw[start:start + count].astype(np.float64)
            if f["complex"]:
                arr = arr.view(np.complex128)
            vals[f["name"]] = arr.reshape(f["shape"])
        targets = tuple(
            Target(angle_rad=float(vals["angle_rad"][i]),
                   range_m=float(vals["range_m"][i]),
                   gain=complex(vals["gain"][i]),
                   rcs=complex(vals["rcs"][i]),
                   channel=vals["channel"][i])
            for i in range(vals["angle_rad"].shape[0]))
        scene = Scene(h_mat=vals["h_mat"], targets=targets,
                      user_pos_m=vals["user_pos_m"])
        data = SoundingData(pilots=vals["pilots"], echoes=vals["echoes"])
        records.append((scene, data))
    return records, sidecar["meta"]
