"""Command-line front end: estimate, simulate, align, evaluate.

Settings are layered: built-in defaults, then a JSON config file (``--config``
or the file named by ``IMUSCALE_CONFIG``), then command-line flags.
Exit codes: 0 ok, 1 usage/config error, 2 ingest, 3 alignment,
4 smoothing, 5 scale, 6 evaluation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import evaluate, ingest, kinematics, oracle, pipeline, scale, smoother
from .alignment import AlignmentResult
from .errors import EvaluationError, PipelineError

CONFIG_ENV = "IMUSCALE_CONFIG"
USAGE_EXIT = 1


@dataclass
class RunConfig:
    trajectory: str | None = None
    imu: str | None = None
    f_max: float = scale.F_MAX
    g_norm: float = scale.G_NORM
    search_halfwidth: float = 0.5
    max_lag: float = 2.0
    q_min: float = 1e-4
    q_max: float = 1e4
    q_count: int = 17
    skip_frequency: bool = False
    window: str = "rect"
    smoothing: str = "rts"
    seed: int = 0
    report: str | None = None
    scaled_trajectory: str | None = None
    gravity_aligned: bool = False
    record_timings: bool = False
    # simulate
    outdir: str | None = None
    scenario: str | None = None
    duration: float | None = None
    # evaluate
    truth: str | None = None
    ground_points: str | None = None
    checkpoints: list = field(default_factory=lambda: [1.0, 2.0, 6.0, 14.0])
    curve: str | None = None

    def validate(self):
        if not (self.q_min > 0 and self.q_max >= self.q_min and self.q_count >= 1):
            raise ValueError("smoother grid needs 0 < q_min <= q_max and q_count >= 1")
        if self.window not in ("rect", "hann"):
            raise ValueError(f"window must be 'rect' or 'hann', got {self.window!r}")
        if self.smoothing not in ("rts", "none"):
            raise ValueError(f"smoothing must be 'rts' or 'none', got {self.smoothing!r}")
        if not (self.f_max > 0 and self.g_norm > 0 and self.search_halfwidth > 0):
            raise ValueError("f_max, g_norm and search_halfwidth must be positive")
        return self

    def q_grid(self):
        if self.q_count == 1:
            return [float(self.q_min)]
        return np.logspace(math.log10(self.q_min), math.log10(self.q_max), self.q_count).tolist()

    def options(self) -> pipeline.EstimateOptions:
        return pipeline.EstimateOptions(
            f_max=self.f_max, g_norm=self.g_norm, search_halfwidth=self.search_halfwidth,
            max_lag=self.max_lag, smoother=smoother.SmootherConfig(q_grid=self.q_grid()),
            smoothing=self.smoothing, window=self.window, skip_frequency=self.skip_frequency)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Report:
    command: str
    config: dict
    inputs: dict  # path -> sha256
    solution: dict | None = None
    time_solution: dict | None = None
    alignment: dict | None = None
    smoother: dict | None = None
    timings_ms: dict | None = None
    warnings: list = field(default_factory=list)
    evaluation: dict | None = None
    truth: dict | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def scale_solution(self) -> scale.ScaleSolution:
        return scale.ScaleSolution.from_dict(self.solution)

    def alignment_result(self) -> AlignmentResult:
        return AlignmentResult.from_dict(self.alignment)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(*paths):
    return {str(p): sha256(p) for p in paths if p is not None and Path(p).is_file()}


def gravity_alignment(g_W):
    """Rotation taking the measured down direction (-g_W) onto -y."""
    down = -np.asarray(g_W, dtype=float)
    rot, _ = Rotation.align_vectors([[0.0, -1.0, 0.0]], [down / np.linalg.norm(down)])
    return rot.as_matrix()


def scaled_poses(poses, s, g_W=None):
    """Poses in metres; with ``g_W`` the world frame is turned so that down is -y."""
    t, pos, quat = ingest.pose_arrays(poses)
    pos = s * pos
    if g_W is not None:
        A = gravity_alignment(g_W)
        pos = pos @ A.T
        R = kinematics.quat_to_matrix(quat) @ A.T  # world-to-camera in the new world
        quat = kinematics.matrix_to_quat(R)
    return [ingest.PoseSample(ti, p, q) for ti, p, q in zip(t, pos, quat)]


def _load_streams(cfg):
    if not cfg.trajectory or not cfg.imu:
        raise ValueError("--trajectory and --imu are required")
    poses = ingest.parse_trajectory(cfg.trajectory)
    imu = ingest.parse_imu(cfg.imu)
    return poses, imu


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _finish(report, cfg):
    text = report.to_json()
    if cfg.report:
        _write(cfg.report, text)
    else:
        sys.stdout.write(text)
    return report


def cmd_estimate(cfg: RunConfig) -> Report:
    poses, imu = _load_streams(cfg)
    res = pipeline.estimate(poses, imu, cfg.options())
    report = Report(
        command="estimate",
        config=cfg.to_dict(),
        inputs=_digests(cfg.trajectory, cfg.imu),
        solution=res.solution.to_dict(),
        time_solution=res.time_solution.to_dict(),
        alignment=res.alignment.to_dict(),
        smoother={"q": res.q, "r": res.r},
        timings_ms=dict(res.timings_ms) if cfg.record_timings else None,
        warnings=list(res.warnings),
    )
    if cfg.scaled_trajectory:
        g = res.solution.g_W if cfg.gravity_aligned else None
        out = scaled_poses(poses, res.solution.s, g)
        Path(cfg.scaled_trajectory).parent.mkdir(parents=True, exist_ok=True)
        ingest.write_trajectory(cfg.scaled_trajectory, out,
                                header=f"metric trajectory, s = {res.solution.s!r}")
    return _finish(report, cfg)


def cmd_align(cfg: RunConfig) -> Report:
    poses, imu = _load_streams(cfg)
    al, timings, msgs = pipeline.align_streams(poses, imu, cfg.options())
    report = Report(command="align", config=cfg.to_dict(), inputs=_digests(cfg.trajectory, cfg.imu),
                    alignment=al.to_dict(), timings_ms=timings if cfg.record_timings else None,
                    warnings=msgs)
    return _finish(report, cfg)


def load_scenario(cfg: RunConfig) -> oracle.ScenarioSpec:
    spec = oracle.default_scenario()
    if cfg.scenario:
        overrides = json.loads(Path(cfg.scenario).read_text())
        spec = spec.replace(**overrides)
    if cfg.duration is not None:
        spec = spec.replace(duration=cfg.duration)
    return spec.validate()


def cmd_simulate(cfg: RunConfig) -> Report:
    if not cfg.outdir:
        raise ValueError("--outdir is required")
    spec = load_scenario(cfg)
    data = oracle.generate(spec, cfg.seed)
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_trajectory(out / "trajectory.txt", data.poses, header="t x y z qx qy qz qw")
    ingest.write_imu(out / "imu.csv", data.imu)
    truth = data.truth()
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    report = Report(command="simulate", config=cfg.to_dict(),
                    inputs=_digests(out / "trajectory.txt", out / "imu.csv", out / "truth.json"),
                    truth=truth)
    return _finish(report, cfg)


def read_ground_points(path):
    """CSV rows ``x,y,z,X,Y,Z``: reconstructed point, then its metric coordinates."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            if not rows:
                continue  # header
            raise EvaluationError(f"{path}:{lineno}: non-numeric ground point")
        if len(vals) != 6:
            raise EvaluationError(f"{path}:{lineno}: expected 6 fields, got {len(vals)}")
        rows.append(vals)
    pts = np.array(rows, dtype=float).reshape(-1, 6)
    return pts[:, :3], pts[:, 3:]


def cmd_evaluate(cfg: RunConfig) -> Report:
    if not cfg.truth and not cfg.ground_points:
        raise EvaluationError("evaluation needs a truth source",
                              hint="pass --truth truth.json or --ground-points points.csv")
    poses, imu = _load_streams(cfg)
    options = cfg.options()
    evaluation = {}
    if cfg.truth:
        truth_scale = float(json.loads(Path(cfg.truth).read_text())["scale"])
        evaluation["truth_source"] = "sidecar"
    else:
        sfm, metric = read_ground_points(cfg.ground_points)
        ref = evaluate.similarity_fit(sfm, metric)
        truth_scale = ref.scale
        evaluation["truth_source"] = "ground points"
    evaluation["truth_scale"] = truth_scale

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = evaluate.convergence_curve(poses, imu, cfg.checkpoints, truth_scale, options)
        full = pipeline.estimate(poses, imu, options)
    msgs = [f"{w.category.__name__}: {w.message}" for w in caught]
    evaluation["curve"] = [asdict(p) for p in curve]
    evaluation["full_error_percent"] = abs(full.solution.s - truth_scale) / truth_scale * 100.0
    if cfg.ground_points:
        sfm, metric = read_ground_points(cfg.ground_points)
        fit = evaluate.rigid_fit(full.solution.s * sfm, metric)
        evaluation["ground_fit"] = {"R": fit.R.tolist(), "t": fit.t.tolist(), "rmse": fit.rmse}
    if cfg.curve:
        Path(cfg.curve).parent.mkdir(parents=True, exist_ok=True)
        evaluate.write_curve_csv(cfg.curve, curve)
    report = Report(command="evaluate", config=cfg.to_dict(),
                    inputs=_digests(cfg.trajectory, cfg.imu, cfg.truth, cfg.ground_points),
                    solution=full.solution.to_dict(), time_solution=full.time_solution.to_dict(),
                    alignment=full.alignment.to_dict(), smoother={"q": full.q, "r": full.r},
                    timings_ms=dict(full.timings_ms) if cfg.record_timings else None,
                    warnings=msgs, evaluation=evaluation)
    return _finish(report, cfg)


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "align": cmd_align,
            "evaluate": cmd_evaluate}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _checkpoints(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    p = _Parser(prog="imuscale", description="Metric scale of a monocular trajectory from IMU data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, streams=True):
        sp.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
        sp.add_argument("--report", help="write the JSON report here instead of stdout")
        sp.add_argument("--seed", type=int)
        if streams:
            sp.add_argument("--trajectory", help="poses: t x y z qx qy qz qw per line")
            sp.add_argument("--imu", help="CSV: t,gx,gy,gz,ax,ay,az")
            sp.add_argument("--f-max", type=float)
            sp.add_argument("--g-norm", type=float)
            sp.add_argument("--search-halfwidth", type=float)
            sp.add_argument("--max-lag", type=float)
            sp.add_argument("--q-min", type=float)
            sp.add_argument("--q-max", type=float)
            sp.add_argument("--q-count", type=int)
            sp.add_argument("--smoothing", choices=["rts", "none"])
            sp.add_argument("--window", choices=["rect", "hann"])
            sp.add_argument("--skip-frequency", action="store_true", default=None)
            sp.add_argument("--record-timings", action="store_true", default=None)

    est = sub.add_parser("estimate", help="run the full pipeline")
    common(est)
    est.add_argument("--scaled-trajectory", help="write poses scaled to metres")
    est.add_argument("--gravity-aligned", action="store_true", default=None,
                     help="rotate the exported world so that down is -y")

    sim = sub.add_parser("simulate", help="write a synthetic recording with its truth")
    common(sim, streams=False)
    sim.add_argument("--outdir")
    sim.add_argument("--scenario", help="JSON overrides of the default scenario")
    sim.add_argument("--duration", type=float)

    al = sub.add_parser("align", help="estimate only the camera/IMU rotation and time offset")
    common(al)

    ev = sub.add_parser("evaluate", help="scale error versus distance travelled")
    common(ev)
    ev.add_argument("--truth", help="truth.json sidecar written by simulate")
    ev.add_argument("--ground-points", help="CSV x,y,z,X,Y,Z of control points")
    ev.add_argument("--checkpoints", type=_checkpoints)
    ev.add_argument("--curve", help="write distance_m,error_percent CSV here")
    return p


def resolve_config(args) -> RunConfig:
    data = {}
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        data.update(json.loads(Path(path).read_text()))
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        data[key] = value
    return RunConfig.from_dict(data).validate()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except PipelineError as exc:
        print(f"imuscale: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"imuscale: {exc}", file=sys.stderr)
        return USAGE_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
