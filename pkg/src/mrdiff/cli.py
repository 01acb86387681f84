"""Command-line harness: SDE experiments, probes, toy training,
restoration, metric evaluation, and data generation.

Subcommands: ``sde-roundtrip``, ``train-toy``, ``restore``, ``probe``,
``metrics``, ``gen-data``. Configuration comes from an optional JSON file
(--config) with unknown keys rejected; explicit flags override file
values. Every command honors --seed and emits a JSON report with a
schema_version field and the fully resolved configuration; reports are
bitwise reproducible for a fixed seed/config.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric or
assertion failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, asdict, fields

import numpy as np

from . import blocks, data, losses, metrics, sde, train
from .canny import CannyParams
from .losses import LossWeights
from .tensor import NonFiniteError, ShapeError, Tensor, grad_check
from .unet import NetworkSpec, load_checkpoint

__all__ = ["RunConfig", "main", "run", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    pass


class IoFailure(Exception):
    pass


class NumericFailure(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved settings for one command invocation."""

    command: str = ""
    seed: int = 0
    report: str | None = None
    out: str | None = None
    # diffusion schedule
    steps: int = sde.DEFAULT_STEPS
    kappa: float = sde.DEFAULT_KAPPA
    profile: str = "constant"
    alpha_scale: float = 6.0
    stochastic: bool = False
    # network
    depth: int = 3
    base_channels: int = 16
    blocks_per_level: int = 1
    time_embed_dim: int = 32
    # losses / canny
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 0.1
    bins: int = losses.DEFAULT_BINS
    canny_sigma: float = 1.0
    canny_low: float = 0.1
    canny_high: float = 0.2
    # training
    iters: int = 200
    batch_size: int = 4
    lr: float = 1e-4
    image_size: int = 16
    pool_size: int = 8
    degradation: str = "lowlight"
    checkpoint: str = "checkpoint.npz"
    resume: str | None = None
    # restore / roundtrip inputs
    input: str | None = None
    reference: str | None = None
    size: int = 32
    # probe
    dilations: str = "2,4,8"
    channels: int = 4
    probe_size: int = 33
    # metrics
    image_a: str | None = None
    image_b: str | None = None
    # gen-data
    count: int = 4
    outdir: str = "."
    tags: str = "lowlight,haze,rain"

    def schedule(self) -> sde.SdeSchedule:
        try:
            return sde.make_schedule(self.steps, self.kappa, self.profile, self.alpha_scale)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def network_spec(self) -> NetworkSpec:
        try:
            return NetworkSpec(depth=self.depth, base_channels=self.base_channels,
                               blocks_per_level=self.blocks_per_level,
                               time_embed_dim=self.time_embed_dim)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def loss_weights(self) -> LossWeights:
        try:
            return LossWeights(self.lambda1, self.lambda2, self.lambda3)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def canny_params(self) -> CannyParams:
        try:
            return CannyParams(self.canny_sigma, self.canny_low, self.canny_high)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def dilation_tuple(self) -> tuple[int, ...]:
        try:
            dils = tuple(int(v) for v in self.dilations.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad dilations {self.dilations!r}") from exc
        if len(dils) != 3 or any(d < 1 for d in dils):
            raise ConfigError(f"need three positive dilations, got {self.dilations!r}")
        return dils


_CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def load_config(path: str | None, overrides: dict, command: str) -> RunConfig:
    """Merge defaults, config-file values, and explicit flag overrides."""
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError(f"config {path} must contain a JSON object")
        unknown = set(file_values) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in file_values.items():
            setattr(cfg, key, value)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.command = command
    return cfg


def _load_image(path) -> np.ndarray:
    try:
        return data.load_image(path)
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc
    except ValueError as exc:
        raise IoFailure(f"bad image file {path}: {exc}") from exc


def _save_image(path, img) -> None:
    try:
        data.save_image(path, img)
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc


def _degrade(cfg: RunConfig, img: np.ndarray, seed: int) -> data.ImagePair:
    make = data.DEGRADATIONS.get(cfg.degradation)
    if make is None:
        raise ConfigError(f"unknown degradation {cfg.degradation!r}")
    return make(img, seed=seed)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_sde_roundtrip(cfg: RunConfig) -> dict:
    """Diffuse an image to the terminal step, then recover it with the
    exact score; reports recovery PSNR and sampled per-step residuals."""
    schedule = cfg.schedule()
    if cfg.input is not None:
        image = _load_image(cfg.input)
    else:
        image = data.synthetic_image(cfg.size, cfg.size, cfg.seed)
    pair = _degrade(cfg, image, cfg.seed)
    y0, mu = pair.reference, pair.degraded

    y_terminal, _ = sde.forward_sample(schedule, y0, mu, schedule.steps, cfg.seed)
    residuals: list[dict] = []
    stride = max(1, schedule.steps // 10)

    def track(state: sde.SdeState):
        if state.t_index % stride == 0 or state.t_index == 0:
            err = float(np.sqrt(np.mean((state.y - y0) ** 2)))
            residuals.append({"t": state.t_index, "rmse_vs_original": err})

    recovered = sde.reverse_integrate(
        schedule, y_terminal, mu,
        lambda y, t: sde.exact_score(schedule, y, y0, mu, t),
        rng_seed=cfg.seed + 1, deterministic=not cfg.stochastic, callback=track)

    if cfg.out is not None:
        _save_image(cfg.out, np.clip(recovered, 0.0, 1.0))
    psnr_val = metrics.psnr(np.clip(recovered, 0.0, 1.0), y0)
    return {
        "recovered_psnr_db": "inf" if np.isinf(psnr_val) else psnr_val,
        "terminal_sigma": schedule.sigma(schedule.steps),
        "per_step_residuals": residuals,
        "deterministic_reverse": not cfg.stochastic,
    }


def cmd_train_toy(cfg: RunConfig) -> dict:
    """Train the toy denoiser; writes a checkpoint and the loss curve."""
    schedule = cfg.schedule()
    spec = cfg.network_spec()
    if cfg.resume is not None:
        try:
            open(cfg.resume, "rb").close()
        except OSError as exc:
            raise IoFailure(f"cannot read resume checkpoint {cfg.resume}: {exc}") from exc
    try:
        result = train.train_toy(
            schedule, spec, iters=cfg.iters, batch_size=cfg.batch_size, lr=cfg.lr,
            image_size=cfg.image_size, pool_size=cfg.pool_size, degradation=cfg.degradation,
            seed=cfg.seed, loss_weights=cfg.loss_weights(), canny_params=cfg.canny_params(),
            bins=cfg.bins, checkpoint_path=cfg.checkpoint, resume_from=cfg.resume)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return {
        "checkpoint": cfg.checkpoint,
        "iterations": result.iterations,
        "initial_loss": result.initial_avg,
        "final_loss_avg": result.final_avg,
        "reduction": result.reduction,
        "loss_curve": result.reports,
    }


def cmd_restore(cfg: RunConfig) -> dict:
    """Restore a degraded image with a trained checkpoint."""
    try:
        weights, spec, _ = load_checkpoint(cfg.checkpoint)
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {cfg.checkpoint}: {exc}") from exc
    except ValueError as exc:
        raise IoFailure(f"bad checkpoint {cfg.checkpoint}: {exc}") from exc
    weights = {k: v for k, v in weights.items() if not k.startswith("adam.")}
    schedule = cfg.schedule()

    reference = None
    if cfg.input is not None:
        degraded = _load_image(cfg.input)
        if cfg.reference is not None:
            reference = _load_image(cfg.reference)
    else:
        held_out = data.synthetic_image(cfg.image_size, cfg.image_size, cfg.seed + 900)
        pair = _degrade(cfg, held_out, cfg.seed + 900)
        degraded, reference = pair.degraded, pair.reference

    restored = train.restore_image(spec, weights, schedule, degraded, seed=cfg.seed,
                                   deterministic=not cfg.stochastic)
    if cfg.out is not None:
        _save_image(cfg.out, restored)
    result: dict = {"deterministic_reverse": not cfg.stochastic}
    if reference is not None:
        if reference.shape != degraded.shape:
            raise NumericFailure("reference and degraded image sizes differ")
        degraded_report = metrics.MetricReport(metrics.psnr(degraded, reference),
                                               metrics.ssim(degraded, reference),
                                               "degraded", "reference")
        restored_report = metrics.MetricReport(metrics.psnr(restored, reference),
                                               metrics.ssim(restored, reference),
                                               "restored", "reference")
        result["degraded_vs_reference"] = degraded_report.to_dict()
        result["restored_vs_reference"] = restored_report.to_dict()
        result["psnr_gain_db"] = restored_report.psnr_db - degraded_report.psnr_db
    return result


EXPECTED_LADDER = [3, 7, 15, 31]

_SUITE_TOLERANCE = 1e-4
_BLOCK_TOLERANCE = 1e-3


def _gradient_suite(seed: int) -> list[dict]:
    """One gradient check per differentiable primitive plus the full block."""
    from . import tensor as tz

    rng = np.random.default_rng(seed)

    def rt(*shape, scale=1.0):
        return Tensor(rng.standard_normal(shape) * scale)

    x = rt(1, 4, 6, 6)
    checks = [
        ("conv2d", lambda: grad_check(
            lambda a, k, b: tz.tensor_mean(tz.mul(tz.conv2d(a, k, b, dilation=2), tz.conv2d(a, k, b))),
            [x, rt(4, 4, 3, 3, scale=0.4), rt(4, scale=0.2)])),
        ("depthwise_conv2d", lambda: grad_check(
            lambda a, k: tz.tensor_mean(tz.mul(tz.depthwise_conv2d(a, k), tz.depthwise_conv2d(a, k))),
            [x, rt(4, 1, 3, 3, scale=0.4)])),
        ("layer_norm", lambda: grad_check(
            lambda a, s, b: tz.tensor_mean(tz.mul(tz.layer_norm(a, s, b), tz.layer_norm(a, s, b))),
            [x, rt(4), rt(4)])),
        ("simple_gate", lambda: grad_check(
            lambda a: tz.tensor_mean(tz.simple_gate(a)), [x])),
        ("sca", lambda: grad_check(
            lambda a, w: tz.tensor_mean(tz.mul(tz.sca(a, w), tz.sca(a, w))),
            [x, rt(4, 4, 1, 1, scale=0.4)])),
        ("pool_reduce", lambda: grad_check(
            lambda a: tz.tensor_mean(tz.mul(tz.pool_reduce(a, "gap_s"),
                                            tz.pool_reduce(a, "gmp_s"))), [x])),
        ("pointwise", lambda: grad_check(
            lambda a, b: tz.tensor_mean(tz.mul(tz.sigmoid(a), tz.relu(b))), [x, rt(1, 4, 6, 6)])),
        ("interp2x", lambda: grad_check(
            lambda a: tz.tensor_mean(tz.mul(tz.interp2x_up(a), tz.interp2x_up(a)))
            + tz.tensor_mean(tz.interp2x_down(a)), [x])),
        ("soft_histogram", lambda: grad_check(
            lambda a: tz.tensor_sum(tz.mul(tz.soft_histogram(a, 16), tz.soft_histogram(a, 16))),
            [Tensor(rng.uniform(0.05, 0.95, (1, 1, 5, 5)))])),
        ("surrogates", lambda: grad_check(
            lambda a, b: tz.add(losses.edge_surrogate(a, b), losses.hist_surrogate(a, b, 16)),
            [Tensor(rng.uniform(0.1, 0.9, (1, 3, 8, 8))), Tensor(rng.uniform(0.1, 0.9, (1, 3, 8, 8)))])),
    ]
    results = []
    for name, runner in checks:
        rep = runner()
        results.append({"name": name, "max_rel_err": rep.max_rel_err,
                        "tolerance": _SUITE_TOLERANCE, "passed": rep.max_rel_err < _SUITE_TOLERANCE})
    spec = blocks.BlockSpec(channels=2)
    w = blocks.init_block_weights(spec, rng, zero_final=False)
    rep = grad_check(lambda a: (lambda o: (o * o).mean())(blocks.c2f_block(a, spec, w)),
                     [rt(1, 2, 8, 8)], tolerance=_BLOCK_TOLERANCE)
    results.append({"name": "c2f_block", "max_rel_err": rep.max_rel_err,
                    "tolerance": _BLOCK_TOLERANCE, "passed": rep.max_rel_err < _BLOCK_TOLERANCE})
    return results


def cmd_probe(cfg: RunConfig) -> dict:
    """Verify the receptive-field ladder and the gradient suite."""
    dils = cfg.dilation_tuple()
    try:
        spec = blocks.BlockSpec(channels=cfg.channels, dilations=dils)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(cfg.seed)
    w = blocks.init_block_weights(spec, rng, zero_final=False)
    ladder = blocks.footprint_ladder(spec, w, size=cfg.probe_size, seed=cfg.seed)
    ladder_ok = ladder == EXPECTED_LADDER

    grad_results = _gradient_suite(cfg.seed)
    grads_ok = all(r["passed"] for r in grad_results)

    result = {
        "dilations": list(dils),
        "measured_ladder": ladder,
        "expected_ladder": EXPECTED_LADDER,
        "ladder_ok": ladder_ok,
        "gradient_suite": grad_results,
        "gradient_suite_ok": grads_ok,
    }
    if not (ladder_ok and grads_ok):
        raise ProbeFailure(result)
    return result


class ProbeFailure(Exception):
    def __init__(self, result: dict):
        super().__init__("probe checks failed")
        self.result = result


def cmd_metrics(cfg: RunConfig) -> dict:
    """PSNR/SSIM plus edge and histogram fidelity between two images."""
    if cfg.image_a is None or cfg.image_b is None:
        raise ConfigError("metrics needs image_a and image_b")
    a = _load_image(cfg.image_a)
    b = _load_image(cfg.image_b)
    if a.shape != b.shape:
        raise NumericFailure(f"image sizes differ: {a.shape} vs {b.shape}")
    params = cfg.canny_params()
    report = metrics.MetricReport(metrics.psnr(a, b), metrics.ssim(a, b),
                                  str(cfg.image_a), str(cfg.image_b))
    return {
        "metrics": report.to_dict(),
        "pixel_loss": losses.pixel_loss(a, b),
        "edge_loss": losses.edge_loss(a, b, params),
        "hist_loss": losses.hist_loss(a, b, cfg.bins),
    }


def cmd_gen_data(cfg: RunConfig) -> dict:
    """Write paired synthetic degradation data with the standard naming."""
    import os

    tags = [t.strip() for t in cfg.tags.split(",") if t.strip()]
    for tag in tags:
        if tag not in data.DEGRADATIONS:
            raise ConfigError(f"unknown degradation tag {tag!r}")
    try:
        os.makedirs(cfg.outdir, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {cfg.outdir}: {exc}") from exc
    written = []
    for tag in tags:
        for i in range(cfg.count):
            seed = cfg.seed * 1000 + i
            img = data.synthetic_image(cfg.image_size, cfg.image_size, seed)
            pair = data.DEGRADATIONS[tag](img, seed=seed)
            deg_name, ref_name = data.pair_filenames(tag, seed)
            _save_image(os.path.join(cfg.outdir, deg_name), pair.degraded)
            _save_image(os.path.join(cfg.outdir, ref_name), pair.reference)
            written.extend([deg_name, ref_name])
    return {"outdir": cfg.outdir, "files": written}


COMMANDS = {
    "sde-roundtrip": cmd_sde_roundtrip,
    "train-toy": cmd_train_toy,
    "restore": cmd_restore,
    "probe": cmd_probe,
    "metrics": cmd_metrics,
    "gen-data": cmd_gen_data,
}


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrdiff",
                                     description="Mean-reverting diffusion restoration harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--report", default=None, help="write the JSON report here")
        p.add_argument("--out", default=None, help="output image path")

    p = sub.add_parser("sde-roundtrip", help="forward diffuse then exact-score recover")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--profile", default=None, choices=["constant", "linear", "cosine"])
    p.add_argument("--alpha-scale", dest="alpha_scale", type=float, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--stochastic", action="store_true", default=None)

    p = sub.add_parser("train-toy", help="train the toy denoiser")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--image-size", dest="image_size", type=int, default=None)
    p.add_argument("--pool-size", dest="pool_size", type=int, default=None)
    p.add_argument("--degradation", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--resume", default=None)

    p = sub.add_parser("restore", help="restore an image with a trained checkpoint")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--input", default=None)
    p.add_argument("--reference", default=None)
    p.add_argument("--degradation", default=None)
    p.add_argument("--stochastic", action="store_true", default=None)

    p = sub.add_parser("probe", help="receptive-field and gradient verification")
    common(p)
    p.add_argument("--dilations", default=None, help="comma list, e.g. 2,4,8")
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--probe-size", dest="probe_size", type=int, default=None)

    p = sub.add_parser("metrics", help="compare two image files")
    common(p)
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--bins", type=int, default=None)

    p = sub.add_parser("gen-data", help="generate paired synthetic data")
    common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--tags", default=None)
    p.add_argument("--image-size", dest="image_size", type=int, default=None)
    return parser


def run(argv=None) -> tuple[int, dict | None]:
    """Parse arguments, execute the command, and return (exit_code, report)."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    report_path = overrides.get("report")

    try:
        cfg = load_config(args.config, overrides, args.command)
        report_path = cfg.report
        result = COMMANDS[args.command](cfg)
        code = EXIT_OK
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc), args.command, report_path)
    except IoFailure as exc:
        return _fail(EXIT_IO, str(exc), args.command, report_path)
    except ProbeFailure as exc:
        report = _report(args.command, None, exc.result, error="probe checks failed")
        _emit(report, report_path)
        return EXIT_NUMERIC, report
    except (NumericFailure, NonFiniteError, ShapeError, ValueError) as exc:
        return _fail(EXIT_NUMERIC, str(exc), args.command, report_path)

    report = _report(args.command, cfg, result)
    _emit(report, report_path)
    return code, report


def _report(command: str, cfg: RunConfig | None, result: dict, error: str | None = None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "result": result}
    if cfg is not None:
        doc["config"] = asdict(cfg)
    if error is not None:
        doc["error"] = error
    return doc


def _emit(report: dict, path) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fail(code: int, message: str, command: str, report_path) -> tuple[int, dict]:
    sys.stderr.write(f"mrdiff {command}: {message}\n")
    report = {"schema_version": SCHEMA_VERSION, "command": command, "error": message,
              "exit_code": code}
    if report_path is not None:
        try:
            with open(report_path, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        except OSError:
            pass
    return code, report


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
