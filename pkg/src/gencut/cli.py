"""Command-line harness: training, recovery, sweeps, cut search, and studies.

Every run resolves its parameters (defaults < config file < flags), writes a
``config_echo.json`` into the output directory, and derives all randomness
from the resolved seed, so rerunning with ``--config config_echo.json``
reproduces the result files byte for byte (wall-clock timing columns aside).

Output layout: ``--out`` if given, else ``$GENCUT_OUT_ROOT/<command>-<hash>``
(default root ``./runs``). Results CSV columns:
image_id, method, c, m_over_n, seed, psnr_db, final_loss, wall_ms.
PNG reconstructions are 16-bit grayscale with [-1, 1] mapped to [0, 65535]
(quantization error at most 2/65535 per pixel).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from gencut.datasets import Dataset, generate_synthetic_dataset, load_image_folder
from gencut.generator import build_generator, cut, load_weights, save_weights
from gencut.lasso import lasso_dct_solve
from gencut.metrics import (
    compute_budget_study,
    psnr,
    representation_error_study,
    untrained_weights_study,
)
from gencut.recovery import (
    InitStrategy,
    RecoveryConfig,
    Stage2Config,
    iagan_refine,
    recover,
    select_cut_index,
)
from gencut.sensing import make_operator, measure, noise_sigma
from gencut.training import TrainConfig, train_vae

RESULT_FIELDS = ["image_id", "method", "c", "m_over_n", "seed", "psnr_db", "final_loss", "wall_ms"]


# ---------------------------------------------------------------------------
# small I/O helpers


def save_png16(path, img: np.ndarray) -> None:
    """Write a [-1, 1] grayscale image as 16-bit PNG."""
    from PIL import Image

    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ValueError("16-bit PNG output supports single-channel images")
        img = img[0]
    q = np.round((np.clip(img, -1.0, 1.0) + 1.0) / 2.0 * 65535.0).astype(np.uint16)
    Image.fromarray(q).save(path)  # uint16 infers 16-bit grayscale


def load_png16(path) -> np.ndarray:
    """Read a 16-bit PNG back to a (1, H, W) array in [-1, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        q = np.asarray(im, dtype=np.float64)
    return (q / 65535.0 * 2.0 - 1.0)[None, :, :]


def _fmt_row(row: dict) -> dict:
    out = dict(row)
    out["psnr_db"] = f"{row['psnr_db']:.6f}"
    out["final_loss"] = f"{row['final_loss']:.9e}"
    out["wall_ms"] = str(int(round(row["wall_ms"])))
    return out


def _write_results_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(_fmt_row(row))


def _config_hash(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()[:8]


def _resolve_out_dir(command: str, out: str | None, params: dict) -> Path:
    if out:
        path = Path(out)
    else:
        root = Path(os.environ.get("GENCUT_OUT_ROOT", "runs"))
        path = root / f"{command}-{_config_hash(params)}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_echo(out_dir: Path, command: str, params: dict) -> None:
    with open(out_dir / "config_echo.json", "w") as fh:
        json.dump({"command": command, "params": params}, fh, indent=2, sort_keys=True)


def _resolve_params(defaults: dict, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    params = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            echo = json.load(fh)
        file_params = echo.get("params", echo)
        for key in params:
            if key in file_params:
                params[key] = file_params[key]
    for key in params:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    return params


# ---------------------------------------------------------------------------
# dataset / operator plumbing shared by commands


def _load_dataset(params: dict) -> Dataset:
    src = params["dataset"]
    if src == "synthetic":
        return generate_synthetic_dataset(params["n_images"], params["size"], params["data_seed"])
    return load_image_folder(src, params["size"])


def _select_images(data: Dataset, which: str, count: int, net=None, seed: int = 0) -> np.ndarray:
    if which == "generated":
        from gencut.generator import sample

        if net is None:
            raise ValueError("generated targets need loaded generator weights")
        return sample(net, count, seed=seed + 555)
    if which == "faces-test":
        imgs = data.select(family="faces", split="test")
    elif which == "faces-val":
        imgs = data.select(family="faces", split="val")
    elif which == "scenes":
        imgs = data.select(family="scenes")
    elif which == "folder":
        imgs = data.images
    else:
        raise ValueError(f"unknown image selection {which!r}")
    if imgs.shape[0] < count:
        raise ValueError(f"requested {count} images but only {imgs.shape[0]} available in {which!r}")
    return imgs[:count]


def _operator_for(params: dict, image_shape, ratio: float | None, seed: int):
    kind = params["operator"]
    n = int(np.prod(image_shape))
    if kind == "identity":
        return make_operator("identity", image_shape, seed=seed)
    if kind == "gaussian":
        m = int(np.floor((ratio if ratio is not None else params["m_over_n"]) * n))
        return make_operator("gaussian", image_shape, m=m, seed=seed)
    if kind == "inpainting":
        return make_operator("inpainting", image_shape, keep_fraction=params["keep_fraction"], seed=seed)
    if kind == "superres":
        return make_operator("superres", image_shape, factor=params["factor"], seed=seed)
    raise ValueError(f"unknown operator {kind!r}")


def _sigma_for(params: dict, op, image_shape, refs: np.ndarray) -> float:
    sigma = params["sigma"]
    if sigma == "auto":
        if op.kind == "identity":
            return 0.0
        return noise_sigma(image_shape, op.m, op, refs)
    return float(sigma)


def _recovery_config(params: dict, cut_index: int, seed: int) -> RecoveryConfig:
    return RecoveryConfig(
        cut_index=cut_index,
        restarts=params["restarts"],
        steps=params["steps"],
        step_size=params["step_size"],
        optimizer=params["optimizer"],
        init=InitStrategy(params["init"]),
        seed=seed,
    )


def _meas_seed(base: int, image_index: int, ratio_index: int = 0) -> int:
    return base + 101 * image_index + 10007 * ratio_index


# ---------------------------------------------------------------------------
# commands

TRAIN_DEFAULTS = {
    "dataset": "synthetic",
    "n_images": 2000,
    "size": 32,
    "data_seed": 0,
    "epochs": 30,
    "batch_size": 64,
    "lr": 1e-3,
    "beta": 1.0,
    "seed": 0,
}


def cmd_train(args) -> int:
    params = _resolve_params(TRAIN_DEFAULTS, args)
    out_dir = _resolve_out_dir("train", args.out, params)
    data = _load_dataset(params)
    cfg = TrainConfig(
        epochs=params["epochs"],
        batch_size=params["batch_size"],
        lr=params["lr"],
        beta=params["beta"],
        seed=params["seed"],
        image_size=params["size"],
    )
    net, log = train_vae(cfg, data)
    save_weights(net, out_dir / "weights.gsgn")
    with open(out_dir / "train_log.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "recon", "kl"])
        writer.writeheader()
        for row in log["epochs"]:
            writer.writerow({k: (f"{v:.9e}" if isinstance(v, float) else v) for k, v in row.items()})
    _write_echo(out_dir, "train", params)
    print(f"trained {net.recipe}: final loss {log['epochs'][-1]['loss']:.3f}, "
          f"recon psnr {log['final_recon_psnr']:.2f} dB -> {out_dir}")
    return 0


RECOVER_DEFAULTS = {
    "dataset": "synthetic",
    "n_images": 2000,
    "size": 32,
    "data_seed": 0,
    "images": "faces-test",
    "count": 10,
    "operator": "gaussian",
    "m_over_n": 0.2,
    "keep_fraction": 0.2,
    "factor": 2,
    "sigma": "auto",
    "cut_index": 1,
    "restarts": 3,
    "steps": 12,
    "step_size": 1.0,
    "optimizer": "lbfgs",
    "init": "zero",
    "seed": 0,
}


def cmd_recover(args) -> int:
    params = _resolve_params(RECOVER_DEFAULTS, args)
    out_dir = _resolve_out_dir("recover", args.out, params)
    net = load_weights(args.weights)
    data = _load_dataset(params)
    imgs = _select_images(data, params["images"], params["count"], net=net, seed=params["seed"])
    refs = data.select(family="faces", split="val") if params["dataset"] == "synthetic" else data.images
    gc = cut(net, params["cut_index"])

    rows = []
    for i, img in enumerate(imgs):
        op = _operator_for(params, net.out_shape, None, seed=_meas_seed(params["seed"] + 7000, i))
        sigma = _sigma_for(params, op, net.out_shape, refs)
        meas = measure(img, op, sigma, seed=_meas_seed(params["seed"] + 7100, i))
        cfg = _recovery_config(params, params["cut_index"], _meas_seed(params["seed"] + 7200, i))
        res = recover(gc, meas, cfg, target=img)
        save_png16(out_dir / f"target_{i:03d}.png", img)
        save_png16(out_dir / f"recon_{i:03d}.png", res.x_hat)
        ratio = op.m / net.output_dim
        rows.append(
            {
                "image_id": f"{params['images']}/{i}",
                "method": "cut" if params["cut_index"] > 0 else "uncut",
                "c": params["cut_index"],
                "m_over_n": f"{ratio:.6f}",
                "seed": cfg.seed,
                "psnr_db": res.psnr_db,
                "final_loss": res.best_loss,
                "wall_ms": res.wall_ms,
            }
        )
    _write_results_csv(out_dir / "results.csv", rows)
    _write_echo(out_dir, "recover", params)
    mean = float(np.mean([float(r["psnr_db"]) for r in rows]))
    print(f"recovered {len(rows)} images, mean psnr {mean:.2f} dB -> {out_dir}")
    return 0


SWEEP_DEFAULTS = {
    "dataset": "synthetic",
    "n_images": 2000,
    "size": 32,
    "data_seed": 0,
    "images": "faces-test",
    "count": 20,
    "ratios": "0.05,0.1,0.2,0.3,0.5",
    "methods": "cut,uncut,lasso_dct,iagan",
    "sigma": "auto",
    "cut_index": 1,
    "restarts": 3,
    "cut_steps": 12,
    "uncut_steps": 100,
    "step_size": 1.0,
    "optimizer": "lbfgs",
    "init": "zero",
    "lam": 0.01,
    "iagan_stage1_steps": 150,
    "iagan_stage2_steps": 100,
    "seed": 0,
}


def cmd_sweep(args) -> int:
    params = _resolve_params(SWEEP_DEFAULTS, args)
    out_dir = _resolve_out_dir("sweep", args.out, params)
    net = load_weights(args.weights)
    data = _load_dataset(params)
    imgs = _select_images(data, params["images"], params["count"], net=net, seed=params["seed"])
    refs = data.select(family="faces", split="val") if params["dataset"] == "synthetic" else data.images
    ratios = [float(r) for r in str(params["ratios"]).split(",") if r]
    methods = [m.strip() for m in str(params["methods"]).split(",") if m.strip()]
    n = net.output_dim

    rows = []
    summary = []
    for ri, ratio in enumerate(ratios):
        m = int(np.floor(ratio * n))
        per_method: dict[str, list[float]] = {meth: [] for meth in methods}
        for i, img in enumerate(imgs):
            op = make_operator("gaussian", net.out_shape, m=m, seed=_meas_seed(params["seed"] + 7000, i, ri))
            sigma = _sigma_for(params, op, net.out_shape, refs)
            meas = measure(img, op, sigma, seed=_meas_seed(params["seed"] + 7100, i, ri))
            rec_seed = _meas_seed(params["seed"] + 7200, i, ri)
            for method in methods:
                if method == "cut":
                    cfg = RecoveryConfig(
                        cut_index=params["cut_index"], restarts=params["restarts"],
                        steps=params["cut_steps"], step_size=params["step_size"],
                        optimizer=params["optimizer"], init=InitStrategy(params["init"]),
                        seed=rec_seed,
                    )
                    res = recover(cut(net, params["cut_index"]), meas, cfg, target=img)
                    val, loss, wall, c_used = res.psnr_db, res.best_loss, res.wall_ms, params["cut_index"]
                elif method == "uncut":
                    cfg = RecoveryConfig(
                        cut_index=0, restarts=params["restarts"], steps=params["uncut_steps"],
                        step_size=params["step_size"], optimizer=params["optimizer"],
                        init=InitStrategy("censored_normal"), seed=rec_seed,
                    )
                    res = recover(cut(net, 0), meas, cfg, target=img)
                    val, loss, wall, c_used = res.psnr_db, res.best_loss, res.wall_ms, 0
                elif method == "lasso_dct":
                    import time as _time

                    t0 = _time.perf_counter()
                    sol = lasso_dct_solve(op, meas.y, lam=params["lam"], max_iters=400)
                    wall = (_time.perf_counter() - t0) * 1000.0
                    val, loss, c_used = psnr(img, sol.x_hat), sol.objective, 0
                elif method == "iagan":
                    stage1 = RecoveryConfig(
                        cut_index=0, restarts=params["restarts"], steps=params["iagan_stage1_steps"],
                        step_size=0.05, optimizer="adam", init=InitStrategy("censored_normal"),
                        seed=rec_seed,
                    )
                    res = iagan_refine(
                        net, meas, stage1, Stage2Config(steps=params["iagan_stage2_steps"]), target=img
                    )
                    val, loss, wall, c_used = res.psnr_db, res.best_loss, res.wall_ms, 0
                else:
                    raise ValueError(f"unknown method {method!r}")
                per_method[method].append(val)
                rows.append(
                    {
                        "image_id": f"{params['images']}/{i}",
                        "method": method,
                        "c": c_used,
                        "m_over_n": f"{ratio:.6f}",
                        "seed": rec_seed,
                        "psnr_db": val,
                        "final_loss": loss,
                        "wall_ms": wall,
                    }
                )
        for method in methods:
            vals = per_method[method]
            summary.append(
                {
                    "m_over_n": f"{ratio:.6f}",
                    "method": method,
                    "mean_psnr": f"{np.mean(vals):.6f}",
                    "std_psnr": f"{np.std(vals):.6f}",
                    "n": len(vals),
                }
            )
    _write_results_csv(out_dir / "results.csv", rows)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["m_over_n", "method", "mean_psnr", "std_psnr", "n"])
        writer.writeheader()
        for row in summary:
            writer.writerow(row)
    _write_echo(out_dir, "sweep", params)
    print(f"sweep over {len(ratios)} ratios x {len(methods)} methods -> {out_dir}")
    return 0


CUTSEARCH_DEFAULTS = {
    "dataset": "synthetic",
    "n_images": 2000,
    "size": 32,
    "data_seed": 0,
    "count": 16,
    "candidates": "1,2,3",
    "m_over_n": 0.1,
    "sigma": "auto",
    "restarts": 3,
    "steps": 12,
    "step_size": 1.0,
    "optimizer": "lbfgs",
    "init": "zero",
    "seed": 0,
}


def cmd_cutsearch(args) -> int:
    params = _resolve_params(CUTSEARCH_DEFAULTS, args)
    out_dir = _resolve_out_dir("cutsearch", args.out, params)
    net = load_weights(args.weights)
    data = _load_dataset(params)
    imgs = _select_images(data, "faces-val", params["count"])
    refs = data.select(family="faces", split="val")
    n = net.output_dim
    m = int(np.floor(params["m_over_n"] * n))
    sigma_cache: dict[int, float] = {}

    def measurement_fn(i, img):
        op = make_operator("gaussian", net.out_shape, m=m, seed=_meas_seed(params["seed"] + 7000, i))
        if m not in sigma_cache:
            sigma_cache[m] = _sigma_for(params, op, net.out_shape, refs)
        return measure(img, op, sigma_cache[m], seed=_meas_seed(params["seed"] + 7100, i))

    candidates = [int(c) for c in str(params["candidates"]).split(",") if c]
    cfg = _recovery_config(params, candidates[0], params["seed"])
    c_star, table = select_cut_index(net, imgs, measurement_fn, cfg, candidates)
    with open(out_dir / "cutsearch.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["c", "mean_psnr", "std_psnr", "n", "selected"])
        writer.writeheader()
        for row in table:
            writer.writerow(
                {
                    "c": row["c"],
                    "mean_psnr": f"{row['mean_psnr']:.6f}",
                    "std_psnr": f"{row['std_psnr']:.6f}",
                    "n": row["n"],
                    "selected": int(row["c"] == c_star),
                }
            )
    _write_echo(out_dir, "cutsearch", params)
    print(f"selected cut index {c_star} -> {out_dir}")
    return 0


STUDY_DEFAULTS = {
    "dataset": "synthetic",
    "n_images": 2000,
    "size": 32,
    "data_seed": 0,
    "study": "repr",
    "count": 20,
    "cut_index": 1,
    "m_over_n": 0.2,
    "sigma": "auto",
    "restarts": 3,
    "steps": 100,
    "step_size": 1.0,
    "optimizer": "lbfgs",
    "init": "censored_normal",
    "budget_restarts_mult": 6,
    "budget_steps_mult": 4,
    "weight_seed": 99,
    "seed": 0,
}


def cmd_study(args) -> int:
    params = _resolve_params(STUDY_DEFAULTS, args)
    out_dir = _resolve_out_dir("study", args.out, params)
    net = load_weights(args.weights)
    data = _load_dataset(params)
    refs = data.select(family="faces", split="val")
    cfg = _recovery_config(params, params["cut_index"], params["seed"])
    study = params["study"]
    n = net.output_dim

    def cs_measurement_fn(i, img):
        m = int(np.floor(params["m_over_n"] * n))
        op = make_operator("gaussian", net.out_shape, m=m, seed=_meas_seed(params["seed"] + 7000, i))
        sigma = _sigma_for(params, op, net.out_shape, refs)
        return measure(img, op, sigma, seed=_meas_seed(params["seed"] + 7100, i))

    if study == "repr":
        from gencut.generator import sample

        train_imgs = _select_images(data, "faces-test", params["count"])
        gen_imgs = sample(net, params["count"], seed=params["seed"] + 555)
        report = representation_error_study(net, params["cut_index"], train_imgs, gen_imgs, cfg)
    elif study == "untrained":
        imgs = _select_images(data, "faces-test", params["count"])
        cs_cfg = replace(cfg, steps=min(cfg.steps, 12), init=InitStrategy("zero"))
        report = untrained_weights_study(
            net, params["cut_index"], imgs, cs_cfg, params["weight_seed"], cs_measurement_fn
        )
    elif study == "budget":
        imgs = _select_images(data, "faces-test", params["count"])
        base = replace(cfg, steps=min(cfg.steps, 50))
        report = compute_budget_study(
            net,
            imgs,
            base,
            c=params["cut_index"],
            multipliers=(params["budget_restarts_mult"], params["budget_steps_mult"]),
            measurement_fn=cs_measurement_fn,
        )
    else:
        raise ValueError(f"unknown study {study!r}; known: repr, untrained, budget")

    report.to_csv(out_dir / f"study_{report.study}.csv")
    report.to_json(out_dir / f"study_{report.study}.json")
    _write_echo(out_dir, "study", params)
    print(f"study {report.study} -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(sub, defaults: dict, needs_weights: bool) -> None:
    sub.add_argument("--config", help="config echo JSON to replay (flags still override)")
    sub.add_argument("--out", help="output directory (default $GENCUT_OUT_ROOT/<cmd>-<hash>)")
    if needs_weights:
        sub.add_argument("--weights", required=True, help="generator weight file (.gsgn)")
    for key, value in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            sub.add_argument(flag, type=int, default=None)
        elif isinstance(value, int):
            sub.add_argument(flag, type=int, default=None)
        elif isinstance(value, float):
            sub.add_argument(flag, type=float, default=None)
        else:
            sub.add_argument(flag, type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gencut",
        description="Train block generators and recover images from compressive measurements "
        "by optimizing the inputs of a cut generator.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    _add_common(subs.add_parser("train", help="train the vae-mini generator"), TRAIN_DEFAULTS, False)
    _add_common(subs.add_parser("recover", help="recover images through a (cut) generator"), RECOVER_DEFAULTS, True)
    _add_common(subs.add_parser("sweep", help="method comparison across sampling ratios"), SWEEP_DEFAULTS, True)
    _add_common(subs.add_parser("cutsearch", help="select the cut index on validation images"), CUTSEARCH_DEFAULTS, True)
    _add_common(subs.add_parser("study", help="run an empirical study (repr/untrained/budget)"), STUDY_DEFAULTS, True)
    return parser


_COMMANDS = {
    "train": cmd_train,
    "recover": cmd_recover,
    "sweep": cmd_sweep,
    "cutsearch": cmd_cutsearch,
    "study": cmd_study,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, AssertionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
