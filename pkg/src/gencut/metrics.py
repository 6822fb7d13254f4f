"""PSNR and the empirical study harness.

Studies produce a StudyReport: a flat list of per-image records plus
aggregates that are always recomputable from the records. Reports serialize
to CSV with a JSON sidecar carrying the config echo.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "psnr",
    "StudyReport",
    "representation_error_study",
    "untrained_weights_study",
    "compute_budget_study",
]

PSNR_CAP_DB = 100.0  # stands in for +inf on exact matches so aggregates stay finite


def psnr(x: np.ndarray, x_hat: np.ndarray, peak: float = 2.0, cap: float = PSNR_CAP_DB) -> float:
    """10*log10(peak^2 / MSE) in decibels, capped at ``cap`` for exact matches.

    Images in [-1, 1] have peak 2.0 (the default).
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"psnr: shapes {x.shape} and {x_hat.shape} differ")
    if peak <= 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((x - x_hat) ** 2))
    if mse == 0.0:
        return cap
    return min(float(10.0 * np.log10(peak * peak / mse)), cap)


@dataclass
class StudyReport:
    study: str
    records: list[dict]
    aggregates: dict
    config: dict = field(default_factory=dict)

    def recompute_aggregates(self) -> dict:
        """Aggregate mean/std PSNR per method from the raw records."""
        out: dict = {}
        methods = sorted({r["method"] for r in self.records})
        for method in methods:
            vals = [r["psnr_db"] for r in self.records if r["method"] == method]
            out[method] = {
                "mean_psnr": float(np.mean(vals)),
                "std_psnr": float(np.std(vals)),
                "n": len(vals),
            }
        return out

    def to_csv(self, path) -> None:
        fields = sorted({k for r in self.records for k in r})
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for r in self.records:
                writer.writerow(r)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(
                {"study": self.study, "aggregates": self.aggregates, "config": self.config},
                fh,
                indent=2,
                sort_keys=True,
            )


def _fmt(v: float) -> float:
    return float(f"{v:.9g}")


def _recover_cell(net, c, images, cfg, measurement_fn, method, dataset_tag, records):
    from gencut.generator import cut
    from gencut.recovery import recover

    gc = cut(net, c)
    values = []
    for i, img in enumerate(images):
        meas = measurement_fn(i, img)
        res = recover(gc, meas, replace(cfg, cut_index=c, seed=cfg.seed + i), target=img)
        records.append(
            {
                "target_id": f"{dataset_tag}/{i}",
                "method": method,
                "dataset": dataset_tag,
                "c": c,
                "psnr_db": _fmt(res.psnr_db),
                "final_loss": _fmt(res.best_loss),
            }
        )
        values.append(res.psnr_db)
    return values


def _identity_measurement(image_shape):
    from gencut.sensing import make_operator, measure

    op = make_operator("identity", image_shape)
    return lambda i, img: measure(img, op, sigma=0.0)


def representation_error_study(net, c, images_train, images_generated, cfg) -> StudyReport:
    """Reconstruction quality with the identity operator and zero noise.

    Four cells: {uncut, cut} x {train, generated}. With A = I and no noise
    the only error sources are representation error and optimization error;
    generated images lie in the uncut range by construction, so their uncut
    cell isolates pure optimization error.
    """
    meas_fn = _identity_measurement(net.out_shape)
    records: list[dict] = []
    for method, cut_index in (("uncut", 0), ("cut", c)):
        for tag, images in (("train", images_train), ("generated", images_generated)):
            _recover_cell(net, cut_index, images, cfg, meas_fn, method, tag, records)
    report = StudyReport("representation_error", records, {}, {"c": c, "recovery": cfg.echo()})
    agg: dict = {}
    for method in ("uncut", "cut"):
        for tag in ("train", "generated"):
            vals = [r["psnr_db"] for r in records if r["method"] == method and r["dataset"] == tag]
            agg[f"{method}/{tag}"] = {
                "mean_psnr": float(np.mean(vals)),
                "std_psnr": float(np.std(vals)),
                "n": len(vals),
            }
    agg["runs_logged"] = len(records)
    report.aggregates = agg
    return report


def untrained_weights_study(
    trained_net, c, images, cfg, seed, measurement_fn: Callable | None = None
) -> StudyReport:
    """Trained weights versus fresh random weights of the same recipe.

    Both arms share the recipe, cut index, recovery config, and measurements;
    only the weight source differs. Asserts the trained arm wins on mean PSNR.
    """
    from gencut.generator import build_generator

    if measurement_fn is None:
        measurement_fn = _identity_measurement(trained_net.out_shape)
    random_net = build_generator(trained_net.recipe, seed=seed)
    records: list[dict] = []
    trained_vals = _recover_cell(trained_net, c, images, cfg, measurement_fn, "trained", "eval", records)
    random_vals = _recover_cell(random_net, c, images, cfg, measurement_fn, "random", "eval", records)
    agg = {
        "trained": {"mean_psnr": float(np.mean(trained_vals)), "std_psnr": float(np.std(trained_vals)), "n": len(trained_vals)},
        "random": {"mean_psnr": float(np.mean(random_vals)), "std_psnr": float(np.std(random_vals)), "n": len(random_vals)},
        "gap_db": float(np.mean(trained_vals) - np.mean(random_vals)),
    }
    report = StudyReport(
        "untrained_weights",
        records,
        agg,
        {"c": c, "recipe": trained_net.recipe, "weight_seed": seed, "recovery": cfg.echo()},
    )
    if not agg["trained"]["mean_psnr"] > agg["random"]["mean_psnr"]:
        raise AssertionError(
            f"trained weights did not beat random weights: "
            f"{agg['trained']['mean_psnr']:.2f} dB vs {agg['random']['mean_psnr']:.2f} dB"
        )
    return report


def compute_budget_study(
    net,
    images,
    cfg,
    c,
    multipliers: tuple[int, int] = (6, 4),
    measurement_fn: Callable | None = None,
    cut_cfg=None,
) -> StudyReport:
    """Does extra uncut compute close the gap to cutting? (It should not.)

    Runs uncut recovery at the base budget (R, T) and at (mR, kT), plus cut
    recovery at its own base budget (``cut_cfg``, defaulting to ``cfg``), all
    on the same measurements. Reports the uncut improvement and the
    cut-versus-uncut gap from the same run.
    """
    mr, mt = multipliers
    if measurement_fn is None:
        measurement_fn = _identity_measurement(net.out_shape)
    big = replace(cfg, restarts=cfg.restarts * mr, steps=cfg.steps * mt)
    records: list[dict] = []
    base_vals = _recover_cell(net, 0, images, cfg, measurement_fn, "uncut_base", "eval", records)
    big_vals = _recover_cell(net, 0, images, big, measurement_fn, "uncut_big_budget", "eval", records)
    cut_vals = _recover_cell(net, c, images, cut_cfg or cfg, measurement_fn, "cut_base", "eval", records)
    agg = {
        "uncut_base": {"mean_psnr": float(np.mean(base_vals)), "std_psnr": float(np.std(base_vals)), "n": len(base_vals)},
        "uncut_big_budget": {"mean_psnr": float(np.mean(big_vals)), "std_psnr": float(np.std(big_vals)), "n": len(big_vals)},
        "cut_base": {"mean_psnr": float(np.mean(cut_vals)), "std_psnr": float(np.std(cut_vals)), "n": len(cut_vals)},
        "budget_improvement_db": float(np.mean(big_vals) - np.mean(base_vals)),
        "cut_gap_db": float(np.mean(cut_vals) - np.mean(base_vals)),
        "budgets": {"base": [cfg.restarts, cfg.steps], "big": [big.restarts, big.steps]},
    }
    return StudyReport(
        "compute_budget",
        records,
        agg,
        {"c": c, "multipliers": list(multipliers), "recovery": cfg.echo()},
    )
