"""Command-line front end.

Subcommands: train, sweep, export-constellation, regions, fit-mb,
compare-bps, check-gradients.  Every output is deterministic given
(config, seed): CSV files carry a comment line with the tool version, a
hash of the config text and the seed, and floats are written with repr so
reruns are byte-identical.

Exit codes: 0 success, 1 verification failure, 2 config error,
3 runtime divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import sigma_n_from_snr, sigma_phi_from_linewidth
from .config import ConfigError, ExperimentConfig, parse_config
from .checkpoint import load_checkpoint, save_checkpoint
from .demapper import decision_region_grid
from .metrics import fit_mb_lambda
from .models import model_constellation, model_demapper
from .trainer import evaluate, full_loss_gradient_check, train
from .shaping import Constellation

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _stamp(config_text: str, seed) -> str:
    digest = hashlib.sha256(config_text.encode("utf-8")).hexdigest()[:12]
    return f"# phaseshape {__version__} config_sha256={digest} seed={seed}"


def _write_csv(path: Path, stamp: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(stamp + "\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _out_dir(args, exp: ExperimentConfig | None) -> Path:
    out = args.out if args.out else (exp["out_dir"] if exp else "out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("this command needs --config")
    return parse_config(args.config)


def _eval_seed(args, exp: ExperimentConfig | None) -> int:
    if args.seed is not None:
        return args.seed
    return exp["seed"] if exp else 0


# -- train --------------------------------------------------------------------


def cmd_train(args) -> int:
    exp = _load_config(args)
    cfg = exp.train_config(seed_override=args.seed)
    out = _out_dir(args, exp)
    ckpt = train(cfg)
    save_checkpoint(out / "checkpoint.psc", ckpt)
    stamp = _stamp(exp.text, cfg.seed)
    rows = [
        (h["epoch"], h["loss"], h["val_bmi"], h["temperature"])
        for h in ckpt.history
    ]
    _write_csv(out / "history.csv", stamp, ["epoch", "loss", "val_bmi", "temperature"], rows)
    if ckpt.diverged:
        print(f"training diverged after {ckpt.epoch} completed epochs; "
              f"last finite state written to {out}", file=sys.stderr)
        return EXIT_DIVERGED
    final = next((h["val_bmi"] for h in reversed(ckpt.history) if h["val_bmi"] is not None), None)
    if final is not None:
        print(f"final validation BMI: {final:.4f} bit/symbol")
    print(f"wrote {out / 'checkpoint.psc'} and {out / 'history.csv'}")
    return EXIT_OK


# -- sweep --------------------------------------------------------------------


def _grid_points(exp: ExperimentConfig):
    snrs = exp["sweep.snr_db"]
    lws = exp["sweep.linewidth_hz"]
    if not snrs or not lws:
        raise ConfigError("sweep needs non-empty 'sweep.snr_db' and 'sweep.linewidth_hz'")
    return sorted((s, w) for s in snrs for w in lws)


def cmd_sweep(args) -> int:
    exp = _load_config(args)
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    out = _out_dir(args, exp)
    seed = _eval_seed(args, exp)
    num_symbols = exp["evaluation.num_symbols"]
    grid = _grid_points(exp)

    def eval_point(i_point):
        i, (snr_db, lw) = i_point
        sn = sigma_n_from_snr(snr_db)
        sp = sigma_phi_from_linewidth(lw, cfg.symbol_rate)
        est = evaluate(
            ckpt.spec, ckpt.params, cfg, sn, sp, num_symbols,
            seed=seed, seed_context=("eval", i),
        )
        note = ""
        if cfg.parameterized and not (
            cfg.snr_db_range[0] <= snr_db <= cfg.snr_db_range[1]
            and cfg.linewidth_hz_range[0] <= lw <= cfg.linewidth_hz_range[1]
        ):
            note = "extrapolated"
        return (snr_db, lw, est.value, est.entropy, est.valid_symbols, note)

    jobs = list(enumerate(grid))
    if args.threads and args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(eval_point, jobs))
    else:
        rows = [eval_point(j) for j in jobs]
    rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(
        out / "sweep.csv",
        _stamp(exp.text, seed),
        ["snr_db", "linewidth_hz", "bmi", "entropy", "valid_symbols", "note"],
        rows,
    )
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} points)")
    return EXIT_OK


# -- export-constellation -------------------------------------------------------


def _checkpoint_sigmas(ckpt, args) -> tuple[float, float]:
    cfg = ckpt.config
    if args.snr_db is not None:
        sn = sigma_n_from_snr(args.snr_db)
    else:
        sn = 0.5 * sum(cfg.sigma_ranges()[0])
    if args.linewidth_hz is not None:
        sp = sigma_phi_from_linewidth(args.linewidth_hz, cfg.symbol_rate)
    else:
        sp = 0.5 * sum(cfg.sigma_ranges()[1])
    return sn, sp


def cmd_export_constellation(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    sn, sp = _checkpoint_sigmas(ckpt, args)
    points_t, probs_t, _ = model_constellation(
        ckpt.spec, ckpt.params.leaves(requires_grad=False), sn, sp
    )
    const = Constellation(points_t.data, probs_t.data, m=ckpt.spec.m)
    out = _out_dir(args, None)
    doc = {
        "m": const.m,
        "bit_convention": "MSB-first",
        "symmetry": ckpt.spec.symmetry,
        "sigma_n": sn,
        "sigma_phi": sp,
        "points": [
            {
                "index": i,
                "hex_label": const.hex_label(i),
                "re": float(const.points[i].real),
                "im": float(const.points[i].imag),
                "prob": float(const.probs[i]),
            }
            for i in range(const.size)
        ],
    }
    path = out / "constellation.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")
    print(f"wrote {path}")
    return EXIT_OK


def load_constellation_export(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back an exported constellation as (points, probs)."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    pts = sorted(doc["points"], key=lambda p: p["index"])
    points = np.array([p["re"] + 1j * p["im"] for p in pts], dtype=np.complex128)
    probs = np.array([p["prob"] for p in pts])
    return points, probs


# -- regions --------------------------------------------------------------------


def cmd_regions(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    m = ckpt.spec.m
    if not 1 <= args.bit_index <= m:
        raise ConfigError(f"--bit-index must lie in [1, {m}]")
    sn, sp = _checkpoint_sigmas(ckpt, args)
    net = model_demapper(ckpt.spec, ckpt.params.leaves(requires_grad=False))
    bounds = tuple(args.bounds)
    grid = decision_region_grid(net, args.bit_index - 1, bounds, args.resolution, sn, sp)
    out = _out_dir(args, None)
    path = out / f"regions_bit{args.bit_index}.csv"
    header = [
        f"re_min={_fmt(float(bounds[0]))}",
        f"re_max={_fmt(float(bounds[1]))}",
        f"im_min={_fmt(float(bounds[2]))}",
        f"im_max={_fmt(float(bounds[3]))}",
        f"resolution={args.resolution}",
        f"bit_index={args.bit_index}",
    ]
    _write_csv(path, _stamp("", args.seed if args.seed is not None else ckpt.config.seed),
               header, [tuple(row) for row in grid])
    print(f"wrote {path}")
    return EXIT_OK


# -- fit-mb ----------------------------------------------------------------------


def cmd_fit_mb(args) -> int:
    exp = _load_config(args) if args.config else None
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.spec.mode == "gcs":
        raise ConfigError("no probabilistic shaper in a GCS checkpoint")
    cfg = ckpt.config
    if exp is not None and exp["sweep.snr_db"] and exp["sweep.linewidth_hz"]:
        grid = _grid_points(exp)
    else:
        grid = [(cfg.snr_db_range[0], cfg.linewidth_hz_range[0])]
    rows = []
    for snr_db, lw in grid:
        sn = sigma_n_from_snr(snr_db)
        sp = sigma_phi_from_linewidth(lw, cfg.symbol_rate)
        points_t, probs_t, _ = model_constellation(
            ckpt.spec, ckpt.params.leaves(requires_grad=False), sn, sp
        )
        lam, kl = fit_mb_lambda(points_t.data, probs_t.data)
        rows.append((snr_db, lw, lam, kl))
    out = _out_dir(args, exp)
    seed = _eval_seed(args, exp)
    _write_csv(
        out / "mb_fit.csv",
        _stamp(exp.text if exp else "", seed),
        ["snr_db", "linewidth_hz", "lambda", "kl_bits"],
        rows,
    )
    print(f"wrote {out / 'mb_fit.csv'}")
    return EXIT_OK


# -- compare-bps -------------------------------------------------------------------


def cmd_compare_bps(args) -> int:
    exp = _load_config(args)
    base = exp.train_config(seed_override=None)
    out = _out_dir(args, exp)
    seeds = exp["compare.seeds"]
    if len(seeds) < 1:
        raise ConfigError("compare.seeds must not be empty")
    rows = []
    sn, sp = base.validation_point()
    num_symbols = exp["evaluation.num_symbols"]
    for L in exp["compare.num_test_phases"]:
        for mode in ("regular", "trainable"):
            bmis, temps = [], []
            for k, seed in enumerate(seeds):
                cfg = replace(base, num_test_phases=L, seed=seed,
                              trainable_temperature=(mode == "trainable"))
                ckpt = train(cfg)
                if mode == "trainable":
                    from .bps import temperature_from_raw

                    t_learned = temperature_from_raw(float(ckpt.params.block("t_raw")[0]))
                    est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, num_symbols,
                                   bps_mode="differentiable", temperature=t_learned,
                                   seed_context=("eval", k))
                    temps.append(t_learned)
                else:
                    est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, num_symbols,
                                   seed_context=("eval", k))
                    temps.append(cfg.t_end)
                bmis.append(est.value)
            rows.append(
                (L, mode, float(np.mean(temps)), float(np.mean(bmis)),
                 float(np.var(bmis, ddof=1)) if len(bmis) > 1 else 0.0)
            )
    _write_csv(
        out / "compare_bps.csv",
        _stamp(exp.text, exp["seed"]),
        ["num_test_phases", "mode", "temperature", "bmi_mean", "bmi_seed_variance"],
        rows,
    )
    print(f"wrote {out / 'compare_bps.csv'}")
    return EXIT_OK


# -- check-gradients ----------------------------------------------------------------


def cmd_check_gradients(args) -> int:
    ok = True
    for mode in ("gcs", "geopcs"):
        for t in (1.0, 0.1, 0.001):
            report = full_loss_gradient_check(mode=mode, temperature=t)
            status = "PASS" if report.ok else "FAIL"
            worst = float(np.max(report.rel_err)) if report.rel_err.size else 0.0
            print(f"{status} {mode} loss, t={t}: {len(report.names)} parameters, "
                  f"max rel err {worst:.2e}")
            if not report.ok:
                print(report.summary())
                ok = False
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- entry point ---------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="experiment config file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads for grid commands")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phaseshape",
                                 description="constellation shaping with in-loop blind phase search")
    ap.add_argument("--version", action="version", version=f"phaseshape {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training configuration")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="evaluate a checkpoint over a channel grid")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-constellation", help="write points/probabilities/labels as JSON")
    _add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--linewidth-hz", type=float, default=None)
    p.set_defaults(func=cmd_export_constellation)

    p = sub.add_parser("regions", help="export demapper decision-region grid for one bit")
    _add_common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bit-index", type=int, required=True, help="1-based, 1 = MSB")
    p.add_argument("--bounds", type=float, nargs=4, default=[-1.8, 1.8, -1.8, 1.8],
                   metavar=("RE_MIN", "RE_MAX", "IM_MIN", "IM_MAX"))
    p.add_argument("--resolution", type=int, default=129)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--linewidth-hz", type=float, default=None)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("fit-mb", help="fit the exponential shaping parameter per grid point")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_fit_mb)

    p = sub.add_parser("compare-bps", help="regular vs trainable soft BPS across seeds")
    _add_common(p)
    p.set_defaults(func=cmd_compare_bps)

    p = sub.add_parser("check-gradients", help="finite-difference verification of the full losses")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_check_gradients)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
