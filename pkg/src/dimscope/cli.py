"""Batch command line: ``dimscope {synth,estimate,energy-bin,report}``.

Exit codes: 0 success, 2 validation failure, 3 numerical rejection,
64 usage error. A failed run removes the files it created.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import NumericalError, PointSet, ValidationError, normalize_pixels

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 64

DECISIONS = {
    "sde": "variance-exploding, perturbation kernel N(x0, sigma^2 I)",
    "dsm_time_conditioning": "log sigma appended to standardized input; output divided by sigma",
    "gap_tie_break": "first maximal gap; low_confidence when gap < 1e-6 * s1",
    "truncated_spectrum": "gap search over available K-1 indices when K < d",
    "mle_aggregation": "inverse of mean per-point inverse",
    "lpca_threshold": "eigenvalue >= alpha * lambda_max",
    "ppca_selection": "BIC over q = 0..d-1, ties to smaller q",
    "energy_transform": "identity if positive, negate if negative, shift otherwise",
    "interval_rule": "unit log-sigma bins, floor, 1-based from dataset minimum, increasing with raw statistic",
    "snr_rule": "max pixel / (1.4826 * MAD of border ring)",
    "fr_labels": "per-source catalog label mapped to FRI, FRII or unlabeled; missing labels are unlabeled",
    "catalog_cuts": "consensus >= 0.65, angular size > 20 arcsec",
    "std_convention": "population (divisor N)",
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value file (or a previous run_manifest.json); flags win")
    p.add_argument("--workers", type=int, default=1, help="parallel workers for per-sample estimation")
    p.add_argument("--json-errors", action="store_true", help="report failures as JSON on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="dimscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dimscope {__version__}")
    parser.add_argument("--json-errors", action="store_true", dest="json_errors_global")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("synth", help="generate a synthetic manifold with known dimension")
    p.add_argument("--kind", required=True, choices=["subspace_gaussian", "k_sphere", "k_cube", "swiss_roll"])
    p.add_argument("-d", "--ambient-d", type=int, required=True)
    p.add_argument("-k", "--intrinsic-k", type=int, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variances", help="comma-separated tangent variances (subspace_gaussian)")
    _common(p)

    p = sub.add_parser("estimate", help="per-sample intrinsic dimension estimates")
    p.add_argument("--data", help="points tensor (n, d) or images (n, h, w)")
    p.add_argument("--ids", help="ids CSV; defaults to ids.csv beside --data")
    p.add_argument("--normalize", choices=["none", "per_sample_minmax"], default="none")
    p.add_argument("--method", required=True, choices=["diffusion", "mle", "lpca", "ppca"])
    p.add_argument("--oracle", choices=["analytic", "file", "dsm"], default="analytic")
    p.add_argument("--truth", help="truth.json from synth (analytic oracle)")
    p.add_argument("--scores", help="score tensor (n, K, d) (file oracle)")
    p.add_argument("--sigma", type=float, default=0.01, help="sigma_t0")
    p.add_argument("--K", type=int, default=None, help="score vectors per point (default 4d)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=None, help="neighbours (mle default 20, lpca default 100)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--dsm-steps", type=int, default=20000)
    p.add_argument("--dsm-seed", type=int, default=0)
    p.add_argument("--dsm-hidden", default="128,128,128")
    p.add_argument("--dsm-batch", type=int, default=128)
    p.add_argument("--dsm-lr", type=float, default=1e-3)
    _common(p)

    p = sub.add_parser("energy-bin", help="energy scores and interval labels from posterior logits")
    p.add_argument("--logits", required=True, help="logit tensor (n, N, C)")
    p.add_argument("--ids", help="ids CSV; defaults to ids.csv beside --logits")
    p.add_argument("--T", type=float, default=1.0, help="temperature")
    _common(p)

    p = sub.add_parser("report", help="interval tables, trends, plots")
    p.add_argument("--estimates", action="append", default=[], help="estimates.csv (repeatable)")
    p.add_argument("--energy", help="energy_records.csv")
    p.add_argument("--catalog", help="catalog CSV")
    p.add_argument("--fixtures", help="interval-table fixture CSV (default: bundled reference tables)")
    p.add_argument("--data", help="points tensor for per-interval PPCA")
    p.add_argument("--ids", help="ids CSV for --data / --images")
    p.add_argument("--images", help="image tensor (n, h, w) for SNR")
    p.add_argument("--border-width", type=int, default=5)
    p.add_argument("--spectra", action="append", default=[], help="spectra.csv from estimate (repeatable)")
    p.add_argument("--max-spectra", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    _common(p)
    return parser


# -- config handling -------------------------------------------------------


def read_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    path = _config_path(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    config = read_config(path)
    sub = parser._subparsers._group_actions[0].choices[command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in config.items():
        if key in ("command", "config", "out", "help") or key not in known:
            continue
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
        elif isinstance(action, argparse._AppendAction):
            value = value if isinstance(value, list) else [v.strip() for v in str(value).split(",") if v.strip()]
        elif isinstance(value, str) and action.type is not None:
            value = action.type(value)
        defaults[key] = value
    sub.set_defaults(**defaults)
    for a in sub._actions:
        if a.dest in defaults:
            a.required = False
    return parser.parse_args(argv)


# -- run bookkeeping -------------------------------------------------------


class Run:
    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out)
        self.created_dir = not self.out.exists()
        self.out.mkdir(parents=True, exist_ok=True)
        self.before = {p for p in self.out.iterdir()}
        self.seeds = {}
        self.extra = {}

    def path(self, name) -> Path:
        return self.out / name

    def rollback(self):
        for p in self.out.iterdir():
            if p not in self.before and p.is_file():
                p.unlink()
        if self.created_dir and not any(self.out.iterdir()):
            self.out.rmdir()

    def manifest(self):
        import scipy

        versions = {"dimscope": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
        if "torch" in sys.modules:
            versions["torch"] = sys.modules["torch"].__version__
        config = {k: v for k, v in vars(self.args).items() if k not in ("json_errors", "json_errors_global")}
        from .io import write_json

        write_json(
            self.path("run_manifest.json"),
            {
                "command_line": ["dimscope", *self.argv],
                "command": self.args.command,
                "config": config,
                "seeds": self.seeds,
                "decisions": DECISIONS,
                "versions": versions,
                "timestamp": datetime.now(timezone.utc).isoformat(),
                **self.extra,
            },
        )


def _ids_for(path, ids_arg, n):
    from .io import read_ids_csv

    candidate = Path(ids_arg) if ids_arg else Path(path).with_name("ids.csv")
    if ids_arg or candidate.exists():
        ids = read_ids_csv(candidate)
        if len(ids) != n:
            raise ValidationError(f"{candidate}: {len(ids)} ids for {n} samples")
        return ids
    return None


def _load_points(path, ids_arg=None, normalize="none") -> PointSet:
    from .io import read_tensor

    arr = read_tensor(path)
    if arr.ndim == 3:
        arr = arr.reshape(arr.shape[0], -1)
    elif arr.ndim != 2:
        raise ValidationError(f"{path}: expected (n, d) points or (n, h, w) images, got shape {arr.shape}")
    return normalize_pixels(PointSet(arr, _ids_for(path, ids_arg, arr.shape[0]) or ()), normalize)


# -- commands --------------------------------------------------------------


def cmd_synth(run: Run):
    from .io import write_ids_csv, write_json, write_tensor
    from .synth import ManifoldSpec, sample_manifold

    a = run.args
    variances = tuple(float(v) for v in a.variances.split(",")) if a.variances else None
    spec = ManifoldSpec(a.kind, a.ambient_d, a.intrinsic_k, a.n, a.noise, a.seed, variances)
    manifold = sample_manifold(spec)
    write_tensor(run.path("points.dimt"), manifold.points.data)
    write_ids_csv(run.path("ids.csv"), manifold.points.ids)
    write_json(run.path("truth.json"), {"spec": spec.to_dict(), "true_k": manifold.true_k})
    run.seeds["synth"] = a.seed


def _parse_hidden(text):
    return tuple(int(w) for w in str(text).split(",") if w.strip())


def cmd_estimate(run: Run):
    from .io import write_csv, write_estimates_csv, write_json

    a = run.args
    summary = {"method": a.method}
    if a.method == "diffusion" and a.oracle == "file":
        estimates = _estimate_from_file(a)
        summary["oracle"] = "file"
    else:
        if not a.data:
            raise ValidationError("--data is required")
        pts = _load_points(a.data, a.ids, a.normalize)
        summary.update(n=pts.n, d=pts.d, normalize=a.normalize)
        if a.method == "diffusion":
            estimates = _estimate_diffusion(run, pts, summary)
        elif a.method == "mle":
            from .classical import MleParams, mle_id_aggregate, mle_id_points

            params = MleParams(m=a.m or 20)
            estimates = mle_id_points(pts, params, workers=a.workers)
            agg = mle_id_aggregate(estimates)
            summary.update(m=params.m, aggregate=agg.estimate, n_included=agg.n_included, n_excluded=agg.n_excluded)
        elif a.method == "lpca":
            from .classical import LpcaParams, lpca_id_points

            params = LpcaParams(m=a.m or 100, alpha=a.alpha)
            estimates = lpca_id_points(pts, params, workers=a.workers)
            kept = [e.k_hat for e in estimates if e.k_hat is not None]
            summary.update(m=params.m, alpha=params.alpha, mean=float(np.mean(kept)) if kept else None, n_excluded=len(estimates) - len(kept))
        else:
            from .classical import ppca_id_global

            res = ppca_id_global(pts)
            write_csv(run.path("ppca_scan.csv"), ["q", "log_likelihood", "bic"], zip(range(pts.d), res.log_likelihood, res.bic))
            summary.update(q_star=res.q_star)
            estimates = []
    if estimates:
        write_estimates_csv(run.path("estimates.csv"), estimates)
        if a.method == "diffusion":
            from .analysis import write_spectra_csv

            write_spectra_csv(run.path("spectra.csv"), estimates)
        summary["n_estimates"] = len(estimates)
        summary["n_excluded"] = sum(e.excluded for e in estimates)
        summary["n_truncated"] = sum(e.truncated for e in estimates)
        if a.method in ("diffusion", "lpca"):
            values, counts = np.unique([e.k_hat for e in estimates if e.k_hat is not None], return_counts=True)
            summary["k_hat_counts"] = {str(int(v)): int(c) for v, c in zip(values, counts)}
    write_json(run.path("summary.json"), summary)
    run.seeds["estimate"] = a.seed


def _estimate_from_file(a):
    from .diffusion_id import estimate_from_scores
    from .scoremodel import load_score_matrix

    if not a.scores:
        raise ValidationError("--oracle file needs --scores")
    scores = load_score_matrix(a.scores)
    ids = _ids_for(a.scores, a.ids, scores.n)
    return estimate_from_scores(scores, ids)


def _estimate_diffusion(run, pts, summary):
    from .diffusion_id import DiffusionIdParams, batch_estimate
    from .scoremodel import DsmConfig, GaussianScore, VeSchedule, load_score_matrix, train_dsm_score_net, write_loss_trace

    a = run.args
    params = DiffusionIdParams(sigma_t0=a.sigma, K=a.K, seed=a.seed)
    if a.oracle == "analytic":
        from .synth import ManifoldSpec, analytic_covariance

        if not a.truth:
            raise ValidationError("--oracle analytic needs --truth (truth.json from synth)")
        spec = ManifoldSpec.from_dict(json.loads(Path(a.truth).read_text())["spec"])
        oracle = GaussianScore(*analytic_covariance(spec))
    elif a.oracle == "dsm":
        cfg = DsmConfig(
            hidden_layers=_parse_hidden(a.dsm_hidden),
            steps=a.dsm_steps,
            batch_size=a.dsm_batch,
            learning_rate=a.dsm_lr,
            seed=a.dsm_seed,
            schedule=VeSchedule(),
        )
        oracle = train_dsm_score_net(pts, cfg)
        write_loss_trace(run.path("loss_trace.csv"), oracle)
        run.seeds["dsm"] = a.dsm_seed
    else:
        oracle = load_score_matrix(a.scores, d=pts.d)
    if oracle.dim != pts.d:
        raise ValidationError(f"oracle dimension {oracle.dim} does not match data dimension {pts.d}")
    summary.update(oracle=a.oracle, **params.as_dict(pts.d))
    return batch_estimate(oracle, pts, params, workers=a.workers)


def cmd_energy_bin(run: Run):
    from .energy import bin_energies, write_energy_csv
    from .io import read_tensor, write_json

    a = run.args
    logits = read_tensor(a.logits)
    if logits.ndim != 3:
        raise ValidationError(f"{a.logits}: expected logits of shape (n, N, C), got {logits.shape}")
    ids = _ids_for(a.logits, a.ids, logits.shape[0]) or tuple(f"s{i:06d}" for i in range(logits.shape[0]))
    records, fits = bin_energies(ids, logits, a.T)
    write_energy_csv(run.path("energy_records.csv"), records)
    write_json(run.path("energy_fits.json"), fits)
    run.extra["energy_fits"] = fits


def cmd_report(run: Run):
    from .analysis import (
        aggregate_by_interval,
        emit_plots,
        estimate_snr,
        fixture_trends,
        join_records,
        load_fixture_tables,
        trend_check,
        write_interval_tables,
    )
    from .core import unflatten_image
    from .energy import read_energy_csv
    from .io import read_catalog_csv, read_estimates_csv, read_spectra_csv, read_tensor, write_csv, write_json

    a = run.args
    report = {}
    fixtures = load_fixture_tables(a.fixtures)
    fx = fixture_trends(fixtures)
    write_csv(run.path("fixture_trends.csv"), ["method", "by", "rho", "n_cells"], fx)
    report["fixture_trends"] = [{"method": m, "by": b, "rho": r} for m, b, r, _ in fx]

    spectra = {}
    for path in a.spectra:
        spectra.update(read_spectra_csv(path))
    estimates = []
    for path in a.estimates:
        estimates.extend(read_estimates_csv(path, spectra))
    energy = read_energy_csv(a.energy) if a.energy else []
    catalog = read_catalog_csv(a.catalog) if a.catalog else None
    if catalog is not None:
        report["catalog"] = {"accepted": len(catalog.entries), "rejected": catalog.n_rejected}

    tables = []
    if energy:
        for method in sorted({e.method for e in estimates}):
            subset = [e for e in estimates if e.method == method]
            for by in ("mean", "std"):
                tables.append(aggregate_by_interval(subset, energy, method, by))
        if a.data:
            pts = _load_points(a.data, a.ids)
            for by in ("mean", "std"):
                tables.append(aggregate_by_interval(None, energy, "ppca", by, points=pts))
        write_interval_tables(run.path("interval_tables.csv"), tables)
        trends = []
        for t in tables:
            usable = sum(v is not None for v in t.values())
            trends.append((t.method, t.by, trend_check(t) if usable >= 3 else None, usable))
        write_csv(run.path("trends.csv"), ["method", "by", "rho", "n_cells"], trends)
        report["trends"] = [{"method": m, "by": b, "rho": r} for m, b, r, _ in trends]

    snr = {}
    if a.images:
        imgs = read_tensor(a.images)
        if imgs.ndim != 3:
            raise ValidationError(f"{a.images}: expected (n, h, w) images, got {imgs.shape}")
        ids = _ids_for(a.images, a.ids, imgs.shape[0]) or tuple(f"s{i:06d}" for i in range(imgs.shape[0]))
        excluded = []
        for sid, pix in zip(ids, imgs):
            try:
                snr[sid] = estimate_snr(unflatten_image(pix.ravel(), *pix.shape, id=sid), a.border_width)
            except NumericalError as exc:
                excluded.append({"id": sid, "reason": str(exc)})
        report["snr_excluded"] = excluded

    if estimates:
        selected = []
        with_spectrum = [e for e in estimates if e.spectrum.size]
        if with_spectrum:
            rng = np.random.default_rng(a.seed)
            take = min(a.max_spectra, len(with_spectrum))
            picks = np.sort(rng.choice(len(with_spectrum), size=take, replace=False))
            selected = [with_spectrum[i] for i in picks]
        joined = join_records(estimates, energy, catalog, snr)
        emit_plots(joined, run.out, tables, selected)
    write_json(run.path("report.json"), report)
    run.seeds["report"] = a.seed


COMMANDS = {"synth": cmd_synth, "estimate": cmd_estimate, "energy-bin": cmd_energy_bin, "report": cmd_report}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    json_errors = "--json-errors" in argv
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc), json_errors)
    except (ValidationError, OSError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc), json_errors)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.workers < 1:
        return _fail(EXIT_USAGE, "usage", "--workers must be >= 1", json_errors)

    try:
        run = Run(args, argv)
    except OSError as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc), json_errors)
    try:
        COMMANDS[args.command](run)
        run.manifest()
    except (ValidationError, OSError, KeyError) as exc:
        run.rollback()
        return _fail(EXIT_VALIDATION, "validation", str(exc), json_errors)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        run.rollback()
        return _fail(EXIT_NUMERICAL, "numerical", str(exc), json_errors)
    except Exception:
        run.rollback()
        traceback.print_exc()
        return _fail(1, "internal", "unexpected error", json_errors)
    return EXIT_OK


def _fail(code, kind, message, json_errors):
    if json_errors:
        print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    else:
        print(f"dimscope: {kind} error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
