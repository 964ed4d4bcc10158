"""``ffl`` command line.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from .data.imaging import preprocess
from .data.io import FEATURES_FILE, load_dataset, read_pgm, save_dataset, write_pgm
from .data.dataset import MultilabelDataset
from .data.synthetic import generate_synthetic
from .experiments.compare import compare_runs, write_comparison_csv
from .experiments.config import ConfigError, ExperimentConfig, format_validation_error, parse_config
from .experiments.plots import emit_plots
from .experiments.runner import RunRecord, evaluate_site, jsonable, prepare_sites, run_experiment, site_specs
from .federated.tcp import AggregatorServer, parse_address, run_site

log = logging.getLogger("ffl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


def _load_config(path, seed=None) -> ExperimentConfig:
    cfg = parse_config(path)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def _load_record(path) -> RunRecord:
    p = Path(path)
    if p.is_dir():
        p = p / "run.json"
    if not p.is_file():
        raise UsageError(f"no run record at {p}")
    return RunRecord.load(p)


def _address(addr: str):
    try:
        return parse_address(addr)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _summary(rec: RunRecord) -> str:
    parts = [f"{sid}: macro AUROC {s.report.macro_auroc:.4f}" for sid, s in sorted(rec.sites.items())]
    return f"{rec.mode} run, seed {rec.seed}: " + ", ".join(parts)


# --- subcommands ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _load_config(args.config, args.seed)
    upd = {}
    if args.mode is not None:
        upd["mode"] = args.mode
    if args.transport is not None:
        upd["transport"] = args.transport
    if args.bootstrap is not None or args.eval_seed is not None:
        ev = cfg.eval.model_copy(
            update={
                k: v
                for k, v in (("bootstrap", args.bootstrap), ("seed", args.eval_seed))
                if v is not None
            }
        )
        upd["eval"] = ev
    if upd:
        try:
            cfg = ExperimentConfig.model_validate(cfg.model_copy(update=upd).model_dump())
        except ValidationError as exc:
            raise ConfigError(format_validation_error(exc)) from None
    rec = run_experiment(cfg, args.out)
    print(_summary(rec))
    print(f"wrote {Path(args.out) / 'run.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = _load_record(args.a), _load_record(args.b)
    rows = compare_runs(a, b, args.bootstrap)
    write_comparison_csv(rows, args.out)
    for r in rows:
        print(f"{r.site}: {r.arm_a_auroc:.4f} vs {r.arm_b_auroc:.4f}, p = {r.p_value:.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    recs = [_load_record(p) for p in args.records]
    paths = emit_plots(recs, args.out)
    print(f"wrote {paths['csv']} and {paths['svg']}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = _load_config(args.config, args.seed)
    latent = cfg.latent_config()
    if latent is None:
        raise ConfigError("sites: no synthetic sites to generate")
    syn = [s for s in cfg.sites if s.synthetic]
    out = Path(args.out)
    for s, ds in zip(syn, generate_synthetic(latent, [s.n for s in syn], cfg.seed)):
        save_dataset(ds, out / s.site_id)
        print(f"{s.site_id}: {len(ds)} records, labels {', '.join(ds.label_names)} -> {out / s.site_id}")
    return EXIT_OK


def _image_files(d: Path) -> List[Path]:
    return sorted(p for p in d.iterdir() if p.suffix.lower() in (".pgm", ".png"))


def _read_image(p: Path) -> np.ndarray:
    if p.suffix.lower() == ".pgm":
        return read_pgm(p)
    from PIL import Image

    with Image.open(p) as im:
        return np.asarray(im.convert("L"))


def cmd_preprocess(args) -> int:
    src, dst = Path(args.inp), Path(args.out)
    if not src.is_dir():
        raise UsageError(f"input directory {src} does not exist")
    size = tuple(args.size)
    if (src / FEATURES_FILE).is_file():
        ds = load_dataset(src)
        if ds.features.ndim != 3:
            raise UsageError(f"{src}: features are not images (shape {ds.features.shape})")
        imgs = np.stack([preprocess(img, size) for img in ds.features]).astype(np.float64)
        save_dataset(MultilabelDataset(imgs, ds.labels, ds.label_names, ds.patient_ids), dst)
        print(f"preprocessed {len(ds)} images to {size[0]}x{size[1]} -> {dst}")
        return EXIT_OK
    files = _image_files(src)
    if not files:
        raise UsageError(f"{src}: no .pgm/.png images and no {FEATURES_FILE}")
    dst.mkdir(parents=True, exist_ok=True)
    for p in files:
        write_pgm(dst / (p.stem + ".pgm"), preprocess(_read_image(p), size))
    print(f"preprocessed {len(files)} images to {size[0]}x{size[1]} -> {dst}")
    return EXIT_OK


def cmd_serve_aggregator(args) -> int:
    cfg = _load_config(args.config)
    host, port = _address(args.listen)
    specs = site_specs(cfg, prepare_sites(cfg))
    server = AggregatorServer(cfg.federation_config(), specs[0].backbone, len(specs), host, port, args.timeout)
    print(f"aggregator listening on {server.address[0]}:{server.address[1]} for {len(specs)} sites", flush=True)
    agg = server.serve()
    hist = {"rounds": [r.to_dict() for r in agg.records], "rounds_completed": server.rounds_completed}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "aggregator.json").write_text(json.dumps(hist, indent=1, sort_keys=True) + "\n")
    print(f"federated phase done after {server.rounds_completed} rounds")
    return EXIT_OK


def cmd_serve_site(args) -> int:
    cfg = _load_config(args.site_config)
    ids = [s.site_id for s in cfg.sites]
    if args.site is None:
        if len(ids) != 1:
            raise UsageError(f"config lists sites {ids}; pick one with --site")
        sid = ids[0]
    elif args.site in ids:
        sid = args.site
    else:
        raise UsageError(f"site {args.site!r} not in config (have {ids})")
    sites = prepare_sites(cfg)
    specs = site_specs(cfg, sites)
    idx = ids.index(sid)
    host, port = _address(args.connect)
    worker = run_site(specs[idx], cfg.federation_config(), host, port, args.timeout)
    rec = evaluate_site(worker.state, sites[idx].test, cfg)
    print(f"{sid}: macro AUROC {rec.report.macro_auroc:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"site_{sid}.json"
        path.write_text(json.dumps(jsonable(rec.to_dict()), indent=1, sort_keys=True, allow_nan=False) + "\n")
        print(f"wrote {path}")
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffl", description="Federated training with a shared backbone and site-local heads.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment arm and write run.json")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=("local", "federated"))
    r.add_argument("--transport", choices=("inproc", "tcp"))
    r.add_argument("--bootstrap", type=int, metavar="B", help="bootstrap resamples for the report")
    r.add_argument("--eval-seed", type=int, help="bootstrap seed for the report")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare two runs per site (paired bootstrap)")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--out", required=True)
    c.add_argument("--bootstrap", type=int, metavar="B")
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plot", help="grouped AUROC bar chart (SVG) and its CSV")
    pl.add_argument("records", nargs="+")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)

    pp = sub.add_parser("preprocess", help="resize, min-max normalize and equalize images")
    pp.add_argument("--in", dest="inp", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), required=True)
    pp.set_defaults(func=cmd_preprocess)

    g = sub.add_parser("gen-data", help="write the config's synthetic site datasets")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    sa = sub.add_parser("serve-aggregator", help="run the aggregator over TCP")
    sa.add_argument("--listen", required=True, metavar="HOST:PORT")
    sa.add_argument("--config", required=True)
    sa.add_argument("--out")
    sa.add_argument("--timeout", type=float, default=600.0)
    sa.set_defaults(func=cmd_serve_aggregator)

    ss = sub.add_parser("serve-site", help="run one site against a TCP aggregator")
    ss.add_argument("--connect", required=True, metavar="HOST:PORT")
    ss.add_argument("--site-config", required=True)
    ss.add_argument("--site")
    ss.add_argument("--out")
    ss.add_argument("--timeout", type=float, default=600.0)
    ss.set_defaults(func=cmd_serve_site)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"ffl: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"ffl: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
