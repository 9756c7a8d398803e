"""Command-line entry point: ``identik {validate,evaluate,degrade,synth}``.

Exit codes: 0 success, 2 usage error, 3 data validation failure,
4 pipeline failure. Failures print one ``error: <Kind>: <message>`` line
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .degrade import degradation_ladder, ladder_tags, load_png, save_png
from .errors import DataError, IdentikError, InvalidDataset, PipelineError
from .ingest import read_embeddings, read_manifest, write_embeddings, write_manifest
from .matching import one_to_one_distributions, rank_one_scores, write_rank_one_csv
from .metrics import DEFAULT_BIN_WIDTH, DEFAULT_TAIL_MASS, build_report, histogram, reports_csv
from .model import groups_of, validate_dataset
from .partition import BalanceSpec, build_balanced_split, build_split, time_between_mated, write_split
from .synth import generate, load_spec, morph_shaped_spec

log = logging.getLogger("identik")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PIPELINE = 0, 2, 3, 4
IMAGE_MANIFEST_HEADER = ["image_id", "path"]

DEFAULTS = {
    "balanced": False,
    "enrolled_per_identity": 1,
    "seed": 0,
    "workers": 1,
    "tail_mass": DEFAULT_TAIL_MASS,
    "bin_width": DEFAULT_BIN_WIDTH,
    "one_to_one": False,
    "cross_group": False,
    "ladder": "blur",
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="identik", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"identik {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        # default=None everywhere so config-file values can fill unset flags
        sp.add_argument("--config", help="JSON file of option values; flags override it")
        sp.add_argument("--out", help="output directory (created if absent)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")

    v = sub.add_parser("validate", help="check a manifest and embedding file")
    common(v)
    v.add_argument("--manifest")
    v.add_argument("--embeddings")

    e = sub.add_parser("evaluate", help="split, match and report per demographic group")
    common(e)
    e.add_argument("--manifest")
    e.add_argument("--embeddings")
    e.add_argument("--balanced", action="store_true", default=None)
    e.add_argument("--identities-per-group", type=int, default=None)
    e.add_argument("--enrolled-per-identity", type=int, default=None)
    e.add_argument("--tail-mass", type=float, default=None)
    e.add_argument("--bin-width", type=float, default=None)
    e.add_argument("--threshold", type=float, default=None,
                   help="fixed similarity threshold for FMR/FNMR and open-set FPIR")
    e.add_argument("--target-fmr", type=float, default=None)
    e.add_argument("--one-to-one", action="store_true", default=None,
                   help="also score all 1-to-1 genuine/impostor pairs per group")
    e.add_argument("--impostor-rate", type=float, default=None,
                   help="keep this fraction of impostor pairs (seeded)")
    e.add_argument("--cross-group", action="store_true", default=None,
                   help="admit impostor pairs across cohorts in 1-to-1 curves")

    d = sub.add_parser("degrade", help="write blur or resolution ladders of probe images")
    common(d)
    d.add_argument("--images", help="CSV with header image_id,path")
    d.add_argument("--ladder", choices=["blur", "resolution"], default=None)

    s = sub.add_parser("synth", help="generate a synthetic manifest + embedding file")
    common(s)
    s.add_argument("--spec", help="SynthSpec JSON file")
    s.add_argument("--preset", choices=["morph"], default=None,
                   help="built-in cohort layout instead of --spec")
    s.add_argument("--dimension", type=int, default=None)
    return p


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    merged = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        merged.update({k.replace("-", "_"): v for k, v in cfg.items()})
    for k, val in vars(args).items():
        if val is not None or k not in merged:
            merged[k] = val
    explicit = {k for k, val in merged.items() if val is not None}
    for k, val in DEFAULTS.items():
        if merged.get(k) is None:
            merged[k] = val
    return argparse.Namespace(explicit=explicit, **merged)


def _need(cfg, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if not getattr(cfg, n, None)]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def _need_files(cfg, *names):
    for n in names:
        path = getattr(cfg, n)
        if not os.path.isfile(path):
            raise UsageError(f"--{n.replace('_', '-')} {path}: no such file")


def _out_dir(cfg) -> Path:
    _need(cfg, "out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_dataset(cfg):
    _need(cfg, "manifest", "embeddings")
    _need_files(cfg, "manifest", "embeddings")
    records = read_manifest(cfg.manifest)
    store = read_embeddings(cfg.embeddings)
    report = validate_dataset(records, store)
    return records, store, report


def cmd_validate(cfg) -> int:
    _, _, report = _load_dataset(cfg)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if cfg.out:
        _write_text(_out_dir(cfg) / "validation.json", text)
    sys.stdout.write(text)
    if not report.valid:
        raise InvalidDataset(report)
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    out = _out_dir(cfg)
    records, store, report = _load_dataset(cfg)
    if not report.valid:
        raise InvalidDataset(report)
    if cfg.workers < 1:
        raise UsageError("--workers must be at least 1")

    if cfg.balanced:
        _need(cfg, "identities_per_group")
        spec = BalanceSpec(cfg.identities_per_group, cfg.enrolled_per_identity, cfg.seed)
        split = build_balanced_split(records, spec)
    else:
        split = build_split(records)
    write_split(split, out / "split.json")

    results = rank_one_scores(split, records, store, workers=cfg.workers)
    write_rank_one_csv(results, out / "rank_one.csv")
    gaps = time_between_mated(split, records)

    reports = []
    for group in groups_of(records):
        group_results = [r for r in results if r.group == group]
        if not group_results:
            continue
        oto = None
        if cfg.one_to_one:
            used = set(split.probes.values()) | set(split.gallery_images())
            in_split = [r for r in records if r.image_id in used]
            oto = one_to_one_distributions(in_split, store, group_filter=group,
                                           cross_group=cfg.cross_group,
                                           impostor_rate=cfg.impostor_rate, seed=cfg.seed)
        rep = build_report(group_results, group, one_to_one=oto, tail_mass=cfg.tail_mass,
                           bin_width=cfg.bin_width, threshold=cfg.threshold,
                           target_fmr=cfg.target_fmr, mated_gap_days=gaps.get(group))
        reports.append(rep)
        _write_text(out / f"report_{group.slug}.json", rep.to_json())
        _write_text(out / f"report_{group.slug}.csv", reports_csv([rep]))
        _write_histogram(out / f"histogram_{group.slug}.csv", rep.diff_histogram)
        if oto is not None:
            _write_histogram(out / f"histogram_genuine_{group.slug}.csv", histogram(oto.genuine, cfg.bin_width))
            _write_histogram(out / f"histogram_impostor_{group.slug}.csv", histogram(oto.impostor, cfg.bin_width))
        for name, values in (("mated", [r.mated_score for r in group_results if r.mated_score is not None]),
                             ("nonmated", [r.nonmated_score for r in group_results if r.nonmated_score is not None])):
            _write_histogram(out / f"histogram_{name}_{group.slug}.csv", histogram(values, cfg.bin_width))
    _write_text(out / "summary.csv", reports_csv(reports))
    degenerate = sorted(r.probe_image_id for r in results if r.degenerate)
    _write_text(out / "diagnostics.json", json.dumps({
        "n_probes": len(results),
        "singleton_subjects": len(split.singleton_subjects),
        "degenerate_probes": degenerate,
    }, indent=2) + "\n")
    log.info("wrote %d group report(s) to %s", len(reports), out)
    return EXIT_OK


def _write_histogram(path: Path, bins) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in bins:
            w.writerow([repr(lo), repr(hi), c])


def _read_image_manifest(path: str) -> list[tuple[str, Path]]:
    base = Path(path).parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if header != IMAGE_MANIFEST_HEADER:
            raise UsageError(f"{path}: expected header image_id,path")
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise UsageError(f"{path}:{reader.line_num}: expected 2 fields")
            p = Path(row[1])
            rows.append((row[0], p if p.is_absolute() else base / p))
    return rows


def cmd_degrade(cfg) -> int:
    _need(cfg, "images")
    _need_files(cfg, "images")
    out = _out_dir(cfg)
    entries = _read_image_manifest(cfg.images)
    tags = ladder_tags(cfg.ladder)
    if not entries:
        log.warning("image manifest %s is empty; nothing to do", cfg.images)
    for tag in tags:
        (out / tag).mkdir(exist_ok=True)

    def work(entry):
        image_id, path = entry
        try:
            ladder = degradation_ladder(load_png(path), cfg.ladder)
        except (OSError, ValueError, IdentikError) as exc:
            return image_id, f"{type(exc).__name__}: {exc}"
        for tag, img in ladder:
            save_png(img, out / tag / f"{image_id}.png")
        return image_id, None

    if cfg.workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(work, entries))
    else:
        outcomes = [work(e) for e in entries]

    failed = {i: msg for i, msg in outcomes if msg is not None}
    for tag in tags:
        with open(out / tag / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(IMAGE_MANIFEST_HEADER)
            for image_id, _ in entries:
                if image_id not in failed:
                    w.writerow([image_id, f"{image_id}.png"])
    for image_id, msg in failed.items():
        sys.stderr.write(f"failed: {image_id}: {msg}\n")
    if failed:
        raise PipelineError(f"{len(failed)} of {len(entries)} image(s) failed")
    return EXIT_OK


def cmd_synth(cfg) -> int:
    out = _out_dir(cfg)
    if cfg.preset == "morph":
        spec = morph_shaped_spec(dimension=cfg.dimension or 512, rng_seed=cfg.seed)
    else:
        _need(cfg, "spec")
        _need_files(cfg, "spec")
        try:
            spec = load_spec(cfg.spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"invalid synth spec: {exc}") from None
        overrides = {}
        if "seed" in cfg.explicit:
            overrides["rng_seed"] = cfg.seed
        if cfg.dimension:
            overrides["dimension"] = cfg.dimension
        try:
            spec = dataclasses.replace(spec, **overrides)
        except ValueError as exc:
            raise UsageError(f"invalid synth spec: {exc}") from None
    records, store = generate(spec)
    write_manifest(records, out / "manifest.csv")
    write_embeddings(store, out / "embeddings.emb")
    _write_text(out / "synth_spec.json", json.dumps(spec.to_dict(), indent=2) + "\n")
    log.info("wrote %d images of %d subjects to %s", len(records), spec.n_subjects, out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "evaluate": cmd_evaluate,
    "degrade": cmd_degrade,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        sys.stderr.write(f"error: UsageError: {exc}\n")
        return EXIT_USAGE
    except DataError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {_one_line(exc)}\n")
        return EXIT_DATA
    except PipelineError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {_one_line(exc)}\n")
        return EXIT_PIPELINE
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {_one_line(exc)}\n")
        return EXIT_PIPELINE


def _one_line(exc: Exception) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
