"""``actirep`` command line: one subcommand per pipeline stage.

Every subcommand reads its inputs from disk, runs a single stage and writes
its artifact.  Settings come from an optional INI-style config file (sections
named after the config types, e.g. ``[VaeConfig]``) and are overridden by
flags.  A single root seed (``--seed`` or ``$ACTIREP_SEED``) feeds every
stage through :func:`actirep.seeding.derive_seed`.

Failures print one line ``error: <Name>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import sys
import typing
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import actigram, cnnlstm, evaluation, ingest, labels, signal, simulate, vae
from .errors import ActirepError, ConfigError, Excluded
from .seeding import derive_seed, resolve_root_seed

log = logging.getLogger("actirep")

CONFIG_TYPES = {
    "MapConfig": actigram.MapConfig,
    "VaeConfig": vae.VaeConfig,
    "CnnLstmConfig": cnnlstm.CnnLstmConfig,
    "ProtocolConfig": evaluation.ProtocolConfig,
}
MAP_SUFFIX = ".amap"
SYNTHETIC_INDEX = "synthetic.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- config ---------------------------------------------------------------------
def _convert(text: str, tp):
    origin = typing.get_origin(tp)
    if origin is list:
        (inner,) = typing.get_args(tp)
        return [_convert(t.strip(), inner) for t in text.split(",") if t.strip()]
    if tp is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    if tp in (int, float, str):
        return tp(text.strip())
    raise ConfigError(f"unsupported config type {tp}")


def load_config(path) -> dict[str, dict]:
    """Parse a config file into {section: {key: value}} typed by the dataclass fields."""
    out: dict[str, dict] = {name: {} for name in CONFIG_TYPES}
    out["paths"], out["run"] = {}, {}
    if path is None:
        return out
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    for section in cp.sections():
        if section in ("paths", "run"):
            out[section] = dict(cp[section])
            continue
        if section not in CONFIG_TYPES:
            raise ConfigError(f"unknown section [{section}]")
        cls = CONFIG_TYPES[section]
        hints = typing.get_type_hints(cls)
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in cp[section].items():
            if key not in names:
                raise ConfigError(f"[{section}] has no key {key!r}")
            try:
                out[section][key] = _convert(value, hints[key])
            except ValueError:
                raise ConfigError(f"[{section}] {key} = {value!r} is not a valid {hints[key]}") from None
    return out


def build(args, section: str, **flags):
    """Config dataclass from the file section, overridden by non-None flags."""
    values = dict(args.config_data[section])
    values.update({k: v for k, v in flags.items() if v is not None})
    try:
        return CONFIG_TYPES[section](**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def path_arg(args, name: str, default=None):
    """Flag value, then ``[paths]`` entry, then default."""
    v = getattr(args, name, None)
    if v is None:
        v = args.config_data["paths"].get(name, default)
    if v is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return Path(v)


# -- shared I/O -------------------------------------------------------------------
def _csv_header(path: Path) -> list[str]:
    with path.open(newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _series_from_file(item: tuple[str, str]) -> signal.EpochSeries:
    kind, path = item
    if kind == "raw":
        return signal.counts_from_raw(ingest.parse_raw_csv(path))
    return signal.read_epoch_csv(path)


def find_recordings(root: Path) -> list[tuple[str, str]]:
    """(kind, path) for every raw or epoch CSV in ``root`` and its raw/epochs subfolders."""
    found = []
    for d in (root, root / "raw", root / "epochs"):
        if not d.is_dir():
            continue
        for f in sorted(d.glob("*.csv")):
            head = _csv_header(f)
            if head == ingest.RAW_HEADER:
                found.append(("raw", str(f)))
            elif head == signal.EPOCH_HEADER:
                found.append(("epochs", str(f)))
    return found


def read_maps(folder: Path) -> list[actigram.ActigraphyMap]:
    files = sorted(folder.glob(f"*{MAP_SUFFIX}"))
    if not files:
        raise ActirepError(f"no {MAP_SUFFIX} files in {folder}")
    return [actigram.read_map(f) for f in files]


def read_label_map(path: Path, experiment: str | None = None) -> dict[str, str]:
    rows = labels.read_labels_csv(path)
    if experiment is not None:
        rows = [r for r in rows if r.experiment == experiment]
    return {r.participant_id: r.label for r in rows}


def read_synthetic(folder: Path) -> list[vae.LabeledMap]:
    with (folder / SYNTHETIC_INDEX).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [vae.LabeledMap(actigram.read_map(folder / r["file"]), r["label"], synthetic=True) for r in rows]


def _mapper(jobs: int):
    if jobs > 1:
        return ProcessPoolExecutor(max_workers=jobs)
    return None


# -- subcommands ---------------------------------------------------------------------
def cmd_simulate(args) -> int:
    eff = simulate.Effect(
        amplitude_drop=args.amplitude_drop,
        phase_shift_hours=args.phase_shift,
        fragmentation_boost=args.fragmentation_boost,
    )
    spec = simulate.CohortSpec(
        n_participants=args.participants,
        days=args.days,
        unhealthy_fraction=args.unhealthy_fraction,
        effect=eff,
        missing_rate=args.missing_rate,
        seed=derive_seed(args.seed, "simulate"),
    )
    out = path_arg(args, "out")
    manifest = simulate.generate_cohort(spec, out, level=args.level)
    log.info("wrote %d participants (%s level) to %s", len(manifest), args.level, out)
    return 0


def cmd_prep(args) -> int:
    raw_dir = path_arg(args, "raw_dir")
    out = path_arg(args, "out")
    items = find_recordings(raw_dir)
    if not items:
        raise ActirepError(f"no raw or epoch CSV files under {raw_dir}")
    pool = _mapper(args.jobs)
    if pool is None:
        series = [_series_from_file(it) for it in items]
    else:
        with pool:
            series = list(pool.map(_series_from_file, items))
    cfg = build(args, "MapConfig", days=args.days, bin_seconds=args.bin_seconds)
    cap = args.cap if args.cap is not None else actigram.fit_normalization_cap(series, cfg)
    cfg = dataclasses.replace(cfg, normalization_cap=cap)
    out.mkdir(parents=True, exist_ok=True)
    excluded = []
    n = 0
    for s in series:
        try:
            m = actigram.build_map(s, cfg)
        except Excluded as exc:
            excluded.append((s.participant_id, exc.reason))
            continue
        actigram.write_map(m, out / f"{m.participant_id}{MAP_SUFFIX}")
        if args.plots and m.days >= 2:
            actigram.render_double_plot(m, out / f"{m.participant_id}.pgm")
        n += 1
    with (out / "excluded.csv").open("w", encoding="utf-8") as fh:
        fh.write("participant_id,reason\n")
        fh.writelines(f"{pid},{reason}\n" for pid, reason in excluded)
    meta = {"map_config": dataclasses.asdict(cfg), "n_maps": n, "n_excluded": len(excluded)}
    (out / "prep.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d maps, excluded %d, cap %.6g", n, len(excluded), cap)
    return 0


def cmd_train_vae(args) -> int:
    maps = read_maps(path_arg(args, "maps"))
    cfg = build(
        args,
        "VaeConfig",
        epochs=args.epochs,
        batch_size=args.batch_size,
        latent_dim=args.latent_dim,
        kl_weight=args.kl_weight,
        learning_rate=args.learning_rate,
        seed=derive_seed(args.seed, "train-vae"),
    )

    def report(epoch, tl):
        log.info("epoch %d loss %.4f recon %.4f kl %.4f", epoch + 1, tl.loss[-1], tl.reconstruction[-1], tl.kl[-1])

    model, tl = vae.train_vae(maps, cfg, log_fn=report)
    out = path_arg(args, "out")
    out.parent.mkdir(parents=True, exist_ok=True)
    vae.save_vae(model, out)
    out.with_suffix(".log.json").write_text(json.dumps(dataclasses.asdict(tl), indent=2) + "\n")
    return 0


def cmd_encode(args) -> int:
    model = vae.load_vae(path_arg(args, "model"))
    maps = read_maps(path_arg(args, "maps"))
    codes = vae.encode_batch(model, maps)
    vae.write_latents_csv([m.participant_id for m in maps], codes, path_arg(args, "out"))
    return 0


def cmd_traverse(args) -> int:
    model = vae.load_vae(path_arg(args, "model"))
    L = model.cfg.latent_dim
    if args.maps is not None:
        base = vae.reference_code(model, read_maps(Path(args.maps)))
    else:
        base = vae.LatentCode(np.zeros(L), np.zeros(L))
    if args.dim is None:
        grid = vae.traversal_grid(model, base, args.lo, args.hi, args.steps)
    else:
        grid = vae.traverse(model, base, args.dim, args.lo, args.hi, args.steps)[1][None]
    actigram.write_pgm(vae.grid_image(grid), path_arg(args, "out"))
    log.info("traversal grid %d x %d", grid.shape[0], grid.shape[1])
    return 0


def cmd_generate(args) -> int:
    model = vae.load_vae(path_arg(args, "model"))
    codes = vae.read_latents_csv(path_arg(args, "latents"))
    labs = read_label_map(path_arg(args, "labels"), args.experiment)
    pairs = [(codes[pid], lab) for pid, lab in sorted(labs.items()) if pid in codes and lab in (labels.HEALTHY, labels.UNHEALTHY)]
    stats = vae.fit_class_stats(pairs)
    out = path_arg(args, "out")
    out.mkdir(parents=True, exist_ok=True)
    seed = derive_seed(args.seed, "generate")
    rows = []
    for label in (labels.HEALTHY, labels.UNHEALTHY):
        if label not in stats:
            raise ActirepError(f"no {label} participants with latent codes")
        for item in vae.generate(model, stats[label], args.n, seed):
            name = f"{item.participant_id}{MAP_SUFFIX}"
            actigram.write_map(item.map, out / name)
            rows.append((name, item.label))
    with (out / SYNTHETIC_INDEX).open("w", encoding="utf-8") as fh:
        fh.write("file,label\n")
        fh.writelines(f"{f},{lab}\n" for f, lab in rows)
    return 0


def cmd_train_cnnlstm(args) -> int:
    maps = {m.participant_id: m for m in read_maps(path_arg(args, "maps"))}
    labs = read_label_map(path_arg(args, "labels"), args.experiment)
    real = [vae.LabeledMap(maps[pid], lab) for pid, lab in sorted(labs.items()) if pid in maps and lab in (labels.HEALTHY, labels.UNHEALTHY)]
    synthetic = read_synthetic(Path(args.synthetic)) if args.synthetic else []
    cfg = build(
        args,
        "CnnLstmConfig",
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=derive_seed(args.seed, "train-cnnlstm"),
    )
    model, fl = cnnlstm.train_with_augmentation(real, synthetic, cfg)
    out = path_arg(args, "out")
    out.parent.mkdir(parents=True, exist_ok=True)
    cnnlstm.save_cnnlstm(model, out)
    out.with_suffix(".log.json").write_text(json.dumps(dataclasses.asdict(fl), indent=2) + "\n")
    log.info("trained on %d real + %d synthetic maps", len(real), len(synthetic))
    return 0


def cmd_labels(args) -> int:
    records = ingest.parse_survey_csv(path_arg(args, "surveys"))
    experiments = sorted(labels.EXPERIMENTS) if args.experiment == "all" else [args.experiment]
    out_rows = []
    for eid in experiments:
        spec = labels.experiment(eid)
        out_rows += [labels.assign_label(r, spec) for r in records]
    labels.write_labels_csv(out_rows, path_arg(args, "out"))
    for eid in experiments:
        got = [r.label for r in out_rows if r.experiment == eid]
        log.info("%s: %d healthy / %d unhealthy / %d ineligible", eid, got.count(labels.HEALTHY), got.count(labels.UNHEALTHY), got.count(labels.INELIGIBLE))
    return 0


def cmd_evaluate(args) -> int:
    eid = args.experiment or args.config_data["run"].get("experiment", "E3")
    spec = labels.experiment(eid)
    surveys = {}
    if args.surveys:
        surveys = {r.participant_id: r for r in ingest.parse_survey_csv(Path(args.surveys))}
    if args.labels:
        labs = read_label_map(Path(args.labels), eid)
    elif surveys:
        labs = labels.label_cohort(surveys.values(), spec)
    else:
        raise UsageError("evaluate needs --labels or --surveys")
    kind = args.model_kind
    data = evaluation.ExperimentData(labs, surveys)
    if kind == "vae_lr" or kind == "cnnlstm_aug":
        data.codes = vae.read_latents_csv(path_arg(args, "latents"))
    if kind != "vae_lr":
        data.maps = {m.participant_id: m for m in read_maps(path_arg(args, "maps"))}
        data.cnnlstm = build(args, "CnnLstmConfig", epochs=args.epochs)
    if kind == "cnnlstm_aug":
        data.vae = vae.load_vae(path_arg(args, "model"))
    cfg = build(
        args,
        "ProtocolConfig",
        external_repeats=args.repeats,
        internal_folds=args.folds,
        test_fraction=args.test_fraction,
        n_synthetic_per_class=args.n_synthetic,
        seed=derive_seed(args.seed, "evaluate"),
    )
    report = evaluation.run_experiment(kind, spec, cfg, data, jobs=args.jobs)
    out = path_arg(args, "out")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    sys.stdout.write(report.table())
    return 0


# -- parser -----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI-style config file; flags override it")
    common.add_argument("--seed", type=int, help="root seed for every stage (default: $ACTIREP_SEED, else 0)")
    common.add_argument("--jobs", type=int, default=1, help="maximum worker processes (default 1)")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")

    p = _Parser(prog="actirep", description="Actigraphy maps, VAE features and outcome models.")
    p.add_argument("--version", action="version", version=f"actirep {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic cohort")
    s.add_argument("--participants", type=int, default=200, help="number of participants (default 200)")
    s.add_argument("--days", type=int, default=28, help="recording length in days (default 28)")
    s.add_argument("--unhealthy-fraction", type=float, default=0.5, help="share of unhealthy participants (default 0.5)")
    s.add_argument("--missing-rate", type=float, default=0.0, help="fraction of epochs dropped as wear gaps (default 0)")
    s.add_argument("--amplitude-drop", type=float, default=0.3, help="unhealthy activity amplitude reduction (default 0.3)")
    s.add_argument("--phase-shift", type=float, default=2.0, help="unhealthy circadian delay in hours (default 2)")
    s.add_argument("--fragmentation-boost", type=float, default=1.5, help="relative increase of night bursts (default 1.5)")
    s.add_argument("--level", choices=["epochs", "raw"], default="epochs", help="epoch-count CSVs (default) or 30 Hz raw CSVs")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("prep", parents=[common], help="raw/epoch CSVs -> normalised actigraphy maps")
    s.add_argument("--raw-dir", help="folder of raw or epoch CSVs (also searched: raw/, epochs/)")
    s.add_argument("--out", help="output folder for .amap files")
    s.add_argument("--days", type=int, help="days per map (default 28)")
    s.add_argument("--bin-seconds", type=int, help="seconds per map column (default 60)")
    s.add_argument("--cap", type=float, help="normalisation cap; default: 99.5th percentile of nonzero bins")
    s.add_argument("--plots", action="store_true", help="also write double-plot PGMs")
    s.set_defaults(func=cmd_prep)

    s = sub.add_parser("train-vae", parents=[common], help="train the convolutional VAE")
    s.add_argument("--maps", help="folder of .amap files")
    s.add_argument("--out", help="checkpoint path (JSON sidecar written next to it)")
    s.add_argument("--epochs", type=int, help="training epochs (default 30)")
    s.add_argument("--batch-size", type=int, help="batch size (default 128)")
    s.add_argument("--latent-dim", type=int, help="latent size (default 8)")
    s.add_argument("--kl-weight", type=float, help="KL weight (default 1.0)")
    s.add_argument("--learning-rate", type=float, help="Adam learning rate (default 1e-3)")
    s.set_defaults(func=cmd_train_vae)

    s = sub.add_parser("encode", parents=[common], help="export latent means and log-variances")
    s.add_argument("--model", help="VAE checkpoint")
    s.add_argument("--maps", help="folder of .amap files")
    s.add_argument("--out", help="latent CSV path")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("traverse", parents=[common], help="render a latent traversal grid (PGM)")
    s.add_argument("--model", help="VAE checkpoint")
    s.add_argument("--maps", help="maps folder; base code = map with median total activity (default: zero code)")
    s.add_argument("--dim", type=int, help="single latent dimension (default: all, one row each)")
    s.add_argument("--lo", type=float, default=-2.0, help="sweep start (default -2)")
    s.add_argument("--hi", type=float, default=2.0, help="sweep end (default 2)")
    s.add_argument("--steps", type=int, default=9, help="maps per row (default 9)")
    s.add_argument("--out", help="PGM path")
    s.set_defaults(func=cmd_traverse)

    s = sub.add_parser("generate", parents=[common], help="class-conditional synthetic maps")
    s.add_argument("--model", help="VAE checkpoint")
    s.add_argument("--latents", help="latent CSV from encode")
    s.add_argument("--labels", help="labels CSV")
    s.add_argument("--experiment", default="E3", help="experiment whose labels are used (default E3)")
    s.add_argument("--n", type=int, default=100, help="maps per class (default 100)")
    s.add_argument("--out", help="output folder")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("train-cnnlstm", parents=[common], help="train the CNN-LSTM baseline")
    s.add_argument("--maps", help="folder of .amap files")
    s.add_argument("--labels", help="labels CSV")
    s.add_argument("--experiment", default="E3", help="experiment whose labels are used (default E3)")
    s.add_argument("--synthetic", help="folder written by generate (optional augmentation)")
    s.add_argument("--epochs", type=int, help="training epochs (default 30)")
    s.add_argument("--batch-size", type=int, help="batch size (default 32)")
    s.add_argument("--learning-rate", type=float, help="Adam learning rate (default 1e-3)")
    s.add_argument("--out", help="checkpoint path")
    s.set_defaults(func=cmd_train_cnnlstm)

    s = sub.add_parser("labels", parents=[common], help="survey scores -> outcome labels")
    s.add_argument("--surveys", help="survey CSV")
    s.add_argument("--experiment", default="all", help="E1..E4 or 'all' (default)")
    s.add_argument("--out", help="labels CSV path")
    s.set_defaults(func=cmd_labels)

    s = sub.add_parser("evaluate", parents=[common], help="repeated undersampled evaluation")
    s.add_argument("--model-kind", choices=evaluation.MODEL_KINDS, default="vae_lr", help="model to evaluate (default vae_lr)")
    s.add_argument("--experiment", help="E1..E4 (default E3)")
    s.add_argument("--labels", help="labels CSV (default: derived from --surveys)")
    s.add_argument("--surveys", help="survey CSV (needed for E4's SF-12 feature)")
    s.add_argument("--latents", help="latent CSV (vae_lr, cnnlstm_aug)")
    s.add_argument("--maps", help="maps folder (cnnlstm, cnnlstm_aug)")
    s.add_argument("--model", help="VAE checkpoint (cnnlstm_aug)")
    s.add_argument("--repeats", type=int, help="external repeats (default 30)")
    s.add_argument("--folds", type=int, help="internal folds (default 5)")
    s.add_argument("--test-fraction", type=float, help="held-out share per repeat (default 0.2)")
    s.add_argument("--n-synthetic", type=int, help="synthetic maps per class for cnnlstm_aug (default 100)")
    s.add_argument("--epochs", type=int, help="maximum CNN-LSTM epochs (default 30)")
    s.add_argument("--out", help="report JSON path")
    s.set_defaults(func=cmd_evaluate)
    return p


def _error_line(name: str, message) -> str:
    return f"error: {name}: {' '.join(str(message).split())}\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.WARNING if args.quiet else logging.INFO,
            format="%(levelname)s %(message)s",
            stream=sys.stderr,
        )
        args.config_data = load_config(args.config)
        # flag, then $ACTIREP_SEED, then [run] seed, then 0
        args.seed = resolve_root_seed(args.seed, int(args.config_data["run"].get("seed", 0)))
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(_error_line("UsageError", exc))
        return 2
    except ActirepError as exc:
        sys.stderr.write(_error_line(exc.code, exc))
        return 1
    except (OSError, ValueError, KeyError) as exc:
        name = "IoError" if isinstance(exc, OSError) else type(exc).__name__
        sys.stderr.write(_error_line(name, exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
