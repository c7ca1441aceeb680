"""Command-line entry points: validate, run, analyze, ensemble.

Exit codes: 0 success, 1 validation problem (bad manifest, malformed or
mismatched data files, unknown settings), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .analysis import (
    FrontSolution,
    ZoneCandidate,
    objective_extremes_slice,
    neuron_frequency,
    quantile_ensemble_zones,
    read_front_csv,
    super_front_from_solutions,
    super_pareto,
    write_extremes_csv,
    write_front_csv,
    write_neuron_csv,
    write_zone_csv,
    zone_report,
)
from .datamodel import (
    EvolutionConfig,
    FeatsetError,
    FeatureDataset,
    apply_config_overrides,
    load_pool_source,
    load_split_dataset,
)
from .moea import (
    ENSEMBLE_POOL_TAG,
    LOG_HEADER,
    EvalRecord,
    RunResult,
    derive_seed,
    evolve,
    rematerialize_head,
)
from .ood import build_ood_pool

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

META_FILE = "meta.txt"
SUPER_FRONT_FILE = "super_front.csv"


class ValidationFailure(Exception):
    """User-facing input problem; maps to exit code 1."""


@dataclass
class RunManifest:
    """Parsed run manifest: the InD pair, named OoD sources, an optional
    output directory, and config overrides."""

    ind_train: Path
    ind_test: Path
    ood: dict[str, list[Path]]
    out: Path | None
    overrides: dict[str, str]


def parse_manifest(path: str | Path) -> RunManifest:
    p = Path(path)
    if not p.is_file():
        raise ValidationFailure(f"manifest not found: {p}")
    base = p.parent
    ind_train = ind_test = None
    out = None
    ood: dict[str, list[Path]] = {}
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationFailure(f"{p}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "ind_train":
            ind_train = base / value
        elif key == "ind_test":
            ind_test = base / value
        elif key == "out":
            out = base / value
        elif key.startswith("ood."):
            name = key[4:]
            if not name:
                raise ValidationFailure(f"{p}: line {lineno}: empty OoD source name")
            ood.setdefault(name, []).append(base / value)
        elif key in _CONFIG_KEYS:
            overrides[key] = value
        else:
            raise ValidationFailure(f"{p}: line {lineno}: unknown key {key!r}")
    if ind_train is None or ind_test is None:
        raise ValidationFailure(f"{p}: manifest must name ind_train and ind_test")
    return RunManifest(ind_train, ind_test, ood, out, overrides)


from .datamodel import CONFIG_FIELD_PARSERS as _CONFIG_PARSERS

_CONFIG_KEYS = set(_CONFIG_PARSERS)


def _parse_set_args(pairs: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationFailure(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value.strip()
    return overrides


def _resolve_config(manifest: RunManifest, args) -> EvolutionConfig:
    cfg = EvolutionConfig()
    try:
        cfg = apply_config_overrides(cfg, manifest.overrides)
        cfg = apply_config_overrides(cfg, _parse_set_args(args.set or []))
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    try:
        cfg.validate()
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from exc
    return cfg


def _load_datasets(manifest: RunManifest) -> tuple[FeatureDataset, list[FeatureDataset]]:
    try:
        ind = load_split_dataset(manifest.ind_train, manifest.ind_test, name="ind")
        ood = [
            load_pool_source(name, manifest.ood[name])
            for name in sorted(manifest.ood)
        ]
    except FeatsetError as exc:
        raise ValidationFailure(str(exc)) from exc
    return ind, ood


def cmd_validate(args) -> int:
    manifest = parse_manifest(args.manifest)
    ind, ood = _load_datasets(manifest)
    rows = [("ind(train)", ind.name, len(ind.train), ind.feature_dim, ind.num_classes),
            ("ind(test)", ind.name, len(ind.test), ind.feature_dim, ind.num_classes)]
    for ds in ood:
        rows.append(("ood", ds.name, len(ds.train), ds.feature_dim, ds.num_classes))
    print(f"{'role':<12}{'name':<16}{'rows':>8}{'P':>8}{'Y':>4}")
    for role, name, n, p, y in rows:
        print(f"{role:<12}{name:<16}{n:>8}{p:>8}{y:>4}")
    for ds in ood:
        if ds.feature_dim != ind.feature_dim:
            raise ValidationFailure(
                f"OoD source {ds.name} has feature_dim {ds.feature_dim}, "
                f"InD uses {ind.feature_dim}"
            )
    if len(ind.train) == 0 or len(ind.test) == 0:
        raise ValidationFailure("InD train and test splits must be non-empty")
    print("ok")
    return EXIT_OK


def _config_lines(cfg: EvolutionConfig) -> list[str]:
    mp = "none" if cfg.mutation_prob is None else repr(cfg.mutation_prob)
    return [
        f"max_evals={cfg.max_evals}",
        f"population_size={cfg.population_size}",
        f"mutation_prob={mp}",
        f"batch_size={cfg.batch_size}",
        f"odin_temperature={cfg.odin_temperature!r}",
        f"max_epochs={cfg.max_epochs}",
        f"early_stop_patience={cfg.early_stop_patience}",
        f"learning_rate={cfg.learning_rate!r}",
        f"ood_samples_per_dataset={cfg.ood_samples_per_dataset}",
        f"master_seed={cfg.master_seed}",
        f"hidden_units={cfg.hidden_units}",
        f"count_initial_evals={'true' if cfg.count_initial_evals else 'false'}",
    ]


def _write_meta(out: Path, cfg: EvolutionConfig, manifest_path: Path,
                runs: int, ind: FeatureDataset) -> None:
    lines = [
        "format=moprune-run-meta 1",
        f"manifest={manifest_path.resolve()}",
        f"runs={runs}",
        f"feature_dim={ind.feature_dim}",
        f"num_classes={ind.num_classes}",
    ] + _config_lines(cfg)
    with open(out / META_FILE, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_meta(run_dir: Path) -> dict[str, str]:
    meta_path = run_dir / META_FILE
    if not meta_path.is_file():
        raise ValidationFailure(f"no {META_FILE} in {run_dir}; not a run directory?")
    meta: dict[str, str] = {}
    for raw in meta_path.read_text(encoding="utf-8").splitlines():
        if not raw.strip():
            continue
        key, _, value = raw.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def _config_from_meta(meta: dict[str, str]) -> EvolutionConfig:
    overrides = {k: v for k, v in meta.items() if k in _CONFIG_KEYS}
    try:
        cfg = apply_config_overrides(EvolutionConfig(), overrides)
        cfg.validate()
    except ValueError as exc:
        raise ValidationFailure(f"bad {META_FILE}: {exc}") from exc
    return cfg


def _run_dir(out: Path, run_id: int) -> Path:
    return out / f"run_{run_id:03d}"


def _write_run_artifacts(out: Path, result: RunResult) -> None:
    rd = _run_dir(out, result.run_id)
    rd.mkdir(parents=True, exist_ok=True)
    with open(rd / "evals.log", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(LOG_HEADER + "\n")
        for rec in result.log:
            fh.write(rec.to_line() + "\n")
    front = [
        FrontSolution(m.mask, m.objectives, result.run_id, m.eval_index)
        for m in result.archive_front
    ]
    write_front_csv(rd / "front.csv", front)
    with open(rd / "hv_trace.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("eval_index,hypervolume\n")
        for idx, hv in result.hypervolume_trace:
            fh.write(f"{idx},{hv!r}\n")


def cmd_run(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = parse_manifest(manifest_path)
    cfg = _resolve_config(manifest, args)
    ind, ood = _load_datasets(manifest)
    if not ood:
        raise ValidationFailure("run needs at least one ood.<name> entry")
    if len(ind.train) == 0 or len(ind.test) == 0:
        raise ValidationFailure("InD train and test splits must be non-empty")
    out = Path(args.out) if args.out else (manifest.out or Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    _write_meta(out, cfg, manifest_path, args.runs, ind)
    results = []
    for run_id in range(args.runs):
        result = evolve(cfg, ind, ood, run_id=run_id)
        _write_run_artifacts(out, result)
        results.append(result)
        best_acc = max(m.objectives.accuracy for m in result.archive_front)
        print(f"run {run_id}: {result.eval_count} evaluations, "
              f"front size {len(result.archive_front)}, best accuracy {best_acc:.4f}")
    front = super_pareto(results)
    write_front_csv(out / SUPER_FRONT_FILE, list(front.solutions))
    print(f"super front: {len(front.solutions)} solutions from {len(results)} runs")
    print(f"artifacts in {out}")
    return EXIT_OK


def _read_eval_index_map(rd: Path) -> dict[str, int]:
    """mask_hex -> eval_index of the budget-consuming evaluation."""
    log_path = rd / "evals.log"
    if not log_path.is_file():
        raise ValidationFailure(f"missing {log_path}")
    mapping: dict[str, int] = {}
    lines = log_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LOG_HEADER:
        raise ValidationFailure(f"{log_path}: not a run log")
    for line in lines[1:]:
        rec = EvalRecord.from_line(line)
        if not rec.cache_hit:
            mapping[rec.mask_hex] = rec.eval_index
    return mapping


def _load_run_fronts(run_dir: Path, feature_dim: int) -> tuple[list[FrontSolution], int]:
    solutions: list[FrontSolution] = []
    run_dirs = sorted(run_dir.glob("run_*"))
    if not run_dirs:
        raise ValidationFailure(f"no run_* directories in {run_dir}")
    for rd in run_dirs:
        index_map = _read_eval_index_map(rd)
        per_run = read_front_csv(rd / "front.csv", feature_dim)
        for sol in per_run:
            hex_s = sol.mask.to_hex()
            solutions.append(FrontSolution(
                mask=sol.mask,
                objectives=sol.objectives,
                run_id=sol.run_id,
                eval_index=index_map[hex_s],
            ))
    return solutions, len(run_dirs)


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    meta = _read_meta(run_dir)
    feature_dim = int(meta["feature_dim"])
    solutions, run_count = _load_run_fronts(run_dir, feature_dim)
    front = super_front_from_solutions(solutions, run_count)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_front_csv(out / SUPER_FRONT_FILE, list(front.solutions))
    slices = {
        objective: objective_extremes_slice(front, objective, args.fraction)
        for objective in ("accuracy", "active_neurons", "auroc")
    }
    write_extremes_csv(out / "extremes.csv", slices)
    reports = neuron_frequency(front, top_k=args.top_k)
    write_neuron_csv(out / "neurons.csv", reports)
    print(f"super front: {len(front.solutions)} solutions from {run_count} runs")
    for objective in ("accuracy", "active_neurons", "auroc"):
        print(f"extremes[{objective}]: {len(slices[objective])} solutions")
    print(f"top neurons: {', '.join(str(r.neuron_index) for r in reports)}")
    print(f"reports in {out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    run_dir = Path(args.run_dir)
    meta = _read_meta(run_dir)
    cfg = _config_from_meta(meta)
    feature_dim = int(meta["feature_dim"])
    manifest_path = Path(args.manifest) if args.manifest else Path(meta["manifest"])
    manifest = parse_manifest(manifest_path)
    ind, ood = _load_datasets(manifest)
    if ind.feature_dim != feature_dim:
        raise ValidationFailure(
            f"manifest data has feature_dim {ind.feature_dim}, run used {feature_dim}"
        )
    solutions, run_count = _load_run_fronts(run_dir, feature_dim)
    front = super_front_from_solutions(solutions, run_count)
    if not front.solutions:
        raise ValidationFailure("empty super front; nothing to ensemble")
    pool = build_ood_pool(
        ood,
        cfg.ood_count_for(len(ind.test), len(ood)),
        derive_seed(cfg.master_seed, ENSEMBLE_POOL_TAG),
    )
    candidates = []
    for sol in front.solutions:
        head = rematerialize_head(sol.mask, ind, cfg, cfg.master_seed,
                                  sol.run_id, sol.eval_index)
        candidates.append(ZoneCandidate(solution=sol, head=head))
    zone_set = quantile_ensemble_zones(candidates, args.metric)
    rows = zone_report(zone_set, ind.test, pool, cfg)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"zones_{args.metric}.csv"
    write_zone_csv(csv_path, zone_set, rows)
    for row in rows:
        if row.n_members == 0:
            print(f"zone ({row.q_min},{row.q_max}): empty")
        else:
            print(f"zone ({row.q_min},{row.q_max}): {row.n_members} members, "
                  f"best {row.member_best:.4f}, ensemble {row.ensemble_value:.4f}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moprune",
        description="Evolve pruning masks for a dense classifier head, then "
                    "analyze the resulting fronts and ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a manifest and its data files")
    p_val.add_argument("manifest")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="execute independent evolution runs")
    p_run.add_argument("manifest")
    p_run.add_argument("--runs", type=int, default=10)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config field (repeatable)")
    p_run.set_defaults(func=cmd_run)

    p_ana = sub.add_parser("analyze", help="summarize a finished run directory")
    p_ana.add_argument("run_dir")
    p_ana.add_argument("--out", default=None)
    p_ana.add_argument("--top-k", type=int, default=10, dest="top_k")
    p_ana.add_argument("--fraction", type=float, default=0.10)
    p_ana.set_defaults(func=cmd_analyze)

    p_ens = sub.add_parser("ensemble", help="quantile-zone ensembles over the super front")
    p_ens.add_argument("run_dir")
    p_ens.add_argument("--metric", choices=("accuracy", "auroc"), required=True)
    p_ens.add_argument("--manifest", default=None)
    p_ens.add_argument("--out", default=None)
    p_ens.set_defaults(func=cmd_ensemble)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationFailure, FeatsetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console()
