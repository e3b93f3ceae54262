"""
Command-line driver: ``train``, ``evaluate``, ``ablate`` and ``export-figures``.

All commands read one JSON run configuration (every key optional, unknown
keys rejected) and write under ``<output_dir>/<name>/``::

    checkpoints/  resample_XX.json, splits.json
    history/      resample_XX.csv
    tables/       gain_<metric>.csv, baseline.json, ablation_summary.json
    curves/       curves_<metric>.csv
    figures/      band_<feature>.csv, ablation_omega<w>_seed<s>.csv

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 missing artifact.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .data import SplitSpec, dump_split_membership, load_wdbc, resample, standardize
from .errors import ConfigurationError, IngestionError, TrainingDivergence, UsageError
from .invase import TrainedModel, TrainingConfig, train

log = logging.getLogger("uainvase")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4
FIGURE_FEATURES = (
    "worst radius",
    "perimeter error",
    "mean area",
    "smoothness error",
    "worst concavity",
)


class MissingArtifact(Exception):
    pass


@dataclass
class RunConfig:
    name: str = "wdbc"
    dataset: str | None = None  # None: bundled WDBC copy
    output_dir: str = "runs"
    split: SplitSpec = field(default_factory=SplitSpec)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    strategies: tuple = ev.STRATEGIES
    rates: tuple = ev.DEFAULT_RATES
    table_rates: tuple = ev.TABLE_RATES
    random_shuffles: int = 10
    figure_features: tuple = FIGURE_FEATURES
    ablation_seeds: int = 5
    ablation_omegas: tuple = (0.1, 0.0)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "split" in doc:
            split_keys = {f.name for f in fields(SplitSpec)}
            bad = set(doc["split"]) - split_keys
            if bad:
                raise ConfigurationError(f"unknown split keys: {sorted(bad)}")
            try:
                doc["split"] = SplitSpec(**doc["split"])
            except UsageError as exc:
                raise ConfigurationError(str(exc)) from None
        if "training" in doc:
            doc["training"] = TrainingConfig.from_dict(doc["training"])
        for key in ("strategies", "rates", "table_rates", "figure_features", "ablation_omegas"):
            if key in doc:
                doc[key] = tuple(doc[key])
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        return cls.from_dict(doc)

    def validate(self) -> None:
        bad = set(self.strategies) - set(ev.STRATEGIES)
        if bad:
            raise ConfigurationError(f"unknown strategies {sorted(bad)}")
        rates = np.asarray(self.rates, dtype=float)
        if rates[0] != 0 or np.any(np.diff(rates) <= 0) or rates[-1] > 1:
            raise ConfigurationError("rates must start at 0 and increase strictly within [0, 1]")
        missing = [q for q in self.table_rates if not np.any(np.isclose(rates, q, rtol=0, atol=1e-12))]
        if missing:
            raise ConfigurationError(f"table rates {missing} are not in rates")
        if self.random_shuffles < 1 or self.ablation_seeds < 1:
            raise ConfigurationError("random_shuffles and ablation_seeds must be positive")

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key, value in doc.items():
            if isinstance(value, tuple):
                doc[key] = list(value)
        return doc

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.name

    def path(self, kind: str, filename: str) -> Path:
        p = self.run_dir / kind
        p.mkdir(parents=True, exist_ok=True)
        return p / filename


def load_dataset(cfg: RunConfig):
    try:
        return load_wdbc(cfg.dataset)
    except IngestionError as exc:
        raise ConfigurationError(f"dataset: {exc}") from None


def standardized_split(dataset, cfg: RunConfig, index: int):
    tr, te = resample(dataset, cfg.split, index)
    tr_s, te_s, means, stds = standardize(tr, te)
    return tr_s, te_s, (means, stds)


def training_rng(cfg: RunConfig, index: int):
    return np.random.default_rng([cfg.training.seed, index])


def checkpoint_path(cfg: RunConfig, index: int) -> Path:
    return cfg.run_dir / "checkpoints" / f"resample_{index:02d}.json"


def load_checkpoint(cfg: RunConfig, index: int, d: int) -> TrainedModel:
    path = checkpoint_path(cfg, index)
    if not path.is_file():
        raise MissingArtifact(f"missing checkpoint {path}; run `train` first")
    model = TrainedModel.load(path)
    if model.d != d:
        raise ConfigurationError(f"checkpoint {path} expects {model.d} features, dataset has {d}")
    return model


def run_training(cfg: RunConfig) -> list[Path]:
    dataset = load_dataset(cfg)
    written = []
    dump_split_membership(dataset.n, cfg.split, cfg.path("checkpoints", "splits.json"))
    for k in range(cfg.split.resample_count):
        tr, _, _ = standardized_split(dataset, cfg, k)
        try:
            model = train(tr, cfg.training, rng=training_rng(cfg, k))
        except TrainingDivergence as exc:
            exc.args = (f"resample {k}: {exc}",)
            raise
        path = checkpoint_path(cfg, k)
        path.parent.mkdir(parents=True, exist_ok=True)
        model.save(path)
        model.write_history_csv(cfg.path("history", f"resample_{k:02d}.csv"))
        log.info("resample %d trained -> %s", k, path)
        written.append(path)
    return written


def collect_predictions(cfg: RunConfig, dataset=None):
    dataset = dataset if dataset is not None else load_dataset(cfg)
    predsets = []
    for k in range(cfg.split.resample_count):
        _, te, _ = standardized_split(dataset, cfg, k)
        model = load_checkpoint(cfg, k, dataset.d)
        predsets.append(ev.PredictionSet.from_model(model, te, k))
    return predsets


def run_evaluation(cfg: RunConfig, json_mirror: bool = False, predsets=None) -> dict:
    """Curves and gain tables for every metric; returns them keyed by metric."""
    predsets = predsets if predsets is not None else collect_predictions(cfg)
    curves = ev.evaluate(predsets, rates=cfg.rates, strategies=cfg.strategies,
                         seed=cfg.split.seed, n_random=cfg.random_shuffles)
    results = {"curves": curves, "tables": {}, "baseline": {}}
    for metric in ev.METRICS:
        metric_curves = [curves[s, metric] for s in cfg.strategies]
        table = ev.gain_table(metric_curves, cfg.table_rates)
        results["tables"][metric] = table
        results["baseline"][metric] = table.base_value
        table.to_csv(cfg.path("tables", f"gain_{metric}.csv"))
        ev.write_curves_csv(metric_curves, cfg.path("curves", f"curves_{metric}.csv"))
        if json_mirror:
            table.to_json(cfg.path("tables", f"gain_{metric}.json"))
    cfg.path("tables", "baseline.json").write_text(json.dumps(results["baseline"], indent=2))
    return results


def run_ablation(cfg: RunConfig, json_mirror: bool = False) -> dict:
    """Train each seed once per omega and compare logvar/bias correlations."""
    dataset = load_dataset(cfg)
    summary = {"omegas": list(cfg.ablation_omegas), "seeds": [], "correlations": {}}
    for omega in cfg.ablation_omegas:
        summary["correlations"][repr(float(omega))] = []
    for seed in range(cfg.ablation_seeds):
        index = seed % cfg.split.resample_count
        tr, te, _ = standardized_split(dataset, cfg, index)
        summary["seeds"].append({"seed": seed, "resample": index, "test_size": te.n})
        for omega in cfg.ablation_omegas:
            tcfg = replace(cfg.training, omega=float(omega), seed=seed)
            try:
                model = train(tr, tcfg, rng=np.random.default_rng([seed, index]))
            except TrainingDivergence as exc:
                exc.args = (f"ablation seed {seed}, omega {omega}: {exc}",)
                raise
            rows = ev.bias_vs_logvar_export(model, te)
            ev.write_rows_csv(rows, ("logvar", "squared_bias"),
                              cfg.path("figures", f"ablation_omega{omega:g}_seed{seed}.csv"))
            summary["correlations"][repr(float(omega))].append(ev.pearson(rows))
    summary["mean_correlation"] = {k: float(np.mean(v)) for k, v in summary["correlations"].items()}
    cfg.path("tables", "ablation_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _slug(name: str) -> str:
    return name.strip().lower().replace(" ", "_")


def run_export_figures(cfg: RunConfig, features=None, index: int = 0) -> list[Path]:
    dataset = load_dataset(cfg)
    features = list(features if features is not None else cfg.figure_features)
    names = list(dataset.feature_names)
    unknown = [f for f in features if f not in names]
    if unknown:
        raise ConfigurationError(
            f"unknown feature(s) {unknown}; valid names: {', '.join(names)}"
        )
    tr, te, scale = standardized_split(dataset, cfg, index)
    model = load_checkpoint(cfg, index, dataset.d)
    written = []
    for feature in features:
        rows = ev.uncertainty_band_export(model, te, names.index(feature), train=tr, scale=scale)
        path = cfg.path("figures", f"band_{_slug(feature)}.csv")
        ev.write_rows_csv(rows, ev.BAND_COLUMNS, path)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for splits and training")
    common.add_argument("--out", help="output root directory")
    common.add_argument("--name", help="run name (sub-directory of --out)")
    common.add_argument("--omega", type=float, help="uncertainty-preference weight")
    common.add_argument("--lambda", dest="lam", type=float, help="sparsity weight")
    common.add_argument("--resamples", type=int, help="number of train/test resamples")
    common.add_argument("--iterations", type=int, help="training iterations")
    common.add_argument("--no-uncertainty", action="store_true", help="vanilla INVASE")
    common.add_argument("--json", action="store_true", help="also write JSON mirrors")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="uainvase", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one model per resample")
    sub.add_parser("evaluate", parents=[common], help="query-rate curves and gain tables")
    sub.add_parser("ablate", parents=[common], help="reward-shaping ablation")
    fig = sub.add_parser("export-figures", parents=[common], help="uncertainty band CSVs")
    fig.add_argument("--features", nargs="+", help="feature names, e.g. 'worst radius'")
    fig.add_argument("--resample", type=int, default=0, help="checkpoint to export")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    training, split = cfg.training, cfg.split
    if args.seed is not None:
        training = replace(training, seed=args.seed)
        split = replace(split, seed=args.seed)
    if args.omega is not None:
        training = replace(training, omega=args.omega)
    if args.lam is not None:
        training = replace(training, lam=args.lam)
    if args.iterations is not None:
        training = replace(training, iterations=args.iterations)
    if args.no_uncertainty:
        training = replace(training, uncertainty_enabled=False)
    if args.resamples is not None:
        split = replace(split, resample_count=args.resamples)
    cfg = replace(cfg, training=training, split=split)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if args.name is not None:
        cfg = replace(cfg, name=args.name)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "train":
            run_training(cfg)
        elif args.command == "evaluate":
            results = run_evaluation(cfg, json_mirror=args.json)
            base = results["baseline"]
            print(f"0% query rate: AUC-ROC {100 * base['auc_roc']:.2f}%  "
                  f"AUC-PR {100 * base['auc_pr']:.2f}%  bias {base['bias']:.4f}")
            for metric in ("auc_roc", "auc_pr"):
                header, body = results["tables"][metric].rows()
                print(f"\ngain (percentage points) of {metric}")
                print("  ".join(f"{h:>15}" for h in header))
                for row in body:
                    print("  ".join(f"{c:>15}" for c in row))
        elif args.command == "ablate":
            summary = run_ablation(cfg, json_mirror=args.json)
            for omega, corr in summary["mean_correlation"].items():
                print(f"omega={omega}: mean corr(logvar, squared bias) = {corr:.4f}")
        elif args.command == "export-figures":
            for path in run_export_figures(cfg, args.features, args.resample):
                print(path)
        cfg.run_dir.mkdir(parents=True, exist_ok=True)
        (cfg.run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
