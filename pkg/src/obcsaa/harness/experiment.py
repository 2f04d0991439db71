"""Seeded experiment runner and the metrics table it writes."""
import json
import logging
import math
from functools import lru_cache

import numpy as np

from .. import learner as ln
from ..errors import NumericError, OBCSAAError, ParameterError
from ..learner import Mode
from ..seeding import derive_seed
from .config import PATH_KEYS, ExperimentConfig
from .data import load_mnist_idx, make_synthetic, partition_dataset

log = logging.getLogger(__name__)

COLUMNS = ("run_id", "mode", "seed", "round", "train_loss", "test_acc", "grad_err_sq", "err_bound",
           "beta_count", "b_t", "R_t")
FAILED = "FAILED"
MONOTONE_SLACK = 1e-6


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class MetricsTable:
    """Append-only rows keyed by (run_id, seed, round).

    When ``path`` is given the header is written on creation and each row is
    flushed to disk as it is appended, so a crash leaves the partial table.
    """

    def __init__(self, path=None):
        self.rows = []
        self.path = path
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(",".join(COLUMNS) + "\n")

    def append(self, row):
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ParameterError(f"metrics row lacks {sorted(missing)}")
        self.rows.append({k: row[k] for k in COLUMNS})
        if self.path is not None:
            with open(self.path, "a", newline="") as f:
                f.write(",".join(_cell(row[k]) for k in COLUMNS) + "\n")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def select(self, **match):
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self):
        lines = [",".join(COLUMNS)]
        lines += [",".join(_cell(r[k]) for k in COLUMNS) for r in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def read_csv(cls, path):
        """Parse a metrics.csv back into typed rows (failure markers are kept)."""
        table = cls()
        with open(path) as f:
            header = f.readline().rstrip("\n").split(",")
            if tuple(header) != COLUMNS:
                raise ParameterError(f"{path}: unexpected header {header}")
            for line in f:
                cells = line.rstrip("\n").split(",")
                if len(cells) != len(COLUMNS):
                    raise ParameterError(f"{path}: malformed row {line!r}")
                row = dict(zip(COLUMNS, cells))
                for k in ("seed", "round", "beta_count"):
                    row[k] = int(row[k]) if row[k] else None
                for k in ("train_loss", "test_acc", "grad_err_sq", "err_bound", "b_t", "R_t"):
                    if row[k] == FAILED:
                        continue
                    row[k] = float(row[k]) if row[k] else None
                table.rows.append(row)
        return table


def metrics_row(run_id, mode, seed, m):
    """Flatten one RoundMetrics into a CSV row."""
    row = dict.fromkeys(COLUMNS)
    row.update(run_id=run_id, mode=Mode(mode).value, seed=seed, round=m.round,
               train_loss=m.train_loss, test_acc=m.test_accuracy)
    if m.bound_report is not None:
        row.update(
            grad_err_sq=m.grad_error_sq,
            err_bound=m.bound_report.total_error_bound,
            beta_count=m.decision.count,
            b_t=m.bound_report.b_term,
            R_t=m.objective,
        )
    return row


@lru_cache(maxsize=4)
def _load_mnist(train_images, train_labels, test_images, test_labels):
    return load_mnist_idx(train_images, train_labels), load_mnist_idx(test_images, test_labels)


def load_dataset(config):
    """(train, test) for the config's dataset block."""
    ds = config["dataset"]
    if ds["kind"] == "synthetic":
        train, test = make_synthetic(ds["features"], ds["classes"], ds["n_train"], ds["n_test"],
                                     ds["seed"], ds["separation"])
    else:
        paths = [str(config.resolve_path(ds[k])) for k in PATH_KEYS]
        train, test = _load_mnist(*paths)
    if config["test_samples"] is not None:
        n = config["test_samples"]
        test = ln.LocalDataset(test.features[:n], test.labels[:n])
    arch = config.architecture
    if train.features.shape[1] != arch.n_inputs:
        raise ParameterError(f"dataset has {train.features.shape[1]} features, architecture expects {arch.n_inputs}")
    if max(train.labels.max(), test.labels.max()) >= arch.n_classes:
        raise ParameterError(f"labels exceed the architecture's {arch.n_classes} classes")
    return train, test


def build_state(config, variant, seed, train, test):
    """Fresh FLState; partition and initial weights depend only on the seed."""
    workers = partition_dataset(train, config["U"], config["K_bar"], derive_seed(seed, "partition"))
    model = ln.init_model(config.architecture, derive_seed(seed, "init"))
    return ln.FLState(model, workers, test, config.pipeline(variant), seed,
                      track_full_gradient=config["track_full_gradient"])


def run_single(config, variant, seed, table, train, test):
    """Run ``config["rounds"]`` rounds of one variant and append them to ``table``."""
    run_id = config.run_id(variant)
    mode = variant.mode
    state = None
    prev_loss = math.inf
    try:
        state = build_state(config, variant, seed, train, test)
        for _ in range(config["rounds"]):
            m = ln.run_fl_round(state, mode)
            if mode is Mode.PERFECT and m.train_loss > prev_loss + MONOTONE_SLACK:
                raise NumericError(f"round {m.round}: perfect-aggregation loss rose from {prev_loss!r} to {m.train_loss!r}")
            prev_loss = m.train_loss
            table.append(metrics_row(run_id, mode, seed, m))
    except (OBCSAAError, ArithmeticError, ValueError) as exc:
        failed_round = (state.round if state is not None else 0) + 1
        row = dict.fromkeys(COLUMNS)
        row.update(run_id=run_id, mode=mode.value, seed=seed, round=failed_round, train_loss=FAILED)
        table.append(row)
        log.error("%s seed=%d failed at round %d: %s", run_id, seed, failed_round, exc)
        raise
    log.info("%s seed=%d done: loss=%.4f acc=%.4f", run_id, seed, m.train_loss, m.test_accuracy)
    return state


def run_experiment(config, seeds=None, modes=None, write=True):
    """Execute every (seed, variant) pair and return the :class:`MetricsTable`.

    With ``write=True`` the table streams to ``<output_dir>/metrics.csv`` and
    the resolved settings go to ``<output_dir>/config.resolved.json``.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig(config)
    seeds = config.seeds if seeds is None else list(seeds)
    variants = config.variants()
    if modes is not None:
        modes = {Mode(m) for m in modes}
        variants = [v for v in variants if v.mode in modes]
    if not variants:
        raise ParameterError("no runs selected")
    path = None
    if write:
        out = config.output_dir
        out.mkdir(parents=True, exist_ok=True)
        resolved = config.resolved()
        resolved["seeds"] = seeds
        resolved["resolved_variants"] = [r for r in resolved["resolved_variants"]
                                         if Mode(r["mode"]) in {v.mode for v in variants}]
        (out / "config.resolved.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
        path = out / "metrics.csv"
    table = MetricsTable(path)
    train, test = load_dataset(config)
    for seed in seeds:
        for var in variants:
            run_single(config, var, seed, table, train, test)
    return table
