"""Strict JSON experiment configuration.

Every key a config may contain is listed in :data:`DEFAULTS`; anything else,
at any nesting level, is rejected.  ``kappa``, ``S``, ``snr_db`` and
``noise_variance`` may be given as lists, in which case the OBCSAA mode is run
once per combination.
"""
import copy
import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

from ..channel import snr_db_to_noise_variance
from ..errors import ParameterError
from ..learner import Architecture, Mode, PipelineConfig

# The documented defaults table.  ``None`` means "not set" and is only
# allowed where the field is optional.
DEFAULTS = {
    "name": "experiment",
    "U": 10,
    "K_bar": 3000,
    "rounds": 200,
    "alpha": 0.1,
    "kappa": 10,
    "S": 1000,
    "snr_db": 5.0,
    "noise_variance": None,
    "max_power": 10.0,
    "architecture": {"kind": "mlp", "sizes": [784, 16, 10]},
    "modes": ["perfect", "obcsaa"],
    "solver": "auto",
    "enumeration_cap": 20,
    "admm": {"step_c": 1.0, "abs_tol": 1e-4, "rel_tol": 1e-4, "max_iter": 500, "incumbent": "best"},
    "recovery": {
        "mode": "iht_real",
        "max_iterations": 300,
        "step_size": 1.0,
        "tolerance": 1e-6,
        "sparsity_budget": None,
        "magnitude": "worker_norm",
    },
    "bounds": {
        "L": 10.0,
        "rho1": 20.0,
        "rho2": 0.5,
        "delta": 0.2,
        "G": 1.0,
        "G_running_max": False,
        "strict_rip": True,
    },
    "quantize": True,
    "phi": "gaussian",
    "phi_variance": None,
    "master_seed": 0,
    "repeats": 1,
    "dataset": {
        "kind": "mnist",
        "train_images": "data/mnist5k/train-images-idx3-ubyte.gz",
        "train_labels": "data/mnist5k/train-labels-idx1-ubyte.gz",
        "test_images": "data/mnist5k/t10k-images-idx3-ubyte.gz",
        "test_labels": "data/mnist5k/t10k-labels-idx1-ubyte.gz",
    },
    "test_samples": None,
    "output_dir": "runs/experiment",
    "track_full_gradient": False,
}

SYNTHETIC_DEFAULTS = {"kind": "synthetic", "features": 20, "classes": 10, "n_train": 2000, "n_test": 500,
                      "separation": 1.0, "seed": 0}
_NESTED = ("admm", "recovery", "bounds")
_SWEEPABLE = ("kappa", "S", "snr_db", "noise_variance")
PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels")


def _merge_block(name, given, defaults):
    if not isinstance(given, dict):
        raise ParameterError(f"config block {name!r} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ParameterError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


@dataclass(frozen=True)
class Variant:
    """One OBCSAA grid point (or the perfect baseline when ``mode`` is PERFECT)."""

    mode: Mode
    kappa: int = None
    S: int = None
    snr_db: float = None
    noise_variance: float = None

    @property
    def label(self):
        if self.mode is Mode.PERFECT:
            return "perfect"
        noise = f"snr={self.snr_db:g}dB" if self.snr_db is not None else f"sigma2={self.noise_variance:g}"
        return f"obcsaa k={self.kappa} S={self.S} {noise}"


class ExperimentConfig:
    """Validated, fully resolved experiment settings.

    ``values`` holds the complete resolved document (user keys merged over
    :data:`DEFAULTS`); ``base_dir`` anchors relative dataset and output paths.
    """

    def __init__(self, values=None, base_dir="."):
        values = {} if values is None else values
        if not isinstance(values, dict):
            raise ParameterError("config must be a JSON object")
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ParameterError(f"unknown config key(s): {', '.join(unknown)}")
        v = {k: copy.deepcopy(values.get(k, DEFAULTS[k])) for k in DEFAULTS}
        for block in _NESTED:
            v[block] = _merge_block(block, values.get(block, {}), DEFAULTS[block])
        ds = values.get("dataset", DEFAULTS["dataset"])
        kind = ds.get("kind", "mnist") if isinstance(ds, dict) else None
        if kind == "synthetic":
            v["dataset"] = _merge_block("dataset", ds, SYNTHETIC_DEFAULTS)
        elif kind == "mnist":
            v["dataset"] = _merge_block("dataset", ds, DEFAULTS["dataset"])
        else:
            raise ParameterError("dataset.kind must be 'mnist' or 'synthetic'")
        if "noise_variance" in values and values["noise_variance"] is not None:
            if "snr_db" in values and values["snr_db"] is not None:
                raise ParameterError("give either snr_db or noise_variance, not both")
            v["snr_db"] = None
        self.values = v
        self.base_dir = Path(base_dir)
        self._validate()

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc})") from exc
        return cls(doc, base_dir=path.parent)

    def override(self, **kw):
        v = copy.deepcopy(self.values)
        for k, val in kw.items():
            if k not in DEFAULTS:
                raise ParameterError(f"unknown config key: {k}")
            v[k] = val
        if "noise_variance" in kw and kw["noise_variance"] is not None:
            v["snr_db"] = None
        return ExperimentConfig(v, self.base_dir)

    def __getitem__(self, key):
        return self.values[key]

    # -- validation ------------------------------------------------------
    def _validate(self):
        v = self.values
        for key in ("U", "K_bar", "rounds", "repeats", "enumeration_cap"):
            if not isinstance(v[key], int) or v[key] < 1:
                raise ParameterError(f"{key} must be a positive integer, got {v[key]!r}")
        if not isinstance(v["master_seed"], int) or v["master_seed"] < 0:
            raise ParameterError("master_seed must be a non-negative integer")
        if not v["alpha"] > 0 or not v["max_power"] > 0:
            raise ParameterError("alpha and max_power must be positive")
        for m in _as_list(v["modes"]):
            if m not in {x.value for x in Mode}:
                raise ParameterError(f"unknown mode {m!r}")
        if not _as_list(v["modes"]):
            raise ParameterError("modes must not be empty")
        if v["solver"] not in ("auto", "enumeration", "admm"):
            raise ParameterError(f"unknown solver {v['solver']!r}")
        if v["snr_db"] is None and v["noise_variance"] is None:
            raise ParameterError("one of snr_db or noise_variance is required")
        arch = self.architecture
        if v["test_samples"] is not None and v["test_samples"] < 1:
            raise ParameterError("test_samples must be >= 1")
        # building each pipeline config validates the remaining fields
        for var in self.variants():
            if var.mode is Mode.OBCSAA:
                if not 1 <= var.kappa <= arch.param_count:
                    raise ParameterError(f"kappa={var.kappa} outside [1, D={arch.param_count}]")
                self.pipeline(var)

    # -- derived views -----------------------------------------------------
    @property
    def architecture(self):
        a = self.values["architecture"]
        if not isinstance(a, dict) or set(a) != {"kind", "sizes"}:
            raise ParameterError("architecture must be {'kind': ..., 'sizes': [...]}")
        return Architecture(a["kind"], tuple(a["sizes"]))

    @property
    def seeds(self):
        """Run seeds: master_seed, master_seed + 1, ... (one per repeat)."""
        return [self.values["master_seed"] + r for r in range(self.values["repeats"])]

    @property
    def output_dir(self):
        return self.resolve_path(self.values["output_dir"])

    def resolve_path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def variants(self):
        v = self.values
        out = []
        modes = [Mode(m) for m in _as_list(v["modes"])]
        if Mode.PERFECT in modes:
            out.append(Variant(Mode.PERFECT))
        if Mode.OBCSAA in modes:
            if v["snr_db"] is not None:
                noises = [(s, snr_db_to_noise_variance(s, v["max_power"])) for s in _as_list(v["snr_db"])]
            else:
                noises = [(None, float(n)) for n in _as_list(v["noise_variance"])]
            for kappa, s, (snr, nv) in itertools.product(_as_list(v["kappa"]), _as_list(v["S"]), noises):
                out.append(Variant(Mode.OBCSAA, int(kappa), int(s), snr, nv))
        return out

    def pipeline(self, var):
        """PipelineConfig for one variant (the perfect mode ignores most of it)."""
        v, rec, bd = self.values, self.values["recovery"], self.values["bounds"]
        d = self.architecture.param_count
        if var.mode is Mode.PERFECT:
            # perfect aggregation never touches the codec; describe it as the lossless pipeline
            kappa, s, nv, phi = d, d, 0.0, "identity"
        else:
            kappa, s, nv, phi = var.kappa, var.S, var.noise_variance, v["phi"]
        admm = {k: v["admm"][k] for k in DEFAULTS["admm"]}
        return PipelineConfig(
            kappa=kappa, S=s, noise_variance=nv, max_power=float(v["max_power"]), alpha=float(v["alpha"]),
            phi=phi, phi_variance=v["phi_variance"], quantize=bool(v["quantize"]),
            recovery=rec["mode"], sparsity_budget=rec["sparsity_budget"],
            max_iterations=int(rec["max_iterations"]), step_size=float(rec["step_size"]),
            tolerance=float(rec["tolerance"]), magnitude=rec["magnitude"], solver=v["solver"],
            enumeration_cap=int(v["enumeration_cap"]), admm=admm, L=float(bd["L"]), rho1=float(bd["rho1"]),
            rho2=float(bd["rho2"]), delta=float(bd["delta"]), strict_rip=bool(bd["strict_rip"]),
            G=float(bd["G"]), G_running_max=bool(bd["G_running_max"]),
        )

    def run_id(self, var):
        """``hash8:label``; the hash covers every setting that shapes the run."""
        v = {k: val for k, val in self.values.items() if k not in ("output_dir", "name", "modes", "repeats",
                                                                    "master_seed", *_SWEEPABLE)}
        key = {"settings": v, "mode": var.mode.value, "kappa": var.kappa, "S": var.S,
               "noise_variance": var.noise_variance}
        digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:8]
        return f"{digest}:{var.label}"

    def resolved(self):
        """JSON-ready record of every value in effect, including derived noise variances."""
        doc = copy.deepcopy(self.values)
        doc["resolved_variants"] = [
            {"run_id": self.run_id(var), "mode": var.mode.value, "kappa": var.kappa, "S": var.S,
             "snr_db": var.snr_db, "noise_variance": var.noise_variance}
            for var in self.variants()
        ]
        doc["seeds"] = self.seeds
        doc["D"] = self.architecture.param_count
        return doc
