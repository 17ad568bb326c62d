"""Dataset, scenario config and manifest persistence.

Datasets are delimited text with header d1..dm,x1..xn,y and 17 significant
digits per value, which round-trips float64 exactly. Scenario configs are
nested YAML mirroring the CovariateSpec fields. Manifests are small JSON
documents keyed by the run parameters and the scenario content hash, with
no timestamps, so identical runs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from .errors import DatasetFormatError
from .laws import NormalNoise, law_from_dict, law_to_dict
from .scenario import CovariateSpec, Dataset, LossModel, Scenario

FLOAT_FMT = "%.17g"


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    header = [*dataset.protected_names, *dataset.permitted_names, "y"]
    table = np.column_stack([dataset.d, dataset.x, dataset.y])
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, table, fmt=FLOAT_FMT, delimiter=",")


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        header_line = fh.readline().rstrip("\n")
        names = header_line.split(",")
        d_names = [c for c in names if c.startswith("d")]
        x_names = [c for c in names if c.startswith("x")]
        if not d_names or not x_names or names != [*d_names, *x_names, "y"]:
            raise DatasetFormatError(
                f"{path}: header must read d1..dm,x1..xn,y, got {header_line!r}"
            )
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {len(names)} fields, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
    table = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    m = len(d_names)
    k = len(x_names)
    return Dataset(
        d=table[:, :m],
        x=table[:, m : m + k],
        y=table[:, m + k],
        protected_names=tuple(d_names),
        permitted_names=tuple(x_names),
    )


def _key_str(value: float) -> str:
    return repr(float(value))


def scenario_to_dict(scenario: Scenario) -> dict:
    cov = []
    for c in scenario.covariates:
        entry: dict = {"name": c.name, "role": c.role}
        if c.parent is None:
            entry["law"] = law_to_dict(c.laws[None])
        else:
            entry["parent"] = c.parent
            entry["law_by_parent"] = {
                _key_str(value): law_to_dict(law) for value, law in sorted(c.laws.items())
            }
        cov.append(entry)
    out = {
        "covariates": cov,
        "model": {
            "intercept": scenario.model.intercept,
            "permitted_coeffs": list(scenario.model.permitted_coeffs),
            "protected_coeffs": list(scenario.model.protected_coeffs),
            "noise": {"normal": {"std": scenario.model.noise.std}},
        },
    }
    if scenario.labels:
        out["labels"] = {
            name: {_key_str(v): text for v, text in sorted(mapping.items())}
            for name, mapping in sorted(scenario.labels.items())
        }
    return out


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        cov = []
        for entry in doc["covariates"]:
            if "law" in entry:
                laws = {None: law_from_dict(entry["law"])}
            else:
                laws = {
                    float(value): law_from_dict(law)
                    for value, law in entry["law_by_parent"].items()
                }
            cov.append(
                CovariateSpec(
                    name=entry["name"],
                    role=entry["role"],
                    laws=laws,
                    parent=entry.get("parent"),
                )
            )
        model_doc = doc["model"]
        noise_doc = model_doc["noise"]
        if set(noise_doc) != {"normal"}:
            raise ValueError(f"unsupported noise family {sorted(noise_doc)!r}")
        model = LossModel(
            intercept=float(model_doc["intercept"]),
            permitted_coeffs=tuple(float(c) for c in model_doc["permitted_coeffs"]),
            protected_coeffs=tuple(float(c) for c in model_doc["protected_coeffs"]),
            noise=NormalNoise(float(noise_doc["normal"]["std"])),
        )
        labels = {
            name: {float(v): str(text) for v, text in mapping.items()}
            for name, mapping in doc.get("labels", {}).items()
        }
        return Scenario(covariates=tuple(cov), model=model, labels=labels)
    except KeyError as exc:
        raise DatasetFormatError(f"scenario config missing key {exc}") from None


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False))


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise DatasetFormatError(f"{path}: scenario config must be a mapping")
    return scenario_from_dict(doc)


def scenario_hash(scenario: Scenario) -> str:
    """Content hash of the canonical scenario document."""
    canonical = json.dumps(scenario_to_dict(scenario), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_manifest(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def derive_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    """Independent sub-stream for (seed, grid node, replicate, ...) tuples."""
    return np.random.SeedSequence([int(seed), *[int(k) for k in keys]])


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def spawn_seed(seed: int, *keys: int) -> int:
    """Scalar seed for APIs that persist a single integer."""
    return int(derive_seed(seed, *keys).generate_state(1)[0])
