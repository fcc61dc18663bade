"""Batch orchestration: manifests, per-mesh feature extraction, training, evaluation."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cache as _cache
from .encoding import Dictionary, assemble_features, encode, feature_names, learn_dictionary
from .errors import ArgumentError, ContractError, SpectralWeightError, StructuralError, VersionError
from .mesh import TriangleMesh, geodesic_diameter, load_obj, save_obj, validate, volume
from .regression import EvalReport, PLSModel, fit_pls, format_table, metrics
from .sgws import SignatureMatrix, compute_signature, design_filter_bank
from .shapes import fibonacci_directions, sphere_mesh
from .simplify import simplify
from .spectral import EigenSystem, eigensystem

log = logging.getLogger(__name__)

BUNDLE_VERSION = 1
REQUIRED_COLUMNS = ("mesh_path", "carcass_weight")


class ManifestError(SpectralWeightError):
    """Dataset manifest is malformed or refers to missing files."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PipelineConfig:
    target_vertices: int = 3000
    eig_count: int = 301
    resolution: int = 2
    dictionary_k: int = 32
    sigma_rule: str = "mean_nearest"
    sigma: float | None = None
    pls_components: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.target_vertices < 4:
            raise ArgumentError("target_vertices must be >= 4")
        if self.eig_count < 1:
            raise ArgumentError("eig_count must be >= 1")
        if self.resolution < 1:
            raise ArgumentError("resolution must be >= 1")
        if self.sigma_rule not in ("mean_nearest", "fixed"):
            raise ArgumentError(f"unknown sigma_rule {self.sigma_rule!r}")
        if self.sigma_rule == "fixed" and not (self.sigma and self.sigma > 0):
            raise ArgumentError("sigma_rule 'fixed' needs a positive sigma")
        if self.dictionary_k <= self.signature_size:
            raise ArgumentError(
                f"dictionary_k={self.dictionary_k} must exceed signature size {self.signature_size}"
            )

    @property
    def signature_size(self) -> int:
        return sum(L + 1 for L in range(1, self.resolution + 1))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


# ---------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestRow:
    mesh_path: str  # as written in the manifest
    resolved: str
    carcass_weight: float
    targets: dict


@dataclass(frozen=True)
class DatasetManifest:
    rows: tuple
    target_columns: tuple

    def __len__(self):
        return len(self.rows)

    def sorted(self) -> "DatasetManifest":
        """Rows in canonical (mesh path) order, which every batch result uses."""
        return DatasetManifest(tuple(sorted(self.rows, key=lambda r: r.mesh_path)), self.target_columns)

    def targets(self, column: str) -> np.ndarray:
        if column not in self.target_columns:
            raise ArgumentError(f"unknown target column {column!r}; have {list(self.target_columns)}")
        return np.array([r.targets[column] for r in self.rows])


def _float(value, what, lineno):
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ManifestError(f"row {lineno}: {what} is not a number: {value!r}") from None
    if not math.isfinite(x):
        raise ManifestError(f"row {lineno}: {what} is not finite")
    return x


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Read a CSV manifest; mesh paths are relative to the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ManifestError(f"manifest lacks columns {missing}")
        target_cols = tuple(c for c in header if c not in REQUIRED_COLUMNS)
        rows, seen = [], set()
        for lineno, rec in enumerate(reader, start=2):
            mp = (rec["mesh_path"] or "").strip()
            if not mp:
                raise ManifestError(f"row {lineno}: empty mesh_path")
            if mp in seen:
                raise ManifestError(f"row {lineno}: duplicate mesh_path {mp!r}")
            seen.add(mp)
            resolved = mp if os.path.isabs(mp) else os.path.join(base, mp)
            if check_files and not os.path.exists(resolved):
                raise ManifestError(f"row {lineno}: mesh file not found: {mp}")
            w = _float(rec["carcass_weight"], "carcass_weight", lineno)
            if w <= 0:
                raise ManifestError(f"row {lineno}: carcass_weight must be positive")
            targets = {c: _float(rec[c], c, lineno) for c in target_cols}
            rows.append(ManifestRow(mp, resolved, w, targets))
    return DatasetManifest(tuple(rows), target_cols)


def write_manifest(path, rows, target_columns) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(REQUIRED_COLUMNS) + list(target_columns))
    for r in rows:
        w.writerow([r.mesh_path, _fmt(r.carcass_weight)] + [_fmt(r.targets[c]) for c in target_columns])
    _cache.atomic_write(path, buf.getvalue().encode())


# ---------------------------------------------------------------------------
# per-mesh extraction


@dataclass
class MeshRecord:
    """Everything extracted from one mesh that does not depend on other meshes."""

    name: str
    signature: np.ndarray
    diameter: float
    volume: float
    carcass_weight: float
    targets: dict = field(default_factory=dict)
    vertex_count: int = 0
    notes: list = field(default_factory=list)


def prepare_mesh(mesh: TriangleMesh, config: PipelineConfig, store: _cache.DiskCache | None = None):
    """Validate, simplify, and compute the signature, diameter and volume of one mesh.

    Returns ``(simplified_mesh, signature, diameter, volume, notes)``.
    """
    store = store or _cache.DiskCache(None)
    report = validate(mesh)
    if not report.ok:
        raise StructuralError("; ".join(report.problems()))
    notes = []
    key = _cache.digest("simplified", mesh.content_hash(), config.target_vertices)
    blob = store.get(key, ".obj")
    if blob is not None:
        simple = load_obj(blob)
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            simple = simplify(mesh, config.target_vertices)
        notes += [str(w.message) for w in caught]
        buf = io.StringIO()
        save_obj(simple, buf)
        store.put(key, ".obj", buf.getvalue().encode("ascii"))
    count = min(config.eig_count, simple.vertex_count - 1)
    ekey = _cache.digest("eigs", simple.content_hash(), count)
    blob = store.get(ekey, ".sweig")
    if blob is not None:
        eigs = EigenSystem.from_bytes(blob)
    else:
        eigs = eigensystem(simple, count)
        store.put(ekey, ".sweig", eigs.to_bytes(ekey))
    skey = _cache.digest("sgws", ekey, config.resolution)
    blob = store.get(skey, ".swsig")
    if blob is not None:
        sig = SignatureMatrix.from_bytes(blob)
    else:
        sig = compute_signature(eigs, design_filter_bank(eigs.lambda_max, config.resolution))
        store.put(skey, ".swsig", sig.to_bytes(skey))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vol = volume(simple)
    notes += [str(w.message) for w in caught]
    diam = geodesic_diameter(simple)
    return simple, sig.data, diam, vol, notes


def extract_records(manifest: DatasetManifest, config: PipelineConfig, store=None, skip_bad=False):
    """Per-mesh records in canonical order plus a list of ``(mesh_path, error)`` failures."""
    records, failures = [], []
    for row in manifest.sorted().rows:
        try:
            mesh = load_obj(row.resolved)
            simple, sig, diam, vol, notes = prepare_mesh(mesh, config, store)
        except (SpectralWeightError, OSError) as exc:
            failures.append((row.mesh_path, exc))
            continue
        for n in notes:
            log.warning("%s: %s", row.mesh_path, n)
        records.append(MeshRecord(row.mesh_path, sig, diam, vol, row.carcass_weight, dict(row.targets),
                                  simple.vertex_count, notes))
    if failures and not skip_bad:
        summary = "\n".join(f"  {p}: {e}" for p, e in failures)
        exc = failures[0][1]
        err = StructuralError if not isinstance(exc, SpectralWeightError) else type(exc)
        raise err(f"{len(failures)} mesh(es) failed:\n{summary}")
    return records, failures


def fit_dictionary(records, config: PipelineConfig) -> Dictionary:
    stacked = np.hstack([r.signature for r in records])
    d = learn_dictionary(stacked, config.dictionary_k, config.seed)
    if config.sigma_rule == "fixed":
        d = Dictionary(d.centers, float(config.sigma))
    return d


def feature_matrix(records, dictionary: Dictionary) -> np.ndarray:
    return np.vstack([
        assemble_features(encode(r.signature, dictionary), r.diameter, r.volume, r.carcass_weight).to_array()
        for r in records
    ])


# ---------------------------------------------------------------------------
# delimited feature files


def _fmt(x: float) -> str:
    return repr(float(x))


def write_features(path, records, X, dictionary, config, target_columns) -> str:
    """Write ``path`` (CSV) and ``path + '.meta.json'``; returns the metadata path."""
    names = feature_names(dictionary.k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mesh_path"] + names + list(target_columns))
    for r, row in zip(records, X):
        w.writerow([r.name] + [_fmt(v) for v in row] + [_fmt(r.targets[c]) for c in target_columns])
    _cache.atomic_write(path, buf.getvalue().encode())
    meta = {
        "format": "spectralweight.features",
        "version": BUNDLE_VERSION,
        "feature_columns": names,
        "target_columns": list(target_columns),
        "config": config.to_dict(),
        "dictionary": dictionary.to_dict(),
    }
    meta_path = os.fspath(path) + ".meta.json"
    _cache.atomic_write(meta_path, (json.dumps(meta, indent=1) + "\n").encode())
    return meta_path


def read_features(path):
    """Return ``(names, X, targets_by_column, meta, mesh_paths)``."""
    meta_path = os.fspath(path) + ".meta.json"
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise ContractError(f"missing feature metadata {meta_path}") from None
    except json.JSONDecodeError as exc:
        raise VersionError(f"corrupt feature metadata: {exc}") from None
    if meta.get("format") != "spectralweight.features" or meta.get("version") != BUNDLE_VERSION:
        raise VersionError("unsupported feature file version")
    names = meta["feature_columns"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    try:
        X = np.array([[float(r[c]) for c in names] for r in rows])
        targets = {c: np.array([float(r[c]) for r in rows]) for c in meta["target_columns"]}
    except (KeyError, ValueError) as exc:
        raise VersionError(f"feature file does not match its metadata: {exc}") from None
    return names, X, targets, meta, [r["mesh_path"] for r in rows]


# ---------------------------------------------------------------------------
# commands


@dataclass
class ExtractResult:
    features_path: str
    meta_path: str
    n: int
    failures: list
    cache_hits: int
    cache_misses: int


def cmd_extract(manifest_path, config: PipelineConfig, out_path, cache_dir=None, skip_bad=False) -> ExtractResult:
    manifest = load_manifest(manifest_path)
    store = _cache.DiskCache(cache_dir)
    records, failures = extract_records(manifest, config, store, skip_bad)
    if len(records) < 1:
        raise ArgumentError("no usable meshes")
    dictionary = fit_dictionary(records, config)
    X = feature_matrix(records, dictionary)
    meta_path = write_features(out_path, records, X, dictionary, config, manifest.target_columns)
    return ExtractResult(os.fspath(out_path), meta_path, len(records), failures, store.hits, store.misses)


@dataclass(frozen=True)
class ModelBundle:
    target: str
    feature_columns: tuple
    config: PipelineConfig
    dictionary: Dictionary
    model: PLSModel

    def to_json(self) -> str:
        return json.dumps({
            "format": "spectralweight.bundle",
            "version": BUNDLE_VERSION,
            "target": self.target,
            "feature_columns": list(self.feature_columns),
            "config": self.config.to_dict(),
            "dictionary": self.dictionary.to_dict(),
            "pls": self.model.to_dict(),
        }, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelBundle":
        try:
            d = json.loads(text)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise VersionError(f"model bundle is not valid JSON: {exc}") from None
        if not isinstance(d, dict) or d.get("format") != "spectralweight.bundle":
            raise VersionError("not a spectralweight model bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise VersionError(f"unsupported bundle version {d.get('version')!r}")
        try:
            bundle = cls(
                d["target"], tuple(d["feature_columns"]), PipelineConfig.from_dict(d["config"]),
                Dictionary.from_dict(d["dictionary"]), PLSModel.from_dict(d["pls"]),
            )
        except (KeyError, TypeError, ArgumentError) as exc:
            raise VersionError(f"malformed bundle: {exc}") from None
        bundle.check()
        return bundle

    def check(self):
        k = self.dictionary.k
        if list(self.feature_columns) != feature_names(k):
            raise ContractError("bundle feature order does not match its dictionary")
        if self.model.n_features != k + 3:
            raise ContractError(f"PLS model expects {self.model.n_features} features, dictionary gives {k + 3}")
        if self.dictionary.p != self.config.signature_size:
            raise ContractError(
                f"dictionary word size {self.dictionary.p} != signature size {self.config.signature_size}"
            )

    def save(self, path):
        _cache.atomic_write(path, self.to_json().encode())

    @classmethod
    def load(cls, path) -> "ModelBundle":
        with open(path, "rb") as fh:
            return cls.from_json(fh.read().decode("utf-8", errors="replace"))


def cmd_train(features_path, target: str, out_path, config: PipelineConfig | None = None) -> ModelBundle:
    names, X, targets, meta, _ = read_features(features_path)
    if target not in targets:
        raise ArgumentError(f"unknown target column {target!r}; have {sorted(targets)}")
    feat_config = PipelineConfig.from_dict(meta["config"])
    if config is not None:
        feat_config = feat_config.replace(pls_components=config.pls_components)
    model = fit_pls(X, targets[target], feat_config.pls_components)
    bundle = ModelBundle(target, tuple(names), feat_config, Dictionary.from_dict(meta["dictionary"]), model)
    bundle.check()
    bundle.save(out_path)
    return bundle


def _check_compatible(bundle: ModelBundle, config: PipelineConfig | None):
    if config is None:
        return
    for attr in ("resolution", "dictionary_k", "eig_count", "target_vertices"):
        a, b = getattr(bundle.config, attr), getattr(config, attr)
        if a != b:
            raise ContractError(f"config {attr}={b} does not match the bundle's {attr}={a}")


def cmd_predict(bundle_path, mesh_path, carcass_weight: float, config: PipelineConfig | None = None,
                cache_dir=None, verbose=False, out=None):
    bundle = ModelBundle.load(bundle_path)
    _check_compatible(bundle, config)
    mesh = load_obj(mesh_path)
    simple, sig, diam, vol, notes = prepare_mesh(mesh, bundle.config, _cache.DiskCache(cache_dir))
    if sig.shape[0] != bundle.dictionary.p:
        raise ContractError(f"signature has {sig.shape[0]} rows, dictionary expects {bundle.dictionary.p}")
    fv = assemble_features(encode(sig, bundle.dictionary), diam, vol, carcass_weight)
    yhat = bundle.model.predict(fv.to_array())
    if verbose and out is not None:
        print(f"vertices after simplification: {simple.vertex_count}", file=out)
        print(f"geodesic diameter: {diam:.6g} cm", file=out)
        print(f"volume: {vol:.6g} cm^3", file=out)
        print("histogram: " + " ".join(f"{h:.4g}" for h in fv.histogram), file=out)
        for n in notes:
            print(f"note: {n}", file=out)
    return yhat


def loocv_records(records, target: str, config: PipelineConfig, shared_dictionary=False) -> EvalReport:
    """Leave-one-out over meshes; the dictionary is refit per fold unless ``shared_dictionary``."""
    n = len(records)
    if n < 4:
        raise ArgumentError(f"leave-one-out needs at least 4 meshes, got {n}")
    y = np.array([r.targets[target] for r in records])
    if np.ptp(y) == 0:
        raise ArgumentError("R^2 is undefined for a constant target")
    shared_X = feature_matrix(records, fit_dictionary(records, config)) if shared_dictionary else None
    yhat = np.empty(n)
    for i in range(n):
        train = [r for j, r in enumerate(records) if j != i]
        try:
            if shared_X is None:
                X = feature_matrix(records, fit_dictionary(train, config))
            else:
                X = shared_X
            model = fit_pls(np.delete(X, i, axis=0), np.delete(y, i), config.pls_components)
        except SpectralWeightError as exc:
            raise type(exc)(f"fold {i} ({records[i].name}): {exc}") from exc
        yhat[i] = model.predict(X[i])
        log.info("fold %d/%d %s: y=%.4f yhat=%.4f", i + 1, n, records[i].name, y[i], yhat[i])
    return metrics(y, yhat, [r.name for r in records])


@dataclass
class EvaluateResult:
    report: EvalReport
    table: str
    paths: dict


def cmd_evaluate(manifest_path, target: str, config: PipelineConfig, out_dir=None, cache_dir=None,
                 shared_dictionary=False, skip_bad=False, figures=True) -> EvaluateResult:
    manifest = load_manifest(manifest_path)
    if target not in manifest.target_columns:
        raise ArgumentError(f"unknown target column {target!r}; have {list(manifest.target_columns)}")
    if len(manifest) < 4:
        raise ArgumentError(f"leave-one-out needs at least 4 meshes, got {len(manifest)}")
    records, _ = extract_records(manifest, config, _cache.DiskCache(cache_dir), skip_bad)
    report = loocv_records(records, target, config, shared_dictionary)
    table = format_table([(target, report)])
    paths = {}
    if out_dir is not None:
        paths = write_report(out_dir, target, report, table, config, shared_dictionary, figures)
    return EvaluateResult(report, table, paths)


def write_report(out_dir, target, report: EvalReport, table: str, config, shared_dictionary, figures=True):
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, target)
    doc = report.to_dict()
    doc["target"] = target
    doc["config"] = config.to_dict()
    doc["shared_dictionary"] = bool(shared_dictionary)
    paths = {"json": stem + "_loocv.json", "table": stem + "_loocv.txt", "csv": stem + "_loocv.csv"}
    _cache.atomic_write(paths["json"], (json.dumps(doc, indent=1) + "\n").encode())
    _cache.atomic_write(paths["table"], table.encode())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mesh_path", "y", "yhat", "residual"])
    for lab, a, b in zip(report.labels, report.y, report.yhat):
        w.writerow([lab, _fmt(a), _fmt(b), _fmt(b - a)])
    _cache.atomic_write(paths["csv"], buf.getvalue().encode())
    if figures:
        from . import plotting

        paths["parity"] = plotting.parity_plot(report, stem + "_parity.png", title=target)
        paths["residuals"] = plotting.residual_plot(report, stem + "_residuals.png", title=target)
    return paths


# ---------------------------------------------------------------------------
# synthetic data


SYNTH_TARGETS = ("ham_kg", "loin_kg")
SYNTH_AXES = (60.0, 19.0, 12.0)  # cm
# bump centres: both ends of the long axis and the top, tilted off the symmetry planes
_LANDMARKS = tuple(np.array(v) / np.linalg.norm(v) for v in ([1.0, 0.0, 0.3], [-1.0, 0.0, 0.3], [0.0, 0.3, 1.0]))


def synth_radius(directions, axes, bumps):
    """Radial distance of a bumpy ellipsoid along unit ``directions``."""
    a, b, c = axes
    x, y, z = directions.T
    r = 1.0 / np.sqrt((x / a) ** 2 + (y / b) ** 2 + (z / c) ** 2)
    factor = np.ones(len(directions))
    for centre, amp, width in bumps:
        ang = np.arccos(np.clip(directions @ centre, -1.0, 1.0))
        factor += amp * np.exp(-0.5 * (ang / width) ** 2)
    return r * factor


def cmd_synth(n: int, seed: int, out_dir, noise: float = 0.0, vertices: int = 3600):
    """Write ``n`` bumpy-ellipsoid OBJ meshes and a manifest with known targets.

    Each body is a common size factor ``s ~ U(0.8, 1.2)`` times the base
    semi-axes ``SYNTH_AXES``, with an independent +-5% jitter per axis. Three
    Gaussian bumps sit at fixed landmark directions with random amplitudes,
    so every mesh has the same layout with different proportions.

    Targets are smooth functions of the generating parameters::

        ham_kg  = 2.2e-4 * V + 0.06 * a
        loin_kg = 1.1e-4 * V + 0.10 * b

    with ``V`` the enclosed volume (cm^3) of the generated mesh and ``a``, ``b``
    its two longest semi-axes. ``noise`` multiplies each target by
    ``1 + noise * N(0, 1)``. The carcass weight is ``V`` times a per-mesh density.
    """
    if n < 4:
        raise ArgumentError(f"need at least 4 meshes, got {n}")
    if vertices < 12:
        raise ArgumentError("vertices must be >= 12")
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(out_dir, "meshes"), exist_ok=True)
    template = sphere_mesh(vertices)
    directions = fibonacci_directions(vertices)
    rows, params = [], []
    for i in range(n):
        size = rng.uniform(0.8, 1.2)
        a, b, c = (size * base * rng.uniform(0.95, 1.05) for base in SYNTH_AXES)
        density = rng.uniform(0.95e-3, 1.05e-3)
        bumps = [(d, rng.uniform(0.02, 0.06), 0.35) for d in _LANDMARKS]
        e1, e2 = rng.standard_normal(2)
        verts = directions * synth_radius(directions, (a, b, c), bumps)[:, None]
        mesh = TriangleMesh(verts, template.faces)
        vol = volume(mesh)
        ham = (2.2e-4 * vol + 0.06 * a) * (1.0 + noise * e1)
        loin = (1.1e-4 * vol + 0.10 * b) * (1.0 + noise * e2)
        rel = f"meshes/synth_{i:03d}.obj"
        save_obj(mesh, os.path.join(out_dir, rel))
        rows.append(ManifestRow(rel, rel, density * vol, {"ham_kg": ham, "loin_kg": loin}))
        params.append((rel, a, b, c, density, vol))
    manifest_path = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest_path, rows, SYNTH_TARGETS)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mesh_path", "a", "b", "c", "density", "volume"])
    for p in params:
        w.writerow([p[0]] + [_fmt(x) for x in p[1:]])
    _cache.atomic_write(os.path.join(out_dir, "params.csv"), buf.getvalue().encode())
    return manifest_path
