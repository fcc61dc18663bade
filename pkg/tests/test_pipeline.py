import csv
import filecmp
import json
import os
import shutil

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from spectralweight import pipeline as P
from spectralweight.errors import ArgumentError, ContractError, StructuralError, VersionError

SMALL = P.PipelineConfig(target_vertices=250, eig_count=60)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth10")
    manifest = P.cmd_synth(10, seed=3, out_dir=root, vertices=300)
    return root, manifest


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- config and manifest


def test_default_config_values():
    cfg = P.PipelineConfig()
    assert (cfg.target_vertices, cfg.eig_count, cfg.resolution, cfg.dictionary_k, cfg.pls_components) == (
        3000, 301, 2, 32, 4)
    assert cfg.signature_size == 5


def test_config_round_trip_and_unknown_keys(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL.to_dict()))
    assert P.PipelineConfig.load(path) == SMALL
    with pytest.raises(ArgumentError, match="unknown config"):
        P.PipelineConfig.from_dict({"dictionary_size": 3})
    with pytest.raises(ArgumentError):
        P.PipelineConfig(dictionary_k=5)


def test_missing_file_names_the_row(dataset, tmp_path):
    root, manifest = dataset
    rows = _rows(manifest)
    rows[4][0] = "meshes/nope.obj"
    bad = root / "bad_manifest.csv"
    with open(bad, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(P.ManifestError, match=r"row 5: .*nope\.obj"):
        P.load_manifest(bad)


@pytest.mark.parametrize("edit, message", [
    (lambda r: r[1].__setitem__(1, "-3"), "positive"),
    (lambda r: r[2].__setitem__(0, r[1][0]), "duplicate"),
    (lambda r: r[1].__setitem__(2, "abc"), "not a number"),
])
def test_manifest_validation(dataset, edit, message):
    root, manifest = dataset
    rows = _rows(manifest)
    edit(rows)
    bad = root / "edited.csv"
    with open(bad, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    with pytest.raises(P.ManifestError, match=message):
        P.load_manifest(bad)


# ---------------------------------------------------------------- synth


def test_synth_is_byte_identical(tmp_path):
    a = P.cmd_synth(20, seed=7, out_dir=tmp_path / "a", vertices=200)
    b = P.cmd_synth(20, seed=7, out_dir=tmp_path / "b", vertices=200)
    assert filecmp.cmp(a, b, shallow=False)
    for name in sorted(os.listdir(tmp_path / "a" / "meshes")):
        assert filecmp.cmp(tmp_path / "a" / "meshes" / name, tmp_path / "b" / "meshes" / name, shallow=False)
    c = P.cmd_synth(20, seed=8, out_dir=tmp_path / "c", vertices=200)
    assert not filecmp.cmp(a, c, shallow=False)


def test_synth_rejects_small_n(tmp_path):
    with pytest.raises(ArgumentError):
        P.cmd_synth(3, seed=0, out_dir=tmp_path)


def test_synth_targets_follow_their_formula(dataset):
    root, manifest = dataset
    m = P.load_manifest(manifest)
    with open(root / "params.csv", newline="") as fh:
        params = {r["mesh_path"]: r for r in csv.DictReader(fh)}
    for row in m.rows:
        p = params[row.mesh_path]
        vol, a, b = float(p["volume"]), float(p["a"]), float(p["b"])
        assert_allclose(row.targets["ham_kg"], 2.2e-4 * vol + 0.06 * a, rtol=1e-12)
        assert_allclose(row.targets["loin_kg"], 1.1e-4 * vol + 0.10 * b, rtol=1e-12)
        assert_allclose(row.carcass_weight / vol, float(p["density"]), rtol=1e-12)


# ---------------------------------------------------------------- extract


@pytest.fixture(scope="module")
def extracted(dataset, tmp_path_factory):
    root, manifest = dataset
    out = tmp_path_factory.mktemp("extract")
    cache = out / "cache"
    first = P.cmd_extract(manifest, SMALL, out / "f1.csv", cache)
    second = P.cmd_extract(manifest, SMALL, out / "f2.csv", cache)
    return first, second, out


def test_extract_shape(extracted):
    first, _, _ = extracted
    names, X, targets, meta, paths = P.read_features(first.features_path)
    assert X.shape == (10, 35)
    assert names[-3:] == ["geodesic_diameter", "volume", "carcass_weight"]
    assert paths == sorted(paths)
    assert set(targets) == {"ham_kg", "loin_kg"}
    assert meta["config"] == SMALL.to_dict()


def test_extract_default_config_width(dataset, tmp_path):
    # the column count depends on k only, so a reduced eigen count keeps this quick
    _, manifest = dataset
    res = P.cmd_extract(manifest, P.PipelineConfig(target_vertices=250, eig_count=40), tmp_path / "f.csv")
    _, X, _, _, _ = P.read_features(res.features_path)
    assert X.shape == (10, 32 + 3)


def test_rerun_is_identical_with_cache_hits(extracted):
    first, second, _ = extracted
    assert first.cache_hits == 0 and first.cache_misses > 0
    assert second.cache_misses == 0 and second.cache_hits == first.cache_misses
    assert filecmp.cmp(first.features_path, second.features_path, shallow=False)
    assert filecmp.cmp(first.meta_path, second.meta_path, shallow=False)


def test_cache_transparency(dataset, extracted, tmp_path):
    first, _, _ = extracted
    _, manifest = dataset
    nocache = P.cmd_extract(manifest, SMALL, tmp_path / "nc.csv", None)
    assert filecmp.cmp(first.features_path, nocache.features_path, shallow=False)


def test_bad_mesh_aborts_or_is_skipped(dataset, tmp_path):
    root, manifest = dataset
    work = tmp_path / "ds"
    shutil.copytree(root / "meshes", work / "meshes")
    shutil.copy(manifest, work / "manifest.csv")
    victim = sorted(os.listdir(work / "meshes"))[2]
    (work / "meshes" / victim).write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n")
    with pytest.raises(StructuralError, match=victim):
        P.cmd_extract(work / "manifest.csv", SMALL, tmp_path / "x.csv")
    res = P.cmd_extract(work / "manifest.csv", SMALL, tmp_path / "y.csv", skip_bad=True)
    assert res.n == 9 and len(res.failures) == 1 and victim in res.failures[0][0]


# ---------------------------------------------------------------- train and predict


@pytest.fixture(scope="module")
def bundle_path(extracted):
    first, _, out = extracted
    path = out / "model.json"
    P.cmd_train(first.features_path, "ham_kg", path)
    return path


def test_train_round_trip(extracted, bundle_path):
    first, _, _ = extracted
    bundle = P.ModelBundle.load(bundle_path)
    _, X, targets, _, _ = P.read_features(first.features_path)
    fresh = P.cmd_train(first.features_path, "ham_kg", bundle_path.parent / "again.json")
    assert_allclose(bundle.model.predict(X), fresh.model.predict(X), rtol=0, atol=1e-12)
    assert bundle.target == "ham_kg" and bundle.model.n_components == 4


def test_train_unknown_column(extracted, tmp_path):
    with pytest.raises(ArgumentError, match="unknown target"):
        P.cmd_train(extracted[0].features_path, "belly_kg", tmp_path / "m.json")


@pytest.mark.parametrize("mangle", [
    lambda t: t[: len(t) // 2],
    lambda t: t.replace('"version": 1', '"version": 7', 1),
    lambda t: "\x00\x01garbage",
])
def test_corrupt_bundle_is_version_error(bundle_path, tmp_path, mangle):
    bad = tmp_path / "bad.json"
    bad.write_text(mangle(bundle_path.read_text()))
    with pytest.raises(VersionError):
        P.ModelBundle.load(bad)


def test_predict_training_mesh_matches_fit(dataset, extracted, bundle_path):
    root, manifest = dataset
    first, _, out = extracted
    _, X, _, _, paths = P.read_features(first.features_path)
    bundle = P.ModelBundle.load(bundle_path)
    m = P.load_manifest(manifest)
    row = next(r for r in m.rows if r.mesh_path == paths[3])
    a = P.cmd_predict(bundle_path, row.resolved, row.carcass_weight, cache_dir=out / "cache")
    b = P.cmd_predict(bundle_path, row.resolved, row.carcass_weight, cache_dir=out / "cache")
    assert a == b
    assert_allclose(a, bundle.model.predict(X[3]), rtol=1e-9)


def test_predict_contract_mismatch(dataset, bundle_path):
    root, manifest = dataset
    mesh = P.load_manifest(manifest).rows[0].resolved
    with pytest.raises(ContractError):
        P.cmd_predict(bundle_path, mesh, 80.0, SMALL.replace(dictionary_k=16))
    with pytest.raises(ContractError):
        P.cmd_predict(bundle_path, mesh, 80.0, SMALL.replace(resolution=3, dictionary_k=64))


def test_bundle_with_wrong_feature_count_rejected(bundle_path, tmp_path):
    doc = json.loads(bundle_path.read_text())
    doc["feature_columns"] = doc["feature_columns"][1:]
    bad = tmp_path / "short.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ContractError):
        P.ModelBundle.load(bad)


# ---------------------------------------------------------------- evaluate


def _write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def test_evaluate_invariant_to_row_order(dataset, extracted, tmp_path):
    root, manifest = dataset
    cache = extracted[2] / "cache"
    rows = _rows(manifest)
    body = rows[1:]
    order = np.random.default_rng(1).permutation(len(body))
    shuffled = root / "shuffled.csv"
    _write_manifest(shuffled, [rows[0]] + [body[i] for i in order])
    a = P.cmd_evaluate(manifest, "ham_kg", SMALL, tmp_path / "a", cache, figures=False)
    b = P.cmd_evaluate(shuffled, "ham_kg", SMALL, tmp_path / "b", cache, figures=False)
    assert a.table == b.table
    assert_array_equal(a.report.yhat, b.report.yhat)
    for kind in ("json", "csv", "table"):
        assert filecmp.cmp(a.paths[kind], b.paths[kind], shallow=False)


def test_evaluate_constant_target(dataset, extracted):
    root, manifest = dataset
    rows = _rows(manifest)
    for r in rows[1:]:
        r[2] = "5.0"
    flat = root / "flat.csv"
    _write_manifest(flat, rows)
    with pytest.raises(ArgumentError, match="constant"):
        P.cmd_evaluate(flat, "ham_kg", SMALL, cache_dir=extracted[2] / "cache")


def test_evaluate_needs_four_meshes(dataset):
    root, manifest = dataset
    rows = _rows(manifest)[:4]
    small = root / "three.csv"
    _write_manifest(small, rows)
    with pytest.raises(ArgumentError, match="at least 4"):
        P.cmd_evaluate(small, "ham_kg", SMALL)


def test_evaluate_report_files(dataset, extracted, tmp_path):
    _, manifest = dataset
    res = P.cmd_evaluate(manifest, "loin_kg", SMALL, tmp_path / "rep", extracted[2] / "cache",
                         shared_dictionary=True)
    assert set(res.paths) == {"json", "table", "csv", "parity", "residuals"}
    for kind in ("parity", "residuals"):
        with open(res.paths[kind], "rb") as fh:
            assert fh.read(8) == b"\x89PNG\r\n\x1a\n"
    doc = json.loads(open(res.paths["json"]).read())
    assert doc["shared_dictionary"] is True and doc["n"] == 10
    assert_allclose(doc["r2"], res.report.r2)
    assert res.table.splitlines()[2].split()[0] == "loin_kg"


def test_per_fold_dictionary_never_sees_held_out_mesh(dataset, extracted, monkeypatch):
    _, manifest = dataset
    records, _ = P.extract_records(P.load_manifest(manifest), SMALL, P._cache.DiskCache(extracted[2] / "cache"))
    seen = []
    real = P.fit_dictionary

    def spy(recs, config):
        seen.append({r.name for r in recs})
        return real(recs, config)

    monkeypatch.setattr(P, "fit_dictionary", spy)
    P.loocv_records(records, "ham_kg", SMALL)
    names = [r.name for r in records]
    assert len(seen) == len(names)
    for held, used in zip(names, seen):
        assert held not in used and len(used) == len(names) - 1
