import numpy as np
import pytest

from shmkit import artifacts
from shmkit.errors import DataError
from shmkit.fields import fit_pca, minmax_normalize
from shmkit.hmc import PosteriorEnsemble
from shmkit.network import BnnParams, NetArchitecture, init_params
from shmkit.synthetic import NoiseConfig, SpecimenSpec, generate_dataset


def make_basis(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, 12))
    xn, lo, hi = minmax_normalize(x)
    return fit_pca(xn, 4, rows=3, cols=4, norm_min=lo, norm_max=hi)


class TestBasisFile:
    def test_round_trip(self, tmp_path):
        basis = make_basis()
        path = tmp_path / "basis.json"
        artifacts.save_basis(basis, path)
        loaded = artifacts.load_basis(path)
        assert loaded.k == basis.k and loaded.p == basis.p
        assert np.array_equal(loaded.v_r, basis.v_r)
        assert np.array_equal(loaded.singular_values, basis.singular_values)
        assert np.array_equal(loaded.norm_min, basis.norm_min)
        assert np.array_equal(loaded.norm_max, basis.norm_max)

    def test_byte_deterministic(self, tmp_path):
        basis = make_basis()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        artifacts.save_basis(basis, a)
        artifacts.save_basis(basis, b)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            artifacts.load_basis(tmp_path / "nope.json")

    def test_invalid_content(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"k": 2}')
        with pytest.raises(DataError):
            artifacts.load_basis(path)


class TestDatasetFiles:
    def test_round_trip(self, tmp_path):
        spec = SpecimenSpec(label="c05", crack_length_mm=5.0)
        ds = generate_dataset(spec, 12, NoiseConfig(), seed=3)
        artifacts.save_dataset(ds, tmp_path / "d", "train")
        loaded, meta = artifacts.load_dataset(tmp_path / "d")
        assert np.array_equal(loaded.fields, ds.fields)
        assert np.array_equal(loaded.gauges, ds.gauges)
        assert np.array_equal(loaded.phases, ds.phases)
        assert loaded.dataset_id == ds.dataset_id
        assert loaded.spec == ds.spec
        assert meta["role"] == "train"

    def test_byte_deterministic(self, tmp_path):
        spec = SpecimenSpec(label="c00")
        ds = generate_dataset(spec, 8, NoiseConfig(), seed=1)
        artifacts.save_dataset(ds, tmp_path / "a", "train")
        artifacts.save_dataset(ds, tmp_path / "b", "train")
        assert (tmp_path / "a/frames.csv").read_bytes() == (tmp_path / "b/frames.csv").read_bytes()
        assert (tmp_path / "a/dataset.json").read_bytes() == (tmp_path / "b/dataset.json").read_bytes()

    def test_missing_frames(self, tmp_path):
        spec = SpecimenSpec(label="c00")
        ds = generate_dataset(spec, 5, NoiseConfig(), seed=1)
        artifacts.save_dataset(ds, tmp_path / "d", "test")
        (tmp_path / "d/frames.csv").unlink()
        with pytest.raises(DataError):
            artifacts.load_dataset(tmp_path / "d")


class TestModelFile:
    def test_round_trip(self, tmp_path):
        arch = NetArchitecture(12, (10, 10), 4)
        params = init_params(arch, seed=2)
        params.log_var[:] = [-1.0, -2.0, 0.5, 0.0]
        path = tmp_path / "model.json"
        artifacts.save_model(path, arch, params, seed=2,
                             training={"lr": 0.001}, basis_fingerprint="abc")
        arch2, params2, doc = artifacts.load_model(path)
        assert arch2 == arch
        assert np.array_equal(params2.theta, params.theta)
        assert np.array_equal(params2.log_var, params.log_var)
        assert doc["basis_fingerprint"] == "abc"
        assert np.allclose(doc["sigma_hat"], np.exp(0.5 * params.log_var))

    def test_dimension_check(self, tmp_path):
        arch = NetArchitecture(12, (10, 10), 4)
        params = init_params(arch, seed=2)
        path = tmp_path / "model.json"
        artifacts.save_model(path, arch, params, seed=2, training={},
                             basis_fingerprint="x")
        doc = artifacts.read_json(path)
        doc["theta"] = doc["theta"][:-1]
        artifacts.write_json(path, doc)
        with pytest.raises(DataError):
            artifacts.load_model(path)


class TestEnsembleFile:
    def make_ensemble(self, m=6, d=20, seed=0):
        rng = np.random.default_rng(seed)
        return PosteriorEnsemble(
            samples=rng.normal(size=(m, d)).astype(np.float32),
            accept_rate=0.61,
            step_size_final=1.2e-5,
            energy_trace=rng.normal(size=10),
            divergences=2,
            seed=seed,
            burn_in_accept_rate=0.55,
        )

    def test_round_trip(self, tmp_path):
        ens = self.make_ensemble()
        path = tmp_path / "ens.bin"
        artifacts.save_ensemble(path, ens, {"model_fingerprint": "mf"})
        samples, sidecar = artifacts.load_ensemble(path)
        assert samples.dtype == np.float32
        assert np.array_equal(samples, ens.samples)
        assert sidecar["accept_rate"] == 0.61
        assert sidecar["model_fingerprint"] == "mf"
        assert sidecar["divergences"] == 2

    def test_header_magic(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataError, match="not an ensemble"):
            artifacts.load_ensemble(path)

    def test_truncated_payload(self, tmp_path):
        ens = self.make_ensemble()
        path = tmp_path / "ens.bin"
        artifacts.save_ensemble(path, ens, {})
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(DataError, match="truncated"):
            artifacts.load_ensemble(path)

    def test_byte_deterministic(self, tmp_path):
        ens = self.make_ensemble()
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        artifacts.save_ensemble(a, ens, {"k": 1})
        artifacts.save_ensemble(b, ens, {"k": 1})
        assert a.read_bytes() == b.read_bytes()
        assert a.with_suffix(".bin.json").read_bytes() == b.with_suffix(".bin.json").read_bytes()


class TestFingerprint:
    def test_stable_and_sensitive(self, tmp_path):
        f = tmp_path / "x.txt"
        f.write_text("hello")
        a = artifacts.file_fingerprint(f)
        assert a == artifacts.file_fingerprint(f)
        f.write_text("hello!")
        assert artifacts.file_fingerprint(f) != a


class TestFieldCsv:
    def test_grid_written(self, tmp_path):
        grid = np.arange(6.0).reshape(2, 3)
        path = tmp_path / "f.csv"
        artifacts.write_field_csv(path, grid)
        back = np.loadtxt(path, delimiter=",")
        assert np.array_equal(back, grid)


class TestLossCsv:
    def test_rows(self, tmp_path):
        path = tmp_path / "loss.csv"
        artifacts.write_loss_csv(path, [0.5, 0.4], [0.6, 0.5])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 3

    def test_empty_history(self, tmp_path):
        path = tmp_path / "loss.csv"
        artifacts.write_loss_csv(path, [], [])
        assert path.read_text().strip().splitlines() == ["epoch,train_loss,val_loss"]
