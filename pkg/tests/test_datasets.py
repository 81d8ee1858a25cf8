import numpy as np
import pytest

from causaltransport.datasets import (
    MAGIC,
    DatasetSpec,
    derangement,
    gen_cmnist_like,
    gen_waterbird_like,
    load_split,
    save_split,
    waterbird_spec,
)
from causaltransport.errors import CorruptFileError, SpecError, VersionError
from causaltransport.neural.mlp import TrainConfig, accuracy
from causaltransport.neural.readout import train_erm


@pytest.fixture(scope="module")
def cmnist():
    return gen_cmnist_like(DatasetSpec(), seed=0)


@pytest.fixture(scope="module")
def birds():
    return gen_waterbird_like(waterbird_spec(), seed=0)


def pairing_rate(split):
    # counted directly: attribute equal to the label under the identity pairing
    return float(np.mean([a == y for a, y in zip(split.attrs.tolist(), split.labels.tolist())]))


class TestCmnist:
    def test_train_pairing_rate(self, cmnist):
        assert abs(pairing_rate(cmnist[0]) - 0.95) <= 0.02
        assert abs(cmnist[0].pairing_rate() - 0.95) <= 0.02

    def test_independent_case(self):
        train, _, _ = gen_cmnist_like(DatasetSpec(rho_train=0.1, n_train=10000, n_val=10, n_ood=10), seed=1)
        assert abs(pairing_rate(train) - 0.1) <= 0.02

    def test_ood_shift(self, cmnist):
        train, _, ood = cmnist
        assert pairing_rate(ood) == 0.0
        assert abs(train.pairing_rate() - ood.pairing_rate()) >= 0.5
        assert ood.pairing_rate(derangement(10)) == 1.0

    def test_ood_probability_mode(self):
        _, _, ood = gen_cmnist_like(DatasetSpec(rho_ood=0.3, n_train=10, n_val=10, n_ood=8000), seed=2)
        assert abs(pairing_rate(ood) - 0.3) <= 0.02

    def test_deterministic(self, cmnist):
        again = gen_cmnist_like(DatasetSpec(), seed=0)
        for a, b in zip(cmnist, again):
            assert np.array_equal(a.images, b.images)
            assert np.array_equal(a.labels, b.labels)
            assert np.array_equal(a.attrs, b.attrs)

    def test_seed_changes_data(self, cmnist):
        other = gen_cmnist_like(DatasetSpec(), seed=1)
        assert not np.array_equal(cmnist[0].images, other[0].images)

    def test_disjoint_indices(self, cmnist):
        sets = [set(s.indices.tolist()) for s in cmnist]
        assert sum(len(s) for s in sets) == len(set().union(*sets))

    def test_ranges(self, cmnist):
        for split in cmnist:
            assert split.images.min() >= 0.0 and split.images.max() <= 1.0
            assert split.labels.max() < 10
            assert split.images.shape[1:] == (16, 16, 3)

    @pytest.mark.parametrize("mode", ["foreground", "both"])
    def test_color_modes(self, mode):
        train, _, _ = gen_cmnist_like(DatasetSpec(color_mode=mode, n_train=50, n_val=5, n_ood=5, noise=0.0), 0)
        assert train.images.shape == (50, 16, 16, 3)

    @pytest.mark.parametrize("bad", [
        dict(n_classes=1), dict(rho_train=1.5), dict(rho_ood=-0.1), dict(n_train=0),
        dict(color_mode="stripes"), dict(kind="faces"), dict(noise=-1.0), dict(n_classes=11), dict(side=10),
    ])
    def test_invalid_spec(self, bad):
        with pytest.raises(SpecError):
            gen_cmnist_like(DatasetSpec(**bad), 0)


def test_derangement_has_no_fixed_point():
    for k in range(2, 12):
        d = derangement(k)
        assert sorted(d.tolist()) == list(range(k))
        assert np.all(d != np.arange(k))


class TestWaterbird:
    def test_balanced_ood_groups(self, birds):
        ood = birds[2]
        counts = [int(np.sum((ood.labels == y) & (ood.attrs == a))) for y in (0, 1) for a in (0, 1)]
        assert max(counts) - min(counts) <= 1

    def test_minority_share(self, birds):
        train = birds[0]
        minority = np.mean(train.labels != train.attrs)
        assert abs(minority - 0.05) <= 0.01

    def test_two_classes(self, birds):
        with pytest.raises(SpecError):
            gen_waterbird_like(waterbird_spec(n_classes=3), 0)

    def test_foreground_only_closes_gap(self):
        spec = waterbird_spec(foreground_only=True)
        train, val, ood = gen_waterbird_like(spec, 0)
        erm = train_erm(train.images, train.labels, TrainConfig(epochs=10), 2, val=(val.images, val.labels))
        id_acc = accuracy(erm.predict(val.images), val.labels)
        ood_acc = accuracy(erm.predict(ood.images), ood.labels)
        assert abs(id_acc - ood_acc) <= 0.05

    def test_foreground_only_background_is_constant(self):
        spec = waterbird_spec(foreground_only=True, noise=0.0, n_train=20, n_val=2, n_ood=4)
        train, _, _ = gen_waterbird_like(spec, 0)
        corners = train.images[:, 0, 0]
        assert np.all(corners == 0.5)


class TestFileFormat:
    def test_roundtrip(self, tmp_path, birds):
        path = tmp_path / "ood.ctds"
        save_split(birds[2], path)
        back = load_split(path)
        assert back.images.tobytes() == birds[2].images.tobytes()
        assert np.array_equal(back.labels, birds[2].labels)
        assert np.array_equal(back.attrs, birds[2].attrs)
        assert np.array_equal(back.indices, birds[2].indices)
        assert back.spec == birds[2].spec and back.seed == 0 and back.name == "ood"

    def test_header_layout(self, tmp_path, birds):
        path = tmp_path / "x.ctds"
        save_split(birds[1], path)
        blob = path.read_bytes()
        assert blob[:8] == MAGIC
        assert int.from_bytes(blob[8:10], "little") == 1

    def test_sidecar(self, tmp_path, birds):
        path = tmp_path / "x.ctds"
        save_split(birds[1], path)
        lines = (tmp_path / "x.ctds.csv").read_text().splitlines()
        assert lines[0] == "index,label,group"
        first = birds[1]
        assert lines[1] == f"{first.indices[0]},{first.labels[0]},{first.labels[0]}-{first.attrs[0]}"
        assert len(lines) == len(first) + 1

    def test_truncated(self, tmp_path, birds):
        path = tmp_path / "x.ctds"
        save_split(birds[1], path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CorruptFileError):
            load_split(path)

    def test_bit_flip(self, tmp_path, birds):
        path = tmp_path / "x.ctds"
        save_split(birds[1], path)
        blob = bytearray(path.read_bytes())
        blob[-3] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptFileError):
            load_split(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ctds"
        path.write_bytes(b"hello world, not a dataset")
        with pytest.raises(CorruptFileError):
            load_split(path)

    def test_version_mismatch(self, tmp_path, birds):
        path = tmp_path / "x.ctds"
        save_split(birds[1], path)
        blob = bytearray(path.read_bytes())
        blob[8:10] = (2).to_bytes(2, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            load_split(path)
