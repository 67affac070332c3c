"""Catalog CSV round-trips and the PCA feature reducer."""

import numpy as np
import pytest

from banditfm.catalog import (
    Catalog,
    PcaModel,
    SongFeatures,
    fit_pca,
    load_catalog,
    project,
    reduce_catalog,
    save_catalog,
)


def _write(path, text):
    path.write_text(text)
    return path


class TestCatalogIo:
    def test_three_row_readback(self, tmp_path):
        csv_path = _write(
            tmp_path / "cat.csv",
            "song_id,title,artist,f0,f1\n"
            "a1,Song One,Alpha,0.5,-1.25\n"
            "b2,Song Two,Beta,2.0,0.0\n"
            "c3,Song Three,Gamma,-0.75,3.5\n",
        )
        cat = load_catalog(csv_path)
        assert len(cat) == 3
        assert cat.p == 2
        assert [s.song_id for s in cat.songs] == ["a1", "b2", "c3"]
        assert cat.by_id("b2").title == "Song Two"
        assert cat.by_id("b2").artist == "Beta"
        np.testing.assert_array_equal(cat.by_id("a1").raw, [0.5, -1.25])
        np.testing.assert_array_equal(cat.feature_matrix[2], [-0.75, 3.5])

    def test_bad_cell_cites_row(self, tmp_path):
        csv_path = _write(
            tmp_path / "bad.csv",
            "song_id,title,artist,f0\na1,One,A,0.5\nb2,Two,B,oops\n",
        )
        with pytest.raises(ValueError, match=r":3"):
            load_catalog(csv_path)

    def test_header_only_rejected(self, tmp_path):
        csv_path = _write(tmp_path / "empty.csv", "song_id,title,artist,f0\n")
        with pytest.raises(ValueError, match="no rows"):
            load_catalog(csv_path)

    def test_missing_feature_columns_rejected(self, tmp_path):
        csv_path = _write(tmp_path / "nofeat.csv", "song_id,title,artist\na,One,A\n")
        with pytest.raises(ValueError, match="no feature columns"):
            load_catalog(csv_path)

    def test_wrong_header_rejected(self, tmp_path):
        csv_path = _write(tmp_path / "hdr.csv", "id,name,artist,f0\na,One,A,1.0\n")
        with pytest.raises(ValueError, match="header"):
            load_catalog(csv_path)

    def test_round_trip_bit_identical(self, tmp_path):
        """Floats are written with repr, so a save/load cycle changes nothing."""
        rng = np.random.default_rng(7)
        songs = tuple(
            SongFeatures(
                song_id=f"s{i}",
                title=f"T{i}",
                artist=f"A{i}",
                raw=rng.standard_normal(4),
                reduced=rng.standard_normal(4),
            )
            for i in range(6)
        )
        cat = Catalog(songs=songs, p=4)
        path = tmp_path / "rt.csv"
        save_catalog(cat, path, which="raw")
        back = load_catalog(path)
        for orig, loaded in zip(cat.songs, back.songs):
            assert orig.song_id == loaded.song_id
            np.testing.assert_array_equal(orig.raw, loaded.raw)

    def test_duplicate_ids_rejected(self):
        s = SongFeatures("dup", "T", "A", np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError, match="duplicate"):
            Catalog(songs=(s, s), p=2)

    def test_unknown_song_id(self):
        s = SongFeatures("x", "T", "A", np.zeros(2), np.zeros(2))
        cat = Catalog(songs=(s,), p=2)
        with pytest.raises(KeyError, match="nope"):
            cat.by_id("nope")


class TestPca:
    def test_rank_one_data_needs_one_component(self):
        """Collinear rows carry all variance on a single axis."""
        rng = np.random.default_rng(0)
        direction = np.array([1.0, 2.0, -1.0])
        data = rng.standard_normal(50)[:, None] * direction[None, :]
        model = fit_pca(data, variance_target=0.99)
        assert model.n_components == 1
        np.testing.assert_allclose(model.explained_variance_ratio[0], 1.0, atol=1e-12)

    def test_diagonal_direction_recovered(self):
        """Points spread along (1, 1) give (1, 1)/sqrt(2) as the leading axis."""
        rng = np.random.default_rng(1)
        u = rng.standard_normal(400)
        data = np.column_stack([u, u]) + 0.01 * rng.standard_normal((400, 2))
        model = fit_pca(data, variance_target=0.9)
        lead = model.components[0]
        np.testing.assert_allclose(np.abs(lead), [1 / np.sqrt(2)] * 2, atol=1e-3)

    def test_mean_projects_to_origin(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal((30, 5)) + 3.0
        model = fit_pca(data, variance_target=0.95)
        np.testing.assert_allclose(project(model, model.mean), 0.0, atol=1e-10)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((60, 6)) @ np.diag([3.0, 2.0, 1.5, 1.0, 0.5, 0.1])
        model = fit_pca(data, variance_target=0.99)
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(model.n_components), atol=1e-8)

    def test_projection_dim_mismatch(self):
        model = fit_pca(np.random.default_rng(4).standard_normal((10, 3)), 0.9)
        with pytest.raises(ValueError, match="dim"):
            project(model, np.zeros(5))

    def test_reconstruction_error_matches_discarded_variance(self):
        """Total squared reconstruction error equals the eigenmass left out."""
        rng = np.random.default_rng(5)
        data = rng.standard_normal((200, 8)) @ np.diag([4, 3, 2, 1.5, 1, 0.5, 0.2, 0.1])
        model = fit_pca(data, variance_target=0.8)
        centered = data - data.mean(axis=0)
        z = project(model, data)
        recon = z @ model.components
        err = np.sum((centered - recon) ** 2) / (len(data) - 1)

        cov = centered.T @ centered / (len(data) - 1)
        eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        discarded = eigvals[model.n_components :].sum()
        np.testing.assert_allclose(err, discarded, rtol=1e-8)

    def test_single_row_rejected(self):
        with pytest.raises(ValueError, match="two rows"):
            fit_pca(np.ones((1, 3)), 0.9)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="degenerate covariance"):
            fit_pca(np.ones((10, 3)), 0.9)

    def test_full_target_keeps_everything(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((40, 4))
        model = fit_pca(data, variance_target=1.0)
        assert model.n_components == 4

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        model = fit_pca(rng.standard_normal((25, 4)), 0.9)
        path = tmp_path / "pca.json"
        model.to_json(path)
        back = PcaModel.from_json(path)
        np.testing.assert_array_equal(model.mean, back.mean)
        np.testing.assert_array_equal(model.components, back.components)

    def test_reduce_catalog_projects_raw(self):
        rng = np.random.default_rng(9)
        raw = rng.standard_normal((12, 5))
        songs = tuple(
            SongFeatures(f"s{i}", f"T{i}", f"A{i}", raw[i], raw[i]) for i in range(12)
        )
        cat = Catalog(songs=songs, p=5)
        model = fit_pca(raw, variance_target=0.9)
        reduced = reduce_catalog(cat, model)
        assert reduced.p == model.n_components
        for i, s in enumerate(reduced.songs):
            np.testing.assert_allclose(s.reduced, project(model, raw[i]), atol=1e-12)
            np.testing.assert_array_equal(s.raw, raw[i])
