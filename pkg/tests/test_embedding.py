"""Embedding backends, the cosine metric, PCA projection, vector files."""

import logging
import math

import numpy as np
import pytest

from conftest import make_dialogue, unit_rows
from intent_landscape.corpus import CUSTOMER, render_context
from intent_landscape.errors import BackendConfigError
from intent_landscape.extraction import CandidateSpan
from intent_landscape.embedding import (
    EmbeddedSpan,
    FileEmbeddingBackend,
    MockEmbeddingBackend,
    Projection2D,
    cosine_distance,
    embed_spans,
    project_2d,
    read_coordinates,
    read_vector_file,
    write_coordinates,
    write_vector_file,
)
from intent_landscape.validation import ValidatedSpan


def valid_span(did: str, rank: int, text: str) -> ValidatedSpan:
    c = CandidateSpan(did, rank, text, 0.9, 0, len(text), False)
    return ValidatedSpan(c, True, True, True, source_turn=0)


class TestCosineDistance:
    def test_identical_directions(self):
        assert cosine_distance([1.0, 0.0], [2.0, 0.0]) == 0.0

    def test_orthogonal(self):
        assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_antipodal(self):
        assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == 2.0

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            cosine_distance([0.0, 0.0], [1.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            d = cosine_distance(a, b)
            assert math.isclose(d, cosine_distance(3.7 * a, 0.01 * b), abs_tol=1e-12)

    def test_equals_half_squared_euclidean_on_unit_vectors(self):
        rng = np.random.default_rng(4)
        rows = unit_rows(rng, 40, 5)
        for i in range(0, 40, 2):
            a, b = rows[i], rows[i + 1]
            expected = float(np.sum((a - b) ** 2)) / 2.0
            assert math.isclose(cosine_distance(a, b), expected, abs_tol=1e-9)


class TestMockBackend:
    def test_same_text_same_vector(self):
        backend = MockEmbeddingBackend(dim=8)
        a = backend.embed([("d", 0)], ["i want a flight"])[0]
        b = backend.embed([("e", 3)], ["i want a flight"])[0]
        np.testing.assert_array_equal(a, b)

    def test_family_members_are_close_strangers_far(self):
        family = {"a1": "fam_a", "a2": "fam_a", "b1": "fam_b"}
        backend = MockEmbeddingBackend(dim=16, family_of=family.get, spread=0.05)
        v = backend.embed([("d", i) for i in range(3)], ["a1", "a2", "b1"])
        assert cosine_distance(v[0], v[1]) < 0.05
        assert cosine_distance(v[0], v[2]) > 0.3

    def test_vectors_are_unit_norm(self):
        backend = MockEmbeddingBackend(dim=8)
        for v in backend.embed([("d", 0)], ["anything at all"]):
            assert math.isclose(float(np.linalg.norm(v)), 1.0, abs_tol=1e-12)


class TestEmbedSpans:
    def test_output_aligned_and_normalized(self):
        spans = [valid_span("d1", 0, "book a flight"), valid_span("d2", 0, "check balance")]
        out = embed_spans(spans, MockEmbeddingBackend(dim=8))
        assert [e.span_ref for e in out] == [("d1", 0), ("d2", 0)]
        for e in out:
            assert math.isclose(float(np.linalg.norm(e.vector)), 1.0, abs_tol=1e-9)

    def test_count_mismatch_rejected(self):
        class ShortBackend:
            def embed(self, refs, texts):
                return [np.ones(4)]

        spans = [valid_span("d1", 0, "a b"), valid_span("d2", 0, "c d")]
        with pytest.raises(BackendConfigError):
            embed_spans(spans, ShortBackend())

    def test_mixed_dimensions_rejected(self):
        class RaggedBackend:
            def embed(self, refs, texts):
                return [np.ones(4), np.ones(5)]

        spans = [valid_span("d1", 0, "a b"), valid_span("d2", 0, "c d")]
        with pytest.raises(BackendConfigError):
            embed_spans(spans, RaggedBackend())

    def test_zero_vector_rejected(self):
        class ZeroBackend:
            def embed(self, refs, texts):
                return [np.zeros(4) for _ in texts]

        with pytest.raises(BackendConfigError):
            embed_spans([valid_span("d1", 0, "a b")], ZeroBackend())

    def test_embedded_span_norm_flag_enforced(self):
        with pytest.raises(ValueError):
            EmbeddedSpan(("d", 0), np.array([2.0, 0.0]))


class TestVectorFile:
    def test_round_trip_is_bit_identical(self, tmp_path):
        rng = np.random.default_rng(11)
        matrix = unit_rows(rng, 7, 5).astype("<f4").astype(np.float64)
        refs = [(f"d{i}", i % 3) for i in range(7)]
        path = tmp_path / "vectors.bin"
        write_vector_file(path, refs, matrix)
        got_refs, got = read_vector_file(path)
        assert got_refs == refs
        np.testing.assert_array_equal(got, matrix)

    def test_write_twice_same_bytes(self, tmp_path):
        rng = np.random.default_rng(12)
        matrix = unit_rows(rng, 4, 3)
        refs = [(f"d{i}", 0) for i in range(4)]
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        write_vector_file(a, refs, matrix)
        write_vector_file(b, refs, matrix)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "vectors.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            read_vector_file(path)

    def test_truncated_body_rejected(self, tmp_path):
        rng = np.random.default_rng(13)
        path = tmp_path / "vectors.bin"
        write_vector_file(path, [("d", 0)], unit_rows(rng, 1, 4))
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(ValueError):
            read_vector_file(path)

    def test_sidecar_count_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(14)
        path = tmp_path / "vectors.bin"
        write_vector_file(path, [("d", 0), ("d", 1)], unit_rows(rng, 2, 4))
        sidecar = tmp_path / "vectors.bin.refs.jsonl"
        lines = sidecar.read_text().splitlines()
        sidecar.write_text(lines[0] + "\n")
        with pytest.raises(ValueError):
            read_vector_file(path)

    def test_file_backend_serves_by_ref(self, tmp_path):
        rng = np.random.default_rng(15)
        matrix = unit_rows(rng, 3, 4)
        refs = [("d1", 0), ("d2", 0), ("d3", 1)]
        path = tmp_path / "vectors.bin"
        write_vector_file(path, refs, matrix)
        backend = FileEmbeddingBackend(path)
        out = backend.embed([("d3", 1), ("d1", 0)], ["x", "y"])
        np.testing.assert_allclose(out[0], matrix[2], atol=1e-7)
        np.testing.assert_allclose(out[1], matrix[0], atol=1e-7)

    def test_file_backend_missing_ref_rejected(self, tmp_path):
        rng = np.random.default_rng(16)
        path = tmp_path / "vectors.bin"
        write_vector_file(path, [("d1", 0)], unit_rows(rng, 1, 4))
        with pytest.raises(BackendConfigError):
            FileEmbeddingBackend(path).embed([("ghost", 0)], ["x"])


class TestProjection:
    def test_projected_variance_matches_top_eigenvalues(self):
        rng = np.random.default_rng(21)
        matrix = rng.normal(size=(100, 8))
        refs = [(f"d{i}", 0) for i in range(100)]
        coords = np.array([(p.x, p.y) for p in project_2d(list(matrix), refs)])
        centered = matrix - matrix.mean(axis=0)
        eigvals = np.sort(np.linalg.eigvalsh(centered.T @ centered))[::-1]
        proj_ss = np.sum(coords**2, axis=0)
        np.testing.assert_allclose(np.sort(proj_ss)[::-1], eigvals[:2], atol=1e-9)

    def test_2d_input_preserves_pairwise_distances(self):
        rng = np.random.default_rng(22)
        matrix = rng.normal(size=(20, 2))
        refs = [(f"d{i}", 0) for i in range(20)]
        coords = np.array([(p.x, p.y) for p in project_2d(list(matrix), refs)])
        for i in range(20):
            for j in range(i + 1, 20):
                orig = np.linalg.norm(matrix[i] - matrix[j])
                proj = np.linalg.norm(coords[i] - coords[j])
                assert math.isclose(orig, proj, abs_tol=1e-9)

    def test_deterministic_sign_convention(self):
        rng = np.random.default_rng(23)
        matrix = list(rng.normal(size=(30, 6)))
        refs = [(f"d{i}", 0) for i in range(30)]
        assert project_2d(matrix, refs) == project_2d(matrix, refs)

    def test_identical_points_project_to_zero_with_warning(self, caplog):
        matrix = [np.ones(4)] * 5
        refs = [(f"d{i}", 0) for i in range(5)]
        with caplog.at_level(logging.WARNING):
            coords = project_2d(matrix, refs)
        assert all((p.x, p.y) == (0.0, 0.0) for p in coords)
        assert any("rank-deficient" in r.message for r in caplog.records)

    def test_fewer_than_two_vectors_rejected(self):
        with pytest.raises(ValueError):
            project_2d([np.ones(4)], [("d", 0)])

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(24)
        matrix = rng.normal(size=(12, 5))
        refs = [(f"d{i}", 0) for i in range(12)]
        forward = project_2d(list(matrix), refs)
        backward = project_2d(list(matrix[::-1]), refs[::-1])
        by_ref_f = {p.span_ref: (p.x, p.y) for p in forward}
        by_ref_b = {p.span_ref: (p.x, p.y) for p in backward}
        for ref in by_ref_f:
            assert math.isclose(by_ref_f[ref][0], by_ref_b[ref][0], abs_tol=1e-9)
            assert math.isclose(by_ref_f[ref][1], by_ref_b[ref][1], abs_tol=1e-9)

    def test_coordinates_round_trip(self, tmp_path):
        projections = [Projection2D(("d1", 0), 0.5, -1.25), Projection2D(("d2", 3), 0.0, 2.0)]
        path = tmp_path / "coordinates.jsonl"
        write_coordinates(path, projections)
        assert read_coordinates(path) == projections

    def test_non_finite_projection_rejected(self):
        with pytest.raises(ValueError):
            Projection2D(("d", 0), float("nan"), 0.0)
