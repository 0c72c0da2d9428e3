import numpy as np
import pytest

from driftbench.curate import (
    BACKGROUND_CLASS,
    CurationSpec,
    EmbeddingFileError,
    EmbeddingRecord,
    ShortageError,
    assemble_background,
    cosine_rank,
    curated_samples,
    finalize_bucket,
    load_embedding_file,
    load_query_file,
    load_rejection_list,
    rank_all,
    select_labeled,
    write_class_table,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_embeddings(n, m, seed=0):
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((n, m))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return [EmbeddingRecord(id=i, vector=vecs[i]) for i in range(n)]


def five_id_universe():
    # id 2 tops both rankings; the others split cleanly between the two classes.
    vectors = {
        0: unit([0.6, -0.8]),
        1: unit([0.5, -0.866]),
        2: unit([1.0, 1.0]),
        3: unit([-0.8, 0.6]),
        4: unit([-0.866, 0.5]),
    }
    embeddings = [EmbeddingRecord(id=i, vector=vectors[i]) for i in sorted(vectors)]
    queries = (("a", unit([1.0, 0.0])), ("b", unit([0.0, 1.0])))
    return embeddings, queries


class TestCosineRank:
    def test_self_similarity_first(self):
        embeddings = random_embeddings(50, 8, seed=1)
        query = embeddings[17].vector
        ranking = cosine_rank(embeddings, query)
        assert ranking.ids[0] == 17
        assert ranking.score(17) == pytest.approx(1.0)

    def test_orthogonal_scores_zero(self):
        embeddings = [EmbeddingRecord(id=0, vector=np.array([1.0, 0.0]))]
        ranking = cosine_rank(embeddings, np.array([0.0, 1.0]))
        assert ranking.score(0) == pytest.approx(0.0)

    def test_matches_brute_force_sort(self):
        embeddings = random_embeddings(1000, 16, seed=2)
        query = unit(np.arange(16) - 7.5)
        ranking = cosine_rank(embeddings, query)
        scores = {e.id: float(e.vector @ query) for e in embeddings}
        expected = [i for i, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))]
        assert list(ranking.ids) == expected

    def test_ties_break_by_ascending_id(self):
        v = unit([1.0, 1.0])
        embeddings = [EmbeddingRecord(id=i, vector=v.copy()) for i in (5, 1, 3)]
        ranking = cosine_rank(embeddings, unit([1.0, 0.0]))
        assert list(ranking.ids) == [1, 3, 5]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_rank(random_embeddings(3, 4), np.zeros(5))


class TestSelectLabeled:
    def test_disjoint_top_lists_taken_verbatim(self):
        vecs = [unit([1, 0.1 * i]) for i in range(3)] + [unit([-1, 0.1 * i]) for i in range(3)]
        embeddings = [EmbeddingRecord(id=i, vector=vecs[i]) for i in range(6)]
        spec = CurationSpec(
            queries=(("pos", unit([1, 0])), ("neg", unit([-1, 0]))),
            per_class_top=3,
            background_low_per_class=1,
            final_per_class=3,
        )
        labeled = select_labeled(rank_all(embeddings, spec), spec)
        assert labeled["pos"] == {0, 1, 2}
        assert labeled["neg"] == {3, 4, 5}

    def test_hand_traced_discard_and_replace(self):
        # Conflicted id 2 is banned from both classes; each refills from its
        # next-ranked candidate: a -> {0, 1}, b -> {3, 4}.
        embeddings, queries = five_id_universe()
        spec = CurationSpec(
            queries=queries, per_class_top=2, background_low_per_class=1, final_per_class=2
        )
        rankings = rank_all(embeddings, spec)
        assert rankings["a"].ids[0] == 2 and rankings["b"].ids[0] == 2
        labeled = select_labeled(rankings, spec)
        assert labeled == {"a": {0, 1}, "b": {3, 4}}

    def test_pairwise_disjoint(self):
        embeddings = random_embeddings(1000, 6, seed=3)
        eye = np.eye(6)
        queries = tuple((f"c{i}", eye[i]) for i in range(4))
        spec = CurationSpec(
            queries=queries, per_class_top=40, background_low_per_class=10, final_per_class=20
        )
        labeled = select_labeled(rank_all(embeddings, spec), spec)
        names = list(labeled)
        for i, a in enumerate(names):
            assert len(labeled[a]) == 40
            for b in names[i + 1 :]:
                assert not (labeled[a] & labeled[b])

    def test_idempotent_on_own_output(self):
        embeddings, queries = five_id_universe()
        spec = CurationSpec(
            queries=queries, per_class_top=2, background_low_per_class=1, final_per_class=2
        )
        labeled = select_labeled(rank_all(embeddings, spec), spec)
        kept = set().union(*labeled.values())
        sub = [e for e in embeddings if e.id in kept]
        again = select_labeled(rank_all(sub, spec), spec)
        assert again == labeled

    def test_shortage_names_class(self):
        embeddings, queries = five_id_universe()
        spec = CurationSpec(
            queries=queries, per_class_top=3, background_low_per_class=1, final_per_class=3
        )
        with pytest.raises(ShortageError, match="'a'|'b'"):
            select_labeled(rank_all(embeddings, spec), spec)

    def test_mismatched_universes_rejected(self):
        embeddings, queries = five_id_universe()
        spec = CurationSpec(
            queries=queries, per_class_top=2, background_low_per_class=1, final_per_class=2
        )
        rankings = {
            "a": cosine_rank(embeddings, queries[0][1]),
            "b": cosine_rank(embeddings[:-1], queries[1][1]),
        }
        with pytest.raises(ValueError, match="universe"):
            select_labeled(rankings, spec)


class TestBackground:
    def test_bottom_k_single_class(self):
        embeddings = random_embeddings(100, 4, seed=5)
        query = unit([1, 0, 0, 0])
        spec = CurationSpec(
            queries=(("only", query),), per_class_top=10, background_low_per_class=60,
            final_per_class=10,
        )
        ranking = cosine_rank(embeddings, query)
        background = assemble_background({"only": ranking}, spec, {"only": set()})
        assert background == set(ranking.ids[-60:])

    def test_disjoint_from_labeled(self):
        embeddings = random_embeddings(600, 5, seed=6)
        eye = np.eye(5)
        queries = tuple((f"c{i}", eye[i]) for i in range(3))
        spec = CurationSpec(
            queries=queries, per_class_top=30, background_low_per_class=50, final_per_class=20
        )
        rankings = rank_all(embeddings, spec)
        labeled = select_labeled(rankings, spec)
        background = assemble_background(rankings, spec, labeled)
        assert background
        for ids in labeled.values():
            assert not (background & ids)

    def test_shared_bottoms_collapse(self):
        # Two identical queries share their bottom set: the union stays at 60.
        embeddings = random_embeddings(100, 4, seed=8)
        q = unit([1, 0, 0, 0])
        spec = CurationSpec(
            queries=(("x", q), ("y", q)), per_class_top=5, background_low_per_class=60,
            final_per_class=5,
        )
        rankings = rank_all(embeddings, spec)
        background = assemble_background(rankings, spec, {"x": set(), "y": set()})
        assert len(background) == 60

    def test_shortage(self):
        embeddings = random_embeddings(10, 4, seed=9)
        q = unit([1, 0, 0, 0])
        spec = CurationSpec(
            queries=(("x", q),), per_class_top=5, background_low_per_class=60, final_per_class=5
        )
        with pytest.raises(ShortageError):
            assemble_background({"x": cosine_rank(embeddings, q)}, spec, {"x": set()})


class TestFinalize:
    def spec(self, final=3):
        _, queries = five_id_universe()
        return CurationSpec(
            queries=queries, per_class_top=5, background_low_per_class=1, final_per_class=final
        )

    def test_exact_count_taken_verbatim(self):
        spec = self.spec(final=3)
        labeled = {"a": {1, 2, 3}, "b": {4, 5, 6}}
        out = finalize_bucket(labeled, {7, 8, 9}, spec, seed=0)
        assert out.selections["a"] == (1, 2, 3)
        assert out.selections[BACKGROUND_CLASS] == (7, 8, 9)

    def test_deterministic_and_balanced(self):
        spec = self.spec(final=2)
        labeled = {"a": {1, 2, 3, 4}, "b": {5, 6, 7, 8}}
        one = finalize_bucket(labeled, {10, 11, 12}, spec, seed=42)
        two = finalize_bucket(labeled, {10, 11, 12}, spec, seed=42)
        assert one.selections == two.selections
        assert all(len(ids) == 2 for ids in one.selections.values())
        assert one.class_names == ("a", "b", BACKGROUND_CLASS)

    def test_shortage(self):
        spec = self.spec(final=3)
        with pytest.raises(ShortageError, match="background"):
            finalize_bucket({"a": {1, 2, 3}, "b": {4, 5, 6}}, {9}, spec, seed=0)


class TestFiles:
    def test_embedding_roundtrip(self, tmp_path):
        p = tmp_path / "emb.tsv"
        p.write_text("#m=2\n0\t3.0,4.0\n1\t0.0,2.0\n")
        records = load_embedding_file(p)
        assert np.allclose(records[0].vector, [0.6, 0.8])
        assert np.allclose(records[1].vector, [0.0, 1.0])

    def test_embedding_errors(self, tmp_path):
        p = tmp_path / "emb.tsv"
        p.write_text("#m=2\n0\t0.0,0.0\n")
        with pytest.raises(EmbeddingFileError, match="zero vector"):
            load_embedding_file(p)
        p.write_text("#m=2\n0\t1.0\n")
        with pytest.raises(EmbeddingFileError, match=":2"):
            load_embedding_file(p)
        p.write_text("0\t1.0,2.0\n")
        with pytest.raises(EmbeddingFileError, match="header"):
            load_embedding_file(p)
        p.write_text("#m=2\n0\t1.0,2.0\n0\t2.0,1.0\n")
        with pytest.raises(EmbeddingFileError, match="duplicate"):
            load_embedding_file(p)

    def test_query_file(self, tmp_path):
        p = tmp_path / "q.tsv"
        p.write_text("alpha\t1.0,0.0\nbeta\t0.0,5.0\n")
        queries = load_query_file(p)
        assert [name for name, _ in queries] == ["alpha", "beta"]
        assert np.allclose(queries[1][1], [0.0, 1.0])

    def test_rejection_list(self, tmp_path):
        p = tmp_path / "reject.txt"
        p.write_text("3\n17\n\n5\n")
        assert load_rejection_list(p) == {3, 17, 5}

    def test_class_table(self, tmp_path):
        p = tmp_path / "classes.txt"
        write_class_table(p, ["cat", "dog", BACKGROUND_CLASS])
        assert p.read_text() == "0\tcat\n1\tdog\n2\tbackground\n"


def test_curated_samples_joinable():
    embeddings = random_embeddings(60, 4, seed=10)
    queries = (("x", unit([1, 0, 0, 0])), ("y", unit([0, 1, 0, 0])))
    spec = CurationSpec(
        queries=queries, per_class_top=5, background_low_per_class=10, final_per_class=3
    )
    rankings = rank_all(embeddings, spec)
    labeled = select_labeled(rankings, spec)
    background = assemble_background(rankings, spec, labeled)
    dataset = finalize_bucket(labeled, background, spec, seed=0)
    samples = curated_samples(dataset, embeddings, timestamps={i: 100 + i for i in range(60)})
    assert len(samples) == 9
    assert all(s.timestamp >= 100 for s in samples)
    assert {s.label for s in samples} == {0, 1, 2}


def test_curation_spec_validation():
    q = (("a", unit([1, 0])),)
    with pytest.raises(ValueError):
        CurationSpec(queries=(), per_class_top=1, background_low_per_class=1, final_per_class=1)
    with pytest.raises(ValueError):
        CurationSpec(queries=q, per_class_top=2, background_low_per_class=1, final_per_class=3)
    with pytest.raises(ValueError):
        CurationSpec(queries=q + q, per_class_top=1, background_low_per_class=1, final_per_class=1)
