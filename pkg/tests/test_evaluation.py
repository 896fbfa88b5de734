"""Precision accounting: test-set loading, binning, the two
out-of-vocabulary conventions, and report stability."""

import numpy as np
import pytest

from conftest import identity_aligner, random_unit_rows, toy_embeddings, unit

import lexalign as lx
from lexalign import DataError, PhrasePairs, RetrievalConfig


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


@pytest.fixture
def basis_embeddings():
    """Five source and five target words on the same orthogonal basis."""
    src = toy_embeddings(["a", "b", "c", "d", "e"], np.eye(5))
    tgt = toy_embeddings(["A", "B", "C", "D", "E"], np.eye(5))
    return src, tgt


class TestBins:
    def test_boundaries(self):
        assert lx.bin_for_rank(0) == "0-5k"
        assert lx.bin_for_rank(4999) == "0-5k"
        assert lx.bin_for_rank(5000) == "5-20k"
        assert lx.bin_for_rank(19999) == "5-20k"
        assert lx.bin_for_rank(20000) == "20-50k"
        assert lx.bin_for_rank(50000) == "50-100k"
        assert lx.bin_for_rank(100000) == "100-200k"
        assert lx.bin_for_rank(199999) == "100-200k"

    def test_negative_rank_rejected(self):
        with pytest.raises(ValueError):
            lx.bin_for_rank(-1)


class TestLoadTestSet:
    def test_merges_lines_by_source(self, tmp_path, basis_embeddings):
        src, _ = basis_embeddings
        path = tmp_path / "test.tsv"
        write_lines(path, ["a\tA", "b\tB", "a\tC"])
        ts = lx.load_test_set(str(path), src.vocab)
        assert len(ts.entries) == 2
        assert ts.entries[0].source == "a"
        assert ts.entries[0].targets == frozenset({"A", "C"})
        assert ts.entries[1].targets == frozenset({"B"})

    def test_oov_sources_marked_skipped(self, tmp_path, basis_embeddings):
        src, _ = basis_embeddings
        path = tmp_path / "test.tsv"
        write_lines(path, ["a\tA", "zz\tB"])
        ts = lx.load_test_set(str(path), src.vocab)
        assert [e.source for e in ts.evaluable] == ["a"]
        assert [e.source for e in ts.skipped] == ["zz"]
        assert ts.skipped[0].bin is None

    def test_ranks_recorded(self, tmp_path, basis_embeddings):
        src, _ = basis_embeddings
        path = tmp_path / "test.tsv"
        write_lines(path, ["c\tA"])
        ts = lx.load_test_set(str(path), src.vocab)
        assert ts.entries[0].rank == 2
        assert ts.entries[0].bin == "0-5k"

    def test_malformed_line_names_position(self, tmp_path, basis_embeddings):
        src, _ = basis_embeddings
        path = tmp_path / "test.tsv"
        write_lines(path, ["a\tA", "no tabs here"])
        with pytest.raises(DataError, match="line 2"):
            lx.load_test_set(str(path), src.vocab)

    def test_empty_file_rejected(self, tmp_path, basis_embeddings):
        src, _ = basis_embeddings
        path = tmp_path / "empty.tsv"
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            lx.load_test_set(str(path), src.vocab)

    def test_all_sources_oov_rejected(self, tmp_path, basis_embeddings):
        src, _ = basis_embeddings
        path = tmp_path / "test.tsv"
        write_lines(path, ["xx\tA", "yy\tB"])
        with pytest.raises(DataError, match="out of vocabulary"):
            lx.load_test_set(str(path), src.vocab)


class TestEvaluateWords:
    def run(self, tmp_path, lines, config=None, ks=(1, 5), n_jobs=1, emb=None):
        src, tgt = emb if emb is not None else (
            toy_embeddings(["a", "b", "c", "d", "e"], np.eye(5)),
            toy_embeddings(["A", "B", "C", "D", "E"], np.eye(5)),
        )
        path = tmp_path / "test.tsv"
        write_lines(path, lines)
        ts = lx.load_test_set(str(path), src.vocab)
        aligner = identity_aligner(src.dim)
        config = config or RetrievalConfig()
        return lx.evaluate_words(src, tgt, aligner, config, ts, ks=ks, n_jobs=n_jobs)

    def test_self_translation_is_perfect(self, tmp_path):
        report = self.run(tmp_path, ["a\tA", "b\tB", "c\tC"])
        assert report.precision == {1: 1.0, 5: 1.0}
        assert report.n_evaluated == 3
        assert report.n_skipped_source_oov == 0

    def test_precision_non_decreasing_in_k(self, tmp_path, rng):
        words = [f"w{i}" for i in range(40)]
        matrix = random_unit_rows(40, 6, rng)
        noisy = unit(matrix + 0.35 * rng.standard_normal((40, 6)))
        src = toy_embeddings(words, matrix)
        tgt = toy_embeddings([w.upper() for w in words], noisy)
        lines = [f"w{i}\tW{i}" for i in range(40)]
        report = self.run(tmp_path, lines, ks=(1, 3, 10), emb=(src, tgt))
        assert report.precision[1] <= report.precision[3] <= report.precision[10]

    def test_source_oov_entries_skipped(self, tmp_path):
        report = self.run(tmp_path, ["a\tA", "qq\tB"])
        assert report.n_entries == 2
        assert report.n_evaluated == 1
        assert report.n_skipped_source_oov == 1
        assert report.precision[1] == 1.0

    def test_target_oov_conventions(self, tmp_path):
        # two certain hits plus one entry whose only target is unknown:
        # the primary number counts it as a miss, the variant drops it
        report = self.run(tmp_path, ["a\tA", "b\tB", "c\tMISSING"])
        assert report.n_target_oov == 1
        assert report.precision[1] == pytest.approx(2.0 / 3.0)
        assert report.precision_known_targets[1] == 1.0

    def test_bin_counts_weight_to_overall(self, tmp_path, rng):
        words = [f"w{i}" for i in range(6000)]
        matrix = random_unit_rows(6000, 8, rng)
        noisy = unit(matrix + 0.6 * rng.standard_normal((6000, 8)))
        src = toy_embeddings(words, matrix)
        tgt = toy_embeddings([w.upper() for w in words], noisy)
        picks = [3, 77, 900, 4800, 5005, 5200, 5900]
        lines = [f"w{i}\tW{i}" for i in picks]
        report = self.run(tmp_path, lines, ks=(1,), emb=(src, tgt))
        assert set(report.bins) == {"0-5k", "5-20k"}
        assert report.bins["0-5k"].count == 4
        assert report.bins["5-20k"].count == 3
        weighted = sum(b.count * b.precision[1] for b in report.bins.values())
        assert weighted == pytest.approx(report.n_evaluated * report.precision[1])

    def test_nn_and_softmax_precision_identical(self, tmp_path, rng):
        words = [f"w{i}" for i in range(30)]
        matrix = random_unit_rows(30, 5, rng)
        noisy = unit(matrix + 0.5 * rng.standard_normal((30, 5)))
        src = toy_embeddings(words, matrix)
        tgt = toy_embeddings([w.upper() for w in words], noisy)
        lines = [f"w{i}\tW{i}" for i in range(30)]
        nn = self.run(tmp_path, lines, RetrievalConfig(method="nn"), emb=(src, tgt))
        sm = self.run(
            tmp_path, lines, RetrievalConfig(method="softmax", beta=17.0),
            emb=(src, tgt),
        )
        assert nn.precision == sm.precision
        assert nn.bins["0-5k"].precision == sm.bins["0-5k"].precision

    def test_parallel_matches_serial(self, tmp_path, rng):
        words = [f"w{i}" for i in range(25)]
        matrix = random_unit_rows(25, 4, rng)
        noisy = unit(matrix + 0.4 * rng.standard_normal((25, 4)))
        src = toy_embeddings(words, matrix)
        tgt = toy_embeddings([w.upper() for w in words], noisy)
        lines = [f"w{i}\tW{i}" for i in range(25)]
        config = RetrievalConfig(method="inverted_softmax", beta=25.0, n_s=10, seed=3)
        serial = self.run(tmp_path, lines, config, emb=(src, tgt))
        parallel = self.run(tmp_path, lines, config, n_jobs=3, emb=(src, tgt))
        assert serial.to_dict() == parallel.to_dict()

    def test_unnormalized_embeddings_rejected(self, tmp_path):
        src = toy_embeddings(["a"], [[2.0, 0.0]], normalized=False)
        tgt = toy_embeddings(["A"], [[1.0, 0.0]])
        path = tmp_path / "test.tsv"
        write_lines(path, ["a\tA"])
        ts = lx.load_test_set(str(path), src.vocab)
        with pytest.raises(ValueError, match="normalized"):
            lx.evaluate_words(src, tgt, identity_aligner(2), RetrievalConfig(), ts)

    def test_bad_ks_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="ks"):
            self.run(tmp_path, ["a\tA"], ks=(0, 5))


class TestEvaluateSentences:
    def sentence_setup(self):
        src = toy_embeddings(["aa", "bb", "cc", "dd"], np.eye(4))
        tgt = toy_embeddings(["AA", "BB", "CC", "DD"], np.eye(4))
        return src, tgt

    def test_trivial_pool_is_perfect(self):
        src, tgt = self.sentence_setup()
        pool = PhrasePairs(
            [["aa"], ["bb"], ["cc", "dd"], ["dd"]],
            [["AA"], ["BB"], ["CC", "DD"], ["DD"]],
        )
        report = lx.evaluate_sentence_retrieval(
            src, tgt, identity_aligner(4), RetrievalConfig(), pool, n_queries=4,
            ks=(1,),
        )
        assert report.task == "sentences"
        assert report.precision[1] == 1.0
        assert report.n_candidates == 4
        assert report.bins == {}

    def test_duplicate_target_sentences_still_hit(self):
        # both targets tokenize identically; the tie always resolves to
        # row 0, so query 1 only scores through the duplicate rule
        src, tgt = self.sentence_setup()
        pool = PhrasePairs([["aa"], ["bb"]], [["AA"], ["AA"]])
        report = lx.evaluate_sentence_retrieval(
            src, tgt, identity_aligner(4), RetrievalConfig(), pool, n_queries=2,
            ks=(1,),
        )
        assert report.precision[1] == 1.0

    def test_unusable_pairs_dropped_and_counted(self):
        src, tgt = self.sentence_setup()
        pool = PhrasePairs(
            [["aa"], ["zz"], ["bb"]],
            [["AA"], ["BB"], ["BB"]],
        )
        report = lx.evaluate_sentence_retrieval(
            src, tgt, identity_aligner(4), RetrievalConfig(), pool, n_queries=2,
            ks=(1,),
        )
        assert report.n_entries == 3
        assert report.n_skipped_source_oov == 1
        assert report.n_candidates == 2

    def test_all_pairs_dropped_is_error(self):
        src, tgt = self.sentence_setup()
        pool = PhrasePairs([["zz"]], [["AA"]])
        with pytest.raises(DataError, match="dropped"):
            lx.evaluate_sentence_retrieval(
                src, tgt, identity_aligner(4), RetrievalConfig(), pool, n_queries=1
            )

    def test_query_count_clamped_with_warning(self):
        src, tgt = self.sentence_setup()
        pool = PhrasePairs([["aa"], ["bb"]], [["AA"], ["BB"]])
        with pytest.warns(UserWarning, match="n_queries"):
            report = lx.evaluate_sentence_retrieval(
                src, tgt, identity_aligner(4), RetrievalConfig(), pool,
                n_queries=50, ks=(1,),
            )
        assert report.n_evaluated == 2

    def test_query_sample_is_seeded(self, rng):
        words = [f"w{i}" for i in range(12)]
        src = toy_embeddings(words, random_unit_rows(12, 6, rng))
        tgt = toy_embeddings([w.upper() for w in words], src.matrix.copy())
        pool = PhrasePairs(
            [[w] for w in words], [[w.upper()] for w in words]
        )
        config = RetrievalConfig(seed=11)
        a = lx.evaluate_sentence_retrieval(
            src, tgt, identity_aligner(6), config, pool, n_queries=5, ks=(1,)
        )
        b = lx.evaluate_sentence_retrieval(
            src, tgt, identity_aligner(6), config, pool, n_queries=5, ks=(1,)
        )
        assert a.to_dict() == b.to_dict()


class TestReports:
    def make_report(self, tmp_path, rng, **overrides):
        words = [f"w{i}" for i in range(20)]
        matrix = random_unit_rows(20, 4, rng)
        noisy = unit(matrix + 0.3 * rng.standard_normal((20, 4)))
        src = toy_embeddings(words, matrix)
        tgt = toy_embeddings([w.upper() for w in words], noisy)
        path = tmp_path / "test.tsv"
        write_lines(path, [f"w{i}\tW{i}" for i in range(20)])
        ts = lx.load_test_set(str(path), src.vocab)
        config = RetrievalConfig(**overrides)
        return lx.evaluate_words(
            src, tgt, identity_aligner(4), config, ts, ks=(1, 5)
        )

    def test_round_trip_preserves_everything(self, tmp_path, rng):
        report = self.make_report(tmp_path, rng)
        out = tmp_path / "report.json"
        lx.emit_report(report, str(out))
        assert lx.load_report(str(out)) == report

    def test_identical_bytes_across_runs(self, tmp_path, rng):
        config = dict(method="inverted_softmax", beta=40.0, n_s=8, seed=6)
        first = self.make_report(tmp_path, np.random.default_rng(1), **config)
        second = self.make_report(tmp_path, np.random.default_rng(1), **config)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        lx.emit_report(first, str(a))
        lx.emit_report(second, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_version_fields_present(self, tmp_path, rng):
        report = self.make_report(tmp_path, rng)
        data = report.to_dict()
        assert data["format_version"] == 1
        assert data["software_version"] == lx.__version__
        assert list(data)[0] == "format_version"

    def test_unsupported_version_rejected(self, tmp_path, rng):
        report = self.make_report(tmp_path, rng)
        data = report.to_dict()
        data["format_version"] = 99
        bad = tmp_path / "bad.json"
        bad.write_text(__import__("json").dumps(data))
        with pytest.raises(DataError, match="version"):
            lx.load_report(str(bad))

    def test_tsv_summary_shape(self, tmp_path, rng):
        report = self.make_report(tmp_path, rng)
        header, row = lx.tsv_summary(report)
        assert header.split("\t")[0] == "task"
        assert "p@1" in header.split("\t")
        assert len(header.split("\t")) == len(row.split("\t"))
        assert row.split("\t")[0] == "words"

    def test_non_json_file_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("not json at all")
        with pytest.raises(DataError, match="JSON"):
            lx.load_report(str(bad))
