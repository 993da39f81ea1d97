import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adextract.corpus import RelationType, Span
from adextract.features import (
    PAD,
    UNK,
    EmbeddingFormatError,
    encode,
    generate_all_candidates,
    generate_candidates,
    load_embeddings,
    random_embeddings,
    restrict_embeddings,
    segment,
    stack,
    trim_window,
    vocabulary,
    write_candidates_tsv,
)
from adextract.synth import SynthConfig, generate

from conftest import make_doc
import oracles

TEXT = "Start aspirin 81 mg daily. Then warfarin 5 mg. Later more notes here. End."


def doc():
    return make_doc(TEXT, [
        ("T1", "Drug", "aspirin"), ("T2", "Strength", "81 mg"), ("T3", "Drug", "warfarin"),
        ("T4", "Strength", "5 mg"), ("T5", "Drug", "notes"),
    ], [("Strength-Drug", "T2", "T1"), ("Strength-Drug", "T4", "T3")])


class TestCandidates:
    def test_pairs_and_labels(self):
        pairs, dropped = generate_candidates(doc(), RelationType.STRENGTH_DRUG)
        got = [(p.attr, p.drug, p.label) for p in pairs]
        # T5 sits two sentences after T2, so (T2, T5) is outside the default cap
        assert got == [("T2", "T1", True), ("T2", "T3", False), ("T4", "T1", False),
                       ("T4", "T3", True), ("T4", "T5", False)]
        assert dropped == 0

    def test_cap_and_dropped_count(self):
        pairs, dropped = generate_candidates(doc(), RelationType.STRENGTH_DRUG, max_cross_sentences=0)
        assert [(p.attr, p.drug) for p in pairs] == [("T2", "T1"), ("T4", "T3")]
        assert dropped == 0
        far = make_doc(TEXT, [("T1", "Drug", "aspirin"), ("T2", "Strength", "5 mg")], [("Strength-Drug", "T2", "T1")])
        pairs, dropped = generate_candidates(far, RelationType.STRENGTH_DRUG, max_cross_sentences=0)
        assert pairs == [] and dropped == 1

    def test_window_spans_sentences(self):
        pairs, _ = generate_candidates(doc(), RelationType.STRENGTH_DRUG)
        p = next(p for p in pairs if (p.attr, p.drug) == ("T2", "T3"))
        assert TEXT[p.window.start:p.window.end] == "Start aspirin 81 mg daily. Then warfarin 5 mg."
        assert p.window_tokens[0].text == "Start" and p.window_tokens[-1].text == "."

    def test_tsv(self, tmp_path):
        pairs, _ = generate_candidates(doc(), RelationType.STRENGTH_DRUG)
        write_candidates_tsv(pairs, tmp_path / "c.tsv")
        lines = (tmp_path / "c.tsv").read_text().splitlines()
        assert lines[0] == "doc_id\tattr_id\tdrug_id\trtype\tlabel"
        assert lines[1] == "d1\tT2\tT1\tStrength-Drug\tpositive"
        assert len(lines) == len(pairs) + 1


class TestSegment:
    def test_attr_first_and_drug_first(self):
        pairs, _ = generate_candidates(doc(), RelationType.STRENGTH_DRUG)
        by = {(p.attr, p.drug): segment(p) for p in pairs}
        s = by[("T2", "T1")]
        assert s.drug_first
        assert [[t.text for t in seg] for seg in s.segments] == [
            ["Start"], ["aspirin"], [], ["81", "mg"], ["daily", "."],
        ]
        s = by[("T4", "T5")]
        assert not s.drug_first
        assert [t.text for t in s.concept1] == ["5", "mg"]
        assert [t.text for t in s.concept2] == ["notes"]

    def test_partial_token_goes_to_concept(self):
        d = make_doc("took aspirin81 daily", [("T1", "Drug", (5, 12)), ("T2", "Strength", (12, 14))])
        pairs, _ = generate_candidates(d, RelationType.STRENGTH_DRUG)
        s = segment(pairs[0])
        assert [t.text for t in s.concept1] == ["aspirin81"]
        assert s.concept2 == () and s.middle == ()
        assert s.tokens == pairs[0].window_tokens

    def test_matches_offset_oracle(self):
        docs = generate(SynthConfig(seed=8, n_docs=30)).documents
        n = 0
        for rt in RelationType:
            for p in generate_all_candidates(docs, rt)[0]:
                a = (p.attr_spans[0].start, p.attr_spans[-1].end, p.attr)
                d = (p.drug_spans[0].start, p.drug_spans[-1].end, p.drug)
                first, second = sorted([a, d], key=lambda x: (x[0], x[2]))
                toks = [(t.start, t.end) for t in p.window_tokens]
                expected = oracles.segments_by_offsets(toks, first[:2], second[:2])
                s = segment(p)
                got, i = [], 0
                for seg in s.segments:
                    got.append(list(range(i, i + len(seg))))
                    i += len(seg)
                assert got == [list(e) for e in expected]
                n += 1
        assert n > 100


class TestEmbeddings:
    def test_load_glove_and_word2vec(self, tmp_path):
        (tmp_path / "g.txt").write_text("the 1 2 3\nAspirin 4 5 6\nthe 9 9 9\n")
        emb = load_embeddings(tmp_path / "g.txt")
        assert emb.dim == 3 and len(emb) == 4
        assert emb.index("the") == 2 and emb.index("zzz") == UNK
        np.testing.assert_array_equal(emb.rows[2], [1, 2, 3])
        np.testing.assert_array_equal(emb.rows[PAD], 0)
        assert np.all(np.abs(emb.rows[UNK]) <= 0.05)
        (tmp_path / "w.txt").write_text("2 3\nthe 1 2 3\nof 4 5 6\n")
        assert load_embeddings(tmp_path / "w.txt", expected_dim=3).words() == ["the", "of"]

    def test_lookup_is_lowercased(self, tmp_path):
        (tmp_path / "g.txt").write_text("aspirin 1 2\n")
        assert load_embeddings(tmp_path / "g.txt").index("ASPIRIN") == 2

    @pytest.mark.parametrize("content,match", [
        ("a 1 2\nb 1 2 3\n", ":2:"),
        ("a 1 x\n", "could not convert"),
        ("", "no vectors"),
        ("2 5\na 1 2\n", "header dim"),
    ])
    def test_bad_files(self, tmp_path, content, match):
        (tmp_path / "e.txt").write_text(content)
        with pytest.raises(EmbeddingFormatError, match=match):
            load_embeddings(tmp_path / "e.txt", expected_dim=2 if "header" in match else None)

    def test_random_is_seeded(self):
        a = random_embeddings(["x", "Y", "x"], dim=4, seed=3)
        b = random_embeddings(["x", "y"], dim=4, seed=3)
        np.testing.assert_array_equal(a.rows, b.rows)
        assert a.vocab == {"x": 2, "y": 3}

    def test_restrict_keeps_rows(self):
        emb = random_embeddings(["a", "b", "c", "d"], dim=3, seed=0)
        small = restrict_embeddings(emb, ["D", "b", "zz"])
        assert small.words() == ["b", "d"]
        np.testing.assert_array_equal(small.rows[small.index("d")], emb.rows[emb.index("d")])
        np.testing.assert_array_equal(small.rows[:2], emb.rows[:2])


class TestEncode:
    def setup_method(self):
        pairs, _ = generate_candidates(doc(), RelationType.STRENGTH_DRUG)
        self.pairs = pairs
        self.emb = random_embeddings(vocabulary(pairs), dim=5)

    def test_segment_padding(self):
        s = segment(self.pairs[0])  # Start | aspirin | - | 81 mg | daily .
        enc = encode(s, self.emb, "segment", max_lens=(3, 2, 2, 1, 4), label=1)
        pre, c1, mid, c2, post = enc.inputs
        assert pre.tolist() == [0, 0, self.emb.index("start")]
        assert c1.tolist() == [self.emb.index("aspirin"), 0]
        assert mid.tolist() == [0, 0]
        assert c2.tolist() == [self.emb.index("81")]
        assert post.tolist() == [self.emb.index("daily"), self.emb.index("."), 0, 0]
        assert enc.label == 1

    def test_preceding_keeps_right_end(self):
        p = next(p for p in self.pairs if (p.attr, p.drug) == ("T4", "T5"))
        s = segment(p)  # Then warfarin | 5 mg | . Later more | notes | here .
        enc = encode(s, self.emb, "segment", max_lens=(1, 1, 1, 1, 1))
        assert enc.inputs[0].tolist() == [self.emb.index("warfarin")]
        assert enc.inputs[2].tolist() == [self.emb.index(".")]

    def test_sentence_kind(self):
        s = segment(self.pairs[0])
        enc = encode(s, self.emb, "sentence", max_lens=8)
        assert len(enc.inputs) == 1 and enc.inputs[0].shape == (8,)
        assert enc.inputs[0][:6].tolist() == [self.emb.index(t.text) for t in s.tokens]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            encode(segment(self.pairs[0]), self.emb, "rnn")

    def test_stack(self):
        encs = [encode(segment(p), self.emb) for p in self.pairs]
        arrays = stack(encs)
        assert len(arrays) == 5 and arrays[2].shape == (len(self.pairs), 32)


@given(st.integers(0, 6), st.integers(1, 4), st.integers(0, 6), st.integers(1, 12))
@settings(max_examples=200, deadline=None)
def test_trim_window_keeps_core_and_length(n_pre, n_core, n_post, max_len):
    from adextract.corpus import Token
    from adextract.features import SegmentedExample

    def toks(prefix, n):
        return tuple(Token(f"{prefix}{i}", Span(i, i + 1)) for i in range(n))

    ex = SegmentedExample(toks("p", n_pre), toks("a", n_core), (), (), toks("s", n_post), True)
    out = trim_window(ex, max_len)
    assert len(out) == min(max_len, n_pre + n_core + n_post)
    if max_len >= n_core:
        assert [t.text for t in out if t.text.startswith("a")] == [f"a{i}" for i in range(n_core)]
        # remaining outer tokens are the ones adjacent to the core
        pre = [t.text for t in out if t.text.startswith("p")]
        assert pre == [f"p{i}" for i in range(n_pre - len(pre), n_pre)]
