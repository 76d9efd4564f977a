"""Manifest parsing, validation, splitting, and the factorial factory."""

import pytest

from emoverify.errors import ManifestError
from emoverify.manifest import (
    AudioFormat,
    CorpusManifest,
    UtteranceRef,
    grid_manifest,
    load_manifest,
    save_manifest,
    split_by_sentence,
)

MINIMAL = """\
#emotions:neutral,angry
#audio:16000,16
id,source,speaker,emotion,sentence_group,repetition,split,role
u1,x.wav,s1,neutral,1,1,train,claimant
u2,x.wav,s1,angry,1,1,train,claimant
u3,y.wav,s2,neutral,2,1,test,claimant
u4,y.wav,s2,angry,2,1,test,imposter
"""


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8", newline="\n")
    return p


class TestLoad:
    def test_minimal_manifest(self, tmp_path):
        m = load_manifest(write(tmp_path, MINIMAL.replace("u4,y.wav,s2,angry,2,1,test,imposter\n", "")))
        assert m.n_emotions == 2
        assert m.emotion_set == ("neutral", "angry")
        assert m.speakers == ("s1", "s2")
        assert m.audio_format == AudioFormat(16000, 16)
        assert len(m.utterances) == 3

    def test_undeclared_emotion_names_row(self, tmp_path):
        bad = MINIMAL.replace("u3,y.wav,s2,neutral", "u3,y.wav,s2,bored")
        with pytest.raises(ManifestError, match=r"line 6.*bored"):
            load_manifest(write(tmp_path, bad))

    def test_conflicting_role_rejected(self, tmp_path):
        with pytest.raises(ManifestError, match=r"line 7.*both"):
            load_manifest(write(tmp_path, MINIMAL))

    def test_duplicate_id_rejected(self, tmp_path):
        bad = MINIMAL.replace("u2,x.wav,s1,angry", "u1,x.wav,s1,angry").replace(
            "u4,y.wav,s2,angry,2,1,test,imposter\n", ""
        )
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(write(tmp_path, bad))

    def test_missing_emotions_pragma(self, tmp_path):
        bad = MINIMAL.split("\n", 1)[1]
        with pytest.raises(ManifestError, match="#emotions"):
            load_manifest(write(tmp_path, bad))

    def test_bad_header(self, tmp_path):
        bad = MINIMAL.replace("id,source", "id;source")
        with pytest.raises(ManifestError, match="line 3.*header"):
            load_manifest(write(tmp_path, bad))

    def test_bad_column_count(self, tmp_path):
        bad = MINIMAL.replace("u2,x.wav,s1,angry,1,1,train,claimant", "u2,x.wav,s1")
        with pytest.raises(ManifestError, match="line 5.*columns"):
            load_manifest(write(tmp_path, bad))

    def test_bad_integer_column(self, tmp_path):
        bad = MINIMAL.replace("u1,x.wav,s1,neutral,1,1", "u1,x.wav,s1,neutral,one,1")
        with pytest.raises(ManifestError, match="line 4.*integer"):
            load_manifest(write(tmp_path, bad))

    def test_bad_audio_pragma(self, tmp_path):
        bad = MINIMAL.replace("#audio:16000,16", "#audio:fast")
        with pytest.raises(ManifestError, match="line 2.*audio"):
            load_manifest(write(tmp_path, bad))

    def test_round_trip_is_byte_identical(self, tmp_path):
        good = MINIMAL.replace("u4,y.wav,s2,angry,2,1,test,imposter", "u4,y.wav,s3,angry,2,1,test,imposter")
        p1 = write(tmp_path, good)
        m = load_manifest(p1)
        p2 = tmp_path / "again.csv"
        save_manifest(m, p2)
        save_manifest(load_manifest(p2), tmp_path / "thrice.csv")
        assert p2.read_bytes() == (tmp_path / "thrice.csv").read_bytes()


class TestValidation:
    def test_single_emotion_rejected(self):
        with pytest.raises(ManifestError, match="at least 2"):
            CorpusManifest(("neutral",), (), {})

    def test_unknown_split_rejected(self):
        u = UtteranceRef("u1", "x", "s1", "neutral", 1, 1, "dev")
        with pytest.raises(ManifestError, match="split"):
            CorpusManifest(("neutral", "angry"), (u,), {"s1": "claimant"})


class TestSplit:
    def test_first_four_of_eight(self):
        m = grid_manifest(n_speakers=2, n_groups=8, n_reps=1, train_groups=())
        out = split_by_sentence(m, {1, 2, 3, 4})
        test_groups = {u.sentence_group for u in out.subset(split="test")}
        assert test_groups == {5, 6, 7, 8}
        train_groups = {u.sentence_group for u in out.subset(split="train")}
        assert train_groups == {1, 2, 3, 4}

    def test_partition_no_group_in_both(self):
        m = grid_manifest(n_speakers=3, n_groups=5, n_reps=2, train_groups=())
        out = split_by_sentence(m, {2, 4})
        both = {u.sentence_group for u in out.subset(split="train")} & {
            u.sentence_group for u in out.subset(split="test")
        }
        assert both == set()
        assert len(out.subset(split="train")) + len(out.subset(split="test")) == len(
            out.utterances
        )

    def test_sizes_proportional_to_group_population(self):
        m = grid_manifest(n_speakers=2, n_groups=2, n_reps=3, train_groups=())
        out = split_by_sentence(m, {1})
        assert len(out.subset(split="train")) == len(out.subset(split="test"))

    def test_all_groups_train_rejected(self):
        m = grid_manifest(n_speakers=2, n_groups=2, n_reps=1)
        with pytest.raises(ManifestError, match="test split is empty"):
            split_by_sentence(m, {1, 2})

    def test_empty_train_groups_rejected(self):
        m = grid_manifest(n_speakers=2, n_groups=2, n_reps=1)
        with pytest.raises(ManifestError, match="empty"):
            split_by_sentence(m, set())

    def test_unknown_group_rejected(self):
        m = grid_manifest(n_speakers=2, n_groups=2, n_reps=1)
        with pytest.raises(ManifestError, match="never occur"):
            split_by_sentence(m, {9})


class TestGrid:
    def test_full_protocol_counts(self):
        m = grid_manifest(n_speakers=40, n_groups=8, n_reps=9, n_claimants=34)
        assert len(m.utterances) == 17280
        assert len(m.subset(split="test")) == 8640
        for emotion in m.emotion_set:
            assert len(m.subset(split="train", emotion=emotion)) == 1440
        assert len(m.claimants) == 34
        assert len(m.imposters) == 6
        assert set(m.claimants) & set(m.imposters) == set()

    def test_ids_unique_and_ordered(self):
        m = grid_manifest(n_speakers=3, n_groups=2, n_reps=2)
        ids = [u.id for u in m.utterances]
        assert len(set(ids)) == len(ids)
        assert ids[0] == "s1_neutral_g1_r1"
