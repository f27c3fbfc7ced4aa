import json
from pathlib import Path

import numpy as np
import pytest
import soundfile as sf

from app.core.errors import EmptyManifest, UnsupportedAudioFormat
from app.core.schemas.audio import SAMPLE_RATE
from app.core.schemas.degradation import DegradationReport
from app.ml.datasets.build_dataset import ToyVoice, build_toy_corpus, synth_utterance
from app.ml.datasets.manifest import load_manifest
from app.ml.signal.audio import write_wav

from tests.conftest import make_tone


def _manifest(tmp_path, rows, name="manifest.jsonl"):
    path = tmp_path / name
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def clean_wav(tmp_path):
    write_wav(make_tone(), tmp_path / "a.wav")
    return "a.wav"


# ---------------------------------------------------------------------------
# Manifest loading
# ---------------------------------------------------------------------------


class TestManifest:
    def test_relative_paths_resolve(self, tmp_path, clean_wav):
        path = _manifest(tmp_path, [{"utterance_id": "u1", "clean_path": clean_wav, "speaker_id": "s"}])
        (row,) = load_manifest(path)
        assert Path(row.clean_path) == tmp_path / "a.wav"
        assert row.degraded_path is None

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_manifest(tmp_path / "nope.jsonl")

    def test_empty_manifest(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("\n", encoding="utf-8")
        with pytest.raises(EmptyManifest):
            load_manifest(path)

    def test_duplicate_ids(self, tmp_path, clean_wav):
        row = {"utterance_id": "u1", "clean_path": clean_wav, "speaker_id": "s"}
        with pytest.raises(ValueError, match="duplicate"):
            load_manifest(_manifest(tmp_path, [row, row]))

    def test_bad_line_reports_line_number(self, tmp_path, clean_wav):
        path = tmp_path / "m.jsonl"
        path.write_text(
            json.dumps({"utterance_id": "u1", "clean_path": clean_wav, "speaker_id": "s"}) + "\n{not json\n",
            encoding="utf-8",
        )
        with pytest.raises(ValueError, match=":2:"):
            load_manifest(path)

    def test_unknown_field(self, tmp_path, clean_wav):
        path = _manifest(tmp_path, [{"utterance_id": "u1", "clean_path": clean_wav, "speaker_id": "s", "text": "hi"}])
        with pytest.raises(ValueError, match=":1:"):
            load_manifest(path)

    def test_missing_audio_file(self, tmp_path):
        path = _manifest(tmp_path, [{"utterance_id": "u1", "clean_path": "gone.wav", "speaker_id": "s"}])
        with pytest.raises(FileNotFoundError):
            load_manifest(path)
        assert load_manifest(path, check_files=False)[0].clean_path.endswith("gone.wav")

    def test_stereo_rejected(self, tmp_path):
        sf.write(str(tmp_path / "st.wav"), np.zeros((SAMPLE_RATE, 2)), SAMPLE_RATE, subtype="PCM_16")
        path = _manifest(tmp_path, [{"utterance_id": "u1", "clean_path": "st.wav", "speaker_id": "s"}])
        with pytest.raises(UnsupportedAudioFormat):
            load_manifest(path)

    def test_enhanced_path_may_not_exist_yet(self, tmp_path, clean_wav):
        path = _manifest(
            tmp_path,
            [{"utterance_id": "u1", "clean_path": clean_wav, "enhanced_path": "out/u1.wav", "speaker_id": "s"}],
        )
        (row,) = load_manifest(path)
        assert Path(row.enhanced_path) == tmp_path / "out" / "u1.wav"


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


class TestToyCorpus:
    def test_rows_and_enrollment(self, toy_rows):
        assert len(toy_rows) == 6
        assert {r.speaker_id for r in toy_rows} == {"spk00", "spk01"}
        for row in toy_rows:
            assert row.enrollment_paths
            assert row.clean_path not in row.enrollment_paths
            assert all(Path(p).stem.startswith(row.speaker_id) for p in row.enrollment_paths)

    def test_degradation_reports_written(self, toy_rows):
        for row in toy_rows:
            report = Path(row.degraded_path).with_suffix(".json")
            DegradationReport.model_validate_json(report.read_text(encoding="utf-8"))

    def test_deterministic(self, tmp_path):
        a = build_toy_corpus(tmp_path / "a", n_speakers=1, utterances_per_speaker=2, seconds=0.5, seed=4)
        b = build_toy_corpus(tmp_path / "b", n_speakers=1, utterances_per_speaker=2, seconds=0.5, seed=4)
        for sub in ("clean", "degraded"):
            for name in ("spk00_u00.wav", "spk00_u01.wav"):
                assert (a.parent / sub / name).read_bytes() == (b.parent / sub / name).read_bytes()

    def test_utterance_shape(self):
        clip = synth_utterance(ToyVoice.for_index(1), 0.8, seed=0)
        assert len(clip) == int(0.8 * SAMPLE_RATE)
        assert np.max(np.abs(clip.samples)) == pytest.approx(0.5)

    def test_voices_differ(self):
        a, b = ToyVoice.for_index(0), ToyVoice.for_index(1)
        assert a.f0 != b.f0
        assert a.speaker_id != b.speaker_id
