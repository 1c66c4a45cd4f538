"""
Unit tests for word rendering, error injection and corpus persistence
"""
import numpy as np
import pytest

from app.models.errors import ErrorKindError, InvalidWordError, ManifestError, MissingImageError
from app.models.image import IMAGE_HEIGHT, IMAGE_WIDTH, INJECTABLE_KINDS, ErrorKind, GrayImage, Label
from app.services import dataset_service
from app.utils.run_logger import RunSeverity


class TestRenderWord:
    """Test suite for deterministic word rendering"""

    def test_render_shape_and_range(self):
        """Test: Rendered words are 35x100 with ink at 0 and paper at 1"""
        img = dataset_service.render_word("CAT")
        assert img.pixels.shape == (IMAGE_HEIGHT, IMAGE_WIDTH)
        assert set(np.unique(img.pixels)) == {0.0, 1.0}

    def test_render_is_deterministic(self):
        """Test: Same word renders bit-identical every time"""
        assert dataset_service.render_word("WAX") == dataset_service.render_word("WAX")

    def test_different_words_differ(self):
        """Test: Distinct words give distinct rasters"""
        assert dataset_service.render_word("WAX") != dataset_service.render_word("WIN")

    def test_invalid_character_is_named(self):
        """Test: A digit in the word is reported as the offending character"""
        with pytest.raises(InvalidWordError) as excinfo:
            dataset_service.render_word("AB1")
        assert excinfo.value.character == "1"

    def test_lowercase_rejected(self):
        """Test: Lowercase letters have no glyph"""
        with pytest.raises(InvalidWordError) as excinfo:
            dataset_service.render_word("cat")
        assert excinfo.value.character == "c"

    @pytest.mark.parametrize("word", ["AB", "ABCD", ""])
    def test_wrong_length_rejected(self, word):
        """Test: Words must be exactly three letters"""
        with pytest.raises(InvalidWordError):
            dataset_service.render_word(word)


class TestInjectError:
    """Test suite for simulated print errors"""

    @pytest.mark.parametrize("kind", INJECTABLE_KINDS)
    def test_artifact_changes_enough_pixels(self, kind):
        """Test: Every error kind changes at least the minimum pixel count"""
        clean = dataset_service.render_word("MOW")
        for seed in range(5):
            bad = dataset_service.inject_error(clean, kind, seed)
            assert dataset_service.changed_pixels(clean, bad) >= dataset_service.MIN_CHANGED_PIXELS

    @pytest.mark.parametrize("kind", INJECTABLE_KINDS)
    def test_injection_is_seeded(self, kind):
        """Test: Same seed gives the same artifact"""
        clean = dataset_service.render_word("HEX")
        assert dataset_service.inject_error(clean, kind, 99) == dataset_service.inject_error(clean, kind, 99)

    def test_source_image_untouched(self):
        """Test: Injection works on a copy"""
        clean = dataset_service.render_word("HEX")
        before = clean.pixels.copy()
        dataset_service.inject_error(clean, ErrorKind.BLOT, 3)
        assert np.array_equal(clean.pixels, before)

    def test_none_kind_rejected(self):
        """Test: ErrorKind.NONE cannot be injected"""
        with pytest.raises(ErrorKindError):
            dataset_service.inject_error(dataset_service.render_word("HEX"), ErrorKind.NONE, 1)

    def test_slip_on_blank_image_returns_best_effort(self):
        """Test: A slip over a uniform image cannot change pixels but still returns an image"""
        blank = GrayImage.blank()
        result = dataset_service.inject_error(blank, ErrorKind.SLIP_LINE, 5)
        assert result.pixels.shape == blank.pixels.shape


class TestPlanDataset:
    """Test suite for manifest planning"""

    def test_full_manifest_counts(self):
        """Test: Full corpus has 17576 good and 17576 bad entries"""
        manifest = dataset_service.plan_dataset(1, "full")
        assert len(manifest.by_label(Label.GOOD)) == 17576
        assert len(manifest.by_label(Label.BAD)) == 17576

    def test_error_kinds_balanced(self):
        """Test: Bad-set error kinds differ in count by at most one"""
        counts = dataset_service.plan_dataset(1, "full").error_counts()
        assert max(counts.values()) - min(counts.values()) <= 1

    def test_good_entries_carry_no_error(self):
        """Test: Label is Bad exactly when an error kind is set"""
        for entry in dataset_service.plan_dataset(3, "1/676").entries:
            assert (entry.label is Label.BAD) == (entry.error is not ErrorKind.NONE)

    def test_scaled_subsample_is_lexicographic(self):
        """Test: A subsample keeps the word order"""
        manifest = dataset_service.plan_dataset(3, "1/676")
        words = [entry.word for entry in manifest.by_label(Label.GOOD)]
        assert len(words) == 26
        assert words == sorted(words)

    def test_same_seed_same_manifest(self):
        """Test: Planning is a pure function of the seed"""
        assert dataset_service.plan_dataset(11, "1/676") == dataset_service.plan_dataset(11, "1/676")

    @pytest.mark.parametrize("scale", ["0", "2", "-1/2"])
    def test_bad_scale_rejected(self, scale):
        """Test: Scales outside (0, 1] are refused"""
        with pytest.raises(ValueError):
            dataset_service.parse_scale(scale)


class TestDatasetPersistence:
    """Test suite for writing and loading a corpus"""

    def test_generated_dataset_is_sound(self, tiny_dataset):
        """Test: Every Bad image differs from its clean rendering"""
        minimum, failing = dataset_service.label_soundness(tiny_dataset)
        assert failing == []
        assert minimum >= dataset_service.MIN_CHANGED_PIXELS

    def test_write_then_load(self, tiny_dataset, tmp_path, memory_logger):
        """Test: A written corpus loads back with identical manifest and images"""
        root = dataset_service.write_dataset(tiny_dataset, tmp_path / "ds", memory_logger)
        loaded = dataset_service.load_dataset(root)
        assert loaded.manifest == tiny_dataset.manifest
        for image_id in tiny_dataset.manifest.ids():
            assert loaded.image(image_id) == tiny_dataset.image(image_id)
        assert (root / "counts.csv").exists()
        assert len(memory_logger.events) == 1

    def test_write_logs_label_soundness(self, tiny_dataset, tmp_path, memory_logger):
        """Test: The written-dataset event carries the smallest Bad-image change"""
        dataset_service.write_dataset(tiny_dataset, tmp_path / "ds", memory_logger)
        event = memory_logger.events[0]
        assert event.details["unsound"] == []
        assert event.details["min_changed_pixels"] >= dataset_service.MIN_CHANGED_PIXELS
        assert event.severity is RunSeverity.INFO

    def test_malformed_row_reports_row_number(self, tiny_dataset, tmp_path):
        """Test: A bad label value names its 1-based data row"""
        root = dataset_service.write_dataset(tiny_dataset, tmp_path / "ds")
        lines = (root / "manifest.csv").read_text().splitlines()
        lines[3] = lines[3].replace(",good,", ",maybe,")
        (root / "manifest.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestError) as excinfo:
            dataset_service.load_dataset(root)
        assert excinfo.value.row == 3

    def test_missing_image_named(self, tiny_dataset, tmp_path):
        """Test: A manifest entry without its PGM is reported by id"""
        root = dataset_service.write_dataset(tiny_dataset, tmp_path / "ds")
        victim = tiny_dataset.manifest.ids()[0]
        (root / "images" / f"{victim}.pgm").unlink()
        with pytest.raises(MissingImageError) as excinfo:
            dataset_service.load_dataset(root)
        assert excinfo.value.image_id == victim

    def test_missing_manifest(self, tmp_path):
        """Test: Loading an empty directory fails with ManifestError"""
        with pytest.raises(ManifestError):
            dataset_service.load_dataset(tmp_path)
