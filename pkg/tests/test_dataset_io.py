"""
Tests de lectura y escritura de datasets en disco.
"""

import os

import numpy as np
import pytest
import torch
from PIL import Image

from src.core.dataset_io import (
    IMAGES_DIR,
    LABELS_DIR,
    META_FILENAME,
    DatasetError,
    load_dataset,
    read_label,
    save_dataset,
    write_index_png,
)
from src.core.toy_domain import generate_toy_dataset, toy_dataset_meta
from src.core.validators import validate_image
from src.models.config import ToyDomainConfig
from src.models.sample import IGNORE_INDEX, DatasetMeta, Domain, Sample
from src.utils.helpers import atomic_write_json, read_json


def _meta(k: int = 3) -> DatasetMeta:
    return DatasetMeta(class_names=[f"c{i}" for i in range(k)], thing_flags=[False] * k,
                       palette=[(i, i, i) for i in range(k)])


def _sample(idx: str, label_values) -> Sample:
    label = torch.tensor(label_values, dtype=torch.int64)
    image = torch.full((3,) + tuple(label.shape), 0.5)
    return Sample(image=image, label=label, domain=Domain.SOURCE, id=idx)


class TestLoadDataset:
    """Tests de load_dataset."""

    def test_two_pairs(self, temp_dir):
        """Un directorio con dos pares da dos muestras ordenadas por nombre."""
        save_dataset(temp_dir, _meta(), [_sample("b", [[0, 1], [2, 2]]),
                                         _sample("a", [[1, 1], [0, 0]])])
        meta, samples = load_dataset(temp_dir)
        assert meta.num_classes == 3
        assert [s.id for s in samples] == ["a", "b"]

    def test_ignore_pixels_preserved(self, temp_dir):
        save_dataset(temp_dir, _meta(), [_sample("x", [[0, IGNORE_INDEX], [IGNORE_INDEX, 2]])])
        _, samples = load_dataset(temp_dir)
        assert samples[0].label.tolist() == [[0, IGNORE_INDEX], [IGNORE_INDEX, 2]]

    def test_label_value_out_of_range(self, temp_dir):
        """Un valor K+1 en una etiqueta es un error de validación."""
        save_dataset(temp_dir, _meta(3), [_sample("bad", [[0, 4], [1, 1]])])
        with pytest.raises(DatasetError, match="bad"):
            load_dataset(temp_dir)

    def test_missing_label_names_file(self, temp_dir):
        save_dataset(temp_dir, _meta(), [_sample("solo", [[0, 0], [0, 0]])])
        os.remove(os.path.join(temp_dir, LABELS_DIR, "solo.png"))
        with pytest.raises(DatasetError, match="solo.png"):
            load_dataset(temp_dir)

    def test_missing_meta(self, temp_dir):
        with pytest.raises(DatasetError):
            load_dataset(temp_dir)

    def test_size_mismatch(self, temp_dir):
        save_dataset(temp_dir, _meta(), [_sample("m", [[0, 0], [0, 0]])])
        Image.fromarray(np.zeros((3, 3, 3), dtype=np.uint8)).save(
            os.path.join(temp_dir, IMAGES_DIR, "m.png"))
        with pytest.raises(DatasetError):
            load_dataset(temp_dir)

    def test_domain_tag(self, temp_dir):
        save_dataset(temp_dir, _meta(), [_sample("t", [[0, 0], [0, 0]])])
        _, samples = load_dataset(temp_dir, Domain.TARGET)
        assert samples[0].domain is Domain.TARGET

    def test_toy_round_trip(self, temp_dir):
        """Guardar y leer el dominio sintético conserva los tensores exactamente."""
        cfg = ToyDomainConfig(height=32, width=32, num_samples=3, domain="target")
        samples = generate_toy_dataset(cfg)
        assert save_dataset(temp_dir, toy_dataset_meta(cfg), samples) == 3
        meta, loaded = load_dataset(temp_dir, Domain.TARGET)
        assert meta.num_samples == 3
        for original, back in zip(samples, loaded):
            assert original.id == back.id
            assert torch.equal(original.image, back.image)
            assert torch.equal(original.label, back.label)

    def test_short_thing_flags_rejected(self, temp_dir):
        """meta.json con menos thing_flags que clases no se acepta."""
        save_dataset(temp_dir, _meta(3), [_sample("a", [[0, 1], [2, 2]])])
        meta_path = os.path.join(temp_dir, META_FILENAME)
        raw = read_json(meta_path)
        raw["thing_flags"] = [False]
        atomic_write_json(meta_path, raw)
        with pytest.raises(DatasetError, match="thing_flags"):
            load_dataset(temp_dir)

    def test_empty_palette_rejected(self, temp_dir):
        save_dataset(temp_dir, _meta(3), [_sample("a", [[0, 1], [2, 2]])])
        meta_path = os.path.join(temp_dir, META_FILENAME)
        raw = read_json(meta_path)
        raw["palette"] = []
        atomic_write_json(meta_path, raw)
        with pytest.raises(DatasetError, match="paleta"):
            load_dataset(temp_dir)

    def test_no_samples_rejected(self, temp_dir):
        save_dataset(temp_dir, _meta(3), [])
        with pytest.raises(DatasetError, match="no contiene muestras"):
            load_dataset(temp_dir)


class TestDatasetMeta:
    """Tests de DatasetMeta.validate."""

    def test_consistent_meta_passes(self):
        _meta(4).validate()

    def test_thing_required(self):
        with pytest.raises(ValueError, match="thing"):
            _meta(3).validate(require_thing=True)

    def test_thing_present(self):
        meta = DatasetMeta(class_names=["fondo", "coche"], thing_flags=[False, True],
                           palette=[(0, 0, 0), (0, 0, 142)])
        meta.validate(require_thing=True)

    def test_colour_out_of_range(self):
        meta = DatasetMeta(class_names=["a"], thing_flags=[False], palette=[(0, 300, 0)])
        with pytest.raises(ValueError, match="paleta"):
            meta.validate()

    def test_no_classes(self):
        with pytest.raises(ValueError):
            DatasetMeta(class_names=[], thing_flags=[], palette=[]).validate()


class TestSampleShapes:
    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError, match="Tamaños distintos"):
            Sample(image=torch.zeros(3, 4, 4), label=torch.zeros(4, 5, dtype=torch.int64),
                   domain=Domain.SOURCE, id="m")

    def test_image_channels_checked(self):
        with pytest.raises(ValueError):
            Sample(image=torch.zeros(1, 4, 4), label=torch.zeros(4, 4, dtype=torch.int64),
                   domain=Domain.SOURCE, id="g")


class TestValidateImage:
    def test_in_range(self):
        validate_image(torch.full((3, 2, 2), 0.5))

    @pytest.mark.parametrize("value", [-0.1, 1.5])
    def test_out_of_range(self, value):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            validate_image(torch.full((3, 2, 2), value))

    def test_integer_image_rejected(self):
        with pytest.raises(ValueError, match="flotante"):
            validate_image(torch.zeros(3, 2, 2, dtype=torch.uint8))


class TestIndexPng:
    def test_palette_png_readable_as_label(self, temp_dir):
        """El PNG con paleta se relee como mapa de índices."""
        path = os.path.join(temp_dir, "pred.png")
        pred = torch.tensor([[0, 1], [2, 1]])
        write_index_png(path, pred, [(255, 0, 0), (0, 255, 0), (0, 0, 255)])
        with Image.open(path) as img:
            assert img.mode == "P"
        assert torch.equal(read_label(path), pred)
