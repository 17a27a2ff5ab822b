import json

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from src.app.schemas.result_schema import ModelSummary
from src.app.services.storage_service import StorageService


@pytest.fixture
def storage(tmp_path):
    return StorageService(tmp_path)


def test_write_table_is_reproducible(storage):
    frame = pd.DataFrame({"t": [0.0, 0.5], "R": [1.0 / 3.0, np.sqrt(2.0)]})
    first = storage.write_table(StorageService.FOLDER_DW, "trace.csv", frame).read_bytes()
    second = storage.write_table(StorageService.FOLDER_DW, "trace.csv", frame).read_bytes()
    assert first == second
    assert first.decode().splitlines() == [
        "t,R",
        "0.000000000000e+00,3.333333333333e-01",
        "5.000000000000e-01,1.414213562373e+00",
    ]
    pd.testing.assert_frame_equal(storage.read_table(StorageService.FOLDER_DW, "trace.csv"), frame, atol=1e-12)


def test_write_summary(storage):
    summary = ModelSummary(r=2, t=[1.0, 1.0], L=13, Np=5, dim=273)
    path = storage.write_summary(StorageService.FOLDER_SPECTRUM, "summary.json", summary)
    assert json.loads(path.read_text())["dim"] == 273


def test_unknown_folder(storage):
    with pytest.raises(ValueError):
        storage.write_text("plots", "x.txt", "")


def test_read_missing_table(storage):
    with pytest.raises(FileNotFoundError):
        storage.read_table(StorageService.FOLDER_QUENCH, "trace.csv")


def test_images_and_bytes(storage):
    image = Image.fromarray(np.array([[0, 255], [255, 0]], dtype=np.uint8))
    pgm = storage.write_image(StorageService.FOLDER_AUTOMATON, "bitmap.pgm", image)
    assert pgm.read_bytes().startswith(b"P5")
    storage.write_bytes(StorageService.FOLDER_AUTOMATON, "bitmap.eab", b"EAB1")

    listed = storage.list_artifacts(StorageService.FOLDER_AUTOMATON)
    assert [item["name"] for item in listed] == ["automaton/bitmap.eab", "automaton/bitmap.pgm"]
    assert storage.list_artifacts(StorageService.FOLDER_FRAGMENTATION) == []
