from __future__ import annotations

import numpy as np
import pytest

from manifold_probe import EmbeddingFileHeader, EmbeddingRecord


@pytest.fixture
def tiny_records() -> tuple[EmbeddingFileHeader, list[EmbeddingRecord]]:
    rng = np.random.default_rng(11)
    records = []
    item = 0
    for c in range(3):
        for _ in range(4):
            records.append(
                EmbeddingRecord(
                    item_id=item,
                    class_label=c,
                    variant_id=0,
                    tokens=rng.normal(size=(2, 5)).astype(np.float32),
                )
            )
            item += 1
    header = EmbeddingFileHeader(
        feature_dim=5, item_count=len(records), class_count=3, layer_id=7, tokens_per_item=2
    )
    return header, records
