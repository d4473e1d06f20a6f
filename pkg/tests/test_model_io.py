"""Parameter files, prediction documents, the assembled network and the optimiser."""
import json
import math
import struct

import numpy as np
import pytest

from sgtn.encoder import EncoderConfig
from sgtn.model import SGTN, ModelConfig
from sgtn.predictions import read_predictions, write_predictions
from sgtn.records import InstanceRecord
from sgtn.serialize import MAGIC, load_model, load_parameters, save_model, save_parameters
from sgtn.synthdata import generate_dataset
from sgtn.numerics.nn import Parameter
from sgtn.train import LOSS_COLUMNS, Adam, Trainer, TrainConfig

SMALL = ModelConfig(encoder=EncoderConfig(8, (1, 1, 1, 1), (1, 2, 2, 4), window=2), detail_channels=8,
                    sgm_width=8, center_width=8, mask_width=8, box_fc=16, train_proposals=4)


def test_parameter_file_layout(tmp_path):
    p = tmp_path / "w.sgtn"
    save_parameters(p, {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.float32(1.5)})
    raw = p.read_bytes()
    assert raw[:4] == MAGIC and struct.unpack_from("<II", raw, 4) == (1, 2)
    assert struct.unpack_from("<I1sI2I", raw, 12) == (1, b"a", 2, 2, 3)
    back = load_parameters(p)
    assert list(back) == ["a", "b"] and back["b"].shape == ()
    np.testing.assert_array_equal(back["a"], np.arange(6).reshape(2, 3))


@pytest.mark.parametrize("mutate, msg", [(lambda b: b"XXXX" + b[4:], "magic"), (lambda b: b[:-2], "truncated"),
                                         (lambda b: b + b"\0", "trailing"),
                                         (lambda b: b[:4] + struct.pack("<I", 9) + b[8:], "version")])
def test_parameter_file_errors(tmp_path, mutate, msg):
    p = tmp_path / "w.sgtn"
    save_parameters(p, {"a": np.ones(3, np.float32)})
    p.write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ValueError, match=msg):
        load_parameters(p)


def test_model_checkpoint_roundtrip(tmp_path):
    a, b = SGTN(SMALL, seed=0), SGTN(SMALL, seed=1)
    save_model(tmp_path / "m.sgtn", a)
    load_model(tmp_path / "m.sgtn", b)
    for (n1, p1), (n2, p2) in zip(a.state_dict().items(), b.state_dict().items()):
        assert n1 == n2 and np.array_equal(p1, p2)
    image = generate_dataset(0, 1)[0].image
    assert [(r.category, r.score) for r in a.predict(image / 255.0 - 0.5)] == \
        [(r.category, r.score) for r in b.predict(image / 255.0 - 0.5)]


def test_prediction_documents(tmp_path):
    m = np.zeros((8, 8), bool)
    m[2:5, 1:4] = True
    preds = [[InstanceRecord.from_mask(2, m, 0.75)], []]
    write_predictions(tmp_path, [3, 4], preds)
    doc = json.loads((tmp_path / "000003.json").read_text())
    assert doc["image_id"] == 3 and set(doc["instances"][0]) == {"category", "score", "bbox", "mask"}
    back = read_predictions(tmp_path, [3, 4, 5])
    assert len(back[0]) == 1 and back[1] == [] and back[2] == []
    assert back[0][0].score == 0.75 and np.array_equal(back[0][0].mask, m)
    (tmp_path / "000004.json").write_text(json.dumps({"image_id": 9, "instances": []}))
    with pytest.raises(ValueError, match="image_id"):
        read_predictions(tmp_path, [4])


def test_adam_schedule_and_update():
    p = Parameter(np.array([1.0, -2.0], dtype=np.float32))
    opt = Adam([p], lr=0.1, steps=100, warmup=10)
    assert opt.current_lr() == pytest.approx(0.01)
    p.grad = np.array([3.0, -0.5], dtype=np.float32)
    opt.step()
    # the first bias-corrected Adam step moves each coordinate by lr against its gradient sign
    np.testing.assert_allclose(p.data, [1.0 - 0.01, -2.0 + 0.01], rtol=1e-5)
    opt.t = 55
    assert opt.current_lr() == pytest.approx(0.1 * 0.5 * (1 + math.cos(math.pi * 55 / 100)))


def test_network_forward_losses_and_prediction():
    scenes = generate_dataset(1, 2)
    model = SGTN(SMALL, seed=0)
    trainer = Trainer(model, [s.image for s in scenes], [s.instances for s in scenes],
                      TrainConfig(steps=3, batch=2, lr=1e-3, log_every=0))
    rows = trainer.run()
    assert len(rows) == 3 and all(np.isfinite(r["total"]) for r in rows)
    assert set(LOSS_COLUMNS) <= set(rows[0])
    assert all(rows[0][k] > 0 for k in ("cbgm.focal", "sgm.fg", "mask.bce", "box.cls"))
    preds = model.predict(scenes[0].image / 255.0 - 0.5)
    for r in preds:
        assert r.mask.shape == (64, 64) and 0 <= r.score <= 1 and r.category in (1, 2, 3)


def test_network_without_shape_guidance_has_no_sgm_terms():
    scenes = generate_dataset(1, 1)
    model = SGTN(ModelConfig(**{**SMALL.__dict__, "sgm_enabled": False}), seed=0)
    assert not hasattr(model, "sgm")
    row = Trainer(model, [scenes[0].image], [scenes[0].instances], TrainConfig(steps=1, batch=1)).step()
    assert row["sgm.fg"] == 0.0 and row["mask.dice"] > 0


def test_training_is_deterministic():
    scenes = generate_dataset(2, 2)
    runs = []
    for _ in range(2):
        t = Trainer(SGTN(SMALL, seed=4), [s.image for s in scenes], [s.instances for s in scenes],
                    TrainConfig(steps=2, batch=2, seed=4))
        runs.append([r["total"] for r in t.run()])
    assert runs[0] == runs[1]
