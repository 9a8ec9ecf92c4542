import numpy as np
import pytest

from nerfsearch.checkpoint import load_checkpoint, save_checkpoint
from nerfsearch.field import build_pair, baseline_descriptor, CellConfig, \
    ArchitectureDescriptor


def small_pair():
    desc = ArchitectureDescriptor(coarse=CellConfig((1, 1, 1), (8, 8, 8)),
                                  fine=CellConfig((1, 1, 1), (8, 8, 8)))
    return desc, build_pair(desc, seed=0)


def test_checkpoint_value_roundtrip(tmp_path):
    desc, (coarse, fine) = small_pair()
    tensors = coarse.named_parameters("coarse.")
    tensors.update(fine.named_parameters("fine."))
    path = tmp_path / "ck.nfck"
    save_checkpoint(path, desc.to_dict(), 123, {"lr": 5e-4}, tensors)
    ck = load_checkpoint(path)
    assert ck.step == 123
    assert ck.optimizer == {"lr": 5e-4}
    assert ck.descriptor == desc.to_dict()
    for name, arr in tensors.items():
        np.testing.assert_array_equal(ck.tensors[name],
                                      arr.astype(np.float32))


def test_checkpoint_byte_exact_roundtrip(tmp_path):
    desc, (coarse, fine) = small_pair()
    tensors = coarse.named_parameters("coarse.")
    tensors.update(fine.named_parameters("fine."))
    p1 = tmp_path / "a.nfck"
    p2 = tmp_path / "b.nfck"
    save_checkpoint(p1, desc.to_dict(), 7, {"lr": 5e-4, "rectified": True},
                    tensors)
    ck = load_checkpoint(p1)
    save_checkpoint(p2, ck.descriptor, ck.step, ck.optimizer, ck.tensors,
                    extra=ck.extra)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    desc, (coarse, fine) = small_pair()
    tensors = coarse.named_parameters("coarse.")
    path = tmp_path / "t.nfck"
    save_checkpoint(path, desc.to_dict(), 1, {}, tensors)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)
