import pytest
import torch

from wrn_export.wrn import WideResNet, save_checkpoint


@pytest.fixture(scope="session")
def wrn_checkpoint(tmp_path_factory):
    """A full-size WRN-28-10 checkpoint (random weights, SN on)."""
    torch.manual_seed(7)
    model = WideResNet(depth=28, widen=10, sn=True)
    model.eval()
    path = tmp_path_factory.mktemp("ckpt") / "wrn28_10.pt"
    save_checkpoint(model, path, meta={"purpose": "test fixture"})
    return {"path": path, "model": model}
