"""Rebuild the frozen network fixtures (run only when the format changes on purpose).

The PNG fixtures were written once by an independent encoder (Pillow) and
are not regenerated here.
"""
from pathlib import Path

import numpy as np

from latentfp.checkpoint import save_checkpoint
from latentfp.network import build_network, scaled_config

HERE = Path(__file__).parent

if __name__ == "__main__":
    net = build_network(scaled_config(16, seed=0))
    save_checkpoint(net, HERE / "scaled16.ckpt")
    x = np.random.default_rng(123).random((2, 1, 32, 32)).astype(np.float32)
    np.save(HERE / "scaled16_input.npy", x)
    np.save(HERE / "scaled16_output.npy", net.forward(x))
