"""Smoke test for the Python extension. Run from the repository root."""

import math
from pathlib import Path

import autoprune

ROOT = Path(__file__).resolve().parent.parent

vgg = autoprune.Network.from_file(str(ROOT / "nets" / "vgg19.net"))
assert abs(vgg.total_flops() - 19.6e9) / 19.6e9 < 0.05
plain = autoprune.Network.from_file(str(ROOT / "nets" / "plain34.net"))
assert abs(plain.total_flops() - 3.6e9) / 3.6e9 < 0.05

assert autoprune.kept_channels(64, 0.5) == 32
assert autoprune.kept_channels(3, 0.01) == 1

proxy = autoprune.ProxyModel.benchmark()
assert proxy.layer_count() == 5
assert math.isclose(proxy.error([1.0] * 5), 0.06)
assert math.isclose(proxy.flops([0.5] * 5), 0.5 * proxy.total_flops())

oracle = autoprune.dp_oracle(proxy, 0.5)
assert oracle["flops_fraction"] <= 0.5 + 1e-12
uniform = autoprune.baseline_ratios(autoprune.Network.proxy_benchmark(), "uniform", 0.5, accounting="linear")
assert uniform == [0.5] * 5
assert oracle["error"] <= proxy.error(uniform)

learned = autoprune.search_proxy(proxy, 0.5, episodes=40, warmup_episodes=10, seed=0)
again = autoprune.search_proxy(proxy, 0.5, episodes=40, warmup_episodes=10, seed=0)
assert learned["rewards"] == again["rewards"]
assert learned["reward"] <= oracle["reward"] + 1e-9 or learned["flops_fraction"] > 0.5

rand = autoprune.random_search_proxy(proxy, 0.5, episodes=40, seed=0)
assert rand["flops_fraction"] <= 0.5 * (1 + 1e-9)

samples = autoprune.truncated_normal_samples(0.9, 0.5, 2000, seed=3)
assert all(0.0 <= s <= 1.0 for s in samples)

out = autoprune.run_cli(["flops", str(ROOT / "nets" / "plain34.net")])
assert "total,," in out

try:
    autoprune.run_cli(["search", str(ROOT / "missing.cfg")])
except OSError:
    pass
else:
    raise AssertionError("missing config should raise")

print("python smoke test passed")
