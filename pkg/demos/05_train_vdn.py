# Train VDN with parameter sharing on a small network and compare it with BEB.
# Pass --full for the 8-device, 2-channel, 60-episode setting (several minutes per run).

import sys

from marl_access.config import TrainConfig
from marl_access.metrics import MetricsBundle, comparison_table, per_device_table
from marl_access.trainer import run_baseline, train

full = "--full" in sys.argv
if full:
    base = TrainConfig(num_devices=8, num_channels=2, arrival_rate=0.3)
else:
    base = TrainConfig(num_devices=4, num_channels=1, arrival_rate=0.3, horizon=300, episodes=15,
                       hidden1=64, hidden2=32, eval_horizon=300)

bundles = {}
for ids in (False, True):
    cfg = base.with_updates(use_agent_ids=ids)
    res = train(cfg, progress=True)
    bundles[f"vdn-ids{int(ids)}"] = MetricsBundle.from_dict(res.manifest.evaluation)
bundles["beb"] = run_baseline(base, "beb", episodes=10)

print(comparison_table(bundles))
for label, b in bundles.items():
    print(f"== {label}")
    print(per_device_table(b))
